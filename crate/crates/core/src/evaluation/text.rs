//! Text normalization and token-run containment used by every matcher.

use std::collections::HashMap;

use unicode_normalization::UnicodeNormalization;

/// NFC, lowercase, punctuation replaced by spaces, whitespace collapsed,
/// split on spaces.
pub fn normalize(text: &str) -> Vec<String> {
    normalized_text(text).split(' ').filter(|t| !t.is_empty()).map(str::to_owned).collect()
}

/// Normalization switches; the default folds case and strips punctuation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct NormalizeOptions {
    pub fold_case: bool,
    pub strip_punctuation: bool,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        NormalizeOptions { fold_case: true, strip_punctuation: true }
    }
}

/// [`normalize`] with configurable case folding and punctuation handling.
/// With both switches off, text is NFC-normalized and split on whitespace.
pub fn normalize_with(text: &str, opts: NormalizeOptions) -> Vec<String> {
    if opts == NormalizeOptions::default() {
        return normalize(text);
    }
    let nfc: String = text.nfc().collect();
    let cased: String = if opts.fold_case { nfc.chars().flat_map(char::to_lowercase).collect() } else { nfc };
    let spaced: String = if opts.strip_punctuation {
        cased.chars().map(|c| if c.is_alphanumeric() { c } else { ' ' }).collect()
    } else {
        cased
    };
    spaced.split_whitespace().map(str::to_owned).collect()
}

/// Space-joined form of [`normalize`].
pub fn normalized_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.nfc().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        } else {
            pending_space = true;
        }
    }
    out
}

/// Comparison key for column titles and response headers.
pub(crate) fn header_key(text: &str) -> String {
    normalized_text(text)
}

/// Length of the longest run of consecutive tokens shared by both lists.
pub fn longest_common_run<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut prev = vec![0usize; short.len() + 1];
    let mut cur = vec![0usize; short.len() + 1];
    let mut best = 0;
    for tok in long {
        for (j, s) in short.iter().enumerate() {
            cur[j + 1] = if s == tok { prev[j] + 1 } else { 0 };
            best = best.max(cur[j + 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// Longest common contiguous run divided by the shorter length; 0 when
/// either list is empty.
pub fn containment<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let shorter = a.len().min(b.len());
    if shorter == 0 {
        return 0.0;
    }
    longest_common_run(a, b) as f64 / shorter as f64
}

/// Maps token strings to dense ids so long documents compare as `u32`s.
#[derive(Debug, Default)]
pub struct Interner {
    ids: HashMap<String, u32>,
}

impl Interner {
    pub fn intern(&mut self, tokens: &[String]) -> Vec<u32> {
        tokens
            .iter()
            .map(|t| {
                let next = self.ids.len() as u32;
                *self.ids.entry(t.clone()).or_insert(next)
            })
            .collect()
    }
}
