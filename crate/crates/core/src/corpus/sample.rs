use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::source::{sort_by_author, EvidenceSource};
use super::CorpusError;

/// Number of sources a fraction selects: the ceiling of `fraction * n`,
/// tolerant of float noise (0.1 of 120 is 12, not 13).
pub fn sample_size(n: usize, fraction: f64) -> usize {
    let raw = fraction * n as f64;
    let size = (raw - 1e-9).ceil().max(0.0) as usize;
    size.min(n)
}

/// Seeded random sample: each source draws a uniform number, the list is
/// sorted by those numbers and the first ⌈fraction·n⌉ are kept, then the
/// selection is sorted by author.
pub fn sample_corpus(all_sources: &[EvidenceSource], fraction: f64, seed: u64) -> Result<Vec<EvidenceSource>, CorpusError> {
    if all_sources.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CorpusError::InvalidFraction(fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drawn: Vec<(u64, usize)> = (0..all_sources.len()).map(|i| (rng.gen::<u64>(), i)).collect();
    drawn.sort_unstable();
    let k = sample_size(all_sources.len(), fraction);
    let mut picked: Vec<EvidenceSource> = drawn[..k].iter().map(|(_, i)| all_sources[*i].clone()).collect();
    sort_by_author(&mut picked);
    Ok(picked)
}
