//! End-to-end drivers: the per-source extraction loop and the evaluation of
//! a set of LLM records against the baseline.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::corpus::{Attachment, Corpus, EvidenceSource, ExtractionRecord, Instrument, ItemValue, Provenance, SourceId};
use crate::evaluation::{
    apply_adjudications, attribute_confusion, classification_summary, flag_ineligible, match_excerpts, sum_counts,
    AdjudicationKey, AdjudicationSet, ClassificationSummary, EvaluationError, ExcerptJudgment, ItemCounts, MatchConfig,
};
use crate::gateway::{Conversation, Gateway, GatewayError, GatewayResponse};
use crate::parser::{dedupe_excerpts, parse_response, DocumentIndex, ForeignContentConfig, FormatViolation};
use crate::prompts::{
    build_extended_per_source_prompt, build_extended_role_prompt, build_simple_prompt, select_corrective_prompt,
    DocumentPackage, PromptError, TemplateId,
};
use crate::review::DEFAULT_OBJECTIVE_TYPE;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("corpus has no sources")]
    EmptyCorpus,
    #[error("extended approach needs the workspace package")]
    MissingPackage,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    /// Protocol plus one source per conversation, V1.0 then V1.1 prompts.
    Protocol,
    /// One conversation over the project workspace, one prompt per source.
    Extended,
}

impl Approach {
    pub fn provenance(self) -> Provenance {
        match self {
            Approach::Protocol => Provenance::LlmProtocol,
            Approach::Extended => Provenance::LlmExtendedProtocol,
        }
    }
}

impl std::str::FromStr for Approach {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "protocol" | "simple" => Ok(Approach::Protocol),
            "extended" => Ok(Approach::Extended),
            other => Err(format!("unknown approach {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, base_delay_ms: 1000 }
    }
}

impl RetryPolicy {
    /// Delay before retry number `n` (1-based): base, 2x base, 4x base, ...
    pub fn delay(&self, n: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1 << n.saturating_sub(1).min(16)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    pub approach: Approach,
    pub max_corrective_rounds: usize,
    pub retry: RetryPolicy,
    /// Objective type hint per source id or filename (extended approach).
    pub objective_hints: BTreeMap<String, String>,
    pub default_hint: String,
    pub foreign: ForeignContentConfig,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            approach: Approach::Extended,
            max_corrective_rounds: 3,
            retry: RetryPolicy::default(),
            objective_hints: BTreeMap::new(),
            default_hint: DEFAULT_OBJECTIVE_TYPE.to_string(),
            foreign: ForeignContentConfig::default(),
        }
    }
}

impl ExtractionConfig {
    fn hint_for(&self, s: &EvidenceSource) -> &str {
        self.objective_hints
            .get(s.source_id.as_str())
            .or_else(|| self.objective_hints.get(&s.filename))
            .map(String::as_str)
            .unwrap_or(&self.default_hint)
    }
}

/// What the extraction loop needs besides the gateway.
pub struct ExtractionInputs<'a> {
    pub corpus: &'a Corpus,
    /// The review protocol document, paired with each source in the
    /// protocol approach.
    pub protocol: Attachment,
    /// Workspace documents for the extended approach.
    pub workspace: Option<DocumentPackage>,
    /// Extra documents searched for foreign content, as `(name, text)`.
    pub project_docs: Vec<(String, String)>,
    /// Sources already extracted (resumed runs); they are skipped but keep
    /// their place in the processing order.
    pub completed: BTreeSet<SourceId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceOutcome {
    pub source_id: SourceId,
    /// 1-based position in processing order.
    pub order: usize,
    pub template_id: TemplateId,
    pub conversation_id: String,
    pub corrective_rounds: usize,
    /// Violations still present in the final response.
    pub remaining: Vec<String>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ExtractionRun {
    /// Final records in processing order; failed sources have none.
    pub records: Vec<ExtractionRecord>,
    pub outcomes: Vec<SourceOutcome>,
}

impl ExtractionRun {
    pub fn failures(&self) -> impl Iterator<Item = &SourceOutcome> {
        self.outcomes.iter().filter(|o| o.failure.is_some())
    }
}

/// Author-alphabetical order; the extended approach moves the protocol
/// source to the end.
pub fn processing_order(corpus: &Corpus, approach: Approach) -> Vec<EvidenceSource> {
    let mut order = corpus.sorted();
    if approach == Approach::Extended {
        order.sort_by_key(|s| s.is_protocol);
    }
    order
}

/// Drops repeated excerpts within each item of the record.
pub fn dedupe_record(record: &mut ExtractionRecord) {
    let items: Vec<_> = record.items().map(|(i, v)| (i, v.clone())).collect();
    for (item, value) in items {
        if let ItemValue::Excerpts(ex) = value {
            record.set(item, ItemValue::Excerpts(dedupe_excerpts(&ex))).expect("same class as before");
        }
    }
}

struct Sender<'g, 's> {
    gateway: &'g Gateway,
    retry: RetryPolicy,
    sleep: &'s dyn Fn(Duration),
}

impl Sender<'_, '_> {
    /// Sends with retries on transient errors. Budget overruns roll the
    /// conversation over once, re-sending `preamble` first when given.
    fn send(
        &self,
        conv: &mut Conversation,
        prompt: &str,
        attachments: Vec<Attachment>,
        preamble: Option<&str>,
    ) -> Result<GatewayResponse, GatewayError> {
        let mut rolled = false;
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.gateway.send(conv, prompt, attachments.clone()) {
                Ok(r) => return Ok(r),
                Err(GatewayError::BudgetExceeded { .. }) if !rolled => {
                    rolled = true;
                    *conv = self.gateway.rollover(conv);
                    info!(conversation = %conv.id, "rolled over conversation");
                    if let Some(p) = preamble {
                        self.gateway.send(conv, p, Vec::new())?;
                    }
                }
                Err(e) if e.is_transient() && attempt < self.retry.attempts => {
                    warn!(attempt, error = %e, "transient gateway error, retrying");
                    (self.sleep)(self.retry.delay(attempt));
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Runs the per-source loop: prompt, parse, check, correct (bounded), keep.
/// Gateway failures after retries fail that source only; log write errors
/// abort the run.
pub fn run_extraction(
    gateway: &Gateway,
    inputs: &ExtractionInputs,
    config: &ExtractionConfig,
    sleep: &dyn Fn(Duration),
) -> Result<ExtractionRun, PipelineError> {
    if inputs.corpus.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    let instrument = Instrument::extraction();
    let provenance = config.approach.provenance();
    let docs: Vec<(&str, &str)> = inputs.project_docs.iter().map(|(n, t)| (n.as_str(), t.as_str())).collect();
    let mut index = DocumentIndex::new(inputs.corpus, &docs);
    let sender = Sender { gateway, retry: config.retry, sleep };
    let role = build_extended_role_prompt();

    let mut shared: Option<Conversation> = None;
    let mut run = ExtractionRun::default();
    for (pos, source) in processing_order(inputs.corpus, config.approach).iter().enumerate() {
        if inputs.completed.contains(&source.source_id) {
            continue;
        }
        let (prompt, attachments, mut conv, preamble) = match config.approach {
            Approach::Protocol => {
                let (p, package) = build_simple_prompt(source, pos == 0, inputs.protocol.clone());
                (p, Vec::new(), gateway.conversation_with_package(package), None)
            }
            Approach::Extended => {
                let conv = match shared.take() {
                    Some(c) => c,
                    None => {
                        let package = inputs.workspace.clone().ok_or(PipelineError::MissingPackage)?;
                        let mut c = gateway.conversation_with_package(package);
                        if let Err(e) = sender.send(&mut c, &role.text, Vec::new(), None) {
                            let e = fail_on_log(e)?;
                            run.outcomes.push(failed(source, pos, TemplateId::ExtendedRole, &c, &e));
                            continue;
                        }
                        c
                    }
                };
                let p = build_extended_per_source_prompt(source, config.hint_for(source))?;
                (p, vec![source.upload()], conv, Some(role.text.as_str()))
            }
        };

        let outcome = extract_one(&sender, &mut conv, source, &prompt.text, attachments, preamble, &instrument, provenance, &mut index, config);
        if config.approach == Approach::Extended {
            shared = Some(conv.clone());
        }
        match outcome {
            Ok((record, rounds, remaining)) => {
                run.records.push(record);
                run.outcomes.push(SourceOutcome {
                    source_id: source.source_id.clone(),
                    order: pos + 1,
                    template_id: prompt.template_id,
                    conversation_id: conv.id.clone(),
                    corrective_rounds: rounds,
                    remaining: remaining.iter().map(|v| v.to_string()).collect(),
                    failure: None,
                });
            }
            Err(e) => {
                let e = fail_on_log(e)?;
                warn!(source = %source.source_id, error = %e, "source failed");
                run.outcomes.push(failed(source, pos, prompt.template_id, &conv, &e));
            }
        }
    }
    Ok(run)
}

/// Log write failures abort the run; anything else only fails the source.
fn fail_on_log(e: GatewayError) -> Result<GatewayError, PipelineError> {
    match e {
        GatewayError::Log(_) => Err(e.into()),
        other => Ok(other),
    }
}

fn failed(source: &EvidenceSource, pos: usize, t: TemplateId, conv: &Conversation, e: &GatewayError) -> SourceOutcome {
    SourceOutcome {
        source_id: source.source_id.clone(),
        order: pos + 1,
        template_id: t,
        conversation_id: conv.id.clone(),
        corrective_rounds: 0,
        remaining: Vec::new(),
        failure: Some(e.to_string()),
    }
}

#[allow(clippy::too_many_arguments)]
fn extract_one(
    sender: &Sender,
    conv: &mut Conversation,
    source: &EvidenceSource,
    prompt: &str,
    attachments: Vec<Attachment>,
    preamble: Option<&str>,
    instrument: &Instrument,
    provenance: Provenance,
    index: &mut DocumentIndex,
    config: &ExtractionConfig,
) -> Result<(ExtractionRecord, usize, Vec<FormatViolation>), GatewayError> {
    let mut reply = sender.send(conv, prompt, attachments, preamble)?;
    let mut rounds = 0;
    loop {
        let parsed = parse_response(&reply.text, instrument);
        let mut record = parsed.record.into_record(&source.filename, provenance, instrument);
        let mut violations = parsed.violations;
        violations.extend(index.detect(&record, &source.source_id, &config.foreign));
        match select_corrective_prompt(&violations) {
            Some(corrective) if rounds < config.max_corrective_rounds => {
                rounds += 1;
                info!(source = %source.source_id, round = rounds, template = ?corrective.template_id, "corrective prompt");
                reply = sender.send(conv, &corrective.text, Vec::new(), preamble)?;
            }
            _ => {
                dedupe_record(&mut record);
                return Ok((record, rounds, violations));
            }
        }
    }
}

/// Per-source evaluation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEvaluation {
    pub source_id: SourceId,
    /// Judgments after adjudication.
    pub judgments: Vec<ExcerptJudgment>,
    pub counts: ItemCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRun {
    pub provenance: Provenance,
    pub sources: Vec<SourceEvaluation>,
    pub totals: ItemCounts,
    pub summary: ClassificationSummary,
}

/// Automatic judgments for every baseline source, in baseline order. A
/// source without an LLM record is compared against an empty one.
pub fn auto_judgments(
    llm: &[ExtractionRecord],
    baseline: &[ExtractionRecord],
    provenance: Provenance,
    index: &mut DocumentIndex,
    cfg: &MatchConfig,
    foreign: &ForeignContentConfig,
) -> Result<Vec<(ExtractionRecord, Vec<ExcerptJudgment>)>, EvaluationError> {
    let instrument = Instrument::extraction();
    baseline
        .iter()
        .map(|b| {
            let mut l = llm
                .iter()
                .find(|r| r.source_id == b.source_id)
                .cloned()
                .unwrap_or_else(|| ExtractionRecord::empty(&b.source_filename, provenance, &instrument));
            l.provenance = provenance;
            let mut j = match_excerpts(&l, b, cfg)?;
            flag_ineligible(&mut j, &l, index, &b.source_id, foreign);
            Ok((l, j))
        })
        .collect()
}

/// Full evaluation of one approach. Every automatic judgment that still
/// needs a human decision is listed in a single MissingAdjudication error.
pub fn evaluate_records(
    llm: &[ExtractionRecord],
    baseline: &[ExtractionRecord],
    provenance: Provenance,
    index: &mut DocumentIndex,
    adjudications: &AdjudicationSet,
    cfg: &MatchConfig,
    foreign: &ForeignContentConfig,
) -> Result<EvaluationRun, EvaluationError> {
    let auto = auto_judgments(llm, baseline, provenance, index, cfg, foreign)?;
    let missing: Vec<AdjudicationKey> = auto
        .iter()
        .flat_map(|(_, js)| js.iter())
        .filter(|j| j.needs_adjudication() && adjudications.get(&j.key()).is_none())
        .map(ExcerptJudgment::key)
        .collect();
    if !missing.is_empty() {
        return Err(EvaluationError::MissingAdjudication(missing));
    }
    let mut sources = Vec::with_capacity(auto.len());
    for ((l, js), b) in auto.iter().zip(baseline) {
        let counts = attribute_confusion(js, l, b, adjudications, cfg)?;
        let judgments = apply_adjudications(js, adjudications)?;
        sources.push(SourceEvaluation { source_id: b.source_id.clone(), judgments, counts });
    }
    let totals = sum_counts(sources.iter().map(|s| &s.counts));
    let per_source: Vec<(SourceId, Vec<ExcerptJudgment>)> =
        sources.iter().map(|s| (s.source_id.clone(), s.judgments.clone())).collect();
    Ok(EvaluationRun { provenance, sources, totals, summary: classification_summary(&per_source) })
}
