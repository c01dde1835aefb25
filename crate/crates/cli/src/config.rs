//! Run configuration: one JSON file, overridable from the command line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use protex_core::evaluation::MatchConfig;
use protex_core::gateway::{DecodingParams, DEFAULT_BUDGET};
use protex_core::parser::ForeignContentConfig;
use protex_core::pipeline::{Approach, RetryPolicy};
use protex_core::prompts::WorkspacePaths;
use protex_core::review::{InjectionPlan, DEFAULT_OBJECTIVE_TYPE};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Live,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewaySettings {
    pub backend: Backend,
    /// Conversation token budget; exceeding it rolls over to a new one.
    pub budget: u64,
    /// Environment variable that holds the API key (live backend).
    pub api_key_env: String,
    pub endpoint: String,
    pub timeout_secs: u64,
    /// Recorded transcript served by the replay backend.
    pub fixture: Option<PathBuf>,
    pub retry: RetryPolicy,
    #[serde(flatten)]
    pub decoding: DecodingParams,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        GatewaySettings {
            backend: Backend::Replay,
            budget: DEFAULT_BUDGET,
            api_key_env: "PROTEX_API_KEY".into(),
            endpoint: "https://api.anthropic.com/v1".into(),
            timeout_secs: 300,
            fixture: None,
            retry: RetryPolicy::default(),
            decoding: DecodingParams::default(),
        }
    }
}

/// Project documents uploaded with prompts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Documents {
    pub protocol: Option<PathBuf>,
    pub llm_instrument: Option<PathBuf>,
    pub instructions: Option<PathBuf>,
    pub examples: Option<PathBuf>,
    pub review_instrument: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Corpus manifest (JSON).
    pub corpus: PathBuf,
    /// Human baseline extraction CSV.
    pub baseline: PathBuf,
    pub approach: Approach,
    /// Objective type hint by source id or filename.
    pub objective_hints: BTreeMap<String, String>,
    pub default_hint: String,
    pub max_corrective_rounds: usize,
    #[serde(rename = "match")]
    pub match_config: MatchConfig,
    pub foreign_content: ForeignContentConfig,
    pub gateway: GatewaySettings,
    pub documents: Documents,
    /// Human decisions on automatic judgments.
    pub adjudication: Option<PathBuf>,
    /// Sources per review conversation.
    pub batch_size: usize,
    /// Name under which the extraction CSV is uploaded for review.
    pub spreadsheet_name: String,
    pub injection_plan: Option<InjectionPlan>,
    /// Value-add verdicts on reviewer proposals.
    pub value_verdicts: Option<PathBuf>,
    /// Manual detection calls that replace the automatic ones.
    pub detection_overrides: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: "corpus.json".into(),
            baseline: "baseline.csv".into(),
            approach: Approach::Extended,
            objective_hints: BTreeMap::new(),
            default_hint: DEFAULT_OBJECTIVE_TYPE.into(),
            max_corrective_rounds: 3,
            match_config: MatchConfig::default(),
            foreign_content: ForeignContentConfig::default(),
            gateway: GatewaySettings::default(),
            documents: Documents::default(),
            adjudication: None,
            batch_size: 5,
            spreadsheet_name: "Baseline data extraction.csv".into(),
            injection_plan: None,
            value_verdicts: None,
            detection_overrides: None,
            seed: 0,
            out: "out".into(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub backend: Option<Backend>,
    pub approach: Option<Approach>,
}

impl RunConfig {
    /// Reads the file, resolves relative paths against its directory and
    /// applies the overrides. Without a file, defaults are relative to the
    /// working directory.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let mut cfg: RunConfig =
                    serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
                cfg.resolve(p.parent().unwrap_or(Path::new("")));
                cfg
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &overrides.out {
            cfg.out = out.clone();
        }
        if let Some(b) = overrides.backend {
            cfg.gateway.backend = b;
        }
        if let Some(a) = overrides.approach {
            cfg.approach = a;
        }
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.corpus);
        join(&mut self.baseline);
        join(&mut self.out);
        let d = &mut self.documents;
        for p in [
            &mut self.gateway.fixture,
            &mut self.adjudication,
            &mut self.value_verdicts,
            &mut self.detection_overrides,
            &mut d.protocol,
            &mut d.llm_instrument,
            &mut d.instructions,
            &mut d.examples,
            &mut d.review_instrument,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
    }

    /// Checks the gateway settings a backend-using command depends on.
    pub fn validate_gateway(&self) -> Result<()> {
        let g = &self.gateway;
        match g.backend {
            Backend::Replay if g.fixture.is_none() => bail!("replay backend requires gateway.fixture"),
            Backend::Live if g.api_key_env.trim().is_empty() => bail!("live backend requires gateway.api_key_env"),
            Backend::Live if std::env::var_os(&g.api_key_env).is_none() => {
                bail!("live backend requires the environment variable {} to be set", g.api_key_env)
            }
            _ => Ok(()),
        }
    }

    pub fn workspace_paths(&self) -> WorkspacePaths {
        WorkspacePaths {
            protocol: self.documents.protocol.clone(),
            llm_instrument: self.documents.llm_instrument.clone(),
            instructions: self.documents.instructions.clone(),
            examples: self.documents.examples.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(&p, r#"{"corpus": "c.json", "gateway": {"fixture": "/abs/replay.jsonl", "temperature": 0.0}}"#)
            .unwrap();
        let cfg = RunConfig::load(Some(&p), &Overrides::default()).unwrap();
        assert_eq!(cfg.corpus, dir.path().join("c.json"));
        assert_eq!(cfg.out, dir.path().join("out"));
        assert_eq!(cfg.gateway.fixture.as_deref(), Some(Path::new("/abs/replay.jsonl")));
        assert_eq!(cfg.gateway.decoding.temperature, Some(0.0));
    }

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(&p, r#"{"seed": 7, "approach": "protocol"}"#).unwrap();
        let o = Overrides { seed: Some(9), backend: Some(Backend::Live), approach: Some(Approach::Extended), ..Default::default() };
        let cfg = RunConfig::load(Some(&p), &o).unwrap();
        assert_eq!((cfg.seed, cfg.gateway.backend, cfg.approach), (9, Backend::Live, Approach::Extended));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(&p, r#"{"seeed": 7}"#).unwrap();
        assert!(RunConfig::load(Some(&p), &Overrides::default()).is_err());
    }

    #[test]
    fn backend_requirements() {
        let mut cfg = RunConfig::default();
        assert!(cfg.validate_gateway().is_err());
        cfg.gateway.fixture = Some("r.jsonl".into());
        assert!(cfg.validate_gateway().is_ok());
        cfg.gateway.backend = Backend::Live;
        cfg.gateway.api_key_env = "PROTEX_TEST_KEY_THAT_IS_NEVER_SET".into();
        assert!(cfg.validate_gateway().is_err());
    }
}
