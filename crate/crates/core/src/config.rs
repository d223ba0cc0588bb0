//! Declarative run configuration shared by every pipeline stage.
//!
//! A run is described by one JSON document. Missing fields take defaults,
//! relative paths resolve against the directory holding the config file,
//! and secrets are read from the environment only.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::SpecificityRule;
use crate::error::{Error, Result};
use crate::judge::RetryPolicy;
use crate::lab::TrainConfig;
use crate::metrics::DEFAULT_ALPHA;
use crate::textgen::{AugmentationConfig, InputVariant};

pub const ENDPOINT_ENV: &str = "REL_EVAL_ENDPOINT";
pub const TOKEN_ENV: &str = "REL_EVAL_TOKEN";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub qips: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub experiments: Option<PathBuf>,
    /// Extra verdict files keyed by judge id, used by the misprediction
    /// analysis alongside the configured judge's own verdicts.
    pub verdicts: BTreeMap<String, PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeKind {
    /// Echoes the gold labels of the QIP file.
    Oracle,
    /// Serves verdicts from the cache only; a miss is an error.
    Replay,
    /// Native `/judge` protocol.
    Remote,
    /// Chat-completions protocol with the fixed prompt template.
    Chat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeConfig {
    pub kind: JudgeKind,
    pub id: String,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Template version the replay judge looks up in the cache. Defaults to
    /// the chat prompt version.
    pub template_version: Option<String>,
    pub timeout_ms: u64,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            kind: JudgeKind::Oracle,
            id: "oracle".into(),
            endpoint: None,
            model: None,
            template_version: None,
            timeout_ms: 30_000,
        }
    }
}

impl JudgeConfig {
    /// Config value first, then the environment.
    pub fn resolved_endpoint(&self) -> Option<String> {
        self.endpoint
            .clone()
            .or_else(|| std::env::var(ENDPOINT_ENV).ok())
            .filter(|s| !s.trim().is_empty())
    }

    pub fn token() -> Option<String> {
        std::env::var(TOKEN_ENV).ok().filter(|s| !s.is_empty())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub variant: InputVariant,
    pub augmentation: AugmentationConfig,
    pub judge: JudgeConfig,
    pub retry: RetryPolicy,
    pub ks: Vec<usize>,
    pub alpha: f64,
    pub concurrency_limit: usize,
    pub seed: u64,
    /// Annotation round compared against the resolved labels.
    pub initial_round: u8,
    pub specificity: SpecificityRule,
    pub lab: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths {
                output_dir: PathBuf::from("out"),
                ..Paths::default()
            },
            variant: InputVariant::WithDescription,
            augmentation: AugmentationConfig::default(),
            judge: JudgeConfig::default(),
            retry: RetryPolicy::default(),
            ks: vec![1, 5, 10],
            alpha: DEFAULT_ALPHA,
            concurrency_limit: 8,
            seed: 0,
            initial_round: 1,
            specificity: SpecificityRule::default(),
            lab: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = RunConfig::from_json(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        for p in [
            &mut paths.qips,
            &mut paths.annotations,
            &mut paths.experiments,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
        for p in paths.verdicts.values_mut() {
            join(p);
        }
        join(&mut paths.output_dir);
    }

    pub fn validate(&self) -> Result<()> {
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::invalid("ks", "need at least one positive cutoff"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha", "must lie in (0, 1)"));
        }
        if self.concurrency_limit == 0 {
            return Err(Error::invalid("concurrency_limit", "must be at least 1"));
        }
        if !(1..=3).contains(&self.initial_round) {
            return Err(Error::invalid("initial_round", "must be 1, 2 or 3"));
        }
        if self.judge.id.trim().is_empty() {
            return Err(Error::invalid("judge.id", "must not be empty"));
        }
        if self.paths.output_dir.as_os_str().is_empty() {
            return Err(Error::invalid("paths.output_dir", "must not be empty"));
        }
        self.retry.validate()?;
        self.augmentation.validate()?;
        self.lab.validate()
    }

    pub fn to_json_pretty(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }
}
