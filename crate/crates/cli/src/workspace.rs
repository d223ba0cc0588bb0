use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use releval_core::config::RunConfig;
use releval_core::dataset::{
    ingest_annotations, ingest_qips, resolve_all, AnnotationRound, QipRecord, ResolvedQip,
};
use releval_core::jsonl::{self, Parsed};
use releval_core::judge::JudgeVerdict;
use releval_core::rng::derive_seed;
use releval_core::{QipKey, RelevanceLabel};

use crate::error::{CliError, CliResult};

pub const CONFIG_ECHO: &str = "effective_config.json";
pub const RESOLVED_FILE: &str = "resolved.jsonl";
pub const VERDICTS_FILE: &str = "verdicts.jsonl";

/// A validated config bound to its output directory. Every file a command
/// writes goes through this type, so nothing lands outside `output_dir`.
#[derive(Debug)]
pub struct Workspace {
    pub config: RunConfig,
    out: PathBuf,
}

impl Workspace {
    /// Validates `config`, derives sub-seeds from the run seed, creates the
    /// output directory and echoes the effective config into it.
    pub fn open(mut config: RunConfig) -> CliResult<Self> {
        config.augmentation.seed = derive_seed(config.seed, "augmentation", 0);
        config.lab.seed = derive_seed(config.seed, "lab", 0);
        config.validate()?;
        let out = config.paths.output_dir.clone();
        fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
        let ws = Workspace { config, out };
        ws.write_text(CONFIG_ECHO, &ws.config.to_json_pretty())?;
        Ok(ws)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn output_dir(&self) -> &Path {
        &self.out
    }

    pub fn write_text(&self, name: &str, text: &str) -> CliResult<PathBuf> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn write_csv<T: Serialize>(&self, name: &str, rows: &[T]) -> CliResult<PathBuf> {
        let path = self.path(name);
        let mut writer = csv::Writer::from_path(&path)?;
        for row in rows {
            writer.serialize(row)?;
        }
        writer.flush().map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn write_jsonl<T: Serialize>(&self, name: &str, records: &[T]) -> CliResult<PathBuf> {
        let path = self.path(name);
        jsonl::write_file(&path, records)?;
        Ok(path)
    }

    fn required<'a>(&self, path: &'a Option<PathBuf>, what: &str) -> CliResult<&'a Path> {
        path.as_deref()
            .ok_or_else(|| CliError::input(format!("no {what} file configured (paths.{what})")))
    }

    pub fn qips(&self) -> CliResult<Vec<QipRecord>> {
        let path = self.required(&self.config.paths.qips, "qips")?;
        strict(path, ingest_qips(path)?)
    }

    pub fn annotations(&self) -> CliResult<Option<Vec<AnnotationRound>>> {
        match &self.config.paths.annotations {
            None => Ok(None),
            Some(path) => strict(path, ingest_annotations(path)?).map(Some),
        }
    }

    /// Majority-resolved labels, or `None` when no annotations are configured.
    pub fn resolved(&self) -> CliResult<Option<(Vec<AnnotationRound>, Vec<ResolvedQip>)>> {
        let Some(rounds) = self.annotations()? else {
            return Ok(None);
        };
        let (resolved, errors) = resolve_all(&rounds);
        if !errors.is_empty() {
            return Err(CliError::input(format!(
                "{} QIP(s) violate the annotation protocol",
                errors.len()
            ))
            .with_details(errors.iter().map(ToString::to_string).collect()));
        }
        Ok(Some((rounds, resolved)))
    }

    /// Ground-truth labels: resolved annotations when configured, otherwise
    /// the labels carried by the QIP file.
    pub fn human_labels(&self) -> CliResult<Vec<(QipKey, RelevanceLabel)>> {
        if let Some((_, resolved)) = self.resolved()? {
            return Ok(resolved.iter().map(|r| (r.key(), r.final_label)).collect());
        }
        let labels: Vec<_> = self
            .qips()?
            .iter()
            .filter_map(|r| r.label.map(|l| (r.key(), l)))
            .collect();
        if labels.is_empty() {
            return Err(CliError::input(
                "no human labels: configure annotations or label the QIP file",
            ));
        }
        Ok(labels)
    }

    /// Verdicts written by the `judge` command of this workspace.
    pub fn own_verdicts(&self) -> CliResult<Vec<JudgeVerdict>> {
        let path = self.path(VERDICTS_FILE);
        if !path.exists() {
            return Err(CliError::input(format!(
                "{} not found; run the judge command first",
                path.display()
            )));
        }
        read_verdicts(&path)
    }
}

pub fn read_verdicts(path: &Path) -> CliResult<Vec<JudgeVerdict>> {
    let verdicts: Vec<JudgeVerdict> = jsonl::read_strict(path)?;
    let inconsistent: Vec<String> = verdicts
        .iter()
        .filter(|v| !v.is_consistent())
        .map(|v| format!("{}", v.key()))
        .collect();
    if !inconsistent.is_empty() {
        return Err(CliError::input(format!(
            "{}: verdict label disagrees with argmax of scores",
            path.display()
        ))
        .with_details(inconsistent));
    }
    Ok(verdicts)
}

pub fn verdict_map(verdicts: &[JudgeVerdict]) -> HashMap<QipKey, RelevanceLabel> {
    verdicts.iter().map(|v| (v.key(), v.label)).collect()
}

fn strict<T>(path: &Path, parsed: Parsed<T>) -> CliResult<Vec<T>> {
    if parsed.errors.is_empty() {
        return Ok(parsed.records);
    }
    Err(CliError::input(format!(
        "{}: {} malformed line(s)",
        path.display(),
        parsed.errors.len()
    ))
    .with_details(
        parsed
            .errors
            .iter()
            .map(|e| format!("line {}: {}", e.line, e.message))
            .collect(),
    ))
}
