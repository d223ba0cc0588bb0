use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;

use releval_core::config::{JudgeConfig, JudgeKind};
use releval_core::judge::{
    judge_batch_with_progress, BatchOptions, BatchProgress, CachedJudge, HttpTransport, Judge,
    JudgeError, JudgeRequest, OracleJudge, RemoteJudge, RemoteProtocol, ReplayJudge, Sleeper,
    ThreadSleeper, Transport, VerdictCache, PROMPT_TEMPLATE_VERSION,
};
use releval_core::metrics::{f1_scores, ConfusionMatrix3};
use releval_core::{QipKey, RelevanceLabel};

use crate::error::{CliError, CliResult, ErrorKind};
use crate::report::{section, table};
use crate::workspace::{verdict_map, Workspace, VERDICTS_FILE};

/// Builds the HTTP transport for remote judges. Tests substitute their own.
pub type TransportFactory<'a> = &'a dyn Fn(&str, Option<String>, Duration) -> Arc<dyn Transport>;

pub fn http_transport(
    endpoint: &str,
    token: Option<String>,
    timeout: Duration,
) -> Arc<dyn Transport> {
    Arc::new(HttpTransport::new(endpoint, token, timeout))
}

fn cache_path(id: &str) -> String {
    format!("cache/verdicts_{id}.jsonl")
}

fn build_judge(
    config: &JudgeConfig,
    oracle_labels: HashMap<QipKey, RelevanceLabel>,
    cache: Arc<VerdictCache>,
    transport: TransportFactory<'_>,
) -> CliResult<Arc<dyn Judge>> {
    let remote = |protocol: RemoteProtocol| -> CliResult<Arc<dyn Judge>> {
        let endpoint = config.resolved_endpoint().ok_or_else(|| {
            CliError::input("remote judge needs judge.endpoint or REL_EVAL_ENDPOINT")
        })?;
        let t = transport(
            &endpoint,
            JudgeConfig::token(),
            Duration::from_millis(config.timeout_ms),
        );
        let inner: Arc<dyn Judge> = Arc::new(RemoteJudge::new(config.id.clone(), protocol, t));
        Ok(Arc::new(CachedJudge::new(inner, cache.clone())))
    };
    match config.kind {
        // Uncached: ground truth is per pair, while cache keys are per rendered text.
        JudgeKind::Oracle => Ok(Arc::new(OracleJudge::new(config.id.clone(), oracle_labels))),
        JudgeKind::Replay => {
            let version = config
                .template_version
                .clone()
                .unwrap_or_else(|| PROMPT_TEMPLATE_VERSION.to_owned());
            Ok(Arc::new(ReplayJudge::new(
                config.id.clone(),
                version,
                cache,
            )))
        }
        JudgeKind::Remote => remote(RemoteProtocol::Native),
        JudgeKind::Chat => {
            let model = config
                .model
                .clone()
                .ok_or_else(|| CliError::input("chat judge needs judge.model"))?;
            remote(RemoteProtocol::ChatCompletions { model })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JudgeFailure {
    pub query_id: String,
    pub item_id: String,
    pub attempts: u32,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JudgeSummary {
    pub judge_id: String,
    pub total: usize,
    pub cached: usize,
    pub fresh: usize,
    pub failed: usize,
    /// Judge calls made in this run, retries included.
    pub attempts: usize,
    pub peak_in_flight: usize,
    pub failures: Vec<JudgeFailure>,
}

impl JudgeSummary {
    pub fn text(&self) -> String {
        let rows = vec![
            vec!["judge".into(), self.judge_id.clone()],
            vec!["total".into(), self.total.to_string()],
            vec!["cached".into(), self.cached.to_string()],
            vec!["fresh".into(), self.fresh.to_string()],
            vec!["failed".into(), self.failed.to_string()],
            vec!["attempts".into(), self.attempts.to_string()],
        ];
        let mut text = section("Judge run", &table(&["field", "value"], &rows));
        for f in &self.failures {
            text.push_str(&format!(
                "failed ({}, {}) after {} attempt(s): {}\n",
                f.query_id, f.item_id, f.attempts, f.error
            ));
        }
        text
    }
}

/// Judges every QIP with the configured judge behind the on-disk cache.
///
/// Successful verdicts and the cache are written even when some pairs fail,
/// so a re-run only requests what is still missing.
pub fn judge(
    ws: &Workspace,
    transport: TransportFactory<'_>,
    sleeper: &dyn Sleeper,
) -> CliResult<JudgeSummary> {
    let qips = ws.qips()?;
    let config = &ws.config.judge;
    let cache_file = ws.path(&cache_path(&config.id));
    if let Some(parent) = cache_file.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let cache = Arc::new(VerdictCache::load(&cache_file)?);
    let oracle_labels = qips
        .iter()
        .filter_map(|r| r.label.map(|l| (r.key(), l)))
        .collect();
    let judge = build_judge(config, oracle_labels, cache.clone(), transport)?;

    let requests: Vec<JudgeRequest> = qips
        .iter()
        .map(|r| JudgeRequest::from_qip(r, ws.config.variant))
        .collect();
    let options = BatchOptions {
        concurrency_limit: ws.config.concurrency_limit,
        retry: ws.config.retry.clone(),
    };
    let progress = BatchProgress::default();
    let results =
        judge_batch_with_progress(judge.as_ref(), &requests, &options, sleeper, &progress);
    cache.save(&cache_file)?;

    let mut verdicts = Vec::new();
    let mut failures = Vec::new();
    let mut remote_failure = false;
    for (request, result) in requests.iter().zip(results) {
        match result {
            Ok(judged) => {
                if !judged.verdict.is_consistent() {
                    return Err(CliError::internal(format!(
                        "judge {} emitted a label that disagrees with its scores for ({}, {})",
                        config.id, request.query_id, request.item_id
                    )));
                }
                if judged.attempts > 1 {
                    log::info!(
                        "({}, {}) judged after {} attempts",
                        request.query_id,
                        request.item_id,
                        judged.attempts
                    );
                }
                verdicts.push(judged.verdict);
            }
            Err(err) => {
                remote_failure |= matches!(
                    err,
                    JudgeError::Transport { .. }
                        | JudgeError::Unparseable { .. }
                        | JudgeError::InvalidResponse(_)
                );
                failures.push(JudgeFailure {
                    query_id: request.query_id.clone(),
                    item_id: request.item_id.clone(),
                    attempts: err.attempts(),
                    error: err.to_string(),
                });
            }
        }
    }
    ws.write_jsonl(VERDICTS_FILE, &verdicts)?;

    let snap = progress.snapshot();
    let summary = JudgeSummary {
        judge_id: config.id.clone(),
        total: requests.len(),
        cached: snap.cached,
        fresh: snap.succeeded - snap.cached,
        failed: failures.len(),
        attempts: snap.attempts,
        peak_in_flight: snap.peak_in_flight,
        failures,
    };
    // Attempt counts and concurrency vary run to run; the persisted summary
    // keeps only the deterministic fields.
    let persisted = serde_json::json!({
        "judge_id": summary.judge_id,
        "total": summary.total,
        "succeeded": summary.total - summary.failed,
        "failed": summary.failed,
        "failures": summary.failures.iter().map(|f| format!("({}, {})", f.query_id, f.item_id)).collect::<Vec<_>>(),
    });
    ws.write_text(
        "judge_summary.json",
        &(serde_json::to_string_pretty(&persisted)? + "\n"),
    )?;
    log::info!("{}", summary.text().trim_end());

    if summary.failed > 0 {
        let kind = if remote_failure {
            ErrorKind::RemoteJudge
        } else {
            ErrorKind::Input
        };
        let err = CliError {
            kind,
            message: format!(
                "{} of {} QIP(s) could not be judged",
                summary.failed, summary.total
            ),
            details: summary
                .failures
                .iter()
                .map(|f| format!("({}, {}): {}", f.query_id, f.item_id, f.error))
                .collect(),
        };
        return Err(err);
    }
    Ok(summary)
}

pub fn default_judge(ws: &Workspace) -> CliResult<JudgeSummary> {
    judge(ws, &http_transport, &ThreadSleeper)
}

#[derive(Serialize)]
struct F1Row {
    class: String,
    f1: String,
}

/// f1 of the workspace verdicts against the human labels.
pub fn evaluate(ws: &Workspace) -> CliResult<String> {
    let gold = ws.human_labels()?;
    let predictions = verdict_map(&ws.own_verdicts()?);
    let mut cm = ConfusionMatrix3::default();
    let mut unjudged = 0usize;
    for (key, label) in &gold {
        match predictions.get(key) {
            Some(p) => cm.record(*label, *p),
            None => unjudged += 1,
        }
    }
    if unjudged > 0 {
        log::warn!("{unjudged} labeled QIP(s) have no verdict and are not scored");
    }
    let report = f1_scores(&cm)?;
    let mut rows: Vec<F1Row> = RelevanceLabel::ALL
        .iter()
        .map(|l| F1Row {
            class: l.value().to_string(),
            f1: format!("{:.4}", report.per_class[l.index()]),
        })
        .collect();
    rows.push(F1Row {
        class: "micro".into(),
        f1: format!("{:.4}", report.micro),
    });
    ws.write_csv("evaluation.csv", &rows)?;

    let f1_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.class.clone(), r.f1.clone()])
        .collect();
    let cm_rows: Vec<Vec<String>> = RelevanceLabel::ALL
        .iter()
        .map(|&g| {
            let mut row = vec![format!("gold {}", g.value())];
            row.extend(
                RelevanceLabel::ALL
                    .iter()
                    .map(|&p| cm.get(g, p).to_string()),
            );
            row
        })
        .collect();
    let mut text = section(
        &format!("Judge {} vs human labels", ws.config.judge.id),
        &table(&["class", "f1"], &f1_rows),
    );
    text.push('\n');
    text.push_str(&table(&["", "pred 0", "pred 1", "pred 2"], &cm_rows));
    text.push_str(&format!(
        "scored {} QIP(s), {} without verdict\n",
        cm.total(),
        unjudged
    ));
    ws.write_text("evaluation.txt", &text)?;
    Ok(text)
}
