use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use releval_core::experiment::{
    agreement_matrix, combined_score, format_score, load_experiments, reversal_check, score_all,
    verdicts_at, AgreementMatrix, ExperimentOutcome, LabelTable,
};
use releval_core::Verdict;

use crate::error::{CliError, CliResult};
use crate::report::{section, table};
use crate::workspace::Workspace;

#[derive(Serialize)]
struct OutcomeRow<'a> {
    experiment_id: &'a str,
    k: usize,
    n_queries: usize,
    excluded_queries: usize,
    mean_diff: f64,
    t_statistic: f64,
    p_value: f64,
    verdict: Verdict,
}

fn outcome_rows(outcomes: &[ExperimentOutcome]) -> Vec<OutcomeRow<'_>> {
    outcomes
        .iter()
        .flat_map(|o| {
            o.per_k.iter().map(move |c| OutcomeRow {
                experiment_id: &o.experiment_id,
                k: c.k,
                n_queries: o.n_queries,
                excluded_queries: o.excluded_queries.len(),
                mean_diff: c.result.mean_diff,
                t_statistic: c.result.t_statistic,
                p_value: c.result.p_value,
                verdict: c.verdict,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgreementRow {
    pub judge: String,
    pub k: usize,
    /// `h{human}_m{model}` cells in `+`, `=`, `-` order.
    pub cells: [[u64; 3]; 3],
    pub total: u64,
    pub combined_score: String,
    pub no_reversals: bool,
}

impl AgreementRow {
    pub fn new(judge: &str, m: &AgreementMatrix) -> CliResult<Self> {
        Ok(AgreementRow {
            judge: judge.to_owned(),
            k: m.k,
            cells: m.counts,
            total: m.total(),
            combined_score: format_score(combined_score(m)?),
            no_reversals: reversal_check(m),
        })
    }
}

#[derive(Serialize)]
struct AgreementCsvRow<'a> {
    judge: &'a str,
    k: usize,
    h_plus_m_plus: u64,
    h_plus_m_eq: u64,
    h_plus_m_minus: u64,
    h_eq_m_plus: u64,
    h_eq_m_eq: u64,
    h_eq_m_minus: u64,
    h_minus_m_plus: u64,
    h_minus_m_eq: u64,
    h_minus_m_minus: u64,
    total: u64,
    combined_score: &'a str,
    no_reversals: bool,
}

fn agreement_csv(rows: &[AgreementRow]) -> Vec<AgreementCsvRow<'_>> {
    rows.iter()
        .map(|r| {
            let c = &r.cells;
            AgreementCsvRow {
                judge: &r.judge,
                k: r.k,
                h_plus_m_plus: c[0][0],
                h_plus_m_eq: c[0][1],
                h_plus_m_minus: c[0][2],
                h_eq_m_plus: c[1][0],
                h_eq_m_eq: c[1][1],
                h_eq_m_minus: c[1][2],
                h_minus_m_plus: c[2][0],
                h_minus_m_eq: c[2][1],
                h_minus_m_minus: c[2][2],
                total: r.total,
                combined_score: &r.combined_score,
                no_reversals: r.no_reversals,
            }
        })
        .collect()
}

fn agreement_text(rows: &[AgreementRow]) -> String {
    let mut out = String::new();
    for r in rows {
        let body: Vec<Vec<String>> = Verdict::ALL
            .iter()
            .map(|h| {
                let mut row = vec![format!("human {}", h.symbol())];
                row.extend(r.cells[h.index()].iter().map(u64::to_string));
                row
            })
            .collect();
        out.push_str(&format!("{} nDCG@{}\n", r.judge, r.k));
        out.push_str(&table(&["", "model +", "model =", "model -"], &body));
        out.push_str(&format!(
            "combined score {}  reversals {}\n\n",
            r.combined_score,
            if r.no_reversals { "none" } else { "PRESENT" }
        ));
    }
    out
}

fn write_agreement(ws: &Workspace, rows: &[AgreementRow]) -> CliResult<String> {
    ws.write_csv("agreement.csv", &agreement_csv(rows))?;
    let text = section("Human vs model verdict agreement", &agreement_text(rows));
    ws.write_text("agreement.txt", &text)?;
    Ok(text)
}

/// Re-enacts every experiment twice, with human labels and with the
/// workspace judge's verdicts, and compares the verdicts per cutoff.
pub fn reenact(ws: &Workspace) -> CliResult<(String, Vec<AgreementRow>)> {
    let path = ws
        .config
        .paths
        .experiments
        .as_deref()
        .ok_or_else(|| CliError::input("no experiments file configured (paths.experiments)"))?;
    let experiments = load_experiments(path)?;
    if experiments.is_empty() {
        return Err(CliError::input(format!(
            "{}: no experiments",
            path.display()
        )));
    }
    let human: LabelTable = ws.human_labels()?.into_iter().collect();
    let verdicts = ws.own_verdicts()?;
    let model = LabelTable::from_verdicts(&verdicts);
    let ks = &ws.config.ks;
    let alpha = ws.config.alpha;

    let human_outcomes = score_all(&experiments, &human, ks, alpha)?;
    let model_outcomes = score_all(&experiments, &model, ks, alpha)?;
    let judge_id = ws.config.judge.id.as_str();
    ws.write_csv("outcomes.csv", &outcome_rows(&human_outcomes))?;
    ws.write_csv(
        &format!("outcomes_{judge_id}.csv"),
        &outcome_rows(&model_outcomes),
    )?;

    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let m = agreement_matrix(
            &verdicts_at(&human_outcomes, k),
            &verdicts_at(&model_outcomes, k),
            k,
        )?;
        rows.push(AgreementRow::new(judge_id, &m)?);
    }
    let text = write_agreement(ws, &rows)?;
    Ok((text, rows))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Rows are human verdicts.
    HumanRows,
    /// Rows are model verdicts, columns human verdicts.
    ModelRows,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub orientation: Orientation,
    pub judges: Vec<JudgeMatrices>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeMatrices {
    pub judge: String,
    /// Cutoff → 3×3 counts in `+`, `=`, `-` order.
    pub blocks: BTreeMap<usize, [[u64; 3]; 3]>,
}

/// Agreement report from published count matrices instead of experiments.
pub fn replay_matrices(ws: &Workspace, path: &Path) -> CliResult<(String, Vec<AgreementRow>)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: MatrixFile = serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for j in &file.judges {
        for (&k, counts) in &j.blocks {
            let m = match file.orientation {
                Orientation::HumanRows => AgreementMatrix::new(k, *counts),
                Orientation::ModelRows => AgreementMatrix::from_model_rows(k, *counts),
            };
            rows.push(AgreementRow::new(&j.judge, &m)?);
        }
    }
    let text = write_agreement(ws, &rows)?;
    Ok((text, rows))
}
