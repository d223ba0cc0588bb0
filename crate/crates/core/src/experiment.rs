//! Control-vs-variation re-enactment of ranking experiments.
//!
//! Each experiment pairs a control ranker with a variation ranker over the
//! same query sample. Per query and cutoff the difference
//! `nDCG(variation) − nDCG(control)` is computed from judged labels, then a
//! paired t-test turns the differences into a `+`/`=`/`-` verdict. Running
//! the same experiments once with human labels and once with a judge's
//! labels gives a 3×3 agreement matrix per cutoff.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::judge::JudgeVerdict;
use crate::label::{QipKey, RelevanceLabel};
use crate::metrics::{ndcg_at_k, paired_t_test, verdict, TestResult, Verdict};

pub const DEFAULT_CUTOFFS: [usize; 3] = [1, 5, 10];
pub const MAX_RANKING_LEN: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Control,
    Variation,
}

/// One `experiments.jsonl` line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentLine {
    pub experiment_id: String,
    pub query_id: String,
    pub arm: Arm,
    pub ranking: Vec<String>,
}

/// Both arms of one experiment, keyed by query id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Experiment {
    pub id: String,
    pub control: BTreeMap<String, Vec<String>>,
    pub variation: BTreeMap<String, Vec<String>>,
}

impl Experiment {
    pub fn arm(&self, arm: Arm) -> &BTreeMap<String, Vec<String>> {
        match arm {
            Arm::Control => &self.control,
            Arm::Variation => &self.variation,
        }
    }

    /// The same experiment with control and variation exchanged.
    pub fn swapped(&self) -> Experiment {
        Experiment {
            id: self.id.clone(),
            control: self.variation.clone(),
            variation: self.control.clone(),
        }
    }
}

/// Groups lines into experiments, sorted by experiment id.
pub fn group_experiments(lines: Vec<ExperimentLine>) -> Result<Vec<Experiment>> {
    let mut experiments: BTreeMap<String, Experiment> = BTreeMap::new();
    for line in lines {
        let fail = |message: String| Error::Experiment {
            experiment_id: line.experiment_id.clone(),
            message,
        };
        if line.ranking.is_empty() {
            return Err(fail(format!("empty ranking for query {}", line.query_id)));
        }
        if line.ranking.len() > MAX_RANKING_LEN {
            return Err(fail(format!(
                "ranking for query {} has {} items, at most {MAX_RANKING_LEN} allowed",
                line.query_id,
                line.ranking.len()
            )));
        }
        let exp = experiments
            .entry(line.experiment_id.clone())
            .or_insert_with(|| Experiment {
                id: line.experiment_id.clone(),
                ..Default::default()
            });
        let arm = match line.arm {
            Arm::Control => &mut exp.control,
            Arm::Variation => &mut exp.variation,
        };
        if arm.contains_key(&line.query_id) {
            return Err(fail(format!(
                "duplicate {:?} ranking for query {}",
                line.arm, line.query_id
            )));
        }
        arm.insert(line.query_id.clone(), line.ranking);
    }
    Ok(experiments.into_values().collect())
}

pub fn load_experiments(path: &Path) -> Result<Vec<Experiment>> {
    group_experiments(jsonl::read_strict(path)?)
}

/// Labels by `(query_id, item_id)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelTable {
    by_query: HashMap<String, HashMap<String, RelevanceLabel>>,
}

impl LabelTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: &str, item_id: &str, label: RelevanceLabel) {
        self.by_query
            .entry(query_id.to_owned())
            .or_default()
            .insert(item_id.to_owned(), label);
    }

    pub fn get(&self, query_id: &str, item_id: &str) -> Option<RelevanceLabel> {
        self.by_query.get(query_id)?.get(item_id).copied()
    }

    pub fn len(&self) -> usize {
        self.by_query.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_verdicts<'a, I>(verdicts: I) -> Self
    where
        I: IntoIterator<Item = &'a JudgeVerdict>,
    {
        let mut table = LabelTable::new();
        for v in verdicts {
            table.insert(&v.query_id, &v.item_id, v.label);
        }
        table
    }
}

impl FromIterator<(QipKey, RelevanceLabel)> for LabelTable {
    fn from_iter<T: IntoIterator<Item = (QipKey, RelevanceLabel)>>(iter: T) -> Self {
        let mut table = LabelTable::new();
        for (key, l) in iter {
            table.insert(&key.query_id, &key.item_id, l);
        }
        table
    }
}

impl<'a> FromIterator<(&'a str, &'a str, RelevanceLabel)> for LabelTable {
    fn from_iter<T: IntoIterator<Item = (&'a str, &'a str, RelevanceLabel)>>(iter: T) -> Self {
        let mut table = LabelTable::new();
        for (q, i, l) in iter {
            table.insert(q, i, l);
        }
        table
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CutoffOutcome {
    pub k: usize,
    pub result: TestResult,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentOutcome {
    pub experiment_id: String,
    pub n_queries: usize,
    /// Queries skipped because neither arm had any judged item.
    pub excluded_queries: Vec<String>,
    pub per_k: Vec<CutoffOutcome>,
}

impl ExperimentOutcome {
    pub fn verdict_at(&self, k: usize) -> Option<Verdict> {
        self.per_k.iter().find(|o| o.k == k).map(|o| o.verdict)
    }
}

/// `Some(labels)` when every item is judged, `None` when none is.
fn arm_labels(
    experiment_id: &str,
    query_id: &str,
    ranking: &[String],
    labels: &LabelTable,
) -> Result<Option<Vec<RelevanceLabel>>> {
    let found: Vec<Option<RelevanceLabel>> =
        ranking.iter().map(|i| labels.get(query_id, i)).collect();
    if found.iter().all(Option::is_none) {
        return Ok(None);
    }
    if let Some(pos) = found.iter().position(Option::is_none) {
        return Err(Error::Experiment {
            experiment_id: experiment_id.to_owned(),
            message: format!("missing label for ({query_id}, {})", ranking[pos]),
        });
    }
    Ok(Some(found.into_iter().flatten().collect()))
}

/// Scores one experiment at each cutoff in `ks`.
pub fn score_experiment(
    experiment: &Experiment,
    labels: &LabelTable,
    ks: &[usize],
    alpha: f64,
) -> Result<ExperimentOutcome> {
    let fail = |message: String| Error::Experiment {
        experiment_id: experiment.id.clone(),
        message,
    };
    let control_queries: BTreeSet<&String> = experiment.control.keys().collect();
    let variation_queries: BTreeSet<&String> = experiment.variation.keys().collect();
    if control_queries != variation_queries {
        let only: Vec<_> = control_queries
            .symmetric_difference(&variation_queries)
            .map(|q| q.as_str())
            .collect();
        return Err(fail(format!("arms cover different queries: {only:?}")));
    }
    if ks.is_empty() || ks.contains(&0) {
        return Err(fail("cutoffs must be non-empty and at least 1".into()));
    }

    let mut judged: Vec<(Vec<RelevanceLabel>, Vec<RelevanceLabel>)> = Vec::new();
    let mut excluded = Vec::new();
    for (query_id, control) in &experiment.control {
        let variation = &experiment.variation[query_id];
        let c = arm_labels(&experiment.id, query_id, control, labels)?;
        let v = arm_labels(&experiment.id, query_id, variation, labels)?;
        match (c, v) {
            (Some(c), Some(v)) => judged.push((c, v)),
            (None, None) => {
                log::warn!(
                    "experiment {}: query {query_id} has no judged items; excluded",
                    experiment.id
                );
                excluded.push(query_id.clone());
            }
            _ => return Err(fail(format!("query {query_id} is judged in one arm only"))),
        }
    }

    let mut per_k = Vec::with_capacity(ks.len());
    for &k in ks {
        let diffs = judged
            .iter()
            .map(|(c, v)| Ok(ndcg_at_k(v, k)? - ndcg_at_k(c, k)?))
            .collect::<Result<Vec<f64>>>()?;
        let result = paired_t_test(&diffs).map_err(|e| fail(e.to_string()))?;
        per_k.push(CutoffOutcome {
            k,
            verdict: verdict(&result, alpha),
            result,
        });
    }
    Ok(ExperimentOutcome {
        experiment_id: experiment.id.clone(),
        n_queries: judged.len(),
        excluded_queries: excluded,
        per_k,
    })
}

/// Scores experiments in parallel; output order follows input order.
pub fn score_all(
    experiments: &[Experiment],
    labels: &LabelTable,
    ks: &[usize],
    alpha: f64,
) -> Result<Vec<ExperimentOutcome>> {
    experiments
        .par_iter()
        .map(|e| score_experiment(e, labels, ks, alpha))
        .collect()
}

/// Verdict per experiment at cutoff `k`.
pub fn verdicts_at(outcomes: &[ExperimentOutcome], k: usize) -> BTreeMap<String, Verdict> {
    outcomes
        .iter()
        .filter_map(|o| o.verdict_at(k).map(|v| (o.experiment_id.clone(), v)))
        .collect()
}

/// Rows = human verdict, columns = model verdict, both in `+`, `=`, `-` order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementMatrix {
    pub k: usize,
    pub counts: [[u64; 3]; 3],
}

impl AgreementMatrix {
    pub fn new(k: usize, counts: [[u64; 3]; 3]) -> Self {
        AgreementMatrix { k, counts }
    }

    /// Builds from a block laid out with model verdicts on the rows.
    pub fn from_model_rows(k: usize, counts: [[u64; 3]; 3]) -> Self {
        AgreementMatrix::new(k, counts).transposed()
    }

    pub fn transposed(&self) -> Self {
        let mut counts = [[0; 3]; 3];
        for (i, row) in self.counts.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                counts[j][i] = *c;
            }
        }
        AgreementMatrix { k: self.k, counts }
    }

    pub fn get(&self, human: Verdict, model: Verdict) -> u64 {
        self.counts[human.index()][model.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }
}

pub fn agreement_matrix(
    human: &BTreeMap<String, Verdict>,
    model: &BTreeMap<String, Verdict>,
    k: usize,
) -> Result<AgreementMatrix> {
    let missing: Vec<&str> = human
        .keys()
        .filter(|id| !model.contains_key(*id))
        .chain(model.keys().filter(|id| !human.contains_key(*id)))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Coverage(format!(
            "verdict missing on one side for experiments {missing:?}"
        )));
    }
    let mut m = AgreementMatrix::new(k, [[0; 3]; 3]);
    for (id, h) in human {
        m.counts[h.index()][model[id].index()] += 1;
    }
    Ok(m)
}

/// Fraction of experiments where both verdicts agree: trace / total.
pub fn combined_score(m: &AgreementMatrix) -> Result<f64> {
    let total = m.total();
    if total == 0 {
        return Err(Error::Empty("agreement matrix"));
    }
    Ok(m.trace() as f64 / total as f64)
}

/// Three-decimal rendering used in reports.
pub fn format_score(score: f64) -> String {
    format!("{score:.3}")
}

/// True when no significant verdict is flipped to the opposite sign.
pub fn reversal_check(m: &AgreementMatrix) -> bool {
    m.get(Verdict::Better, Verdict::Worse) == 0 && m.get(Verdict::Worse, Verdict::Better) == 0
}
