use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::RelevanceLabel;

/// 3×3 counts, rows = gold label, columns = predicted label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix3 {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix3 {
    pub fn new(counts: [[u64; 3]; 3]) -> Self {
        ConfusionMatrix3 { counts }
    }

    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (RelevanceLabel, RelevanceLabel)>,
    {
        let mut cm = ConfusionMatrix3::default();
        for (gold, pred) in pairs {
            cm.record(gold, pred);
        }
        cm
    }

    pub fn record(&mut self, gold: RelevanceLabel, predicted: RelevanceLabel) {
        self.counts[gold.index()][predicted.index()] += 1;
    }

    pub fn get(&self, gold: RelevanceLabel, predicted: RelevanceLabel) -> u64 {
        self.counts[gold.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct F1Report {
    /// One-vs-rest f1, indexed by label value.
    pub per_class: [f64; 3],
    pub micro: f64,
}

/// Per-class one-vs-rest f1 (`0/0 → 0`) and micro f1.
///
/// For single-label multiclass data micro f1 equals accuracy, so it is
/// computed as `trace / total`.
pub fn f1_scores(cm: &ConfusionMatrix3) -> Result<F1Report> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Empty("confusion matrix"));
    }
    let mut per_class = [0.0; 3];
    for (c, f1) in per_class.iter_mut().enumerate() {
        let tp = cm.counts[c][c];
        let fn_: u64 = (0..3).filter(|&j| j != c).map(|j| cm.counts[c][j]).sum();
        let fp: u64 = (0..3).filter(|&i| i != c).map(|i| cm.counts[i][c]).sum();
        let denom = 2 * tp + fp + fn_;
        *f1 = if denom == 0 {
            0.0
        } else {
            (2 * tp) as f64 / denom as f64
        };
    }
    Ok(F1Report {
        per_class,
        micro: cm.trace() as f64 / total as f64,
    })
}
