//! Graded DCG/nDCG with gain `2^label - 1` and discount `log2(rank + 1)`.
//!
//! nDCG is normalized by the ideal ordering of the same judged list, and is
//! 0 when that ideal is 0.

use crate::error::{Error, Result};
use crate::label::RelevanceLabel;

/// Labels of a ranked list (index 0 = top rank) with a cutoff.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankedLabels {
    pub labels: Vec<RelevanceLabel>,
    pub k: usize,
}

impl RankedLabels {
    pub fn new(labels: Vec<RelevanceLabel>, k: usize) -> Result<Self> {
        check_cutoff(k)?;
        Ok(RankedLabels { labels, k })
    }

    pub fn dcg(&self) -> f64 {
        dcg(&self.labels, self.k)
    }

    pub fn ndcg(&self) -> f64 {
        ndcg(&self.labels, self.k)
    }
}

fn check_cutoff(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("k", "cutoff must be at least 1"));
    }
    Ok(())
}

fn dcg(labels: &[RelevanceLabel], k: usize) -> f64 {
    labels
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, l)| l.gain() / ((i + 2) as f64).log2())
        .sum()
}

fn ideal_dcg(labels: &[RelevanceLabel], k: usize) -> f64 {
    let mut sorted = labels.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    dcg(&sorted, k)
}

fn ndcg(labels: &[RelevanceLabel], k: usize) -> f64 {
    let ideal = ideal_dcg(labels, k);
    if ideal == 0.0 {
        0.0
    } else {
        dcg(labels, k) / ideal
    }
}

pub fn dcg_at_k(labels: &[RelevanceLabel], k: usize) -> Result<f64> {
    check_cutoff(k)?;
    Ok(dcg(labels, k))
}

pub fn ideal_dcg_at_k(labels: &[RelevanceLabel], k: usize) -> Result<f64> {
    check_cutoff(k)?;
    Ok(ideal_dcg(labels, k))
}

pub fn ndcg_at_k(labels: &[RelevanceLabel], k: usize) -> Result<f64> {
    check_cutoff(k)?;
    Ok(ndcg(labels, k))
}
