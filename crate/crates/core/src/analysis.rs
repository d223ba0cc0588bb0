//! Cross-judge misprediction analysis.
//!
//! A profile is kept for every QIP that at least one judge got wrong. A
//! "common" misprediction is one that every judge got wrong; those are
//! broken down by gold label × query specificity and by grammar tag.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataset::Specificity;
use crate::error::{Error, Result};
use crate::label::{QipKey, RelevanceLabel};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MispredictionProfile {
    pub query_id: String,
    pub item_id: String,
    pub gold: RelevanceLabel,
    pub predictions: BTreeMap<String, RelevanceLabel>,
    pub wrong_set: BTreeSet<String>,
}

impl MispredictionProfile {
    pub fn all_wrong(&self) -> bool {
        self.wrong_set.len() == self.predictions.len()
    }

    /// Every judge predicted the same label.
    pub fn identical_predictions(&self) -> bool {
        let mut labels = self.predictions.values();
        match labels.next() {
            Some(first) => labels.all(|l| l == first),
            None => true,
        }
    }
}

/// Joins per-judge predictions against gold labels.
///
/// `predictions` maps judge id → (pair → label). Every judge must cover
/// every gold pair; predictions outside the gold set are ignored. Output
/// follows the order of `gold`.
pub fn misprediction_join(
    predictions: &BTreeMap<String, HashMap<QipKey, RelevanceLabel>>,
    gold: &[(QipKey, RelevanceLabel)],
) -> Result<Vec<MispredictionProfile>> {
    let mut missing = Vec::new();
    for (judge, preds) in predictions {
        for (key, _) in gold {
            if !preds.contains_key(key) {
                missing.push(format!("{judge}: {key}"));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::Coverage(format!(
            "missing predictions: {}",
            missing.join(", ")
        )));
    }

    let mut profiles = Vec::new();
    for (key, gold_label) in gold {
        let per_judge: BTreeMap<String, RelevanceLabel> = predictions
            .iter()
            .map(|(judge, preds)| (judge.clone(), preds[key]))
            .collect();
        let wrong_set: BTreeSet<String> = per_judge
            .iter()
            .filter(|(_, l)| *l != gold_label)
            .map(|(j, _)| j.clone())
            .collect();
        if !wrong_set.is_empty() {
            profiles.push(MispredictionProfile {
                query_id: key.query_id.clone(),
                item_id: key.item_id.clone(),
                gold: *gold_label,
                predictions: per_judge,
                wrong_set,
            });
        }
    }
    Ok(profiles)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OverlapStats {
    pub profiles: usize,
    pub all_wrong: usize,
    pub all_wrong_identical: usize,
    /// `all_wrong / profiles`.
    pub all_wrong_fraction: f64,
    /// `all_wrong_identical / all_wrong`.
    pub identical_fraction: f64,
    /// No profiles at all; both fractions are reported as 0.
    pub empty: bool,
    /// No all-wrong profiles; `identical_fraction` is reported as 0.
    pub identical_undefined: bool,
}

/// Share of mispredicted QIPs that every judge got wrong and, among those,
/// the share where all judges gave the same wrong label.
pub fn overlap_stats(profiles: &[MispredictionProfile], judge_count: usize) -> OverlapStats {
    let all_wrong: Vec<&MispredictionProfile> = profiles
        .iter()
        .filter(|p| p.wrong_set.len() == judge_count)
        .collect();
    let identical = all_wrong
        .iter()
        .filter(|p| p.identical_predictions())
        .count();
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    OverlapStats {
        profiles: profiles.len(),
        all_wrong: all_wrong.len(),
        all_wrong_identical: identical,
        all_wrong_fraction: ratio(all_wrong.len(), profiles.len()),
        identical_fraction: ratio(identical, all_wrong.len()),
        empty: profiles.is_empty(),
        identical_undefined: all_wrong.is_empty(),
    }
}

/// Approximate broad/narrow split by token count, used only when a query
/// has no explicit tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecificityRule {
    pub narrow_min_tokens: usize,
}

impl Default for SpecificityRule {
    fn default() -> Self {
        SpecificityRule {
            narrow_min_tokens: 4,
        }
    }
}

impl SpecificityRule {
    pub fn classify(&self, query: &str, tag: Option<Specificity>) -> Specificity {
        if let Some(tag) = tag {
            return tag;
        }
        if query.split_whitespace().count() >= self.narrow_min_tokens {
            Specificity::Narrow
        } else {
            Specificity::Broad
        }
    }
}

pub fn specificity_heuristic(
    query: &str,
    tag: Option<Specificity>,
    rule: &SpecificityRule,
) -> Specificity {
    rule.classify(query, tag)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SegmentRow {
    pub segment: String,
    pub count: usize,
    pub percentage: f64,
}

fn rows_from_counts(counts: Vec<(String, usize)>) -> Vec<SegmentRow> {
    let total: usize = counts.iter().map(|(_, c)| c).sum();
    counts
        .into_iter()
        .map(|(segment, count)| SegmentRow {
            segment,
            count,
            percentage: if total == 0 {
                0.0
            } else {
                100.0 * count as f64 / total as f64
            },
        })
        .collect()
}

/// Gold label × specificity percentages over common mispredictions
/// (profiles wrong for every judge). Always six rows, labels 0..2 × broad,
/// narrow; `specificity` maps a query id to its segment.
pub fn segment_breakdown<F>(profiles: &[MispredictionProfile], specificity: F) -> Vec<SegmentRow>
where
    F: Fn(&str) -> Specificity,
{
    let mut counts: BTreeMap<(RelevanceLabel, Specificity), usize> = BTreeMap::new();
    for label in RelevanceLabel::ALL {
        for segment in [Specificity::Broad, Specificity::Narrow] {
            counts.insert((label, segment), 0);
        }
    }
    for p in profiles.iter().filter(|p| p.all_wrong()) {
        *counts
            .entry((p.gold, specificity(&p.query_id)))
            .or_default() += 1;
    }
    rows_from_counts(
        counts
            .into_iter()
            .map(|((label, segment), c)| (format!("label_{}_{}", label.value(), segment), c))
            .collect(),
    )
}

/// Common mispredictions by provided grammar tag; untagged queries are
/// grouped under `untagged`.
pub fn grammar_breakdown<F>(profiles: &[MispredictionProfile], grammar: F) -> Vec<SegmentRow>
where
    F: Fn(&str) -> Option<String>,
{
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for p in profiles.iter().filter(|p| p.all_wrong()) {
        let tag = grammar(&p.query_id).unwrap_or_else(|| "untagged".to_owned());
        *counts.entry(tag).or_default() += 1;
    }
    rows_from_counts(counts.into_iter().collect())
}
