//! QIP ingestion, multi-round label resolution and corpus statistics.
//!
//! Annotation protocol: every pair is labeled twice. When the two rounds
//! agree that label is final. Otherwise a third round is collected and the
//! label held by at least two rounds wins; if all three differ, the third
//! round acts as adjudicator and the result is flagged.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl::{self, Parsed};
use crate::label::{QipKey, RelevanceLabel};
use crate::metrics::ConfusionMatrix3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Specificity {
    Broad,
    Narrow,
}

impl Specificity {
    pub fn as_str(self) -> &'static str {
        match self {
            Specificity::Broad => "broad",
            Specificity::Narrow => "narrow",
        }
    }
}

impl fmt::Display for Specificity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
    pub specificity: Option<Specificity>,
    pub grammar: Option<String>,
}

/// Item attributes. Optional fields are `None` when absent from the source,
/// never empty strings.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ItemRecord {
    pub item_id: String,
    pub title: String,
    pub product_type: Option<String>,
    pub brand: Option<String>,
    pub color: Option<String>,
    pub gender: Option<String>,
    pub description: Option<String>,
}

impl ItemRecord {
    pub fn new(item_id: impl Into<String>, title: impl Into<String>) -> Self {
        ItemRecord {
            item_id: item_id.into(),
            title: title.into(),
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QipRecord {
    pub query: QueryRecord,
    pub item: ItemRecord,
    pub label: Option<RelevanceLabel>,
}

impl QipRecord {
    pub fn key(&self) -> QipKey {
        QipKey::new(&self.query.query_id, &self.item.item_id)
    }
}

/// Wire form of one `qips.jsonl` line.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct QipLine {
    query_id: String,
    query: String,
    item_id: String,
    title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    product_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    brand: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    color: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gender: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<RelevanceLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    specificity: Option<Specificity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grammar: Option<String>,
}

impl QipLine {
    fn into_record(self) -> std::result::Result<QipRecord, String> {
        for (name, value) in [
            ("query_id", &self.query_id),
            ("query", &self.query),
            ("item_id", &self.item_id),
            ("title", &self.title),
        ] {
            if value.trim().is_empty() {
                return Err(format!("field `{name}` must be non-empty"));
            }
        }
        Ok(QipRecord {
            query: QueryRecord {
                query_id: self.query_id,
                text: self.query,
                specificity: self.specificity,
                grammar: self.grammar,
            },
            item: ItemRecord {
                item_id: self.item_id,
                title: self.title,
                product_type: self.product_type,
                brand: self.brand,
                color: self.color,
                gender: self.gender,
                description: self.description,
            },
            label: self.label,
        })
    }

    fn from_record(record: &QipRecord) -> Self {
        QipLine {
            query_id: record.query.query_id.clone(),
            query: record.query.text.clone(),
            item_id: record.item.item_id.clone(),
            title: record.item.title.clone(),
            product_type: record.item.product_type.clone(),
            brand: record.item.brand.clone(),
            color: record.item.color.clone(),
            gender: record.item.gender.clone(),
            description: record.item.description.clone(),
            label: record.label,
            specificity: record.query.specificity,
            grammar: record.query.grammar.clone(),
        }
    }
}

fn parse_qip_line(line: &str) -> std::result::Result<QipRecord, String> {
    serde_json::from_str::<QipLine>(line)
        .map_err(|e| e.to_string())?
        .into_record()
}

/// Reads `qips.jsonl`. Malformed lines are skipped and reported by line number.
pub fn ingest_qips(path: &Path) -> Result<Parsed<QipRecord>> {
    jsonl::read_file(path, parse_qip_line)
}

pub fn parse_qips<R: Read>(reader: R) -> Result<Parsed<QipRecord>> {
    jsonl::parse_lines(reader, parse_qip_line).map_err(|e| Error::io("<reader>", e))
}

pub fn write_qips<W: std::io::Write>(writer: W, records: &[QipRecord]) -> Result<()> {
    let lines: Vec<QipLine> = records.iter().map(QipLine::from_record).collect();
    jsonl::write_records(writer, &lines)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRound {
    pub query_id: String,
    pub item_id: String,
    pub round: u8,
    pub label: RelevanceLabel,
    pub source: String,
}

fn parse_annotation_line(line: &str) -> std::result::Result<AnnotationRound, String> {
    let round: AnnotationRound = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if !(1..=3).contains(&round.round) {
        return Err(format!("round must be 1, 2 or 3, got {}", round.round));
    }
    if round.query_id.is_empty() || round.item_id.is_empty() {
        return Err("query_id and item_id must be non-empty".into());
    }
    Ok(round)
}

pub fn ingest_annotations(path: &Path) -> Result<Parsed<AnnotationRound>> {
    jsonl::read_file(path, parse_annotation_line)
}

pub fn parse_annotations<R: Read>(reader: R) -> Result<Parsed<AnnotationRound>> {
    jsonl::parse_lines(reader, parse_annotation_line).map_err(|e| Error::io("<reader>", e))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedQip {
    pub query_id: String,
    pub item_id: String,
    pub final_label: RelevanceLabel,
    pub rounds_used: u8,
    #[serde(rename = "adjudicated")]
    pub adjudicated_flag: bool,
}

impl ResolvedQip {
    pub fn key(&self) -> QipKey {
        QipKey::new(&self.query_id, &self.item_id)
    }
}

/// Resolves the final label of one QIP from its annotation rounds.
pub fn resolve_majority(rounds: &[AnnotationRound]) -> Result<ResolvedQip> {
    let first = rounds.first().ok_or(Error::Empty("annotation rounds"))?;
    let protocol = |message: String| Error::Protocol {
        query_id: first.query_id.clone(),
        item_id: first.item_id.clone(),
        message,
    };

    let mut by_round: [Option<RelevanceLabel>; 3] = [None; 3];
    for r in rounds {
        if r.query_id != first.query_id || r.item_id != first.item_id {
            return Err(protocol(format!(
                "rounds mix pairs ({}, {})",
                r.query_id, r.item_id
            )));
        }
        if !(1..=3).contains(&r.round) {
            return Err(protocol(format!("invalid round {}", r.round)));
        }
        let slot = &mut by_round[usize::from(r.round - 1)];
        if slot.is_some() {
            return Err(protocol(format!("duplicate round {}", r.round)));
        }
        *slot = Some(r.label);
    }

    let r1 = by_round[0].ok_or_else(|| protocol("missing round 1".into()))?;
    let r2 = by_round[1].ok_or_else(|| protocol("missing round 2".into()))?;
    let resolved = |final_label, rounds_used, adjudicated_flag| ResolvedQip {
        query_id: first.query_id.clone(),
        item_id: first.item_id.clone(),
        final_label,
        rounds_used,
        adjudicated_flag,
    };

    match (r1 == r2, by_round[2]) {
        (true, None) => Ok(resolved(r1, 2, false)),
        (true, Some(_)) => Err(protocol(
            "round 3 present although rounds 1 and 2 agree".into(),
        )),
        (false, None) => Err(protocol(
            "unresolved: rounds 1 and 2 disagree and round 3 is missing".into(),
        )),
        (false, Some(r3)) => {
            if r3 == r1 || r3 == r2 {
                Ok(resolved(r3, 3, false))
            } else {
                Ok(resolved(r3, 3, true))
            }
        }
    }
}

/// Groups annotations by pair (first-appearance order) and resolves each.
///
/// Returns the resolved pairs and one error per pair that violates the
/// protocol.
pub fn resolve_all(rounds: &[AnnotationRound]) -> (Vec<ResolvedQip>, Vec<Error>) {
    let mut groups: IndexMap<(&str, &str), Vec<AnnotationRound>> = IndexMap::new();
    for r in rounds {
        groups
            .entry((r.query_id.as_str(), r.item_id.as_str()))
            .or_default()
            .push(r.clone());
    }
    let mut resolved = Vec::with_capacity(groups.len());
    let mut errors = Vec::new();
    for group in groups.values() {
        match resolve_majority(group) {
            Ok(r) => resolved.push(r),
            Err(e) => errors.push(e),
        }
    }
    (resolved, errors)
}

/// Confusion of one annotation round against the resolved labels
/// (rows = resolved label, columns = that round's label).
///
/// Pairs without a label in `round` are skipped.
pub fn round_vs_resolved(
    rounds: &[AnnotationRound],
    resolved: &[ResolvedQip],
    round: u8,
) -> ConfusionMatrix3 {
    let finals: HashMap<(&str, &str), RelevanceLabel> = resolved
        .iter()
        .map(|r| ((r.query_id.as_str(), r.item_id.as_str()), r.final_label))
        .collect();
    let mut cm = ConfusionMatrix3::default();
    for r in rounds.iter().filter(|r| r.round == round) {
        if let Some(gold) = finals.get(&(r.query_id.as_str(), r.item_id.as_str())) {
            cm.record(*gold, r.label);
        }
    }
    cm
}

/// Label counts with percentages truncated to two decimals.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LabelDistribution {
    /// Indexed by label value.
    pub counts: [u64; 3],
    pub total: u64,
    /// Percentages in hundredths of a percent, truncated.
    pub percent_hundredths: [u64; 3],
}

impl LabelDistribution {
    pub fn from_counts(counts: [u64; 3]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::Empty("label collection"));
        }
        let percent_hundredths = counts.map(|c| {
            // Exact integer truncation; u128 avoids overflow for huge corpora.
            (u128::from(c) * 10_000 / u128::from(total)) as u64
        });
        Ok(LabelDistribution {
            counts,
            total,
            percent_hundredths,
        })
    }

    pub fn count(&self, label: RelevanceLabel) -> u64 {
        self.counts[label.index()]
    }

    pub fn percentage(&self, label: RelevanceLabel) -> f64 {
        self.percent_hundredths[label.index()] as f64 / 100.0
    }

    /// `"64.19"`-style rendering.
    pub fn percentage_text(&self, label: RelevanceLabel) -> String {
        let h = self.percent_hundredths[label.index()];
        format!("{}.{:02}", h / 100, h % 100)
    }
}

pub fn label_distribution<I>(labels: I) -> Result<LabelDistribution>
where
    I: IntoIterator<Item = RelevanceLabel>,
{
    let mut counts = [0u64; 3];
    for label in labels {
        counts[label.index()] += 1;
    }
    LabelDistribution::from_counts(counts)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetStats {
    pub unique_queries: usize,
    pub unique_items: usize,
    pub queries_per_item: f64,
    pub items_per_query: f64,
}

/// Unique query/item counts and mean pair density. Duplicate pairs count once;
/// means are reported as 0 when there are no pairs.
pub fn dataset_stats<'a, I>(pairs: I) -> DatasetStats
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut queries = HashSet::new();
    let mut items = HashSet::new();
    let mut seen = HashSet::new();
    for (q, i) in pairs {
        if seen.insert((q, i)) {
            queries.insert(q);
            items.insert(i);
        }
    }
    let n = seen.len() as f64;
    let ratio = |count: usize| if count == 0 { 0.0 } else { n / count as f64 };
    DatasetStats {
        unique_queries: queries.len(),
        unique_items: items.len(),
        queries_per_item: ratio(items.len()),
        items_per_query: ratio(queries.len()),
    }
}

pub fn qip_stats(records: &[QipRecord]) -> DatasetStats {
    dataset_stats(
        records
            .iter()
            .map(|r| (r.query.query_id.as_str(), r.item.item_id.as_str())),
    )
}

/// Keeps at most `max` queries per item, in input order. Used to build
/// datasets with bounded queries-per-item density.
pub fn limit_queries_per_item(records: &[QipRecord], max: usize) -> Vec<QipRecord> {
    let mut per_item: HashMap<&str, usize> = HashMap::new();
    records
        .iter()
        .filter(|r| {
            let n = per_item.entry(r.item.item_id.as_str()).or_default();
            *n += 1;
            *n <= max
        })
        .cloned()
        .collect()
}
