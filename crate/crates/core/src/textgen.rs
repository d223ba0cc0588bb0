//! Judge input rendering and seeded training-time augmentations.
//!
//! Rendered inputs use a fixed line template (LF separated, lowercase keys,
//! one space after the colon); absent fields drop their whole line:
//!
//! ```text
//! query: {query}
//! title: {title}
//! product type: {product_type}
//! brand: {brand}
//! color: {color}
//! gender: {gender}
//! description: {description}
//! ```

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::dataset::{ItemRecord, QipRecord, QueryRecord};
use crate::error::{Error, Result};
use crate::label::RelevanceLabel;
use crate::rng::SeedStream;

/// Which item attributes a judge sees.
///
/// Variant 1 omits the description. Variants 2 and 3 render identically and
/// differ only in dataset composition (see
/// [`crate::dataset::limit_queries_per_item`]).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum InputVariant {
    TitleAttributes = 1,
    WithDescription = 2,
    WithDescriptionDense = 3,
}

impl InputVariant {
    pub fn new(id: u8) -> Result<Self> {
        match id {
            1 => Ok(InputVariant::TitleAttributes),
            2 => Ok(InputVariant::WithDescription),
            3 => Ok(InputVariant::WithDescriptionDense),
            other => Err(Error::invalid(
                "variant",
                format!("expected 1, 2 or 3, got {other}"),
            )),
        }
    }

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn include_description(self) -> bool {
        !matches!(self, InputVariant::TitleAttributes)
    }
}

impl TryFrom<u8> for InputVariant {
    type Error = Error;

    fn try_from(id: u8) -> Result<Self> {
        InputVariant::new(id)
    }
}

impl From<InputVariant> for u8 {
    fn from(v: InputVariant) -> u8 {
        v.id()
    }
}

/// Item lines of the rendered input (everything after the query line).
pub fn render_item(item: &ItemRecord, variant: InputVariant) -> String {
    let mut out = format!("title: {}", item.title);
    let optional = [
        ("product type", &item.product_type),
        ("brand", &item.brand),
        ("color", &item.color),
        ("gender", &item.gender),
    ];
    for (key, value) in optional {
        if let Some(value) = value {
            out.push('\n');
            out.push_str(key);
            out.push_str(": ");
            out.push_str(value);
        }
    }
    if variant.include_description() {
        if let Some(description) = &item.description {
            out.push_str("\ndescription: ");
            out.push_str(description);
        }
    }
    out
}

pub fn render_input(query: &QueryRecord, item: &ItemRecord, variant: InputVariant) -> String {
    format!("query: {}\n{}", query.text, render_item(item, variant))
}

/// Attributes that feature dropout may remove.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropField {
    ProductType,
    Description,
    Brand,
}

impl DropField {
    /// Draw order within one item's stream.
    pub const ORDER: [DropField; 3] = [
        DropField::ProductType,
        DropField::Description,
        DropField::Brand,
    ];

    fn slot(self, item: &mut ItemRecord) -> &mut Option<String> {
        match self {
            DropField::ProductType => &mut item.product_type,
            DropField::Description => &mut item.description,
            DropField::Brand => &mut item.brand,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationConfig {
    pub feature_dropout_rates: BTreeMap<DropField, f64>,
    pub random_negative_rate: f64,
    pub query_noise_rate: f64,
    pub seed: u64,
}

fn check_rate(field: &'static str, rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid(field, format!("rate {rate} outside [0, 1]")));
    }
    Ok(())
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        for rate in self.feature_dropout_rates.values() {
            check_rate("feature_dropout_rates", *rate)?;
        }
        check_rate("random_negative_rate", self.random_negative_rate)?;
        check_rate("query_noise_rate", self.query_noise_rate)
    }

    pub fn dropout_rate(&self, field: DropField) -> f64 {
        self.feature_dropout_rates
            .get(&field)
            .copied()
            .unwrap_or(0.0)
    }

    pub fn is_identity(&self) -> bool {
        self.feature_dropout_rates.values().all(|r| *r == 0.0)
            && self.random_negative_rate == 0.0
            && self.query_noise_rate == 0.0
    }
}

/// Independently removes product type, description and brand with their
/// configured rates. One uniform is drawn per field, in
/// [`DropField::ORDER`], from the `(seed, "feature_dropout", qip_index)`
/// stream, whether or not the field is present.
pub fn apply_feature_dropout(
    item: &ItemRecord,
    config: &AugmentationConfig,
    qip_index: u64,
) -> ItemRecord {
    let mut stream = SeedStream::new(config.seed, "feature_dropout", qip_index);
    let mut out = item.clone();
    for field in DropField::ORDER {
        let u = stream.next_f64();
        if u < config.dropout_rate(field) {
            *field.slot(&mut out) = None;
        }
    }
    out
}

/// Character-level typo noise.
///
/// Walks the characters of `query`; at each position, with probability
/// `rate`, applies one of: swap with the next character, delete, or
/// duplicate (chosen uniformly). A swap consumes both positions. Deleting
/// the only remaining character is suppressed, so non-empty input never
/// becomes empty.
pub fn perturb_query(query: &str, rate: f64, seed: u64, index: u64) -> String {
    if rate <= 0.0 {
        return query.to_owned();
    }
    let chars: Vec<char> = query.chars().collect();
    let n = chars.len();
    let mut stream = SeedStream::new(seed, "query_noise", index);
    let mut out = String::with_capacity(query.len() + 4);
    let mut i = 0;
    while i < n {
        let c = chars[i];
        if stream.next_f64() < rate {
            match stream.below(3) {
                0 if i + 1 < n => {
                    out.push(chars[i + 1]);
                    out.push(c);
                    i += 2;
                    continue;
                }
                0 => out.push(c),
                1 => {
                    if out.is_empty() && i + 1 == n {
                        out.push(c);
                    }
                }
                _ => {
                    out.push(c);
                    out.push(c);
                }
            }
        } else {
            out.push(c);
        }
        i += 1;
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RandomNegatives {
    pub pairs: Vec<QipRecord>,
    pub requested: usize,
    /// Draws abandoned because every pool item was already paired with the query.
    pub skipped: usize,
}

/// Emits `floor(rate × |qips|)` synthetic pairs labeled irrelevant.
///
/// Draw `j` uses the `(seed, "random_negative", j)` stream: a query is
/// picked uniformly from `qips`, then an item uniformly from the pool
/// items not yet paired with that query (observed or synthetic).
pub fn sample_random_negatives(
    qips: &[QipRecord],
    pool: &[ItemRecord],
    rate: f64,
    seed: u64,
) -> Result<RandomNegatives> {
    check_rate("random_negative_rate", rate)?;
    if pool.is_empty() {
        return Err(Error::Empty("item pool"));
    }
    let requested = (rate * qips.len() as f64 + 1e-9).floor() as usize;
    let mut result = RandomNegatives {
        requested,
        ..Default::default()
    };
    if requested == 0 {
        return Ok(result);
    }

    let mut seen_ids = HashSet::new();
    let pool: Vec<&ItemRecord> = pool
        .iter()
        .filter(|i| seen_ids.insert(i.item_id.as_str()))
        .collect();
    let mut paired: HashSet<(String, String)> = qips
        .iter()
        .map(|r| (r.query.query_id.clone(), r.item.item_id.clone()))
        .collect();

    for draw in 0..requested {
        let mut stream = SeedStream::new(seed, "random_negative", draw as u64);
        let query = &qips[stream.below(qips.len() as u64) as usize].query;
        let candidates: Vec<&ItemRecord> = pool
            .iter()
            .copied()
            .filter(|item| !paired.contains(&(query.query_id.clone(), item.item_id.clone())))
            .collect();
        if candidates.is_empty() {
            result.skipped += 1;
            continue;
        }
        let item = candidates[stream.below(candidates.len() as u64) as usize];
        paired.insert((query.query_id.clone(), item.item_id.clone()));
        result.pairs.push(QipRecord {
            query: query.clone(),
            item: item.clone(),
            label: Some(RelevanceLabel::Irrelevant),
        });
    }
    Ok(result)
}
