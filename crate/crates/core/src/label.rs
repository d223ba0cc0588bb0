use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Graded 3-point relevance of an item to a query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub enum RelevanceLabel {
    Irrelevant = 0,
    Related = 1,
    Relevant = 2,
}

impl RelevanceLabel {
    pub const ALL: [RelevanceLabel; 3] = [
        RelevanceLabel::Irrelevant,
        RelevanceLabel::Related,
        RelevanceLabel::Relevant,
    ];

    pub fn new(value: i64) -> Result<Self> {
        match value {
            0 => Ok(RelevanceLabel::Irrelevant),
            1 => Ok(RelevanceLabel::Related),
            2 => Ok(RelevanceLabel::Relevant),
            other => Err(Error::InvalidLabel(other)),
        }
    }

    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Self {
        Self::ALL[index]
    }

    /// Exponential graded gain, `2^label - 1`.
    pub fn gain(self) -> f64 {
        match self {
            RelevanceLabel::Irrelevant => 0.0,
            RelevanceLabel::Related => 1.0,
            RelevanceLabel::Relevant => 3.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RelevanceLabel::Irrelevant => "irrelevant",
            RelevanceLabel::Related => "related",
            RelevanceLabel::Relevant => "relevant",
        }
    }
}

impl TryFrom<i64> for RelevanceLabel {
    type Error = Error;

    fn try_from(value: i64) -> Result<Self> {
        RelevanceLabel::new(value)
    }
}

impl From<RelevanceLabel> for u8 {
    fn from(label: RelevanceLabel) -> u8 {
        label.value()
    }
}

impl fmt::Display for RelevanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// `(query_id, item_id)` identity of a query–item pair.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QipKey {
    pub query_id: String,
    pub item_id: String,
}

impl QipKey {
    pub fn new(query_id: impl Into<String>, item_id: impl Into<String>) -> Self {
        QipKey {
            query_id: query_id.into(),
            item_id: item_id.into(),
        }
    }
}

impl fmt::Display for QipKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.query_id, self.item_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip_through_json_as_integers() {
        for label in RelevanceLabel::ALL {
            let json = serde_json::to_string(&label).unwrap();
            assert_eq!(json, label.value().to_string());
            assert_eq!(
                serde_json::from_str::<RelevanceLabel>(&json).unwrap(),
                label
            );
        }
        assert!(serde_json::from_str::<RelevanceLabel>("3").is_err());
        assert!(serde_json::from_str::<RelevanceLabel>("-1").is_err());
    }

    #[test]
    fn ordering_and_gain() {
        assert!(RelevanceLabel::Relevant > RelevanceLabel::Related);
        assert!(RelevanceLabel::Related > RelevanceLabel::Irrelevant);
        assert_eq!(
            RelevanceLabel::Relevant.gain(),
            3.0 * RelevanceLabel::Related.gain()
        );
    }
}
