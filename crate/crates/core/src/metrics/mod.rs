//! Classification, ranking and significance metrics.

mod classification;
mod ranking;
pub mod special;
mod ttest;

pub use classification::{f1_scores, ConfusionMatrix3, F1Report};
pub use ranking::{dcg_at_k, ideal_dcg_at_k, ndcg_at_k, RankedLabels};
pub use ttest::{paired_t_test, verdict, TestResult, Verdict, DEFAULT_ALPHA};
