//! Offline evaluation of query–item relevance judgments.
//!
//! The crate covers the whole loop used to decide whether an automated
//! relevance judge can stand in for human annotators:
//!
//! * [`dataset`]: ingest query–item pairs (QIPs) and multi-round annotations,
//!   resolve final labels by majority vote, report corpus statistics.
//! * [`textgen`]: render the text a judge sees, plus seeded training-time
//!   augmentations (feature dropout, query noise, random negatives).
//! * [`judge`]: a uniform judging interface with oracle, replay/cache and
//!   remote implementations, and a bounded-parallel batch executor.
//! * [`metrics`]: confusion matrices and f1, DCG/nDCG@k, the paired t-test.
//! * [`experiment`]: control-vs-variation re-enactments and human/model
//!   agreement matrices.
//! * [`analysis`]: cross-judge misprediction overlap and segment breakdowns.
//! * [`lab`]: a small 3-class classifier with LoRA adapters for checking
//!   adapter math, gradients and the plateau scheduler.

pub mod analysis;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod jsonl;
pub mod judge;
pub mod lab;
pub mod label;
pub mod metrics;
pub mod rng;
pub mod textgen;

pub use error::{Error, Result};
pub use label::{QipKey, RelevanceLabel};
pub use metrics::Verdict;
