//! Uniform judging interface producing a 3-class relevance verdict per QIP.
//!
//! Implementations:
//! * [`OracleJudge`] echoes fixture labels (tests, ground-truth replays).
//! * [`ReplayJudge`] answers only from a [`VerdictCache`]; [`CachedJudge`]
//!   fronts any judge with the same cache.
//! * [`RemoteJudge`] calls an HTTP service, either the native `/judge`
//!   protocol or a chat-completions endpoint prompted with
//!   [`PROMPT_TEMPLATE`].
//!
//! [`judge_one`] and [`judge_batch`] add retries for transient transport
//! failures; batches run with bounded parallelism and keep input order.

mod batch;
mod cache;
mod remote;
mod retry;

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use batch::{
    judge_batch, judge_batch_with_progress, BatchOptions, BatchProgress, ProgressSnapshot,
};
pub use cache::{cache_key, CachedJudge, ReplayJudge, VerdictCache};
pub use remote::{
    HttpTransport, RemoteJudge, RemoteProtocol, Transport, TransportError, PROMPT_TEMPLATE,
    PROMPT_TEMPLATE_VERSION,
};
pub use retry::{RecordingSleeper, RetryPolicy, Sleeper, ThreadSleeper};

use crate::dataset::QipRecord;
use crate::label::{QipKey, RelevanceLabel};
use crate::rng;
use crate::textgen::{render_input, InputVariant};

/// Class probabilities `[p0, p1, p2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct JudgeScores([f64; 3]);

impl JudgeScores {
    pub fn new(p: [f64; 3]) -> Result<Self, String> {
        if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(format!("scores {p:?} must lie in [0, 1]"));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(format!("scores {p:?} sum to {sum}, expected 1"));
        }
        Ok(JudgeScores(p))
    }

    pub fn probabilities(&self) -> [f64; 3] {
        self.0
    }

    /// Most probable label; ties go to the higher label.
    pub fn argmax(&self) -> RelevanceLabel {
        let mut best = 0;
        for i in 1..3 {
            if self.0[i] >= self.0[best] {
                best = i;
            }
        }
        RelevanceLabel::from_index(best)
    }
}

impl TryFrom<[f64; 3]> for JudgeScores {
    type Error = String;

    fn try_from(p: [f64; 3]) -> Result<Self, String> {
        JudgeScores::new(p)
    }
}

impl From<JudgeScores> for [f64; 3] {
    fn from(s: JudgeScores) -> [f64; 3] {
        s.0
    }
}

/// One judge's decision for one QIP. This is the `verdicts.jsonl` line format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub query_id: String,
    pub item_id: String,
    pub judge_id: String,
    pub label: RelevanceLabel,
    pub scores: Option<JudgeScores>,
    pub raw: Option<String>,
    pub latency_ms: u64,
}

impl JudgeVerdict {
    pub fn key(&self) -> QipKey {
        QipKey::new(&self.query_id, &self.item_id)
    }

    /// Label must equal the argmax of the scores when scores are present.
    pub fn is_consistent(&self) -> bool {
        self.scores.is_none_or(|s| s.argmax() == self.label)
    }
}

/// What a judge is asked about.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub query_id: String,
    pub item_id: String,
    pub query: String,
    /// Full rendered input (query line followed by item lines).
    pub rendered: String,
}

impl JudgeRequest {
    pub fn from_qip(record: &QipRecord, variant: InputVariant) -> Self {
        JudgeRequest {
            query_id: record.query.query_id.clone(),
            item_id: record.item.item_id.clone(),
            query: record.query.text.clone(),
            rendered: render_input(&record.query, &record.item, variant),
        }
    }

    /// The item lines of the rendered input.
    pub fn item_text(&self) -> &str {
        self.rendered.split_once('\n').map_or("", |(_, rest)| rest)
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum JudgeError {
    #[error("rendered input is empty")]
    EmptyInput,
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport {
        retryable: bool,
        attempts: u32,
        message: String,
    },
    #[error("unparseable model output: {raw:?}")]
    Unparseable { raw: String },
    #[error("cache miss for key {key}")]
    Miss { key: String },
    #[error("no fixture label for ({query_id}, {item_id})")]
    UnknownPair { query_id: String, item_id: String },
    #[error("invalid response: {0}")]
    InvalidResponse(String),
}

impl JudgeError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            JudgeError::Transport {
                retryable: true,
                ..
            }
        )
    }

    pub fn attempts(&self) -> u32 {
        match self {
            JudgeError::Transport { attempts, .. } => *attempts,
            _ => 1,
        }
    }
}

/// A single successful call.
#[derive(Clone, Debug, PartialEq)]
pub struct Judgment {
    pub verdict: JudgeVerdict,
    pub cached: bool,
}

/// A judgment plus the number of attempts it took.
#[derive(Clone, Debug, PartialEq)]
pub struct Judged {
    pub verdict: JudgeVerdict,
    pub attempts: u32,
    pub cached: bool,
}

pub trait Judge: Send + Sync {
    fn id(&self) -> &str;

    /// Makes one attempt; retries are the caller's business.
    fn judge(&self, request: &JudgeRequest) -> Result<Judgment, JudgeError>;

    /// Version tag of the prompt template; part of the cache key.
    fn template_version(&self) -> &str {
        "none"
    }

    /// Single-flight judges are never called concurrently.
    fn single_flight(&self) -> bool {
        false
    }
}

/// Judges one input, retrying retryable transport failures per `retry`.
pub fn judge_one(
    judge: &dyn Judge,
    request: &JudgeRequest,
    retry: &RetryPolicy,
    sleeper: &dyn Sleeper,
) -> Result<Judged, JudgeError> {
    if request.rendered.trim().is_empty() {
        return Err(JudgeError::EmptyInput);
    }
    let max_attempts = retry.max_attempts.max(1);
    let mut attempt = 1;
    loop {
        match judge.judge(request) {
            Ok(judgment) => {
                return Ok(Judged {
                    verdict: judgment.verdict,
                    attempts: attempt,
                    cached: judgment.cached,
                })
            }
            Err(err) if err.is_retryable() && attempt < max_attempts => {
                log::debug!("attempt {attempt} for {} failed: {err}", request.query_id);
                sleeper.sleep_ms(retry.delay_ms(attempt));
                attempt += 1;
            }
            Err(JudgeError::Transport {
                retryable, message, ..
            }) => {
                return Err(JudgeError::Transport {
                    retryable,
                    attempts: attempt,
                    message,
                })
            }
            Err(other) => return Err(other),
        }
    }
}

/// Parses a model's answer into a label.
///
/// Looks at the first non-blank line only, case-insensitively. Tokens are
/// whitespace separated with surrounding punctuation stripped (hyphens are
/// kept, so `relevant-ish` is not a match); the first token that is one of
/// `0`/`1`/`2`/`irrelevant`/`related`/`relevant` wins.
pub fn parse_label(raw: &str) -> Result<RelevanceLabel, JudgeError> {
    let first_line = raw.trim_start().lines().next().unwrap_or("");
    for token in first_line.split_whitespace() {
        let token = token
            .trim_matches(|c: char| !c.is_alphanumeric() && c != '-')
            .to_lowercase();
        let label = match token.as_str() {
            "0" | "irrelevant" => RelevanceLabel::Irrelevant,
            "1" | "related" => RelevanceLabel::Related,
            "2" | "relevant" => RelevanceLabel::Relevant,
            _ => continue,
        };
        return Ok(label);
    }
    Err(JudgeError::Unparseable {
        raw: raw.to_owned(),
    })
}

/// Returns fixture labels. Optionally sleeps a pseudo-random few hundred
/// microseconds per call to shuffle completion order in concurrency tests.
#[derive(Clone, Debug)]
pub struct OracleJudge {
    id: String,
    labels: HashMap<QipKey, RelevanceLabel>,
    jitter_seed: Option<u64>,
}

impl OracleJudge {
    pub fn new(id: impl Into<String>, labels: HashMap<QipKey, RelevanceLabel>) -> Self {
        OracleJudge {
            id: id.into(),
            labels,
            jitter_seed: None,
        }
    }

    pub fn from_records<'a, I>(id: impl Into<String>, records: I) -> Self
    where
        I: IntoIterator<Item = &'a QipRecord>,
    {
        let labels = records
            .into_iter()
            .filter_map(|r| r.label.map(|l| (r.key(), l)))
            .collect();
        OracleJudge::new(id, labels)
    }

    pub fn with_jitter(mut self, seed: u64) -> Self {
        self.jitter_seed = Some(seed);
        self
    }
}

impl Judge for OracleJudge {
    fn id(&self) -> &str {
        &self.id
    }

    fn judge(&self, request: &JudgeRequest) -> Result<Judgment, JudgeError> {
        let key = QipKey::new(&request.query_id, &request.item_id);
        let label = *self
            .labels
            .get(&key)
            .ok_or_else(|| JudgeError::UnknownPair {
                query_id: key.query_id.clone(),
                item_id: key.item_id.clone(),
            })?;
        if let Some(seed) = self.jitter_seed {
            let micros =
                rng::derive_seed(seed, &request.query_id, rng::fnv1a64(&request.item_id)) % 500;
            std::thread::sleep(Duration::from_micros(micros));
        }
        Ok(Judgment {
            verdict: JudgeVerdict {
                query_id: key.query_id,
                item_id: key.item_id,
                judge_id: self.id.clone(),
                label,
                scores: None,
                raw: None,
                latency_ms: 0,
            },
            cached: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use RelevanceLabel::*;

    fn request(q: &str, i: &str) -> JudgeRequest {
        JudgeRequest {
            query_id: q.into(),
            item_id: i.into(),
            query: "red shoes".into(),
            rendered: "query: red shoes\ntitle: Nike".into(),
        }
    }

    #[test]
    fn parse_label_examples() {
        assert_eq!(parse_label("2").unwrap(), Relevant);
        assert_eq!(
            parse_label(" Related\n(the item is close)").unwrap(),
            Related
        );
        assert!(matches!(
            parse_label("maybe relevant-ish"),
            Err(JudgeError::Unparseable { .. })
        ));
    }

    #[test]
    fn parse_label_edge_cases() {
        assert_eq!(parse_label("IRRELEVANT").unwrap(), Irrelevant);
        assert_eq!(parse_label("Label: 1.").unwrap(), Related);
        assert_eq!(parse_label("**0**").unwrap(), Irrelevant);
        assert_eq!(parse_label("\n\n  relevant, clearly").unwrap(), Relevant);
        assert!(parse_label("").is_err());
        assert!(parse_label("3").is_err());
        assert!(parse_label("unsure\n2").is_err());
        assert!(parse_label("irrelevantly").is_err());
    }

    #[test]
    fn scores_validation_and_argmax() {
        assert!(JudgeScores::new([0.5, 0.5, 0.1]).is_err());
        assert!(JudgeScores::new([1.2, -0.1, -0.1]).is_err());
        assert_eq!(
            JudgeScores::new([0.2, 0.3, 0.5]).unwrap().argmax(),
            Relevant
        );
        assert_eq!(JudgeScores::new([0.5, 0.5, 0.0]).unwrap().argmax(), Related);
        assert_eq!(
            JudgeScores::new([0.4, 0.2, 0.4]).unwrap().argmax(),
            Relevant
        );
        assert_eq!(
            JudgeScores::new([1.0, 0.0, 0.0]).unwrap().argmax(),
            Irrelevant
        );
        assert!(serde_json::from_str::<JudgeScores>("[0.9, 0.9, 0.9]").is_err());
    }

    #[test]
    fn oracle_echoes_fixture() {
        let judge = OracleJudge::new(
            "oracle",
            HashMap::from([(QipKey::new("q1", "i1"), Relevant)]),
        );
        let out = judge_one(
            &judge,
            &request("q1", "i1"),
            &RetryPolicy::default(),
            &ThreadSleeper,
        )
        .unwrap();
        assert_eq!(out.verdict.label, Relevant);
        assert_eq!(out.attempts, 1);
        assert!(matches!(
            judge_one(
                &judge,
                &request("q1", "i9"),
                &RetryPolicy::default(),
                &ThreadSleeper
            ),
            Err(JudgeError::UnknownPair { .. })
        ));
    }

    #[test]
    fn empty_input_rejected() {
        let judge = OracleJudge::new("oracle", HashMap::new());
        let mut req = request("q1", "i1");
        req.rendered = "  ".into();
        assert_eq!(
            judge_one(&judge, &req, &RetryPolicy::default(), &ThreadSleeper),
            Err(JudgeError::EmptyInput)
        );
    }

    #[test]
    fn item_text_strips_query_line() {
        assert_eq!(request("q", "i").item_text(), "title: Nike");
    }

    #[test]
    fn verdict_line_format() {
        let v = JudgeVerdict {
            query_id: "q1".into(),
            item_id: "i1".into(),
            judge_id: "j".into(),
            label: Related,
            scores: None,
            raw: None,
            latency_ms: 0,
        };
        assert_eq!(
            serde_json::to_string(&v).unwrap(),
            r#"{"query_id":"q1","item_id":"i1","judge_id":"j","label":1,"scores":null,"raw":null,"latency_ms":0}"#
        );
    }
}
