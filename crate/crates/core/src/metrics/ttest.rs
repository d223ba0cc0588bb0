use std::fmt;

use serde::{Deserialize, Serialize};

use super::special::student_t_two_sided_p;
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Outcome of a two-sided paired t-test over per-query differences.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TestResult {
    pub t_statistic: f64,
    pub p_value: f64,
    pub mean_diff: f64,
    pub n: usize,
    /// Set when all differences are equal and non-zero (sd = 0); then
    /// `p = 0` and `t = ±∞`.
    pub degenerate: bool,
}

/// Two-sided paired t-test on differences (variation − control).
///
/// Uses the sample standard deviation (n − 1) and Student's t with n − 1
/// degrees of freedom.
pub fn paired_t_test(diffs: &[f64]) -> Result<TestResult> {
    let n = diffs.len();
    if n < 2 {
        return Err(Error::invalid(
            "diffs",
            format!("paired t-test needs n >= 2, got {n}"),
        ));
    }
    if let Some(bad) = diffs.iter().find(|d| !d.is_finite()) {
        return Err(Error::invalid(
            "diffs",
            format!("non-finite difference {bad}"),
        ));
    }
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;

    let first = diffs[0];
    if diffs.iter().all(|&d| d == first) {
        return Ok(if first == 0.0 {
            TestResult {
                t_statistic: 0.0,
                p_value: 1.0,
                mean_diff: 0.0,
                n,
                degenerate: false,
            }
        } else {
            TestResult {
                t_statistic: f64::INFINITY.copysign(first),
                p_value: 0.0,
                mean_diff: first,
                n,
                degenerate: true,
            }
        });
    }

    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let se = (var / nf).sqrt();
    let t = mean / se;
    Ok(TestResult {
        t_statistic: t,
        p_value: student_t_two_sided_p(t, nf - 1.0),
        mean_diff: mean,
        n,
        degenerate: false,
    })
}

/// Significance verdict of the variation against the control.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "+")]
    Better,
    #[serde(rename = "=")]
    Neutral,
    #[serde(rename = "-")]
    Worse,
}

impl Verdict {
    /// Row/column order used by agreement matrices: `+`, `=`, `-`.
    pub const ALL: [Verdict; 3] = [Verdict::Better, Verdict::Neutral, Verdict::Worse];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Verdict::Better => "+",
            Verdict::Neutral => "=",
            Verdict::Worse => "-",
        }
    }

    pub fn mirrored(self) -> Verdict {
        match self {
            Verdict::Better => Verdict::Worse,
            Verdict::Neutral => Verdict::Neutral,
            Verdict::Worse => Verdict::Better,
        }
    }

    pub fn parse(symbol: &str) -> Option<Verdict> {
        match symbol.trim() {
            "+" => Some(Verdict::Better),
            "=" => Some(Verdict::Neutral),
            "-" | "\u{2212}" => Some(Verdict::Worse),
            _ => None,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// `+` / `-` when `p < alpha` (strict) in the direction of the mean
/// difference, `=` otherwise.
pub fn verdict(result: &TestResult, alpha: f64) -> Verdict {
    if result.p_value < alpha {
        if result.mean_diff > 0.0 {
            return Verdict::Better;
        }
        if result.mean_diff < 0.0 {
            return Verdict::Worse;
        }
    }
    Verdict::Neutral
}
