use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponential backoff: the wait after failed attempt `n` is
/// `base_delay_ms × backoff_factor^(n−1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: f64,
    pub backoff_factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay_ms: 200.0,
            backoff_factor: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.max_attempts < 1 {
            return Err(Error::invalid("retry.max_attempts", "must be at least 1"));
        }
        if !(self.base_delay_ms >= 0.0 && self.base_delay_ms.is_finite()) {
            return Err(Error::invalid(
                "retry.base_delay_ms",
                "must be a non-negative number",
            ));
        }
        if !(self.backoff_factor > 1.0 && self.backoff_factor.is_finite()) {
            return Err(Error::invalid(
                "retry.backoff_factor",
                "must be greater than 1",
            ));
        }
        Ok(())
    }

    /// Delay in milliseconds after failed attempt `attempt` (1-based).
    pub fn delay_ms(&self, attempt: u32) -> f64 {
        self.base_delay_ms * self.backoff_factor.powi(attempt.saturating_sub(1) as i32)
    }
}

/// Clock used between retries; injectable so tests can inspect delays.
pub trait Sleeper: Send + Sync {
    fn sleep_ms(&self, delay_ms: f64);
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep_ms(&self, delay_ms: f64) {
        if delay_ms > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(delay_ms / 1000.0));
        }
    }
}

/// Records requested delays without sleeping.
#[derive(Debug, Default)]
pub struct RecordingSleeper {
    delays: Mutex<Vec<f64>>,
}

impl RecordingSleeper {
    pub fn delays(&self) -> Vec<f64> {
        self.delays.lock().expect("sleeper lock poisoned").clone()
    }
}

impl Sleeper for RecordingSleeper {
    fn sleep_ms(&self, delay_ms: f64) {
        self.delays
            .lock()
            .expect("sleeper lock poisoned")
            .push(delay_ms);
    }
}
