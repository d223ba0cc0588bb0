use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{judge_one, Judge, JudgeError, JudgeRequest, Judged, RetryPolicy, Sleeper};

#[derive(Clone, Debug, PartialEq)]
pub struct BatchOptions {
    /// Upper bound on in-flight requests; at least 1.
    pub concurrency_limit: usize,
    pub retry: RetryPolicy,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            concurrency_limit: 8,
            retry: RetryPolicy::default(),
        }
    }
}

/// Live counters for a running batch.
#[derive(Debug, Default)]
pub struct BatchProgress {
    completed: AtomicUsize,
    succeeded: AtomicUsize,
    failed: AtomicUsize,
    cached: AtomicUsize,
    attempts: AtomicUsize,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ProgressSnapshot {
    pub completed: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub cached: usize,
    /// Calls made to the judge, retries included (cache hits count once).
    pub attempts: usize,
    pub in_flight: usize,
    pub peak_in_flight: usize,
}

impl BatchProgress {
    pub fn snapshot(&self) -> ProgressSnapshot {
        ProgressSnapshot {
            completed: self.completed.load(Ordering::SeqCst),
            succeeded: self.succeeded.load(Ordering::SeqCst),
            failed: self.failed.load(Ordering::SeqCst),
            cached: self.cached.load(Ordering::SeqCst),
            attempts: self.attempts.load(Ordering::SeqCst),
            in_flight: self.in_flight.load(Ordering::SeqCst),
            peak_in_flight: self.peak_in_flight.load(Ordering::SeqCst),
        }
    }
}

pub fn judge_batch(
    judge: &dyn Judge,
    requests: &[JudgeRequest],
    options: &BatchOptions,
    sleeper: &dyn Sleeper,
) -> Vec<Result<Judged, JudgeError>> {
    judge_batch_with_progress(judge, requests, options, sleeper, &BatchProgress::default())
}

/// Judges every request with at most `concurrency_limit` in flight
/// (1 for single-flight judges). Results come back in input order; a failed
/// item never aborts the batch.
pub fn judge_batch_with_progress(
    judge: &dyn Judge,
    requests: &[JudgeRequest],
    options: &BatchOptions,
    sleeper: &dyn Sleeper,
    progress: &BatchProgress,
) -> Vec<Result<Judged, JudgeError>> {
    if requests.is_empty() {
        return Vec::new();
    }
    let limit = if judge.single_flight() {
        1
    } else {
        options.concurrency_limit.max(1)
    };
    let workers = limit.min(requests.len());
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<Judged, JudgeError>>>> =
        requests.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                let Some(request) = requests.get(idx) else {
                    break;
                };
                let now = progress.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                progress.peak_in_flight.fetch_max(now, Ordering::SeqCst);
                let result = judge_one(judge, request, &options.retry, sleeper);
                progress.in_flight.fetch_sub(1, Ordering::SeqCst);

                match &result {
                    Ok(judged) => {
                        progress.succeeded.fetch_add(1, Ordering::SeqCst);
                        progress
                            .attempts
                            .fetch_add(judged.attempts as usize, Ordering::SeqCst);
                        if judged.cached {
                            progress.cached.fetch_add(1, Ordering::SeqCst);
                        }
                    }
                    Err(err) => {
                        progress.failed.fetch_add(1, Ordering::SeqCst);
                        progress
                            .attempts
                            .fetch_add(err.attempts() as usize, Ordering::SeqCst);
                    }
                }
                progress.completed.fetch_add(1, Ordering::SeqCst);
                *slots[idx].lock().expect("result slot poisoned") = Some(result);
            });
        }
    });

    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("result slot poisoned")
                .expect("every request is judged exactly once")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judge::{Judgment, OracleJudge, ThreadSleeper};
    use crate::label::{QipKey, RelevanceLabel};
    use std::collections::HashMap;
    use std::sync::atomic::AtomicBool;

    fn requests(n: usize) -> (Vec<JudgeRequest>, HashMap<QipKey, RelevanceLabel>) {
        let mut labels = HashMap::new();
        let reqs = (0..n)
            .map(|i| {
                let key = QipKey::new(format!("q{}", i % 7), format!("i{i}"));
                labels.insert(key.clone(), RelevanceLabel::from_index(i % 3));
                JudgeRequest {
                    query_id: key.query_id,
                    item_id: key.item_id,
                    query: "q".into(),
                    rendered: format!("query: q\ntitle: item {i}"),
                }
            })
            .collect();
        (reqs, labels)
    }

    #[test]
    fn empty_batch() {
        let judge = OracleJudge::new("o", HashMap::new());
        assert!(judge_batch(&judge, &[], &BatchOptions::default(), &ThreadSleeper).is_empty());
    }

    #[test]
    fn hundred_inputs_keep_order() {
        let (reqs, labels) = requests(100);
        let judge = OracleJudge::new("o", labels).with_jitter(3);
        let progress = BatchProgress::default();
        let opts = BatchOptions {
            concurrency_limit: 8,
            ..Default::default()
        };
        let out = judge_batch_with_progress(&judge, &reqs, &opts, &ThreadSleeper, &progress);
        assert_eq!(out.len(), 100);
        for (i, r) in out.iter().enumerate() {
            let v = &r.as_ref().unwrap().verdict;
            assert_eq!(v.item_id, format!("i{i}"));
            assert_eq!(v.label, RelevanceLabel::from_index(i % 3));
        }
        let snap = progress.snapshot();
        assert_eq!(
            (snap.completed, snap.succeeded, snap.failed, snap.in_flight),
            (100, 100, 0, 0)
        );
        assert!(snap.peak_in_flight <= 8);
    }

    #[test]
    fn partial_failures_do_not_abort() {
        let (reqs, mut labels) = requests(10);
        labels.remove(&QipKey::new("q3", "i3"));
        let judge = OracleJudge::new("o", labels);
        let out = judge_batch(&judge, &reqs, &BatchOptions::default(), &ThreadSleeper);
        assert_eq!(out.iter().filter(|r| r.is_err()).count(), 1);
        assert!(out[3].is_err());
    }

    struct SingleFlight {
        busy: AtomicBool,
        overlap: AtomicBool,
    }

    impl Judge for SingleFlight {
        fn id(&self) -> &str {
            "single"
        }
        fn single_flight(&self) -> bool {
            true
        }
        fn judge(&self, request: &JudgeRequest) -> Result<Judgment, JudgeError> {
            if self.busy.swap(true, Ordering::SeqCst) {
                self.overlap.store(true, Ordering::SeqCst);
            }
            std::thread::sleep(std::time::Duration::from_micros(200));
            self.busy.store(false, Ordering::SeqCst);
            Err(JudgeError::UnknownPair {
                query_id: request.query_id.clone(),
                item_id: request.item_id.clone(),
            })
        }
    }

    #[test]
    fn single_flight_judges_are_serialized() {
        let (reqs, _) = requests(20);
        let judge = SingleFlight {
            busy: AtomicBool::new(false),
            overlap: AtomicBool::new(false),
        };
        let opts = BatchOptions {
            concurrency_limit: 8,
            ..Default::default()
        };
        let out = judge_batch(&judge, &reqs, &opts, &ThreadSleeper);
        assert_eq!(out.len(), 20);
        assert!(!judge.overlap.load(Ordering::SeqCst));
    }
}
