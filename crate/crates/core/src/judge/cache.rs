use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Judge, JudgeError, JudgeRequest, JudgeVerdict, Judgment};
use crate::error::{Error, Result};
use crate::jsonl;

/// 128-bit hex key over `(judge_id, template_version, rendered_input)`:
/// the first 16 bytes of SHA-256 of the three fields joined by NUL.
pub fn cache_key(judge_id: &str, template_version: &str, rendered: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(judge_id.as_bytes());
    hasher.update([0u8]);
    hasher.update(template_version.as_bytes());
    hasher.update([0u8]);
    hasher.update(rendered.as_bytes());
    let digest = hasher.finalize();
    hex::encode(&digest[..16])
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    verdict: JudgeVerdict,
}

/// Verdicts keyed by [`cache_key`]. Concurrent readers, exclusive writers.
///
/// Persisted as JSONL sorted by key so saved files are reproducible
/// regardless of completion order.
#[derive(Debug, Default)]
pub struct VerdictCache {
    entries: RwLock<BTreeMap<String, JudgeVerdict>>,
}

impl VerdictCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads a saved cache; a missing file yields an empty cache.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::new());
        }
        let lines: Vec<CacheLine> = jsonl::read_strict(path)?;
        let entries = lines.into_iter().map(|l| (l.key, l.verdict)).collect();
        Ok(VerdictCache {
            entries: RwLock::new(entries),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let lines: Vec<CacheLine> = self
            .entries
            .read()
            .expect("cache lock poisoned")
            .iter()
            .map(|(key, verdict)| CacheLine {
                key: key.clone(),
                verdict: verdict.clone(),
            })
            .collect();
        let tmp = path.with_extension("jsonl.tmp");
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        jsonl::write_records(file, &lines)?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn get(&self, key: &str) -> Option<JudgeVerdict> {
        self.entries
            .read()
            .expect("cache lock poisoned")
            .get(key)
            .cloned()
    }

    /// Stores a verdict. Pairs with identical rendered input share a key; the
    /// entry of the smallest `(query_id, item_id)` is kept so the saved file
    /// does not depend on completion order.
    pub fn insert(&self, key: String, verdict: JudgeVerdict) {
        let mut entries = self.entries.write().expect("cache lock poisoned");
        match entries.get(&key) {
            Some(old) if (&old.query_id, &old.item_id) <= (&verdict.query_id, &verdict.item_id) => {
            }
            _ => {
                entries.insert(key, verdict);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn rekeyed(mut verdict: JudgeVerdict, request: &JudgeRequest) -> JudgeVerdict {
    verdict.query_id.clone_from(&request.query_id);
    verdict.item_id.clone_from(&request.item_id);
    verdict
}

/// Answers from the cache only; a miss is an error.
pub struct ReplayJudge {
    id: String,
    template_version: String,
    cache: Arc<VerdictCache>,
}

impl ReplayJudge {
    pub fn new(
        id: impl Into<String>,
        template_version: impl Into<String>,
        cache: Arc<VerdictCache>,
    ) -> Self {
        ReplayJudge {
            id: id.into(),
            template_version: template_version.into(),
            cache,
        }
    }
}

impl Judge for ReplayJudge {
    fn id(&self) -> &str {
        &self.id
    }

    fn template_version(&self) -> &str {
        &self.template_version
    }

    fn judge(&self, request: &JudgeRequest) -> std::result::Result<Judgment, JudgeError> {
        let key = cache_key(&self.id, &self.template_version, &request.rendered);
        match self.cache.get(&key) {
            Some(verdict) => Ok(Judgment {
                verdict: rekeyed(verdict, request),
                cached: true,
            }),
            None => Err(JudgeError::Miss { key }),
        }
    }
}

/// Serves cache hits and stores fresh verdicts from the wrapped judge.
pub struct CachedJudge {
    inner: Arc<dyn Judge>,
    cache: Arc<VerdictCache>,
}

impl CachedJudge {
    pub fn new(inner: Arc<dyn Judge>, cache: Arc<VerdictCache>) -> Self {
        CachedJudge { inner, cache }
    }

    pub fn cache(&self) -> &Arc<VerdictCache> {
        &self.cache
    }
}

impl Judge for CachedJudge {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn template_version(&self) -> &str {
        self.inner.template_version()
    }

    fn single_flight(&self) -> bool {
        self.inner.single_flight()
    }

    fn judge(&self, request: &JudgeRequest) -> std::result::Result<Judgment, JudgeError> {
        let key = cache_key(
            self.inner.id(),
            self.inner.template_version(),
            &request.rendered,
        );
        if let Some(verdict) = self.cache.get(&key) {
            return Ok(Judgment {
                verdict: rekeyed(verdict, request),
                cached: true,
            });
        }
        let judgment = self.inner.judge(request)?;
        self.cache.insert(key, judgment.verdict.clone());
        Ok(judgment)
    }
}
