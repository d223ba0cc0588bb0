use ndarray::{Array1, Array2};

use crate::rng::fnv1a64;

pub const DEFAULT_FEATURE_DIM: usize = 2048;

/// Hashed character-trigram counts, L2-normalized.
///
/// Each trigram's UTF-8 bytes are hashed with FNV-1a into `dim` buckets.
/// Texts shorter than three characters contribute one gram (the whole text).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureHasher {
    pub dim: usize,
}

impl Default for FeatureHasher {
    fn default() -> Self {
        FeatureHasher {
            dim: DEFAULT_FEATURE_DIM,
        }
    }
}

impl FeatureHasher {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "feature dimension must be positive");
        FeatureHasher { dim }
    }

    pub fn transform(&self, text: &str) -> Array1<f64> {
        let mut v: Array1<f64> = Array1::zeros(self.dim);
        let chars: Vec<char> = text.chars().collect();
        let mut bump = |gram: &[char]| {
            let s: String = gram.iter().collect();
            v[(fnv1a64(&s) % self.dim as u64) as usize] += 1.0;
        };
        if chars.len() < 3 {
            if !chars.is_empty() {
                bump(&chars);
            }
        } else {
            chars.windows(3).for_each(&mut bump);
        }
        let norm = v.dot(&v).sqrt();
        if norm > 0.0 {
            v /= norm;
        }
        v
    }

    pub fn transform_batch<S: AsRef<str>>(&self, texts: &[S]) -> Array2<f64> {
        let mut out = Array2::zeros((texts.len(), self.dim));
        for (mut row, text) in out.rows_mut().into_iter().zip(texts) {
            row.assign(&self.transform(text.as_ref()));
        }
        out
    }
}
