use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::layer::{DenseLayer, LoraAdapter, TrainMode};
use super::model::Classifier;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON checkpoint with row-major weight arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub mode: TrainMode,
    pub d_in: usize,
    pub d_out: usize,
    pub seed: u64,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lora: Option<LoraState>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoraState {
    pub rank: usize,
    pub alpha: f64,
    pub dropout_rate: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

fn row_major(a: &Array2<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}

fn matrix(rows: usize, cols: usize, data: &[f64], name: &str) -> Result<Array2<f64>> {
    Array2::from_shape_vec((rows, cols), data.to_vec()).map_err(|_| {
        Error::Dimension(format!(
            "{name} has {} values, expected {rows}×{cols}",
            data.len()
        ))
    })
}

impl Checkpoint {
    pub fn from_model(model: &Classifier, seed: u64) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            mode: model.mode,
            d_in: model.base.d_in(),
            d_out: model.base.d_out(),
            seed,
            weight: row_major(&model.base.weight),
            bias: model.base.bias.to_vec(),
            lora: model.adapter.as_ref().map(|a| LoraState {
                rank: a.rank,
                alpha: a.alpha,
                dropout_rate: a.dropout_rate,
                a: row_major(&a.a),
                b: row_major(&a.b),
            }),
        }
    }

    pub fn to_model(&self) -> Result<Classifier> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::invalid(
                "version",
                format!("unsupported checkpoint version {}", self.version),
            ));
        }
        let weight = matrix(self.d_out, self.d_in, &self.weight, "weight")?;
        if self.bias.len() != self.d_out {
            return Err(Error::Dimension(format!(
                "bias has {} values, expected {}",
                self.bias.len(),
                self.d_out
            )));
        }
        let base = DenseLayer::new(weight, Array1::from(self.bias.clone()))?;
        match (self.mode, &self.lora) {
            (TrainMode::Full, None) => Ok(Classifier::full(base)),
            (TrainMode::Lora, Some(state)) => {
                let a = matrix(state.rank, self.d_in, &state.a, "lora a")?;
                let b = matrix(self.d_out, state.rank, &state.b, "lora b")?;
                if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::invalid("lora", "adapter weights must be finite"));
                }
                Classifier::lora(
                    base,
                    LoraAdapter::from_parts(a, b, state.alpha, state.dropout_rate)?,
                )
            }
            (TrainMode::Full, Some(_)) => Err(Error::invalid(
                "lora",
                "full-mode checkpoint carries an adapter",
            )),
            (TrainMode::Lora, None) => Err(Error::invalid(
                "lora",
                "lora-mode checkpoint has no adapter",
            )),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let checkpoint: Checkpoint = serde_json::from_str(&text)?;
        checkpoint.to_model()?;
        Ok(checkpoint)
    }
}
