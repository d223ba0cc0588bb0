use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Full,
    Lora,
}

/// `y = W x + b` with `W` of shape `d_out × d_in`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::Dimension(format!(
                "weight has {} rows but bias has {} entries",
                weight.nrows(),
                bias.len()
            )));
        }
        if weight.iter().chain(bias.iter()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("layer", "weights must be finite"));
        }
        Ok(DenseLayer { weight, bias })
    }

    /// Weights uniform in `(-scale, scale)`, zero bias.
    pub fn random(d_out: usize, d_in: usize, scale: f64, seed: u64) -> Self {
        let mut stream = SeedStream::new(seed, "dense_init", 0);
        let weight = Array2::from_shape_simple_fn((d_out, d_in), || stream.uniform(-scale, scale));
        DenseLayer {
            weight,
            bias: Array1::zeros(d_out),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.d_in() {
            return Err(Error::Dimension(format!(
                "input has {} entries, layer expects {}",
                x.len(),
                self.d_in()
            )));
        }
        Ok(self.weight.dot(x) + &self.bias)
    }
}

/// Low-rank update `(alpha / rank) · B · A` for a frozen dense layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LoraAdapter {
    /// `rank × d_in`
    pub a: Array2<f64>,
    /// `d_out × rank`
    pub b: Array2<f64>,
    pub rank: usize,
    pub alpha: f64,
    /// Dropout on the adapter input during training only.
    pub dropout_rate: f64,
}

impl LoraAdapter {
    /// `A` uniform in `(-0.01, 0.01)` from the seeded stream, `B = 0`, so a
    /// fresh adapter leaves the base layer's outputs unchanged.
    pub fn new(
        d_in: usize,
        d_out: usize,
        rank: usize,
        alpha: f64,
        dropout_rate: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut stream = SeedStream::new(seed, "lora_a", 0);
        let a = Array2::from_shape_simple_fn((rank, d_in), || stream.uniform(-0.01, 0.01));
        LoraAdapter::from_parts(a, Array2::zeros((d_out, rank)), alpha, dropout_rate)
    }

    pub fn from_parts(
        a: Array2<f64>,
        b: Array2<f64>,
        alpha: f64,
        dropout_rate: f64,
    ) -> Result<Self> {
        let rank = a.nrows();
        if rank == 0 || b.ncols() != rank {
            return Err(Error::Dimension(format!(
                "A is {:?} and B is {:?}; both need the same positive rank",
                a.dim(),
                b.dim()
            )));
        }
        if rank > a.ncols() {
            return Err(Error::invalid(
                "rank",
                format!("rank {rank} exceeds input dimension {}", a.ncols()),
            ));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid("alpha", "must be positive"));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::invalid("dropout_rate", "must lie in [0, 1)"));
        }
        Ok(LoraAdapter {
            a,
            b,
            rank,
            alpha,
            dropout_rate,
        })
    }

    pub fn scale(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    pub fn d_in(&self) -> usize {
        self.a.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.b.nrows()
    }

    fn check(&self, layer: &DenseLayer) -> Result<()> {
        if self.d_in() != layer.d_in() || self.d_out() != layer.d_out() {
            return Err(Error::Dimension(format!(
                "adapter is {}×{} but layer is {}×{}",
                self.d_out(),
                self.d_in(),
                layer.d_out(),
                layer.d_in()
            )));
        }
        Ok(())
    }
}

/// `W x + b + (alpha / r) · B (A x)`, without forming `B A`.
pub fn forward_adapted(
    layer: &DenseLayer,
    adapter: &LoraAdapter,
    x: &Array1<f64>,
) -> Result<Array1<f64>> {
    adapter.check(layer)?;
    let base = layer.forward(x)?;
    let low = adapter.b.dot(&adapter.a.dot(x));
    Ok(base + low * adapter.scale())
}

/// Folds the adapter into the weights: `W' = W + (alpha / r) · B A`.
pub fn merge(layer: &DenseLayer, adapter: &LoraAdapter) -> Result<DenseLayer> {
    adapter.check(layer)?;
    let delta = adapter.b.dot(&adapter.a) * adapter.scale();
    Ok(DenseLayer {
        weight: &layer.weight + &delta,
        bias: layer.bias.clone(),
    })
}

/// Trainable parameters: `d_out (d_in + 1)` in full mode, `r (d_in + d_out)`
/// in LoRA mode (base frozen).
pub fn param_count(d_in: usize, d_out: usize, mode: TrainMode, rank: usize) -> usize {
    match mode {
        TrainMode::Full => d_out * (d_in + 1),
        TrainMode::Lora => rank * (d_in + d_out),
    }
}
