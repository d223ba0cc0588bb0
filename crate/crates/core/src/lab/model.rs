use ndarray::{Array1, Array2, Axis};

use super::layer::{forward_adapted, DenseLayer, LoraAdapter, TrainMode};
use crate::error::{Error, Result};
use crate::label::RelevanceLabel;

/// Linear 3-class head with an optional LoRA adapter.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub base: DenseLayer,
    pub adapter: Option<LoraAdapter>,
    pub mode: TrainMode,
}

/// Gradients of the trainable tensors, flattened row-major, in the order
/// of [`Classifier::trainable_mut`]: `[W, b]` in full mode, `[A, B]` in
/// LoRA mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

fn log_softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

impl Classifier {
    pub fn full(base: DenseLayer) -> Self {
        Classifier {
            base,
            adapter: None,
            mode: TrainMode::Full,
        }
    }

    pub fn lora(base: DenseLayer, adapter: LoraAdapter) -> Result<Self> {
        if adapter.d_in() != base.d_in() || adapter.d_out() != base.d_out() {
            return Err(Error::Dimension("adapter does not match base layer".into()));
        }
        Ok(Classifier {
            base,
            adapter: Some(adapter),
            mode: TrainMode::Lora,
        })
    }

    pub fn d_in(&self) -> usize {
        self.base.d_in()
    }

    pub fn logits(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        match &self.adapter {
            Some(adapter) => forward_adapted(&self.base, adapter, x),
            None => self.base.forward(x),
        }
    }

    /// Row-wise logits; `adapter_input` replaces `xs` on the low-rank branch
    /// (used for dropout during training).
    fn batch_logits(
        &self,
        xs: &Array2<f64>,
        adapter_input: Option<&Array2<f64>>,
    ) -> (Array2<f64>, Option<Array2<f64>>) {
        let mut z = xs.dot(&self.base.weight.t()) + &self.base.bias;
        let mut hidden = None;
        if let Some(adapter) = &self.adapter {
            let u = adapter_input.unwrap_or(xs).dot(&adapter.a.t());
            z = z + u.dot(&adapter.b.t()) * adapter.scale();
            hidden = Some(u);
        }
        (z, hidden)
    }

    pub fn predict(&self, x: &Array1<f64>) -> Result<RelevanceLabel> {
        let z = self.logits(x)?;
        let mut best = 0;
        for i in 1..3 {
            if z[i] >= z[best] {
                best = i;
            }
        }
        Ok(RelevanceLabel::from_index(best))
    }

    pub fn predict_batch(&self, xs: &Array2<f64>) -> Vec<RelevanceLabel> {
        let (z, _) = self.batch_logits(xs, None);
        z.rows()
            .into_iter()
            .map(|row| {
                let mut best = 0;
                for i in 1..3 {
                    if row[i] >= row[best] {
                        best = i;
                    }
                }
                RelevanceLabel::from_index(best)
            })
            .collect()
    }

    /// Weighted cross-entropy `(1/N) Σ w[y_i] · (−log softmax(z_i)[y_i])`.
    pub fn loss(&self, xs: &Array2<f64>, ys: &[RelevanceLabel], class_weights: &[f64; 3]) -> f64 {
        let (z, _) = self.batch_logits(xs, None);
        let logp = log_softmax_rows(&z);
        let n = ys.len() as f64;
        ys.iter()
            .enumerate()
            .map(|(i, y)| -class_weights[y.index()] * logp[[i, y.index()]])
            .sum::<f64>()
            / n
    }

    /// Loss and analytic gradients of the trainable tensors.
    pub fn loss_and_gradients(
        &self,
        xs: &Array2<f64>,
        ys: &[RelevanceLabel],
        class_weights: &[f64; 3],
        adapter_input: Option<&Array2<f64>>,
    ) -> (f64, Gradients) {
        let n = ys.len() as f64;
        let (z, hidden) = self.batch_logits(xs, adapter_input);
        let logp = log_softmax_rows(&z);
        let mut g = logp.mapv(f64::exp);
        let mut loss = 0.0;
        for (i, y) in ys.iter().enumerate() {
            let w = class_weights[y.index()];
            loss -= w * logp[[i, y.index()]];
            g[[i, y.index()]] -= 1.0;
            g.row_mut(i).mapv_inplace(|v| v * w / n);
        }
        loss /= n;

        let grads = match (&self.mode, &self.adapter, hidden) {
            (TrainMode::Lora, Some(adapter), Some(u)) => {
                let s = adapter.scale();
                let d_b = g.t().dot(&u) * s;
                let d_a = g.dot(&adapter.b).t().dot(adapter_input.unwrap_or(xs)) * s;
                vec![flatten(d_a), flatten(d_b)]
            }
            _ => {
                let d_w = g.t().dot(xs);
                let d_bias = g.sum_axis(Axis(0));
                vec![flatten(d_w), d_bias.to_vec()]
            }
        };
        (loss, Gradients(grads))
    }

    /// Trainable tensors as mutable flat slices.
    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        match (self.mode, self.adapter.as_mut()) {
            (TrainMode::Lora, Some(adapter)) => vec![
                adapter.a.as_slice_mut().expect("standard layout"),
                adapter.b.as_slice_mut().expect("standard layout"),
            ],
            _ => vec![
                self.base.weight.as_slice_mut().expect("standard layout"),
                self.base.bias.as_slice_mut().expect("standard layout"),
            ],
        }
    }

    /// Gradient step with decoupled weight decay on the trainable tensors.
    pub fn apply_gradients(&mut self, grads: &Gradients, learning_rate: f64, weight_decay: f64) {
        for (params, grad) in self.trainable_mut().into_iter().zip(&grads.0) {
            for (p, g) in params.iter_mut().zip(grad) {
                *p -= learning_rate * (g + weight_decay * *p);
            }
        }
    }
}

fn flatten(a: Array2<f64>) -> Vec<f64> {
    a.as_standard_layout().iter().copied().collect()
}

/// Largest relative error between analytic gradients and central finite
/// differences over all trainable parameters.
///
/// Relative error is `|analytic − numeric| / max(|analytic|, |numeric|, 1e-6)`;
/// the floor keeps near-zero gradients from dividing by noise.
pub fn grad_check(
    model: &Classifier,
    xs: &Array2<f64>,
    ys: &[RelevanceLabel],
    class_weights: &[f64; 3],
    eps: f64,
) -> Result<f64> {
    if ys.is_empty() || xs.nrows() != ys.len() {
        return Err(Error::invalid(
            "batch",
            "grad check needs a non-empty batch with one label per row",
        ));
    }
    let (_, Gradients(analytic)) = model.loss_and_gradients(xs, ys, class_weights, None);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (t, grad) in analytic.iter().enumerate() {
        for (i, &a) in grad.iter().enumerate() {
            let original = probe.trainable_mut()[t][i];
            probe.trainable_mut()[t][i] = original + eps;
            let plus = probe.loss(xs, ys, class_weights);
            probe.trainable_mut()[t][i] = original - eps;
            let minus = probe.loss(xs, ys, class_weights);
            probe.trainable_mut()[t][i] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
