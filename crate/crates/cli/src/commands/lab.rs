use ndarray::Array2;
use serde::Serialize;

use releval_core::lab::{
    grad_check, train, Checkpoint, Classifier, DenseLayer, FeatureHasher, LoraAdapter,
};
use releval_core::rng::SeedStream;
use releval_core::RelevanceLabel;

use crate::commands::data::rendered_inputs;
use crate::error::{CliError, CliResult};
use crate::report::{section, table};
use crate::workspace::Workspace;

/// Relative-error bound the analytic gradients must meet.
pub const GRAD_TOLERANCE: f64 = 1e-4;

fn samples(ws: &Workspace) -> CliResult<Vec<(String, RelevanceLabel)>> {
    let qips = ws.qips()?;
    let gold: std::collections::HashMap<_, _> = ws.human_labels()?.into_iter().collect();
    let lines = rendered_inputs(ws, &qips)?;
    let samples: Vec<_> = lines
        .into_iter()
        .filter_map(|l| {
            let key = releval_core::QipKey::new(&l.query_id, &l.item_id);
            let label = if l.synthetic {
                l.label
            } else {
                gold.get(&key).copied()
            };
            label.map(|y| (l.text, y))
        })
        .collect();
    if samples.is_empty() {
        return Err(CliError::input("no labeled QIPs to train on"));
    }
    Ok(samples)
}

#[derive(Serialize)]
struct HistoryRow {
    step: usize,
    lr: f64,
    val_micro_f1: f64,
}

pub fn lab_train(ws: &Workspace) -> CliResult<String> {
    let config = &ws.config.lab;
    let data = samples(ws)?;
    let out = train(&data, config)?;
    let rows: Vec<HistoryRow> = out
        .history
        .iter()
        .map(|h| HistoryRow {
            step: h.step,
            lr: h.lr,
            val_micro_f1: h.val_micro_f1,
        })
        .collect();
    ws.write_csv("lab_history.csv", &rows)?;
    Checkpoint::from_model(&out.model, config.seed).save(&ws.path("lab_checkpoint.json"))?;

    let body: Vec<Vec<String>> = out
        .history
        .iter()
        .map(|h| {
            vec![
                h.step.to_string(),
                format!("{}", h.lr),
                format!("{:.4}", h.val_micro_f1),
                if h.reduced {
                    "reduced".into()
                } else {
                    String::new()
                },
            ]
        })
        .collect();
    let mut text = section(
        &format!("Lab training ({:?} mode)", config.mode).to_lowercase(),
        &table(&["step", "lr", "val micro f1", ""], &body),
    );
    text.push_str(&format!(
        "train {} / validation {} samples; final validation micro f1 {:.4}\n",
        out.train_size, out.validation_size, out.final_val_micro_f1
    ));
    ws.write_text("lab_train.txt", &text)?;
    Ok(text)
}

/// Finite-difference check of both training modes on a small batch.
/// A failure is an internal invariant violation.
pub fn lab_grad_check(ws: &Workspace, dim: usize, batch: usize) -> CliResult<String> {
    if dim == 0 || batch == 0 {
        return Err(CliError::input(
            "grad check needs positive --dim and --batch",
        ));
    }
    let config = &ws.config.lab;
    let (xs, ys): (Array2<f64>, Vec<RelevanceLabel>) = match ws.config.paths.qips {
        Some(_) => {
            let data = samples(ws)?;
            let take: Vec<_> = data.into_iter().take(batch).collect();
            let texts: Vec<&str> = take.iter().map(|(t, _)| t.as_str()).collect();
            (
                FeatureHasher::new(dim).transform_batch(&texts),
                take.iter().map(|(_, y)| *y).collect(),
            )
        }
        None => {
            let mut s = SeedStream::new(config.seed, "grad_check", 0);
            let xs = Array2::from_shape_simple_fn((batch, dim), || s.uniform(-1.0, 1.0));
            (
                xs,
                (0..batch)
                    .map(|i| RelevanceLabel::from_index(i % 3))
                    .collect(),
            )
        }
    };
    let base = DenseLayer::random(3, dim, 0.5, config.seed);
    let full = Classifier::full(base.clone());
    let mut adapter =
        LoraAdapter::new(dim, 3, config.rank.min(dim), config.alpha, 0.0, config.seed)?;
    // A zero B makes dA vanish identically; perturb it so both factors are exercised.
    let mut s = SeedStream::new(config.seed, "grad_check_b", 0);
    adapter.b.mapv_inplace(|_| s.uniform(-0.5, 0.5));
    let lora = Classifier::lora(base, adapter)?;

    let full_err = grad_check(&full, &xs, &ys, &config.class_weights, 1e-5)?;
    let lora_err = grad_check(&lora, &xs, &ys, &config.class_weights, 1e-5)?;
    let rows = vec![
        vec!["full".into(), format!("{full_err:.3e}")],
        vec!["lora".into(), format!("{lora_err:.3e}")],
    ];
    let text = section(
        &format!("Gradient check (dim {dim}, batch {})", ys.len()),
        &table(&["mode", "max relative error"], &rows),
    );
    ws.write_text("lab_grad_check.txt", &text)?;
    if full_err >= GRAD_TOLERANCE || lora_err >= GRAD_TOLERANCE {
        return Err(CliError::internal(format!(
            "gradient check failed: full {full_err:.3e}, lora {lora_err:.3e} (tolerance {GRAD_TOLERANCE:e})"
        )));
    }
    Ok(text)
}
