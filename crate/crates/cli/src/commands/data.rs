use serde::Serialize;

use releval_core::dataset::{
    dataset_stats, label_distribution, round_vs_resolved, LabelDistribution, QipRecord,
};
use releval_core::metrics::ConfusionMatrix3;
use releval_core::textgen::{
    apply_feature_dropout, perturb_query, render_input, sample_random_negatives,
};
use releval_core::RelevanceLabel;

use crate::error::{CliError, CliResult};
use crate::report::{section, table};
use crate::workspace::{Workspace, RESOLVED_FILE};

#[derive(Serialize)]
struct DistributionRow {
    label: u8,
    name: &'static str,
    count: u64,
    percent: String,
}

pub fn distribution_rows(dist: &LabelDistribution) -> Vec<(RelevanceLabel, u64, String)> {
    [
        RelevanceLabel::Relevant,
        RelevanceLabel::Related,
        RelevanceLabel::Irrelevant,
    ]
    .into_iter()
    .map(|l| (l, dist.count(l), dist.percentage_text(l)))
    .collect()
}

fn distribution_text(dist: &LabelDistribution) -> String {
    let mut rows: Vec<Vec<String>> = distribution_rows(dist)
        .into_iter()
        .map(|(l, c, p)| vec![l.name().to_owned(), c.to_string(), p])
        .collect();
    rows.push(vec!["total".into(), dist.total.to_string(), String::new()]);
    table(&["label", "count", "percent"], &rows)
}

/// Writes `label_distribution.{csv,txt}` and returns the text.
pub fn write_distribution(ws: &Workspace, dist: &LabelDistribution) -> CliResult<String> {
    let rows: Vec<DistributionRow> = distribution_rows(dist)
        .into_iter()
        .map(|(l, count, percent)| DistributionRow {
            label: l.value(),
            name: l.name(),
            count,
            percent,
        })
        .collect();
    ws.write_csv("label_distribution.csv", &rows)?;
    let text = section("Label distribution", &distribution_text(dist));
    ws.write_text("label_distribution.txt", &text)?;
    Ok(text)
}

#[derive(Serialize)]
struct StatRow {
    metric: &'static str,
    value: String,
}

fn confusion_text(cm: &ConfusionMatrix3, round: u8) -> String {
    let rows: Vec<Vec<String>> = RelevanceLabel::ALL
        .iter()
        .map(|&gold| {
            let mut row = vec![format!("resolved {}", gold.value())];
            row.extend(
                RelevanceLabel::ALL
                    .iter()
                    .map(|&p| cm.get(gold, p).to_string()),
            );
            row
        })
        .collect();
    let headers = [
        "".to_owned(),
        format!("round {round} = 0"),
        format!("round {round} = 1"),
        format!("round {round} = 2"),
    ];
    let headers: Vec<&str> = headers.iter().map(String::as_str).collect();
    table(&headers, &rows)
}

#[derive(Serialize)]
struct ConfusionRow {
    resolved: u8,
    round_label: u8,
    count: u64,
}

/// Resolves annotations (when configured) and reports corpus statistics.
pub fn ingest(ws: &Workspace) -> CliResult<String> {
    let qips = match &ws.config.paths.qips {
        Some(_) => Some(ws.qips()?),
        None => None,
    };
    let resolved = ws.resolved()?;
    if qips.is_none() && resolved.is_none() {
        return Err(CliError::input(
            "ingest needs paths.qips or paths.annotations",
        ));
    }
    let mut report = String::new();
    let mut stat_rows = Vec::new();

    let pairs: Vec<(&str, &str)> = match (&qips, &resolved) {
        (Some(q), _) => q
            .iter()
            .map(|r| (r.query.query_id.as_str(), r.item.item_id.as_str()))
            .collect(),
        (None, Some((_, res))) => res
            .iter()
            .map(|r| (r.query_id.as_str(), r.item_id.as_str()))
            .collect(),
        (None, None) => unreachable!(),
    };
    let stats = dataset_stats(pairs.iter().copied());
    stat_rows.push(StatRow {
        metric: "qips",
        value: pairs.len().to_string(),
    });
    stat_rows.push(StatRow {
        metric: "unique_queries",
        value: stats.unique_queries.to_string(),
    });
    stat_rows.push(StatRow {
        metric: "unique_items",
        value: stats.unique_items.to_string(),
    });
    stat_rows.push(StatRow {
        metric: "queries_per_item",
        value: format!("{:.4}", stats.queries_per_item),
    });
    stat_rows.push(StatRow {
        metric: "items_per_query",
        value: format!("{:.4}", stats.items_per_query),
    });

    let labels: Vec<RelevanceLabel> = match (&resolved, &qips) {
        (Some((_, res)), _) => res.iter().map(|r| r.final_label).collect(),
        (None, Some(q)) => q.iter().filter_map(|r| r.label).collect(),
        (None, None) => Vec::new(),
    };

    if let Some((rounds, res)) = &resolved {
        ws.write_jsonl(RESOLVED_FILE, res)?;
        let third = res.iter().filter(|r| r.rounds_used == 3).count();
        let adjudicated = res.iter().filter(|r| r.adjudicated_flag).count();
        stat_rows.push(StatRow {
            metric: "resolved",
            value: res.len().to_string(),
        });
        stat_rows.push(StatRow {
            metric: "third_round",
            value: third.to_string(),
        });
        stat_rows.push(StatRow {
            metric: "adjudicated",
            value: adjudicated.to_string(),
        });

        let round = ws.config.initial_round;
        let cm = round_vs_resolved(rounds, res, round);
        let mut rows = Vec::new();
        for gold in RelevanceLabel::ALL {
            for p in RelevanceLabel::ALL {
                rows.push(ConfusionRow {
                    resolved: gold.value(),
                    round_label: p.value(),
                    count: cm.get(gold, p),
                });
            }
        }
        ws.write_csv("round_confusion.csv", &rows)?;
        let text = section(
            &format!("Round {round} labels vs resolved labels"),
            &confusion_text(&cm, round),
        );
        ws.write_text("round_confusion.txt", &text)?;
        report.push_str(&text);
        report.push('\n');
    }

    ws.write_csv("stats.csv", &stat_rows)?;
    let rows: Vec<Vec<String>> = stat_rows
        .iter()
        .map(|r| vec![r.metric.to_owned(), r.value.clone()])
        .collect();
    let stats_text = section("Dataset statistics", &table(&["metric", "value"], &rows));
    ws.write_text("stats.txt", &stats_text)?;
    let mut out = stats_text;
    out.push('\n');
    if !labels.is_empty() {
        out.push_str(&write_distribution(ws, &label_distribution(labels)?)?);
        out.push('\n');
    }
    out.push_str(&report);
    Ok(out)
}

/// Resolves annotations only.
pub fn resolve(ws: &Workspace) -> CliResult<String> {
    let Some((_, resolved)) = ws.resolved()? else {
        return Err(CliError::input(
            "no annotations file configured (paths.annotations)",
        ));
    };
    let path = ws.write_jsonl(RESOLVED_FILE, &resolved)?;
    Ok(format!(
        "resolved {} QIP(s) into {}\n",
        resolved.len(),
        path.display()
    ))
}

/// Label distribution from explicit counts (ordered relevant, related,
/// irrelevant) or from the workspace's human labels.
pub fn stats(ws: &Workspace, counts: Option<[u64; 3]>) -> CliResult<String> {
    let dist = match counts {
        Some([relevant, related, irrelevant]) => {
            LabelDistribution::from_counts([irrelevant, related, relevant])?
        }
        None => label_distribution(ws.human_labels()?.into_iter().map(|(_, l)| l))?,
    };
    write_distribution(ws, &dist)
}

#[derive(Serialize)]
pub struct RenderedLine {
    pub query_id: String,
    pub item_id: String,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<RelevanceLabel>,
    pub synthetic: bool,
}

/// Renders every QIP with the configured augmentations, followed by
/// synthetic random negatives.
pub fn rendered_inputs(ws: &Workspace, qips: &[QipRecord]) -> CliResult<Vec<RenderedLine>> {
    let aug = &ws.config.augmentation;
    let variant = ws.config.variant;
    let mut out = Vec::with_capacity(qips.len());
    for (i, r) in qips.iter().enumerate() {
        let item = apply_feature_dropout(&r.item, aug, i as u64);
        let mut query = r.query.clone();
        query.text = perturb_query(&query.text, aug.query_noise_rate, aug.seed, i as u64);
        out.push(RenderedLine {
            query_id: r.query.query_id.clone(),
            item_id: r.item.item_id.clone(),
            text: render_input(&query, &item, variant),
            label: r.label,
            synthetic: false,
        });
    }
    if aug.random_negative_rate > 0.0 {
        let pool: Vec<_> = qips.iter().map(|r| r.item.clone()).collect();
        let negatives = sample_random_negatives(qips, &pool, aug.random_negative_rate, aug.seed)?;
        if negatives.skipped > 0 {
            log::warn!(
                "{} random negative draw(s) skipped: pool exhausted for the query",
                negatives.skipped
            );
        }
        for r in negatives.pairs {
            out.push(RenderedLine {
                query_id: r.query.query_id.clone(),
                item_id: r.item.item_id.clone(),
                text: render_input(&r.query, &r.item, variant),
                label: r.label,
                synthetic: true,
            });
        }
    }
    Ok(out)
}

pub fn render(ws: &Workspace) -> CliResult<String> {
    let qips = ws.qips()?;
    let lines = rendered_inputs(ws, &qips)?;
    let synthetic = lines.iter().filter(|l| l.synthetic).count();
    let path = ws.write_jsonl("rendered.jsonl", &lines)?;
    Ok(format!(
        "rendered {} input(s) ({} synthetic negative(s)) into {}\n",
        lines.len(),
        synthetic,
        path.display()
    ))
}
