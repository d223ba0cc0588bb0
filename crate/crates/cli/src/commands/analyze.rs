use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use releval_core::analysis::{
    grammar_breakdown, misprediction_join, overlap_stats, segment_breakdown, SegmentRow,
};
use releval_core::dataset::{QueryRecord, Specificity};

use crate::error::{CliError, CliResult};
use crate::report::{section, table};
use crate::workspace::{read_verdicts, verdict_map, Workspace, VERDICTS_FILE};

#[derive(Serialize)]
struct SegmentCsv<'a> {
    segment: &'a str,
    count: usize,
    percentage: String,
}

fn segment_csv(rows: &[SegmentRow]) -> Vec<SegmentCsv<'_>> {
    rows.iter()
        .map(|r| SegmentCsv {
            segment: &r.segment,
            count: r.count,
            percentage: format!("{:.2}", r.percentage),
        })
        .collect()
}

fn segment_text(rows: &[SegmentRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.segment.clone(),
                r.count.to_string(),
                format!("{:.2}", r.percentage),
            ]
        })
        .collect();
    table(&["segment", "count", "percent"], &body)
}

/// Misprediction overlap across the workspace judge and any extra verdict
/// files, with label × specificity and grammar breakdowns.
pub fn analyze(ws: &Workspace) -> CliResult<String> {
    let gold = ws.human_labels()?;
    let mut predictions = BTreeMap::new();
    if ws.path(VERDICTS_FILE).exists() {
        predictions.insert(ws.config.judge.id.clone(), verdict_map(&ws.own_verdicts()?));
    }
    for (id, path) in &ws.config.paths.verdicts {
        if predictions.contains_key(id) {
            return Err(CliError::input(format!("judge id {id} appears twice")));
        }
        predictions.insert(id.clone(), verdict_map(&read_verdicts(path)?));
    }
    if predictions.is_empty() {
        return Err(CliError::input(
            "no verdicts to analyze: run judge or configure paths.verdicts",
        ));
    }
    let judge_count = predictions.len();
    let profiles = misprediction_join(&predictions, &gold)?;
    let overlap = overlap_stats(&profiles, judge_count);

    let queries: HashMap<String, QueryRecord> = match &ws.config.paths.qips {
        Some(_) => ws
            .qips()?
            .into_iter()
            .map(|r| (r.query.query_id.clone(), r.query))
            .collect(),
        None => HashMap::new(),
    };
    let rule = ws.config.specificity;
    let specificity = |qid: &str| match queries.get(qid) {
        Some(q) => rule.classify(&q.text, q.specificity),
        None => Specificity::Broad,
    };
    let grammar = |qid: &str| queries.get(qid).and_then(|q| q.grammar.clone());
    let segments = segment_breakdown(&profiles, specificity);
    let grammars = grammar_breakdown(&profiles, grammar);

    ws.write_jsonl("mispredictions.jsonl", &profiles)?;
    ws.write_csv("segments.csv", &segment_csv(&segments))?;
    ws.write_csv("grammar.csv", &segment_csv(&grammars))?;
    ws.write_text(
        "overlap.json",
        &(serde_json::to_string_pretty(&overlap)? + "\n"),
    )?;

    let judges: Vec<&str> = predictions.keys().map(String::as_str).collect();
    let overview = vec![
        vec!["judges".into(), judges.join(", ")],
        vec!["gold QIPs".into(), gold.len().to_string()],
        vec![
            "mispredicted by at least one".into(),
            overlap.profiles.to_string(),
        ],
        vec!["mispredicted by all".into(), overlap.all_wrong.to_string()],
        vec![
            "common fraction".into(),
            format!("{:.4}", overlap.all_wrong_fraction),
        ],
        vec![
            "identical label among common".into(),
            format!("{:.4}", overlap.identical_fraction),
        ],
    ];
    let mut text = section(
        "Misprediction overlap",
        &table(&["measure", "value"], &overview),
    );
    if overlap.identical_undefined {
        text.push_str("no common mispredictions; identical fraction undefined\n");
    }
    text.push('\n');
    text.push_str(&section(
        "Common mispredictions by label and specificity",
        &segment_text(&segments),
    ));
    text.push_str(
        "specificity: data tags where present, otherwise token-count heuristic (approximate)\n\n",
    );
    text.push_str(&section(
        "Common mispredictions by grammar",
        &segment_text(&grammars),
    ));
    ws.write_text("analysis.txt", &text)?;
    Ok(text)
}
