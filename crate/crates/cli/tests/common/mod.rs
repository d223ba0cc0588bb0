//! Synthetic fixtures for end-to-end runs.
//!
//! Each experiment ranks ten items per query; the variation arm is the
//! control ranking reversed. The verdict is fixed by how labels are laid
//! out along the control ranking:
//! * `+`: labels ascend, so the variation is the ideal order;
//! * `-`: labels descend, so the control is the ideal order;
//! * `=`: labels form a palindrome, so both arms see the same sequence.
//!
//! Human labels come from annotations; the judge's labels come from the
//! QIP file. A planted experiment gets a different layout in the QIP file,
//! which moves it to a known cell of the agreement matrix.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use releval_core::rng::SeedStream;
use serde_json::json;

pub const QUERIES_PER_EXPERIMENT: usize = 8;
pub const ITEMS_PER_QUERY: usize = 10;
const WORDS: [&str; 12] = [
    "red", "shoes", "kids", "wireless", "mouse", "steel", "water", "bottle", "desk", "lamp",
    "organic", "coffee",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pattern {
    Plus,
    Equal,
    Minus,
}

impl Pattern {
    pub fn index(self) -> usize {
        match self {
            Pattern::Plus => 0,
            Pattern::Equal => 1,
            Pattern::Minus => 2,
        }
    }
}

pub struct Fixture {
    pub dir: PathBuf,
    pub config: PathBuf,
    /// `(human, judge)` pattern per experiment.
    pub patterns: Vec<(Pattern, Pattern)>,
}

impl Fixture {
    /// Expected agreement matrix, rows = human, columns = judge.
    pub fn expected_matrix(&self) -> [[u64; 3]; 3] {
        let mut m = [[0; 3]; 3];
        for (h, j) in &self.patterns {
            m[h.index()][j.index()] += 1;
        }
        m
    }
}

/// Ten labels with at least two distinct values laid out per `pattern`.
fn layout(stream: &mut SeedStream, pattern: Pattern) -> Vec<u8> {
    loop {
        let mut labels: Vec<u8> = (0..ITEMS_PER_QUERY)
            .map(|_| stream.below(3) as u8)
            .collect();
        match pattern {
            Pattern::Plus => labels.sort_unstable(),
            Pattern::Minus => labels.sort_unstable_by(|a, b| b.cmp(a)),
            Pattern::Equal => {
                for i in 0..ITEMS_PER_QUERY / 2 {
                    labels[ITEMS_PER_QUERY - 1 - i] = labels[i];
                }
            }
        }
        let distinct = labels.iter().any(|&l| l != labels[0]);
        if distinct {
            return labels;
        }
    }
}

/// Default mix: 20 `+`, 15 `=`, 15 `-` human verdicts.
pub fn human_patterns(n: usize) -> Vec<Pattern> {
    (0..n)
        .map(|e| match e * 50 / n {
            0..=19 => Pattern::Plus,
            20..=34 => Pattern::Equal,
            _ => Pattern::Minus,
        })
        .collect()
}

/// Plants judge patterns on a fixed subset: 3 `+→=`, 1 `+→-`, 2 `=→+`,
/// 1 `=→-`, 2 `-→=`.
pub fn planted(humans: &[Pattern]) -> Vec<(Pattern, Pattern)> {
    let mut plan: Vec<(Pattern, Pattern)> = humans.iter().map(|&h| (h, h)).collect();
    let wanted = [
        (Pattern::Plus, Pattern::Equal, 3),
        (Pattern::Plus, Pattern::Minus, 1),
        (Pattern::Equal, Pattern::Plus, 2),
        (Pattern::Equal, Pattern::Minus, 1),
        (Pattern::Minus, Pattern::Equal, 2),
    ];
    for (from, to, count) in wanted {
        let mut left = count;
        // Every third candidate, so plants are spread over the range.
        for (e, slot) in plan.iter_mut().enumerate() {
            if left > 0 && slot.0 == from && slot.1 == from && e % 3 == 1 {
                slot.1 = to;
                left -= 1;
            }
        }
        assert_eq!(left, 0, "not enough experiments to plant {from:?}->{to:?}");
    }
    plan
}

/// Writes qips, annotations, experiments and a config into `dir`.
pub fn write_fixture(dir: &Path, seed: u64, patterns: Vec<(Pattern, Pattern)>) -> Fixture {
    fs::create_dir_all(dir).unwrap();
    let mut qips = String::new();
    let mut annotations = String::new();
    let mut experiments = String::new();
    for (e, &(human, judge)) in patterns.iter().enumerate() {
        let mut stream = SeedStream::new(seed, "fixture", e as u64);
        let eid = format!("exp{e:03}");
        for q in 0..QUERIES_PER_EXPERIMENT {
            let qid = format!("e{e:03}q{q}");
            let n_words = 1 + stream.below(5) as usize;
            let text: Vec<&str> = (0..n_words)
                .map(|_| WORDS[stream.below(12) as usize])
                .collect();
            let text = text.join(" ");
            let human_labels = layout(&mut stream, human);
            let judge_labels = if judge == human {
                human_labels.clone()
            } else {
                layout(&mut stream, judge)
            };
            let items: Vec<String> = (0..ITEMS_PER_QUERY).map(|m| format!("{qid}i{m}")).collect();
            for (m, item) in items.iter().enumerate() {
                let mut qip = json!({
                    "query_id": qid, "query": text, "item_id": item,
                    "title": format!("{} item {m}", WORDS[(e + m) % 12]),
                    "brand": format!("brand{}", m % 4),
                    "label": judge_labels[m],
                    "grammar": if q % 2 == 0 { "noun_phrase" } else { "attribute_query" },
                });
                if m % 3 == 0 {
                    qip["description"] = json!(format!("Description of item {m} for {qid}."));
                }
                if q == 0 {
                    qip["specificity"] = json!("narrow");
                }
                qips.push_str(&qip.to_string());
                qips.push('\n');

                let gold = human_labels[m];
                let other = (gold + 1 + stream.below(2) as u8) % 3;
                let rounds: Vec<u8> = match stream.below(20) {
                    0 => vec![gold, other, gold],
                    1 => vec![other, gold, gold],
                    2 => vec![other, 3 - gold - other, gold],
                    _ => vec![gold, gold],
                };
                for (r, label) in rounds.iter().enumerate() {
                    let line = json!({"query_id": qid, "item_id": item, "round": r + 1, "label": label, "source": "human"});
                    annotations.push_str(&line.to_string());
                    annotations.push('\n');
                }
            }
            let control = items.clone();
            let variation: Vec<String> = items.iter().rev().cloned().collect();
            for (arm, ranking) in [("control", control), ("variation", variation)] {
                let line =
                    json!({"experiment_id": eid, "query_id": qid, "arm": arm, "ranking": ranking});
                experiments.push_str(&line.to_string());
                experiments.push('\n');
            }
        }
    }
    fs::write(dir.join("qips.jsonl"), qips).unwrap();
    fs::write(dir.join("annotations.jsonl"), annotations).unwrap();
    fs::write(dir.join("experiments.jsonl"), experiments).unwrap();
    let config = json!({
        "paths": {
            "qips": "qips.jsonl",
            "annotations": "annotations.jsonl",
            "experiments": "experiments.jsonl",
            "output_dir": "out"
        },
        "seed": seed,
        "judge": {"kind": "oracle", "id": "oracle"},
        "concurrency_limit": 4
    });
    let config_path = dir.join("config.json");
    fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    Fixture {
        dir: dir.to_owned(),
        config: config_path,
        patterns,
    }
}

/// Every file under `dir` as (relative path, bytes), sorted.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_owned()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

pub fn args(parts: &[&str]) -> Vec<String> {
    std::iter::once("releval")
        .chain(parts.iter().copied())
        .map(String::from)
        .collect()
}
