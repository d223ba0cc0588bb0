//! Acceptance checks. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any check fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use releval_cli::main_with_args;
use releval_core::dataset::{resolve_majority, AnnotationRound, LabelDistribution};
use releval_core::experiment::{combined_score, format_score, reversal_check, AgreementMatrix};
use releval_core::lab::{
    forward_adapted, grad_check, merge, param_count, Classifier, DenseLayer, LoraAdapter,
    PlateauScheduler, TrainConfig, TrainMode,
};
use releval_core::metrics::{f1_scores, ndcg_at_k, paired_t_test, ConfusionMatrix3};
use releval_core::rng::SeedStream;
use releval_core::RelevanceLabel;

use common::{args, human_patterns, planted, snapshot, write_fixture, Fixture};

type Check = Result<(), String>;
type NamedCheck = (&'static str, fn() -> Check);

fn ensure(cond: bool, message: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(message())
    }
}

fn within(limit: Duration, start: Instant) -> Check {
    let elapsed = start.elapsed();
    ensure(elapsed < limit, || {
        format!("took {elapsed:?}, limit {limit:?}")
    })
}

// ---------------------------------------------------------------------------
// Published agreement matrices

type Block = [[u64; 3]; 3];

/// Blocks as printed: model verdict on the rows, human on the columns.
const PUBLISHED: [(&str, [(Block, &str); 3]); 5] = [
    (
        "BERT",
        [
            ([[61, 66, 0], [13, 444, 20], [0, 16, 98]], "0.840"),
            ([[129, 50, 0], [10, 355, 30], [0, 16, 128]], "0.852"),
            ([[159, 68, 0], [12, 282, 32], [0, 18, 147]], "0.819"),
        ],
    ),
    (
        "DeBERTa",
        [
            ([[61, 54, 0], [13, 462, 13], [0, 10, 105]], "0.875"),
            ([[127, 57, 0], [12, 351, 28], [0, 13, 130]], "0.847"),
            ([[158, 65, 0], [13, 283, 30], [0, 20, 149]], "0.822"),
        ],
    ),
    (
        "Llama L.4",
        [
            ([[65, 51, 0], [9, 470, 16], [0, 5, 102]], "0.887"),
            ([[129, 59, 0], [10, 347, 26], [0, 15, 132]], "0.847"),
            ([[160, 52, 0], [11, 302, 30], [0, 14, 149]], "0.851"),
        ],
    ),
    (
        "Mistral-FFT",
        [
            ([[59, 45, 0], [15, 471, 13], [0, 10, 105]], "0.884"),
            ([[127, 62, 0], [12, 346, 30], [0, 13, 128]], "0.837"),
            ([[163, 55, 0], [8, 293, 22], [0, 20, 157]], "0.854"),
        ],
    ),
    (
        "Mistral-LoRA",
        [
            ([[63, 53, 0], [11, 452, 21], [0, 21, 97]], "0.852"),
            ([[127, 52, 0], [12, 356, 26], [0, 13, 132]], "0.857"),
            ([[161, 57, 0], [10, 287, 28], [0, 24, 151]], "0.834"),
        ],
    ),
];
const HUMAN_DIAGONALS: [[u64; 3]; 3] = [[74, 526, 118], [139, 421, 158], [171, 368, 179]];
const KS: [usize; 3] = [1, 5, 10];

fn agreement_matrices() -> Check {
    let start = Instant::now();
    let human = HUMAN_DIAGONALS.map(|d| ([[d[0], 0, 0], [0, d[1], 0], [0, 0, d[2]]], "1.000"));
    let mut blocks = 0;
    for (judge, rows) in PUBLISHED
        .iter()
        .map(|(j, r)| (*j, r))
        .chain([("Human", &human)])
    {
        for ((block, expected), k) in rows.iter().zip(KS) {
            let m = AgreementMatrix::from_model_rows(k, *block);
            ensure(m.total() == 718, || {
                format!("{judge} k={k}: total {}", m.total())
            })?;
            let score = format_score(combined_score(&m).map_err(|e| e.to_string())?);
            ensure(score == *expected, || {
                format!("{judge} k={k}: {score} != {expected}")
            })?;
            ensure(reversal_check(&m), || format!("{judge} k={k}: reversal"))?;
            blocks += 1;
        }
    }
    ensure(blocks == 18, || format!("{blocks} blocks"))?;
    within(Duration::from_secs(1), start)
}

// ---------------------------------------------------------------------------
// Published label distribution

fn label_distribution() -> Check {
    let d = LabelDistribution::from_counts([976_266, 1_191_913, 3_887_072])
        .map_err(|e| e.to_string())?;
    let got: Vec<String> = [
        RelevanceLabel::Relevant,
        RelevanceLabel::Related,
        RelevanceLabel::Irrelevant,
    ]
    .iter()
    .map(|&l| d.percentage_text(l))
    .collect();
    ensure(got == ["64.19", "19.68", "16.12"], || format!("{got:?}"))?;
    let total: u64 = [0, 1, 2]
        .iter()
        .map(|&i| d.count(RelevanceLabel::from_index(i)))
        .sum();
    ensure(total == 6_055_251, || format!("total {total}"))
}

// ---------------------------------------------------------------------------
// nDCG

fn oracle_dcg(labels: &[u8], k: usize) -> f64 {
    labels
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &l)| (2f64.powi(i32::from(l)) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

fn permutations(items: &[u8]) -> Vec<Vec<u8>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

fn to_labels(values: &[u8]) -> Vec<RelevanceLabel> {
    values
        .iter()
        .map(|&v| RelevanceLabel::from_index(usize::from(v)))
        .collect()
}

fn ndcg_properties() -> Check {
    let start = Instant::now();
    let mut s = SeedStream::new(20, "ndcg", 0);
    for case in 0..10_000 {
        let short = case % 2 == 0;
        let len = if short {
            1 + s.below(4) as usize
        } else {
            1 + s.below(15) as usize
        };
        let k = 1 + s.below(len as u64 + 2) as usize;
        let values: Vec<u8> = (0..len).map(|_| s.below(3) as u8).collect();
        let labels = to_labels(&values);
        let fail = |what: &str| format!("case {case} {values:?} k={k}: {what}");
        let n = ndcg_at_k(&labels, k).map_err(|e| fail(&e.to_string()))?;
        ensure((0.0..=1.0).contains(&n), || {
            fail(&format!("out of range {n}"))
        })?;

        let mut ideal = values.clone();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let ideal_dcg = oracle_dcg(&ideal, k);
        let ideal_n = ndcg_at_k(&to_labels(&ideal), k).unwrap();
        let expected_ideal = if ideal_dcg == 0.0 { 0.0 } else { 1.0 };
        ensure((ideal_n - expected_ideal).abs() < 1e-12, || {
            fail(&format!("ideal order {ideal_n}"))
        })?;

        let mut shuffled = values.clone();
        s.shuffle(&mut shuffled);
        let idcg_a = releval_core::metrics::ideal_dcg_at_k(&labels, k).unwrap();
        let idcg_b = releval_core::metrics::ideal_dcg_at_k(&to_labels(&shuffled), k).unwrap();
        ensure(idcg_a == idcg_b, || fail("ideal DCG depends on order"))?;

        // Moving a higher label ahead of a lower one never lowers nDCG.
        if len >= 2 {
            let i = s.below(len as u64 - 1) as usize;
            let j = i + 1 + s.below((len - i - 1) as u64) as usize;
            if values[i] < values[j] {
                let mut swapped = values.clone();
                swapped.swap(i, j);
                let after = ndcg_at_k(&to_labels(&swapped), k).unwrap();
                ensure(after >= n - 1e-12, || {
                    fail(&format!("swap {i}<->{j} lowered {n} to {after}"))
                })?;
            }
        }

        if short {
            let best = permutations(&values)
                .iter()
                .map(|p| oracle_dcg(p, k))
                .fold(0.0, f64::max);
            let expected = if best == 0.0 {
                0.0
            } else {
                oracle_dcg(&values, k) / best
            };
            ensure((n - expected).abs() < 1e-12, || {
                fail(&format!("{n} != brute force {expected}"))
            })?;
        }
    }
    within(Duration::from_secs(30), start)
}

// ---------------------------------------------------------------------------
// Paired t-test

/// Γ((ν+1)/2) / (√(νπ) Γ(ν/2)) for integer ν, via the ratio recurrence
/// R(ν+2) = R(ν)(ν+1)/ν from R(1) = 1/√π and R(2) = √π/2.
fn t_density_constant(nu: u32) -> f64 {
    let pi = std::f64::consts::PI;
    let mut ratio = if nu % 2 == 1 {
        1.0 / pi.sqrt()
    } else {
        pi.sqrt() / 2.0
    };
    let mut v = if nu % 2 == 1 { 1 } else { 2 };
    while v < nu {
        ratio *= f64::from(v + 1) / f64::from(v);
        v += 2;
    }
    ratio / (f64::from(nu) * pi).sqrt()
}

/// Interval `[a, b]` with the integrand at both ends and the midpoint, and
/// its Simpson estimate.
struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
}

impl Panel {
    fn new(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Self {
        let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
        Panel {
            a,
            b,
            fa,
            fm,
            fb,
            whole: (b - a) / 6.0 * (fa + 4.0 * fm + fb),
        }
    }

    fn halves(&self, f: &dyn Fn(f64) -> f64) -> (Panel, Panel) {
        let m = 0.5 * (self.a + self.b);
        let (flm, frm) = (f(0.5 * (self.a + m)), f(0.5 * (m + self.b)));
        let left = Panel {
            a: self.a,
            b: m,
            fa: self.fa,
            fm: flm,
            fb: self.fm,
            whole: (m - self.a) / 6.0 * (self.fa + 4.0 * flm + self.fm),
        };
        let right = Panel {
            a: m,
            b: self.b,
            fa: self.fm,
            fm: frm,
            fb: self.fb,
            whole: (self.b - m) / 6.0 * (self.fm + 4.0 * frm + self.fb),
        };
        (left, right)
    }
}

fn simpson(f: &dyn Fn(f64) -> f64, panel: &Panel, tol: f64, depth: u32) -> f64 {
    let (left, right) = panel.halves(f);
    let delta = left.whole + right.whole - panel.whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left.whole + right.whole + delta / 15.0;
    }
    simpson(f, &left, tol / 2.0, depth - 1) + simpson(f, &right, tol / 2.0, depth - 1)
}

/// Two-sided p-value by integrating the t density over |t|..∞ with
/// x = |t| + s/(1−s).
fn oracle_p(t: f64, nu: u32) -> f64 {
    let c = t_density_constant(nu);
    let n = f64::from(nu);
    let a = t.abs();
    let f = move |s: f64| {
        if s >= 1.0 {
            return if nu == 1 { c } else { 0.0 };
        }
        let x = a + s / (1.0 - s);
        c * (1.0 + x * x / n).powf(-(n + 1.0) / 2.0) / ((1.0 - s) * (1.0 - s))
    };
    2.0 * simpson(&f, &Panel::new(&f, 0.0, 1.0), 1e-13, 50)
}

fn t_test_oracle() -> Check {
    let mut s = SeedStream::new(30, "ttest", 0);
    let mut cases = 0;
    for &n in &[2usize, 5, 30, 718] {
        for shift_step in 0..12 {
            let spread = 0.05 + s.next_f64();
            let shift =
                (shift_step as f64 - 4.0) * 0.12 * spread / (n as f64).sqrt().max(1.0) * 3.0;
            let diffs: Vec<f64> = (0..n).map(|_| shift + s.uniform(-spread, spread)).collect();
            cases += check_t_case(&diffs)?;
        }
    }
    // Two large-|t| cases in the far tail.
    cases += check_t_case(&[1.0, 1.1, 0.9, 1.05, 0.95])?;
    cases += check_t_case(
        &(0..30)
            .map(|i| 0.2 + 0.001 * f64::from(i % 3))
            .collect::<Vec<_>>(),
    )?;
    ensure(cases == 50, || format!("{cases} cases"))?;

    let zeros = paired_t_test(&[0.0; 6]).map_err(|e| e.to_string())?;
    ensure(
        zeros.t_statistic == 0.0 && zeros.p_value == 1.0 && !zeros.degenerate,
        || format!("{zeros:?}"),
    )?;
    for c in [0.3, -0.3] {
        let r = paired_t_test(&[c; 6]).map_err(|e| e.to_string())?;
        ensure(
            r.degenerate && r.p_value == 0.0 && r.t_statistic == f64::INFINITY.copysign(c),
            || format!("{r:?}"),
        )?;
    }
    Ok(())
}

fn check_t_case(diffs: &[f64]) -> Result<usize, String> {
    let n = diffs.len();
    let r = paired_t_test(diffs).map_err(|e| e.to_string())?;
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let sd = (diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (nf - 1.0)).sqrt();
    let t = mean / (sd / nf.sqrt());
    ensure((r.t_statistic - t).abs() <= 1e-9 * t.abs().max(1.0), || {
        format!("n={n}: t {} vs {t}", r.t_statistic)
    })?;
    let expected = oracle_p(t, (n - 1) as u32);
    ensure((r.p_value - expected).abs() <= 1e-6, || {
        format!("n={n} t={t}: p {} vs oracle {expected}", r.p_value)
    })?;

    let negated: Vec<f64> = diffs.iter().map(|d| -d).collect();
    let m = paired_t_test(&negated).map_err(|e| e.to_string())?;
    ensure(
        m.t_statistic == -r.t_statistic && m.p_value == r.p_value,
        || format!("n={n}: antisymmetry"),
    )?;
    Ok(1)
}

// ---------------------------------------------------------------------------
// Majority vote

fn round(r: u8, label: u8) -> AnnotationRound {
    AnnotationRound {
        query_id: "q".into(),
        item_id: "i".into(),
        round: r,
        label: RelevanceLabel::from_index(usize::from(label)),
        source: "human".into(),
    }
}

fn majority_vote() -> Check {
    for a in 0..3u8 {
        for b in 0..3u8 {
            for c in 0..3u8 {
                let three = [round(1, a), round(2, b), round(3, c)];
                let two = [round(1, a), round(2, b)];
                let case = format!("({a},{b},{c})");
                if a == b {
                    ensure(resolve_majority(&three).is_err(), || {
                        format!("{case}: round 3 accepted")
                    })?;
                    let r = resolve_majority(&two).map_err(|e| format!("{case}: {e}"))?;
                    ensure(
                        r.final_label.value() == a && r.rounds_used == 2 && !r.adjudicated_flag,
                        || format!("{case}: {r:?}"),
                    )?;
                } else {
                    ensure(resolve_majority(&two).is_err(), || {
                        format!("{case}: unresolved pair accepted")
                    })?;
                    let r = resolve_majority(&three).map_err(|e| format!("{case}: {e}"))?;
                    let votes = |l: u8| [a, b, c].iter().filter(|&&x| x == l).count();
                    let (final_label, adjudicated) = match (0..3).find(|&l| votes(l) >= 2) {
                        Some(l) => (l, false),
                        None => (c, true),
                    };
                    ensure(
                        r.final_label.value() == final_label
                            && r.rounds_used == 3
                            && r.adjudicated_flag == adjudicated,
                        || format!("{case}: {r:?}"),
                    )?;
                }
            }
        }
    }
    let violations: [(&str, Vec<AnnotationRound>); 4] = [
        ("missing round 1", vec![round(2, 1), round(3, 0)]),
        ("missing round 2", vec![round(1, 1)]),
        (
            "duplicate round",
            vec![round(1, 1), round(1, 1), round(2, 1)],
        ),
        ("empty", vec![]),
    ];
    for (name, rounds) in violations {
        ensure(resolve_majority(&rounds).is_err(), || {
            format!("{name} accepted")
        })?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// End-to-end

fn read_agreement(fixture: &Fixture) -> Result<Vec<(usize, Vec<u64>, String)>, String> {
    let csv =
        fs::read_to_string(fixture.dir.join("out/agreement.csv")).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let k = fields[1].parse().map_err(|_| format!("bad k in {line}"))?;
        let cells = fields[2..11]
            .iter()
            .map(|c| c.parse().unwrap_or(u64::MAX))
            .collect();
        rows.push((k, cells, fields[12].to_owned()));
    }
    Ok(rows)
}

fn end_to_end() -> Check {
    let humans = human_patterns(50);
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;

    let truth_dir = root.path().join("truth");
    fs::create_dir_all(&truth_dir).unwrap();
    let truth = write_fixture(&truth_dir, 1, humans.iter().map(|&p| (p, p)).collect());
    let code = main_with_args(args(&["run", "--config", truth.config.to_str().unwrap()]));
    ensure(code == 0, || format!("truth run exited {code}"))?;
    let rows = read_agreement(&truth)?;
    let ks: Vec<usize> = rows.iter().map(|r| r.0).collect();
    ensure(ks == KS, || format!("cutoffs {ks:?}"))?;
    for (k, cells, score) in &rows {
        ensure(score == "1.000" && cells.iter().sum::<u64>() == 50, || {
            format!("truth k={k}: {score} {cells:?}")
        })?;
    }

    let planted_dir = root.path().join("planted");
    fs::create_dir_all(&planted_dir).unwrap();
    let corrupted = write_fixture(&planted_dir, 2, planted(&humans));
    let code = main_with_args(args(&[
        "run",
        "--config",
        corrupted.config.to_str().unwrap(),
    ]));
    ensure(code == 0, || format!("planted run exited {code}"))?;
    let expected = corrupted.expected_matrix().concat();
    ensure(
        expected.iter().sum::<u64>() == 50 && expected[0] + expected[4] + expected[8] < 50,
        || "fixture plants nothing".into(),
    )?;
    for (k, cells, _) in read_agreement(&corrupted)? {
        ensure(cells == expected, || {
            format!("planted k={k}: {cells:?} != {expected:?}")
        })?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Adapter lab

fn random_matrix(rows: usize, cols: usize, s: &mut SeedStream) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || s.uniform(-1.0, 1.0))
}

fn lora_identities() -> Check {
    let start = Instant::now();
    let mut s = SeedStream::new(40, "lora", 0);
    let (d_in, d_out, rank, alpha) = (12, 3, 4, 6.0);
    let base = DenseLayer::new(
        random_matrix(d_out, d_in, &mut s),
        Array1::from(vec![0.2, -0.1, 0.05]),
    )
    .map_err(|e| e.to_string())?;
    let adapter = LoraAdapter::from_parts(
        random_matrix(rank, d_in, &mut s),
        random_matrix(d_out, rank, &mut s),
        alpha,
        0.0,
    )
    .map_err(|e| e.to_string())?;
    let merged = merge(&base, &adapter).map_err(|e| e.to_string())?;
    let scale = alpha / rank as f64;
    for _ in 0..500 {
        let x = Array1::from_shape_simple_fn(d_in, || s.uniform(-3.0, 3.0));
        let y = forward_adapted(&base, &adapter, &x).map_err(|e| e.to_string())?;
        for i in 0..d_out {
            let mut expected = base.bias[i];
            for j in 0..d_in {
                let ba: f64 = (0..rank)
                    .map(|r| adapter.b[[i, r]] * adapter.a[[r, j]])
                    .sum();
                expected += (base.weight[[i, j]] + scale * ba) * x[j];
            }
            ensure((y[i] - expected).abs() <= 1e-12, || {
                format!("dense oracle off by {}", (y[i] - expected).abs())
            })?;
        }
        let via_merge = merged.forward(&x).unwrap();
        let gap = (&via_merge - &y).iter().fold(0.0f64, |m, d| m.max(d.abs()));
        ensure(gap <= 1e-9, || format!("merge off by {gap}"))?;
    }

    let zero_b = LoraAdapter::new(d_in, d_out, rank, alpha, 0.1, 3).map_err(|e| e.to_string())?;
    for _ in 0..100 {
        let x = Array1::from_shape_simple_fn(d_in, || s.uniform(-3.0, 3.0));
        ensure(
            forward_adapted(&base, &zero_b, &x).unwrap() == base.forward(&x).unwrap(),
            || "zero-B changed output".into(),
        )?;
    }
    ensure(merge(&base, &zero_b).unwrap() == base, || {
        "zero-B merge changed weights".into()
    })?;

    let xs = random_matrix(20, d_in, &mut s);
    let ys: Vec<RelevanceLabel> = (0..20).map(|i| RelevanceLabel::from_index(i % 3)).collect();
    let weights = [1.0, 1.5, 0.7];
    let full = Classifier::full(base.clone());
    let full_err = grad_check(&full, &xs, &ys, &weights, 1e-5).map_err(|e| e.to_string())?;
    let lora = Classifier::lora(base.clone(), adapter.clone()).map_err(|e| e.to_string())?;
    let lora_err = grad_check(&lora, &xs, &ys, &weights, 1e-5).map_err(|e| e.to_string())?;
    ensure(full_err < 1e-4 && lora_err < 1e-4, || {
        format!("gradient error full {full_err:e} lora {lora_err:e}")
    })?;

    for d_in in [1, 7, 64, 2048] {
        for d_out in [1, 3, 10] {
            ensure(
                param_count(d_in, d_out, TrainMode::Full, 0) == d_in * d_out + d_out,
                || "full count".into(),
            )?;
            for r in [1, 2, 8, 16] {
                ensure(
                    param_count(d_in, d_out, TrainMode::Lora, r) == r * (d_in + d_out),
                    || "lora count".into(),
                )?;
            }
        }
    }

    let config = TrainConfig::default();
    let mut plateau = PlateauScheduler::new(config.plateau_min_delta, config.plateau_factor);
    let mut lr = config.learning_rate;
    let mut reductions = Vec::new();
    for (step, metric) in [0.50, 0.60, 0.6005, 0.70].into_iter().enumerate() {
        if plateau.observe(metric) {
            lr *= config.plateau_factor;
            reductions.push(step + 1);
        }
    }
    ensure(
        reductions == [3] && lr == config.learning_rate / 2.0,
        || format!("reductions at {reductions:?}, lr {lr}"),
    )?;
    within(Duration::from_secs(60), start)
}

// ---------------------------------------------------------------------------
// Micro f1

fn micro_f1_identity() -> Check {
    let mut s = SeedStream::new(50, "f1", 0);
    for case in 0..1000 {
        let mut counts = [[0u64; 3]; 3];
        for row in counts.iter_mut() {
            for c in row.iter_mut() {
                *c = if s.below(5) == 0 { 0 } else { s.below(1000) };
            }
        }
        if counts.iter().flatten().all(|&c| c == 0) {
            counts[0][0] = 1;
        }
        let report = f1_scores(&ConfusionMatrix3::new(counts)).map_err(|e| e.to_string())?;
        // Pooled one-vs-rest counts.
        let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
        for (g, row) in counts.iter().enumerate() {
            for (p, &n) in row.iter().enumerate() {
                if g == p {
                    tp += n;
                } else {
                    // A miss is a false positive for `p` and a false negative for `g`.
                    fp += n;
                    fneg += n;
                }
            }
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / (tp + fneg) as f64;
        let pooled = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let trace: u64 = (0..3).map(|i| counts[i][i]).sum();
        let identity = trace as f64 / counts.iter().flatten().sum::<u64>() as f64;
        ensure(
            report.micro == identity && (pooled - identity).abs() < 1e-12,
            || {
                format!(
                    "case {case}: micro {} pooled {pooled} trace/total {identity}",
                    report.micro
                )
            },
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Determinism

fn determinism() -> Check {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fixture = write_fixture(root.path(), 9, planted(&human_patterns(50)));
    let config = fixture.config.to_str().unwrap();
    let run = |extra: &[&str]| {
        let mut parts = vec!["run", "--config", config];
        parts.extend_from_slice(extra);
        main_with_args(args(&parts))
    };
    ensure(run(&[]) == 0, || "first run failed".into())?;
    let out = root.path().join("out");
    let first = snapshot(&out);
    ensure(first.len() > 10, || format!("only {} files", first.len()))?;
    ensure(run(&[]) == 0, || "second run failed".into())?;
    let second = snapshot(&out);
    ensure(first == second, || differing(&first, &second))?;

    let fresh = root.path().join("fresh");
    ensure(run(&["--output", fresh.to_str().unwrap()]) == 0, || {
        "fresh run failed".into()
    })?;
    let without_echo = |snap: Vec<(String, Vec<u8>)>| -> Vec<(String, Vec<u8>)> {
        snap.into_iter()
            .filter(|(name, _)| name != "effective_config.json")
            .collect()
    };
    let (a, b) = (without_echo(first), without_echo(snapshot(&fresh)));
    ensure(a == b, || differing(&a, &b))
}

fn differing(a: &[(String, Vec<u8>)], b: &[(String, Vec<u8>)]) -> String {
    let a: BTreeMap<_, _> = a.iter().cloned().collect();
    let b: BTreeMap<_, _> = b.iter().cloned().collect();
    let names: Vec<&String> = a
        .keys()
        .chain(b.keys())
        .filter(|n| a.get(*n) != b.get(*n))
        .collect();
    format!("files differ: {names:?}")
}

fn main() {
    let checks: [NamedCheck; 9] = [
        (
            "published agreement matrices: 18 combined scores and reversal checks",
            agreement_matrices,
        ),
        (
            "published label distribution: 64.19 / 19.68 / 16.12 of 6,055,251",
            label_distribution,
        ),
        (
            "nDCG properties: 10,000 cases with brute-force oracle",
            ndcg_properties,
        ),
        (
            "paired t-test: 50 cases vs numeric integration within 1e-6",
            t_test_oracle,
        ),
        (
            "majority vote: 27 round combinations and protocol violations",
            majority_vote,
        ),
        (
            "end-to-end: oracle judge agrees fully, planted flips reproduced",
            end_to_end,
        ),
        (
            "adapter lab: identities, gradients, parameter counts, plateau",
            lora_identities,
        ),
        (
            "micro f1 equals trace/total on 1,000 matrices",
            micro_f1_identity,
        ),
        ("determinism: repeated runs are byte-identical", determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let ms = start.elapsed().as_millis();
        match outcome {
            Ok(()) => println!("PASS  {name} ({ms} ms)"),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {name} ({ms} ms): {reason}");
            }
        }
    }
    println!(
        "{} of {} acceptance checks passed",
        checks.len() - failed,
        checks.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
