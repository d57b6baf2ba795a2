//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use mov::cli;
use mov::config::RunConfig;
use mov_core::baselines::{self, InputSelector, LayerConfig, MlpModel};
use mov_core::data::{self, generate_synthetic, StandardizationStats, SyntheticConfig};
use mov_core::eval::{self, ScoredPrediction};
use mov_core::experiment::{self, Protocol};
use mov_core::mov::{self as mixture, MovParams, Objective};
use mov_core::train::{self, Classifier, TrainConfig};
use mov_core::{gradcheck, ModelKind, MultiViewSample, Parameters};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn benchmark_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/benchmark.toml")
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let report = gradcheck::run(2024, 9, &[0.0, 1.0, 5.0], gradcheck::TOLERANCE).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(
        report.cases >= 50 && report.passed && report.max_rel_error < 1e-6 && elapsed < Duration::from_secs(30),
        format!(
            "{} cases, worst relative error {:.2e}, {:.1}s",
            report.cases,
            report.max_rel_error,
            elapsed.as_secs_f64()
        ),
    )
}

/// Σ_t w_ti ∇(−log p_i(y_t | x_ti)) / n, one standalone network per view.
fn posterior_weighted(params: &MovParams, batch: &[MultiViewSample]) -> Vec<Vec<f64>> {
    let n = batch.len() as f64;
    let mut out: Vec<Vec<f64>> = params.experts().iter().map(|e| vec![0.0; e.param_count()]).collect();
    for s in batch {
        let pred = mixture::forward(params, &s.views, None).unwrap();
        let w = mixture::posterior_weights(&pred, s.label).unwrap().w;
        for (i, expert) in params.experts().iter().enumerate() {
            let standalone = MlpModel {
                net: expert.clone(),
                input: InputSelector::View(i),
            };
            let (_, g) = standalone.loss_and_gradient(std::slice::from_ref(s), 0.0, 0.0, 0).unwrap();
            out[i].iter_mut().zip(g.flatten()).for_each(|(o, gi)| *o += w[i] * gi / n);
        }
    }
    out
}

fn structural_check() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let case = gradcheck::random_case(seed + 5000, 0.0, false).map_err(|e| e.to_string())?;
        let direct = mixture::backward(&case.params, &case.batch, &Objective::composite(0.0), None).map_err(|e| e.to_string())?;
        let rebuilt = posterior_weighted(&case.params, &case.batch);
        for (e, r) in direct.gradients.experts().iter().zip(&rebuilt) {
            for (x, y) in e.flatten().iter().zip(r) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    check(worst < 1e-10, format!("20 cases, max abs difference {worst:.2e}"))
}

fn reduction_identity() -> Outcome {
    let ds = generate_synthetic(
        &SyntheticConfig {
            n_samples: 240,
            view_dims: vec![4, 3],
            ..SyntheticConfig::default()
        },
        13,
    )
    .map_err(|e| e.to_string())?;
    let (tr, va) = ds.samples.split_at(200);
    let layers = LayerConfig {
        hidden: vec![8, 8],
        gate_hidden: vec![3, 3],
    };
    let avg = baselines::avg_fusion_model(&[4, 3], 2, &layers, 99).map_err(|e| e.to_string())?;
    let mut mov = baselines::mov_model(&[4, 3], 2, &layers, 99).map_err(|e| e.to_string())?;
    mov.params.zero_gate();
    mov.freeze_gate = true;
    let cfg = TrainConfig {
        max_epochs: 40,
        batch_size: Some(32),
        seed: 17,
        ..TrainConfig::default()
    };
    let (a, _) = train::fit(&avg, tr, va, &cfg).map_err(|e| e.to_string())?;
    let (m, _) = train::fit(&mov, tr, va, &cfg).map_err(|e| e.to_string())?;
    let mut mismatches = 0;
    for s in tr {
        let pa = a.predict_full(&s.views).map_err(|e| e.to_string())?;
        let pm = m.predict_full(&s.views).map_err(|e| e.to_string())?;
        if pa.mixture_dist != pm.mixture_dist {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("200 samples, {mismatches} differ bitwise"))
}

fn benchmark() -> Result<(Outcome, Outcome), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut config = RunConfig::load(&benchmark_config()).map_err(|e| e.to_string())?;
    config.out = Some(dir.path().to_path_buf());
    let start = Instant::now();
    let report = cli::compare(&config).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let c = &report.comparison;
    let auc = |k| c.model(k).map(|m| m.cv.mean.auc).ok_or("missing model");
    let (mov, avg, concat) = (auc(ModelKind::Mov)?, auc(ModelKind::Avg)?, auc(ModelKind::Concat)?);
    let p = c.delong_against(ModelKind::Avg).ok_or("missing DeLong entry")?.result.p_value;
    let in_time = elapsed < Duration::from_secs(600);
    let table = check(
        mov >= avg + 0.02 && mov >= concat && p < 0.05 && in_time,
        format!(
            "MoV {mov:.4}, Avg {avg:.4}, Concat {concat:.4}, DeLong p vs Avg {p:.2e}, {:.0}s",
            elapsed.as_secs_f64()
        ),
    );
    let agreement = c.model(ModelKind::Mov).and_then(|m| m.gate_agreement).ok_or("no gate agreement")?;
    let gate = check(agreement >= 0.75, format!("gate picks the informative view on {:.1}% of test samples", agreement * 100.0));
    Ok((table, gate))
}

fn psi(x: f64, y: f64) -> f64 {
    if x > y {
        1.0
    } else if x == y {
        0.5
    } else {
        0.0
    }
}

/// AUCs and difference variance from explicit pair enumeration.
fn brute_delong(a: &[f64], b: &[f64], labels: &[usize]) -> (f64, f64, f64) {
    let comps = |s: &[f64]| {
        let pos: Vec<f64> = s.iter().zip(labels).filter(|(_, l)| **l == 1).map(|(v, _)| *v).collect();
        let neg: Vec<f64> = s.iter().zip(labels).filter(|(_, l)| **l == 0).map(|(v, _)| *v).collect();
        let v10: Vec<f64> = pos.iter().map(|x| neg.iter().map(|y| psi(*x, *y)).sum::<f64>() / neg.len() as f64).collect();
        let v01: Vec<f64> = neg.iter().map(|y| pos.iter().map(|x| psi(*x, *y)).sum::<f64>() / pos.len() as f64).collect();
        (v10, v01)
    };
    let cov = |x: &[f64], y: &[f64]| {
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        x.iter().zip(y).map(|(p, q)| (p - mx) * (q - my)).sum::<f64>() / (n - 1.0)
    };
    let (a10, a01) = comps(a);
    let (b10, b01) = comps(b);
    let var = (cov(&a10, &a10) + cov(&b10, &b10) - 2.0 * cov(&a10, &b10)) / a10.len() as f64
        + (cov(&a01, &a01) + cov(&b01, &b01) - 2.0 * cov(&a01, &b01)) / a01.len() as f64;
    (
        a10.iter().sum::<f64>() / a10.len() as f64,
        b10.iter().sum::<f64>() / b10.len() as f64,
        var,
    )
}

fn preds(scores: &[f64], labels: &[usize]) -> Vec<ScoredPrediction> {
    scores
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (s, l))| ScoredPrediction::new(format!("s{i}"), *l, *s))
        .collect()
}

fn delong_oracle() -> Outcome {
    let mut r = mov_core::rng::rng(606);
    let mut worst = 0.0f64;
    let mut self_p_ok = true;
    for _ in 0..100 {
        let n = r.random_range(4..=20);
        let mut labels: Vec<usize> = (0..n).map(|_| r.random_range(0..2)).collect();
        labels[..2].copy_from_slice(&[0, 0]);
        labels[2..4].copy_from_slice(&[1, 1]);
        let a: Vec<f64> = labels.iter().map(|&l| l as f64 * 0.3 + r.random_range(0..6) as f64 / 5.0).collect();
        let b: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let res = eval::delong_test(&preds(&a, &labels), &preds(&b, &labels)).map_err(|e| e.to_string())?;
        let (auc_a, auc_b, var) = brute_delong(&a, &b, &labels);
        worst = worst
            .max((res.auc_a - auc_a).abs())
            .max((res.auc_b - auc_b).abs())
            .max((res.variance - var).abs());
        if var > 0.0 {
            worst = worst.max((res.z - (auc_a - auc_b) / var.sqrt()).abs());
        }
        let same = eval::delong_test(&preds(&a, &labels), &preds(&a, &labels)).map_err(|e| e.to_string())?;
        self_p_ok &= same.p_value == 1.0;
    }
    check(
        worst < 1e-9 && self_p_ok,
        format!("100 sets, max difference {worst:.2e}, self-comparison p = 1: {self_p_ok}"),
    )
}

fn auc_dual() -> Outcome {
    let mut r = mov_core::rng::rng(707);
    let mut worst = 0.0f64;
    for t in 0..1000 {
        let n = r.random_range(2..80);
        let mut labels: Vec<usize> = (0..n).map(|_| r.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        // between 1 and 5 distinct score levels: heavy ties, all-tied sets included
        let levels = 1 + t % 5;
        let scores: Vec<f64> = (0..n).map(|_| r.random_range(0..levels) as f64 * 0.25).collect();
        let p = preds(&scores, &labels);
        let (_, trap) = eval::roc_and_auc(&p).map_err(|e| e.to_string())?;
        let mw = eval::mann_whitney_auc(&p).map_err(|e| e.to_string())?;
        worst = worst.max((trap - mw).abs());
    }
    check(worst < 1e-12, format!("1000 sets, max difference {worst:.2e}"))
}

fn partition_and_leakage_laws() -> Result<String, String> {
    let mut runner = TestRunner::new(Config {
        cases: 64,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = (2usize..8).prop_flat_map(|k| {
        (
            proptest::collection::vec(0usize..2, 4 * k..120).prop_map(move |mut l| {
                for (i, v) in l.iter_mut().take(4 * k).enumerate() {
                    *v = i % 2;
                }
                l
            }),
            Just(k),
            any::<u64>(),
        )
    });
    runner
        .run(&strategy, |(labels, k, seed)| {
            let plan = data::stratified_kfold_labels(&labels, k, seed).unwrap();
            let mut owner = vec![usize::MAX; labels.len()];
            let mut sizes = Vec::new();
            let mut per_class = vec![Vec::new(); 2];
            for f in 0..k {
                let test = plan.test_indices(f);
                for &i in &test {
                    prop_assert_eq!(owner[i], usize::MAX, "sample in two folds");
                    owner[i] = f;
                }
                sizes.push(test.len());
                for c in 0..2 {
                    per_class[c].push(test.iter().filter(|&&i| labels[i] == c).count());
                }
            }
            prop_assert!(owner.iter().all(|&f| f < k), "sample in no fold");
            let spread = |v: &[usize]| v.iter().max().unwrap() - v.iter().min().unwrap();
            prop_assert!(spread(&sizes) <= 1);
            prop_assert!(per_class.iter().all(|c| spread(c) <= 1));
            Ok(())
        })
        .map_err(|e| format!("partition: {e}"))?;

    // standardization seen by each fold is fitted on that fold's inner training set only
    let ds = generate_synthetic(
        &SyntheticConfig {
            n_samples: 200,
            view_dims: vec![3, 2],
            ..SyntheticConfig::default()
        },
        5,
    )
    .map_err(|e| e.to_string())?;
    let protocol = Protocol {
        k_folds: 4,
        train: TrainConfig {
            max_epochs: 3,
            ..TrainConfig::default()
        },
        ..Protocol::default()
    };
    let plan = data::stratified_kfold(&ds, 4, 8).map_err(|e| e.to_string())?;
    let mut stats = Vec::new();
    for fold in 0..4 {
        let out = experiment::run_fold(&ds, &plan, fold, ModelKind::Concat, &protocol, 8).map_err(|e| e.to_string())?;
        let seeds = experiment::FoldSeeds::derive(8, fold);
        let (inner, _) = data::carve_validation(&ds, &plan.train_indices(fold), protocol.validation_fraction, seeds.carve)
            .map_err(|e| e.to_string())?;
        let expected = StandardizationStats::fit(&ds.subset(&inner)).map_err(|e| e.to_string())?;
        if out.standardization != expected {
            return Err(format!("fold {fold} standardization is not its inner-train fit"));
        }
        stats.push(out.standardization);
    }
    if stats.windows(2).any(|w| w[0] == w[1]) {
        return Err("two folds share standardization statistics".into());
    }
    Ok("64 random plans partition exactly; 4 folds standardize on their own inner-train".into())
}

fn rerun_is_bit_identical() -> Result<String, String> {
    let first = tempfile::tempdir().map_err(|e| e.to_string())?;
    let second = tempfile::tempdir().map_err(|e| e.to_string())?;
    let text = r#"
seed = 21
workers = 1
[data.synthetic]
n_samples = 160
view_dims = [3, 3]
[protocol]
k_folds = 4
[protocol.sweep]
hidden_units = [6]
hidden_layers = [1]
lambda = [0.0, 1.0]
dropout = [0.5]
[protocol.train]
max_epochs = 25
batch_size = 16
"#;
    let cfg_path = first.path().join("run.toml");
    std::fs::write(&cfg_path, text).map_err(|e| e.to_string())?;
    let mut config = RunConfig::load(&cfg_path).map_err(|e| e.to_string())?;
    config.out = Some(first.path().join("a"));
    cli::compare(&config).map_err(|e| e.to_string())?;
    let mut again = RunConfig::load(&first.path().join("a/manifest.json")).map_err(|e| e.to_string())?;
    again.out = Some(second.path().to_path_buf());
    again.workers = Some(3);
    cli::compare(&again).map_err(|e| e.to_string())?;
    let mut compared = 0;
    for name in ["report.json", "gates.csv", "fold_plan.json", "roc_mov.csv", "roc_avg.csv", "roc_concat.csv"] {
        let a = std::fs::read(first.path().join("a").join(name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(second.path().join(name)).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("{name} differs on rerun from the manifest"));
        }
        compared += 1;
    }
    Ok(format!("{compared} outputs byte-identical on rerun from the manifest with 1 vs 3 workers"))
}

fn harness_laws() -> Outcome {
    let laws = partition_and_leakage_laws()?;
    let rerun = rerun_is_bit_identical()?;
    Ok(format!("{laws}; {rerun}"))
}

fn main() {
    let mut failed = 0;
    let mut line = |n: usize, name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n} {tag} {name}: {detail}");
    };
    line(1, "gradient fidelity", gradient_fidelity());
    line(2, "posterior-weighted expert gradients", structural_check());
    line(3, "zeroed frozen gate reduces to averaging", reduction_identity());
    match benchmark() {
        Ok((table, gate)) => {
            line(4, "synthetic benchmark ordering", table);
            line(5, "gate picks the informative view", gate);
        }
        Err(e) => {
            line(4, "synthetic benchmark ordering", Err(e.clone()));
            line(5, "gate picks the informative view", Err(e));
        }
    }
    line(6, "DeLong against pair enumeration", delong_oracle());
    line(7, "trapezoid and Mann-Whitney AUC", auc_dual());
    line(8, "harness laws", harness_laws());
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
