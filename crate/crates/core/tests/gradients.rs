//! Analytic gradients against finite differences and against the
//! posterior-weighted decomposition of the mixture gradient.

use mov_core::baselines::{InputSelector, MlpModel};
use mov_core::gradcheck::{self, relative_error, FD_STEP, TOLERANCE};
use mov_core::mov::{self, Gate, MovParams, Objective};
use mov_core::nn::{self, Mode, Parameters};
use mov_core::rng;
use mov_core::train::Classifier;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| relative_error(*x, *y)).fold(0.0, f64::max)
}

#[test]
fn mlp_backward_matches_finite_differences() {
    let mut checked = 0;
    for seed in 0..200u64 {
        let mut r = rng::rng(seed);
        let depth = r.random_range(1..=3);
        let mut sizes = vec![r.random_range(1..=8)];
        (0..depth).for_each(|_| sizes.push(r.random_range(1..=8)));
        let params = nn::init_mlp(&sizes, seed).unwrap();
        let x: Vec<f64> = (0..sizes[0]).map(|_| StandardNormal.sample(&mut r)).collect();
        let upstream: Vec<f64> = (0..*sizes.last().unwrap()).map(|_| StandardNormal.sample(&mut r)).collect();
        let rate = if seed % 2 == 0 { 0.0 } else { 0.5 };
        let mask_seed: u64 = r.random();
        let run = |p: &nn::MlpParams| {
            let mut mr = rng::rng(mask_seed);
            p.forward(&x, Mode::Train { dropout_rate: rate, rng: &mut mr })
        };
        let cache = run(&params).unwrap();
        let near_kink = cache.pre_activations[..depth]
            .iter()
            .flatten()
            .any(|z| z.abs() < gradcheck::KINK_MARGIN);
        if near_kink {
            continue;
        }
        let analytic = params.backward(&cache, &upstream).unwrap();
        let numeric = nn::finite_diff_gradient(
            |p: &nn::MlpParams| {
                run(p).map(|c| c.logits().iter().zip(&upstream).map(|(z, u)| z * u).sum::<f64>())
            },
            &params,
            FD_STEP,
        )
        .unwrap();
        let err = max_rel(&analytic.flatten(), &numeric.flatten());
        assert!(err < TOLERANCE, "seed {seed}: {err:e}");
        checked += 1;
    }
    assert!(checked >= 100, "only {checked} kink-free nets");
}

#[test]
fn mixture_backward_matches_finite_differences() {
    let report = gradcheck::run(17, 9, &[0.0, 1.0, 5.0], TOLERANCE).unwrap();
    assert_eq!(report.cases, 54);
    assert!(report.passed, "{report:#?}");
    assert!(report.worst_by_block.keys().any(|k| k.starts_with("gate.")));
}

#[test]
fn gradcheck_is_deterministic() {
    let a = gradcheck::run(3, 2, &[1.0], TOLERANCE).unwrap();
    let b = gradcheck::run(3, 2, &[1.0], TOLERANCE).unwrap();
    assert_eq!(a, b);
}

/// Expert gradient of the mixture term, rebuilt as Σ_t w_ti ∇ log p(y_t|x_ti)
/// from prediction-space posteriors and standalone single-view gradients.
fn posterior_weighted_expert_grads(params: &MovParams, batch: &[mov_core::MultiViewSample]) -> Vec<Vec<f64>> {
    let n = batch.len() as f64;
    let mut out: Vec<Vec<f64>> = params.experts().iter().map(|e| vec![0.0; e.param_count()]).collect();
    for s in batch {
        let pred = mov::forward(params, &s.views, None).unwrap();
        let w = mov::posterior_weights(&pred, s.label).unwrap().w;
        for (i, expert) in params.experts().iter().enumerate() {
            let standalone = MlpModel {
                net: expert.clone(),
                input: InputSelector::View(i),
            };
            // gradient of −log p(y|x_i) for this one sample
            let (_, g) = standalone.loss_and_gradient(std::slice::from_ref(s), 0.0, 0.0, 0).unwrap();
            out[i].iter_mut().zip(g.flatten()).for_each(|(o, gi)| *o += w[i] * gi / n);
        }
    }
    out
}

fn expert_grads(g: &MovParams) -> Vec<Vec<f64>> {
    g.experts().iter().map(|e| e.flatten()).collect()
}

#[test]
fn expert_gradient_is_posterior_weighted() {
    for seed in 0..20u64 {
        let case = gradcheck::random_case(seed + 1000, 0.0, false).unwrap();
        let direct = mov::backward(&case.params, &case.batch, &Objective::composite(0.0), None).unwrap();
        let rebuilt = posterior_weighted_expert_grads(&case.params, &case.batch);
        for (a, b) in expert_grads(&direct.gradients).iter().zip(&rebuilt) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-10, "seed {seed}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn large_lambda_expert_gradients_approach_standalone() {
    let lambda = 1e6;
    for seed in 0..5u64 {
        let case = gradcheck::random_case(seed + 2000, lambda, false).unwrap();
        let g = mov::backward(&case.params, &case.batch, &Objective::composite(lambda), None).unwrap();
        let g0 = mov::backward(&case.params, &case.batch, &Objective::composite(0.0), None).unwrap();
        for (i, (expert, eg)) in case.params.experts().iter().zip(g.gradients.experts()).enumerate() {
            let standalone = MlpModel {
                net: expert.clone(),
                input: InputSelector::View(i),
            };
            let (_, sg) = standalone.loss_and_gradient(&case.batch, 0.0, 0.0, 0).unwrap();
            let scale = sg.flatten().iter().fold(1e-12f64, |m, v| m.max(v.abs()));
            for (a, b) in eg.flatten().iter().zip(sg.flatten()) {
                // only the mixture share, of order 1/λ, differs
                assert!((a / lambda - b).abs() <= 1e-5 * scale, "seed {seed}: {} vs {b}", a / lambda);
            }
        }
        // λ touches no gate parameter
        match (g.gradients.gate(), g0.gradients.gate()) {
            (Gate::Learned(a), Gate::Learned(b)) => assert_eq!(a, b),
            _ => unreachable!(),
        }
    }
}

#[test]
fn objective_is_deterministic_under_dropout() {
    let case = gradcheck::random_case(77, 1.0, true).unwrap();
    let obj = Objective::composite(1.0);
    let a = mov::backward(&case.params, &case.batch, &obj, case.dropout.as_ref()).unwrap();
    let b = mov::backward(&case.params, &case.batch, &obj, case.dropout.as_ref()).unwrap();
    assert_eq!(a, b);
    let value = mov::composite_objective(&case.params, &case.batch, &obj, case.dropout.as_ref()).unwrap();
    assert_eq!(value, -a.loss);
}
