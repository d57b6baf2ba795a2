//! Finite-difference verification of the mixture gradients.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::MultiViewSample;
use crate::error::{Error, Result};
use crate::mov::{self, DropoutSpec, Gate, MovParams, Objective};
use crate::nn::{self, MlpParams, Parameters};
use crate::rng;

pub const FD_STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-6;
/// Magnitude below which errors are measured absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-2;
/// Hidden pre-activations closer than this to zero are treated as sitting
/// on a ReLU kink, where central differences are not meaningful.
pub const KINK_MARGIN: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// A random model, batch and objective weight to check.
#[derive(Debug, Clone)]
pub struct GradCheckCase {
    pub params: MovParams,
    pub batch: Vec<MultiViewSample>,
    pub lambda: f64,
    pub dropout: Option<DropoutSpec>,
}

fn random_mlp(r: &mut rng::Rng, input: usize, output: usize) -> Result<MlpParams> {
    let depth = r.random_range(0..=2);
    let mut sizes = alloc::vec![input];
    (0..depth).for_each(|_| sizes.push(r.random_range(1..=8)));
    sizes.push(output);
    let mut p = nn::init_mlp(&sizes, r.random())?;
    let bias = Normal::new(0.0, 0.3).unwrap();
    for l in p.layers_mut() {
        l.biases.iter_mut().for_each(|b| *b = bias.sample(r));
    }
    Ok(p)
}

/// Draws a small two-class case: 2 or 3 views of 1–4 features, networks
/// with up to two hidden layers of at most 8 units, 1–8 samples.
///
/// Draws whose hidden pre-activations come within [`KINK_MARGIN`] of zero
/// are rejected and redrawn from the next derived seed.
pub fn random_case(seed: u64, lambda: f64, with_dropout: bool) -> Result<GradCheckCase> {
    for attempt in 0..1000u64 {
        let mut r = rng::rng(rng::derive(seed, &[attempt]));
        let m = r.random_range(2..=3);
        let dims: Vec<usize> = (0..m).map(|_| r.random_range(1..=4)).collect();
        let total: usize = dims.iter().sum();
        let gate = random_mlp(&mut r, total, m)?;
        let experts = dims
            .iter()
            .map(|&d| random_mlp(&mut r, d, 2))
            .collect::<Result<Vec<_>>>()?;
        let params = MovParams::new(Gate::Learned(gate), experts)?;
        let n = r.random_range(1..=8);
        let batch: Vec<MultiViewSample> = (0..n)
            .map(|t| {
                let views = dims
                    .iter()
                    .map(|&d| (0..d).map(|_| StandardNormal.sample(&mut r)).collect())
                    .collect();
                MultiViewSample::new(format!("g{t}"), views, r.random_range(0..2))
            })
            .collect();
        let dropout = with_dropout.then(|| DropoutSpec {
            rate: 0.5,
            seed: r.random(),
            gate: true,
        });
        let pre = mov::hidden_pre_activations(&params, &batch, dropout.as_ref())?;
        if pre.iter().all(|z| z.abs() > KINK_MARGIN) {
            return Ok(GradCheckCase {
                params,
                batch,
                lambda,
                dropout,
            });
        }
    }
    Err(Error::InvalidConfig("could not draw a kink-free gradient-check case".into()))
}

/// Worst relative error between analytic and numeric gradient, per block.
pub fn check_case(case: &GradCheckCase) -> Result<Vec<(String, f64)>> {
    let objective = Objective::composite(case.lambda);
    let analytic = mov::backward(&case.params, &case.batch, &objective, case.dropout.as_ref())?.gradients;
    let numeric = nn::finite_diff_gradient(
        |p: &MovParams| Ok::<_, Error>(mov::backward(p, &case.batch, &objective, case.dropout.as_ref())?.loss),
        &case.params,
        FD_STEP,
    )?;
    Ok(analytic
        .block_names()
        .into_iter()
        .zip(analytic.blocks().iter().zip(numeric.blocks()))
        .map(|(name, (a, n))| {
            let worst = a
                .iter()
                .zip(n)
                .map(|(x, y)| relative_error(*x, *y))
                .fold(0.0, f64::max);
            (name, worst)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub seed: u64,
    pub trials: usize,
    pub lambdas: Vec<f64>,
    pub cases: usize,
    pub tolerance: f64,
    /// Worst error per block path, over all cases.
    pub worst_by_block: BTreeMap<String, f64>,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Checks `trials` random cases for every λ, each both without dropout and
/// with dropout under fixed masks.
pub fn run(seed: u64, trials: usize, lambdas: &[f64], tolerance: f64) -> Result<GradCheckReport> {
    if trials == 0 {
        return Err(Error::InvalidConfig("gradcheck needs at least one trial".into()));
    }
    let mut worst_by_block = BTreeMap::new();
    let mut cases = 0;
    for trial in 0..trials {
        for (li, &lambda) in lambdas.iter().enumerate() {
            for dropout in [false, true] {
                let case_seed = rng::derive(seed, &[trial as u64, li as u64, dropout as u64]);
                let case = random_case(case_seed, lambda, dropout)?;
                for (name, err) in check_case(&case)? {
                    let e = worst_by_block.entry(name).or_insert(0.0f64);
                    *e = e.max(err);
                }
                cases += 1;
            }
        }
    }
    let max_rel_error = worst_by_block.values().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        seed,
        trials,
        lambdas: lambdas.to_vec(),
        cases,
        tolerance,
        worst_by_block,
        max_rel_error,
        passed: max_rel_error < tolerance,
    })
}
