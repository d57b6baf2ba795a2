//! Parallel cross-validated comparison.
//!
//! Every (model, fold) pair is an independent job: it reads the shared
//! dataset and plan and owns everything it trains. Workers pull jobs from
//! a counter and send outcomes back over a channel; outcomes are put back
//! in (model, fold) order before aggregation, so the result does not
//! depend on the worker count or on scheduling.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use mov_core::data::{self, FoldPlan};
use mov_core::experiment::{self, Comparison, FoldOutcome, Protocol};
use mov_core::{Dataset, ModelKind};

use crate::error::{CliError, Result};

pub fn default_workers() -> usize {
    thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Runs every fold of every model in `kinds`, up to `workers` at a time.
/// Outcomes come back sorted by model (in `kinds` order) then fold.
pub fn run_folds(
    dataset: &Dataset,
    plan: &FoldPlan,
    kinds: &[ModelKind],
    protocol: &Protocol,
    seed: u64,
    workers: usize,
) -> Result<Vec<FoldOutcome>> {
    let jobs: Vec<(usize, ModelKind, usize)> = kinds
        .iter()
        .flat_map(|&k| (0..plan.k_folds).map(move |f| (k, f)))
        .enumerate()
        .map(|(j, (k, f))| (j, k, f))
        .collect();
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel();
    thread::scope(|s| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            let tx = tx.clone();
            let (jobs, next, failed) = (&jobs, &next, &failed);
            s.spawn(move || loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                if j >= jobs.len() || failed.load(Ordering::Relaxed) {
                    break;
                }
                let (_, kind, fold) = jobs[j];
                let out = experiment::run_fold(dataset, plan, fold, kind, protocol, seed);
                if out.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                if tx.send((j, out)).is_err() {
                    break;
                }
            });
        }
    });
    drop(tx);
    let mut results: Vec<(usize, mov_core::Result<FoldOutcome>)> = rx.into_iter().collect();
    results.sort_by_key(|(j, _)| *j);
    let mut outcomes = Vec::with_capacity(jobs.len());
    for (j, r) in results {
        let (_, kind, fold) = jobs[j];
        outcomes.push(r.map_err(|source| CliError::Fold {
            model: kind,
            fold,
            source,
        })?);
    }
    if outcomes.len() != jobs.len() {
        return Err(CliError::CheckFailed("fold workers stopped early".into()));
    }
    Ok(outcomes)
}

/// Plans the folds, runs them and aggregates the comparison.
pub fn compare(
    dataset: &Dataset,
    kinds: &[ModelKind],
    protocol: &Protocol,
    seed: u64,
    workers: usize,
) -> Result<(FoldPlan, Vec<FoldOutcome>, Comparison)> {
    protocol.validate()?;
    let plan = data::stratified_kfold(dataset, protocol.k_folds, seed)?;
    let outcomes = run_folds(dataset, &plan, kinds, protocol, seed, workers)?;
    let comparison = Comparison::assemble(dataset, kinds, &outcomes)?;
    Ok((plan, outcomes, comparison))
}
