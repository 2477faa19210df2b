use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use ssar_core::linalg::{thin_svd, DEFAULT_RANK_TOL};
use ssar_core::regression::{
    draw_sample, exact_solution, solve_active_with_svd, ActiveConfig, LabelOracle,
};
use ssar_core::rng::derive_seed;
use ssar_core::verify::TrialReport;
use ssar_core::{Dataset, SvdFactors};

use crate::config::{with_overrides, ExperimentConfig, SamplerKind, Source};
use crate::exit::Failure;
use crate::records::{emit, print_config_line, with_pool};
use crate::RunArgs;

#[derive(Debug, Serialize)]
struct TrialFailure {
    seed: u64,
    error: String,
}

#[derive(Debug, Serialize)]
struct Stat {
    mean: f64,
    stddev: f64,
}

#[derive(Debug, Serialize)]
struct Summary {
    trials: usize,
    failed: usize,
    queries_billed: Option<Stat>,
    queries_iteration_level: Option<Stat>,
    ratio: Option<Stat>,
}

#[derive(Debug, Serialize)]
struct SummaryLine {
    summary: Summary,
}

fn from_args(a: &RunArgs) -> ExperimentConfig {
    ExperimentConfig {
        source: a.manifest.clone().map(Source::Manifest),
        sampler: a.sampler.sampler,
        epsilon: a.sampler.eps,
        c0: a.sampler.c0,
        oversample_c: a.sampler.oversample_c,
        uniform_m: a.sampler.m,
        base_seed: a.seed,
        trials: a.trials,
        jobs: a.jobs,
        output: a.out.clone(),
        assert_lemmas: a.sampler.assert_lemmas,
        retry: a.sampler.retry,
        max_restarts: a.sampler.max_restarts,
    }
}

fn stat(values: &[f64]) -> Option<Stat> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some(Stat {
        mean,
        stddev: var.sqrt(),
    })
}

struct Prepared {
    ds: Dataset,
    svd: SvdFactors,
    hidden: Option<Vec<f64>>,
    opt: Option<f64>,
}

fn trial(cfg: &ExperimentConfig, prep: &Prepared, seed: u64) -> Result<TrialReport, Failure> {
    let started = Instant::now();
    let active = ActiveConfig {
        epsilon: cfg.epsilon,
        sampler: cfg.sampler(),
        seed,
    };
    let n1 = prep.ds.n_unlabeled();
    let (m, billed, iteration_level, ratio, well_balanced) = match &prep.hidden {
        Some(hidden) => {
            let mut oracle = LabelOracle::new(&prep.ds, hidden)?;
            let out = solve_active_with_svd(&prep.ds, &prep.svd, &mut oracle, &active, prep.opt)?;
            let s = out.solution;
            (s.iterations, s.queries, s.iteration_queries, s.ratio, out.well_balanced)
        }
        // No hidden labels: sample only and count the rows that would be billed.
        None => {
            let (sample, _, well_balanced, _) = draw_sample(&prep.svd, &active)?;
            let distinct: BTreeSet<usize> =
                sample.indices.iter().copied().filter(|&i| i < n1).collect();
            (sample.len(), distinct.len(), sample.draws_below(n1), None, well_balanced)
        }
    };
    Ok(TrialReport {
        seed,
        sampler: active.sampler.name().to_string(),
        m,
        queries_billed: billed,
        queries_iteration_level: iteration_level,
        ratio,
        well_balanced,
        gamma: (cfg.sampler == SamplerKind::Asura).then(|| cfg.epsilon.sqrt() / cfg.c0),
        runtime_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

pub fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let cfg = with_overrides(from_args(&args), args.config.as_deref())?;
    cfg.validate()?;
    print_config_line("run", &cfg, cfg.base_seed)?;
    let source = cfg.source.as_ref().expect("validated");
    let (ds, hidden) = source.load(cfg.base_seed)?;
    let svd = thin_svd(&ds.stacked(), DEFAULT_RANK_TOL)?;
    let opt = match &hidden {
        Some(h) => {
            let mut full = h.clone();
            full.extend_from_slice(ds.y_labeled());
            Some(exact_solution(&ds, &full)?.1)
        }
        None => None,
    };
    let prep = Prepared { ds, svd, hidden, opt };

    let seeds: Vec<u64> = (0..cfg.trials as u64).map(|t| derive_seed(cfg.base_seed, t)).collect();
    let results: Vec<(u64, Result<TrialReport, Failure>)> = with_pool(cfg.jobs, || {
        seeds.par_iter().map(|&s| (s, trial(&cfg, &prep, s))).collect()
    })?;

    let out = cfg.output.as_deref();
    let mut reports = Vec::new();
    let mut hard_failure = None;
    for (seed, r) in results {
        match r {
            Ok(rep) => {
                emit(&rep, out)?;
                reports.push(rep);
            }
            Err(f) => {
                emit(&TrialFailure { seed, error: f.to_string() }, out)?;
                if matches!(f, Failure::HardLemma(_)) && hard_failure.is_none() {
                    hard_failure = Some(f);
                }
            }
        }
    }
    let billed: Vec<f64> = reports.iter().map(|r| r.queries_billed as f64).collect();
    let iter_level: Vec<f64> = reports.iter().map(|r| r.queries_iteration_level as f64).collect();
    let ratios: Vec<f64> = reports.iter().filter_map(|r| r.ratio).collect();
    let summary = SummaryLine {
        summary: Summary {
            trials: cfg.trials,
            failed: cfg.trials - reports.len(),
            queries_billed: stat(&billed),
            queries_iteration_level: stat(&iter_level),
            ratio: stat(&ratios),
        },
    };
    emit(&summary, out)?;
    match hard_failure {
        Some(f) => Err(f),
        None => Ok(()),
    }
}
