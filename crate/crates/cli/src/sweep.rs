use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use ssar_core::asura::{asura_sample, AsuraConfig};
use ssar_core::instances::gen_ridge_instance;
use ssar_core::io::{load_dataset, read_jsonl};
use ssar_core::linalg::{reduced_rank, thin_svd, DEFAULT_RANK_TOL};
use ssar_core::regression::ridge_to_ssal;
use ssar_core::rng::derive_seed;
use ssar_core::verify::{mean_se, strictly_decreasing, SE_SLACK};
use ssar_core::{Dataset, Matrix};

use crate::config::{check_epsilon, with_overrides};
use crate::exit::{invalid, Failure};
use crate::records::{emit, print_config_line, with_pool};
use crate::{SweepArgs, SweepParam};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub manifest: Option<PathBuf>,
    pub n1: usize,
    pub d: usize,
    pub lambda: f64,
    pub epsilon: f64,
    pub c0: f64,
    pub trials: usize,
    pub seed: u64,
    pub jobs: usize,
    pub out: Option<PathBuf>,
}

/// One grid point. `queries` counts sampler draws that land on unlabeled rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub param: SweepParam,
    pub value: f64,
    pub trials: usize,
    pub seed: u64,
    pub c0: f64,
    pub epsilon: f64,
    pub lambda: Option<f64>,
    pub d: usize,
    pub reduced_rank: f64,
    pub gamma: f64,
    pub mean_queries: f64,
    pub se_queries: f64,
    /// `reduced_rank / gamma^2`.
    pub reference: f64,
}

#[derive(Debug, Serialize)]
struct Fit {
    points: usize,
    /// Least-squares `c` in `mean_queries ~ c * reduced_rank / gamma^2`.
    constant: Option<f64>,
    trend: &'static str,
    trend_holds: bool,
}

#[derive(Debug, Serialize)]
struct FitLine {
    fit: Fit,
}

fn from_args(a: &SweepArgs) -> SweepConfig {
    SweepConfig {
        param: a.param,
        values: a.values.clone(),
        manifest: a.manifest.clone(),
        n1: a.n1,
        d: a.d,
        lambda: a.lambda,
        epsilon: a.eps,
        c0: a.c0,
        trials: a.trials,
        seed: a.seed,
        jobs: a.jobs,
        out: a.out.clone(),
    }
}

impl SweepConfig {
    fn validate(&self) -> Result<(), Failure> {
        if self.trials == 0 {
            return Err(invalid("trial count must be at least 1"));
        }
        match self.param {
            SweepParam::Eps => self.values.iter().try_for_each(|&e| check_epsilon(e))?,
            SweepParam::Lambda => {
                check_epsilon(self.epsilon)?;
                if self.values.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
                    return Err(invalid("lambda values must be nonnegative"));
                }
            }
            SweepParam::D => {
                check_epsilon(self.epsilon)?;
                if self.manifest.is_some() {
                    return Err(invalid("a d sweep generates its own instances; drop --manifest"));
                }
                if self.values.iter().any(|&d| !(d >= 1.0 && d.fract() == 0.0)) {
                    return Err(invalid("d values must be positive integers"));
                }
            }
        }
        Ok(())
    }

    /// Same sweep, same grid point: reuse a stored record.
    fn matches(&self, r: &SweepRecord, value: f64) -> bool {
        r.param == self.param && r.value == value && r.trials == self.trials && r.seed == self.seed && r.c0 == self.c0
    }

    fn base_dataset(&self, lambda: f64) -> Result<Dataset, Failure> {
        match &self.manifest {
            Some(path) => Ok(load_dataset(path)?.0),
            None => Ok(gen_ridge_instance(self.n1, self.d, lambda, 1.0, self.seed)?.dataset),
        }
    }

    /// Instance, epsilon and (ridge) lambda at one grid value.
    fn point(&self, value: f64, x1: Option<&Matrix>) -> Result<(Dataset, f64, Option<f64>), Failure> {
        Ok(match self.param {
            SweepParam::Lambda => {
                let x1 = x1.expect("lambda sweeps fix the unlabeled block");
                (ridge_to_ssal(x1, value)?, self.epsilon, Some(value))
            }
            SweepParam::Eps => (self.base_dataset(self.lambda)?, value, self.manifest.is_none().then_some(self.lambda)),
            SweepParam::D => {
                let ds = gen_ridge_instance(self.n1, value as usize, self.lambda, 1.0, self.seed)?.dataset;
                (ds, self.epsilon, Some(self.lambda))
            }
        })
    }
}

fn measure(cfg: &SweepConfig, value: f64, x1: Option<&Matrix>) -> Result<SweepRecord, Failure> {
    let (ds, epsilon, lambda) = cfg.point(value, x1)?;
    let n1 = ds.n_unlabeled();
    let svd = thin_svd(&ds.stacked(), DEFAULT_RANK_TOL)?;
    let base = AsuraConfig::new(epsilon).with_c0(cfg.c0).with_assert_lemmas(false);
    let counts = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let acfg = base.clone().with_seed(derive_seed(cfg.seed, t));
            Ok(asura_sample(&svd, &acfg)?.0.draws_below(n1) as f64)
        })
        .collect::<Result<Vec<f64>, Failure>>()?;
    let (mean, se) = mean_se(&counts);
    let gamma = base.gamma();
    let r = reduced_rank(&ds, DEFAULT_RANK_TOL)?;
    Ok(SweepRecord {
        param: cfg.param,
        value,
        trials: cfg.trials,
        seed: cfg.seed,
        c0: cfg.c0,
        epsilon,
        lambda,
        d: ds.dim(),
        reduced_rank: r,
        gamma,
        mean_queries: mean,
        se_queries: se,
        reference: r / (gamma * gamma),
    })
}

fn fit(cfg: &SweepConfig, records: &[SweepRecord]) -> Fit {
    let num: f64 = records.iter().map(|r| r.mean_queries * r.reference).sum();
    let den: f64 = records.iter().map(|r| r.reference * r.reference).sum();
    let mut sorted: Vec<&SweepRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.value.total_cmp(&b.value));
    let means: Vec<f64> = sorted.iter().map(|r| r.mean_queries).collect();
    let (trend, holds) = match cfg.param {
        SweepParam::Lambda => ("strictly decreasing in lambda", strictly_decreasing(&means)),
        SweepParam::Eps => (
            "mean queries within 4 reduced_rank / gamma^2",
            records
                .iter()
                .all(|r| r.mean_queries <= 4.0 * r.reference + SE_SLACK * r.se_queries),
        ),
        SweepParam::D => ("nondecreasing in d", means.windows(2).all(|w| w[0] <= w[1])),
    };
    Fit {
        points: records.len(),
        constant: (den > 0.0).then(|| num / den),
        trend,
        trend_holds: holds,
    }
}

pub fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let cfg = with_overrides(from_args(&args), args.config.as_deref())?;
    cfg.validate()?;
    print_config_line("sweep", &cfg, cfg.seed)?;

    let stored: Vec<SweepRecord> = match &cfg.out {
        Some(path) if path.exists() => read_jsonl(path)?,
        _ => Vec::new(),
    };
    let x1 = match (cfg.param, cfg.values.is_empty()) {
        (SweepParam::Lambda, false) => Some(cfg.base_dataset(0.0)?.x_unlabeled().clone()),
        _ => None,
    };
    let mut records = Vec::new();
    for &value in &cfg.values {
        if let Some(prev) = stored.iter().find(|r| cfg.matches(r, value)) {
            emit(prev, None)?;
            records.push(prev.clone());
            continue;
        }
        let rec = with_pool(cfg.jobs, || measure(&cfg, value, x1.as_ref()))??;
        emit(&rec, cfg.out.as_deref())?;
        records.push(rec);
    }
    emit(&FitLine { fit: fit(&cfg, &records) }, None)?;
    eprintln!("{:>10} {:>10} {:>10} {:>12} {:>8} {:>12} {:>8}", "value", "R_X", "gamma", "queries", "se", "R_X/g^2", "ratio");
    for r in &records {
        eprintln!(
            "{:>10.4} {:>10.4} {:>10.4} {:>12.2} {:>8.2} {:>12.2} {:>8.4}",
            r.value,
            r.reduced_rank,
            r.gamma,
            r.mean_queries,
            r.se_queries,
            r.reference,
            r.mean_queries / r.reference
        );
    }
    Ok(())
}
