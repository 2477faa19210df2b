//! Weighted least squares, the active-regression driver with label
//! accounting, and the reductions from ridge and kernel ridge regression.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::asura::{
    asura_sample, check_well_balanced, sample_with_retry, AsuraConfig, AsuraTrace, SampleSet,
    DEFAULT_C0,
};
use crate::baselines::{leverage_sample, uniform_sample, LeverageConfig, DEFAULT_OVERSAMPLE_C};
use crate::error::{Error, Result};
use crate::linalg::{dense_svd, psd_sqrt, thin_svd, Dataset, Matrix, SvdFactors, DEFAULT_RANK_TOL};

/// Label source for the stacked rows. Labels of unlabeled rows are billed the
/// first time each distinct row is requested; labeled rows are free.
#[derive(Debug, Clone)]
pub struct LabelOracle {
    labels: Vec<f64>,
    n_unlabeled: usize,
    revealed: BTreeSet<usize>,
    iteration_queries: usize,
}

impl LabelOracle {
    /// `hidden` are the labels of the unlabeled rows; the labeled block's
    /// labels are taken from the dataset.
    pub fn new(ds: &Dataset, hidden: &[f64]) -> Result<Self> {
        if hidden.len() != ds.n_unlabeled() {
            return Err(Error::DimensionMismatch(format!(
                "{} hidden labels for {} unlabeled rows",
                hidden.len(),
                ds.n_unlabeled()
            )));
        }
        if hidden.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite hidden label".into()));
        }
        let mut labels = hidden.to_vec();
        labels.extend_from_slice(ds.y_labeled());
        Ok(LabelOracle {
            labels,
            n_unlabeled: ds.n_unlabeled(),
            revealed: BTreeSet::new(),
            iteration_queries: 0,
        })
    }

    pub fn label(&mut self, row: usize) -> Result<f64> {
        let y = *self.labels.get(row).ok_or_else(|| {
            Error::InvalidInput(format!("row {row} out of {} rows", self.labels.len()))
        })?;
        if row < self.n_unlabeled {
            self.iteration_queries += 1;
            self.revealed.insert(row);
        }
        Ok(y)
    }

    /// Distinct unlabeled rows revealed so far.
    pub fn query_count(&self) -> usize {
        self.revealed.len()
    }

    /// Requests for unlabeled rows, counting repeats.
    pub fn iteration_queries(&self) -> usize {
        self.iteration_queries
    }

    pub fn revealed(&self) -> &BTreeSet<usize> {
        &self.revealed
    }

    /// Every label of the stacked instance. Evaluation only: reading these
    /// bypasses the query accounting.
    pub fn full_labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn hidden_labels(&self) -> &[f64] {
        &self.labels[..self.n_unlabeled]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSolution {
    pub beta_hat: Vec<f64>,
    /// Loss of `beta_hat` on the full stacked instance.
    pub loss: f64,
    pub opt: Option<f64>,
    /// `loss / opt`, present when `opt > 0`.
    pub ratio: Option<f64>,
    /// Distinct unlabeled rows billed.
    pub queries: usize,
    /// Sampler draws that landed on unlabeled rows, counting repeats.
    pub iteration_queries: usize,
    /// Sample size (sampler iterations for the adaptive sampler).
    pub iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Sampler {
    Asura {
        c0: f64,
        /// Rerun with derived seeds until the well-balanced check passes.
        retry: bool,
        assert_lemmas: Option<bool>,
        max_restarts: usize,
    },
    Leverage {
        oversample_c: f64,
    },
    Uniform {
        m: usize,
    },
}

impl Sampler {
    pub fn asura() -> Self {
        Sampler::Asura {
            c0: DEFAULT_C0,
            retry: false,
            assert_lemmas: None,
            max_restarts: 10,
        }
    }

    pub fn leverage() -> Self {
        Sampler::Leverage {
            oversample_c: DEFAULT_OVERSAMPLE_C,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Sampler::Asura { .. } => "asura",
            Sampler::Leverage { .. } => "leverage",
            Sampler::Uniform { .. } => "uniform",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveConfig {
    pub epsilon: f64,
    pub sampler: Sampler,
    pub seed: u64,
}

/// Everything a single active run produced.
#[derive(Debug, Clone)]
pub struct ActiveOutcome {
    pub solution: RegressionSolution,
    pub sample: SampleSet,
    pub trace: Option<AsuraTrace>,
    pub well_balanced: Option<bool>,
    pub attempts: usize,
}

/// Minimizer of `sum_i w_i (beta'x_i - y_i)^2`, minimum-norm when the
/// weighted system is rank deficient.
pub fn weighted_lsq(points: &Matrix, weights: &[f64], labels: &[f64]) -> Result<Vec<f64>> {
    let (m, d) = (points.rows(), points.cols());
    if m == 0 {
        return Err(Error::InvalidInput("weighted least squares needs at least one point".into()));
    }
    if weights.len() != m || labels.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{m} points with {} weights and {} labels",
            weights.len(),
            labels.len()
        )));
    }
    if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidInput("weights must be positive and finite".into()));
    }
    if labels.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite label".into()));
    }
    let roots: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let mut a = points.as_dmatrix().clone();
    for (i, r) in roots.iter().enumerate() {
        a.row_mut(i).scale_mut(*r);
    }
    let b = DVector::from_iterator(m, labels.iter().zip(&roots).map(|(y, r)| y * r));
    Ok(min_norm_solve(a, &b, d)?.as_slice().to_vec())
}

fn min_norm_solve(a: DMatrix<f64>, b: &DVector<f64>, d: usize) -> Result<DVector<f64>> {
    let m = a.nrows();
    let (u, sigma, v) = dense_svd(&a)?;
    let smax = sigma.first().copied().unwrap_or(0.0);
    let cutoff = smax * (m.max(d) as f64) * f64::EPSILON;
    let mut beta = DVector::zeros(d);
    if smax <= 0.0 {
        return Ok(beta);
    }
    for (k, &s) in sigma.iter().enumerate().take_while(|(_, &s)| s > cutoff) {
        let coef = u.column(k).dot(b) / s;
        beta += v.column(k) * coef;
    }
    Ok(beta)
}

/// Least-squares solution on the full stacked instance and its loss.
pub fn exact_solution(ds: &Dataset, full_labels: &[f64]) -> Result<(Vec<f64>, f64)> {
    if full_labels.len() != ds.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} stacked rows",
            full_labels.len(),
            ds.n_rows()
        )));
    }
    let x = ds.stacked();
    let beta = weighted_lsq(&x, &vec![1.0; ds.n_rows()], full_labels)?;
    let opt = ds.stacked_loss(&beta, &full_labels[..ds.n_unlabeled()])?;
    Ok((beta, opt))
}

/// Runs the chosen sampler on the stacked design, queries the sampled rows and
/// fits on them.
pub fn solve_active(
    ds: &Dataset,
    oracle: &mut LabelOracle,
    cfg: &ActiveConfig,
) -> Result<ActiveOutcome> {
    let svd = thin_svd(&ds.stacked(), DEFAULT_RANK_TOL)?;
    solve_active_with_svd(ds, &svd, oracle, cfg, None)
}

/// [`solve_active`] with precomputed stacked factors and, optionally, a known
/// optimum so repeated trials on one instance skip the exact solve.
pub fn solve_active_with_svd(
    ds: &Dataset,
    svd: &SvdFactors,
    oracle: &mut LabelOracle,
    cfg: &ActiveConfig,
    opt: Option<f64>,
) -> Result<ActiveOutcome> {
    if svd.n_rows() != ds.n_rows() || oracle.full_labels().len() != ds.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "factors with {} rows and oracle with {} labels for {} stacked rows",
            svd.n_rows(),
            oracle.full_labels().len(),
            ds.n_rows()
        )));
    }
    let (sample, trace, well_balanced, attempts) = draw_sample(svd, cfg)?;
    if sample.is_empty() {
        return Err(Error::InvalidInput("sampler returned no rows".into()));
    }
    let billed_before = oracle.query_count();
    let draws_before = oracle.iteration_queries();
    let labels = sample
        .indices
        .iter()
        .map(|&i| oracle.label(i))
        .collect::<Result<Vec<f64>>>()?;
    let points = ds.stacked().select_rows(&sample.indices)?;
    let beta_hat = weighted_lsq(&points, &sample.weights, &labels)?;
    let loss = ds.stacked_loss(&beta_hat, oracle.hidden_labels())?;
    let opt = match opt {
        Some(v) => v,
        None => exact_solution(ds, oracle.full_labels())?.1,
    };
    let solution = RegressionSolution {
        beta_hat,
        loss,
        opt: Some(opt),
        ratio: (opt > 0.0).then(|| loss / opt),
        queries: oracle.query_count() - billed_before,
        iteration_queries: oracle.iteration_queries() - draws_before,
        iterations: sample.len(),
        seed: cfg.seed,
    };
    Ok(ActiveOutcome {
        solution,
        sample,
        trace,
        well_balanced,
        attempts,
    })
}

type Drawn = (SampleSet, Option<AsuraTrace>, Option<bool>, usize);

/// Runs only the sampling stage of [`solve_active_with_svd`].
pub fn draw_sample(svd: &SvdFactors, cfg: &ActiveConfig) -> Result<Drawn> {
    match &cfg.sampler {
        Sampler::Asura {
            c0,
            retry,
            assert_lemmas,
            max_restarts,
        } => {
            let acfg = AsuraConfig {
                epsilon: cfg.epsilon,
                c0: *c0,
                rng_seed: cfg.seed,
                assert_lemmas: *assert_lemmas,
                max_restarts: *max_restarts,
            };
            if *retry {
                let out = sample_with_retry(svd, &acfg)?;
                Ok((out.sample, Some(out.trace), Some(true), out.attempts))
            } else {
                let (sample, trace) = asura_sample(svd, &acfg)?;
                let report = check_well_balanced(&sample, &trace, svd, cfg.epsilon)?;
                Ok((sample, Some(trace), Some(report.well_balanced), 1))
            }
        }
        Sampler::Leverage { oversample_c } => {
            let lcfg = LeverageConfig {
                epsilon: cfg.epsilon,
                oversample_c: *oversample_c,
                rng_seed: cfg.seed,
            };
            Ok((leverage_sample(svd, &lcfg)?, None, None, 1))
        }
        Sampler::Uniform { m } => Ok((uniform_sample(svd.n_rows(), *m, cfg.seed)?, None, None, 1)),
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda must be nonnegative, got {lambda}")));
    }
    Ok(())
}

/// Ridge regression on `x1` as an instance whose labeled block is `sqrt(lambda) I`
/// with zero labels.
pub fn ridge_to_ssal(x1: &Matrix, lambda: f64) -> Result<Dataset> {
    check_lambda(lambda)?;
    let d = x1.cols();
    Dataset::new(x1.clone(), Matrix::identity(d).scaled(lambda.sqrt())?, vec![0.0; d])
}

/// Kernel ridge regression with Gram matrix `k` as an instance with unlabeled
/// block `K` and labeled block `sqrt(lambda) K^(1/2)` with zero labels.
pub fn kernel_ridge_to_ssal(k: &Matrix, lambda: f64) -> Result<Dataset> {
    check_lambda(lambda)?;
    let root = psd_sqrt(k)?;
    let n = k.rows();
    Dataset::new(k.clone(), root.scaled(lambda.sqrt())?, vec![0.0; n])
}
