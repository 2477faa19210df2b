//! Barrier-potential adaptive row sampling with a bounded iteration count.
//!
//! The sampler keeps a running matrix `A` in the column space of `U` together
//! with an upper barrier `u` and a lower barrier `l`. Each step draws a row
//! with probability proportional to `U(x)' [(uI - A)^-1 + (A - lI)^-1] U(x)`,
//! adds a reweighted copy of `U(x)U(x)'` to `A`, and shifts both barriers.
//! The loop stops once the barrier gap plus the accumulated potential reaches
//! `8d/gamma`, which caps the number of iterations at `2d/gamma^2` on every run.
//! Weights and coefficients are finally divided by the barrier midpoint.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{leverage_scores, sym_eigen, Matrix, SvdFactors};
use crate::rng::{derive_seed, seeded_rng};

pub const DEFAULT_C0: f64 = 2.0;
/// Lemma assertions default on up to this dimension.
pub const AUTO_ASSERT_MAX_DIM: usize = 64;
/// Tolerance for eigenvalue-level assertions.
pub const EIGEN_TOL: f64 = 1e-9;

pub const SPECTRAL_LOWER: f64 = 0.75;
pub const SPECTRAL_UPPER: f64 = 1.25;
pub const ALPHA_SUM_BOUND: f64 = 1024.0;
pub const ALPHA_K_FACTOR: f64 = 512.0;
/// Allowed excess of the brute-force `alpha_j K_{D_j}` over its closed-form bound.
pub const ALPHA_K_AGREEMENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsuraConfig {
    pub epsilon: f64,
    /// The constant in `gamma = sqrt(epsilon) / c0`.
    pub c0: f64,
    pub rng_seed: u64,
    /// `None` enables lemma assertions for dimensions up to [`AUTO_ASSERT_MAX_DIM`].
    pub assert_lemmas: Option<bool>,
    pub max_restarts: usize,
}

impl AsuraConfig {
    pub fn new(epsilon: f64) -> Self {
        AsuraConfig {
            epsilon,
            c0: DEFAULT_C0,
            rng_seed: 0,
            assert_lemmas: None,
            max_restarts: 10,
        }
    }

    /// Constants small enough that every worst-case bound of the analysis applies literally
    /// (`gamma = 1/700`). Runs are long: the iteration count scales as `d/gamma^2`.
    pub fn theory_mode(epsilon: f64) -> Self {
        AsuraConfig {
            c0: 700.0 * epsilon.sqrt(),
            ..Self::new(epsilon)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_c0(mut self, c0: f64) -> Self {
        self.c0 = c0;
        self
    }

    pub fn with_assert_lemmas(mut self, on: bool) -> Self {
        self.assert_lemmas = Some(on);
        self
    }

    pub fn with_max_restarts(mut self, max_restarts: usize) -> Self {
        self.max_restarts = max_restarts;
        self
    }

    pub fn gamma(&self) -> f64 {
        self.epsilon.sqrt() / self.c0
    }

    pub fn lemma_checks_enabled(&self, dim: usize) -> bool {
        self.assert_lemmas.unwrap_or(dim <= AUTO_ASSERT_MAX_DIM)
    }

    fn validate(&self, dim: usize) -> Result<f64> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidInput(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(Error::InvalidInput(format!("c0 must be positive, got {}", self.c0)));
        }
        let gamma = self.gamma();
        if gamma >= 0.5 {
            return Err(Error::InvalidInput(format!(
                "gamma = {gamma} must be below 1/2 for the barrier updates"
            )));
        }
        if self.lemma_checks_enabled(dim) && gamma > 0.25 {
            return Err(Error::InvalidInput(format!(
                "lemma assertions need gamma <= 1/4, got {gamma}"
            )));
        }
        Ok(gamma)
    }
}

/// Running state of the sampler at the start of an iteration.
#[derive(Debug, Clone)]
pub struct AsuraState {
    pub a: Matrix,
    pub u: f64,
    pub l: f64,
    pub j: usize,
    pub phi_cumsum: f64,
}

impl AsuraState {
    pub fn initial(dim: usize, gamma: f64) -> Self {
        let u0 = 2.0 * dim as f64 / gamma;
        AsuraState {
            a: Matrix::zeros(dim, dim),
            u: u0,
            l: -u0,
            j: 0,
            phi_cumsum: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.a.rows()
    }
}

/// Eigen-decomposition of `A` with the resolvent weights
/// `q_t = 1/(u - theta_t) + 1/(theta_t - l)`, shared by the potential,
/// the sampling distribution and the barrier assertions.
struct BarrierSpectrum {
    theta: DVector<f64>,
    vecs: DMatrix<f64>,
    q: DVector<f64>,
}

impl BarrierSpectrum {
    fn new(a: &DMatrix<f64>, u: f64, l: f64, iteration: usize) -> Result<Self> {
        let eig = sym_eigen(a);
        let theta = eig.eigenvalues;
        let (min_eig, max_eig) = if theta.is_empty() {
            (0.0, 0.0)
        } else {
            (theta.min(), theta.max())
        };
        if !(l < u && min_eig > l && max_eig < u) {
            return Err(Error::BarrierViolation {
                iteration,
                lower: l,
                upper: u,
                min_eig,
                max_eig,
            });
        }
        let q = theta.map(|t| 1.0 / (u - t) + 1.0 / (t - l));
        Ok(BarrierSpectrum {
            theta,
            vecs: eig.eigenvectors,
            q,
        })
    }

    fn min_eig(&self) -> f64 {
        self.theta.min()
    }

    fn max_eig(&self) -> f64 {
        self.theta.max()
    }

    fn phi_id(&self) -> f64 {
        self.q.sum()
    }

    /// `Tr(M (uI - A)^-1 + M (A - lI)^-1)`.
    fn phi_weighted(&self, m: &DMatrix<f64>) -> f64 {
        let rotated = self.vecs.transpose() * m * &self.vecs;
        (0..self.q.len()).map(|t| self.q[t] * rotated[(t, t)]).sum()
    }

    /// Unnormalized sampling mass `U(x)' Q U(x)` for every row, from `Z = U V`.
    fn row_masses(&self, z: &DMatrix<f64>) -> Vec<f64> {
        let mut mass = vec![0.0; z.nrows()];
        for (t, col) in z.column_iter().enumerate() {
            let qt = self.q[t];
            for (m, zx) in mass.iter_mut().zip(col.iter()) {
                *m += qt * zx * zx;
            }
        }
        mass
    }
}

fn normalized_distribution(masses: &[f64], phi: f64) -> Result<Vec<f64>> {
    let mut p: Vec<f64> = Vec::with_capacity(masses.len());
    for (x, &m) in masses.iter().enumerate() {
        let px = m / phi;
        if px < -1e-8 {
            return Err(Error::NumericalBreakdown(format!(
                "sampling probability {px:e} for row {x}"
            )));
        }
        p.push(px.max(0.0));
    }
    let total: f64 = p.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::NumericalBreakdown(format!(
            "sampling distribution has total mass {total}"
        )));
    }
    p.iter_mut().for_each(|v| *v /= total);
    Ok(p)
}

fn check_state(svd: &SvdFactors, state: &AsuraState) -> Result<()> {
    if state.dim() != svd.rank() || state.a.cols() != svd.rank() {
        return Err(Error::DimensionMismatch(format!(
            "state of dimension {} against factors of rank {}",
            state.dim(),
            svd.rank()
        )));
    }
    Ok(())
}

/// Barrier potential `Tr(M (uI - A)^-1 + M (A - lI)^-1)`; `M` defaults to the identity.
pub fn potential(m_weight: Option<&Matrix>, state: &AsuraState) -> Result<f64> {
    let spec = BarrierSpectrum::new(state.a.as_dmatrix(), state.u, state.l, state.j)?;
    match m_weight {
        None => Ok(spec.phi_id()),
        Some(m) => {
            if m.rows() != state.dim() || m.cols() != state.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "weight matrix {}x{} for state of dimension {}",
                    m.rows(),
                    m.cols(),
                    state.dim()
                )));
            }
            Ok(spec.phi_weighted(m.as_dmatrix()))
        }
    }
}

/// Row sampling distribution at `state`.
pub fn sampling_distribution(svd: &SvdFactors, state: &AsuraState) -> Result<Vec<f64>> {
    check_state(svd, state)?;
    let spec = BarrierSpectrum::new(state.a.as_dmatrix(), state.u, state.l, state.j)?;
    let z = svd.u.as_dmatrix() * &spec.vecs;
    normalized_distribution(&spec.row_masses(&z), spec.phi_id())
}

/// Per-iteration quantities backing the probability-one lemma checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaProbe {
    /// Extreme eigenvalues of `A_j` before the update.
    pub eig_min: f64,
    pub eig_max: f64,
    /// `gamma - w'_j U(x_j)' (u_j I - A_j)^-1 U(x_j)`; nonnegative iff
    /// `w'_j U(x_j)U(x_j)' <= gamma (u_j I - A_j)`.
    pub step_upper_margin: f64,
    /// `2 gamma - w'_j U(x_j)' (A_j - l_{j+1} I)^-1 U(x_j)`.
    pub step_lower_margin: f64,
    /// `lambda_min(A_j) - l_{j+1}`.
    pub lower_gap_next: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub j: usize,
    pub phi_id: f64,
    pub sampled_index: usize,
    pub p_j: f64,
    pub u_j: f64,
    pub l_j: f64,
    /// Unnormalized weight `w'_j = gamma / (phi_j p_j)`.
    pub weight_raw: f64,
    /// `max_x ||U(x)||^2 / p_x`: the reweighted condition number of this
    /// iteration's distribution, by enumeration over rows.
    pub reweighted_condition: f64,
    /// Potential weighted by `D = sum_{x in X1} U(x)U(x)'` (split runs only).
    pub phi_d: Option<f64>,
    /// Total sampling probability of the unlabeled rows (split runs only).
    pub x1_mass: Option<f64>,
    pub probe: Option<LemmaProbe>,
}

impl IterationRecord {
    /// Unnormalized coefficient `alpha'_j = gamma / phi_j`.
    pub fn coefficient_raw(&self, gamma: f64) -> f64 {
        gamma / self.phi_id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalState {
    pub u: f64,
    pub l: f64,
    pub mid: f64,
    pub eig_min: f64,
    pub eig_max: f64,
    pub phi_id: Option<f64>,
    pub phi_d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsuraTrace {
    pub gamma: f64,
    pub dim: usize,
    pub n_rows: usize,
    pub unlabeled_rows: Option<usize>,
    pub seed: u64,
    pub records: Vec<IterationRecord>,
    pub final_state: FinalState,
}

impl AsuraTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn has_probes(&self) -> bool {
        self.records.iter().all(|r| r.probe.is_some())
    }

    /// Iterations that sampled an unlabeled row.
    pub fn unlabeled_samples(&self) -> Option<usize> {
        let n1 = self.unlabeled_rows?;
        Some(self.records.iter().filter(|r| r.sampled_index < n1).count())
    }

    /// Potentials `phi_0, ..., phi_m` (identity weight), when the final one exists.
    pub fn phi_id_series(&self) -> Option<Vec<f64>> {
        let last = self.final_state.phi_id?;
        let mut s: Vec<f64> = self.records.iter().map(|r| r.phi_id).collect();
        s.push(last);
        Some(s)
    }

    pub fn phi_d_series(&self) -> Option<Vec<f64>> {
        let mut s = self
            .records
            .iter()
            .map(|r| r.phi_d)
            .collect::<Option<Vec<f64>>>()?;
        s.push(self.final_state.phi_d?);
        Some(s)
    }
}

/// Sampled rows of the stacked design with their loss weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub indices: Vec<usize>,
    /// Loss multipliers: the fit minimizes `sum_i w_i (beta'x_i - y_i)^2`.
    pub weights: Vec<f64>,
    pub coefficients: Option<Vec<f64>>,
    pub gamma: Option<f64>,
    pub u_final: Option<f64>,
    pub l_final: Option<f64>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Number of draws (with repeats) that landed in the first `n1` rows.
    pub fn draws_below(&self, n1: usize) -> usize {
        self.indices.iter().filter(|&&i| i < n1).count()
    }
}

/// Runs the sampler on the rows of `U`.
pub fn asura_sample(svd: &SvdFactors, cfg: &AsuraConfig) -> Result<(SampleSet, AsuraTrace)> {
    run(svd, None, cfg)
}

/// Like [`asura_sample`], additionally tracking the potential weighted by the
/// unlabeled block (the first `unlabeled_rows` rows).
pub fn asura_sample_split(
    svd: &SvdFactors,
    unlabeled_rows: usize,
    cfg: &AsuraConfig,
) -> Result<(SampleSet, AsuraTrace)> {
    if unlabeled_rows > svd.n_rows() {
        return Err(Error::InvalidInput(format!(
            "{unlabeled_rows} unlabeled rows out of {}",
            svd.n_rows()
        )));
    }
    run(svd, Some(unlabeled_rows), cfg)
}

pub fn iteration_cap(dim: usize, gamma: f64) -> usize {
    (2.0 * dim as f64 / (gamma * gamma)).ceil() as usize
}

fn run(
    svd: &SvdFactors,
    unlabeled_rows: Option<usize>,
    cfg: &AsuraConfig,
) -> Result<(SampleSet, AsuraTrace)> {
    let d = svd.rank();
    if d == 0 {
        return Err(Error::InvalidInput("design matrix has rank zero".into()));
    }
    let gamma = cfg.validate(d)?;
    let checks = cfg.lemma_checks_enabled(d);
    let df = d as f64;
    let stop_level = 8.0 * df / gamma;
    let cap = iteration_cap(d, gamma);
    let up_step = gamma / (1.0 - 2.0 * gamma);
    let low_step = gamma / (1.0 + 2.0 * gamma);

    let u_rows = svd.u.as_dmatrix();
    let lev = leverage_scores(svd);
    let d_weight = unlabeled_rows.map(|n1| {
        let u1 = u_rows.rows(0, n1);
        u1.transpose() * u1
    });
    let mut rng = seeded_rng(cfg.rng_seed);

    let mut a = DMatrix::<f64>::zeros(d, d);
    let mut u = 2.0 * df / gamma;
    let mut l = -u;
    let mut phi_sum = 0.0;
    let mut records: Vec<IterationRecord> = Vec::new();

    while (u - l) + phi_sum < stop_level {
        let j = records.len();
        if j >= cap {
            return Err(Error::IterationCapExceeded {
                iterations: j + 1,
                cap,
            });
        }
        let spec = BarrierSpectrum::new(&a, u, l, j)?;
        let phi = spec.phi_id();
        if checks {
            let floor = (0.5 * gamma).max(4.0 * df / (u - l));
            if phi < floor * (1.0 - EIGEN_TOL) {
                return Err(Error::LemmaViolation {
                    lemma: "potential-floor",
                    iteration: j,
                    margin: phi - floor,
                });
            }
        }
        let z = u_rows * &spec.vecs;
        let p = normalized_distribution(&spec.row_masses(&z), phi)?;

        let x1_mass = unlabeled_rows.map(|n1| p[..n1].iter().sum::<f64>());
        let phi_d = d_weight.as_ref().map(|dw| spec.phi_weighted(dw));
        let reweighted_condition = lev
            .iter()
            .zip(&p)
            .filter(|(&s, &px)| s > 0.0 && px > 0.0)
            .map(|(s, px)| s / px)
            .fold(0.0, f64::max);

        let x = draw_row(&p, &mut rng);
        let p_x = p[x];
        let w_raw = gamma / (phi * p_x);
        let l_next = l + low_step / phi;

        let probe = if checks {
            let zx = z.row(x);
            let up_quad: f64 = (0..d).map(|t| zx[t] * zx[t] / (u - spec.theta[t])).sum();
            let lower_gap_next = spec.min_eig() - l_next;
            let low_quad: f64 = (0..d)
                .map(|t| zx[t] * zx[t] / (spec.theta[t] - l_next))
                .sum();
            let probe = LemmaProbe {
                eig_min: spec.min_eig(),
                eig_max: spec.max_eig(),
                step_upper_margin: gamma - w_raw * up_quad,
                step_lower_margin: 2.0 * gamma - w_raw * low_quad,
                lower_gap_next,
            };
            if probe.step_upper_margin < -EIGEN_TOL {
                return Err(Error::LemmaViolation {
                    lemma: "step-upper",
                    iteration: j,
                    margin: probe.step_upper_margin,
                });
            }
            if lower_gap_next <= 0.0 || probe.step_lower_margin < -EIGEN_TOL {
                return Err(Error::LemmaViolation {
                    lemma: "step-lower",
                    iteration: j,
                    margin: probe.step_lower_margin.min(lower_gap_next),
                });
            }
            Some(probe)
        } else {
            None
        };

        records.push(IterationRecord {
            j,
            phi_id: phi,
            sampled_index: x,
            p_j: p_x,
            u_j: u,
            l_j: l,
            weight_raw: w_raw,
            reweighted_condition,
            phi_d,
            x1_mass,
            probe,
        });

        let ux = u_rows.row(x).transpose();
        a.ger(w_raw, &ux, &ux, 1.0);
        u += up_step / phi;
        l = l_next;
        phi_sum += phi;
    }

    let m = records.len();
    let eig = sym_eigen(&a);
    let (eig_min, eig_max) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    let final_spec = BarrierSpectrum::new(&a, u, l, m).ok();
    if checks && final_spec.is_none() {
        return Err(Error::BarrierViolation {
            iteration: m,
            lower: l,
            upper: u,
            min_eig: eig_min,
            max_eig: eig_max,
        });
    }
    let mid = 0.5 * (u + l);
    let final_state = FinalState {
        u,
        l,
        mid,
        eig_min,
        eig_max,
        phi_id: final_spec.as_ref().map(BarrierSpectrum::phi_id),
        phi_d: final_spec
            .as_ref()
            .zip(d_weight.as_ref())
            .map(|(s, dw)| s.phi_weighted(dw)),
    };
    let sample = SampleSet {
        indices: records.iter().map(|r| r.sampled_index).collect(),
        weights: records.iter().map(|r| r.weight_raw / mid).collect(),
        coefficients: Some(
            records
                .iter()
                .map(|r| r.coefficient_raw(gamma) / mid)
                .collect(),
        ),
        gamma: Some(gamma),
        u_final: Some(u),
        l_final: Some(l),
    };
    let trace = AsuraTrace {
        gamma,
        dim: d,
        n_rows: svd.n_rows(),
        unlabeled_rows,
        seed: cfg.rng_seed,
        records,
        final_state,
    };
    Ok((sample, trace))
}

/// Inverse-CDF draw from a normalized probability vector; the sampler uses
/// this for every step.
pub fn draw_row<R: Rng>(p: &[f64], rng: &mut R) -> usize {
    let target: f64 = rng.random::<f64>();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &pi) in p.iter().enumerate() {
        if pi > 0.0 {
            acc += pi;
            last_positive = i;
            if target < acc {
                return i;
            }
        }
    }
    last_positive
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellBalancedReport {
    pub epsilon: f64,
    pub gamma: f64,
    pub min_eig: f64,
    pub max_eig: f64,
    pub spectral_ok: bool,
    pub alpha_sum: f64,
    pub alpha_sum_ok: bool,
    /// `max_j gamma (u_j - l_j) / (u_m + l_m)`.
    pub max_alpha_k_closed: f64,
    /// `max_j alpha_j max_x ||U(x)||^2 / p^{(j)}_x`.
    pub max_alpha_k_brute: f64,
    /// Brute force never exceeds the closed form (to within the agreement tolerance).
    pub alpha_k_consistent: bool,
    pub alpha_k_ok: bool,
    /// Whether `u_m >= d / (64 gamma^2)`.
    pub upper_barrier_event: bool,
    pub well_balanced: bool,
}

/// Checks the spectral and coefficient conditions of a well-balanced sampler
/// for one run, recomputing `A'A = sum_i w_i U(x_i) U(x_i)'` from the factors.
pub fn check_well_balanced(
    sample: &SampleSet,
    trace: &AsuraTrace,
    svd: &SvdFactors,
    epsilon: f64,
) -> Result<WellBalancedReport> {
    let m = trace.records.len();
    let coefficients = sample
        .coefficients
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("sample has no coefficients".into()))?;
    if sample.indices.len() != m || sample.weights.len() != m || coefficients.len() != m {
        return Err(Error::InvalidInput(format!(
            "sample of length {} against trace of length {m}",
            sample.indices.len()
        )));
    }
    if sample
        .indices
        .iter()
        .zip(&trace.records)
        .any(|(&i, r)| i != r.sampled_index)
    {
        return Err(Error::InvalidInput("sample and trace come from different runs".into()));
    }
    if svd.rank() != trace.dim || svd.n_rows() != trace.n_rows {
        return Err(Error::InvalidInput(format!(
            "factors ({} rows, rank {}) do not match the trace ({} rows, dimension {})",
            svd.n_rows(),
            svd.rank(),
            trace.n_rows,
            trace.dim
        )));
    }
    let gamma = trace.gamma;
    let d = trace.dim;
    let u_rows = svd.u.as_dmatrix();
    let mut gram = DMatrix::<f64>::zeros(d, d);
    for (&i, &w) in sample.indices.iter().zip(&sample.weights) {
        let ux = u_rows.row(i).transpose();
        gram.ger(w, &ux, &ux, 1.0);
    }
    let eig = sym_eigen(&gram);
    let (min_eig, max_eig) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    let spectral_ok = min_eig >= SPECTRAL_LOWER && max_eig <= SPECTRAL_UPPER;

    let alpha_sum: f64 = coefficients.iter().sum();
    let alpha_sum_ok = alpha_sum <= ALPHA_SUM_BOUND;

    let fs = &trace.final_state;
    let denom = fs.u + fs.l;
    let max_alpha_k_closed = trace
        .records
        .iter()
        .map(|r| gamma * (r.u_j - r.l_j) / denom)
        .fold(f64::NEG_INFINITY, f64::max);
    let max_alpha_k_brute = trace
        .records
        .iter()
        .zip(coefficients)
        .map(|(r, &alpha)| alpha * r.reweighted_condition)
        .fold(f64::NEG_INFINITY, f64::max);
    let alpha_k_consistent = trace.records.iter().zip(coefficients).all(|(r, &alpha)| {
        let closed = gamma * (r.u_j - r.l_j) / denom;
        alpha * r.reweighted_condition <= closed + ALPHA_K_AGREEMENT_TOL * closed.max(1.0)
    });
    let alpha_k_ok = max_alpha_k_closed <= ALPHA_K_FACTOR * gamma * gamma;
    let upper_barrier_event = fs.u >= d as f64 / (64.0 * gamma * gamma);

    Ok(WellBalancedReport {
        epsilon,
        gamma,
        min_eig,
        max_eig,
        spectral_ok,
        alpha_sum,
        alpha_sum_ok,
        max_alpha_k_closed,
        max_alpha_k_brute,
        alpha_k_consistent,
        alpha_k_ok,
        upper_barrier_event,
        well_balanced: spectral_ok && alpha_sum_ok && alpha_k_ok && alpha_k_consistent,
    })
}

/// A run that passed the well-balanced check, with the attempt that produced it.
#[derive(Debug, Clone)]
pub struct RetryOutcome {
    pub sample: SampleSet,
    pub trace: AsuraTrace,
    pub report: WellBalancedReport,
    pub attempts: usize,
}

/// Seed used by attempt `attempt` (1-based); the first attempt uses the base seed.
pub fn attempt_seed(base_seed: u64, attempt: usize) -> u64 {
    if attempt <= 1 {
        base_seed
    } else {
        derive_seed(base_seed, attempt as u64)
    }
}

pub fn sample_with_retry(svd: &SvdFactors, cfg: &AsuraConfig) -> Result<RetryOutcome> {
    sample_with_retry_by(svd, cfg, |sample, trace| {
        check_well_balanced(sample, trace, svd, cfg.epsilon)
    })
}

/// Retry loop with a caller-supplied acceptance check.
pub fn sample_with_retry_by<F>(svd: &SvdFactors, cfg: &AsuraConfig, check: F) -> Result<RetryOutcome>
where
    F: Fn(&SampleSet, &AsuraTrace) -> Result<WellBalancedReport>,
{
    if cfg.max_restarts < 1 {
        return Err(Error::InvalidInput("max_restarts must be at least 1".into()));
    }
    let mut reports = Vec::with_capacity(cfg.max_restarts);
    for attempt in 1..=cfg.max_restarts {
        let attempt_cfg = AsuraConfig {
            rng_seed: attempt_seed(cfg.rng_seed, attempt),
            ..cfg.clone()
        };
        let (sample, trace) = asura_sample(svd, &attempt_cfg)?;
        let report = check(&sample, &trace)?;
        if report.well_balanced {
            return Ok(RetryOutcome {
                sample,
                trace,
                report,
                attempts: attempt,
            });
        }
        reports.push(report);
    }
    Err(Error::WellBalancedFailed { reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{thin_svd, DEFAULT_RANK_TOL};
    use crate::rng::seeded_rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_svd(rows: usize, cols: usize, seed: u64) -> SvdFactors {
        let mut rng = seeded_rng(seed);
        let entries = (0..rows * cols)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        thin_svd(
            &Matrix::from_row_major(rows, cols, entries).unwrap(),
            DEFAULT_RANK_TOL,
        )
        .unwrap()
    }

    #[test]
    fn initial_potential_closed_form() {
        let (d, gamma) = (4, 0.2);
        let state = AsuraState::initial(d, gamma);
        assert!((potential(None, &state).unwrap() - gamma).abs() < 1e-14);
    }

    #[test]
    fn initial_weighted_potential_is_scaled_trace() {
        let (d, gamma) = (3, 0.125);
        let state = AsuraState::initial(d, gamma);
        let m = Matrix::from_rows(&[
            vec![2.0, 0.5, 0.0],
            vec![0.5, 1.0, 0.3],
            vec![0.0, 0.3, 4.0],
        ])
        .unwrap();
        // Tr(M/u0 - M/l0) evaluated directly.
        let (u0, l0) = (state.u, state.l);
        let direct = m.trace() / u0 - m.trace() / l0;
        let got = potential(Some(&m), &state).unwrap();
        assert!((got - direct).abs() < 1e-14);
        assert!((got - gamma / d as f64 * m.trace()).abs() < 1e-14);
    }

    #[test]
    fn scalar_potential() {
        let state = AsuraState {
            a: Matrix::from_row_major(1, 1, vec![0.5]).unwrap(),
            u: 1.0,
            l: 0.0,
            j: 0,
            phi_cumsum: 0.0,
        };
        assert!((potential(None, &state).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn potential_rejects_touched_barrier() {
        let state = AsuraState {
            a: Matrix::from_row_major(1, 1, vec![1.0]).unwrap(),
            u: 1.0,
            l: 0.0,
            j: 3,
            phi_cumsum: 0.0,
        };
        assert!(matches!(
            potential(None, &state),
            Err(Error::BarrierViolation { iteration: 3, .. })
        ));
    }

    #[test]
    fn initial_distribution_is_leverage_over_dim() {
        let svd = thin_svd(&Matrix::identity(5), DEFAULT_RANK_TOL).unwrap();
        let p = sampling_distribution(&svd, &AsuraState::initial(5, 0.1)).unwrap();
        assert!(p.iter().all(|&v| (v - 0.2).abs() < 1e-14));

        let svd = gaussian_svd(12, 3, 4);
        let p = sampling_distribution(&svd, &AsuraState::initial(3, 0.1)).unwrap();
        let lev = leverage_scores(&svd);
        for (pv, s) in p.iter().zip(lev) {
            assert!((pv - s / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unlabeled_mass_matches_weighted_potential_ratio() {
        let svd = gaussian_svd(15, 3, 8);
        let n1 = 9;
        // Advance to a non-trivial state with a few steps of the sampler.
        let cfg = AsuraConfig::new(0.25).with_seed(3);
        let (_, trace) = asura_sample_split(&svd, n1, &cfg).unwrap();
        for r in &trace.records {
            let ratio = r.phi_d.unwrap() / r.phi_id;
            assert!((r.x1_mass.unwrap() - ratio).abs() <= 1e-10);
        }
        // Same identity at an explicit state.
        let mut a = DMatrix::zeros(3, 3);
        for (k, idx) in [0usize, 4, 11].iter().enumerate() {
            let ux = svd.u.row(*idx).transpose();
            a.ger(0.7 + k as f64, &ux, &ux, 1.0);
        }
        let state = AsuraState {
            a: Matrix::from_dmatrix(a).unwrap(),
            u: 30.0,
            l: -20.0,
            j: 0,
            phi_cumsum: 0.0,
        };
        let p = sampling_distribution(&svd, &state).unwrap();
        let u1 = svd.u.as_dmatrix().rows(0, n1);
        let dmat = Matrix::from_dmatrix(u1.transpose() * u1).unwrap();
        let lhs: f64 = p[..n1].iter().sum();
        let rhs = potential(Some(&dmat), &state).unwrap() / potential(None, &state).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10);
    }

    #[test]
    fn single_column_terminates_within_cap() {
        let x = Matrix::from_row_major(4, 1, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let svd = thin_svd(&x, DEFAULT_RANK_TOL).unwrap();
        let cfg = AsuraConfig::new(0.25).with_c0(2.0).with_seed(1);
        let (sample, trace) = asura_sample(&svd, &cfg).unwrap();
        assert!(trace.iterations() <= 128);
        assert!(sample.weights.iter().all(|&w| w > 0.0));
        assert!(sample.coefficients.unwrap().iter().all(|&c| c > 0.0));
    }

    #[test]
    fn trace_invariants_on_random_runs() {
        let svd = gaussian_svd(40, 4, 2);
        for seed in 0..20 {
            let cfg = AsuraConfig::new(0.25).with_seed(seed);
            let gamma = cfg.gamma();
            let (sample, trace) = asura_sample(&svd, &cfg).unwrap();
            let d = 4.0;
            assert!(trace.iterations() <= iteration_cap(4, gamma));
            assert!(trace.records.iter().all(|r| r.phi_id >= gamma / 2.0));
            let fs = &trace.final_state;
            assert!(fs.u - fs.l <= 9.0 * d / gamma);
            assert!((fs.mid - 0.5 * (fs.u + fs.l)).abs() < 1e-12);
            for (r, w) in trace.records.iter().zip(&sample.weights) {
                assert!((w * fs.mid - r.weight_raw).abs() <= 1e-12 * r.weight_raw);
                let p = r.probe.as_ref().unwrap();
                assert!(p.step_upper_margin >= -EIGEN_TOL);
                assert!(p.eig_min >= r.l_j && p.eig_max <= r.u_j);
            }
        }
    }

    #[test]
    fn identical_seed_identical_run() {
        let svd = gaussian_svd(30, 3, 6);
        let cfg = AsuraConfig::new(0.1).with_seed(77);
        let (s1, t1) = asura_sample(&svd, &cfg).unwrap();
        let (s2, t2) = asura_sample(&svd, &cfg).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(t1, t2);
    }

    #[test]
    fn rejects_out_of_range_epsilon() {
        let svd = gaussian_svd(10, 2, 1);
        assert!(asura_sample(&svd, &AsuraConfig::new(0.0)).is_err());
        assert!(asura_sample(&svd, &AsuraConfig::new(1.0)).is_err());
        // gamma = 0.5
        assert!(asura_sample(&svd, &AsuraConfig::new(0.25).with_c0(1.0)).is_err());
    }

    #[test]
    fn zero_leverage_rows_are_never_sampled() {
        let x = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 0.0],
            vec![0.0, 2.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let svd = thin_svd(&x, DEFAULT_RANK_TOL).unwrap();
        for seed in 0..10 {
            let (sample, _) = asura_sample(&svd, &AsuraConfig::new(0.25).with_seed(seed)).unwrap();
            assert!(!sample.indices.contains(&1));
        }
    }

    #[test]
    fn closed_form_alpha_k_bounds_brute_force() {
        let svd = gaussian_svd(10, 3, 13);
        let cfg = AsuraConfig::new(0.25).with_seed(5);
        let (sample, trace) = asura_sample(&svd, &cfg).unwrap();
        let report = check_well_balanced(&sample, &trace, &svd, 0.25).unwrap();
        assert!(report.alpha_k_consistent);
        assert!(report.max_alpha_k_brute <= report.max_alpha_k_closed + 1e-6);
        let coeffs = sample.coefficients.as_ref().unwrap();
        let denom = trace.final_state.u + trace.final_state.l;
        let first = &trace.records[0];
        let closed0 = trace.gamma * (first.u_j - first.l_j) / denom;
        assert!((first.u_j - first.l_j - 4.0 * 3.0 / trace.gamma).abs() < 1e-9);
        assert!((closed0 - 4.0 * 3.0 / denom).abs() < 1e-12);
        // At the initial state the brute-force value equals half the closed form.
        assert!((coeffs[0] * first.reweighted_condition - 0.5 * closed0).abs() < 1e-9);
    }

    #[test]
    fn well_balanced_report_rejects_mismatched_artifacts() {
        let svd = gaussian_svd(10, 3, 13);
        let (sample, trace) = asura_sample(&svd, &AsuraConfig::new(0.25).with_seed(1)).unwrap();
        let (other, _) = asura_sample(&svd, &AsuraConfig::new(0.25).with_seed(2)).unwrap();
        assert!(check_well_balanced(&other, &trace, &svd, 0.25).is_err());
        let wrong = gaussian_svd(11, 3, 13);
        assert!(check_well_balanced(&sample, &trace, &wrong, 0.25).is_err());
    }

    #[test]
    fn well_balanced_definition() {
        let svd = gaussian_svd(10, 2, 3);
        let (sample, trace) = asura_sample(&svd, &AsuraConfig::new(0.25).with_seed(4)).unwrap();
        let r = check_well_balanced(&sample, &trace, &svd, 0.25).unwrap();
        let expect = r.min_eig >= 0.75
            && r.max_eig <= 1.25
            && r.alpha_sum <= 1024.0
            && r.max_alpha_k_closed <= 512.0 * r.gamma * r.gamma
            && r.alpha_k_consistent;
        assert_eq!(r.well_balanced, expect);
    }

    #[test]
    fn retry_passes_first_attempt() {
        let svd = gaussian_svd(10, 2, 3);
        let cfg = AsuraConfig::new(0.25).with_seed(9);
        let out = sample_with_retry_by(&svd, &cfg, |s, t| {
            let mut r = check_well_balanced(s, t, &svd, 0.25)?;
            r.well_balanced = true;
            Ok(r)
        })
        .unwrap();
        assert_eq!(out.attempts, 1);
        let (first, _) = asura_sample(&svd, &cfg).unwrap();
        assert_eq!(out.sample, first);
    }

    #[test]
    fn retry_exhaustion_lists_every_report() {
        let svd = gaussian_svd(10, 2, 3);
        let cfg = AsuraConfig::new(0.25).with_seed(9).with_max_restarts(10);
        let err = sample_with_retry_by(&svd, &cfg, |s, t| {
            let mut r = check_well_balanced(s, t, &svd, 0.25)?;
            r.well_balanced = false;
            Ok(r)
        })
        .unwrap_err();
        match err {
            Error::WellBalancedFailed { reports } => assert_eq!(reports.len(), 10),
            other => panic!("unexpected error {other}"),
        }
    }
}
