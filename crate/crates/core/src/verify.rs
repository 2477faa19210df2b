//! Executable checks of the sampler's guarantees over recorded traces.
//!
//! Hard checks hold with probability one and must show zero violations on
//! every run. Statistical checks compare batch averages against their bounds
//! with an explicit slack (a frequency margin or a number of standard errors).

use serde::{Deserialize, Serialize};

use crate::asura::{iteration_cap, AsuraTrace, EIGEN_TOL};
use crate::error::{Error, Result};
use crate::linalg::{reduced_rank, Dataset, DEFAULT_RANK_TOL};

/// Additive slack on frequency bounds.
pub const FREQUENCY_SLACK: f64 = 0.05;
/// Standard errors allowed above a mean bound.
pub const SE_SLACK: f64 = 3.0;
/// Tolerance of the unlabeled-mass identity.
pub const MASS_IDENTITY_TOL: f64 = 1e-10;
pub const MIN_STATISTICAL_BATCH: usize = 2000;

pub mod ids {
    pub const ITERATION_CAP: &str = "iteration-cap";
    pub const POTENTIAL_FLOOR: &str = "potential-floor";
    pub const GAP_BOUND: &str = "gap-bound";
    pub const BARRIER_CONTAINMENT: &str = "barrier-containment";
    pub const STEP_UPPER: &str = "step-upper";
    pub const STEP_LOWER: &str = "step-lower";
    pub const X1_MASS_IDENTITY: &str = "x1-mass-identity";
    pub const UPPER_BARRIER_GROWTH: &str = "upper-barrier-growth";
    pub const SUPERMARTINGALE_ID: &str = "potential-supermartingale-id";
    pub const SUPERMARTINGALE_D: &str = "potential-supermartingale-d";
    pub const QUERY_BOUND: &str = "query-bound";
    pub const QUERY_BOUND_LINEAR: &str = "query-bound-linear";

    pub const HARD: [&str; 6] = [
        ITERATION_CAP,
        POTENTIAL_FLOOR,
        GAP_BOUND,
        BARRIER_CONTAINMENT,
        STEP_UPPER,
        STEP_LOWER,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// Reported for reference; never fails a suite.
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma_id: String,
    pub runs_checked: usize,
    pub violations: usize,
    /// Smallest slack seen; negative means violated.
    pub worst_margin: f64,
    pub statistic: Option<f64>,
    pub bound: Option<f64>,
    /// Fraction of runs with `u_m >= d / (64 gamma^2)`.
    pub gamma_event: Option<f64>,
    pub verdict: Verdict,
}

impl LemmaReport {
    fn hard(lemma_id: &str) -> Self {
        LemmaReport {
            lemma_id: lemma_id.to_string(),
            runs_checked: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
            statistic: None,
            bound: None,
            gamma_event: None,
            verdict: Verdict::Pass,
        }
    }

    fn observe(&mut self, margin: f64, tol: f64) {
        self.worst_margin = self.worst_margin.min(margin);
        if margin < -tol {
            self.violations += 1;
        }
    }

    fn finish(mut self) -> Self {
        self.verdict = if self.violations == 0 { Verdict::Pass } else { Verdict::Fail };
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }
}

/// One trial of an active run, as emitted by batch drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub seed: u64,
    pub sampler: String,
    /// Sample size; sampler iterations for the adaptive sampler.
    pub m: usize,
    pub queries_billed: usize,
    pub queries_iteration_level: usize,
    pub ratio: Option<f64>,
    pub well_balanced: Option<bool>,
    pub gamma: Option<f64>,
    pub runtime_ms: f64,
}

/// Mean and standard error of the mean (zero SE for fewer than two values).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Whether each value is strictly below its predecessor.
pub fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

fn require_probes(trace: &AsuraTrace) -> Result<()> {
    if !trace.has_probes() {
        return Err(Error::InsufficientTrace(
            "trace was recorded without lemma probes (enable assert_lemmas)".into(),
        ));
    }
    Ok(())
}

/// Probability-one checks on a single trace.
pub fn check_hard_lemmas(trace: &AsuraTrace) -> Result<Vec<LemmaReport>> {
    check_hard_lemmas_batch(std::slice::from_ref(trace))
}

/// Probability-one checks aggregated over many traces.
pub fn check_hard_lemmas_batch(traces: &[AsuraTrace]) -> Result<Vec<LemmaReport>> {
    let mut cap_r = LemmaReport::hard(ids::ITERATION_CAP);
    let mut floor_r = LemmaReport::hard(ids::POTENTIAL_FLOOR);
    let mut gap_r = LemmaReport::hard(ids::GAP_BOUND);
    let mut barrier_r = LemmaReport::hard(ids::BARRIER_CONTAINMENT);
    let mut upper_r = LemmaReport::hard(ids::STEP_UPPER);
    let mut lower_r = LemmaReport::hard(ids::STEP_LOWER);

    for trace in traces {
        require_probes(trace)?;
        let gamma = trace.gamma;
        let d = trace.dim as f64;
        let fs = &trace.final_state;

        let cap = iteration_cap(trace.dim, gamma);
        cap_r.observe(cap as f64 - trace.iterations() as f64, 0.0);

        let mut floor_margin = f64::INFINITY;
        let mut barrier_margin = f64::INFINITY;
        let mut upper_margin = f64::INFINITY;
        let mut lower_margin = f64::INFINITY;
        for r in &trace.records {
            let probe = r.probe.as_ref().expect("checked above");
            let floor = (0.5 * gamma).max(4.0 * d / (r.u_j - r.l_j));
            floor_margin = floor_margin.min((r.phi_id - floor) / floor);
            barrier_margin = barrier_margin.min((probe.eig_min - r.l_j).min(r.u_j - probe.eig_max));
            upper_margin = upper_margin.min(probe.step_upper_margin);
            lower_margin = lower_margin
                .min(probe.step_lower_margin)
                .min(if probe.lower_gap_next > 0.0 { f64::INFINITY } else { -1.0 });
        }
        barrier_margin = barrier_margin.min((fs.eig_min - fs.l).min(fs.u - fs.eig_max));
        floor_r.observe(floor_margin, EIGEN_TOL);
        barrier_r.observe(barrier_margin, EIGEN_TOL);
        upper_r.observe(upper_margin, EIGEN_TOL);
        lower_r.observe(lower_margin, EIGEN_TOL);
        gap_r.observe(9.0 * d / gamma - (fs.u - fs.l), 0.0);
    }
    let n = traces.len();
    Ok([cap_r, floor_r, gap_r, barrier_r, upper_r, lower_r]
        .into_iter()
        .map(|mut r| {
            r.runs_checked = n;
            r.finish()
        })
        .collect())
}

/// `sum_{x in X1} p_x = phi^D / phi^Id` at every iteration of every trace.
pub fn check_mass_identity(traces: &[AsuraTrace]) -> Result<LemmaReport> {
    let mut report = LemmaReport::hard(ids::X1_MASS_IDENTITY);
    let mut worst_gap = 0.0f64;
    for trace in traces {
        if trace.unlabeled_rows.is_none() {
            return Err(Error::InsufficientTrace(
                "trace was recorded without an unlabeled split".into(),
            ));
        }
        for r in &trace.records {
            let (mass, phi_d) = r.x1_mass.zip(r.phi_d).ok_or_else(|| {
                Error::InsufficientTrace(format!("iteration {} lacks split data", r.j))
            })?;
            let gap = (mass - phi_d / r.phi_id).abs();
            worst_gap = worst_gap.max(gap);
            report.observe(MASS_IDENTITY_TOL - gap, 0.0);
        }
    }
    report.runs_checked = traces.len();
    report.statistic = Some(worst_gap);
    report.bound = Some(MASS_IDENTITY_TOL);
    Ok(report.finish())
}

fn common_shape(traces: &[AsuraTrace]) -> Result<(f64, usize)> {
    let first = traces
        .first()
        .ok_or(Error::InsufficientSample { required: 1, actual: 0 })?;
    if traces
        .iter()
        .any(|t| t.gamma != first.gamma || t.dim != first.dim || t.n_rows != first.n_rows)
    {
        return Err(Error::InvalidInput("batch mixes different configurations".into()));
    }
    Ok((first.gamma, first.dim))
}

/// Fraction of runs whose final upper barrier reaches `d / (64 gamma^2)`.
pub fn gamma_event_frequency(traces: &[AsuraTrace]) -> f64 {
    let hits = traces
        .iter()
        .filter(|t| t.final_state.u >= t.dim as f64 / (64.0 * t.gamma * t.gamma))
        .count();
    hits as f64 / traces.len().max(1) as f64
}

/// Frequency test `P(u_m >= p^2 d / (8 gamma^2)) >= 1 - p`, with slack.
pub fn check_upper_barrier_growth(traces: &[AsuraTrace], p: f64) -> Result<LemmaReport> {
    let (gamma, d) = common_shape(traces)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidInput(format!("p must lie in (0, 1], got {p}")));
    }
    let level = p * p * d as f64 / (8.0 * gamma * gamma);
    let hits = traces.iter().filter(|t| t.final_state.u >= level).count();
    let freq = hits as f64 / traces.len() as f64;
    let bound = 1.0 - p - FREQUENCY_SLACK;
    Ok(LemmaReport {
        lemma_id: format!("{}(p={p})", ids::UPPER_BARRIER_GROWTH),
        runs_checked: traces.len(),
        violations: traces.len() - hits,
        worst_margin: freq - bound,
        statistic: Some(freq),
        bound: Some(bound),
        gamma_event: Some(gamma_event_frequency(traces)),
        verdict: if freq >= bound { Verdict::Pass } else { Verdict::Fail },
    })
}

/// One-sided test that the mean one-step change of the potential is not
/// positive, run at every iteration index over the runs still active there.
/// `series` holds one potential sequence `phi_0, ..., phi_m` per run.
fn supermartingale_report(id: &str, series: &[Vec<f64>]) -> LemmaReport {
    let longest = series.iter().map(Vec::len).max().unwrap_or(0);
    let mut report = LemmaReport::hard(id);
    report.runs_checked = series.len();
    let mut worst_t = f64::NEG_INFINITY;
    for j in 0..longest.saturating_sub(1) {
        let deltas: Vec<f64> = series
            .iter()
            .filter(|s| s.len() > j + 1)
            .map(|s| s[j + 1] - s[j])
            .collect();
        if deltas.len() < 2 {
            continue;
        }
        let (mean, se) = mean_se(&deltas);
        let margin = SE_SLACK * se - mean;
        report.worst_margin = report.worst_margin.min(margin);
        if se > 0.0 {
            worst_t = worst_t.max(mean / se);
        }
        if margin < 0.0 {
            report.violations += 1;
        }
    }
    report.statistic = Some(worst_t);
    report.bound = Some(SE_SLACK);
    report.finish()
}

/// Batch-level statistical checks. Needs at least [`MIN_STATISTICAL_BATCH`]
/// traces recorded with an unlabeled split.
pub fn check_statistical_lemmas(traces: &[AsuraTrace], p_grid: &[f64]) -> Result<Vec<LemmaReport>> {
    if traces.len() < MIN_STATISTICAL_BATCH {
        return Err(Error::InsufficientSample {
            required: MIN_STATISTICAL_BATCH,
            actual: traces.len(),
        });
    }
    common_shape(traces)?;
    let mut out = Vec::new();
    for &p in p_grid {
        out.push(check_upper_barrier_growth(traces, p)?);
    }
    let id_series = traces
        .iter()
        .map(|t| {
            t.phi_id_series()
                .ok_or_else(|| Error::InsufficientTrace("final potential missing".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    out.push(supermartingale_report(ids::SUPERMARTINGALE_ID, &id_series));
    let d_series = traces
        .iter()
        .map(|t| {
            t.phi_d_series()
                .ok_or_else(|| Error::InsufficientTrace("weighted potential missing".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    out.push(supermartingale_report(ids::SUPERMARTINGALE_D, &d_series));
    out.push(check_mass_identity(traces)?);
    Ok(out)
}

/// Mean iteration-level query count against `4 R / gamma^2`, plus the
/// form `2 R / gamma`, linear in `1 / gamma`, as an informational report.
pub fn check_query_bound(batch: &[TrialReport], ds: &Dataset, gamma: f64) -> Result<Vec<LemmaReport>> {
    let r = reduced_rank(ds, DEFAULT_RANK_TOL)?;
    check_query_bound_for_rank(batch, r, gamma)
}

pub fn check_query_bound_for_rank(
    batch: &[TrialReport],
    reduced_rank: f64,
    gamma: f64,
) -> Result<Vec<LemmaReport>> {
    if batch.is_empty() {
        return Err(Error::InsufficientSample { required: 1, actual: 0 });
    }
    let counts: Vec<f64> = batch.iter().map(|t| t.queries_iteration_level as f64).collect();
    let (mean, se) = mean_se(&counts);
    let bound = 4.0 * reduced_rank / (gamma * gamma);
    let margin = bound + SE_SLACK * se - mean;
    let main = 2.0 * reduced_rank / gamma;
    let report = |id: &str, bound: f64, margin: f64, verdict| LemmaReport {
        lemma_id: id.to_string(),
        runs_checked: batch.len(),
        violations: usize::from(margin < 0.0),
        worst_margin: margin,
        statistic: Some(mean),
        bound: Some(bound),
        gamma_event: None,
        verdict,
    };
    Ok(vec![
        report(
            ids::QUERY_BOUND,
            bound,
            margin,
            if margin >= 0.0 { Verdict::Pass } else { Verdict::Fail },
        ),
        report(ids::QUERY_BOUND_LINEAR, main, main + SE_SLACK * se - mean, Verdict::Info),
    ])
}

/// Purpose-built defects for negative controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Corruption {
    /// Widen the final barrier gap to `10 d / gamma`.
    GapTooWide,
    /// Push one potential below `gamma / 2`.
    PotentialBelowFloor,
    /// Move an eigenvalue past the upper barrier.
    BarrierCrossed,
    /// Make one rank-one step exceed `gamma (uI - A)`.
    StepTooLarge,
    /// Make one lower-side step exceed `2 gamma (A - l' I)`.
    LowerStepTooLarge,
    /// Append records beyond the iteration cap.
    TooManyIterations,
}

impl Corruption {
    pub const ALL: [Corruption; 6] = [
        Corruption::GapTooWide,
        Corruption::PotentialBelowFloor,
        Corruption::BarrierCrossed,
        Corruption::StepTooLarge,
        Corruption::LowerStepTooLarge,
        Corruption::TooManyIterations,
    ];

    /// The hard check this defect must trip.
    pub fn target(self) -> &'static str {
        match self {
            Corruption::GapTooWide => ids::GAP_BOUND,
            Corruption::PotentialBelowFloor => ids::POTENTIAL_FLOOR,
            Corruption::BarrierCrossed => ids::BARRIER_CONTAINMENT,
            Corruption::StepTooLarge => ids::STEP_UPPER,
            Corruption::LowerStepTooLarge => ids::STEP_LOWER,
            Corruption::TooManyIterations => ids::ITERATION_CAP,
        }
    }
}

pub fn corrupt_trace(trace: &AsuraTrace, corruption: Corruption) -> Result<AsuraTrace> {
    require_probes(trace)?;
    if trace.records.is_empty() {
        return Err(Error::InsufficientTrace("trace has no iterations".into()));
    }
    let mut t = trace.clone();
    let d = t.dim as f64;
    let gamma = t.gamma;
    let last = t.records.len() - 1;
    match corruption {
        Corruption::GapTooWide => {
            t.final_state.u = t.final_state.l + 10.0 * d / gamma;
            t.final_state.mid = 0.5 * (t.final_state.u + t.final_state.l);
        }
        Corruption::PotentialBelowFloor => t.records[last].phi_id = 0.25 * gamma,
        Corruption::BarrierCrossed => {
            let r = &mut t.records[last];
            r.probe.as_mut().expect("checked").eig_max = r.u_j + 1.0;
        }
        Corruption::StepTooLarge => {
            t.records[last].probe.as_mut().expect("checked").step_upper_margin = -0.1 * gamma;
        }
        Corruption::LowerStepTooLarge => {
            t.records[last].probe.as_mut().expect("checked").step_lower_margin = -0.1 * gamma;
        }
        Corruption::TooManyIterations => {
            let extra = iteration_cap(t.dim, gamma) + 1 - t.records.len();
            let filler = t.records[last].clone();
            t.records.extend(std::iter::repeat_n(filler, extra));
        }
    }
    Ok(t)
}
