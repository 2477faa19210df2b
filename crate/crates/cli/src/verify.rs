use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use ssar_core::asura::{asura_sample_split, AsuraConfig, AsuraTrace};
use ssar_core::instances::gen_random_instance;
use ssar_core::io::{read_traces, write_traces};
use ssar_core::linalg::{thin_svd, DEFAULT_RANK_TOL};
use ssar_core::rng::derive_seed;
use ssar_core::verify::{
    check_hard_lemmas_batch, check_mass_identity, check_query_bound, check_statistical_lemmas,
    corrupt_trace, ids, Corruption, LemmaReport, TrialReport, Verdict,
};
use ssar_core::Dataset;

use crate::config::{check_epsilon, with_overrides};
use crate::exit::{invalid, Failure};
use crate::records::{emit, print_config_line, with_pool};
use crate::VerifyArgs;

/// Grid used by the upper-barrier frequency test.
const P_GRID: [f64; 2] = [0.25, 0.5];
/// Reported when the sampler itself aborted on a violated per-step check.
const SAMPLER_ASSERTION: &str = "sampler-assertion";

const KNOWN_IDS: [&str; 13] = [
    ids::ITERATION_CAP,
    ids::POTENTIAL_FLOOR,
    ids::GAP_BOUND,
    ids::BARRIER_CONTAINMENT,
    ids::STEP_UPPER,
    ids::STEP_LOWER,
    ids::X1_MASS_IDENTITY,
    ids::UPPER_BARRIER_GROWTH,
    ids::SUPERMARTINGALE_ID,
    ids::SUPERMARTINGALE_D,
    ids::QUERY_BOUND,
    ids::QUERY_BOUND_LINEAR,
    SAMPLER_ASSERTION,
];

pub fn parse_corruption(s: &str) -> Result<Corruption, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|_| {
        let names: Vec<String> = Corruption::ALL
            .iter()
            .map(|c| serde_json::to_value(c).expect("unit variant").as_str().unwrap_or("").to_owned())
            .collect();
        format!("unknown corruption `{s}`; expected one of {}", names.join(", "))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub dims: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub runs: usize,
    pub c0: f64,
    pub seed: u64,
    pub lemma: Option<String>,
    pub traces: Option<PathBuf>,
    pub emit_traces: Option<PathBuf>,
    pub corrupt: Option<Corruption>,
    pub statistical: bool,
    pub jobs: usize,
    pub out: Option<PathBuf>,
}

impl VerifyConfig {
    fn validate(&self) -> Result<(), Failure> {
        if self.traces.is_none() {
            if self.runs == 0 {
                return Err(invalid("--runs must be at least 1"));
            }
            for &e in &self.epsilons {
                check_epsilon(e)?;
            }
            if self.dims.contains(&0) {
                return Err(invalid("dimensions must be positive"));
            }
        }
        if let Some(id) = &self.lemma {
            if !KNOWN_IDS.contains(&id.as_str()) {
                return Err(invalid(format!(
                    "unknown check `{id}`; known: {}",
                    KNOWN_IDS.join(", ")
                )));
            }
        }
        Ok(())
    }

    fn wants(&self, id: &str) -> bool {
        self.lemma.as_deref().is_none_or(|l| l == id)
    }
}

fn from_args(a: &VerifyArgs) -> VerifyConfig {
    VerifyConfig {
        dims: a.dims.clone(),
        epsilons: a.eps.clone(),
        runs: a.runs,
        c0: a.c0,
        seed: a.seed,
        lemma: a.lemma.clone(),
        traces: a.traces.clone(),
        emit_traces: a.emit_traces.clone(),
        corrupt: a.corrupt,
        statistical: a.statistical,
        jobs: a.jobs,
        out: a.out.clone(),
    }
}

/// Traces sharing one configuration, with the instance they came from when
/// they were sampled here.
struct Group {
    d: Option<usize>,
    epsilon: Option<f64>,
    traces: Vec<AsuraTrace>,
    dataset: Option<Dataset>,
    aborted: Vec<String>,
}

#[derive(Debug, Serialize)]
struct ReportLine<'a> {
    d: Option<usize>,
    epsilon: Option<f64>,
    #[serde(flatten)]
    report: &'a LemmaReport,
}

fn sample_group(cfg: &VerifyConfig, idx: usize, d: usize, epsilon: f64) -> Result<Group, Failure> {
    let group_seed = derive_seed(cfg.seed, idx as u64);
    let inst = gen_random_instance(25 * d, d, d, 1.0, group_seed)?;
    let n1 = inst.dataset.n_unlabeled();
    let svd = thin_svd(&inst.dataset.stacked(), DEFAULT_RANK_TOL)?;
    let outcomes: Vec<Result<AsuraTrace, Failure>> = (0..cfg.runs as u64)
        .into_par_iter()
        .map(|r| {
            let acfg = AsuraConfig::new(epsilon)
                .with_c0(cfg.c0)
                .with_seed(derive_seed(group_seed, r))
                .with_assert_lemmas(true);
            Ok(asura_sample_split(&svd, n1, &acfg)?.1)
        })
        .collect();
    let mut traces = Vec::new();
    let mut aborted = Vec::new();
    for o in outcomes {
        match o {
            Ok(t) => traces.push(t),
            Err(Failure::HardLemma(msg)) => aborted.push(msg),
            Err(f) => return Err(f),
        }
    }
    Ok(Group {
        d: Some(d),
        epsilon: Some(epsilon),
        traces,
        dataset: Some(inst.dataset),
        aborted,
    })
}

fn group_reports(cfg: &VerifyConfig, g: &Group) -> Result<Vec<LemmaReport>, Failure> {
    let mut out = Vec::new();
    if !g.aborted.is_empty() {
        out.push(LemmaReport {
            lemma_id: SAMPLER_ASSERTION.to_string(),
            runs_checked: g.traces.len() + g.aborted.len(),
            violations: g.aborted.len(),
            worst_margin: -1.0,
            statistic: None,
            bound: None,
            gamma_event: None,
            verdict: Verdict::Fail,
        });
    }
    if g.traces.is_empty() {
        return Ok(out);
    }
    out.extend(check_hard_lemmas_batch(&g.traces)?);
    if cfg.statistical {
        out.extend(check_statistical_lemmas(&g.traces, &P_GRID)?);
    } else if g.traces.iter().all(|t| t.unlabeled_rows.is_some()) {
        out.push(check_mass_identity(&g.traces)?);
    }
    if let Some(ds) = &g.dataset {
        let batch: Vec<TrialReport> = g
            .traces
            .iter()
            .map(|t| TrialReport {
                seed: t.seed,
                sampler: "asura".into(),
                m: t.iterations(),
                queries_billed: 0,
                queries_iteration_level: t.unlabeled_samples().unwrap_or(0),
                ratio: None,
                well_balanced: None,
                gamma: Some(t.gamma),
                runtime_ms: 0.0,
            })
            .collect();
        out.extend(check_query_bound(&batch, ds, g.traces[0].gamma)?);
    }
    Ok(out)
}

fn is_hard(id: &str) -> bool {
    ids::HARD.contains(&id) || id == ids::X1_MASS_IDENTITY || id == SAMPLER_ASSERTION
}

pub fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    let cfg = with_overrides(from_args(&args), args.config.as_deref())?;
    cfg.validate()?;
    print_config_line("verify", &cfg, cfg.seed)?;

    let mut groups = match &cfg.traces {
        Some(path) => vec![Group {
            d: None,
            epsilon: None,
            traces: read_traces(path)?,
            dataset: None,
            aborted: Vec::new(),
        }],
        None => {
            let grid: Vec<(usize, f64)> = cfg
                .dims
                .iter()
                .flat_map(|&d| cfg.epsilons.iter().map(move |&e| (d, e)))
                .collect();
            with_pool(cfg.jobs, || {
                grid.iter()
                    .enumerate()
                    .map(|(i, &(d, e))| sample_group(&cfg, i, d, e))
                    .collect::<Result<Vec<_>, _>>()
            })??
        }
    };
    if let Some(c) = cfg.corrupt {
        for g in &mut groups {
            g.traces = g
                .traces
                .iter()
                .map(|t| corrupt_trace(t, c))
                .collect::<Result<_, _>>()?;
        }
    }
    if let Some(path) = &cfg.emit_traces {
        let all: Vec<AsuraTrace> = groups.iter().flat_map(|g| g.traces.iter().cloned()).collect();
        write_traces(path, &all)?;
    }

    let mut failed = Vec::new();
    for g in &groups {
        for report in group_reports(&cfg, g)? {
            if !cfg.wants(&report.lemma_id) {
                continue;
            }
            if is_hard(&report.lemma_id) && !report.passed() {
                failed.push(report.lemma_id.clone());
            }
            let line = ReportLine {
                d: g.d,
                epsilon: g.epsilon,
                report: &report,
            };
            emit(&line, cfg.out.as_deref())?;
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        failed.dedup();
        Err(Failure::HardLemma(failed.join(", ")))
    }
}
