use std::path::PathBuf;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::json;
use ssar_core::instances::construct_packing;
use ssar_core::io::{save_dataset, write_packing};
use ssar_core::linalg::{
    effective_dimension, psd_eigenvalues, reduced_rank, statistical_dimension, thin_svd,
    DEFAULT_RANK_TOL,
};

use crate::config::{with_overrides, GenSpec, SpectralSummary};
use crate::exit::Failure;
use crate::records::{emit, print_config_line};
use crate::{GenArgs, GenKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenTarget {
    Dataset(GenSpec),
    Packing { d: usize, epsilon: f64, lambda: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub target: GenTarget,
    pub seed: u64,
    pub out: PathBuf,
    pub stem: String,
}

fn from_args(a: &GenArgs) -> GenConfig {
    let spec = match a.kind {
        GenKind::Packing => GenTarget::Packing {
            d: a.d,
            epsilon: a.eps,
            lambda: a.lambda,
        },
        GenKind::Random => GenTarget::Dataset(GenSpec::Random {
            n1: a.n1,
            n2: a.n2,
            d: a.d,
            noise_sigma: a.noise,
        }),
        GenKind::Biased => GenTarget::Dataset(GenSpec::Biased {
            n1: a.n1,
            n2: a.n2,
            d: a.d,
            shift: a.shift,
            noise_sigma: a.noise,
        }),
        GenKind::Ridge => GenTarget::Dataset(GenSpec::Ridge {
            n1: a.n1,
            d: a.d,
            lambda: a.lambda,
            noise_sigma: a.noise,
        }),
        GenKind::Kernel => GenTarget::Dataset(GenSpec::Kernel {
            n: a.n.unwrap_or(300),
            rank: a.rank,
            lambda: a.lambda,
            noise_sigma: a.noise,
        }),
        GenKind::LowerBound => GenTarget::Dataset(GenSpec::LowerBound {
            d: a.d,
            n: a.n.unwrap_or(10_000),
            epsilon: a.eps,
            lambda: a.lambda,
        }),
    };
    let stem = a.stem.clone().unwrap_or_else(|| {
        let kind = a.kind.to_possible_value().expect("no skipped variants");
        format!("{}_{}", kind.get_name(), a.seed)
    });
    GenConfig {
        target: spec,
        seed: a.seed,
        out: a.out.clone(),
        stem,
    }
}

pub fn cmd_gen(args: GenArgs) -> Result<(), Failure> {
    let cfg = with_overrides(from_args(&args), args.config.as_deref())?;
    print_config_line("gen", &cfg, cfg.seed)?;
    match &cfg.target {
        GenTarget::Packing { d, epsilon, lambda } => {
            let packing = construct_packing(*d, *epsilon, *lambda)?;
            let path = if cfg.out.extension().is_some() {
                cfg.out.clone()
            } else {
                cfg.out.join(format!("{}.csv", cfg.stem))
            };
            if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .map_err(|e| Failure::Io(format!("I/O error at {}: {e}", dir.display())))?;
            }
            write_packing(&path, &packing)?;
            emit(
                &json!({
                    "packing": path,
                    "members": packing.len(),
                    "separation": packing.separation,
                }),
                None,
            )
        }
        GenTarget::Dataset(spec) => {
            let (inst, summary) = spec.generate(cfg.seed)?;
            let ds = &inst.dataset;
            let manifest = save_dataset(&cfg.out, &cfg.stem, ds, Some(&inst.hidden_labels))?;
            let mut line = json!({
                "manifest": manifest,
                "n1": ds.n_unlabeled(),
                "n2": ds.n_labeled(),
                "d": ds.dim(),
                "reduced_rank": reduced_rank(ds, DEFAULT_RANK_TOL)?,
            });
            match summary {
                SpectralSummary::None => {}
                SpectralSummary::StatisticalDimension(lambda) => {
                    let sigma = thin_svd(ds.x_unlabeled(), DEFAULT_RANK_TOL)?.sigma;
                    line["sd_lambda"] = json!(statistical_dimension(&sigma, lambda)?);
                }
                SpectralSummary::EffectiveDimension { kernel, lambda } => {
                    line["d_lambda"] = json!(effective_dimension(&psd_eigenvalues(&kernel)?, lambda)?);
                }
            }
            emit(&line, None)
        }
    }
}
