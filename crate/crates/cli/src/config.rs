use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use ssar_core::instances::{
    gen_biased_instance, gen_kernel_instance, gen_lower_bound_instance, gen_random_instance,
    gen_ridge_instance, GeneratedInstance, LowerBoundSpec,
};
use ssar_core::io::load_dataset;
use ssar_core::Dataset;

use crate::exit::{invalid, Failure};

/// A dataset generator and its parameters. The seed is supplied separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GenSpec {
    Random {
        n1: usize,
        n2: usize,
        d: usize,
        noise_sigma: f64,
    },
    Biased {
        n1: usize,
        n2: usize,
        d: usize,
        /// Added to every coordinate of the labeled rows.
        shift: f64,
        noise_sigma: f64,
    },
    Ridge {
        n1: usize,
        d: usize,
        lambda: f64,
        noise_sigma: f64,
    },
    Kernel {
        n: usize,
        rank: usize,
        lambda: f64,
        noise_sigma: f64,
    },
    LowerBound {
        d: usize,
        n: usize,
        epsilon: f64,
        lambda: f64,
    },
}

/// What the generator reports about the instance it built, besides the data.
pub enum SpectralSummary {
    None,
    /// Ridge-type reduction: report the statistical dimension of the unlabeled block.
    StatisticalDimension(f64),
    /// Kernel reduction: report the effective dimension of the kernel matrix.
    EffectiveDimension { kernel: ssar_core::Matrix, lambda: f64 },
}

impl GenSpec {
    pub fn generate(&self, seed: u64) -> Result<(GeneratedInstance, SpectralSummary), Failure> {
        let out = match *self {
            GenSpec::Random { n1, n2, d, noise_sigma } => {
                (gen_random_instance(n1, n2, d, noise_sigma, seed)?, SpectralSummary::None)
            }
            GenSpec::Biased { n1, n2, d, shift, noise_sigma } => (
                gen_biased_instance(n1, n2, d, &vec![shift; d], noise_sigma, seed)?,
                SpectralSummary::None,
            ),
            GenSpec::Ridge { n1, d, lambda, noise_sigma } => (
                gen_ridge_instance(n1, d, lambda, noise_sigma, seed)?,
                SpectralSummary::StatisticalDimension(lambda),
            ),
            GenSpec::Kernel { n, rank, lambda, noise_sigma } => {
                let k = gen_kernel_instance(n, rank, lambda, noise_sigma, seed)?;
                (
                    k.instance,
                    SpectralSummary::EffectiveDimension { kernel: k.kernel, lambda },
                )
            }
            GenSpec::LowerBound { d, n, epsilon, lambda } => {
                let spec = LowerBoundSpec {
                    d,
                    n_copies: n,
                    epsilon,
                    lambda,
                    rng_seed: seed,
                };
                (gen_lower_bound_instance(&spec)?, SpectralSummary::StatisticalDimension(lambda))
            }
        };
        Ok(out)
    }
}

/// Where a run gets its instance from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Manifest(PathBuf),
    /// Generated in memory from the run's base seed.
    Generate(GenSpec),
}

impl Source {
    /// The dataset and, when known, the hidden labels of its unlabeled block.
    pub fn load(&self, seed: u64) -> Result<(Dataset, Option<Vec<f64>>), Failure> {
        match self {
            Source::Manifest(path) => Ok(load_dataset(path)?),
            Source::Generate(spec) => {
                let (inst, _) = spec.generate(seed)?;
                Ok((inst.dataset, Some(inst.hidden_labels)))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Asura,
    Leverage,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: Option<Source>,
    pub sampler: SamplerKind,
    pub epsilon: f64,
    pub c0: f64,
    pub oversample_c: f64,
    /// Sample size for the uniform sampler.
    pub uniform_m: usize,
    pub base_seed: u64,
    pub trials: usize,
    pub jobs: usize,
    pub output: Option<PathBuf>,
    pub assert_lemmas: Option<bool>,
    pub retry: bool,
    pub max_restarts: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), Failure> {
        if self.trials == 0 {
            return Err(invalid("trial count must be at least 1"));
        }
        check_epsilon(self.epsilon)?;
        if self.source.is_none() {
            return Err(invalid("no instance: pass --manifest or give `source` in --config"));
        }
        Ok(())
    }

    pub fn sampler(&self) -> ssar_core::regression::Sampler {
        use ssar_core::regression::Sampler;
        match self.sampler {
            SamplerKind::Asura => Sampler::Asura {
                c0: self.c0,
                retry: self.retry,
                assert_lemmas: self.assert_lemmas,
                max_restarts: self.max_restarts,
            },
            SamplerKind::Leverage => Sampler::Leverage {
                oversample_c: self.oversample_c,
            },
            SamplerKind::Uniform => Sampler::Uniform { m: self.uniform_m },
        }
    }
}

pub fn check_epsilon(epsilon: f64) -> Result<(), Failure> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    Ok(())
}

/// Applies a JSON config file on top of flag values: keys present in the file
/// win, objects merge recursively.
pub fn with_overrides<T>(from_flags: T, file: Option<&Path>) -> Result<T, Failure>
where
    T: Serialize + DeserializeOwned,
{
    let Some(path) = file else {
        return Ok(from_flags);
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("I/O error at {}: {e}", path.display())))?;
    let patch: Value = serde_json::from_str(&text)
        .map_err(|e| invalid(format!("config {}: {e}", path.display())))?;
    let mut base = serde_json::to_value(from_flags).map_err(|e| invalid(e.to_string()))?;
    merge(&mut base, patch);
    serde_json::from_value(base).map_err(|e| invalid(format!("config {}: {e}", path.display())))
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn merge_prefers_patch_and_recurses() {
        let mut base = json!({"a": 1, "b": {"x": 1, "y": 2}, "c": null});
        merge(&mut base, json!({"b": {"y": 5}, "c": 3}));
        assert_eq!(base, json!({"a": 1, "b": {"x": 1, "y": 5}, "c": 3}));
    }

    #[test]
    fn source_round_trips() {
        let s = Source::Generate(GenSpec::Ridge {
            n1: 10,
            d: 2,
            lambda: 1.0,
            noise_sigma: 0.5,
        });
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"kind\":\"ridge\""));
        assert_eq!(serde_json::from_str::<Source>(&text).unwrap(), s);
    }
}
