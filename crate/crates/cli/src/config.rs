//! Experiment configuration, read from TOML with unknown keys rejected.

use std::path::{Path, PathBuf};

use meanfield_core::{Example, InitialSampler, InteractionKernel, MixtureComponent, RegNorm};
use serde::{Deserialize, Serialize};

use crate::error::{Stage, StageError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Cubic,
    OpinionDynamics {
        inner: f64,
        outer: f64,
    },
    AttractionRepulsion,
    /// `φ(r) = Σ coeffs[k] r^k`.
    Polynomial {
        coeffs: Vec<f64>,
    },
}

impl KernelConfig {
    pub fn build(&self) -> meanfield_core::Result<InteractionKernel> {
        match self {
            Self::Cubic => Ok(InteractionKernel::cubic()),
            Self::OpinionDynamics { inner, outer } => {
                InteractionKernel::opinion_dynamics(*inner, *outer)
            }
            Self::AttractionRepulsion => Ok(InteractionKernel::attraction_repulsion()),
            Self::Polynomial { coeffs } => InteractionKernel::polynomial(coeffs.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Gaussian { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
    Mixture { components: Vec<ComponentConfig> },
}

impl InitialConfig {
    pub fn sampler(&self) -> InitialSampler {
        match self {
            Self::Gaussian { mean, sd } => InitialSampler::Gaussian {
                mean: *mean,
                sd: *sd,
            },
            Self::Uniform { low, high } => InitialSampler::Uniform {
                low: *low,
                high: *high,
            },
            Self::Mixture { components } => InitialSampler::Mixture(
                components
                    .iter()
                    .map(|c| MixtureComponent {
                        weight: c.weight,
                        mean: c.mean,
                        sd: c.sd,
                    })
                    .collect(),
            ),
        }
    }

    fn from_sampler(s: &InitialSampler) -> Self {
        match s {
            InitialSampler::Gaussian { mean, sd } => Self::Gaussian {
                mean: *mean,
                sd: *sd,
            },
            InitialSampler::Uniform { low, high } => Self::Uniform {
                low: *low,
                high: *high,
            },
            InitialSampler::Mixture(parts) => Self::Mixture {
                components: parts
                    .iter()
                    .map(|c| ComponentConfig {
                        weight: c.weight,
                        mean: c.mean,
                        sd: c.sd,
                    })
                    .collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeConfig {
    pub nu: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub t_end: f64,
    pub nt: usize,
    /// Read `t,x,u` data from this file instead of solving.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub n: usize,
    #[serde(default = "default_sweep")]
    pub sweep: Vec<usize>,
}

fn default_sweep() -> Vec<usize> {
    vec![4, 8, 16, 32, 64]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormConfig {
    Unweighted,
    Weighted,
}

impl From<NormConfig> for RegNorm {
    fn from(n: NormConfig) -> Self {
        match n {
            NormConfig::Unweighted => RegNorm::Unweighted,
            NormConfig::Weighted => RegNorm::Weighted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationConfig {
    pub norm: NormConfig,
    /// Size of the automatic λ grid.
    #[serde(default = "default_lambda_count")]
    pub lambda_count: usize,
    /// Explicit λ grid; overrides `lambda_count`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    /// TSVD truncation; by default the number of eigenvalues above the L-curve λ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
}

fn default_lambda_count() -> usize {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleConfig {
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    /// Relative level of Gaussian noise added to `b`.
    #[serde(default)]
    pub noise: f64,
    pub output: PathBuf,
    pub kernel: KernelConfig,
    pub initial: InitialConfig,
    pub pde: PdeConfig,
    pub basis: BasisConfig,
    pub regularization: RegularizationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<ParticleConfig>,
}

fn config_error(msg: impl Into<String>) -> StageError {
    StageError::new(Stage::Config, msg)
}

impl ExperimentConfig {
    /// Configuration reproducing one of the built-in examples.
    pub fn from_example(ex: &Example) -> Self {
        let kernel = match ex.name {
            "opinion_dynamics" => KernelConfig::OpinionDynamics {
                inner: 0.4,
                outer: 0.8,
            },
            "attraction_repulsion" => KernelConfig::AttractionRepulsion,
            _ => KernelConfig::Cubic,
        };
        Self {
            name: ex.name.to_string(),
            seed: 0,
            noise: 0.0,
            output: PathBuf::from("out"),
            kernel,
            initial: InitialConfig::from_sampler(&ex.initial),
            pde: PdeConfig {
                nu: ex.nu,
                x_min: ex.x_min,
                x_max: ex.x_max,
                nx: ex.nx,
                t_end: ex.t_end,
                nt: ex.nt,
                data_file: None,
            },
            basis: BasisConfig {
                n: 16,
                sweep: default_sweep(),
            },
            regularization: RegularizationConfig {
                norm: NormConfig::Weighted,
                lambda_count: default_lambda_count(),
                lambdas: None,
                truncation: None,
            },
            particles: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, StageError> {
        let config: Self = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, StageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Panics on a seed above `i64::MAX`, which TOML cannot hold; `validate`
    /// rejects such seeds.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), StageError> {
        if i64::try_from(self.seed).is_err() {
            return Err(config_error("seed must not exceed 2^63 - 1"));
        }
        let p = &self.pde;
        if !(p.nu > 0.0 && p.nu.is_finite()) {
            return Err(config_error("pde.nu must be positive"));
        }
        if !(p.x_min.is_finite() && p.x_max.is_finite() && p.x_max > p.x_min) {
            return Err(config_error("pde.x_min must be below pde.x_max"));
        }
        if p.nx < 2 || p.nt < 1 {
            return Err(config_error(
                "pde.nx must be at least 2 and pde.nt at least 1",
            ));
        }
        if !(p.t_end > 0.0 && p.t_end.is_finite()) {
            return Err(config_error("pde.t_end must be positive"));
        }
        if let Some(path) = &p.data_file {
            if !path.is_file() {
                return Err(config_error(format!(
                    "data file {} does not exist",
                    path.display()
                )));
            }
        }
        if self.basis.n == 0 || self.basis.sweep.contains(&0) {
            return Err(config_error("basis sizes must be positive"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(config_error("noise must be finite and nonnegative"));
        }
        let r = &self.regularization;
        match &r.lambdas {
            Some(l) if l.len() < 5 || l.windows(2).any(|w| !(w[1] > w[0])) || !(l[0] > 0.0) => {
                return Err(config_error(
                    "regularization.lambdas needs at least 5 positive increasing values",
                ));
            }
            None if r.lambda_count < 5 => {
                return Err(config_error(
                    "regularization.lambda_count must be at least 5",
                ));
            }
            _ => {}
        }
        if r.truncation == Some(0) || r.truncation.is_some_and(|m| m > self.basis.n) {
            return Err(config_error(
                "regularization.truncation must lie in 1..=basis.n",
            ));
        }
        if self.particles.as_ref().is_some_and(|pc| pc.count == 0) {
            return Err(config_error("particles.count must be positive"));
        }
        self.kernel
            .build()
            .map_err(|e| config_error(e.to_string()))?;
        Ok(())
    }

    pub fn example(&self) -> Result<Example, StageError> {
        let kernel = self
            .kernel
            .build()
            .map_err(|e| config_error(e.to_string()))?;
        Ok(Example {
            name: "configured",
            kernel,
            nu: self.pde.nu,
            x_min: self.pde.x_min,
            x_max: self.pde.x_max,
            nx: self.pde.nx,
            t_end: self.pde.t_end,
            nt: self.pde.nt,
            initial: self.initial.sampler(),
        })
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_example(&Example::cubic())
    }
}
