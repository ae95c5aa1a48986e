//! Seeded synthetic energy grids with known ground truth.
//!
//! Each cell's true `E_tok` comes either from a coefficient vector or from the
//! FLOP and memory-access counts of an architecture scaled by joules per
//! operation. Noise is multiplicative log-normal: `E_tok · exp(ε)`,
//! `ε ~ N(0, σ²)`. Every cell draws from its own ChaCha8 stream seeded by a
//! SplitMix64 mix of `(seed, n_in, n_out)`, so grids are reproducible across
//! platforms and independent of axis order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch_cost::{self, ModelArch, SequenceShape};
use crate::model_zoo::{self, ModelFamily, ThetaVector};
use crate::par::Execution;
use crate::trace::{EnergyGrid, EnergyObservation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
    #[error("no seed given; synthetic generation requires an explicit seed")]
    MissingSeed,
    #[error("generated energy at (n_in={n_in}, n_out={n_out}) is {value}, not positive and finite")]
    BadEnergy { n_in: u64, n_out: u64, value: f64 },
    #[error(transparent)]
    Cost(#[from] arch_cost::CostError),
    #[error(transparent)]
    Model(#[from] model_zoo::ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Theta {
        theta: ThetaVector,
    },
    Arch {
        arch: ModelArch,
        joules_per_flop: f64,
        joules_per_access: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Standard deviation of the log-normal exponent.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(default)]
    pub model_name: String,
    pub generator: Generator,
    pub n_in_axis: Vec<u64>,
    pub n_out_axis: Vec<u64>,
    pub noise: NoiseModel,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Requests per simulated benchmark run.
    #[serde(default = "one")]
    pub n_req: u64,
}

fn one() -> u64 {
    1
}

impl SynthSpec {
    pub fn new(generator: Generator, n_in_axis: Vec<u64>, n_out_axis: Vec<u64>, sigma: f64, seed: u64) -> Self {
        SynthSpec {
            model_name: String::new(),
            generator,
            n_in_axis,
            n_out_axis,
            noise: NoiseModel { sigma },
            seed: Some(seed),
            n_req: 1,
        }
    }

    pub fn validate(&self) -> Result<u64, SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if !(self.noise.sigma.is_finite() && self.noise.sigma >= 0.0) {
            return bad("sigma must be finite and >= 0");
        }
        if self.n_in_axis.is_empty() || self.n_out_axis.is_empty() {
            return bad("axes must be non-empty");
        }
        if self.n_in_axis.iter().chain(&self.n_out_axis).any(|&v| v == 0) {
            return bad("axis values must be >= 1");
        }
        if self.n_req == 0 {
            return bad("n_req must be >= 1");
        }
        if let Generator::Arch {
            joules_per_flop,
            joules_per_access,
            ..
        } = self.generator
        {
            if !(joules_per_flop.is_finite() && joules_per_access.is_finite()) {
                return bad("energy scales must be finite");
            }
        }
        self.seed.ok_or(SynthError::MissingSeed)
    }
}

/// Noise-free value and injected noise factor of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthCell {
    pub n_in: u64,
    pub n_out: u64,
    pub e_tok_true: f64,
    pub noise_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    /// Coefficients that reproduce the noise-free grid exactly. For an
    /// architecture generator this is the equivalent full-model θ.
    pub theta: ThetaVector,
    pub cells: Vec<TruthCell>,
}

impl GroundTruth {
    /// MAPE of the injected noise itself, `100 · mean |exp(ε) - 1|`.
    pub fn noise_mape_percent(&self) -> f64 {
        let n = self.cells.len() as f64;
        100.0 * self.cells.iter().map(|c| (c.noise_factor - 1.0).abs()).sum::<f64>() / n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub grid: EnergyGrid,
    pub truth: GroundTruth,
}

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn cell_seed(seed: u64, n_in: u64, n_out: u64) -> u64 {
    mix64(mix64(mix64(seed) ^ n_in) ^ n_out)
}

/// Draws `exp(σ ε)` for one cell.
pub fn noise_factor(seed: u64, n_in: u64, n_out: u64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(seed, n_in, n_out));
    let eps: f64 = StandardNormal.sample(&mut rng);
    (sigma * eps).exp()
}

/// Full-model coefficients whose prediction equals
/// `(jpf · total_flops + jpa · total_mem_ops) / n_out` for `arch`.
pub fn equivalent_theta(arch: &ModelArch, joules_per_flop: f64, joules_per_access: f64) -> ThetaVector {
    let d = arch.hidden_size as f64;
    let l = arch.num_layers as f64;
    let nq = arch.num_heads as f64;
    let f = joules_per_flop * 2.0 * l * d;
    let m = joules_per_access * l;
    let coefficients = vec![
        f * (12.0 * d - 1.0) + m * (7.0 * d + 10.0 * d * d - (nq + d) / 2.0),
        f * 2.0 + m * 2.0 * nq,
        f * 2.0 + m * (nq + d),
        f * 12.0 * d + m * 10.0 * d,
        f + m * (nq + d) / 2.0,
        m * 10.0 * d * d,
    ];
    ThetaVector::new(ModelFamily::SweetspotFull, coefficients)
        .expect("finite scales give finite coefficients")
}

fn true_e_tok(generator: &Generator, shape: SequenceShape) -> Result<f64, SynthError> {
    match generator {
        Generator::Theta { theta } => Ok(model_zoo::predict_e_tok(theta, shape)?),
        Generator::Arch {
            arch,
            joules_per_flop,
            joules_per_access,
        } => {
            let flops = arch_cost::total_flops(arch, shape)? as f64;
            let mem = arch_cost::total_mem_ops(arch, shape)? as f64;
            Ok((joules_per_flop * flops + joules_per_access * mem) / shape.n_out as f64)
        }
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SynthOutput, SynthError> {
    generate_with(spec, Execution::default())
}

pub fn generate_with(spec: &SynthSpec, exec: Execution) -> Result<SynthOutput, SynthError> {
    let seed = spec.validate()?;
    let mut keys: Vec<(u64, u64)> = spec
        .n_in_axis
        .iter()
        .flat_map(|&i| spec.n_out_axis.iter().map(move |&o| (i, o)))
        .collect();
    keys.sort_unstable();
    keys.dedup();

    let cells = exec
        .map(&keys, |&(n_in, n_out)| -> Result<TruthCell, SynthError> {
            let e = true_e_tok(&spec.generator, SequenceShape::new(n_in, n_out))?;
            let factor = noise_factor(seed, n_in, n_out, spec.noise.sigma);
            let noisy = e * factor;
            if !(noisy.is_finite() && noisy > 0.0) {
                return Err(SynthError::BadEnergy { n_in, n_out, value: noisy });
            }
            Ok(TruthCell {
                n_in,
                n_out,
                e_tok_true: e,
                noise_factor: factor,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let observations = cells.iter().map(|c| {
        let e_tot = c.e_tok_true * c.noise_factor * spec.n_req as f64 * c.n_out as f64;
        EnergyObservation::new(c.n_in, c.n_out, spec.n_req, e_tot).map_err(|_| SynthError::BadEnergy {
            n_in: c.n_in,
            n_out: c.n_out,
            value: e_tot,
        })
    });
    let observations = observations.collect::<Result<Vec<_>, _>>()?;
    let grid = EnergyGrid::from_observations(spec.model_name.clone(), observations)
        .expect("keys are deduplicated");

    let theta = match &spec.generator {
        Generator::Theta { theta } => theta.clone(),
        Generator::Arch {
            arch,
            joules_per_flop,
            joules_per_access,
        } => equivalent_theta(arch, *joules_per_flop, *joules_per_access),
    };
    Ok(SynthOutput {
        grid,
        truth: GroundTruth {
            spec: spec.clone(),
            theta,
            cells,
        },
    })
}

/// Powers of two from 64 to 4096.
pub fn power_of_two_axis() -> Vec<u64> {
    (6..=12).map(|k| 1u64 << k).collect()
}

/// 13 lengths from 64 to 4096: the powers of two plus the 1.5× point between
/// each neighbouring pair.
pub fn dense_axis() -> Vec<u64> {
    let mut v = power_of_two_axis();
    v.extend((5..=10).map(|k| 3u64 << k));
    v.sort_unstable();
    v
}
