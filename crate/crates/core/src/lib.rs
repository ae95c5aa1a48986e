//! Analytical energy models for transformer LLM inference.
//!
//! The crate is organised bottom-up:
//!
//! * [`arch_cost`] counts FLOPs and memory element accesses for the prefill and
//!   decode phases of a decoder-only transformer.
//! * [`model_zoo`] holds the per-token energy model families, their feature maps
//!   and the closed-form output length that minimises energy per token.
//! * [`estimator`] fits model coefficients to measured grids by least squares and
//!   reports MAPE, standard errors and p-values.
//! * [`trace`] integrates recorded power traces and builds efficiency grids and
//!   normalised heatmaps.
//! * [`synth`] generates seeded synthetic grids with known ground truth.
//! * [`cli`] binds everything into the `llm-energy` command.
//!
//! Data-parallel loops (brute-force scans, sweeps, synthetic generation,
//! multi-family fits) run on rayon when the `parallel` feature is enabled and
//! fall back to plain iterators otherwise. Results never depend on which path
//! ran.

pub mod arch_cost;
pub mod cli;
pub mod estimator;
pub mod io;
mod linalg;
pub mod model_zoo;
pub mod par;
mod special;
pub mod synth;
pub mod trace;

pub use arch_cost::{CostError, ModelArch, SequenceShape};
pub use estimator::{FitError, FitResult, FitSpace, Significance};
pub use model_zoo::{ModelError, ModelFamily, SweetSpotPrediction, ThetaVector};
pub use par::Execution;
pub use synth::{SynthError, SynthSpec};
pub use trace::{EnergyGrid, EnergyObservation, PowerTrace, TraceError};
