//! Per-token energy model families and the sweet-spot optimum.
//!
//! Every family is linear in its coefficients: `E_tok = θ · φ(n_in, n_out)`.
//! The full model is
//!
//! ```text
//! E_tok = θ0 + θ1 n_in²/n_out + θ2 n_in + θ3 n_in/n_out + θ4 n_out + θ5/n_out
//! ```
//!
//! and for fixed `n_in` it is minimised at
//! `n_out* = sqrt((θ1 n_in² + θ3 n_in + θ5) / θ4)`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch_cost::SequenceShape;
use crate::par::Execution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("n_out must be >= 1 for per-token features")]
    ZeroOutputLength,
    #[error("n_in + n_out must be >= 1 for {0}")]
    ZeroSequenceLength(ModelFamily),
    #[error("{family} expects {expected} coefficients, got {got}")]
    ArityMismatch {
        family: ModelFamily,
        expected: usize,
        got: usize,
    },
    #[error("coefficient θ{0} is not finite")]
    NonFiniteCoefficient(usize),
    #[error("θ4 = {0} is not positive; E_tok has no interior minimum in n_out")]
    NonPositiveCurvature(f64),
    #[error("sweet-spot radicand θ1·n_in² + θ3·n_in + θ5 = {0} is negative")]
    NegativeRadicand(f64),
    #[error("{0} has no closed-form sweet spot")]
    NoClosedForm(ModelFamily),
    #[error("predicted energy per token {0} is not positive")]
    DegenerateModel(f64),
    #[error("n_out_max must be >= 1")]
    EmptySearchRange,
}

/// One basis function of the per-token models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureTerm {
    Constant,
    InSquaredOverOut,
    In,
    InOverOut,
    Out,
    InverseOut,
    InverseTotal,
}

impl FeatureTerm {
    pub fn label(self) -> &'static str {
        match self {
            FeatureTerm::Constant => "1",
            FeatureTerm::InSquaredOverOut => "n_in^2/n_out",
            FeatureTerm::In => "n_in",
            FeatureTerm::InOverOut => "n_in/n_out",
            FeatureTerm::Out => "n_out",
            FeatureTerm::InverseOut => "1/n_out",
            FeatureTerm::InverseTotal => "1/(n_in+n_out)",
        }
    }

    #[inline]
    fn eval(self, n_in: f64, n_out: f64) -> f64 {
        match self {
            FeatureTerm::Constant => 1.0,
            FeatureTerm::InSquaredOverOut => n_in * n_in / n_out,
            FeatureTerm::In => n_in,
            FeatureTerm::InOverOut => n_in / n_out,
            FeatureTerm::Out => n_out,
            FeatureTerm::InverseOut => 1.0 / n_out,
            FeatureTerm::InverseTotal => 1.0 / (n_in + n_out),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelFamily {
    Baseline1,
    Baseline2,
    Baseline3,
    Baseline4,
    SweetspotFlops,
    SweetspotFull,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 6] = [
        ModelFamily::Baseline1,
        ModelFamily::Baseline2,
        ModelFamily::Baseline3,
        ModelFamily::Baseline4,
        ModelFamily::SweetspotFlops,
        ModelFamily::SweetspotFull,
    ];

    pub fn terms(self) -> &'static [FeatureTerm] {
        use FeatureTerm::*;
        match self {
            ModelFamily::Baseline1 => &[Constant],
            ModelFamily::Baseline2 => &[Constant, InverseOut],
            ModelFamily::Baseline3 => &[Constant, InverseTotal],
            ModelFamily::Baseline4 => &[Constant, InOverOut, In],
            ModelFamily::SweetspotFlops => &[Constant, InSquaredOverOut, In, InOverOut, Out],
            ModelFamily::SweetspotFull => {
                &[Constant, InSquaredOverOut, In, InOverOut, Out, InverseOut]
            }
        }
    }

    pub fn arity(self) -> usize {
        self.terms().len()
    }

    pub fn id(self) -> &'static str {
        match self {
            ModelFamily::Baseline1 => "BASELINE1",
            ModelFamily::Baseline2 => "BASELINE2",
            ModelFamily::Baseline3 => "BASELINE3",
            ModelFamily::Baseline4 => "BASELINE4",
            ModelFamily::SweetspotFlops => "SWEETSPOT_FLOPS",
            ModelFamily::SweetspotFull => "SWEETSPOT_FULL",
        }
    }

    pub fn parse(s: &str) -> Option<ModelFamily> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        ModelFamily::ALL.into_iter().find(|f| f.id() == norm)
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Feature vector of `family` at `shape`.
pub fn features(family: ModelFamily, shape: SequenceShape) -> Result<Vec<f64>, ModelError> {
    check_shape(family, shape)?;
    let (n_in, n_out) = (shape.n_in as f64, shape.n_out as f64);
    Ok(family.terms().iter().map(|t| t.eval(n_in, n_out)).collect())
}

fn check_shape(family: ModelFamily, shape: SequenceShape) -> Result<(), ModelError> {
    if shape.n_out == 0 {
        return Err(ModelError::ZeroOutputLength);
    }
    if family == ModelFamily::Baseline3 && shape.n_in + shape.n_out == 0 {
        return Err(ModelError::ZeroSequenceLength(family));
    }
    Ok(())
}

/// Fitted coefficients of one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTheta")]
pub struct ThetaVector {
    pub family: ModelFamily,
    pub coefficients: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitted_on: Option<String>,
}

#[derive(Deserialize)]
struct RawTheta {
    family: ModelFamily,
    coefficients: Vec<f64>,
    #[serde(default)]
    fitted_on: Option<String>,
}

impl TryFrom<RawTheta> for ThetaVector {
    type Error = ModelError;
    fn try_from(raw: RawTheta) -> Result<Self, ModelError> {
        let mut theta = ThetaVector::new(raw.family, raw.coefficients)?;
        theta.fitted_on = raw.fitted_on;
        Ok(theta)
    }
}

impl ThetaVector {
    pub fn new(family: ModelFamily, coefficients: Vec<f64>) -> Result<Self, ModelError> {
        if coefficients.len() != family.arity() {
            return Err(ModelError::ArityMismatch {
                family,
                expected: family.arity(),
                got: coefficients.len(),
            });
        }
        if let Some(i) = coefficients.iter().position(|c| !c.is_finite()) {
            return Err(ModelError::NonFiniteCoefficient(i));
        }
        Ok(ThetaVector {
            family,
            coefficients,
            fitted_on: None,
        })
    }

    pub fn with_provenance(mut self, fitted_on: impl Into<String>) -> Self {
        self.fitted_on = Some(fitted_on.into());
        self
    }

    pub fn scaled(&self, s: f64) -> ThetaVector {
        ThetaVector {
            family: self.family,
            coefficients: self.coefficients.iter().map(|c| c * s).collect(),
            fitted_on: self.fitted_on.clone(),
        }
    }

    fn check(&self) -> Result<(), ModelError> {
        if self.coefficients.len() != self.family.arity() {
            return Err(ModelError::ArityMismatch {
                family: self.family,
                expected: self.family.arity(),
                got: self.coefficients.len(),
            });
        }
        Ok(())
    }

    // Unchecked evaluation; callers validate the shape and arity first.
    #[inline]
    fn eval(&self, n_in: f64, n_out: f64) -> f64 {
        self.family
            .terms()
            .iter()
            .zip(&self.coefficients)
            .map(|(t, c)| c * t.eval(n_in, n_out))
            .sum()
    }

    /// Coefficient by position in the full six-term layout, for the two
    /// sweet-spot families. θ5 is zero for the FLOPs-only family.
    fn full_coefficient(&self, i: usize) -> f64 {
        self.coefficients.get(i).copied().unwrap_or(0.0)
    }
}

/// Energy per output token (J/token).
pub fn predict_e_tok(theta: &ThetaVector, shape: SequenceShape) -> Result<f64, ModelError> {
    theta.check()?;
    check_shape(theta.family, shape)?;
    Ok(theta.eval(shape.n_in as f64, shape.n_out as f64))
}

/// Energy of one request (J), `n_out · E_tok`.
pub fn predict_e_tot(theta: &ThetaVector, shape: SequenceShape) -> Result<f64, ModelError> {
    Ok(shape.n_out as f64 * predict_e_tok(theta, shape)?)
}

/// Tokens per joule.
pub fn efficiency(theta: &ThetaVector, shape: SequenceShape) -> Result<f64, ModelError> {
    let e_tok = predict_e_tok(theta, shape)?;
    if e_tok <= 0.0 || !e_tok.is_finite() {
        return Err(ModelError::DegenerateModel(e_tok));
    }
    Ok(1.0 / e_tok)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweetSpotPrediction {
    pub n_in: u64,
    pub n_out_star_continuous: f64,
    pub n_out_star_rounded: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapped_to_grid: Option<u64>,
}

/// Closed-form optimum output length for a sweet-spot family.
///
/// When `grid` is given, `snapped_to_grid` holds whichever of the two grid
/// points bracketing the continuous optimum has the lower predicted `E_tok`
/// (ties go to the smaller length). Zero entries of the grid are ignored.
pub fn sweet_spot_closed_form(
    theta: &ThetaVector,
    n_in: u64,
    grid: Option<&[u64]>,
) -> Result<SweetSpotPrediction, ModelError> {
    theta.check()?;
    match theta.family {
        ModelFamily::SweetspotFull | ModelFamily::SweetspotFlops => {}
        other => return Err(ModelError::NoClosedForm(other)),
    }
    let x = n_in as f64;
    let curvature = theta.full_coefficient(4);
    if curvature <= 0.0 {
        return Err(ModelError::NonPositiveCurvature(curvature));
    }
    let radicand =
        theta.full_coefficient(1) * x * x + theta.full_coefficient(3) * x + theta.full_coefficient(5);
    if radicand < 0.0 {
        return Err(ModelError::NegativeRadicand(radicand));
    }
    let continuous = (radicand / curvature).sqrt();
    let rounded = (continuous.round() as u64).max(1);
    let snapped_to_grid = match grid {
        Some(points) => snap_to_grid(theta, n_in, continuous, points),
        None => None,
    };
    Ok(SweetSpotPrediction {
        n_in,
        n_out_star_continuous: continuous,
        n_out_star_rounded: rounded,
        snapped_to_grid,
    })
}

fn snap_to_grid(theta: &ThetaVector, n_in: u64, target: f64, points: &[u64]) -> Option<u64> {
    let mut pts: Vec<u64> = points.iter().copied().filter(|&p| p > 0).collect();
    pts.sort_unstable();
    pts.dedup();
    let above = pts.partition_point(|&p| (p as f64) < target);
    let candidates = [above.checked_sub(1), (above < pts.len()).then_some(above)];
    candidates
        .into_iter()
        .flatten()
        .map(|i| pts[i])
        .map(|p| (theta.eval(n_in as f64, p as f64), p))
        .reduce(|a, b| if b.0 < a.0 { b } else { a })
        .map(|(_, p)| p)
}

/// Exhaustive argmin of `E_tok` over integer `n_out ∈ [1, n_out_max]`.
/// Ties go to the smaller `n_out`. Works for every family.
pub fn sweet_spot_brute_force(
    theta: &ThetaVector,
    n_in: u64,
    n_out_max: u64,
) -> Result<u64, ModelError> {
    sweet_spot_brute_force_with(theta, n_in, n_out_max, Execution::default())
}

pub fn sweet_spot_brute_force_with(
    theta: &ThetaVector,
    n_in: u64,
    n_out_max: u64,
    exec: Execution,
) -> Result<u64, ModelError> {
    theta.check()?;
    if n_out_max == 0 {
        return Err(ModelError::EmptySearchRange);
    }
    let x = n_in as f64;
    let best = exec.map_reduce_range(
        1,
        n_out_max,
        |n| (theta.eval(x, n as f64), n),
        |a, b| {
            // total order on (energy, n_out) keeps the reduction associative
            match a.0.total_cmp(&b.0) {
                std::cmp::Ordering::Less => a,
                std::cmp::Ordering::Greater => b,
                std::cmp::Ordering::Equal => {
                    if a.1 <= b.1 {
                        a
                    } else {
                        b
                    }
                }
            }
        },
    );
    Ok(best.expect("non-empty range").1)
}

/// One row of the bundled reference coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTheta {
    pub model: String,
    /// Size label used by the architecture registry.
    pub arch_size_label: String,
    /// Size label used alongside the coefficients; differs for Falcon-RW.
    pub theta_size_label: String,
    pub theta: ThetaVector,
    pub observed_peak: SequenceShape,
    pub predicted_peak: SequenceShape,
}

pub fn reference_thetas() -> Vec<ReferenceTheta> {
    serde_json::from_str(include_str!("../data/reference_thetas.json"))
        .expect("bundled reference coefficients are valid")
}
