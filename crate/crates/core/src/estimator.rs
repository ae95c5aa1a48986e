//! Least-squares fitting of model families to energy grids.
//!
//! Every family is linear in θ, so the fit is ordinary least squares solved by
//! Householder QR on unit-norm-scaled columns. The default residual space is
//! energy per token; [`FitSpace::PerRequest`] fits `n_out · E_tok` instead.
//! MAPE is always scored on `E_tok`.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch_cost::SequenceShape;
use crate::io::fmt_sig;
use crate::linalg::{self, LstsqError};
use crate::model_zoo::{self, ModelFamily, ThetaVector};
use crate::par::Execution;
use crate::special::student_t_two_sided;
use crate::trace::EnergyGrid;

/// Residual norm, relative to the norm of the target, at or below which a
/// fit is treated as exact and p-values are reported as 0.
pub const EXACT_FIT_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("{family} needs more than {arity} observations, grid has {n_obs}")]
    InsufficientObservations {
        family: ModelFamily,
        arity: usize,
        n_obs: usize,
    },
    #[error("singular fit for {family}: feature {feature} is collinear with [{others}]")]
    Singular {
        family: ModelFamily,
        feature: String,
        others: String,
    },
    #[error("observation (n_in={n_in}, n_out={n_out}) has non-positive energy per token")]
    NonPositiveTarget { n_in: u64, n_out: u64 },
    #[error("grid is empty")]
    EmptyGrid,
    #[error(transparent)]
    Model(#[from] model_zoo::ModelError),
}

/// Which quantity the residuals are measured in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitSpace {
    #[default]
    PerToken,
    PerRequest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Significance {
    #[serde(rename = "***")]
    P001,
    #[serde(rename = "**")]
    P01,
    #[serde(rename = "*")]
    P05,
    #[serde(rename = "n.s.")]
    NotSignificant,
}

impl Significance {
    pub fn from_p(p: f64) -> Significance {
        if p < 0.001 {
            Significance::P001
        } else if p < 0.01 {
            Significance::P01
        } else if p < 0.05 {
            Significance::P05
        } else {
            Significance::NotSignificant
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Significance::P001 => "***",
            Significance::P01 => "**",
            Significance::P05 => "*",
            Significance::NotSignificant => "n.s.",
        }
    }
}

impl fmt::Display for Significance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta: ThetaVector,
    pub stderr: Vec<f64>,
    /// `None` where the statistic is undefined (exact fit).
    pub t_stats: Vec<Option<f64>>,
    pub p_values: Vec<f64>,
    pub significance: Vec<Significance>,
    pub mape_percent: f64,
    pub sse: f64,
    pub n_obs: usize,
    pub exact_fit: bool,
    pub fit_space: FitSpace,
}

/// Intermediate OLS state needed for coefficient inference.
#[derive(Debug, Clone)]
pub struct OlsState {
    pub coefficients: Vec<f64>,
    pub inv_normal_diag: Vec<f64>,
    pub sse: f64,
    pub target_norm_sq: f64,
    pub n_obs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientStats {
    pub stderr: Vec<f64>,
    pub t_stats: Vec<Option<f64>>,
    pub p_values: Vec<f64>,
    pub significance: Vec<Significance>,
    pub exact_fit: bool,
}

/// Standard errors, t statistics, two-sided p-values and significance buckets.
///
/// An exact fit (zero residual variance, up to [`EXACT_FIT_REL_TOL`]) reports
/// zero standard errors and `p = 0` instead of dividing by zero.
pub fn coefficient_stats(state: &OlsState) -> CoefficientStats {
    let arity = state.coefficients.len();
    let dof = state.n_obs.saturating_sub(arity).max(1) as f64;
    let exact = state.sse <= EXACT_FIT_REL_TOL * EXACT_FIT_REL_TOL * state.target_norm_sq;
    if exact {
        return CoefficientStats {
            stderr: vec![0.0; arity],
            t_stats: vec![None; arity],
            p_values: vec![0.0; arity],
            significance: vec![Significance::P001; arity],
            exact_fit: true,
        };
    }
    let sigma2 = state.sse / dof;
    let stderr: Vec<f64> = state
        .inv_normal_diag
        .iter()
        .map(|d| (sigma2 * d).max(0.0).sqrt())
        .collect();
    let t_stats: Vec<Option<f64>> = state
        .coefficients
        .iter()
        .zip(&stderr)
        .map(|(c, s)| Some(c / s))
        .collect();
    let p_values: Vec<f64> = t_stats
        .iter()
        .map(|t| student_t_two_sided(t.unwrap(), dof))
        .collect();
    CoefficientStats {
        significance: p_values.iter().map(|&p| Significance::from_p(p)).collect(),
        stderr,
        t_stats,
        p_values,
        exact_fit: false,
    }
}

/// `100 · mean |pred - obs| / obs` on energy per token.
pub fn mape(theta: &ThetaVector, grid: &EnergyGrid) -> Result<f64, FitError> {
    if grid.is_empty() {
        return Err(FitError::EmptyGrid);
    }
    let mut total = 0.0;
    for o in grid.observations() {
        if o.e_tok <= 0.0 {
            return Err(FitError::NonPositiveTarget {
                n_in: o.n_in,
                n_out: o.n_out,
            });
        }
        let pred = model_zoo::predict_e_tok(theta, SequenceShape::new(o.n_in, o.n_out))?;
        total += (pred - o.e_tok).abs() / o.e_tok;
    }
    Ok(100.0 * total / grid.len() as f64)
}

pub fn fit(family: ModelFamily, grid: &EnergyGrid) -> Result<FitResult, FitError> {
    fit_in(family, grid, FitSpace::PerToken)
}

pub fn fit_in(family: ModelFamily, grid: &EnergyGrid, space: FitSpace) -> Result<FitResult, FitError> {
    let state = ols(family, grid, space)?;
    let stats = coefficient_stats(&state);
    let theta = ThetaVector::new(family, state.coefficients.clone())?;
    let mape_percent = mape(&theta, grid)?;
    Ok(FitResult {
        theta,
        stderr: stats.stderr,
        t_stats: stats.t_stats,
        p_values: stats.p_values,
        significance: stats.significance,
        mape_percent,
        sse: state.sse,
        n_obs: state.n_obs,
        exact_fit: stats.exact_fit,
        fit_space: space,
    })
}

/// Solves the least-squares problem for `family` on `grid`.
pub fn ols(family: ModelFamily, grid: &EnergyGrid, space: FitSpace) -> Result<OlsState, FitError> {
    let arity = family.arity();
    let n_obs = grid.len();
    if n_obs <= arity {
        return Err(FitError::InsufficientObservations { family, arity, n_obs });
    }
    let mut design = Vec::with_capacity(n_obs);
    let mut target = Vec::with_capacity(n_obs);
    for o in grid.observations() {
        if o.e_tok.is_nan() || o.e_tok <= 0.0 {
            return Err(FitError::NonPositiveTarget {
                n_in: o.n_in,
                n_out: o.n_out,
            });
        }
        let mut row = model_zoo::features(family, SequenceShape::new(o.n_in, o.n_out))?;
        let mut y = o.e_tok;
        if space == FitSpace::PerRequest {
            let w = o.n_out as f64;
            row.iter_mut().for_each(|v| *v *= w);
            y *= w;
        }
        design.push(row);
        target.push(y);
    }
    let solved = linalg::lstsq(&design, &target).map_err(|e| singular(family, e))?;
    let sse = design
        .iter()
        .zip(&target)
        .map(|(row, y)| {
            let pred: f64 = row.iter().zip(&solved.coefficients).map(|(x, c)| x * c).sum();
            (y - pred).powi(2)
        })
        .sum();
    Ok(OlsState {
        coefficients: solved.coefficients,
        inv_normal_diag: solved.inv_normal_diag,
        sse,
        target_norm_sq: target.iter().map(|y| y * y).sum(),
        n_obs,
    })
}

fn singular(family: ModelFamily, err: LstsqError) -> FitError {
    let labels: Vec<&str> = family.terms().iter().map(|t| t.label()).collect();
    let (idx, others) = match err {
        LstsqError::Dependent(j) => (j, labels[..j].join(", ")),
        LstsqError::ZeroColumn(j) => (j, "0".to_string()),
    };
    FitError::Singular {
        family,
        feature: labels[idx].to_string(),
        others,
    }
}

/// Outcome of fitting one family inside a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyFit {
    pub family: ModelFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyComparison {
    pub model_name: String,
    pub fits: Vec<FamilyFit>,
    /// Family with the lowest MAPE among the successful fits.
    pub best_family: Option<ModelFamily>,
}

impl FamilyComparison {
    pub fn get(&self, family: ModelFamily) -> Option<&FitResult> {
        self.fits
            .iter()
            .find(|f| f.family == family)
            .and_then(|f| f.fit.as_ref())
    }
}

/// Fits every family. A failing family is reported without aborting the
/// others; output order is always [`ModelFamily::ALL`].
pub fn compare_families(grid: &EnergyGrid) -> FamilyComparison {
    compare_families_with(grid, &ModelFamily::ALL, FitSpace::PerToken, Execution::default())
}

pub fn compare_families_with(
    grid: &EnergyGrid,
    families: &[ModelFamily],
    space: FitSpace,
    exec: Execution,
) -> FamilyComparison {
    let fits: Vec<FamilyFit> = exec.map(families, |&family| match fit_in(family, grid, space) {
        Ok(fit) => FamilyFit {
            family,
            fit: Some(fit),
            error: None,
        },
        Err(e) => FamilyFit {
            family,
            fit: None,
            error: Some(e.to_string()),
        },
    });
    let best_family = fits
        .iter()
        .filter_map(|f| f.fit.as_ref().map(|r| (f.family, r.mape_percent)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(f, _)| f);
    FamilyComparison {
        model_name: grid.model_name.clone(),
        fits,
        best_family,
    }
}

/// Per-coefficient counts of significance buckets across fits of one family.
pub fn significance_summary(fits: &[&FitResult]) -> Vec<[usize; 4]> {
    let arity = fits.iter().map(|f| f.significance.len()).max().unwrap_or(0);
    let mut out = vec![[0usize; 4]; arity];
    for f in fits {
        for (i, s) in f.significance.iter().enumerate() {
            let col = match s {
                Significance::P001 => 0,
                Significance::P01 => 1,
                Significance::P05 => 2,
                Significance::NotSignificant => 3,
            };
            out[i][col] += 1;
        }
    }
    out
}

/// Aligned ASCII tables: MAPE and SSE, rows = models, columns = families.
/// The lowest-MAPE family of each row is marked with `<`.
pub fn comparison_table(comparisons: &[FamilyComparison]) -> String {
    let mut out = String::new();
    for (title, pick) in [
        ("MAPE (%)", (|r: &FitResult| r.mape_percent) as fn(&FitResult) -> f64),
        ("SSE", |r: &FitResult| r.sse),
    ] {
        let mut rows = vec![{
            let mut h = vec![format!("{title} / model")];
            h.extend(ModelFamily::ALL.iter().map(|f| f.id().to_string()));
            h
        }];
        for c in comparisons {
            let mut row = vec![if c.model_name.is_empty() {
                "-".to_string()
            } else {
                c.model_name.clone()
            }];
            for family in ModelFamily::ALL {
                let cell = match c.get(family) {
                    Some(r) => {
                        let mark = if title.starts_with("MAPE") && c.best_family == Some(family) {
                            " <"
                        } else {
                            ""
                        };
                        format!("{}{mark}", fmt_sig(pick(r), 6))
                    }
                    None if c.fits.iter().any(|f| f.family == family) => "error".into(),
                    None => "-".into(),
                };
                row.push(cell);
            }
            rows.push(row);
        }
        out.push_str(&crate::io::ascii_table(&rows));
        out.push('\n');
    }
    out
}

/// Coefficient detail table for a single fit.
pub fn coefficient_table(fit: &FitResult) -> String {
    let mut rows = vec![vec![
        "coef".to_string(),
        "feature".into(),
        "value".into(),
        "stderr".into(),
        "t".into(),
        "p".into(),
        "signif".into(),
    ]];
    for (i, term) in fit.theta.family.terms().iter().enumerate() {
        rows.push(vec![
            format!("theta{i}"),
            term.label().to_string(),
            fmt_sig(fit.theta.coefficients[i], 6),
            fmt_sig(fit.stderr[i], 6),
            fit.t_stats[i].map_or("-".into(), |t| fmt_sig(t, 6)),
            fmt_sig(fit.p_values[i], 6),
            fit.significance[i].to_string(),
        ]);
    }
    let mut out = crate::io::ascii_table(&rows);
    let _ = writeln!(
        out,
        "family={} n_obs={} sse={} mape={}%{}",
        fit.theta.family,
        fit.n_obs,
        fmt_sig(fit.sse, 6),
        fmt_sig(fit.mape_percent, 6),
        if fit.exact_fit { " (exact fit)" } else { "" }
    );
    out
}
