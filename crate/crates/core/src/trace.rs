//! Power traces, energy observations and efficiency grids.
//!
//! A [`PowerTrace`] is integrated with the trapezoidal rule into total energy.
//! Benchmark runs of `n_req` identical requests become [`EnergyObservation`]s
//! keyed by `(n_in, n_out)` inside an [`EnergyGrid`]. Grids can be turned into
//! min-max normalised efficiency heatmaps and averaged across models.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::Execution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("timestamps must be strictly increasing (sample {0})")]
    NonMonotonic(usize),
    #[error("power at sample {0} is negative or not finite")]
    InvalidPower(usize),
    #[error("timestamp at sample {0} is not finite")]
    InvalidTimestamp(usize),
    #[error("need at least 2 samples to integrate, have {0}")]
    TooFewSamples(usize),
    #[error("window [{start}, {end}] does not lie within the trace span [{first}, {last}]")]
    WindowOutOfRange {
        start: f64,
        end: f64,
        first: f64,
        last: f64,
    },
    #[error("duplicate observation for (n_in={0}, n_out={1})")]
    DuplicateKey(u64, u64),
    #[error("observation (n_in={n_in}, n_out={n_out}): {reason}")]
    InvalidObservation {
        n_in: u64,
        n_out: u64,
        reason: String,
    },
    #[error("grid is empty")]
    EmptyGrid,
    #[error("all efficiency values are equal ({0}); min-max normalisation is undefined")]
    DegenerateGrid(f64),
    #[error("grid '{0}' does not share the cells of the first grid")]
    AxisMismatch(String),
}

/// Sampling interval above which a trace is flagged as coarse.
pub const COARSE_INTERVAL_MS: i64 = 500;

/// Power samples `(timestamp, watts)`. Timestamps are held as integer
/// milliseconds so per-pair intervals are exact even for epoch-scale times.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrace {
    samples: Vec<(i64, f64)>,
}

impl PowerTrace {
    /// Builds a trace from `(seconds, watts)` pairs. Seconds are rounded to
    /// the nearest millisecond.
    pub fn from_seconds(samples: &[(f64, f64)]) -> Result<Self, TraceError> {
        let mut out = Vec::with_capacity(samples.len());
        for (i, &(t, p)) in samples.iter().enumerate() {
            if !t.is_finite() {
                return Err(TraceError::InvalidTimestamp(i));
            }
            out.push(((t * 1000.0).round() as i64, p));
        }
        Self::from_millis(out)
    }

    pub fn from_millis(samples: Vec<(i64, f64)>) -> Result<Self, TraceError> {
        for (i, &(_, p)) in samples.iter().enumerate() {
            if !(p.is_finite() && p >= 0.0) {
                return Err(TraceError::InvalidPower(i));
            }
        }
        if let Some(i) = samples.windows(2).position(|w| w[1].0 <= w[0].0) {
            return Err(TraceError::NonMonotonic(i + 1));
        }
        Ok(PowerTrace { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples_ms(&self) -> &[(i64, f64)] {
        &self.samples
    }

    /// `(first, last)` timestamp in seconds.
    pub fn span(&self) -> Option<(f64, f64)> {
        let first = self.samples.first()?.0 as f64 / 1000.0;
        let last = self.samples.last()?.0 as f64 / 1000.0;
        Some((first, last))
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, TraceError> {
        Self::from_millis(self.samples.iter().map(|&(t, p)| (t, p * factor)).collect())
    }

    pub fn warnings(&self) -> Vec<String> {
        let worst = self.samples.windows(2).map(|w| w[1].0 - w[0].0).max();
        match worst {
            Some(dt) if dt > COARSE_INTERVAL_MS => vec![format!(
                "sampling interval up to {dt} ms exceeds {COARSE_INTERVAL_MS} ms; \
                 trapezoidal integration error may be significant"
            )],
            _ => Vec::new(),
        }
    }
}

/// Trapezoidal energy in joules, `Σ (P_i + P_{i+1}) / 2 · Δt_i`.
///
/// With a window `(t_start, t_end)` in seconds, power at the window edges is
/// linearly interpolated and only the covered part of the trace counts.
pub fn integrate_power(trace: &PowerTrace, window: Option<(f64, f64)>) -> Result<f64, TraceError> {
    let s = &trace.samples;
    if s.len() < 2 {
        return Err(TraceError::TooFewSamples(s.len()));
    }
    let t0 = s[0].0;
    // work in f64 milliseconds relative to the first sample
    let rel: Vec<(f64, f64)> = s.iter().map(|&(t, p)| ((t - t0) as f64, p)).collect();
    let last = rel[rel.len() - 1].0;

    let (lo, hi) = match window {
        None => (0.0, last),
        Some((start, end)) => {
            let lo = start * 1000.0 - t0 as f64;
            let hi = end * 1000.0 - t0 as f64;
            let (first_s, last_s) = trace.span().unwrap();
            // tolerate sub-microsecond rounding at the edges
            let slack = 1e-6;
            if !(lo >= -slack && hi <= last + slack && lo <= hi) {
                return Err(TraceError::WindowOutOfRange {
                    start,
                    end,
                    first: first_s,
                    last: last_s,
                });
            }
            (lo.clamp(0.0, last), hi.clamp(0.0, last))
        }
    };

    let mut points: Vec<(f64, f64)> = Vec::with_capacity(rel.len() + 2);
    points.push((lo, interpolate(&rel, lo)));
    points.extend(rel.iter().copied().filter(|&(t, _)| t > lo && t < hi));
    points.push((hi, interpolate(&rel, hi)));

    let energy_ms: f64 = points
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum();
    Ok(energy_ms / 1000.0)
}

fn interpolate(rel: &[(f64, f64)], t: f64) -> f64 {
    let i = rel.partition_point(|&(ti, _)| ti < t);
    if i < rel.len() && rel[i].0 == t {
        return rel[i].1;
    }
    if i == 0 {
        return rel[0].1;
    }
    if i == rel.len() {
        return rel[rel.len() - 1].1;
    }
    let (ta, pa) = rel[i - 1];
    let (tb, pb) = rel[i];
    pa + (pb - pa) * (t - ta) / (tb - ta)
}

/// One measured benchmark configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyObservation {
    pub n_in: u64,
    pub n_out: u64,
    pub n_req: u64,
    /// Joules for the whole run of `n_req` requests.
    pub e_tot: f64,
    /// Joules per generated token, `e_tot / (n_req · n_out)`.
    pub e_tok: f64,
    /// Tokens per joule, `1 / e_tok`.
    pub e_eff: f64,
}

impl EnergyObservation {
    pub fn new(n_in: u64, n_out: u64, n_req: u64, e_tot: f64) -> Result<Self, TraceError> {
        let bad = |reason: &str| TraceError::InvalidObservation {
            n_in,
            n_out,
            reason: reason.to_string(),
        };
        if n_out == 0 {
            return Err(bad("n_out must be >= 1"));
        }
        if n_req == 0 {
            return Err(bad("n_req must be >= 1"));
        }
        if !(e_tot.is_finite() && e_tot > 0.0) {
            return Err(bad("e_tot must be positive and finite"));
        }
        let tokens = n_req as f64 * n_out as f64;
        let e_tok = e_tot / tokens;
        Ok(EnergyObservation {
            n_in,
            n_out,
            n_req,
            e_tot,
            e_tok,
            e_eff: tokens / e_tot,
        })
    }
}

/// Row of the grid CSV; derived columns are never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub n_in: u64,
    pub n_out: u64,
    pub n_req: u64,
    pub e_tot_j: f64,
}

/// Observations of one model keyed by `(n_in, n_out)`; immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyGrid {
    pub model_name: String,
    cells: BTreeMap<(u64, u64), EnergyObservation>,
}

impl EnergyGrid {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, n_in: u64, n_out: u64) -> Option<&EnergyObservation> {
        self.cells.get(&(n_in, n_out))
    }

    /// Observations in `(n_in, n_out)` order.
    pub fn observations(&self) -> impl Iterator<Item = &EnergyObservation> {
        self.cells.values()
    }

    pub fn n_in_axis(&self) -> Vec<u64> {
        self.cells.keys().map(|k| k.0).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn n_out_axis(&self) -> Vec<u64> {
        self.cells.keys().map(|k| k.1).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn records(&self) -> Vec<GridRecord> {
        self.observations()
            .map(|o| GridRecord {
                n_in: o.n_in,
                n_out: o.n_out,
                n_req: o.n_req,
                e_tot_j: o.e_tot,
            })
            .collect()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.model_name = name.into();
        self
    }

    pub fn from_observations(
        model_name: impl Into<String>,
        observations: impl IntoIterator<Item = EnergyObservation>,
    ) -> Result<Self, TraceError> {
        let mut cells = BTreeMap::new();
        for o in observations {
            if cells.insert((o.n_in, o.n_out), o).is_some() {
                return Err(TraceError::DuplicateKey(o.n_in, o.n_out));
            }
        }
        Ok(EnergyGrid {
            model_name: model_name.into(),
            cells,
        })
    }
}

pub fn build_grid(records: &[GridRecord]) -> Result<EnergyGrid, TraceError> {
    let obs = records
        .iter()
        .map(|r| EnergyObservation::new(r.n_in, r.n_out, r.n_req, r.e_tot_j))
        .collect::<Result<Vec<_>, _>>()?;
    EnergyGrid::from_observations("", obs)
}

/// Dense `n_in × n_out` matrix of values; `None` where a grid has no cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    pub n_in_axis: Vec<u64>,
    pub n_out_axis: Vec<u64>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl Heatmap {
    pub fn from_fn(
        n_in_axis: Vec<u64>,
        n_out_axis: Vec<u64>,
        mut f: impl FnMut(u64, u64) -> Option<f64>,
    ) -> Self {
        let values = n_in_axis
            .iter()
            .map(|&i| n_out_axis.iter().map(|&o| f(i, o)).collect())
            .collect();
        Heatmap {
            n_in_axis,
            n_out_axis,
            values,
        }
    }

    pub fn get(&self, n_in: u64, n_out: u64) -> Option<f64> {
        let i = self.n_in_axis.iter().position(|&v| v == n_in)?;
        let j = self.n_out_axis.iter().position(|&v| v == n_out)?;
        self.values[i][j]
    }

    pub fn present(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().flatten().filter_map(|v| *v)
    }

    /// Min-max normalisation of the present cells to `[0, 1]`.
    pub fn normalized(&self) -> Result<Heatmap, TraceError> {
        let (min, max) = self
            .present()
            .fold(None, |acc: Option<(f64, f64)>, v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
            .ok_or(TraceError::EmptyGrid)?;
        if max == min {
            return Err(TraceError::DegenerateGrid(min));
        }
        let range = max - min;
        Ok(Heatmap {
            n_in_axis: self.n_in_axis.clone(),
            n_out_axis: self.n_out_axis.clone(),
            values: self
                .values
                .iter()
                .map(|row| row.iter().map(|v| v.map(|x| (x - min) / range)).collect())
                .collect(),
        })
    }
}

/// Efficiency (tokens/J) of every cell as a heatmap.
pub fn efficiency_heatmap(grid: &EnergyGrid) -> Heatmap {
    Heatmap::from_fn(grid.n_in_axis(), grid.n_out_axis(), |i, o| {
        grid.get(i, o).map(|c| c.e_eff)
    })
}

/// `(e_eff - min) / (max - min)` per cell.
pub fn normalize_min_max(grid: &EnergyGrid) -> Result<Heatmap, TraceError> {
    if grid.is_empty() {
        return Err(TraceError::EmptyGrid);
    }
    efficiency_heatmap(grid).normalized()
}

/// Cell-wise mean of each grid's normalised efficiency. All grids must cover
/// exactly the same `(n_in, n_out)` cells.
pub fn aggregate_normalized(grids: &[EnergyGrid]) -> Result<Heatmap, TraceError> {
    aggregate_normalized_with(grids, Execution::default())
}

pub fn aggregate_normalized_with(
    grids: &[EnergyGrid],
    exec: Execution,
) -> Result<Heatmap, TraceError> {
    let first = grids.first().ok_or(TraceError::EmptyGrid)?;
    let keys: Vec<&(u64, u64)> = first.cells.keys().collect();
    for g in &grids[1..] {
        if !g.cells.keys().eq(keys.iter().copied()) {
            return Err(TraceError::AxisMismatch(g.model_name.clone()));
        }
    }
    let normalized = exec
        .map(grids, normalize_min_max)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let count = normalized.len() as f64;
    let mut out = normalized[0].clone();
    for (r, row) in out.values.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            if cell.is_some() {
                let sum: f64 = normalized.iter().map(|h| h.values[r][c].unwrap()).sum();
                *cell = Some(sum / count);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spread {
    pub ratio: f64,
    pub max_e_eff: f64,
    pub min_e_eff: f64,
    pub argmax: (u64, u64),
    pub argmin: (u64, u64),
}

/// `max e_eff / min e_eff` with the cells where each occurs (first in
/// `(n_in, n_out)` order on ties).
pub fn efficiency_spread(grid: &EnergyGrid) -> Result<Spread, TraceError> {
    let mut it = grid.observations();
    let first = it.next().ok_or(TraceError::EmptyGrid)?;
    let (mut hi, mut lo) = (first, first);
    for o in it {
        if o.e_eff > hi.e_eff {
            hi = o;
        }
        if o.e_eff < lo.e_eff {
            lo = o;
        }
    }
    Ok(Spread {
        ratio: hi.e_eff / lo.e_eff,
        max_e_eff: hi.e_eff,
        min_e_eff: lo.e_eff,
        argmax: (hi.n_in, hi.n_out),
        argmin: (lo.n_in, lo.n_out),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(s: &[(f64, f64)]) -> PowerTrace {
        PowerTrace::from_seconds(s).unwrap()
    }

    #[test]
    fn trapezoid_examples() {
        let constant = trace(&[(0.0, 100.0), (1.0, 100.0)]);
        assert_eq!(integrate_power(&constant, None).unwrap(), 100.0);
        let tri = trace(&[(0.0, 100.0), (0.5, 200.0), (1.0, 100.0)]);
        assert_eq!(integrate_power(&tri, None).unwrap(), 150.0);
    }

    #[test]
    fn irregular_steps_and_windows() {
        let t = trace(&[(10.0, 0.0), (10.25, 100.0), (11.0, 100.0), (13.0, 300.0)]);
        // 12.5 + 75 + 400
        assert!((integrate_power(&t, None).unwrap() - 487.5).abs() < 1e-12);
        // window inside one segment: power rises 100 -> 300 over 2s
        let w = integrate_power(&t, Some((11.5, 12.5))).unwrap();
        assert!((w - 200.0).abs() < 1e-12);
        let a = integrate_power(&t, Some((10.0, 11.7))).unwrap();
        let b = integrate_power(&t, Some((11.7, 13.0))).unwrap();
        assert!((a + b - 487.5).abs() < 1e-9);
        assert!(matches!(
            integrate_power(&t, Some((9.0, 11.0))),
            Err(TraceError::WindowOutOfRange { .. })
        ));
        assert!(matches!(
            integrate_power(&t, Some((12.0, 11.0))),
            Err(TraceError::WindowOutOfRange { .. })
        ));
    }

    #[test]
    fn trace_validation() {
        assert_eq!(
            PowerTrace::from_seconds(&[(0.0, 1.0), (0.0, 1.0)]),
            Err(TraceError::NonMonotonic(1))
        );
        assert_eq!(
            PowerTrace::from_seconds(&[(0.0, 1.0), (1.0, -1.0)]),
            Err(TraceError::InvalidPower(1))
        );
        let one = trace(&[(0.0, 5.0)]);
        assert_eq!(integrate_power(&one, None), Err(TraceError::TooFewSamples(1)));
        assert!(trace(&[(0.0, 1.0), (0.5, 1.0)]).warnings().is_empty());
        assert_eq!(trace(&[(0.0, 1.0), (2.0, 1.0)]).warnings().len(), 1);
    }

    #[test]
    fn epoch_timestamps_keep_exact_intervals() {
        let base = 1_760_000_000.0;
        let t = trace(&[(base, 100.0), (base + 0.5, 100.0), (base + 1.0, 100.0)]);
        assert_eq!(integrate_power(&t, None).unwrap(), 100.0);
    }

    #[test]
    fn grid_derivations() {
        let g = build_grid(&[GridRecord {
            n_in: 64,
            n_out: 256,
            n_req: 1000,
            e_tot_j: 2120.0,
        }])
        .unwrap();
        let o = g.get(64, 256).unwrap();
        assert!((o.e_tok - 8.28125e-3).abs() < 1e-15);
        assert!((o.e_tok * o.e_eff - 1.0).abs() < 1e-15);
        assert!(build_grid(&[]).unwrap().is_empty());
    }

    #[test]
    fn grid_errors() {
        let r = GridRecord { n_in: 1, n_out: 2, n_req: 1, e_tot_j: 1.0 };
        assert_eq!(build_grid(&[r, r]), Err(TraceError::DuplicateKey(1, 2)));
        let neg = GridRecord { e_tot_j: 0.0, ..r };
        assert!(matches!(build_grid(&[neg]), Err(TraceError::InvalidObservation { .. })));
        let zero_out = GridRecord { n_out: 0, ..r };
        assert!(build_grid(&[zero_out]).is_err());
    }

    fn eff_grid(name: &str, cells: &[((u64, u64), f64)]) -> EnergyGrid {
        // e_eff = n_req n_out / e_tot with n_req = 1
        let obs = cells
            .iter()
            .map(|&((i, o), eff)| EnergyObservation::new(i, o, 1, o as f64 / eff).unwrap());
        EnergyGrid::from_observations(name, obs).unwrap()
    }

    #[test]
    fn normalization_examples() {
        let g = eff_grid("g", &[((1, 1), 2.0), ((1, 2), 4.0), ((1, 4), 6.0)]);
        let h = normalize_min_max(&g).unwrap();
        let vals: Vec<f64> = h.present().collect();
        assert!((vals[0] - 0.0).abs() < 1e-15);
        assert!((vals[1] - 0.5).abs() < 1e-12);
        assert_eq!(vals[2], 1.0);
        let flat = eff_grid("f", &[((1, 1), 3.0), ((2, 1), 3.0)]);
        assert!(matches!(normalize_min_max(&flat), Err(TraceError::DegenerateGrid(_))));
        let empty = EnergyGrid::from_observations("e", vec![]).unwrap();
        assert_eq!(normalize_min_max(&empty), Err(TraceError::EmptyGrid));
        // normalising a normalised map is a no-op
        assert_eq!(h.normalized().unwrap(), h);
    }

    #[test]
    fn aggregation() {
        let a = eff_grid("a", &[((1, 1), 1.0), ((1, 2), 2.0), ((2, 1), 3.0), ((2, 2), 5.0)]);
        let single = aggregate_normalized(std::slice::from_ref(&a)).unwrap();
        assert_eq!(single, normalize_min_max(&a).unwrap());
        assert_eq!(aggregate_normalized(&[a.clone(), a.clone()]).unwrap(), single);
        let b = eff_grid("b", &[((1, 1), 1.0), ((1, 2), 2.0)]);
        assert_eq!(
            aggregate_normalized(&[a, b]),
            Err(TraceError::AxisMismatch("b".into()))
        );
        assert_eq!(aggregate_normalized(&[]), Err(TraceError::EmptyGrid));
    }

    #[test]
    fn spread() {
        let g = eff_grid("s", &[((64, 64), 0.5), ((64, 256), 18.78), ((4096, 64), 3.0)]);
        let s = efficiency_spread(&g).unwrap();
        assert!((s.ratio - 37.56).abs() < 1e-9);
        assert_eq!(s.argmax, (64, 256));
        assert_eq!(s.argmin, (64, 64));
        let c = eff_grid("c", &[((1, 1), 2.0), ((2, 2), 2.0)]);
        assert_eq!(efficiency_spread(&c).unwrap().ratio, 1.0);
        let empty = EnergyGrid::from_observations("e", vec![]).unwrap();
        assert_eq!(efficiency_spread(&empty), Err(TraceError::EmptyGrid));
    }
}
