//! Brute-force oracles shared by the integration tests.
//!
//! Everything here is written from the per-component terms, one layer and
//! one decode step at a time, without reusing library code.

#![allow(dead_code)]

use llm_energy::synth::{generate, Generator, SynthSpec};
use llm_energy::trace::{build_grid, GridRecord};
use llm_energy::{EnergyGrid, ModelFamily, ThetaVector};

/// FLOPs of one forward pass over `n_in` prompt tokens then `n_out` decode steps.
pub fn flops_oracle(d: u128, layers: u128, n_in: u128, n_out: u128) -> (u128, u128) {
    let mut prefill = 0;
    let mut decode = 0;
    for _ in 0..layers {
        let proj = 3 * (2 * n_in * d * d);
        let qk = 2 * n_in * n_in * d;
        let v = 2 * n_in * n_in * d;
        let out = 2 * n_in * d * d;
        let ffn = 8 * n_in * d * d + 8 * n_in * d * d;
        prefill += proj + qk + v + out + ffn;
        for t in 1..=n_out {
            let cached = n_in + t - 1;
            decode += 8 * d * d + 4 * cached * d + 16 * d * d;
        }
    }
    (prefill, decode)
}

/// Element accesses. Prefill sums the five component terms (score matrix
/// counted per head); decode sums the stated per-token layer total.
pub fn mem_oracle(d: u128, layers: u128, nq: u128, n_in: u128, n_out: u128) -> (u128, u128) {
    let mut prefill = 0;
    let mut decode = 0;
    for _ in 0..layers {
        let proj = 2 * n_in * d + d * d;
        let qk = 2 * n_in * d + n_in * n_in * nq;
        let v = 2 * n_in * d + n_in * n_in * nq;
        let out = 2 * n_in * d + d * d;
        let ffn = 2 * n_in * d + 8 * d * d;
        prefill += proj + qk + v + out + ffn;
        for t in 1..=n_out {
            let cached = n_in + t - 1;
            decode += 7 * d + 10 * d * d + (nq + d) * cached;
        }
    }
    (prefill, decode)
}

/// Per-token energy of the full model, written out term by term.
pub fn e_tok_oracle(c: &[f64], n_in: f64, n_out: f64) -> f64 {
    let c5 = c.get(5).copied().unwrap_or(0.0);
    c[0] + c[1] * n_in * n_in / n_out + c[2] * n_in + c[3] * n_in / n_out + c[4] * n_out + c5 / n_out
}

pub fn llama_1b() -> ThetaVector {
    ThetaVector::new(
        ModelFamily::SweetspotFull,
        vec![5.005153e-3, 1.079941e-7, 6.825240e-6, 2.611042e-3, 3.852659e-6, 5.406443e-1],
    )
    .unwrap()
}

pub fn grid_from(n_in: &[u64], n_out: &[u64], f: impl Fn(f64, f64) -> f64) -> EnergyGrid {
    let mut recs = Vec::new();
    for &i in n_in {
        for &o in n_out {
            recs.push(GridRecord {
                n_in: i,
                n_out: o,
                n_req: 1,
                e_tot_j: f(i as f64, o as f64) * o as f64,
            });
        }
    }
    build_grid(&recs).unwrap()
}

pub fn synth_grid(theta: ThetaVector, n_in: Vec<u64>, n_out: Vec<u64>, sigma: f64, seed: u64) -> EnergyGrid {
    generate(&SynthSpec::new(Generator::Theta { theta }, n_in, n_out, sigma, seed))
        .unwrap()
        .grid
}

pub fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        ((a - b) / b).abs()
    }
}
