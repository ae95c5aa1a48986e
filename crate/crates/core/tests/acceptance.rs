//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero on any FAIL.

mod common;

use std::time::Instant;

use common::{flops_oracle, mem_oracle, rel, synth_grid};
use llm_energy::arch_cost::{total_flops, total_mem_ops, ModelArch, SequenceShape};
use llm_energy::estimator::{compare_families, fit};
use llm_energy::model_zoo::{reference_thetas, sweet_spot_brute_force, sweet_spot_closed_form, ModelFamily, ThetaVector};
use llm_energy::synth::{dense_axis, generate, Generator, SynthSpec};
use llm_energy::trace::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: &str, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("[{}] {id} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

/// "Predicted" column at n_in = 64, in table order.
const PREDICTED_AT_64: [u64; 13] = [429, 147, 433, 260, 157, 302, 180, 148, 431, 131, 280, 290, 226];

fn c1(r: &mut Report) {
    let refs = reference_thetas();
    let mut worst = 0u64;
    let mut msgs = Vec::new();
    for (t, &want) in refs.iter().zip(&PREDICTED_AT_64) {
        let got = sweet_spot_closed_form(&t.theta, 64, None).unwrap().n_out_star_rounded;
        let d = got.abs_diff(want);
        worst = worst.max(d);
        if d > 1 {
            msgs.push(format!("{} got {got} want {want}", t.model));
        }
    }
    let llama = sweet_spot_closed_form(&refs[0].theta, 64, None).unwrap().n_out_star_continuous;
    r.line(
        "C1",
        "sweet-spot reproduction",
        refs.len() == 13 && worst <= 1,
        format!("13 models at n_in=64, max |delta| = {worst} token(s), Llama 3.2 1B n* = {llama:.2} {}", msgs.join("; ")),
    );
}

fn c2(r: &mut Report) {
    let start = Instant::now();
    let mut worst = 0u64;
    let mut checked = 0;
    for t in reference_thetas() {
        for n_in in (64..=4096).step_by(64) {
            let cf = sweet_spot_closed_form(&t.theta, n_in, None).unwrap().n_out_star_rounded;
            let bf = sweet_spot_brute_force(&t.theta, n_in, 8192).unwrap();
            // an optimum beyond the scan range pins the scan to its edge
            let d = if cf > 8192 { 0 } else { cf.abs_diff(bf) };
            worst = worst.max(d);
            checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    r.line(
        "C2",
        "closed form vs brute force",
        worst <= 1 && secs < 1.0,
        format!("{checked} (model, n_in) pairs, n_in = 64..=4096 step 64, max |delta| = {worst}, {secs:.2}s (< 1s)"),
    );
}

fn c3(r: &mut Report) {
    let mut mismatches = 0u64;
    let mut cases = 0u64;
    for d in 1..=8u64 {
        for l in 1..=4u64 {
            for nq in 1..=4u64 {
                let a = ModelArch::new(d, l, nq).unwrap();
                for n_in in 0..=32u64 {
                    for n_out in 0..=32u64 {
                        let s = SequenceShape::new(n_in, n_out);
                        let (fp, fd) = flops_oracle(d.into(), l.into(), n_in.into(), n_out.into());
                        let (mp, md) = mem_oracle(d.into(), l.into(), nq.into(), n_in.into(), n_out.into());
                        if total_flops(&a, s).unwrap() != fp + fd {
                            mismatches += 1;
                        }
                        if total_mem_ops(&a, s).unwrap() != mp + md {
                            mismatches += 1;
                        }
                        cases += 1;
                    }
                }
            }
        }
    }
    r.line(
        "C3",
        "cost model vs component sums",
        mismatches == 0,
        format!("{cases} shapes x 2 counts, {mismatches} mismatches"),
    );
}

fn max_rel(got: &ThetaVector, want: &ThetaVector) -> f64 {
    got.coefficients
        .iter()
        .zip(&want.coefficients)
        .map(|(a, b)| rel(*a, *b))
        .fold(0.0, f64::max)
}

fn c4(r: &mut Report) {
    let truth = reference_thetas().remove(0).theta;
    let axis = dense_axis();
    let clean = synth_grid(truth.clone(), axis.clone(), axis.clone(), 0.0, 42);
    let clean_err = max_rel(&fit(ModelFamily::SweetspotFull, &clean).unwrap().theta, &truth);

    let out = generate(&SynthSpec::new(Generator::Theta { theta: truth.clone() }, axis.clone(), axis, 0.01, 42)).unwrap();
    let noisy = fit(ModelFamily::SweetspotFull, &out.grid).unwrap();
    let noisy_err = max_rel(&noisy.theta, &truth);
    let ok = clean_err <= 1e-9 && noisy_err <= 0.05 && noisy.mape_percent < 3.0;
    r.line(
        "C4",
        "fit round-trip",
        ok,
        format!(
            "13x13 grid, sigma=0 max rel err {clean_err:.2e} (<= 1e-9); sigma=0.01 seed 42 max rel err {:.2}% (<= 5%), MAPE {:.3}% (< 3%)",
            100.0 * noisy_err,
            noisy.mape_percent
        ),
    );
}

fn random_grid(rng: &mut ChaCha8Rng) -> EnergyGrid {
    let axis = |rng: &mut ChaCha8Rng| {
        let k = rng.random_range(3..8);
        let mut v: Vec<u64> = (0..k).map(|_| rng.random_range(1..5000)).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let (a, b) = (axis(rng), axis(rng));
    let mut recs = Vec::new();
    for &i in &a {
        for &o in &b {
            let e_tok = 10f64.powf(rng.random_range(-8.0..2.0));
            recs.push(GridRecord { n_in: i, n_out: o, n_req: rng.random_range(1..2000), e_tot_j: e_tok * o as f64 });
        }
    }
    build_grid(&recs).unwrap()
}

fn c5(r: &mut Report) {
    use ModelFamily::*;
    let chains = [
        (SweetspotFull, SweetspotFlops),
        (SweetspotFlops, Baseline4),
        (Baseline4, Baseline1),
        (SweetspotFull, Baseline2),
        (Baseline2, Baseline1),
    ];
    let mut grids = Vec::new();
    for (k, t) in reference_thetas().into_iter().enumerate() {
        grids.push(synth_grid(t.theta, dense_axis(), dense_axis(), 0.01 * (k % 4) as f64, k as u64));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..500 {
        grids.push(random_grid(&mut rng));
    }
    let (mut violations, mut comparisons) = (0, 0);
    for g in &grids {
        let c = compare_families(g);
        for (big, small) in chains {
            if let (Some(a), Some(b)) = (c.get(big), c.get(small)) {
                comparisons += 1;
                if a.sse > b.sse {
                    violations += 1;
                }
            }
        }
    }
    r.line(
        "C5",
        "nested-model SSE ordering",
        violations == 0,
        format!(
            "{} grids ({} synthetic, 500 random), {comparisons} nested pairs, {violations} with larger SSE in the bigger model",
            grids.len(),
            grids.len() - 500
        ),
    );
}

fn linear_integral(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0].0 + w[1].0);
            let p = w[0].1 + (w[1].1 - w[0].1) * (mid - w[0].0) / (w[1].0 - w[0].0);
            (w[1].0 - w[0].0) * p
        })
        .sum()
}

fn c6(r: &mut Report) {
    let integrate = |s: &[(f64, f64)]| integrate_power(&PowerTrace::from_seconds(s).unwrap(), None).unwrap();
    let constant = rel(integrate(&[(0.0, 312.5), (0.5, 312.5), (1.0, 312.5), (7.5, 312.5)]), 312.5 * 7.5);
    let triangle = rel(integrate(&[(2.0, 0.0), (4.0, 350.0), (6.0, 0.0)]), 700.0);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let mut t_ms: i64 = rng.random_range(-10_000..10_000);
        let n = rng.random_range(2..400);
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                t_ms += rng.random_range(1..1500);
                (t_ms as f64 / 1000.0, rng.random_range(0.0..700.0))
            })
            .collect();
        worst = worst.max(rel(integrate(&pts), linear_integral(&pts)));
    }
    r.line(
        "C6",
        "trapezoidal integration",
        constant <= 1e-12 && triangle <= 1e-12 && worst <= 1e-9,
        format!("constant rel err {constant:.1e}, triangle {triangle:.1e} (<= 1e-12); 200 random traces max {worst:.1e} (<= 1e-9)"),
    );
}

fn c7(r: &mut Report) {
    let grids: Vec<EnergyGrid> = reference_thetas()
        .into_iter()
        .enumerate()
        .map(|(k, t)| synth_grid(t.theta, dense_axis(), dense_axis(), 0.02, k as u64))
        .collect();
    let ends = grids.iter().all(|g| {
        let h = normalize_min_max(g).unwrap();
        let v: Vec<f64> = h.present().collect();
        v.contains(&0.0) && v.contains(&1.0)
    });
    let agg = aggregate_normalized(&grids).unwrap();
    let bounded = agg.present().all(|v| (0.0..=1.0).contains(&v));

    // mirror: e_eff' = max + min - e_eff, so each normalised cell is 1 - x
    let a = &grids[0];
    let effs: Vec<f64> = a.observations().map(|o| o.e_eff).collect();
    let (lo, hi) = effs.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    let mirrored: Vec<GridRecord> = a
        .observations()
        .map(|o| GridRecord {
            n_in: o.n_in,
            n_out: o.n_out,
            n_req: o.n_req,
            e_tot_j: (o.n_req * o.n_out) as f64 / (hi + lo - o.e_eff),
        })
        .collect();
    let pair = [a.clone(), build_grid(&mirrored).unwrap()];
    let half = aggregate_normalized(&pair).unwrap();
    let dev = half.present().map(|v| (v - 0.5).abs()).fold(0.0, f64::max);
    r.line(
        "C7",
        "normalisation and aggregation",
        ends && bounded && dev <= 1e-12,
        format!("exact 0 and 1 in all 13 grids: {ends}; aggregate in [0,1]: {bounded}; mirrored pair max |v - 0.5| = {dev:.1e}"),
    );
}

fn c8(r: &mut Report) {
    let recs = [
        GridRecord { n_in: 64, n_out: 256, n_req: 1000, e_tot_j: 256_000.0 / 18.78 },
        GridRecord { n_in: 4096, n_out: 64, n_req: 1000, e_tot_j: 64_000.0 / 0.50 },
    ];
    let spot = efficiency_spread(&build_grid(&recs).unwrap()).unwrap().ratio;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut mismatches = 0;
    for _ in 0..200 {
        let g = random_grid(&mut rng);
        let s = efficiency_spread(&g).unwrap();
        let (mut best, mut worst) = (f64::MIN, f64::MAX);
        for r in g.records() {
            let e = (r.n_req * r.n_out) as f64 / r.e_tot_j;
            best = best.max(e);
            worst = worst.min(e);
        }
        if rel(s.ratio, best / worst) > 1e-14 {
            mismatches += 1;
        }
    }
    r.line(
        "C8",
        "spread (desk-scale substitute)",
        rel(spot, 37.56) <= 1e-12 && mismatches == 0,
        format!("18.78/0.50 = {spot:.4}; 200 random grids vs exhaustive scan: {mismatches} mismatches; fitting and ordering covered by C4-C5"),
    );
}

fn main() {
    let mut r = Report { failed: 0 };
    c1(&mut r);
    c2(&mut r);
    c3(&mut r);
    c4(&mut r);
    c5(&mut r);
    c6(&mut r);
    c7(&mut r);
    c8(&mut r);
    println!("acceptance: {} of 8 criteria passed", 8 - r.failed);
    if r.failed > 0 {
        std::process::exit(1);
    }
}
