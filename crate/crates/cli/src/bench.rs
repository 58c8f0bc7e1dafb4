//! Wall-clock comparison of the original chain with the reduced systems.

use std::time::Instant;

use opchain::dynamics::{advance, step_count, ChainSystem, FullSystem};
use opchain::ensemble::{sample_momenta, EnsembleConfig, Variant};
use opchain::reduction::{BoundaryLayerSystem, FullVirtualSystem};
use opchain::units::UnitSystem;
use opchain::{Error, Model, Result};

use crate::config::BenchConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub m: usize,
    pub variant: Variant,
    /// Median wall time of the integration loop (s).
    pub wall_s: f64,
    /// Original-system time at the same `n` over this row's time.
    pub speedup: f64,
    pub steps: usize,
    pub rhs_evals: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct Timed<'s> {
    sys: &'s mut dyn ChainSystem<f64>,
    y0: Vec<f64>,
    times: Vec<f64>,
    evals: usize,
}

impl Timed<'_> {
    fn run(&mut self, steps: usize, dt: f64) -> Result<f64> {
        let mut y = self.y0.clone();
        let t = Instant::now();
        self.evals = advance(self.sys, &mut y, steps, dt)?;
        Ok(t.elapsed().as_secs_f64())
    }
}

/// Times the full, boundary-layer and full-virtual systems at each `n`.
///
/// All variants start from the relaxed chain with the same thermal momenta
/// (the reduced systems keep the first `m`) and share `dt` and `bench.t_end_s`.
/// Temperature, copper slot, seed and projection come from `ens`. Each
/// variant gets one discarded warm-up run; the timed runs are interleaved
/// across variants so that machine-load drift hits all of them alike, and
/// each row reports the median.
pub fn run_bench(model: &Model, bench: &BenchConfig, ens: &EnsembleConfig) -> Result<Vec<BenchRow>> {
    let dt = UnitSystem::seconds_to_internal(ens.dt_s);
    let steps = step_count(bench.t_end_s, ens.dt_s)?;
    let (m, k) = (bench.m, bench.k);
    let mut rows = Vec::new();
    for &n in &bench.n_list {
        if n <= m || ens.slot + model.reach > m {
            return Err(Error::Config(format!("benchmark needs n > m and the copper inside the real block (n={n}, m={m})")));
        }
        let q = model.relaxed_chain(n, ens.slot)?;
        let p = sample_momenta(model, n, ens.temperature_k, ens.base_seed);
        let mut full = FullSystem::new(model, n);
        let mut bl = BoundaryLayerSystem::new(model, m, k);
        bl.projection = ens.projection;
        let y_bl = bl.initial_state(&q[..m], &p[..m])?;
        let mut fv = FullVirtualSystem::new(model, m, n - m);
        fv.projection = ens.projection;
        let y_fv = fv.initial_state(&q[..m], &p[..m])?;
        let mut runs = [
            (Variant::Full, n, Timed { sys: &mut full, y0: FullSystem::state(&q, &p), times: Vec::new(), evals: 0 }),
            (Variant::OpBoundaryLayer, m, Timed { sys: &mut bl, y0: y_bl, times: Vec::new(), evals: 0 }),
            (Variant::OpFullVirtual, m, Timed { sys: &mut fv, y0: y_fv, times: Vec::new(), evals: 0 }),
        ];
        for (_, _, r) in runs.iter_mut() {
            r.run(steps, dt)?;
        }
        for _ in 0..bench.repeats {
            for (_, _, r) in runs.iter_mut() {
                let t = r.run(steps, dt)?;
                r.times.push(t);
            }
        }
        let t_full = median(runs[0].2.times.clone());
        for (variant, size, r) in runs {
            let wall_s = median(r.times);
            rows.push(BenchRow {
                n,
                m: size,
                variant,
                wall_s,
                speedup: t_full / wall_s,
                steps,
                rhs_evals: r.evals,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn small_bench_reports_every_variant() {
        let model = Model::new(&opchain::ModelParams::default()).unwrap();
        let bench = BenchConfig {
            n_list: vec![70],
            m: 50,
            k: 10,
            repeats: 1,
            t_end_s: 2.5e-14,
        };
        let rows = run_bench(&model, &bench, &EnsembleConfig::default()).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.wall_s > 0.0 && r.speedup > 0.0 && r.steps == 10));
        assert_eq!(rows[0].rhs_evals, 40);
    }
}
