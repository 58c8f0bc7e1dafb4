//! Windowed least-squares fit of the diffusion parameter κ(t).

use super::expm::expm;
use crate::error::{Error, Result};
use crate::linalg::Dense;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Window width Δt (s).
    pub width_s: f64,
    /// Upper end of the κ search interval (m²/s).
    pub kappa_hi: f64,
    /// Relative tolerance of the golden-section search.
    pub rel_tol: f64,
    /// Points of the coarse log scan.
    pub scan_points: usize,
    /// Decades covered by the coarse scan below `kappa_hi`.
    pub scan_decades: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            width_s: 2.5e-14,
            kappa_hi: 1e-7,
            rel_tol: 1e-4,
            scan_points: 20,
            scan_decades: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionFit {
    pub centers_s: Vec<f64>,
    pub width_s: f64,
    pub kappa: Vec<f64>,
    pub residual: Vec<f64>,
    /// Windows whose minimizer sits at the upper end of the search interval.
    pub at_upper: Vec<usize>,
}

impl DiffusionFit {
    /// Mean and relative standard deviation of κ over windows centred in `[t0, t1]`.
    pub fn plateau(&self, t0: f64, t1: f64) -> Option<(f64, f64)> {
        let k: Vec<f64> = self
            .centers_s
            .iter()
            .zip(&self.kappa)
            .filter(|(&c, _)| c >= t0 && c <= t1)
            .map(|(_, &k)| k)
            .collect();
        if k.is_empty() {
            return None;
        }
        let n = k.len() as f64;
        let mean = k.iter().sum::<f64>() / n;
        let var = if k.len() > 1 {
            k.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some((mean, if mean != 0.0 { var.sqrt() / mean.abs() } else { 0.0 }))
    }
}

/// Window centres on multiples of `spacing_s` whose windows fit inside `[t_start, t_end]`.
pub fn window_centers(t_start: f64, t_end: f64, width_s: f64, spacing_s: f64) -> Vec<f64> {
    let eps = 1e-9 * spacing_s;
    let first = ((t_start + 0.5 * width_s - eps) / spacing_s).ceil() as i64;
    (first..)
        .map(|j| j as f64 * spacing_s)
        .take_while(|&c| c + 0.5 * width_s <= t_end + eps)
        .collect()
}

/// `F(κ)` for one window: trapezoid sum of `‖exp((τ−t̲)κÃ)v(t̲) − v(τ)‖²`.
fn window_residual(a: &Dense<f64>, dt: f64, v: &[Vec<f64>], kappa: f64) -> Result<f64> {
    let step = expm(&a.scale(kappa * dt))?;
    let mut u = v[0].clone();
    let mut next = vec![0.0; u.len()];
    let mut sum = 0.0;
    let last = v.len() - 1;
    for (j, vj) in v.iter().enumerate() {
        if j > 0 {
            step.matvec(&u, &mut next);
            std::mem::swap(&mut u, &mut next);
        }
        let d2: f64 = u.iter().zip(vj).map(|(x, y)| (x - y).powi(2)).sum();
        sum += if j == 0 || j == last { 0.5 * d2 } else { d2 };
    }
    Ok(sum * dt)
}

fn golden(f: &mut impl FnMut(f64) -> Result<f64>, mut a: f64, mut b: f64, rel_tol: f64) -> Result<(f64, f64)> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while (b - a) > rel_tol * 0.5 * (a + b).abs().max(f64::MIN_POSITIVE) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc <= fd { (c, fc) } else { (d, fd) })
}

fn fit_window(a: &Dense<f64>, dt: f64, v: &[Vec<f64>], opts: &FitOptions) -> Result<(f64, f64)> {
    let mut f = |k: f64| window_residual(a, dt, v, k);
    let f0 = f(0.0)?;
    let mut grid = vec![0.0];
    let np = opts.scan_points.max(2);
    grid.extend((0..np).map(|i| {
        opts.kappa_hi * 10f64.powf(-opts.scan_decades * (1.0 - i as f64 / (np - 1) as f64))
    }));
    let mut vals = vec![f0];
    for &k in &grid[1..] {
        vals.push(f(k)?);
    }
    let best = (0..grid.len())
        .min_by(|&i, &j| vals[i].total_cmp(&vals[j]))
        .unwrap_or(0);
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (mut k, mut fk) = golden(&mut f, lo, hi, opts.rel_tol)?;
    if vals[best] < fk {
        k = grid[best];
        fk = vals[best];
    }
    if f0 <= fk {
        return Ok((0.0, f0));
    }
    Ok((k, fk))
}

/// Fits κ_j per window.
///
/// `v[t][c]` are occupancy fractions on a uniform snapshot grid `times_s`;
/// window starts are snapped to the nearest snapshot.
pub fn fit_kappa(
    v: &[Vec<f64>],
    times_s: &[f64],
    a: &Dense<f64>,
    centers_s: &[f64],
    opts: &FitOptions,
) -> Result<DiffusionFit> {
    if v.len() != times_s.len() || v.len() < 2 {
        return Err(Error::Dimension(format!("{} distributions for {} times", v.len(), times_s.len())));
    }
    if v.iter().any(|row| row.len() != a.n) {
        return Err(Error::Dimension("distribution width differs from generator size".into()));
    }
    let dt = times_s[1] - times_s[0];
    let (t0, t1) = (times_s[0], times_s[times_s.len() - 1]);
    let half = 0.5 * opts.width_s;
    let mut out = DiffusionFit {
        centers_s: centers_s.to_vec(),
        width_s: opts.width_s,
        kappa: Vec::with_capacity(centers_s.len()),
        residual: Vec::with_capacity(centers_s.len()),
        at_upper: Vec::new(),
    };
    for (w, &c) in centers_s.iter().enumerate() {
        let eps = 1e-6 * dt;
        if c - half < t0 - eps || c + half > t1 + eps {
            return Err(Error::Domain(format!("window at {c:e} s lies outside [{t0:e}, {t1:e}] s")));
        }
        let i0 = ((c - half - t0) / dt).round() as usize;
        let len = (opts.width_s / dt).round() as usize;
        let i1 = (i0 + len.max(1)).min(times_s.len() - 1);
        let (k, r) = fit_window(a, dt, &v[i0..=i1], opts)?;
        if k >= opts.kappa_hi * (1.0 - 2.0 * opts.rel_tol) {
            out.at_upper.push(w);
        }
        out.kappa.push(k);
        out.residual.push(r);
    }
    Ok(out)
}

/// Einstein-type scaling of a reference diffusion constant to temperature `t_k`
/// and barrier `barrier_ev`.
pub fn einstein_scale_estimate(t_k: f64, barrier_ev: f64) -> f64 {
    const KAPPA0: f64 = 4.4e-10;
    const T0: f64 = 1273.0;
    const BARRIER0: f64 = 3.0;
    KAPPA0 * (t_k / T0) * (BARRIER0 / barrier_ev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::expm::expm_action;
    use crate::analysis::walk::{occupancy, simulate_ctrw, RandomWalkModel};

    const D0: f64 = 1.8717e-10;
    const DT: f64 = 2.5e-15;

    fn forward(a: &Dense<f64>, kappa: f64, steps: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = a.n;
        let mut e = vec![0.0; n];
        e[n / 2] = 1.0;
        let times: Vec<f64> = (0..=steps).map(|j| j as f64 * DT).collect();
        let v = times.iter().map(|&t| expm_action(a, t * kappa, &e).unwrap()).collect();
        (times, v)
    }

    #[test]
    fn centers_fit_inside_span() {
        let c = window_centers(0.0, 4e-13, 2.5e-14, 1e-14);
        assert!((c[0] - 2e-14).abs() < 1e-24);
        assert!((c[c.len() - 1] - 3.8e-13).abs() < 1e-24);
        assert_eq!(c.len(), 37);
    }

    #[test]
    fn forward_model_inversion() {
        let w = RandomWalkModel::new(vec![0.35, 0.1, 0.05], 1.0, D0).unwrap();
        let a = w.generator(15);
        for kappa in [1e-10, 1e-9, 1e-8] {
            let (times, v) = forward(&a, kappa, 160);
            let centers = window_centers(0.0, 4e-13, 2.5e-14, 1e-14);
            let fit = fit_kappa(&v, &times, &a, &centers, &FitOptions::default()).unwrap();
            for &k in &fit.kappa {
                assert!((k / kappa - 1.0).abs() < 0.01, "κ* = {kappa:e}, got {k:e}");
            }
            assert!(fit.at_upper.is_empty());
        }
    }

    #[test]
    fn constant_distribution_gives_zero() {
        let w = RandomWalkModel::new(vec![0.5], 1.0, D0).unwrap();
        let a = w.generator(5);
        let mut row = vec![0.0; 11];
        row[4] = 0.3;
        row[5] = 0.4;
        row[6] = 0.3;
        let times: Vec<f64> = (0..=20).map(|j| j as f64 * DT).collect();
        let v = vec![row; 21];
        let fit = fit_kappa(&v, &times, &a, &[2.5e-14], &FitOptions::default()).unwrap();
        assert_eq!(fit.kappa, vec![0.0]);
        assert_eq!(fit.residual, vec![0.0]);
    }

    #[test]
    fn window_outside_data() {
        let w = RandomWalkModel::new(vec![0.5], 1.0, D0).unwrap();
        let a = w.generator(3);
        let (times, v) = forward(&a, 1e-9, 10);
        assert!(matches!(
            fit_kappa(&v, &times, &a, &[1e-14], &FitOptions::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn upper_bracket_flagged() {
        let w = RandomWalkModel::new(vec![0.5], 1.0, D0).unwrap();
        let a = w.generator(25);
        let (times, v) = forward(&a, 3e-7, 20);
        let fit = fit_kappa(&v, &times, &a, &[2.5e-14], &FitOptions::default()).unwrap();
        assert_eq!(fit.at_upper, vec![0]);
    }

    #[test]
    fn ctrw_plateau_matches_gamma_alpha() {
        let w = RandomWalkModel::new(vec![0.35, 0.1, 0.05], 1e12, D0).unwrap();
        let nu = 15;
        let times: Vec<f64> = (0..=160).map(|j| j as f64 * DT).collect();
        let paths = simulate_ctrw(&w, &times, 100_000, 11);
        let v = occupancy(&paths, nu).unwrap();
        let centers = window_centers(0.0, 4e-13, 2.5e-14, 1e-14);
        let fit = fit_kappa(&v, &times, &w.generator(nu), &centers, &FitOptions::default()).unwrap();
        let (mean, _) = fit.plateau(1e-13, 4e-13).unwrap();
        assert!((mean / w.kappa() - 1.0).abs() < 0.05, "{mean:e} vs {:e}", w.kappa());
    }

    #[test]
    fn einstein_estimate() {
        assert!((einstein_scale_estimate(7000.0, 0.43) / 1.7e-8 - 1.0).abs() < 0.02);
        assert!((einstein_scale_estimate(1273.0, 3.0) - 4.4e-10).abs() < 1e-24);
        let r = einstein_scale_estimate(2000.0, 0.5) / einstein_scale_estimate(1000.0, 0.5);
        assert!((r - 2.0).abs() < 1e-12);
    }
}
