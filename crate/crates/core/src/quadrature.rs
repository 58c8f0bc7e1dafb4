//! Brute-force reference for the reduced potential: direct quadrature of the
//! Boltzmann integral over one or two virtual coordinates.
//!
//! Each virtual coordinate is written `x_j = q̂_last + u_j` with `u` in a
//! fixed box `(0, L)`, so differentiating under the integral sign needs no
//! boundary terms.

use crate::error::{Error, Result};
use crate::model::ChainModel;
use crate::reduction::{v0, v0_forces, v1};

const GK_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod panel of a vector-valued integrand; returns the
/// Kronrod sums and the Gauss-Kronrod difference of component 0.
fn gk15(f: &mut dyn FnMut(f64, &mut [f64]), a: f64, b: f64, out: &mut [f64], buf: &mut [f64]) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut gauss0 = 0.0;
    for (i, &xi) in GK_X.iter().enumerate() {
        let pts: &[f64] = if xi == 0.0 { &[0.0] } else { &[-1.0, 1.0] };
        for &s in pts {
            f(c + s * h * xi, buf);
            for (o, &v) in out.iter_mut().zip(buf.iter()) {
                *o += GK_WK[i] * v;
            }
            if i % 2 == 1 {
                gauss0 += GK_WG[i / 2] * buf[0];
            }
        }
    }
    out.iter_mut().for_each(|v| *v *= h);
    (out[0] - gauss0 * h).abs()
}

/// Adaptive Gauss-Kronrod integration of a vector integrand over `[a, b]`,
/// starting from `panels` equal panels and bisecting until the absolute
/// error of component 0 is below `rel_tol` times the running total.
pub fn integrate_vec(
    f: &mut dyn FnMut(f64, &mut [f64]),
    a: f64,
    b: f64,
    dim: usize,
    panels: usize,
    rel_tol: f64,
) -> Result<Vec<f64>> {
    let mut buf = vec![0.0; dim];
    let mut stack: Vec<(f64, f64, Vec<f64>, f64)> = Vec::new();
    let w = (b - a) / panels as f64;
    for i in 0..panels {
        let (lo, hi) = (a + w * i as f64, a + w * (i + 1) as f64);
        let mut out = vec![0.0; dim];
        let err = gk15(f, lo, hi, &mut out, &mut buf);
        stack.push((lo, hi, out, err));
    }
    for _ in 0..200_000 {
        let total: f64 = stack.iter().map(|s| s.2[0]).sum();
        let err: f64 = stack.iter().map(|s| s.3).sum();
        if err <= rel_tol * total.abs() {
            let mut sum = vec![0.0; dim];
            for s in &stack {
                for (o, v) in sum.iter_mut().zip(&s.2) {
                    *o += v;
                }
            }
            return Ok(sum);
        }
        let worst = (0..stack.len())
            .max_by(|&i, &j| stack[i].3.total_cmp(&stack[j].3))
            .ok_or_else(|| Error::NoData("no panels".into()))?;
        let (lo, hi, _, _) = stack.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        for (x0, x1) in [(lo, mid), (mid, hi)] {
            let mut out = vec![0.0; dim];
            let e = gk15(f, x0, x1, &mut out, &mut buf);
            stack.push((x0, x1, out, e));
        }
    }
    Err(Error::NoConvergence {
        what: "adaptive quadrature",
        iterations: 200_000,
        residual: stack.iter().map(|s| s.3).sum(),
    })
}

/// Reference values of the reduced potential and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureResult {
    pub potential: f64,
    pub gradient: Vec<f64>,
}

/// Settings for [`op_potential_quadrature`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    pub panels: usize,
    pub rel_tol: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            panels: 64,
            rel_tol: 1e-11,
        }
    }
}

/// `𝔙(q̂) = V_ref - Dε·log ∫ exp(-(V(q̂, x) - V_ref)/(Dε)) dx` over `l ∈ {1, 2}`
/// virtual atoms right of the last real one, with `x` truncated to
/// `(q̂_last, q̂_last + (l + reach)·d0)` and `c_q = 1 Å`.
///
/// `v_ref` only conditions the exponentials; the result does not depend on it.
pub fn op_potential_quadrature(
    model: &ChainModel<f64>,
    q_hat: &[f64],
    l: usize,
    eps: f64,
    v_ref: f64,
    opts: &QuadratureOptions,
) -> Result<QuadratureResult> {
    let width = (l + model.reach) as f64 * model.d0;
    let mut energy = |x: &[f64], force: &mut [f64]| model.energy_forces(x, force);
    boltzmann_quadrature(&mut energy, q_hat, l, width, model.depth * eps, v_ref, opts)
}

/// Gradient gaps `(‖∇𝔙 − ∇𝔙₀‖, ‖∇𝔙 − ∇𝔙₁‖)` between the quadrature reference
/// and the zeroth- and first-order Laplace approximations.
///
/// `∇𝔙₁` is a central difference of [`v1`] with step `1e-4` Å.
pub fn gradient_gaps(
    model: &ChainModel<f64>,
    q_hat: &[f64],
    l: usize,
    eps: f64,
    opts: &QuadratureOptions,
) -> Result<(f64, f64)> {
    let (e0, r) = v0(model, q_hat, l)?;
    let g0: Vec<f64> = v0_forces(model, q_hat, &r).iter().map(|f| -f).collect();
    let g = op_potential_quadrature(model, q_hat, l, eps, e0, opts)?.gradient;
    let h = 1e-4;
    let mut g1 = Vec::with_capacity(q_hat.len());
    for i in 0..q_hat.len() {
        let mut a = q_hat.to_vec();
        a[i] += h;
        let mut b = q_hat.to_vec();
        b[i] -= h;
        g1.push((v1(model, &a, l, eps)? - v1(model, &b, l, eps)?) / (2.0 * h));
    }
    let gap = |o: &[f64]| g.iter().zip(o).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok((gap(&g0), gap(&g1)))
}

/// Three real atoms (copper first) taken from a relaxed four-atom chain and
/// pushed off the minimum so that the gradients do not vanish.
pub fn order_test_chain(model: &ChainModel<f64>) -> Result<Vec<f64>> {
    let x = model.relaxed_chain(4, 1)?;
    Ok(vec![x[0], x[1] - 0.03, x[2] + 0.05])
}

/// Quadrature core for an arbitrary energy `V(x)` returning forces `-∂V/∂x`.
///
/// The gradient is the Boltzmann average of `∂V/∂q̂_i`, plus `Σ_j ∂V/∂x_j`
/// on the last real coordinate. Points with `x` out of order get zero weight.
pub fn boltzmann_quadrature(
    energy: &mut dyn FnMut(&[f64], &mut [f64]) -> f64,
    q_hat: &[f64],
    l: usize,
    width: f64,
    temp: f64,
    v_ref: f64,
    opts: &QuadratureOptions,
) -> Result<QuadratureResult> {
    if !(1..=2).contains(&l) {
        return Err(Error::Unsupported("quadrature oracle supports one or two virtual atoms".into()));
    }
    if q_hat.is_empty() || !(temp > 0.0) || !(width > 0.0) {
        return Err(Error::Config("quadrature needs real atoms, temperature > 0 and a box".into()));
    }
    let m = q_hat.len();
    let last = q_hat[m - 1];
    let dim = m + 1;
    let mut x = q_hat.to_vec();
    x.resize(m + l, 0.0);
    let mut force = vec![0.0; m + l];

    // Integrand component 0 is the weight; 1..=m carry weight·∂V/∂q̂_i.
    let mut point = |u: &[f64], out: &mut [f64]| {
        for (j, &uj) in u.iter().enumerate() {
            x[m + j] = last + uj;
        }
        let ordered = x.windows(2).skip(m - 1).all(|w| w[1] > w[0]);
        if !ordered {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let e = energy(&x, &mut force);
        let w = (-(e - v_ref) / temp).exp();
        if !w.is_finite() || w == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        out[0] = w;
        for i in 0..m {
            out[1 + i] = -w * force[i];
        }
        let tail: f64 = force[m..].iter().sum();
        out[m] -= w * tail;
    };
    let sums = if l == 1 {
        integrate_vec(
            &mut |u, out| point(&[u], out),
            0.0,
            width,
            dim,
            opts.panels,
            opts.rel_tol,
        )?
    } else {
        let inner_opts = *opts;
        let mut inner_err = None;
        let outer = integrate_vec(
            &mut |u1, out| {
                let res = integrate_vec(
                    &mut |u2, o| point(&[u1, u2], o),
                    u1,
                    width,
                    dim,
                    (inner_opts.panels / 4).max(4),
                    inner_opts.rel_tol,
                );
                match res {
                    Ok(v) => out.copy_from_slice(&v),
                    Err(e) => {
                        inner_err.get_or_insert(e);
                        out.iter_mut().for_each(|v| *v = 0.0);
                    }
                }
            },
            0.0,
            width,
            dim,
            (opts.panels / 4).max(4),
            opts.rel_tol,
        )?;
        if let Some(e) = inner_err {
            return Err(e);
        }
        outer
    };
    if !(sums[0] > 0.0) {
        return Err(Error::Domain("Boltzmann integral vanished; raise the reference energy".into()));
    }
    Ok(QuadratureResult {
        potential: v_ref - temp * sums[0].ln(),
        gradient: sums[1..].iter().map(|&s| s / sums[0]).collect(),
    })
}
