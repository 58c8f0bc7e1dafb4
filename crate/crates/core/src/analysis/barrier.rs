//! Relaxed hopping barrier of the copper across one silicon atom.

use crate::error::{Error, Result};
use crate::model::{ChainModel, Dof, ModelParams, NewtonOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierOptions {
    /// Atoms in the scan chain.
    pub n: usize,
    /// Copper slot; the silicon crossed is its right neighbour.
    pub slot: usize,
    /// Grid points across the crossing (odd, so the symmetric point is sampled).
    pub points: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self { n: 41, slot: 20, points: 41 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierScan {
    /// Copper offset from the crossed silicon (Å).
    pub offsets: Vec<f64>,
    /// Relaxed energy relative to the starting minimum (eV).
    pub energies: Vec<f64>,
    pub barrier: f64,
}

/// Scans the copper across the silicon to its right.
///
/// The copper is tied to that silicon at each grid offset and every
/// silicon except the leftmost (the translation gauge) is relaxed. The
/// scan runs forward from the starting minimum and back again from the
/// end state; the lower of the two relaxed energies is kept at each offset,
/// so a branch that the continuation overshoots does not set the barrier.
pub fn hopping_barrier(model: &ChainModel<f64>, opts: &BarrierOptions) -> Result<BarrierScan> {
    if opts.points < 3 || opts.slot < 2 || opts.slot + 1 >= opts.n {
        return Err(Error::Config("barrier scan needs an interior copper and at least 3 points".into()));
    }
    let x0 = model.relaxed_chain(opts.n, opts.slot)?;
    let crossed = opts.slot;
    let e0 = model.potential(&x0);
    let start = x0[0] - x0[crossed];
    let offsets: Vec<f64> = (0..opts.points)
        .map(|i| start * (1.0 - 2.0 * i as f64 / (opts.points - 1) as f64))
        .collect();
    let (forward, end) = sweep(model, &x0, crossed, offsets.iter().copied())?;
    let (mut backward, _) = sweep(model, &end, crossed, offsets.iter().rev().copied())?;
    backward.reverse();
    let energies: Vec<f64> = forward.iter().zip(&backward).map(|(a, b)| a.min(*b) - e0).collect();
    let barrier = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(BarrierScan { offsets, energies, barrier })
}

fn sweep(
    model: &ChainModel<f64>,
    x0: &[f64],
    crossed: usize,
    offsets: impl Iterator<Item = f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut dofs = vec![Dof::Free; x0.len()];
    dofs[1] = Dof::Fixed;
    let newton = NewtonOptions::default();
    let mut x = x0.to_vec();
    let mut energies = Vec::new();
    for s in offsets {
        dofs[0] = Dof::Tied { to: crossed, offset: s };
        x = model.minimize(&x, &dofs, &newton).map_err(|e| match e {
            Error::NoConvergence { iterations, residual, .. } => Error::NoConvergence {
                what: "barrier relaxation",
                iterations,
                residual,
            },
            e => e,
        })?;
        energies.push(model.potential(&x));
    }
    Ok((energies, x))
}

/// Bump height `B` giving the target barrier, by bisection on `[lo, hi]`.
pub fn calibrate_bump(
    params: &ModelParams,
    target_ev: f64,
    (mut lo, mut hi): (f64, f64),
    tol_ev: f64,
    opts: &BarrierOptions,
) -> Result<(f64, f64)> {
    let barrier = |b: f64| -> Result<f64> {
        let p = ModelParams { cu_b: b, ..params.clone() };
        Ok(hopping_barrier(&ChainModel::new(&p)?, opts)?.barrier)
    };
    let (flo, fhi) = (barrier(lo)? - target_ev, barrier(hi)? - target_ev);
    if flo * fhi > 0.0 {
        return Err(Error::Domain(format!("target barrier not bracketed by B in [{lo}, {hi}]")));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let f = barrier(mid)? - target_ev;
        if f.abs() <= tol_ev || hi - lo < 1e-10 {
            return Ok((mid, f + target_ev));
        }
        if (f < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence {
        what: "bump calibration",
        iterations: 60,
        residual: hi - lo,
    })
}
