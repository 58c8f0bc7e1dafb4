//! Zero-temperature optimal prediction: virtual atoms, the Laplace
//! expansions of the reduced potential, and the two closed reduced systems.
//!
//! A reduced position vector is `[q̂ (m entries, copper first), r]`, so the
//! silicon atoms stay in spatial order across the real/virtual interface and
//! the pair machinery of [`ChainModel`] applies unchanged.

use crate::dynamics::{ChainSystem, OdeRhs};
use crate::error::{Error, Result};
use crate::linalg::{BandCholesky, Dense, Lu, SymBand};
use crate::model::ChainModel;
use crate::scalar::Real;

/// Re-projection of the virtual atoms onto their equilibrium manifold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection<T> {
    /// Check every `every` steps; 0 disables re-projection.
    pub every: usize,
    /// Residual above which the virtual atoms are re-placed (eV/Å).
    pub tol: T,
}

impl<T: Real> Default for Projection<T> {
    fn default() -> Self {
        Self {
            every: 50,
            tol: T::lit(1e-8),
        }
    }
}

impl<T: Real> Projection<T> {
    pub fn disabled() -> Self {
        Self {
            every: 0,
            ..Self::default()
        }
    }
}

/// Newton settings for virtual-atom placement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacementOptions<T> {
    pub tol: T,
    pub max_iter: usize,
    pub max_step: T,
}

impl<T: Real> Default for PlacementOptions<T> {
    fn default() -> Self {
        Self {
            // 1e-10 in double precision; single precision stops at its roundoff floor.
            tol: T::lit(1e-10).max(T::epsilon() * T::lit(1e4)),
            max_iter: 200,
            max_step: T::lit(0.1),
        }
    }
}

fn inf_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

fn last_real_si<T: Real>(q_hat: &[T]) -> Result<T> {
    if q_hat.len() < 2 {
        return Err(Error::Config("need at least one real silicon atom".into()));
    }
    Ok(q_hat[q_hat.len() - 1])
}

/// Band Hessian of the virtual block, coupling to real atoms, forces and energy.
#[derive(Debug, Clone)]
pub struct VirtualAssembly<T> {
    pub band: SymBand<T>,
    /// Nonzero entries `(virtual j, real i, ∂²V/∂r_j∂q_i)`.
    pub coupling: Vec<(usize, usize, T)>,
    pub force: Vec<T>,
    pub energy: T,
}

impl<T: Real> VirtualAssembly<T> {
    pub fn new(bw: usize) -> Self {
        Self {
            band: SymBand::zeros(0, bw),
            coupling: Vec::new(),
            force: Vec::new(),
            energy: T::zero(),
        }
    }

    /// Assembles at `x = [q̂, r]` with `m` real atoms, widening the band if needed.
    pub fn assemble(&mut self, model: &ChainModel<T>, x: &[T], m: usize) {
        let l = x.len() - m;
        let mut bw = self.band.bw;
        loop {
            self.band.reset(l, bw);
            self.coupling.clear();
            self.force.clear();
            self.force.resize(x.len(), T::zero());
            let mut energy = T::zero();
            let mut needed = 0usize;
            let (band, coupling, force) = (&mut self.band, &mut self.coupling, &mut self.force);
            model.for_each_pair(x, |a, b, r, p| {
                let e = p.eval(r);
                energy = energy + e.value;
                force[a] = force[a] + e.d1;
                force[b] = force[b] - e.d1;
                let k = e.d2;
                match (a >= m, b >= m) {
                    (true, true) => {
                        let gap = b - a;
                        if gap > bw {
                            needed = needed.max(gap);
                            return;
                        }
                        band.add(a - m, a - m, k);
                        band.add(b - m, b - m, k);
                        band.add(a - m, b - m, -k);
                    }
                    (false, true) => {
                        band.add(b - m, b - m, k);
                        coupling.push((b - m, a, -k));
                    }
                    (true, false) => {
                        band.add(a - m, a - m, k);
                        coupling.push((a - m, b, -k));
                    }
                    (false, false) => {}
                }
            });
            self.energy = energy;
            if needed == 0 {
                return;
            }
            bw = needed;
        }
    }
}

/// Minimizes `V(q̂, r)` over the `l` virtual positions by damped Newton on the band Hessian.
pub fn minimize_virtual<T: Real>(
    model: &ChainModel<T>,
    q_hat: &[T],
    r0: &[T],
    opts: &PlacementOptions<T>,
    asm: &mut VirtualAssembly<T>,
) -> Result<Vec<T>> {
    let m = q_hat.len();
    let l = r0.len();
    let mut x: Vec<T> = q_hat.iter().chain(r0).copied().collect();
    model.check_order(&x)?;
    if !(x[m] > x[m - 1]) {
        return Err(Error::Ordering(m - 1, m));
    }
    asm.assemble(model, &x, m);
    let mut residual = T::infinity();
    let mut xt = x.clone();
    let mut scratch = vec![T::zero(); x.len()];
    for _ in 0..opts.max_iter {
        let g: Vec<T> = asm.force[m..].iter().map(|&f| -f).collect();
        residual = inf_norm(&g);
        if residual <= opts.tol {
            return Ok(x[m..].to_vec());
        }
        let mut dir: Vec<T> = asm.force[m..].to_vec();
        let mut shift = T::zero();
        loop {
            let mut h = asm.band.clone();
            if shift > T::zero() {
                for j in 0..l {
                    h.add(j, j, shift);
                }
            }
            match BandCholesky::factor(&h) {
                Ok(f) => {
                    f.solve(&mut dir);
                    break;
                }
                Err(_) => {
                    shift = if shift == T::zero() { T::lit(1e-3) } else { shift * T::lit(10.0) };
                    if shift > T::lit(1e8) {
                        return Err(Error::Singular("virtual-atom Hessian"));
                    }
                }
            }
        }
        let big = inf_norm(&dir);
        if big > opts.max_step {
            let s = opts.max_step / big;
            dir.iter_mut().for_each(|v| *v = *v * s);
        }
        let slope: T = g.iter().zip(&dir).map(|(&a, &b)| a * b).sum();
        let e0 = asm.energy;
        let slack = T::lit(1e-12) * e0.abs().max(T::one());
        let mut alpha = T::one();
        let mut accepted = false;
        for _ in 0..60 {
            for j in 0..l {
                xt[m + j] = x[m + j] + alpha * dir[j];
            }
            if model.check_order(&xt).is_ok() && xt[m] > xt[m - 1] {
                let et = model.energy_forces(&xt, &mut scratch);
                if et <= e0 + T::lit(1e-4) * alpha * slope + slack {
                    accepted = true;
                    break;
                }
            }
            alpha = alpha / T::lit(2.0);
        }
        if !accepted {
            break;
        }
        x.clone_from(&xt);
        asm.assemble(model, &x, m);
    }
    Err(Error::NoConvergence {
        what: "virtual-atom placement",
        iterations: opts.max_iter,
        residual: residual.to_f64_lossy(),
    })
}

/// Equidistant continuation `q̂_m + j·d0`, `j = 1..=l`.
pub fn equidistant_guess<T: Real>(model: &ChainModel<T>, q_hat: &[T], l: usize) -> Result<Vec<T>> {
    let last = last_real_si(q_hat)?;
    Ok((1..=l).map(|j| last + T::from_usize(j).unwrap() * model.d0).collect())
}

/// Virtual positions minimizing `V(q̂, ·)` from the equidistant guess.
pub fn place_virtual_atoms<T: Real>(model: &ChainModel<T>, q_hat: &[T], l: usize) -> Result<Vec<T>> {
    let guess = equidistant_guess(model, q_hat, l)?;
    let mut asm = VirtualAssembly::new(model.reach + 1);
    minimize_virtual(model, q_hat, &guess, &PlacementOptions::default(), &mut asm)
}

/// Zeroth-order reduced potential `𝔙₀(q̂) = V(q̂, r(q̂))` and the minimizer.
pub fn v0<T: Real>(model: &ChainModel<T>, q_hat: &[T], l: usize) -> Result<(T, Vec<T>)> {
    let r = place_virtual_atoms(model, q_hat, l)?;
    let x: Vec<T> = q_hat.iter().chain(&r).copied().collect();
    Ok((model.potential(&x), r))
}

/// First-order reduced potential `𝔙₀ + ε·(D/2)·log det((c_q²/D)·∂²V/∂r²)`, with `c_q = 1 Å`.
pub fn v1<T: Real>(model: &ChainModel<T>, q_hat: &[T], l: usize, eps: T) -> Result<T> {
    let depth = model.depth;
    let (e0, r) = v0(model, q_hat, l)?;
    if eps == T::zero() {
        return Ok(e0);
    }
    let x: Vec<T> = q_hat.iter().chain(&r).copied().collect();
    let mut asm = VirtualAssembly::new(model.reach + 1);
    asm.assemble(model, &x, q_hat.len());
    let f = BandCholesky::factor(&asm.band)?;
    let log_det = f.log_det() - T::from_usize(l).unwrap() * depth.ln();
    Ok(e0 + eps * depth / T::lit(2.0) * log_det)
}

/// Forces on the real atoms at `(q̂, r(q̂))`, i.e. `-∂𝔙₀/∂q̂`.
pub fn v0_forces<T: Real>(model: &ChainModel<T>, q_hat: &[T], r: &[T]) -> Vec<T> {
    let x: Vec<T> = q_hat.iter().chain(r).copied().collect();
    let mut f = vec![T::zero(); x.len()];
    model.energy_forces(&x, &mut f);
    f.truncate(q_hat.len());
    f
}

/// The (n+m)-dimensional reduced system with `l` fully resolved virtual atoms.
///
/// State: `[q̂ (m), p̂ (m), r (l)]`.
#[derive(Debug, Clone)]
pub struct FullVirtualSystem<'a, T> {
    model: &'a ChainModel<T>,
    m: usize,
    l: usize,
    pub projection: Projection<T>,
    inv_mass: Vec<T>,
    x: Vec<T>,
    asm: VirtualAssembly<T>,
    rhs_b: Vec<T>,
    /// Largest coordinate change applied by re-projection so far.
    pub max_projection_shift: T,
    pub projections: usize,
}

impl<'a, T: Real> FullVirtualSystem<'a, T> {
    pub fn new(model: &'a ChainModel<T>, m: usize, l: usize) -> Self {
        Self {
            model,
            m,
            l,
            projection: Projection::default(),
            inv_mass: (0..m).map(|i| T::one() / model.mass(i)).collect(),
            x: vec![T::zero(); m + l],
            asm: VirtualAssembly::new(model.reach + 1),
            rhs_b: vec![T::zero(); l],
            max_projection_shift: T::zero(),
            projections: 0,
        }
    }

    /// State from real positions and momenta, with virtual atoms placed at the minimum.
    pub fn initial_state(&mut self, q_hat: &[T], p_hat: &[T]) -> Result<Vec<T>> {
        let r = place_virtual_atoms(self.model, q_hat, self.l)?;
        let mut y = q_hat.to_vec();
        y.extend_from_slice(p_hat);
        y.extend_from_slice(&r);
        Ok(y)
    }

    fn load(&mut self, y: &[T]) {
        let m = self.m;
        self.x[..m].copy_from_slice(&y[..m]);
        self.x[m..].copy_from_slice(&y[2 * m..]);
    }

    /// `(dq̂, dp̂, dr)` at a state.
    pub fn rhs_parts(&mut self, y: &[T]) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
        let mut dy = vec![T::zero(); y.len()];
        self.rhs(y, &mut dy)?;
        let m = self.m;
        Ok((dy[..m].to_vec(), dy[m..2 * m].to_vec(), dy[2 * m..].to_vec()))
    }
}

impl<T: Real> OdeRhs<T> for FullVirtualSystem<'_, T> {
    fn dim(&self) -> usize {
        2 * self.m + self.l
    }

    fn rhs(&mut self, y: &[T], dy: &mut [T]) -> Result<()> {
        let m = self.m;
        self.load(y);
        self.asm.assemble(self.model, &self.x, m);
        for i in 0..m {
            dy[i] = y[m + i] * self.inv_mass[i];
            dy[m + i] = self.asm.force[i];
        }
        self.rhs_b.iter_mut().for_each(|v| *v = T::zero());
        for &(j, i, h) in &self.asm.coupling {
            self.rhs_b[j] = self.rhs_b[j] - h * dy[i];
        }
        let f = BandCholesky::factor(&self.asm.band)?;
        f.solve(&mut self.rhs_b);
        dy[2 * m..].copy_from_slice(&self.rhs_b);
        Ok(())
    }
}

impl<T: Real> ChainSystem<T> for FullVirtualSystem<'_, T> {
    fn model(&self) -> &ChainModel<T> {
        self.model
    }
    fn real_count(&self) -> usize {
        self.m
    }
    fn energy(&mut self, y: &[T]) -> T {
        self.load(y);
        self.model.kinetic(&y[self.m..2 * self.m]) + self.model.potential(&self.x)
    }
    fn all_positions(&self, y: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend_from_slice(&y[..self.m]);
        out.extend_from_slice(&y[2 * self.m..]);
    }
    fn constraint_residual(&mut self, y: &[T]) -> Option<T> {
        self.load(y);
        let mut f = vec![T::zero(); self.x.len()];
        self.model.energy_forces(&self.x, &mut f);
        Some(inf_norm(&f[self.m..]))
    }
    fn check_state(&self, y: &[T]) -> Result<()> {
        let m = self.m;
        let model = self.model;
        model.check_order(&y[..m])?;
        if !(y[2 * m] > y[m - 1]) {
            return Err(Error::Ordering(m - 1, m));
        }
        if let Some(j) = y[2 * m..].windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Ordering(m + j, m + j + 1));
        }
        let left = model.si_left_of_copper(&y[..m]);
        if left == 0 || left + 1 >= m {
            return Err(Error::BasinLoss(format!("{left} of {} real silicon atoms left of the copper", m - 1)));
        }
        Ok(())
    }
    fn post_step(&mut self, y: &mut [T], step: usize) -> Result<()> {
        let every = self.projection.every;
        if every == 0 || step % every != 0 {
            return Ok(());
        }
        let res = self.constraint_residual(y).unwrap_or(T::zero());
        if res <= self.projection.tol {
            return Ok(());
        }
        let m = self.m;
        let r = minimize_virtual(self.model, &y[..m], &y[2 * m..], &PlacementOptions::default(), &mut self.asm)?;
        let shift = inf_norm(&r.iter().zip(&y[2 * m..]).map(|(&a, &b)| a - b).collect::<Vec<_>>());
        self.max_projection_shift = self.max_projection_shift.max(shift);
        self.projections += 1;
        y[2 * m..].copy_from_slice(&r);
        Ok(())
    }
}

/// Hessian blocks of the boundary-layer closure at `x = [q̂, r^V, r^E]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandBlocks<T> {
    /// `∂²V/∂r^V∂r^V`.
    pub a11: Dense<T>,
    /// `∂²V/∂r^V∂r^E`.
    pub a12: Dense<T>,
    /// `∂²V/∂r^E∂r^V`.
    pub a21: Dense<T>,
    /// `∂²V/∂r^E∂r^E`.
    pub a22: Dense<T>,
    /// `∂²V/∂r^V∂q̂` restricted to the last `k` real atoms (column `i` is real atom `m-k+i`).
    pub b12: Dense<T>,
}

/// Positions `[q̂, r^V, r^E]` with the equidistant tail `r^E_j = r^V_k + j·d0`.
pub fn boundary_layer_positions<T: Real>(model: &ChainModel<T>, q_hat: &[T], r_v: &[T], out: &mut Vec<T>) {
    let k = r_v.len();
    out.clear();
    out.extend_from_slice(q_hat);
    out.extend_from_slice(r_v);
    let last = r_v[k - 1];
    for j in 1..=k {
        out.push(last + T::from_usize(j).unwrap() * model.d0);
    }
}

/// Dense blocks of the Hessian for the boundary-layer layout.
pub fn assemble_band_blocks<T: Real>(model: &ChainModel<T>, q_hat: &[T], r_v: &[T]) -> Result<BandBlocks<T>> {
    let (m, k) = (q_hat.len(), r_v.len());
    if m < k {
        return Err(Error::Config("boundary layer needs m >= k".into()));
    }
    let mut x = Vec::new();
    boundary_layer_positions(model, q_hat, r_v, &mut x);
    let h = model.hessian_dense(&x);
    let block = |r0: usize, c0: usize| {
        let mut d = Dense::zeros(k);
        for i in 0..k {
            for j in 0..k {
                d[(i, j)] = h[(r0 + i, c0 + j)];
            }
        }
        d
    };
    Ok(BandBlocks {
        a11: block(m, m),
        a12: block(m, m + k),
        a21: block(m + k, m),
        a22: block(m + k, m + k),
        b12: block(m, m - k),
    })
}

/// Solves the boundary-layer equilibrium `∂V/∂r^V = 0` with the tail attached to `r^V_k`.
pub fn place_boundary_layer<T: Real>(
    model: &ChainModel<T>,
    q_hat: &[T],
    r0: &[T],
    opts: &PlacementOptions<T>,
) -> Result<Vec<T>> {
    let m = q_hat.len();
    let k = r0.len();
    let mut r = r0.to_vec();
    let mut x = Vec::new();
    let mut ws = BlWorkspace::new(k);
    let mut residual = T::infinity();
    for _ in 0..opts.max_iter {
        boundary_layer_positions(model, q_hat, &r, &mut x);
        model.check_order(&x)?;
        ws.assemble(model, &x, m, k);
        let g: Vec<T> = ws.force[m..m + k].iter().map(|&f| -f).collect();
        residual = inf_norm(&g);
        if residual <= opts.tol {
            return Ok(r);
        }
        let lu = Lu::factor(ws.a_bar.clone())?;
        let mut dir: Vec<T> = ws.force[m..m + k].to_vec();
        lu.solve(&mut dir);
        let big = inf_norm(&dir);
        if big > opts.max_step {
            let s = opts.max_step / big;
            dir.iter_mut().for_each(|v| *v = *v * s);
        }
        // Accept the largest halving that reduces the residual.
        let mut alpha = T::one();
        let mut accepted = false;
        let mut rt = r.clone();
        let mut xt = Vec::new();
        let mut ft = vec![T::zero(); m + 2 * k];
        for _ in 0..40 {
            for j in 0..k {
                rt[j] = r[j] + alpha * dir[j];
            }
            boundary_layer_positions(model, q_hat, &rt, &mut xt);
            if model.check_order(&xt).is_ok() && xt[m] > xt[m - 1] {
                model.energy_forces(&xt, &mut ft);
                let rn = inf_norm(&ft[m..m + k]);
                if rn < residual * (T::one() - T::lit(1e-4) * alpha) || rn <= opts.tol {
                    accepted = true;
                    break;
                }
            }
            alpha = alpha / T::lit(2.0);
        }
        if !accepted {
            break;
        }
        r.clone_from(&rt);
    }
    Err(Error::NoConvergence {
        what: "boundary-layer placement",
        iterations: opts.max_iter,
        residual: residual.to_f64_lossy(),
    })
}

#[derive(Debug, Clone)]
struct BlWorkspace<T> {
    /// `Ā₁₁ = A₁₁ + (A₁₂·e)·e_kᵀ`.
    a_bar: Dense<T>,
    coupling: Vec<(usize, usize, T)>,
    force: Vec<T>,
    energy: T,
}

impl<T: Real> BlWorkspace<T> {
    fn new(k: usize) -> Self {
        Self {
            a_bar: Dense::zeros(k),
            coupling: Vec::new(),
            force: Vec::new(),
            energy: T::zero(),
        }
    }

    fn assemble(&mut self, model: &ChainModel<T>, x: &[T], m: usize, k: usize) {
        self.a_bar.fill_zero();
        self.coupling.clear();
        self.force.clear();
        self.force.resize(x.len(), T::zero());
        let mut energy = T::zero();
        let (a_bar, coupling, force) = (&mut self.a_bar, &mut self.coupling, &mut self.force);
        let last = k - 1;
        // Column of Ā₁₁ receiving a virtual or tail index.
        let col = |i: usize| if i < m + k { i - m } else { last };
        model.for_each_pair(x, |a, b, r, p| {
            let e = p.eval(r);
            energy = energy + e.value;
            force[a] = force[a] + e.d1;
            force[b] = force[b] - e.d1;
            let h = e.d2;
            if a >= m && a < m + k {
                bar_row(a_bar, coupling, a - m, b, m, h, col);
            }
            if b >= m && b < m + k {
                bar_row(a_bar, coupling, b - m, a, m, h, col);
            }
        });
        self.energy = energy;
    }
}

#[inline]
fn bar_row<T: Real>(
    a_bar: &mut Dense<T>,
    coupling: &mut Vec<(usize, usize, T)>,
    row: usize,
    other: usize,
    m: usize,
    h: T,
    col: impl Fn(usize) -> usize,
) {
    a_bar[(row, row)] = a_bar[(row, row)] + h;
    if other >= m {
        let c = col(other);
        a_bar[(row, c)] = a_bar[(row, c)] - h;
    } else {
        coupling.push((row, other, -h));
    }
}

/// The (2m+k)-dimensional boundary-layer reduced system.
///
/// State: `[q̂ (m), p̂ (m), r^V (k)]`; the tail follows `r^V_k` rigidly.
#[derive(Debug, Clone)]
pub struct BoundaryLayerSystem<'a, T> {
    model: &'a ChainModel<T>,
    m: usize,
    k: usize,
    pub projection: Projection<T>,
    inv_mass: Vec<T>,
    x: Vec<T>,
    ws: BlWorkspace<T>,
    rhs_b: Vec<T>,
    pub max_projection_shift: T,
    pub projections: usize,
}

impl<'a, T: Real> BoundaryLayerSystem<'a, T> {
    pub fn new(model: &'a ChainModel<T>, m: usize, k: usize) -> Self {
        Self {
            model,
            m,
            k,
            projection: Projection::default(),
            inv_mass: (0..m).map(|i| T::one() / model.mass(i)).collect(),
            x: Vec::with_capacity(m + 2 * k),
            ws: BlWorkspace::new(k),
            rhs_b: vec![T::zero(); k],
            max_projection_shift: T::zero(),
            projections: 0,
        }
    }

    pub fn initial_state(&mut self, q_hat: &[T], p_hat: &[T]) -> Result<Vec<T>> {
        let guess = equidistant_guess(self.model, q_hat, self.k)?;
        let r = place_boundary_layer(self.model, q_hat, &guess, &PlacementOptions::default())?;
        let mut y = q_hat.to_vec();
        y.extend_from_slice(p_hat);
        y.extend_from_slice(&r);
        Ok(y)
    }

    fn load(&mut self, y: &[T]) {
        let m = self.m;
        boundary_layer_positions(self.model, &y[..m], &y[2 * m..], &mut self.x);
    }

    pub fn rhs_parts(&mut self, y: &[T]) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
        let mut dy = vec![T::zero(); y.len()];
        self.rhs(y, &mut dy)?;
        let m = self.m;
        Ok((dy[..m].to_vec(), dy[m..2 * m].to_vec(), dy[2 * m..].to_vec()))
    }
}

impl<T: Real> OdeRhs<T> for BoundaryLayerSystem<'_, T> {
    fn dim(&self) -> usize {
        2 * self.m + self.k
    }

    fn rhs(&mut self, y: &[T], dy: &mut [T]) -> Result<()> {
        let (m, k) = (self.m, self.k);
        self.load(y);
        self.ws.assemble(self.model, &self.x, m, k);
        for i in 0..m {
            dy[i] = y[m + i] * self.inv_mass[i];
            dy[m + i] = self.ws.force[i];
        }
        self.rhs_b.iter_mut().for_each(|v| *v = T::zero());
        for &(j, i, h) in &self.ws.coupling {
            self.rhs_b[j] = self.rhs_b[j] - h * dy[i];
        }
        let lu = Lu::factor(self.ws.a_bar.clone())?;
        lu.solve(&mut self.rhs_b);
        dy[2 * m..].copy_from_slice(&self.rhs_b);
        Ok(())
    }
}

impl<T: Real> ChainSystem<T> for BoundaryLayerSystem<'_, T> {
    fn model(&self) -> &ChainModel<T> {
        self.model
    }
    fn real_count(&self) -> usize {
        self.m
    }
    fn energy(&mut self, y: &[T]) -> T {
        self.load(y);
        self.model.kinetic(&y[self.m..2 * self.m]) + self.model.potential(&self.x)
    }
    fn all_positions(&self, y: &[T], out: &mut Vec<T>) {
        boundary_layer_positions(self.model, &y[..self.m], &y[2 * self.m..], out);
    }
    fn constraint_residual(&mut self, y: &[T]) -> Option<T> {
        self.load(y);
        let mut f = vec![T::zero(); self.x.len()];
        self.model.energy_forces(&self.x, &mut f);
        Some(inf_norm(&f[self.m..self.m + self.k]))
    }
    fn check_state(&self, y: &[T]) -> Result<()> {
        let m = self.m;
        let model = self.model;
        model.check_order(&y[..m])?;
        if !(y[2 * m] > y[m - 1]) {
            return Err(Error::Ordering(m - 1, m));
        }
        if let Some(j) = y[2 * m..].windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Ordering(m + j, m + j + 1));
        }
        let left = model.si_left_of_copper(&y[..m]);
        if left == 0 || left + 1 >= m {
            return Err(Error::BasinLoss(format!("{left} of {} real silicon atoms left of the copper", m - 1)));
        }
        Ok(())
    }
    fn post_step(&mut self, y: &mut [T], step: usize) -> Result<()> {
        let every = self.projection.every;
        if every == 0 || step % every != 0 {
            return Ok(());
        }
        let res = self.constraint_residual(y).unwrap_or(T::zero());
        if res <= self.projection.tol {
            return Ok(());
        }
        let m = self.m;
        let r = place_boundary_layer(self.model, &y[..m], &y[2 * m..], &PlacementOptions::default())?;
        let shift = inf_norm(&r.iter().zip(&y[2 * m..]).map(|(&a, &b)| a - b).collect::<Vec<_>>());
        self.max_projection_shift = self.max_projection_shift.max(shift);
        self.projections += 1;
        y[2 * m..].copy_from_slice(&r);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, RecordOptions};
    use crate::model::ModelParams;
    use crate::units::UnitSystem;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const M: usize = 50;

    fn model() -> ChainModel<f64> {
        ChainModel::new(&ModelParams::default()).unwrap()
    }

    fn chain(model: &ChainModel<f64>) -> Vec<f64> {
        model.relaxed_chain(70, 22).unwrap()
    }

    /// Relaxed chain with thermal jitter on positions and momenta of the first `M` atoms.
    fn thermal_state(model: &ChainModel<f64>, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let q = chain(model);
        let kt = UnitSystem::thermal_energy(7000.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jitter = Normal::new(0.0, 0.03).unwrap();
        let qh: Vec<f64> = q[..M].iter().map(|&x| x + jitter.sample(&mut rng)).collect();
        let ph: Vec<f64> = (0..M)
            .map(|i| Normal::new(0.0, (model.mass(i) * kt).sqrt()).unwrap().sample(&mut rng))
            .collect();
        (qh, ph)
    }

    #[test]
    fn placement_meets_residual_and_order() {
        let m = model();
        let (qh, _) = thermal_state(&m, 3);
        let r = place_virtual_atoms(&m, &qh, 20).unwrap();
        assert!(r[0] > qh[M - 1]);
        assert!(r.windows(2).all(|w| w[1] > w[0]));
        let x: Vec<f64> = qh.iter().chain(&r).copied().collect();
        let mut f = vec![0.0; x.len()];
        m.energy_forces(&x, &mut f);
        assert!(inf_norm(&f[M..]) <= 1e-10);
    }

    #[test]
    fn v0_is_a_minimum() {
        let m = model();
        let (qh, _) = thermal_state(&m, 4);
        let (e0, r) = v0(&m, &qh, 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let rr: Vec<f64> = r.iter().map(|&x| x + rng.gen_range(-0.05..0.05)).collect();
            let x: Vec<f64> = qh.iter().chain(&rr).copied().collect();
            assert!(m.potential(&x) >= e0);
        }
    }

    #[test]
    fn v0_gradient_has_no_envelope_term() {
        let m = model();
        let (qh, _) = thermal_state(&m, 5);
        let (_, r) = v0(&m, &qh, 20).unwrap();
        let f = v0_forces(&m, &qh, &r);
        let h = 1e-5;
        for i in [0, 10, M - 12, M - 3, M - 1] {
            let mut a = qh.clone();
            a[i] += h;
            let mut b = qh.clone();
            b[i] -= h;
            let fd = (v0(&m, &a, 20).unwrap().0 - v0(&m, &b, 20).unwrap().0) / (2.0 * h);
            assert!((fd + f[i]).abs() <= 1e-6 * f[i].abs().max(1.0), "i={i} fd={fd} f={}", f[i]);
        }
    }

    #[test]
    fn v0_gradient_stabilizes_in_l() {
        let m = model();
        let (qh, _) = thermal_state(&m, 6);
        let reach = m.reach;
        let (_, r1) = v0(&m, &qh, 2 * reach).unwrap();
        let (_, r2) = v0(&m, &qh, 3 * reach).unwrap();
        let f1 = v0_forces(&m, &qh, &r1);
        let f2 = v0_forces(&m, &qh, &r2);
        let diff = f1.iter().zip(&f2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-3, "diff={diff}");
    }

    #[test]
    fn v1_reduces_to_v0_and_is_linear_in_eps() {
        let m = model();
        let (qh, _) = thermal_state(&m, 7);
        let (e0, _) = v0(&m, &qh, 20).unwrap();
        assert_eq!(v1(&m, &qh, 20, 0.0).unwrap(), e0);
        let a = v1(&m, &qh, 20, 0.05).unwrap() - e0;
        let b = v1(&m, &qh, 20, 0.1).unwrap() - e0;
        assert!((b / a - 2.0).abs() <= 1e-6);
    }

    #[test]
    fn uniform_translation_moves_virtual_atoms_with_the_block() {
        let m = model();
        let (qh, _) = thermal_state(&m, 8);
        let v = 0.013;
        let p: Vec<f64> = (0..M).map(|i| m.mass(i) * v).collect();
        let mut fv = FullVirtualSystem::new(&m, M, 20);
        let y = fv.initial_state(&qh, &p).unwrap();
        let (_, _, dr) = fv.rhs_parts(&y).unwrap();
        assert!(dr.iter().all(|d| (d - v).abs() <= 1e-10), "{dr:?}");
        let mut bl = BoundaryLayerSystem::new(&m, M, 10);
        let y = bl.initial_state(&qh, &p).unwrap();
        let (_, _, dr) = bl.rhs_parts(&y).unwrap();
        assert!(dr.iter().all(|d| (d - v).abs() <= 1e-10), "{dr:?}");
    }

    #[test]
    fn resting_block_keeps_virtual_atoms_still() {
        let m = model();
        let (qh, _) = thermal_state(&m, 10);
        let p = vec![0.0; M];
        let mut fv = FullVirtualSystem::new(&m, M, 20);
        let y = fv.initial_state(&qh, &p).unwrap();
        assert!(fv.rhs_parts(&y).unwrap().2.iter().all(|&d| d == 0.0));
        let mut bl = BoundaryLayerSystem::new(&m, M, 10);
        let y = bl.initial_state(&qh, &p).unwrap();
        assert!(bl.rhs_parts(&y).unwrap().2.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn virtual_velocity_matches_re_minimization() {
        let m = model();
        let (qh, ph) = thermal_state(&m, 11);
        let h = 1e-5;
        let opts = PlacementOptions {
            tol: 1e-12,
            ..PlacementOptions::default()
        };
        let mut fv = FullVirtualSystem::new(&m, M, 20);
        let y = fv.initial_state(&qh, &ph).unwrap();
        let (dq, _, dr) = fv.rhs_parts(&y).unwrap();
        let shifted = |s: f64| -> Vec<f64> { (0..M).map(|i| qh[i] + s * h * dq[i]).collect() };
        let mut asm = VirtualAssembly::new(m.reach + 1);
        let ra = minimize_virtual(&m, &shifted(1.0), &y[2 * M..], &opts, &mut asm).unwrap();
        let rb = minimize_virtual(&m, &shifted(-1.0), &y[2 * M..], &opts, &mut asm).unwrap();
        for j in 0..20 {
            let fd = (ra[j] - rb[j]) / (2.0 * h);
            assert!((fd - dr[j]).abs() <= 1e-5 * dr[j].abs().max(1e-2), "j={j} fd={fd} dr={}", dr[j]);
        }
        let mut bl = BoundaryLayerSystem::new(&m, M, 10);
        let y = bl.initial_state(&qh, &ph).unwrap();
        let (dq, _, dr) = bl.rhs_parts(&y).unwrap();
        let shifted = |s: f64| -> Vec<f64> { (0..M).map(|i| qh[i] + s * h * dq[i]).collect() };
        let ra = place_boundary_layer(&m, &shifted(1.0), &y[2 * M..], &opts).unwrap();
        let rb = place_boundary_layer(&m, &shifted(-1.0), &y[2 * M..], &opts).unwrap();
        for j in 0..10 {
            let fd = (ra[j] - rb[j]) / (2.0 * h);
            assert!((fd - dr[j]).abs() <= 1e-5 * dr[j].abs().max(1e-2), "j={j} fd={fd} dr={}", dr[j]);
        }
    }

    #[test]
    fn band_blocks_structure() {
        let m = model();
        let (qh, _) = thermal_state(&m, 12);
        let k = 10;
        let guess = equidistant_guess(&m, &qh, k).unwrap();
        let r = place_boundary_layer(&m, &qh, &guess, &PlacementOptions::default()).unwrap();
        let b = assemble_band_blocks(&m, &qh, &r).unwrap();
        // Virtual atom j couples to real atom M-k+i only within the reach.
        for j in 0..k {
            for i in 0..k {
                let dist = M + j - (M - k + i);
                if dist > m.reach {
                    assert_eq!(b.b12[(j, i)], 0.0, "j={j} i={i}");
                }
            }
        }
        assert_eq!(b.a12.transpose(), b.a21);
        assert_eq!(b.a11.transpose(), b.a11);
        assert_eq!(b.a22.transpose(), b.a22);
        // A₁₂ is lower triangular in this ordering: r^V_j sees r^E_i only if i + k - j <= reach.
        assert!(b.a12[(k - 1, 0)] != 0.0);
    }

    #[test]
    fn projection_restores_constraint() {
        let m = model();
        let (qh, ph) = thermal_state(&m, 13);
        let dt = UnitSystem::seconds_to_internal(2.5e-15);
        let mut fv = FullVirtualSystem::new(&m, M, 20);
        fv.projection = Projection { every: 1, tol: 0.0 };
        let mut y = fv.initial_state(&qh, &ph).unwrap();
        let tr = integrate(&mut fv, &mut y, 20, dt, RecordOptions::new(M)).unwrap();
        assert!(tr.residual[1..].iter().all(|&r| r <= 1e-10));
        let mut bl = BoundaryLayerSystem::new(&m, M, 10);
        bl.projection = Projection { every: 1, tol: 0.0 };
        let mut y = bl.initial_state(&qh, &ph).unwrap();
        let tr = integrate(&mut bl, &mut y, 20, dt, RecordOptions::new(M)).unwrap();
        assert!(tr.residual[1..].iter().all(|&r| r <= 1e-10));
    }

    #[test]
    fn reduced_dimensions() {
        let m = model();
        assert_eq!(FullVirtualSystem::new(&m, M, 20).dim(), 70 + M);
        assert_eq!(BoundaryLayerSystem::new(&m, M, 10).dim(), 2 * M + 10);
    }

    #[test]
    fn single_precision_reduced_step() {
        let m: ChainModel<f32> = ChainModel::new(&ModelParams::default()).unwrap();
        let q = m.relaxed_chain(70, 22).unwrap();
        let p: Vec<f32> = (0..M).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let mut bl = BoundaryLayerSystem::new(&m, M, 10);
        let mut y = bl.initial_state(&q[..M], &p).unwrap();
        let dt = UnitSystem::seconds_to_internal(2.5e-15) as f32;
        integrate(&mut bl, &mut y, 10, dt, RecordOptions::new(M)).unwrap();
        assert!(y.iter().all(|v| v.is_finite()));
    }
}
