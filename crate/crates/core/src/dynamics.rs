//! Hamiltonian dynamics of the full chain, the RK4 integrator and the
//! trajectory recorder shared with the reduced systems.

use crate::error::{Error, Result};
use crate::model::ChainModel;
use crate::scalar::Real;

/// Autonomous first-order system `y' = F(y)`.
pub trait OdeRhs<T> {
    fn dim(&self) -> usize;
    fn rhs(&mut self, y: &[T], dy: &mut [T]) -> Result<()>;
}

/// Classical fourth-order Runge–Kutta with reusable stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4<T> {
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    tmp: Vec<T>,
    /// Right-hand-side evaluations performed so far.
    pub evaluations: usize,
}

impl<T: Real> Rk4<T> {
    pub fn new(dim: usize) -> Self {
        let z = vec![T::zero(); dim];
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
            evaluations: 0,
        }
    }

    pub fn step<S: OdeRhs<T> + ?Sized>(&mut self, sys: &mut S, y: &mut [T], dt: T) -> Result<()> {
        let half = dt / T::lit(2.0);
        let n = y.len();
        sys.rhs(y, &mut self.k1)?;
        for i in 0..n {
            self.tmp[i] = y[i] + half * self.k1[i];
        }
        sys.rhs(&self.tmp, &mut self.k2)?;
        for i in 0..n {
            self.tmp[i] = y[i] + half * self.k2[i];
        }
        sys.rhs(&self.tmp, &mut self.k3)?;
        for i in 0..n {
            self.tmp[i] = y[i] + dt * self.k3[i];
        }
        sys.rhs(&self.tmp, &mut self.k4)?;
        let sixth = dt / T::lit(6.0);
        let two = T::lit(2.0);
        for i in 0..n {
            y[i] = y[i] + sixth * (self.k1[i] + two * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
        self.evaluations += 4;
        Ok(())
    }
}

/// `x'' = -ω² x` as a first-order system `(x, v)`.
#[derive(Debug, Clone, Copy)]
pub struct HarmonicOscillator<T> {
    pub omega: T,
}

impl<T: Real> OdeRhs<T> for HarmonicOscillator<T> {
    fn dim(&self) -> usize {
        2
    }
    fn rhs(&mut self, y: &[T], dy: &mut [T]) -> Result<()> {
        dy[0] = y[1];
        dy[1] = -self.omega * self.omega * y[0];
        Ok(())
    }
}

/// Global error at `t_end` of RK4 on the unit harmonic oscillator from `x = 1, v = 0`.
pub fn oscillator_error(t_end: f64, steps: usize) -> f64 {
    let mut sys = HarmonicOscillator { omega: 1.0 };
    let mut rk = Rk4::new(2);
    let mut y = [1.0, 0.0];
    let dt = t_end / steps as f64;
    for _ in 0..steps {
        rk.step(&mut sys, &mut y, dt).expect("oscillator step");
    }
    ((y[0] - t_end.cos()).powi(2) + (y[1] + t_end.sin()).powi(2)).sqrt()
}

/// Common interface of the full and reduced chain systems.
///
/// State layout: `y[..real]` are the positions of the resolved atoms (copper
/// first), `y[real..2*real]` their momenta, and any remaining entries are
/// virtual-atom positions.
pub trait ChainSystem<T: Real>: OdeRhs<T> {
    fn model(&self) -> &ChainModel<T>;
    /// Number of atoms carrying momenta.
    fn real_count(&self) -> usize;
    /// Conserved (or monitored) energy of the system.
    fn energy(&mut self, y: &[T]) -> T;
    /// Positions of every atom, real then virtual.
    fn all_positions(&self, y: &[T], out: &mut Vec<T>);
    /// Norm of the virtual-atom equilibrium residual, if the system has one.
    fn constraint_residual(&mut self, _y: &[T]) -> Option<T> {
        None
    }
    /// Hook run after every accepted step (constraint re-projection).
    fn post_step(&mut self, _y: &mut [T], _step: usize) -> Result<()> {
        Ok(())
    }

    /// Ordering of the silicon atoms and copper confinement to the resolved block.
    fn check_state(&self, y: &[T]) -> Result<()> {
        let m = self.real_count();
        let model = self.model();
        model.check_order(&y[..m])?;
        let left = model.si_left_of_copper(&y[..m]);
        if left == 0 || left + 1 >= m {
            return Err(Error::BasinLoss(format!("{left} of {} silicon atoms left of the copper", m - 1)));
        }
        Ok(())
    }
}

/// The original 2n-dimensional Hamiltonian system.
#[derive(Debug, Clone)]
pub struct FullSystem<'a, T> {
    model: &'a ChainModel<T>,
    n: usize,
    inv_mass: Vec<T>,
    force: Vec<T>,
}

impl<'a, T: Real> FullSystem<'a, T> {
    pub fn new(model: &'a ChainModel<T>, n: usize) -> Self {
        Self {
            model,
            n,
            inv_mass: (0..n).map(|i| T::one() / model.mass(i)).collect(),
            force: vec![T::zero(); n],
        }
    }

    /// Packs positions and momenta into a state vector.
    pub fn state(q: &[T], p: &[T]) -> Vec<T> {
        let mut y = q.to_vec();
        y.extend_from_slice(p);
        y
    }
}

impl<T: Real> OdeRhs<T> for FullSystem<'_, T> {
    fn dim(&self) -> usize {
        2 * self.n
    }

    #[inline]
    fn rhs(&mut self, y: &[T], dy: &mut [T]) -> Result<()> {
        let n = self.n;
        let (q, p) = y.split_at(n);
        for i in 0..n {
            dy[i] = p[i] * self.inv_mass[i];
        }
        self.model.energy_forces(q, &mut self.force);
        dy[n..].copy_from_slice(&self.force);
        Ok(())
    }
}

impl<T: Real> ChainSystem<T> for FullSystem<'_, T> {
    fn model(&self) -> &ChainModel<T> {
        self.model
    }
    fn real_count(&self) -> usize {
        self.n
    }
    fn energy(&mut self, y: &[T]) -> T {
        hamiltonian(self.model, &y[..self.n], &y[self.n..])
    }
    fn all_positions(&self, y: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend_from_slice(&y[..self.n]);
    }
}

/// `H = T(p) + V(q)`.
pub fn hamiltonian<T: Real>(model: &ChainModel<T>, q: &[T], p: &[T]) -> T {
    model.kinetic(p) + model.potential(q)
}

/// One RK4 step of the full system; an ordering violation after the step is an error.
pub fn rk4_step<T: Real>(model: &ChainModel<T>, q: &mut [T], p: &mut [T], dt: T) -> Result<()> {
    if !(dt > T::zero()) {
        return Err(Error::Config("time step must be positive".into()));
    }
    let n = q.len();
    let mut sys = FullSystem::new(model, n);
    let mut y = FullSystem::state(q, p);
    Rk4::new(2 * n).step(&mut sys, &mut y, dt)?;
    model.check_order(&y[..n])?;
    q.copy_from_slice(&y[..n]);
    p.copy_from_slice(&y[n..]);
    Ok(())
}

/// Recording options for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordOptions {
    /// Snapshot every `stride` steps.
    pub stride: usize,
    /// Size of the observed block for `E_left`.
    pub block: usize,
    pub positions: bool,
    /// Record the virtual-atom constraint residual (costs one force evaluation per snapshot).
    pub residual: bool,
}

impl RecordOptions {
    pub fn new(block: usize) -> Self {
        Self {
            stride: 1,
            block,
            positions: false,
            residual: true,
        }
    }
}

/// Snapshots of one integration run (internal units).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub dt: T,
    pub stride: usize,
    pub times: Vec<T>,
    /// Copper displacement in cells relative to the start.
    pub cells: Vec<i32>,
    pub e_left: Vec<T>,
    pub energy: Vec<T>,
    /// Kinetic energy of the observed block.
    pub kinetic_block: Vec<T>,
    /// Constraint residual, empty for the full system.
    pub residual: Vec<T>,
    pub positions: Vec<Vec<T>>,
    /// Right-hand-side evaluations used.
    pub evaluations: usize,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Number of steps of size `dt` in `t_end`; `t_end` must be a multiple of `dt`.
pub fn step_count<T: Real>(t_end: T, dt: T) -> Result<usize> {
    if !(dt > T::zero()) || t_end < T::zero() {
        return Err(Error::Config("need dt > 0 and t_end >= 0".into()));
    }
    let k = (t_end / dt).round();
    if (k * dt - t_end).abs() > T::lit(1e-9) * t_end.max(dt) {
        return Err(Error::Config("t_end is not a multiple of dt".into()));
    }
    Ok(k.to_usize().unwrap_or(0))
}

/// Integrates `steps` RK4 steps from `y`, recording every `stride` steps.
///
/// The state is checked after each step; a failure is reported with its step index.
pub fn integrate<T: Real, S: ChainSystem<T> + ?Sized>(
    sys: &mut S,
    y: &mut [T],
    steps: usize,
    dt: T,
    opts: RecordOptions,
) -> Result<Trajectory<T>> {
    if opts.stride == 0 {
        return Err(Error::Config("snapshot stride must be at least 1".into()));
    }
    sys.check_state(y)?;
    let m = sys.real_count();
    let block = opts.block.min(m);
    let start_left = sys.model().si_left_of_copper(&y[..m]) as i32;
    let cap = steps / opts.stride + 1;
    let mut tr = Trajectory {
        dt,
        stride: opts.stride,
        times: Vec::with_capacity(cap),
        cells: Vec::with_capacity(cap),
        e_left: Vec::with_capacity(cap),
        energy: Vec::with_capacity(cap),
        kinetic_block: Vec::with_capacity(cap),
        residual: Vec::new(),
        positions: Vec::new(),
        evaluations: 0,
    };
    let mut scratch = Vec::new();
    let mut record = |sys: &mut S, y: &[T], step: usize, tr: &mut Trajectory<T>| {
        let model = sys.model();
        tr.times.push(T::from_usize(step).unwrap() * dt);
        tr.cells.push(model.si_left_of_copper(&y[..m]) as i32 - start_left);
        let kin = model.kinetic(&y[m..m + block]);
        tr.kinetic_block.push(kin);
        tr.e_left.push(kin + model.potential(&y[..block]));
        tr.energy.push(sys.energy(y));
        if opts.residual {
            if let Some(r) = sys.constraint_residual(y) {
                tr.residual.push(r);
            }
        }
        if opts.positions {
            sys.all_positions(y, &mut scratch);
            tr.positions.push(scratch.clone());
        }
    };
    record(sys, y, 0, &mut tr);
    let mut rk = Rk4::new(y.len());
    for step in 1..=steps {
        let fail = |e: Error| Error::StepFailure {
            step,
            source: Box::new(e),
        };
        rk.step(sys, y, dt).map_err(fail)?;
        sys.check_state(y).map_err(fail)?;
        sys.post_step(y, step).map_err(fail)?;
        if step % opts.stride == 0 {
            record(sys, y, step, &mut tr);
        }
    }
    tr.evaluations = rk.evaluations;
    Ok(tr)
}

/// Integrates without recording, returning the RHS-evaluation count.
pub fn advance<T: Real, S: ChainSystem<T> + ?Sized>(sys: &mut S, y: &mut [T], steps: usize, dt: T) -> Result<usize> {
    let mut rk = Rk4::new(y.len());
    for step in 1..=steps {
        let fail = |e: Error| Error::StepFailure {
            step,
            source: Box::new(e),
        };
        rk.step(sys, y, dt).map_err(fail)?;
        sys.check_state(y).map_err(fail)?;
        sys.post_step(y, step).map_err(fail)?;
    }
    Ok(rk.evaluations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::units::UnitSystem;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn model() -> ChainModel<f64> {
        ChainModel::new(&ModelParams::default()).unwrap()
    }

    fn protocol_dt() -> f64 {
        UnitSystem::seconds_to_internal(2.5e-15)
    }

    fn thermal_momenta(model: &ChainModel<f64>, n: usize, temp: f64, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let kt = UnitSystem::thermal_energy(temp);
        (0..n)
            .map(|i| Normal::new(0.0, (model.mass(i) * kt).sqrt()).unwrap().sample(&mut rng))
            .collect()
    }

    #[test]
    fn rk4_is_fourth_order() {
        let e1 = oscillator_error(10.0, 200);
        let e2 = oscillator_error(10.0, 400);
        let ratio = e1 / e2;
        assert!((ratio - 16.0).abs() <= 2.0, "ratio {ratio}");
    }

    #[test]
    fn rk4_single_precision() {
        let mut sys = HarmonicOscillator { omega: 1.0f32 };
        let mut rk = Rk4::new(2);
        let mut y = [1.0f32, 0.0];
        for _ in 0..100 {
            rk.step(&mut sys, &mut y, 0.01).unwrap();
        }
        assert!((y[0] - 1.0f32.cos()).abs() < 1e-5);
    }

    #[test]
    fn minimum_is_fixed_point() {
        let m = model();
        let mut q = vec![60.0, 0.0, 2.24];
        let q0 = q.clone();
        let mut p = vec![0.0; 3];
        rk4_step(&m, &mut q, &mut p, protocol_dt()).unwrap();
        for (a, b) in q.iter().zip(&q0) {
            assert!((a - b).abs() <= 1e-14);
        }
        assert!(p.iter().all(|v| v.abs() <= 1e-14));
        // A relaxed chain holds to the relaxation tolerance times dt.
        let mut q = m.relaxed_chain(20, 8).unwrap();
        let q0 = q.clone();
        let mut p = vec![0.0; 20];
        rk4_step(&m, &mut q, &mut p, protocol_dt()).unwrap();
        assert!(q.iter().zip(&q0).all(|(a, b)| (a - b).abs() <= 1e-12));
        assert!(p.iter().all(|v| v.abs() <= 1e-10 * protocol_dt()));
        assert!((hamiltonian(&m, &q0, &vec![0.0; 20]) - m.potential(&q0)).abs() == 0.0);
    }

    #[test]
    fn kinetic_energy_scales_quadratically() {
        let m = model();
        let p = thermal_momenta(&m, 10, 7000.0, 1);
        let p2: Vec<f64> = p.iter().map(|v| 2.0 * v).collect();
        assert!((m.kinetic(&p2) - 4.0 * m.kinetic(&p)).abs() < 1e-12);
    }

    #[test]
    fn zero_length_run_is_initial_snapshot() {
        let m = model();
        let q = m.relaxed_chain(20, 8).unwrap();
        let mut y = FullSystem::state(&q, &vec![0.0; 20]);
        let mut sys = FullSystem::new(&m, 20);
        let tr = integrate(&mut sys, &mut y, 0, protocol_dt(), RecordOptions::new(10)).unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(tr.cells, vec![0]);
        assert_eq!(step_count(0.0, protocol_dt()).unwrap(), 0);
        assert!(step_count(1.5 * protocol_dt(), protocol_dt()).is_err());
    }

    #[test]
    fn thermal_run_conserves_momentum_and_is_deterministic() {
        let m = model();
        let q = m.relaxed_chain(70, 22).unwrap();
        let p = thermal_momenta(&m, 70, 7000.0, 5);
        let run = || {
            let mut y = FullSystem::state(&q, &p);
            let mut sys = FullSystem::new(&m, 70);
            let tr = integrate(&mut sys, &mut y, 160, protocol_dt(), RecordOptions::new(50)).unwrap();
            (tr, y)
        };
        let (tr, y) = run();
        let (tr2, y2) = run();
        assert_eq!(tr, tr2);
        assert_eq!(y, y2);
        let p0: f64 = p.iter().sum();
        let p1: f64 = y[70..].iter().sum();
        assert!((p1 - p0).abs() <= 1e-10);
        assert_eq!(tr.len(), 161);
        let dt = tr.times[1] - tr.times[0];
        assert!(tr.times.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() < 1e-12));
    }

    #[test]
    fn energy_conserved_at_reduced_step() {
        // The protocol step leaves a relative drift of a few 1e-4 with this
        // lattice stiffness; a quarter of it reaches the 1e-5 level.
        let m = model();
        let q = m.relaxed_chain(70, 22).unwrap();
        for seed in 0..3 {
            let p = thermal_momenta(&m, 70, 7000.0, seed);
            let mut y = FullSystem::state(&q, &p);
            let mut sys = FullSystem::new(&m, 70);
            let tr = integrate(&mut sys, &mut y, 640, protocol_dt() / 4.0, RecordOptions::new(50)).unwrap();
            let h0 = tr.energy[0];
            let worst = tr.energy.iter().map(|h| ((h - h0) / h0).abs()).fold(0.0, f64::max);
            assert!(worst <= 1e-5, "seed {seed}: drift {worst}");
        }
    }

    fn reversal_error(m: &ChainModel<f64>, q: &[f64], temp: f64, div: f64) -> f64 {
        let p = thermal_momenta(m, 70, temp, 9);
        let mut y = FullSystem::state(q, &p);
        let mut sys = FullSystem::new(m, 70);
        let k = (160.0 * div) as usize;
        let dt = protocol_dt() / div;
        advance(&mut sys, &mut y, k, dt).unwrap();
        for v in y[70..].iter_mut() {
            *v = -*v;
        }
        advance(&mut sys, &mut y, k, dt).unwrap();
        y[..70].iter().zip(q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn reversibility_probe() {
        // RK4 is not time-symmetric: the round trip error is the truncation
        // error itself and shrinks at fifth order in dt.
        let m = model();
        let q = m.relaxed_chain(70, 22).unwrap();
        let e2 = reversal_error(&m, &q, 1000.0, 2.0);
        let e4 = reversal_error(&m, &q, 1000.0, 4.0);
        let e8 = reversal_error(&m, &q, 1000.0, 8.0);
        assert!(e2 / e4 > 16.0 && e4 / e8 > 16.0, "{e2} {e4} {e8}");
        assert!(e8 <= 1e-6, "{e8}");
    }

    #[test]
    fn swapped_silicon_is_reported() {
        let m = model();
        let mut q = m.relaxed_chain(20, 8).unwrap();
        let mut p = vec![0.0; 20];
        p[3] = 2000.0;
        let r = rk4_step(&m, &mut q, &mut p, 5.0);
        assert!(matches!(r, Err(Error::Ordering(..))));
    }
}
