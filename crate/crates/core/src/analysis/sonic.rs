//! A single-atom momentum pulse sent toward the real/virtual interface.

use crate::dynamics::{ChainSystem, FullSystem, Rk4};
use crate::error::{Error, Result};
use crate::model::ChainModel;
use crate::reduction::BoundaryLayerSystem;
use crate::units::UnitSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseSystem {
    /// Boundary-layer reduced system with `m` real atoms.
    Reduced,
    /// Original chain of `n_full` atoms; the first `m` are observed.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SonicOptions {
    pub m: usize,
    /// Boundary-layer width of the reduced system.
    pub k: usize,
    /// Length of the control chain.
    pub n_full: usize,
    /// Kinetic energy given to the leftmost silicon (eV).
    pub pulse_ev: f64,
    pub dt_s: f64,
    /// Run length in units of the predicted arrival time.
    pub duration: f64,
    /// Kinetic-energy fraction of the pulse that marks arrival at atom `m`.
    pub arrival_fraction: f64,
    /// Averaging window for the retained energy, in units of the measured arrival time.
    pub window: (f64, f64),
}

impl Default for SonicOptions {
    fn default() -> Self {
        Self {
            m: 50,
            k: 10,
            n_full: 200,
            pulse_ev: 0.5,
            dt_s: 2.5e-15,
            duration: 2.5,
            arrival_fraction: 0.01,
            window: (1.5, 2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SonicReport {
    pub system: PulseSystem,
    /// Distance from the kicked atom to the last real atom over the sound speed (s).
    pub predicted_arrival_s: f64,
    /// First time the last real atom carries `arrival_fraction` of the pulse energy (s).
    pub arrival_s: f64,
    /// Mean of `e_left` over the window, as a fraction of the pulse.
    pub retained_fraction: f64,
    pub times_s: Vec<f64>,
    /// Kinetic energy of the real block (eV).
    pub kinetic: Vec<f64>,
    /// `E_left(t)` above the relaxed, motionless block (eV).
    pub e_left: Vec<f64>,
}

/// Kicks the silicon next to the copper (the copper sits at the left end)
/// toward the interface and follows the real block from a relaxed start.
pub fn sonic_reflection_probe(model: &ChainModel<f64>, system: PulseSystem, opts: &SonicOptions) -> Result<SonicReport> {
    let m = opts.m;
    if m < 3 || opts.n_full < m + model.reach || !(opts.pulse_ev > 0.0) {
        return Err(Error::Config("pulse probe needs m >= 3, n_full >= m + reach and a positive pulse".into()));
    }
    let n = match system {
        PulseSystem::Reduced => m + 2 * opts.k + model.reach,
        PulseSystem::Full => opts.n_full,
    };
    let q = model.relaxed_chain(n, 1)?;
    let kicked = 1;
    let mut p = vec![0.0; n];
    p[kicked] = (2.0 * model.mass(kicked) * opts.pulse_ev).sqrt();
    let (_, c_mps) = model.young_modulus_sound_speed();
    let c = c_mps / UnitSystem::internal_to_mps(1.0);
    let predicted = (q[m - 1] - q[kicked]) / c;
    let dt = UnitSystem::seconds_to_internal(opts.dt_s);
    let steps = (opts.duration * predicted / dt).ceil() as usize;

    let mut full;
    let mut reduced;
    let (sys, mut y): (&mut dyn ChainSystem<f64>, Vec<f64>) = match system {
        PulseSystem::Full => {
            full = FullSystem::new(model, n);
            (&mut full, FullSystem::state(&q, &p))
        }
        PulseSystem::Reduced => {
            reduced = BoundaryLayerSystem::new(model, m, opts.k);
            let y = reduced.initial_state(&q[..m], &p[..m])?;
            (&mut reduced, y)
        }
    };
    let n_state = y.len() / 2;
    // Positions and momenta of the first m atoms sit at the front of both layouts.
    let p_off = match system {
        PulseSystem::Full => n_state,
        PulseSystem::Reduced => m,
    };
    let observe = |y: &[f64]| {
        let (x, p) = (&y[..m], &y[p_off..p_off + m]);
        (model.kinetic(p), model.e_left(x, p, m), 0.5 * p[m - 1] * p[m - 1] / model.mass(m - 1))
    };
    let mut rk = Rk4::new(y.len());
    let e0 = model.potential(&q[..m]);
    let (k0, e_start, _) = observe(&y);
    let mut times = vec![0.0];
    let mut kinetic = vec![k0];
    let mut e_left = vec![e_start - e0];
    let mut arrival = None;
    for step in 1..=steps {
        rk.step(sys, &mut y, dt).map_err(|e| Error::StepFailure { step, source: Box::new(e) })?;
        sys.post_step(&mut y, step)?;
        let (k, e, k_last) = observe(&y);
        let t = step as f64 * dt;
        if arrival.is_none() && k_last >= opts.arrival_fraction * opts.pulse_ev {
            arrival = Some(t);
        }
        times.push(UnitSystem::internal_to_seconds(t));
        kinetic.push(k);
        e_left.push(e - e0);
    }
    let arrival = arrival.ok_or_else(|| Error::NoData("pulse never reached the last real atom".into()))?;
    let (a, b) = (opts.window.0 * arrival, opts.window.1 * arrival);
    let inside: Vec<f64> = (0..=steps)
        .filter(|&j| (a..=b).contains(&(j as f64 * dt)))
        .map(|j| e_left[j])
        .collect();
    if inside.is_empty() {
        return Err(Error::NoData("run ends before the averaging window".into()));
    }
    Ok(SonicReport {
        system,
        predicted_arrival_s: UnitSystem::internal_to_seconds(predicted),
        arrival_s: UnitSystem::internal_to_seconds(arrival),
        retained_fraction: inside.iter().sum::<f64>() / inside.len() as f64 / opts.pulse_ev,
        times_s: times,
        kinetic,
        e_left,
    })
}
