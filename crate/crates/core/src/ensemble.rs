//! Seeded Monte-Carlo ensembles over the full and reduced chains.
//!
//! Sample `i` draws its momenta from `ChaCha8Rng::seed_from_u64(base_seed + i)`
//! for atoms `0..n` in order; the reduced variants keep the first `m`, so
//! both systems see common random numbers. Results are collected in sample
//! order and reduced sequentially, which makes them independent of the
//! worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dynamics::{integrate, step_count, ChainSystem, FullSystem, RecordOptions, Trajectory};
use crate::error::{Error, Result};
use crate::model::ChainModel;
use crate::reduction::{BoundaryLayerSystem, FullVirtualSystem, Projection};
use crate::units::UnitSystem;

/// Which equations of motion a sample integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    /// Reduced system with all `n - m` unresolved atoms as virtual atoms.
    OpFullVirtual,
    /// Reduced system with `k` boundary-layer virtual atoms.
    OpBoundaryLayer,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::OpFullVirtual => "op_full_virtual",
            Variant::OpBoundaryLayer => "op_boundary_layer",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "op_full_virtual" => Ok(Variant::OpFullVirtual),
            "op_boundary_layer" => Ok(Variant::OpBoundaryLayer),
            _ => Err(Error::Config(format!("unknown system variant `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub samples: usize,
    pub temperature_k: f64,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    /// 1-based copper slot: `slot - 1` silicon atoms start left of the copper.
    pub slot: usize,
    pub dt_s: f64,
    pub t_end_s: f64,
    pub variant: Variant,
    pub base_seed: u64,
    pub stride: usize,
    /// Cell grid half-width ν.
    pub nu: usize,
    pub projection: Projection<f64>,
    /// Start of the window for the time-averaged kinetic energy.
    pub equilibration_s: f64,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            samples: 25_000,
            temperature_k: 7000.0,
            n: 70,
            m: 50,
            k: 10,
            slot: 22,
            dt_s: 2.5e-15,
            t_end_s: 4.0e-13,
            variant: Variant::Full,
            base_seed: 0,
            stride: 1,
            nu: 30,
            projection: Projection::default(),
            equilibration_s: 5.0e-14,
            workers: None,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self, model: &ChainModel<f64>) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.samples == 0 {
            return bad("ensemble needs at least one sample".into());
        }
        if !(self.temperature_k >= 0.0) {
            return bad("temperature must be nonnegative".into());
        }
        if self.n < 3 || self.m < 2 || self.m > self.n {
            return bad(format!("need n >= 3 and 2 <= m <= n (n={}, m={})", self.n, self.m));
        }
        if self.slot == 0 || self.slot > self.n {
            return bad(format!("copper slot {} outside 1..={}", self.slot, self.n));
        }
        if self.variant != Variant::Full {
            if self.m == self.n {
                return bad("reduced variants need m < n".into());
            }
            if self.slot + model.reach > self.m {
                return bad(format!(
                    "copper slot {} must be at most m - reach = {}",
                    self.slot,
                    self.m - model.reach.min(self.m)
                ));
            }
            if self.variant == Variant::OpBoundaryLayer && (self.k == 0 || self.k > self.m) {
                return bad(format!("boundary layer needs 1 <= k <= m (k={})", self.k));
            }
        }
        if self.stride == 0 {
            return bad("snapshot stride must be at least 1".into());
        }
        if self.nu == 0 {
            return bad("cell grid half-width must be at least 1".into());
        }
        step_count(self.t_end_s, self.dt_s)?;
        Ok(())
    }

    pub fn steps(&self) -> Result<usize> {
        step_count(self.t_end_s, self.dt_s)
    }

    /// Number of atoms carrying momenta.
    pub fn real_count(&self) -> usize {
        match self.variant {
            Variant::Full => self.n,
            _ => self.m,
        }
    }
}

/// Canonical momenta `p_i ~ N(0, m_i·k_B·T)` for atoms `0..n` from one seed.
pub fn sample_momenta(model: &ChainModel<f64>, n: usize, temperature_k: f64, seed: u64) -> Vec<f64> {
    let kt = UnitSystem::thermal_energy(temperature_k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * (model.mass(i) * kt).sqrt()
        })
        .collect()
}

/// Relaxed positions and the sample's initial state for the configured variant.
pub fn sample_initial(model: &ChainModel<f64>, cfg: &EnsembleConfig, relaxed: &[f64], index: usize) -> Result<Vec<f64>> {
    let p = sample_momenta(model, cfg.n, cfg.temperature_k, sample_seed(cfg.base_seed, index));
    match cfg.variant {
        Variant::Full => Ok(FullSystem::<f64>::state(relaxed, &p)),
        Variant::OpFullVirtual => FullVirtualSystem::new(model, cfg.m, cfg.n - cfg.m).initial_state(&relaxed[..cfg.m], &p[..cfg.m]),
        Variant::OpBoundaryLayer => BoundaryLayerSystem::new(model, cfg.m, cfg.k).initial_state(&relaxed[..cfg.m], &p[..cfg.m]),
    }
}

pub fn sample_seed(base_seed: u64, index: usize) -> u64 {
    base_seed.wrapping_add(index as u64)
}

/// Outcome of one sample.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleStatus {
    Ok,
    /// Excluded with the reason (ordering abort, basin loss, solver failure).
    Excluded(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub index: usize,
    pub seed: u64,
    pub status: SampleStatus,
    /// Copper cell displacement per snapshot.
    pub cells: Vec<i32>,
    /// `E_left` (eV) per snapshot.
    pub e_left: Vec<f64>,
    /// `max_t |H(t) - H(0)| / |H(0)|`.
    pub energy_drift: f64,
    /// Kinetic energy of the first `m` atoms averaged over the equilibrated window (eV).
    pub mean_kinetic: f64,
    /// Kinetic energy of the first `m` atoms per snapshot (eV).
    pub kinetic: Vec<f64>,
    pub evaluations: usize,
}

impl SampleRecord {
    pub fn is_ok(&self) -> bool {
        self.status == SampleStatus::Ok
    }
}

/// Copper-cell occupancy over the snapshot grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDistribution {
    pub nu: usize,
    pub times_s: Vec<f64>,
    /// `counts[t][c]` with cell `c - ν`.
    pub counts: Vec<Vec<u64>>,
    pub included: usize,
    pub excluded: usize,
}

impl CellDistribution {
    pub fn cells(&self) -> usize {
        2 * self.nu + 1
    }

    /// Builds the distribution from included samples; fails if any cell leaves the grid.
    pub fn from_records(nu: usize, times_s: Vec<f64>, records: &[SampleRecord]) -> Result<Self> {
        let width = 2 * nu + 1;
        let mut counts = vec![vec![0u64; width]; times_s.len()];
        let mut included = 0;
        for r in records.iter().filter(|r| r.is_ok()) {
            if r.cells.len() != times_s.len() {
                return Err(Error::Dimension(format!(
                    "sample {} has {} snapshots, grid has {}",
                    r.index,
                    r.cells.len(),
                    times_s.len()
                )));
            }
            for (t, &c) in r.cells.iter().enumerate() {
                let idx = c + nu as i32;
                if idx < 0 || idx >= width as i32 {
                    return Err(Error::Domain(format!("copper displaced {c} cells, beyond ν = {nu}")));
                }
                counts[t][idx as usize] += 1;
            }
            included += 1;
        }
        let dist = Self {
            nu,
            times_s,
            counts,
            included,
            excluded: records.len() - included,
        };
        if included > 0 && dist.boundary_mass() >= 1e-4 {
            return Err(Error::Domain(format!(
                "boundary cells hold {:.2e} of the mass; increase ν",
                dist.boundary_mass()
            )));
        }
        Ok(dist)
    }

    /// Occupancy fractions `v[t][c]`, each row summing to 1.
    pub fn fractions(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                row.iter().map(|&c| c as f64 / total.max(1) as f64).collect()
            })
            .collect()
    }

    /// Largest mass found in the two outermost cells over all times.
    pub fn boundary_mass(&self) -> f64 {
        self.fractions()
            .iter()
            .map(|row| row[0] + row[row.len() - 1])
            .fold(0.0, f64::max)
    }
}

/// Run status from the exclusion rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleStatus {
    Ok,
    /// More than 1% of samples excluded.
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub distribution: CellDistribution,
    pub records: Vec<SampleRecord>,
    pub status: EnsembleStatus,
    /// Snapshot spacing (s).
    pub snapshot_dt_s: f64,
}

impl EnsembleResult {
    pub fn excluded(&self) -> usize {
        self.distribution.excluded
    }

    /// Ensemble mean and standard error of the per-sample mean kinetic energy.
    pub fn mean_kinetic(&self) -> (f64, f64) {
        mean_and_se(self.records.iter().filter(|r| r.is_ok()).map(|r| r.mean_kinetic))
    }

    /// Drift of the real-block kinetic energy after equilibration.
    ///
    /// Each sample's window `[t_eq, t_end]` is split in two; returns the mean
    /// and standard error of (second-half mean − first-half mean) in eV.
    pub fn kinetic_drift(&self, t_eq_s: f64) -> (f64, f64) {
        let start = self.distribution.times_s.partition_point(|&t| t < t_eq_s * (1.0 - 1e-12));
        mean_and_se(self.records.iter().filter(|r| r.is_ok()).filter_map(|r| {
            let w = r.kinetic.get(start..)?;
            let h = w.len() / 2;
            (h > 0).then(|| {
                w[h..].iter().sum::<f64>() / (w.len() - h) as f64 - w[..h].iter().sum::<f64>() / h as f64
            })
        }))
    }
}

pub fn mean_and_se(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Worst-case binomial standard error `1/(2√N)` of an occupancy fraction.
pub fn mc_error_estimate(samples: usize) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Config("need at least one sample".into()));
    }
    Ok(0.5 / (samples as f64).sqrt())
}

fn run_system<S: ChainSystem<f64>>(
    sys: &mut S,
    y: &mut [f64],
    cfg: &EnsembleConfig,
    steps: usize,
    dt: f64,
) -> Result<Trajectory<f64>> {
    let mut opts = RecordOptions::new(cfg.m);
    opts.stride = cfg.stride;
    opts.residual = false;
    integrate(sys, y, steps, dt, opts)
}

/// Integrates one sample and summarizes it.
pub fn run_sample(model: &ChainModel<f64>, cfg: &EnsembleConfig, relaxed: &[f64], index: usize) -> SampleRecord {
    let seed = sample_seed(cfg.base_seed, index);
    let excluded = |e: Error| SampleRecord {
        index,
        seed,
        status: SampleStatus::Excluded(e.to_string()),
        cells: Vec::new(),
        e_left: Vec::new(),
        energy_drift: f64::NAN,
        mean_kinetic: f64::NAN,
        kinetic: Vec::new(),
        evaluations: 0,
    };
    let dt = UnitSystem::seconds_to_internal(cfg.dt_s);
    let steps = match cfg.steps() {
        Ok(s) => s,
        Err(e) => return excluded(e),
    };
    let mut y = match sample_initial(model, cfg, relaxed, index) {
        Ok(y) => y,
        Err(e) => return excluded(e),
    };
    let tr = match cfg.variant {
        Variant::Full => run_system(&mut FullSystem::new(model, cfg.n), &mut y, cfg, steps, dt),
        Variant::OpFullVirtual => {
            let mut sys = FullVirtualSystem::new(model, cfg.m, cfg.n - cfg.m);
            sys.projection = cfg.projection;
            run_system(&mut sys, &mut y, cfg, steps, dt)
        }
        Variant::OpBoundaryLayer => {
            let mut sys = BoundaryLayerSystem::new(model, cfg.m, cfg.k);
            sys.projection = cfg.projection;
            run_system(&mut sys, &mut y, cfg, steps, dt)
        }
    };
    let tr = match tr {
        Ok(t) => t,
        Err(e) => return excluded(e),
    };
    let h0 = tr.energy[0];
    let energy_drift = tr.energy.iter().map(|h| ((h - h0) / h0).abs()).fold(0.0, f64::max);
    let t_eq = UnitSystem::seconds_to_internal(cfg.equilibration_s);
    let window: Vec<f64> = tr
        .times
        .iter()
        .zip(&tr.kinetic_block)
        .filter(|(&t, _)| t >= t_eq * (1.0 - 1e-12))
        .map(|(_, &k)| k)
        .collect();
    let mean_kinetic = if window.is_empty() {
        f64::NAN
    } else {
        window.iter().sum::<f64>() / window.len() as f64
    };
    SampleRecord {
        index,
        seed,
        status: SampleStatus::Ok,
        cells: tr.cells,
        e_left: tr.e_left,
        energy_drift,
        mean_kinetic,
        kinetic: tr.kinetic_block,
        evaluations: tr.evaluations,
    }
}

/// Runs the ensemble; more than 10% exclusions is an error.
pub fn run_ensemble(model: &ChainModel<f64>, cfg: &EnsembleConfig) -> Result<EnsembleResult> {
    cfg.validate(model)?;
    let relaxed = model.relaxed_chain(cfg.n, cfg.slot)?;
    let work = || -> Vec<SampleRecord> {
        (0..cfg.samples)
            .into_par_iter()
            .map(|i| run_sample(model, cfg, &relaxed, i))
            .collect()
    };
    let records = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let steps = cfg.steps()?;
    let snapshot_dt_s = cfg.dt_s * cfg.stride as f64;
    let times_s: Vec<f64> = (0..=steps / cfg.stride).map(|j| j as f64 * snapshot_dt_s).collect();
    let distribution = CellDistribution::from_records(cfg.nu, times_s, &records)?;
    let frac = distribution.excluded as f64 / cfg.samples as f64;
    if frac > 0.10 {
        let first = records
            .iter()
            .find_map(|r| match &r.status {
                SampleStatus::Excluded(why) => Some(why.clone()),
                SampleStatus::Ok => None,
            })
            .unwrap_or_default();
        return Err(Error::Domain(format!(
            "{} of {} samples excluded (first: {first})",
            distribution.excluded, cfg.samples
        )));
    }
    let status = if frac > 0.01 { EnsembleStatus::Warning } else { EnsembleStatus::Ok };
    Ok(EnsembleResult {
        distribution,
        records,
        status,
        snapshot_dt_s,
    })
}
