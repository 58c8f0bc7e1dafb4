//! The continuous-time random walk of the copper and its compartment-model generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::hops::HopEvent;
use crate::error::{Error, Result};
use crate::linalg::Dense;

/// Symmetric multi-cell hopping walk.
///
/// `p[i-1]` is the probability of a hop over `i` atoms in one given
/// direction, so `2·Σp = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomWalkModel {
    pub p: Vec<f64>,
    /// Hopping rate α (1/s).
    pub alpha: f64,
    /// Lattice spacing (m).
    pub d0_m: f64,
}

impl RandomWalkModel {
    pub fn new(p: Vec<f64>, alpha: f64, d0_m: f64) -> Result<Self> {
        if p.is_empty() || p.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Config("hop probabilities must be nonnegative".into()));
        }
        let total: f64 = 2.0 * p.iter().sum::<f64>();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("hop probabilities sum to {total} over both directions")));
        }
        if !(alpha >= 0.0) || !(d0_m > 0.0) {
            return Err(Error::Config("need α >= 0 and d0 > 0".into()));
        }
        Ok(Self { p, alpha, d0_m })
    }

    pub fn k_max(&self) -> usize {
        self.p.len()
    }

    /// `γ = Σ (d0·i)²·p_i` (m²).
    pub fn gamma(&self) -> f64 {
        self.p
            .iter()
            .enumerate()
            .map(|(i, &p)| (self.d0_m * (i + 1) as f64).powi(2) * p)
            .sum()
    }

    /// `κ = γ·α` (m²/s).
    pub fn kappa(&self) -> f64 {
        self.gamma() * self.alpha
    }

    /// Generator `Ã` on cells `-ν..=ν` (1/m²): stencil `γ⁻¹(p_k..p_1, -1, p_1..p_k)`
    /// with out-of-range jumps removed from the diagonal outflow so columns sum to 0.
    pub fn generator(&self, nu: usize) -> Dense<f64> {
        let n = 2 * nu + 1;
        let g = self.gamma();
        let mut a = Dense::zeros(n);
        for j in 0..n {
            let mut out = 0.0;
            for (s, &p) in self.p.iter().enumerate() {
                let step = s + 1;
                for i in [j.checked_sub(step), Some(j + step).filter(|&i| i < n)].into_iter().flatten() {
                    a[(i, j)] += p / g;
                    out += p / g;
                }
            }
            a[(j, j)] = -out;
        }
        a
    }
}

/// Empirical hop-size distribution from clustered events.
///
/// `total_time_s` is the summed duration of all contributing samples.
pub fn hop_size_distribution<'a>(
    events: impl IntoIterator<Item = &'a HopEvent>,
    total_time_s: f64,
    k_max: Option<usize>,
    d0_m: f64,
) -> Result<RandomWalkModel> {
    let mut counts: Vec<u64> = Vec::new();
    let mut total = 0u64;
    for e in events {
        let size = e.delta.unsigned_abs() as usize;
        if size == 0 {
            continue;
        }
        if counts.len() < size {
            counts.resize(size, 0);
        }
        counts[size - 1] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::NoData("no hopping events".into()));
    }
    if !(total_time_s > 0.0) {
        return Err(Error::Config("total sample time must be positive".into()));
    }
    let k = k_max.unwrap_or(counts.len()).max(1);
    let mut p: Vec<f64> = (0..k).map(|i| counts.get(i).copied().unwrap_or(0) as f64).collect();
    // Sizes above k_max are folded into the largest kept size.
    let folded: u64 = counts.iter().skip(k).sum();
    p[k - 1] += folded as f64;
    p.iter_mut().for_each(|x| *x /= 2.0 * total as f64);
    RandomWalkModel::new(p, total as f64 / total_time_s, d0_m)
}

/// One CTRW path: event list and cell position at each requested time.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkPath {
    pub events: Vec<HopEvent>,
    pub cells: Vec<i32>,
}

/// Exact CTRW sampler: exponential waits with rate α, sizes drawn from `2p`,
/// fair direction. Walker `w` uses `ChaCha8Rng::seed_from_u64(seed + w)`.
pub fn simulate_ctrw(model: &RandomWalkModel, times_s: &[f64], walkers: usize, seed: u64) -> Vec<WalkPath> {
    let t_end = times_s.last().copied().unwrap_or(0.0);
    let cum: Vec<f64> = model
        .p
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += 2.0 * p;
            Some(*acc)
        })
        .collect();
    (0..walkers)
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(w as u64));
            let mut events = Vec::new();
            if model.alpha > 0.0 {
                let wait = Exp::new(model.alpha).expect("positive rate");
                let mut t = wait.sample(&mut rng);
                while t <= t_end {
                    let u: f64 = rng.gen::<f64>() * cum[cum.len() - 1];
                    let size = cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1) + 1;
                    let sign = if rng.gen::<bool>() { 1 } else { -1 };
                    events.push(HopEvent {
                        time_s: t,
                        delta: sign * size as i32,
                    });
                    t += wait.sample(&mut rng);
                }
            }
            let mut cells = Vec::with_capacity(times_s.len());
            let (mut pos, mut next) = (0i32, 0usize);
            for &t in times_s {
                while next < events.len() && events[next].time_s <= t {
                    pos += events[next].delta;
                    next += 1;
                }
                cells.push(pos);
            }
            WalkPath { events, cells }
        })
        .collect()
}

/// Cell occupancy fractions `v[t][c]` on `-ν..=ν`; positions beyond the grid are an error.
pub fn occupancy(paths: &[WalkPath], nu: usize) -> Result<Vec<Vec<f64>>> {
    let n_t = paths.first().map_or(0, |p| p.cells.len());
    let width = 2 * nu + 1;
    let mut v = vec![vec![0.0; width]; n_t];
    for path in paths {
        for (t, &c) in path.cells.iter().enumerate() {
            let idx = c + nu as i32;
            if idx < 0 || idx >= width as i32 {
                return Err(Error::Domain(format!("walker displaced {c} cells, beyond ν = {nu}")));
            }
            v[t][idx as usize] += 1.0;
        }
    }
    let w = paths.len().max(1) as f64;
    v.iter_mut().flatten().for_each(|x| *x /= w);
    Ok(v)
}
