//! Hop, diffusion and energy-fluctuation analysis of finished ensembles.

use opchain::analysis::fit::{fit_kappa, window_centers, DiffusionFit, FitOptions};
use opchain::analysis::hops::{hop_pipeline, HopEvent, HopWindows};
use opchain::analysis::stats::{count_histogram, energy_fluctuation, paired_histogram, relative_error_series, PairedHistogram};
use opchain::analysis::walk::{hop_size_distribution, RandomWalkModel};
use opchain::ensemble::{EnsembleConfig, EnsembleResult};
use opchain::units::ANGSTROM_M;
use opchain::{Model, Result};

use crate::config::AnalysisConfig;

#[derive(Debug, Clone)]
pub struct SystemAnalysis {
    /// Clustered events of all included samples.
    pub events: Vec<HopEvent>,
    /// Clustered events per included sample.
    pub hop_counts: Vec<usize>,
    pub hopcount_hist: Vec<f64>,
    pub walk: RandomWalkModel,
    pub fit: DiffusionFit,
    /// `V = ∫(E_left − E_left(0))² dt` per included sample (eV²·s).
    pub fluctuations: Vec<f64>,
}

impl SystemAnalysis {
    /// Mean and relative standard deviation of κ from the plateau start on.
    pub fn plateau(&self, acfg: &AnalysisConfig) -> (f64, f64) {
        self.fit.plateau(acfg.plateau_start_s, f64::INFINITY).unwrap_or((f64::NAN, f64::NAN))
    }

    pub fn mean_fluctuation(&self) -> f64 {
        self.fluctuations.iter().sum::<f64>() / self.fluctuations.len().max(1) as f64
    }

    /// Empirical probability of each signed clustered displacement.
    pub fn signed_hop_probabilities(&self) -> Vec<(i32, f64)> {
        let mut counts = std::collections::BTreeMap::new();
        for e in &self.events {
            *counts.entry(e.delta).or_insert(0u64) += 1;
        }
        let total = self.events.len().max(1) as f64;
        counts.into_iter().map(|(d, c)| (d, c as f64 / total)).collect()
    }
}

pub fn analyze_system(model: &Model, cfg: &EnsembleConfig, res: &EnsembleResult, acfg: &AnalysisConfig) -> Result<SystemAnalysis> {
    let windows = HopWindows {
        cluster_s: acfg.cluster_s,
        double_s: acfg.double_hop_s,
    };
    let dt = res.snapshot_dt_s;
    let ok: Vec<_> = res.records.iter().filter(|r| r.is_ok()).collect();
    let mut events = Vec::new();
    let mut hop_counts = Vec::with_capacity(ok.len());
    let mut fluctuations = Vec::with_capacity(ok.len());
    for r in &ok {
        let ev = hop_pipeline(&r.cells, dt, &windows);
        hop_counts.push(ev.len());
        events.extend(ev);
        fluctuations.push(energy_fluctuation(&r.e_left, dt));
    }
    let k_max = (acfg.k_max > 0).then_some(acfg.k_max);
    let walk = hop_size_distribution(&events, ok.len() as f64 * cfg.t_end_s, k_max, model.d0 * ANGSTROM_M)?;
    let d = &res.distribution;
    let t_end = d.times_s.last().copied().unwrap_or(0.0);
    let centers = window_centers(0.0, t_end, acfg.window_s, acfg.window_spacing_s);
    let opts = FitOptions {
        width_s: acfg.window_s,
        kappa_hi: acfg.kappa_hi,
        ..FitOptions::default()
    };
    let fit = fit_kappa(&d.fractions(), &d.times_s, &walk.generator(d.nu), &centers, &opts)?;
    Ok(SystemAnalysis {
        hopcount_hist: count_histogram(&hop_counts),
        events,
        hop_counts,
        walk,
        fit,
        fluctuations,
    })
}

#[derive(Debug, Clone)]
pub struct PairAnalysis {
    pub orig: SystemAnalysis,
    pub op: SystemAnalysis,
    pub times_s: Vec<f64>,
    /// `e(t)` of the reduced distribution against the original one.
    pub e_rel: Vec<f64>,
    pub efluct: PairedHistogram,
}

pub fn analyze_pair(
    model: &Model,
    cfg_orig: &EnsembleConfig,
    orig: &EnsembleResult,
    cfg_op: &EnsembleConfig,
    op: &EnsembleResult,
    acfg: &AnalysisConfig,
) -> Result<PairAnalysis> {
    let a = analyze_system(model, cfg_orig, orig, acfg)?;
    let b = analyze_system(model, cfg_op, op, acfg)?;
    let e_rel = relative_error_series(&orig.distribution.fractions(), &op.distribution.fractions())?;
    let efluct = paired_histogram(&a.fluctuations, &b.fluctuations, acfg.efluct_bins)?;
    Ok(PairAnalysis {
        orig: a,
        op: b,
        times_s: orig.distribution.times_s.clone(),
        e_rel,
        efluct,
    })
}
