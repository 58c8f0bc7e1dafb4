//! Flat `key = value` run configuration with unit-suffixed keys.

use std::fmt;
use std::path::PathBuf;

use opchain::ensemble::{EnsembleConfig, Variant};
use opchain::ModelParams;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// 1-based line, or 0 for errors not tied to a line.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            f.write_str(&self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub op_variant: Variant,
    pub window_s: f64,
    pub window_spacing_s: f64,
    pub cluster_s: f64,
    pub double_hop_s: f64,
    pub kappa_hi: f64,
    /// Largest hop size kept; 0 keeps the largest observed.
    pub k_max: usize,
    pub efluct_bins: usize,
    pub plateau_start_s: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            op_variant: Variant::OpBoundaryLayer,
            window_s: 2.5e-14,
            window_spacing_s: 1e-14,
            cluster_s: 6e-14,
            double_hop_s: 2e-14,
            kappa_hi: 1e-7,
            k_max: 0,
            efluct_bins: 40,
            plateau_start_s: 1e-13,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub n_list: Vec<usize>,
    pub m: usize,
    pub k: usize,
    pub repeats: usize,
    /// Integrated time per timed run; shared by every variant.
    pub t_end_s: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_list: vec![70, 140, 280, 560],
            m: 50,
            k: 10,
            repeats: 5,
            t_end_s: 2e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrateConfig {
    pub target_ev: f64,
    pub tol_ev: f64,
    pub b_lo_ev: f64,
    pub b_hi_ev: f64,
    pub chain_n: usize,
    pub points: usize,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        Self {
            target_ev: 0.43,
            tol_ev: 1e-6,
            b_lo_ev: 2.0,
            b_hi_ev: 8.0,
            chain_n: 41,
            points: 41,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    pub ensemble: EnsembleConfig,
    pub analysis: AnalysisConfig,
    pub bench: BenchConfig,
    pub calibrate: CalibrateConfig,
    /// Sample index replayed by `simulate`.
    pub simulate_sample: usize,
    pub simulate_positions: bool,
    /// Temperatures ε of the Laplace order check, largest first.
    pub verify_eps: Vec<f64>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: ModelParams::default(),
            ensemble: EnsembleConfig::default(),
            analysis: AnalysisConfig::default(),
            bench: BenchConfig::default(),
            calibrate: CalibrateConfig::default(),
            simulate_sample: 0,
            simulate_positions: false,
            verify_eps: vec![0.2, 0.1, 0.05],
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "chain.n",
    "chain.m",
    "chain.k",
    "chain.slot",
    "ensemble.samples",
    "ensemble.temperature_K",
    "ensemble.variant",
    "ensemble.seed",
    "ensemble.stride",
    "ensemble.nu",
    "ensemble.equilibration_s",
    "ensemble.projection_every",
    "ensemble.projection_tol_eV_per_A",
    "time.dt_s",
    "time.t_end_s",
    "pot.si_si.re_A",
    "pot.si_si.D_eV",
    "pot.cu_si.B_eV",
    "pot.cu_si.C_eV",
    "pot.cu_si.rm_A",
    "pot.cu_si.sb_A",
    "pot.cu_si.sw_A",
    "pot.cutoff_reach",
    "pot.cutoff_radius_A",
    "pot.taper_width_A",
    "pot.mass_si_amu",
    "pot.mass_cu_amu",
    "analysis.op_variant",
    "analysis.window_s",
    "analysis.window_spacing_s",
    "analysis.cluster_s",
    "analysis.double_hop_s",
    "analysis.kappa_hi_m2_per_s",
    "analysis.k_max",
    "analysis.efluct_bins",
    "analysis.plateau_start_s",
    "bench.n_list",
    "bench.m",
    "bench.k",
    "bench.repeats",
    "bench.t_end_s",
    "calibrate.target_eV",
    "calibrate.tol_eV",
    "calibrate.B_lo_eV",
    "calibrate.B_hi_eV",
    "calibrate.chain_n",
    "calibrate.points",
    "simulate.sample",
    "simulate.positions",
    "verify.eps_list",
    "output.dir",
    "run.workers",
];

const UNITS: &[&str] = &["K", "s", "A", "eV", "amu", "m2_per_s", "eV_per_A"];

fn stem(key: &str) -> Option<&str> {
    UNITS
        .iter()
        .filter_map(|u| key.strip_suffix(u)?.strip_suffix('_'))
        .max_by_key(|s| s.len())
}

fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}`"))
}

fn list<T: std::str::FromStr>(v: &str) -> Result<Vec<T>, String> {
    v.split(',').map(|s| num(s.trim())).collect()
}

fn variant(v: &str) -> Result<Variant, String> {
    Variant::parse(v).map_err(|e| e.to_string())
}

fn fmt_f(x: f64) -> String {
    format!("{x:?}")
}

impl RunConfig {
    /// Parses a configuration text; keys absent from the text keep their defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError { line, message };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(prev) = seen.insert(key.to_string(), line) {
                return Err(err(format!("duplicate key `{key}` (first set on line {prev})")));
            }
            cfg.set(key, value).map_err(err)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let p = &mut self.params;
        let e = &mut self.ensemble;
        let a = &mut self.analysis;
        let b = &mut self.bench;
        let c = &mut self.calibrate;
        match key {
            "chain.n" => e.n = num(v)?,
            "chain.m" => e.m = num(v)?,
            "chain.k" => e.k = num(v)?,
            "chain.slot" => e.slot = num(v)?,
            "ensemble.samples" => e.samples = num(v)?,
            "ensemble.temperature_K" => e.temperature_k = num(v)?,
            "ensemble.variant" => e.variant = variant(v)?,
            "ensemble.seed" => e.base_seed = num(v)?,
            "ensemble.stride" => e.stride = num(v)?,
            "ensemble.nu" => e.nu = num(v)?,
            "ensemble.equilibration_s" => e.equilibration_s = num(v)?,
            "ensemble.projection_every" => e.projection.every = num(v)?,
            "ensemble.projection_tol_eV_per_A" => e.projection.tol = num(v)?,
            "time.dt_s" => e.dt_s = num(v)?,
            "time.t_end_s" => e.t_end_s = num(v)?,
            "pot.si_si.re_A" => p.si_re = num(v)?,
            "pot.si_si.D_eV" => p.si_depth = num(v)?,
            "pot.cu_si.B_eV" => p.cu_b = num(v)?,
            "pot.cu_si.C_eV" => p.cu_c = num(v)?,
            "pot.cu_si.rm_A" => p.cu_rm = num(v)?,
            "pot.cu_si.sb_A" => p.cu_sb = num(v)?,
            "pot.cu_si.sw_A" => p.cu_sw = num(v)?,
            "pot.cutoff_reach" => p.cutoff_reach = num(v)?,
            "pot.cutoff_radius_A" => p.cutoff_radius = if v == "auto" { None } else { Some(num(v)?) },
            "pot.taper_width_A" => p.taper_width = num(v)?,
            "pot.mass_si_amu" => p.mass_si = num(v)?,
            "pot.mass_cu_amu" => p.mass_cu = num(v)?,
            "analysis.op_variant" => a.op_variant = variant(v)?,
            "analysis.window_s" => a.window_s = num(v)?,
            "analysis.window_spacing_s" => a.window_spacing_s = num(v)?,
            "analysis.cluster_s" => a.cluster_s = num(v)?,
            "analysis.double_hop_s" => a.double_hop_s = num(v)?,
            "analysis.kappa_hi_m2_per_s" => a.kappa_hi = num(v)?,
            "analysis.k_max" => a.k_max = num(v)?,
            "analysis.efluct_bins" => a.efluct_bins = num(v)?,
            "analysis.plateau_start_s" => a.plateau_start_s = num(v)?,
            "bench.n_list" => b.n_list = list(v)?,
            "bench.m" => b.m = num(v)?,
            "bench.k" => b.k = num(v)?,
            "bench.repeats" => b.repeats = num(v)?,
            "bench.t_end_s" => b.t_end_s = num(v)?,
            "calibrate.target_eV" => c.target_ev = num(v)?,
            "calibrate.tol_eV" => c.tol_ev = num(v)?,
            "calibrate.B_lo_eV" => c.b_lo_ev = num(v)?,
            "calibrate.B_hi_eV" => c.b_hi_ev = num(v)?,
            "calibrate.chain_n" => c.chain_n = num(v)?,
            "calibrate.points" => c.points = num(v)?,
            "simulate.sample" => self.simulate_sample = num(v)?,
            "simulate.positions" => self.simulate_positions = num(v)?,
            "verify.eps_list" => self.verify_eps = list(v)?,
            "output.dir" => self.out_dir = PathBuf::from(v),
            "run.workers" => {
                let w: usize = num(v)?;
                e.workers = (w > 0).then_some(w);
            }
            _ => return Err(unknown_key(key)),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let p = &self.params;
        let e = &self.ensemble;
        let a = &self.analysis;
        let b = &self.bench;
        let c = &self.calibrate;
        Some(match key {
            "chain.n" => e.n.to_string(),
            "chain.m" => e.m.to_string(),
            "chain.k" => e.k.to_string(),
            "chain.slot" => e.slot.to_string(),
            "ensemble.samples" => e.samples.to_string(),
            "ensemble.temperature_K" => fmt_f(e.temperature_k),
            "ensemble.variant" => e.variant.name().to_string(),
            "ensemble.seed" => e.base_seed.to_string(),
            "ensemble.stride" => e.stride.to_string(),
            "ensemble.nu" => e.nu.to_string(),
            "ensemble.equilibration_s" => fmt_f(e.equilibration_s),
            "ensemble.projection_every" => e.projection.every.to_string(),
            "ensemble.projection_tol_eV_per_A" => fmt_f(e.projection.tol),
            "time.dt_s" => fmt_f(e.dt_s),
            "time.t_end_s" => fmt_f(e.t_end_s),
            "pot.si_si.re_A" => fmt_f(p.si_re),
            "pot.si_si.D_eV" => fmt_f(p.si_depth),
            "pot.cu_si.B_eV" => fmt_f(p.cu_b),
            "pot.cu_si.C_eV" => fmt_f(p.cu_c),
            "pot.cu_si.rm_A" => fmt_f(p.cu_rm),
            "pot.cu_si.sb_A" => fmt_f(p.cu_sb),
            "pot.cu_si.sw_A" => fmt_f(p.cu_sw),
            "pot.cutoff_reach" => p.cutoff_reach.to_string(),
            "pot.cutoff_radius_A" => p.cutoff_radius.map_or("auto".into(), fmt_f),
            "pot.taper_width_A" => fmt_f(p.taper_width),
            "pot.mass_si_amu" => fmt_f(p.mass_si),
            "pot.mass_cu_amu" => fmt_f(p.mass_cu),
            "analysis.op_variant" => a.op_variant.name().to_string(),
            "analysis.window_s" => fmt_f(a.window_s),
            "analysis.window_spacing_s" => fmt_f(a.window_spacing_s),
            "analysis.cluster_s" => fmt_f(a.cluster_s),
            "analysis.double_hop_s" => fmt_f(a.double_hop_s),
            "analysis.kappa_hi_m2_per_s" => fmt_f(a.kappa_hi),
            "analysis.k_max" => a.k_max.to_string(),
            "analysis.efluct_bins" => a.efluct_bins.to_string(),
            "analysis.plateau_start_s" => fmt_f(a.plateau_start_s),
            "bench.n_list" => b.n_list.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","),
            "bench.m" => b.m.to_string(),
            "bench.k" => b.k.to_string(),
            "bench.repeats" => b.repeats.to_string(),
            "bench.t_end_s" => fmt_f(b.t_end_s),
            "calibrate.target_eV" => fmt_f(c.target_ev),
            "calibrate.tol_eV" => fmt_f(c.tol_ev),
            "calibrate.B_lo_eV" => fmt_f(c.b_lo_ev),
            "calibrate.B_hi_eV" => fmt_f(c.b_hi_ev),
            "calibrate.chain_n" => c.chain_n.to_string(),
            "calibrate.points" => c.points.to_string(),
            "simulate.sample" => self.simulate_sample.to_string(),
            "simulate.positions" => self.simulate_positions.to_string(),
            "verify.eps_list" => self.verify_eps.iter().map(|&x| fmt_f(x)).collect::<Vec<_>>().join(","),
            "output.dir" => self.out_dir.display().to_string(),
            "run.workers" => e.workers.unwrap_or(0).to_string(),
            _ => return None,
        })
    }

    /// All keys with their current values, parseable by [`RunConfig::parse`].
    pub fn echo(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    /// Checks the cross-field preconditions that do not need a model.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: &str| Err(ConfigError { line: 0, message: m.to_string() });
        if self.ensemble.samples == 0 {
            return err("ensemble.samples must be at least 1");
        }
        if self.bench.n_list.is_empty() || self.bench.repeats == 0 {
            return err("bench.n_list must be non-empty and bench.repeats at least 1");
        }
        if self.analysis.efluct_bins == 0 {
            return err("analysis.efluct_bins must be at least 1");
        }
        if self.verify_eps.len() < 2 || self.verify_eps.iter().any(|&e| !(e > 0.0)) {
            return err("verify.eps_list needs at least two positive values");
        }
        if self.analysis.op_variant == Variant::Full {
            return err("analysis.op_variant must name a reduced system");
        }
        Ok(())
    }
}

fn unknown_key(key: &str) -> String {
    let expected: Vec<&str> = KEYS
        .iter()
        .copied()
        .filter(|k| {
            stem(k).is_some_and(|s| key == s || key.strip_prefix(s).is_some_and(|rest| rest.starts_with('_')))
        })
        .collect();
    match expected.as_slice() {
        [k] => format!("unit-suffix mismatch: `{key}`, expected `{k}`"),
        _ => format!("unknown key `{key}`"),
    }
}
