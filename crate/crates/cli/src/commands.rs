//! Subcommand bodies. Each writes its CSV files and a manifest into the output directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use opchain::analysis::barrier::{calibrate_bump, hopping_barrier, BarrierOptions};
use opchain::analysis::expm::expm_action;
use opchain::analysis::walk::RandomWalkModel;
use opchain::dynamics::{integrate, oscillator_error, FullSystem, RecordOptions, Trajectory};
use opchain::ensemble::{run_ensemble, sample_initial, EnsembleConfig, EnsembleResult, SampleStatus, Variant};
use opchain::quadrature::{gradient_gaps, order_test_chain, QuadratureOptions};
use opchain::reduction::{BoundaryLayerSystem, FullVirtualSystem};
use opchain::units::{UnitSystem, ANGSTROM_M};
use opchain::{Model, ModelParams};

use crate::bench::run_bench;
use crate::config::{ConfigError, RunConfig};
use crate::output::{header, num, write_csv, Manifest};
use crate::report::{analyze_pair, SystemAnalysis};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Ensemble,
    Analyze,
    Verify,
    Bench,
    Calibrate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Ensemble => "ensemble",
            Command::Analyze => "analyze",
            Command::Verify => "verify",
            Command::Bench => "bench",
            Command::Calibrate => "calibrate",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Run(opchain::Error),
    Io(std::io::Error),
}

impl CliError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(e) if matches!(e.root(), opchain::Error::Config(_)) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Run(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<opchain::Error> for CliError {
    fn from(e: opchain::Error) -> Self {
        CliError::Run(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}

/// Result of a finished command; `ok == false` maps to exit code 1.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub ok: bool,
    pub manifest: Manifest,
    pub dir: PathBuf,
}

struct Run<'a> {
    cfg: &'a RunConfig,
    dir: PathBuf,
    files: Vec<String>,
    summary: BTreeMap<String, serde_json::Value>,
    excluded: Option<usize>,
}

impl Run<'_> {
    fn csv<I: IntoIterator<Item = Vec<String>>>(&mut self, name: &str, cols: Vec<String>, rows: I) -> Result<(), CliError> {
        write_csv(&self.dir.join(name), &cols, rows)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn note(&mut self, key: &str, v: serde_json::Value) {
        self.summary.insert(key.to_string(), v);
    }
}

/// Runs one subcommand with a validated configuration.
pub fn execute(cmd: Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let dir = cfg.out_dir.clone();
    std::fs::create_dir_all(&dir)?;
    let model = Model::new(&cfg.params)?;
    let mut run = Run {
        cfg,
        dir: dir.clone(),
        files: Vec::new(),
        summary: BTreeMap::new(),
        excluded: None,
    };
    let ok = match cmd {
        Command::Simulate => simulate(&mut run, &model)?,
        Command::Ensemble => ensemble(&mut run, &model)?,
        Command::Analyze => analyze(&mut run, &model)?,
        Command::Verify => verify(&mut run, &model)?,
        Command::Bench => bench(&mut run, &model)?,
        Command::Calibrate => calibrate(&mut run)?,
    };
    let manifest = Manifest {
        command: cmd.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.ensemble.base_seed,
        workers: cfg.ensemble.workers.unwrap_or(0),
        excluded: run.excluded,
        wall_time_s: start.elapsed().as_secs_f64(),
        ok,
        files: run.files,
        summary: run.summary,
        config: cfg.echo(),
    };
    manifest.write(&dir)?;
    Ok(Outcome { ok, manifest, dir })
}

fn trajectory_rows(tr: &Trajectory<f64>) -> Vec<Vec<String>> {
    let t_unit = UnitSystem::time_unit_s();
    (0..tr.len())
        .map(|j| {
            let mut row = vec![
                num(tr.times[j] * t_unit),
                tr.cells[j].to_string(),
                num(tr.e_left[j]),
                num(tr.energy[j]),
            ];
            if let Some(r) = tr.residual.get(j) {
                row.push(num(*r));
            }
            row
        })
        .collect()
}

fn simulate(run: &mut Run, model: &Model) -> Result<bool, CliError> {
    let e = &run.cfg.ensemble;
    e.validate(model)?;
    let relaxed = model.relaxed_chain(e.n, e.slot)?;
    let mut y = sample_initial(model, e, &relaxed, run.cfg.simulate_sample)?;
    let dt = UnitSystem::seconds_to_internal(e.dt_s);
    let steps = e.steps()?;
    let mut opts = RecordOptions::new(e.m);
    opts.stride = e.stride;
    opts.positions = run.cfg.simulate_positions;
    opts.residual = e.variant != Variant::Full;
    let tr = match e.variant {
        Variant::Full => integrate(&mut FullSystem::new(model, e.n), &mut y, steps, dt, opts),
        Variant::OpFullVirtual => {
            let mut sys = FullVirtualSystem::new(model, e.m, e.n - e.m);
            sys.projection = e.projection;
            integrate(&mut sys, &mut y, steps, dt, opts)
        }
        Variant::OpBoundaryLayer => {
            let mut sys = BoundaryLayerSystem::new(model, e.m, e.k);
            sys.projection = e.projection;
            integrate(&mut sys, &mut y, steps, dt, opts)
        }
    }?;
    let mut cols = header(&["t_s", "cell", "E_left_eV", "H_eV"]);
    if !tr.residual.is_empty() {
        cols.push("constraint_residual".into());
    }
    run.csv("trajectory.csv", cols, trajectory_rows(&tr))?;
    if let Some(first) = tr.positions.first() {
        let mut cols = vec!["t_s".to_string()];
        cols.extend((0..first.len()).map(|i| format!("x{i}_A")));
        let t_unit = UnitSystem::time_unit_s();
        let rows = tr.times.iter().zip(&tr.positions).map(|(t, x)| {
            let mut row = vec![num(t * t_unit)];
            row.extend(x.iter().map(|&v| num(v)));
            row
        });
        run.csv("positions.csv", cols, rows.collect::<Vec<_>>())?;
    }
    let h0 = tr.energy[0];
    let drift = tr.energy.iter().map(|h| ((h - h0) / h0).abs()).fold(0.0, f64::max);
    run.note("sample", json!(run.cfg.simulate_sample));
    run.note("energy_drift", json!(drift));
    run.note("final_cell", json!(tr.cells.last()));
    run.note("rhs_evals", json!(tr.evaluations));
    Ok(true)
}

fn distribution_rows(res: &EnsembleResult) -> (Vec<String>, Vec<Vec<String>>) {
    let d = &res.distribution;
    let nu = d.nu as i64;
    let mut cols = vec!["t_s".to_string()];
    cols.extend((-nu..=nu).map(|c| format!("cell_{c}")));
    let rows = d
        .times_s
        .iter()
        .zip(d.fractions())
        .map(|(t, f)| {
            let mut row = vec![num(*t)];
            row.extend(f.iter().map(|&x| num(x)));
            row
        })
        .collect();
    (cols, rows)
}

fn run_checked(run: &mut Run, model: &Model, cfg: &EnsembleConfig) -> Result<EnsembleResult, CliError> {
    let res = run_ensemble(model, cfg)?;
    *run.excluded.get_or_insert(0) += res.excluded();
    Ok(res)
}

fn ensemble(run: &mut Run, model: &Model) -> Result<bool, CliError> {
    let cfg = run.cfg.ensemble.clone();
    let res = run_checked(run, model, &cfg)?;
    let (cols, rows) = distribution_rows(&res);
    run.csv("distribution.csv", cols, rows)?;
    let rows: Vec<Vec<String>> = res
        .records
        .iter()
        .map(|r| {
            let (status, reason) = match &r.status {
                SampleStatus::Ok => ("ok", String::new()),
                SampleStatus::Excluded(why) => ("excluded", why.clone()),
            };
            vec![
                r.index.to_string(),
                r.seed.to_string(),
                status.to_string(),
                r.cells.last().map_or(String::new(), |c| c.to_string()),
                num(r.energy_drift),
                num(r.mean_kinetic),
                r.evaluations.to_string(),
                reason,
            ]
        })
        .collect();
    let cols = header(&["index", "seed", "status", "final_cell", "energy_drift", "mean_kinetic_eV", "rhs_evals", "reason"]);
    run.csv("samples.csv", cols, rows)?;
    let (ke, ke_se) = res.mean_kinetic();
    run.note("variant", json!(cfg.variant.name()));
    run.note("boundary_mass", json!(res.distribution.boundary_mass()));
    run.note("mean_kinetic_eV", json!(ke));
    run.note("mean_kinetic_se_eV", json!(ke_se));
    Ok(true)
}

fn system_files(run: &mut Run, tag: &str, s: &SystemAnalysis) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = s
        .fit
        .centers_s
        .iter()
        .zip(&s.fit.kappa)
        .zip(&s.fit.residual)
        .map(|((t, k), r)| vec![num(*t), num(*k), num(*r)])
        .collect();
    run.csv(&format!("kappa_fit_{tag}.csv"), header(&["t_j_s", "kappa_m2s", "residual"]), rows)?;
    let rows = s
        .signed_hop_probabilities()
        .into_iter()
        .map(|(d, p)| vec![d.to_string(), num(p)])
        .collect::<Vec<_>>();
    run.csv(&format!("hops_hist_{tag}.csv"), header(&["delta", "probability"]), rows)?;
    let rows = s
        .hopcount_hist
        .iter()
        .enumerate()
        .map(|(c, f)| vec![c.to_string(), num(*f)])
        .collect::<Vec<_>>();
    run.csv(&format!("hopcount_hist_{tag}.csv"), header(&["count", "fraction"]), rows)?;
    Ok(())
}

fn analyze(run: &mut Run, model: &Model) -> Result<bool, CliError> {
    let acfg = run.cfg.analysis.clone();
    let orig_cfg = EnsembleConfig {
        variant: Variant::Full,
        ..run.cfg.ensemble.clone()
    };
    let op_cfg = EnsembleConfig {
        variant: acfg.op_variant,
        ..run.cfg.ensemble.clone()
    };
    let orig = run_checked(run, model, &orig_cfg)?;
    let op = run_checked(run, model, &op_cfg)?;
    for (tag, res) in [("orig", &orig), ("op", &op)] {
        let (cols, rows) = distribution_rows(res);
        run.csv(&format!("distribution_{tag}.csv"), cols, rows)?;
    }
    let pair = analyze_pair(model, &orig_cfg, &orig, &op_cfg, &op, &acfg)?;
    system_files(run, "orig", &pair.orig)?;
    system_files(run, "op", &pair.op)?;
    let h = &pair.efluct;
    let rows = (0..h.first.len())
        .map(|i| vec![num(h.edges[i]), num(h.first[i]), num(h.second[i])])
        .collect::<Vec<_>>();
    run.csv("efluct_hist.csv", header(&["bin_eV2s", "fraction_orig", "fraction_op"]), rows)?;
    let rows = pair
        .times_s
        .iter()
        .zip(&pair.e_rel)
        .map(|(t, e)| vec![num(*t), num(*e)])
        .collect::<Vec<_>>();
    run.csv("compare.csv", header(&["t_s", "e_rel"]), rows)?;
    for (tag, s) in [("orig", &pair.orig), ("op", &pair.op)] {
        let (k, rel) = s.plateau(&acfg);
        run.note(&format!("kappa_plateau_{tag}_m2s"), json!(k));
        run.note(&format!("kappa_plateau_rel_std_{tag}"), json!(rel));
        run.note(&format!("gamma_alpha_{tag}_m2s"), json!(s.walk.kappa()));
        run.note(&format!("mean_efluct_{tag}_eV2s"), json!(s.mean_fluctuation()));
    }
    let e_max = pair.e_rel.iter().copied().filter(|e| e.is_finite()).fold(0.0, f64::max);
    run.note("e_rel_max", json!(e_max));
    Ok(true)
}

fn verify(run: &mut Run, model: &Model) -> Result<bool, CliError> {
    let q = order_test_chain(model)?;
    let qopts = QuadratureOptions::default();
    let eps = run.cfg.verify_eps.clone();
    let mut gaps = Vec::with_capacity(eps.len());
    for &e in &eps {
        gaps.push(gradient_gaps(model, &q, 1, e, &qopts)?);
    }
    let rows = eps
        .iter()
        .zip(&gaps)
        .map(|(e, (g0, g1))| vec![num(*e), num(*g0), num(*g1)])
        .collect::<Vec<_>>();
    run.csv("laplace_gaps.csv", header(&["eps", "gap0", "gap1"]), rows)?;

    // (name, value, lo, hi)
    let mut checks: Vec<(String, f64, f64, f64)> = Vec::new();
    for i in 1..eps.len() {
        let (a, b) = (gaps[i - 1], gaps[i]);
        let pair = format!("{}->{}", num(eps[i - 1]), num(eps[i]));
        checks.push((format!("zeroth_order_ratio {pair}"), a.0 / b.0, 1.6, 2.4));
        checks.push((format!("first_order_ratio {pair}"), a.1 / b.1, 3.2, 4.8));
    }
    checks.push(("rk4_order_ratio".into(), oscillator_error(10.0, 200) / oscillator_error(10.0, 400), 14.0, 18.0));
    let walk = RandomWalkModel::new(vec![0.4, 0.1], 1e12, model.d0 * ANGSTROM_M)?;
    let nu = 30;
    let mut v = vec![0.0; 2 * nu + 1];
    v[nu] = 1.0;
    let u = expm_action(&walk.generator(nu), walk.kappa() * 4e-13, &v)?;
    checks.push(("expm_mass_defect".into(), (u.iter().sum::<f64>() - 1.0).abs(), 0.0, 1e-10));

    let mut ok = true;
    let rows = checks
        .iter()
        .map(|(name, v, lo, hi)| {
            let pass = (*lo..=*hi).contains(v);
            ok &= pass;
            vec![name.clone(), num(*v), num(*lo), num(*hi), if pass { "PASS" } else { "FAIL" }.to_string()]
        })
        .collect::<Vec<_>>();
    run.csv("verify.csv", header(&["check", "value", "lo", "hi", "result"]), rows)?;
    run.note("failed", json!(checks.iter().filter(|(_, v, lo, hi)| !(*lo..=*hi).contains(v)).count()));
    Ok(ok)
}

fn bench(run: &mut Run, model: &Model) -> Result<bool, CliError> {
    let rows = run_bench(model, &run.cfg.bench, &run.cfg.ensemble)?;
    let ok = rows.iter().all(|r| r.speedup > 0.0 && r.speedup.is_finite());
    let out = rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.m.to_string(),
                r.variant.name().to_string(),
                num(r.wall_s),
                num(r.speedup),
                r.steps.to_string(),
                r.rhs_evals.to_string(),
            ]
        })
        .collect::<Vec<_>>();
    run.csv("bench.csv", header(&["n", "m", "variant", "wall_s", "speedup", "steps", "rhs_evals"]), out)?;
    Ok(ok)
}

fn calibrate(run: &mut Run) -> Result<bool, CliError> {
    let c = &run.cfg.calibrate;
    let opts = BarrierOptions {
        n: c.chain_n,
        slot: (c.chain_n - 1) / 2,
        points: c.points,
    };
    let (b, barrier) = calibrate_bump(&run.cfg.params, c.target_ev, (c.b_lo_ev, c.b_hi_ev), c.tol_ev, &opts)?;
    let params = ModelParams { cu_b: b, ..run.cfg.params.clone() };
    let scan = hopping_barrier(&Model::new(&params)?, &opts)?;
    let rows = scan
        .offsets
        .iter()
        .zip(&scan.energies)
        .map(|(s, e)| vec![num(*s), num(*e)])
        .collect::<Vec<_>>();
    run.csv("barrier_scan.csv", header(&["offset_A", "energy_eV"]), rows)?;
    run.note("B_eV", json!(b));
    run.note("barrier_eV", json!(barrier));
    Ok(true)
}

/// Reads and parses a configuration file, or the defaults when `path` is `None`.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                CliError::Config(ConfigError {
                    line: 0,
                    message: format!("cannot read {}: {e}", p.display()),
                })
            })?;
            Ok(RunConfig::parse(&text)?)
        }
    }
}

