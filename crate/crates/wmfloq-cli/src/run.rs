//! Subcommand execution.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use wmfloq::circuit::{Circuit, MeasurementStrength};
use wmfloq::kitaev::{exact_flux_sum, flux_mc, Boundary, FluxMcConfig, KitaevTorus};
use wmfloq::lattice::{hexagon, single_bond, Color, Lattice};
use wmfloq::oracle::crosscheck;
use wmfloq::sampler::{stream_seed, ChainState, Comb, CombConfig, CombSummary, Counters};

use crate::args::Cli;
use crate::config::{FileConfig, Mode, RunConfig};
use crate::output::{read_csv, sidecar_path, write_csv, write_json, write_json_atomic, Provenance, Row};
use crate::{fit, CliError};

pub const CHECKPOINT_VERSION: u32 = 1;
/// Oracle agreement required by `oracle-check`.
pub const ORACLE_TOLERANCE: f64 = 1e-9;
/// Default strengths (units of π) for `oracle-check`.
pub const ORACLE_T: [f64; 4] = [0.05, 0.125, 0.2, 0.24];

/// Files written and a JSON summary for stdout.
#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: Value,
}

/// Resolves the configuration of a parsed command line.
pub fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let common = cli.command.common();
    let file = match &common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut cfg = RunConfig::resolve(cli.command.mode(), file, common)?;
    if let crate::args::Command::Fit(f) = &cli.command {
        if f.kind.is_some() {
            cfg.fit_kind = f.kind.clone();
            cfg.overrides.push("fit.kind".into());
        }
        if !f.inputs.is_empty() {
            cfg.fit_inputs = f.inputs.clone();
            cfg.overrides.push("fit.inputs".into());
        }
    }
    Ok(cfg)
}

pub fn run(cli: &Cli, argv: &[String]) -> Result<Outcome, CliError> {
    let cfg = resolve(cli)?;
    run_config(&cfg, argv, cli.command.common().stop_after)
}

/// Runs a resolved configuration. `stop_after` halts every chain after that
/// many outer sweeps (checkpointing first), for testing resumption.
pub fn run_config(cfg: &RunConfig, argv: &[String], stop_after: Option<usize>) -> Result<Outcome, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Config { key: "threads".into(), msg: e.to_string() })?;
    pool.install(|| match cfg.mode {
        Mode::LatticeInfo => lattice_info(cfg, argv),
        Mode::Sweep | Mode::Point | Mode::NegativityScan => comb_mode(cfg, argv, stop_after),
        Mode::OracleCheck => oracle_check(cfg, argv),
        Mode::Kitaev => kitaev(cfg, argv),
        Mode::Fit => fit_mode(cfg, argv),
    })
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn write_sidecar<D: Serialize>(
    artifact: &Path,
    cfg: &RunConfig,
    argv: &[String],
    started: (u64, Instant),
    diagnostics: D,
) -> Result<PathBuf, CliError> {
    let path = sidecar_path(artifact);
    let prov = Provenance {
        schema: crate::output::CSV_SCHEMA,
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: argv,
        config: cfg,
        overrides: &cfg.overrides,
        seed: cfg.comb.seed,
        threads: rayon::current_num_threads(),
        started_unix: started.0,
        wall_time_s: started.1.elapsed().as_secs_f64(),
        diagnostics,
    };
    write_json(&path, &prov)?;
    Ok(path)
}

fn lattice_info(cfg: &RunConfig, argv: &[String]) -> Result<Outcome, CliError> {
    let started = (unix_now(), Instant::now());
    let mut entries = Vec::new();
    for &l in &cfg.sizes {
        let lat = Lattice::new(l)?;
        let r = cfg.depth(l);
        let circuit = Circuit::floquet(&lat, r)?;
        let g = &lat.graph;
        let cut = lat.bipartition();
        let per_color = |f: &dyn Fn(Color) -> usize| -> Value {
            json!({ "R": f(Color::R), "G": f(Color::G), "B": f(Color::B) })
        };
        entries.push(json!({
            "L": l,
            "r": r,
            "sites": lat.n_sites(),
            "bonds": per_color(&|c| g.bonds_of_color(c).len()),
            "plaquettes": per_color(&|c| g.plaquettes.iter().filter(|p| p.color == c).count()),
            "rounds": circuit.schedule.n_rounds(),
            "round_colors": circuit.schedule.rounds.iter().map(|r| r.color.map(|c| c.letter().to_string())).collect::<Vec<_>>(),
            "slots": circuit.n_slots(),
            "final_flux_windows": circuit.schedule.final_windows().len(),
            "cut": {
                "axis": format!("{:?}", cut.axis),
                "size_a": cut.size_a,
                "crossing_bonds": per_color(&|c| cut.crossing(g, c).len()),
            },
        }));
    }
    let summary = Value::Array(entries);
    let path = cfg.out.join("lattice_info.json");
    write_json(&path, &summary)?;
    let sidecar = write_sidecar(&path, cfg, argv, started, Value::Null)?;
    Ok(Outcome { files: vec![path, sidecar], summary })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointKey {
    #[serde(rename = "L")]
    pub l: usize,
    pub r: usize,
    /// Units of π.
    pub t: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    point: PointKey,
    comb: CombConfig,
    state: ChainState,
}

fn checkpoint_path(out: &Path, key: &PointKey, chain: usize) -> PathBuf {
    out.join("checkpoints").join(format!("L{}_r{}_t{}_chain{}.json", key.l, key.r, key.t, chain))
}

fn load_checkpoint(path: &Path, key: &PointKey, comb: &CombConfig) -> Result<ChainState, CliError> {
    let bad = |msg: String| CliError::Checkpoint { path: path.to_path_buf(), msg };
    let text = std::fs::read(path).map_err(|e| bad(e.to_string()))?;
    let ck: Checkpoint = serde_json::from_slice(&text).map_err(|e| bad(e.to_string()))?;
    if ck.version != CHECKPOINT_VERSION {
        return Err(bad(format!("version {} (expected {CHECKPOINT_VERSION})", ck.version)));
    }
    if ck.point != *key || ck.comb != *comb {
        return Err(bad("written by a different configuration".into()));
    }
    Ok(ck.state)
}

fn save_checkpoint(path: &Path, key: &PointKey, comb: &CombConfig, state: &ChainState) -> Result<(), CliError> {
    let ck = Checkpoint { version: CHECKPOINT_VERSION, point: *key, comb: *comb, state: state.clone() };
    write_json_atomic(path, &ck)
}

fn run_chain_job(
    cfg: &RunConfig,
    key: &PointKey,
    comb: &Comb,
    chain: usize,
    stop_after: Option<usize>,
) -> Result<ChainState, CliError> {
    let path = checkpoint_path(&cfg.out, key, chain);
    let mut st = if cfg.resume && path.exists() {
        load_checkpoint(&path, key, &comb.cfg)?
    } else {
        ChainState::new(comb, chain)
    };
    let every = cfg.checkpoint_every;
    while !st.is_done(&comb.cfg) {
        if stop_after == Some(st.sweep) {
            save_checkpoint(&path, key, &comb.cfg, &st)?;
            return Err(CliError::Interrupted(st.sweep));
        }
        comb.step(&mut st)?;
        if every > 0 && st.sweep % every == 0 {
            save_checkpoint(&path, key, &comb.cfg, &st)?;
        }
    }
    if every > 0 {
        save_checkpoint(&path, key, &comb.cfg, &st)?;
    }
    Ok(st)
}

/// Comb results at every `(L, t)` of the configuration, in grid order.
pub fn run_points(
    cfg: &RunConfig,
    with_inner: bool,
    stop_after: Option<usize>,
) -> Result<Vec<(PointKey, CombSummary)>, CliError> {
    let mut points = Vec::new();
    for &l in &cfg.sizes {
        let lattice = Lattice::new(l)?;
        for &t in &cfg.t {
            let key = PointKey { l, r: cfg.depth(l), t };
            let circuit = Circuit::floquet(&lattice, key.r)?;
            let mut comb_cfg = cfg.comb;
            if !with_inner {
                comb_cfg.inner_sweeps = 0;
            }
            let cut = Some(lattice.bipartition().in_a);
            let comb = Comb::new(circuit, Some(&lattice), MeasurementStrength::from_pi_units(t), comb_cfg, cut)?;
            points.push((key, comb));
        }
    }
    let chains = cfg.comb.chains;
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..chains).map(move |c| (p, c))).collect();
    let states: Vec<ChainState> = jobs
        .par_iter()
        .map(|&(p, c)| run_chain_job(cfg, &points[p].0, &points[p].1, c, stop_after))
        .collect::<Result<_, _>>()?;
    points
        .iter()
        .enumerate()
        .map(|(p, (key, comb))| Ok((*key, comb.summarize(&states[p * chains..(p + 1) * chains])?)))
        .collect()
}

pub fn comb_rows(cfg: &RunConfig, results: &[(PointKey, CombSummary)]) -> Vec<Row> {
    let mut rows = Vec::new();
    for (key, s) in results {
        for est in &s.estimates {
            if !cfg.estimators.iter().any(|e| *e == est.name) {
                continue;
            }
            rows.push(Row {
                l: key.l,
                r: key.r,
                t: key.t,
                seed: cfg.comb.seed,
                observable: est.name.clone(),
                mean: est.stats.mean,
                stderr: est.stats.stderr,
                tau_int: est.stats.tau_int,
                n_outer: s.n_outer,
                n_inner: s.n_inner,
            });
        }
    }
    rows
}

#[derive(Serialize)]
struct PointDiagnostics<'a> {
    point: PointKey,
    counters: &'a Counters,
    equilibrated: bool,
}

fn comb_mode(cfg: &RunConfig, argv: &[String], stop_after: Option<usize>) -> Result<Outcome, CliError> {
    let started = (unix_now(), Instant::now());
    let with_inner = cfg.mode != Mode::NegativityScan;
    let results = run_points(cfg, with_inner, stop_after)?;
    let rows = comb_rows(cfg, &results);
    let name = match cfg.mode {
        Mode::Sweep => "sweep.csv",
        Mode::Point => "point.csv",
        _ => "negativity_scan.csv",
    };
    let path = cfg.out.join(name);
    write_csv(&path, &rows)?;
    let diagnostics: Vec<PointDiagnostics> = results
        .iter()
        .map(|(k, s)| PointDiagnostics { point: *k, counters: &s.counters, equilibrated: s.equilibrated })
        .collect();
    let unequilibrated: Vec<PointKey> = diagnostics.iter().filter(|d| !d.equilibrated).map(|d| d.point).collect();
    let sidecar = write_sidecar(&path, cfg, argv, started, &diagnostics)?;
    let summary = json!({ "csv": path, "rows": rows.len(), "flagged_points": unequilibrated });
    Ok(Outcome { files: vec![path, sidecar], summary })
}

#[derive(Serialize)]
struct OracleEntry {
    graph: &'static str,
    t_over_pi: f64,
    n_records: usize,
    max_dev_prob: f64,
    max_dev_parity: f64,
    max_dev_flux: f64,
    normalization_error: f64,
    max_dev: f64,
}

fn oracle_check(cfg: &RunConfig, argv: &[String]) -> Result<Outcome, CliError> {
    let started = (unix_now(), Instant::now());
    let ts: Vec<f64> = if cfg.t.is_empty() { ORACLE_T.to_vec() } else { cfg.t.clone() };
    let graphs: [(&'static str, Circuit); 2] =
        [("single_bond", Circuit::custom(&single_bond(6))?), ("hexagon", Circuit::custom(&hexagon())?)];
    let cases: Vec<(usize, f64)> = (0..graphs.len()).flat_map(|g| ts.iter().map(move |&t| (g, t))).collect();
    let entries: Vec<OracleEntry> = cases
        .par_iter()
        .map(|&(g, t)| {
            let rep = crosscheck(&graphs[g].1, t * std::f64::consts::PI)?;
            Ok(OracleEntry {
                graph: graphs[g].0,
                t_over_pi: t,
                n_records: rep.n_records,
                max_dev_prob: rep.max_dev_prob,
                max_dev_parity: rep.max_dev_parity,
                max_dev_flux: rep.max_dev_flux,
                normalization_error: rep.normalization_error,
                max_dev: rep.max_dev(),
            })
        })
        .collect::<Result<_, CliError>>()?;
    let worst = entries.iter().map(|e| e.max_dev).fold(0.0, f64::max);
    let pass = worst <= ORACLE_TOLERANCE;
    let report = json!({ "tolerance": ORACLE_TOLERANCE, "max_dev": worst, "pass": pass, "checks": entries });
    let path = cfg.out.join("oracle_check.json");
    write_json(&path, &report)?;
    let sidecar = write_sidecar(&path, cfg, argv, started, json!({ "pass": pass }))?;
    if !pass {
        return Err(CliError::OracleFailed(worst));
    }
    Ok(Outcome { files: vec![path, sidecar], summary: json!({ "max_dev": worst, "pass": pass }) })
}

fn kitaev_row(l: usize, beta: f64, seed: u64, name: &str, stats: (f64, f64, f64), n: usize) -> Row {
    Row {
        l,
        r: 0,
        t: 1.0 / beta,
        seed,
        observable: format!("ht_{name}"),
        mean: stats.0,
        stderr: stats.1,
        tau_int: stats.2,
        n_outer: n,
        n_inner: 0,
    }
}

fn kitaev(cfg: &RunConfig, argv: &[String]) -> Result<Outcome, CliError> {
    let started = (unix_now(), Instant::now());
    let boundary = if cfg.kitaev.antiperiodic { Boundary::Antiperiodic } else { Boundary::Periodic };
    let seed = cfg.comb.seed;
    let mut rows = Vec::new();
    for &l in &cfg.sizes {
        let torus = KitaevTorus::new(l)?;
        if l == 3 {
            for x in exact_flux_sum(&torus, &cfg.kitaev.betas, boundary)? {
                for (name, v) in [
                    ("exact_energy", x.energy),
                    ("exact_cv", x.cv),
                    ("exact_flux", x.flux),
                    ("exact_negativity", x.negativity),
                ] {
                    rows.push(kitaev_row(l, x.beta, seed, name, (v, 0.0, 0.0), 0));
                }
            }
        }
        let mc: Vec<_> = cfg
            .kitaev
            .betas
            .par_iter()
            .enumerate()
            .map(|(k, &beta)| {
                let mc_cfg =
                    FluxMcConfig { sweeps: cfg.kitaev.sweeps, burn_in: cfg.kitaev.burn_in, seed: stream_seed(seed, l, k) };
                flux_mc(&torus, beta, mc_cfg, boundary)
            })
            .collect::<Result<_, _>>()?;
        for m in mc {
            for (name, s) in [("energy", m.energy), ("cv", m.cv), ("flux", m.flux), ("negativity", m.negativity)] {
                rows.push(kitaev_row(l, m.beta, seed, name, (s.mean, s.stderr, s.tau_int), s.n));
            }
        }
    }
    let path = cfg.out.join("kitaev.csv");
    write_csv(&path, &rows)?;
    let sidecar = write_sidecar(&path, cfg, argv, started, json!({ "boundary": format!("{boundary:?}") }))?;
    let summary = json!({ "csv": &path, "rows": rows.len() });
    Ok(Outcome { files: vec![path, sidecar], summary })
}

fn fit_mode(cfg: &RunConfig, argv: &[String]) -> Result<Outcome, CliError> {
    let started = (unix_now(), Instant::now());
    let kind = cfg.fit_kind.as_deref().ok_or_else(|| CliError::Config {
        key: "fit.kind".into(),
        msg: "missing; expected threshold, z, negativity or collapse".into(),
    })?;
    if cfg.fit_inputs.is_empty() {
        return Err(CliError::Config { key: "fit.inputs".into(), msg: "no input CSV files".into() });
    }
    let mut rows = Vec::new();
    for p in &cfg.fit_inputs {
        rows.extend(read_csv(p)?);
    }
    let report = fit::fit(kind, &rows)?;
    let path = cfg.out.join(format!("fit_{kind}.json"));
    write_json(&path, &report)?;
    let sidecar = write_sidecar(&path, cfg, argv, started, json!({ "inputs": cfg.fit_inputs }))?;
    Ok(Outcome { files: vec![path, sidecar], summary: report })
}
