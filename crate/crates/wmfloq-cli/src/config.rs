//! Run configuration: TOML file, command-line overrides, validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wmfloq::circuit::Circuit;
use wmfloq::lattice::Lattice;
use wmfloq::observables::ESTIMATORS;
use wmfloq::sampler::CombConfig;

use crate::args::CommonArgs;
use crate::CliError;

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "WMFLOQ_THREADS";

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Evenly spaced grid `start, ..., stop` with `n` points (units of π).
#[derive(Clone, Copy, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub n: usize,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        match self.n {
            0 => Vec::new(),
            1 => vec![self.start],
            n => (0..n).map(|k| self.start + (self.stop - self.start) * k as f64 / (n - 1) as f64).collect(),
        }
    }

    /// Parses `start:stop:n`.
    pub fn parse(s: &str) -> Result<Grid, CliError> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || CliError::Config { key: "t_grid".into(), msg: format!("expected start:stop:n, got {s:?}") };
        if parts.len() != 3 {
            return Err(bad());
        }
        Ok(Grid {
            start: parts[0].trim().parse().map_err(|_| bad())?,
            stop: parts[1].trim().parse().map_err(|_| bad())?,
            n: parts[2].trim().parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CombSection {
    pub outer_sweeps: Option<usize>,
    pub burn_in: Option<usize>,
    pub branch_interval: Option<usize>,
    pub inner_sweeps: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct KitaevSection {
    /// Inverse temperatures; defaults to a logarithmic grid of `T` in `[0.01, 10]`.
    pub betas: Option<Vec<f64>>,
    pub sweeps: Option<usize>,
    pub burn_in: Option<usize>,
    pub boundary: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub kind: Option<String>,
    pub inputs: Option<Vec<PathBuf>>,
}

/// Contents of a config file. Every key is optional; unknown keys are errors.
#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(rename = "L")]
    pub l: Option<OneOrMany<usize>>,
    pub r: Option<usize>,
    pub t: Option<OneOrMany<f64>>,
    pub t_grid: Option<Grid>,
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    pub estimators: Option<Vec<String>>,
    pub cut: Option<String>,
    pub out: Option<PathBuf>,
    pub checkpoint_every: Option<usize>,
    pub cache: Option<bool>,
    pub threads: Option<usize>,
    pub comb: Option<CombSection>,
    pub kitaev: Option<KitaevSection>,
    pub fit: Option<FitSection>,
}

impl FileConfig {
    pub fn from_toml(text: &str) -> Result<FileConfig, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config { key: "<file>".into(), msg: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<FileConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), msg: e.to_string() })?;
        FileConfig::from_toml(&text)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    LatticeInfo,
    Sweep,
    Point,
    NegativityScan,
    OracleCheck,
    Kitaev,
    Fit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutSpec {
    /// Two cylinders, cut parallel to a lattice vector.
    Half,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KitaevParams {
    pub betas: Vec<f64>,
    pub sweeps: usize,
    pub burn_in: usize,
    pub antiperiodic: bool,
}

/// Fully resolved and validated configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(rename = "L")]
    pub sizes: Vec<usize>,
    /// Circuit depth; `None` means `r = L` for every size.
    pub r: Option<usize>,
    /// Measurement strengths in units of π.
    pub t: Vec<f64>,
    pub comb: CombConfig,
    pub estimators: Vec<String>,
    pub cut: CutSpec,
    pub out: PathBuf,
    pub checkpoint_every: usize,
    pub resume: bool,
    pub threads: Option<usize>,
    pub kitaev: KitaevParams,
    pub fit_kind: Option<String>,
    pub fit_inputs: Vec<PathBuf>,
    /// Keys whose value came from a command-line flag.
    pub overrides: Vec<String>,
}

pub fn default_kitaev_betas() -> Vec<f64> {
    // temperatures 10^(-2 + 3k/15), k = 0..15, hottest first
    (0..16).rev().map(|k| 10f64.powf(2.0 - 3.0 * k as f64 / 15.0)).collect()
}

fn err(key: &str, msg: impl Into<String>) -> CliError {
    CliError::Config { key: key.into(), msg: msg.into() }
}

impl RunConfig {
    pub fn depth(&self, l: usize) -> usize {
        self.r.unwrap_or(l)
    }

    /// Merges file values and flags (flags win), fills defaults, validates.
    pub fn resolve(mode: Mode, file: FileConfig, args: &CommonArgs) -> Result<RunConfig, CliError> {
        let mut overrides = Vec::new();
        let mut pick = |key: &str, flag_set: bool| {
            if flag_set {
                overrides.push(key.to_string());
            }
        };
        pick("L", args.l.is_some());
        pick("r", args.r.is_some());
        pick("t", args.t.is_some());
        pick("t_grid", args.t_grid.is_some());
        pick("seed", args.seed.is_some());
        pick("chains", args.chains.is_some());
        pick("comb.outer_sweeps", args.outer_sweeps.is_some());
        pick("comb.burn_in", args.burn_in.is_some());
        pick("comb.branch_interval", args.branch_interval.is_some());
        pick("comb.inner_sweeps", args.inner_sweeps.is_some());
        pick("out", args.out.is_some());
        pick("checkpoint_every", args.checkpoint_every.is_some());
        pick("cache", args.no_cache);
        pick("threads", args.threads.is_some());

        let sizes = match (&args.l, file.l) {
            (Some(v), _) => v.clone(),
            (None, Some(v)) => v.into_vec(),
            (None, None) => Vec::new(),
        };
        let r = args.r.or(file.r);
        let grid = match &args.t_grid {
            Some(s) => Some(Grid::parse(s)?),
            None if args.t.is_some() => None,
            None => file.t_grid,
        };
        let t = match (&args.t, grid, file.t) {
            (Some(v), _, _) => v.clone(),
            (None, Some(g), _) => g.points(),
            (None, None, Some(v)) => v.into_vec(),
            (None, None, None) => Vec::new(),
        };
        let comb_file = file.comb.unwrap_or_default();
        let defaults = CombConfig::default();
        let comb = CombConfig {
            outer_sweeps: args.outer_sweeps.or(comb_file.outer_sweeps).unwrap_or(defaults.outer_sweeps),
            burn_in: args.burn_in.or(comb_file.burn_in).unwrap_or(defaults.burn_in),
            branch_interval: args.branch_interval.or(comb_file.branch_interval).unwrap_or(defaults.branch_interval),
            inner_sweeps: args.inner_sweeps.or(comb_file.inner_sweeps).unwrap_or(defaults.inner_sweeps),
            chains: args.chains.or(file.chains).unwrap_or(defaults.chains),
            seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
            cached: !args.no_cache && file.cache.unwrap_or(true),
        };
        let estimators = file.estimators.unwrap_or_else(|| ESTIMATORS.iter().map(|e| e.0.to_string()).collect());
        let cut = match file.cut.as_deref() {
            None | Some("half") => CutSpec::Half,
            Some(other) => return Err(err("cut", format!("unknown cut {other:?}; expected \"half\""))),
        };
        let kit = file.kitaev.unwrap_or_default();
        let kitaev = KitaevParams {
            betas: kit.betas.unwrap_or_else(default_kitaev_betas),
            sweeps: kit.sweeps.unwrap_or(2000),
            burn_in: kit.burn_in.unwrap_or(200),
            antiperiodic: match kit.boundary.as_deref() {
                None | Some("antiperiodic") => true,
                Some("periodic") => false,
                Some(other) => return Err(err("kitaev.boundary", format!("unknown boundary {other:?}"))),
            },
        };
        let fit = file.fit.unwrap_or_default();
        let threads = match args.threads.or(file.threads) {
            Some(n) => Some(n),
            None => match std::env::var(THREADS_ENV) {
                Ok(v) => Some(v.trim().parse().map_err(|_| err(THREADS_ENV, format!("not a count: {v:?}")))?),
                Err(_) => None,
            },
        };
        let cfg = RunConfig {
            mode,
            sizes,
            r,
            t,
            comb,
            estimators,
            cut,
            out: args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("out")),
            checkpoint_every: args.checkpoint_every.or(file.checkpoint_every).unwrap_or(0),
            resume: args.resume,
            threads,
            kitaev,
            fit_kind: fit.kind,
            fit_inputs: fit.inputs.unwrap_or_default(),
            overrides,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for &l in &self.sizes {
            let lattice = Lattice::new(l).map_err(|e| err("L", e.to_string()))?;
            if matches!(self.mode, Mode::Sweep | Mode::Point | Mode::NegativityScan) {
                Circuit::floquet(&lattice, self.depth(l)).map_err(|e| err("r", e.to_string()))?;
            }
        }
        for &t in &self.t {
            if !(0.0..=0.25).contains(&t) {
                return Err(err("t", format!("{t} outside [0, 0.25] (units of π)")));
            }
        }
        if self.threads == Some(0) {
            return Err(err("threads", "must be at least 1"));
        }
        for name in &self.estimators {
            if !ESTIMATORS.iter().any(|e| e.0 == name) {
                return Err(err("estimators", format!("unknown estimator {name:?}")));
            }
        }
        let needs_points = matches!(self.mode, Mode::Sweep | Mode::Point | Mode::NegativityScan);
        if needs_points {
            self.comb.validate().map_err(|e| err("comb", e.to_string()))?;
            if self.sizes.is_empty() {
                return Err(err("L", "at least one size is required"));
            }
            if self.t.is_empty() {
                return Err(err("t", "at least one measurement strength is required"));
            }
        }
        match self.mode {
            Mode::Point if self.sizes.len() != 1 || self.t.len() != 1 => {
                Err(err("t", "point takes exactly one L and one t"))
            }
            Mode::LatticeInfo | Mode::Kitaev if self.sizes.is_empty() => Err(err("L", "at least one size is required")),
            Mode::Kitaev if self.kitaev.burn_in >= self.kitaev.sweeps => {
                Err(err("kitaev.burn_in", "must be below kitaev.sweeps"))
            }
            Mode::Kitaev if self.kitaev.betas.iter().any(|b| !(*b >= 0.0)) => {
                Err(err("kitaev.betas", "inverse temperatures must be non-negative"))
            }
            _ => Ok(()),
        }
    }
}
