//! Run configuration: a sectioned `key = value` text format.
//!
//! ```text
//! # comment
//! [run]
//! experiment = mc-e1
//! workers = 4
//!
//! [scheme]
//! alpha = 0.8
//! dt = 0.5h        # 0.5 * h; a plain number is a fixed step
//! ```
//!
//! Every key has a default, so an empty document is a valid configuration.
//! Lists are comma separated; total-error pairs are written `cells:N`.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::analysis::MeshLadder;
use crate::fields::{GasParams, KhDataSpec};
use crate::grid::Grid;
use crate::montecarlo::SamplePlan;
use crate::scheme::{validate_params, Admissibility, SchemeParams, TimeStep};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{}: {key}: {message}", location(*.line))]
pub struct ConfigError {
    /// 1-based line of the offending entry; 0 when it did not come from the
    /// document (defaults or command-line overrides).
    pub line: usize,
    pub key: String,
    pub message: String,
}

fn location(line: usize) -> String {
    if line == 0 {
        "override or default".to_string()
    } else {
        format!("line {line}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Solve,
    McE1,
    McE2,
    TotalError,
    Consistency,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Solve => "solve",
            Experiment::McE1 => "mc-e1",
            Experiment::McE2 => "mc-e2",
            Experiment::TotalError => "total-error",
            Experiment::Consistency => "consistency",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "solve" => Experiment::Solve,
            "mc-e1" => Experiment::McE1,
            "mc-e2" => Experiment::McE2,
            "total-error" => Experiment::TotalError,
            "consistency" => Experiment::Consistency,
            _ => return Err(format!("unknown experiment {s:?}")),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialData {
    /// Kelvin-Helmholtz sample `sample_id` of the master seed.
    Kh { sample_id: u64 },
    Uniform { rho: f64, u: [f64; 2] },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloConfig {
    pub seed: u64,
    pub counts: Vec<usize>,
    pub repetitions: usize,
    pub n_ref: usize,
    /// Cells per axis of each mesh in the Cesàro ladder.
    pub ladder: Vec<usize>,
    /// `(cells per axis, N)` for total-error studies, coarse to fine.
    pub pairs: Vec<(usize, usize)>,
    /// Cells per axis of the total-error reference mesh.
    pub reference_cells: usize,
    pub cesaro: bool,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        let plan = SamplePlan::default();
        Self {
            seed: plan.master_seed,
            counts: plan.sample_counts,
            repetitions: plan.repetitions,
            n_ref: plan.n_ref,
            ladder: vec![16, 32, 64],
            pairs: vec![(32, 5), (64, 10), (128, 20)],
            reference_cells: 256,
            cesaro: false,
        }
    }
}

/// Test functions of the consistency experiment: the density test function
/// is `chi(t) sin(2 pi (kx x1 + ky x2) / side + 0.3)`, the momentum one has
/// components `chi(t) sin(2 pi (kx x1 + ky x2) / side + 1.1)` and
/// `chi(t) sin(2 pi (kx x1 + ky x2) / side + 1.9)`, with
/// `chi(t) = (1 - t/horizon)^3`. The default modes `(0, 1)` vary across the
/// shear layer; modes with `kx != 0` integrate to zero against the
/// unperturbed band data.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyConfig {
    /// Cells per axis of each refinement level.
    pub levels: Vec<usize>,
    pub modes: [i32; 2],
    /// Time support of the test functions; 0 means `t_final`.
    pub horizon: f64,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self { levels: vec![32, 64, 128], modes: [0, 1], horizon: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub out: PathBuf,
    pub workers: usize,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub gas: GasParams,
    pub scheme: SchemeParams,
    pub kh: KhDataSpec,
    pub initial: InitialData,
    /// Snapshot times of the solve experiment; the final time is always kept.
    pub snapshots: Vec<f64>,
    pub mc: MonteCarloConfig,
    pub consistency: ConsistencyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Solve,
            out: PathBuf::from("out"),
            workers: 1,
            nx: 64,
            ny: 64,
            lx: 1.0,
            ly: 1.0,
            gas: GasParams::default(),
            scheme: SchemeParams::default(),
            kh: KhDataSpec::default(),
            initial: InitialData::Kh { sample_id: 0 },
            snapshots: Vec::new(),
            mc: MonteCarloConfig::default(),
            consistency: ConsistencyConfig::default(),
        }
    }
}

fn parse<T: FromStr>(value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse {value:?} as {}", std::any::type_name::<T>()))
}

fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>, String> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(v.trim())).collect()
}

fn parse_pairs(value: &str) -> Result<Vec<(usize, usize)>, String> {
    value
        .split(',')
        .map(|p| {
            let (a, b) = p.trim().split_once(':').ok_or_else(|| format!("expected cells:N, got {p:?}"))?;
            Ok((parse(a.trim())?, parse(b.trim())?))
        })
        .collect()
}

fn parse_time_step(value: &str) -> Result<TimeStep, String> {
    match value.strip_suffix('h') {
        Some(r) => Ok(TimeStep::MeshRatio(parse(r.trim())?)),
        None => Ok(TimeStep::Fixed(parse(value)?)),
    }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Sets one `section.key`; the error message does not include the location.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match (section, key) {
            ("run", "experiment") => self.experiment = v.parse()?,
            ("run", "out") => self.out = PathBuf::from(v),
            ("run", "workers") => self.workers = parse(v)?,
            ("grid", "nx") => self.nx = parse(v)?,
            ("grid", "ny") => self.ny = parse(v)?,
            ("grid", "lx") => self.lx = parse(v)?,
            ("grid", "ly") => self.ly = parse(v)?,
            ("gas", "gamma") => self.gas.gamma = parse(v)?,
            ("gas", "a") => self.gas.a = parse(v)?,
            ("scheme", "alpha") => self.scheme.alpha = parse(v)?,
            ("scheme", "eps_flux") => self.scheme.eps_flux = parse(v)?,
            ("scheme", "dt") => self.scheme.time_step = parse_time_step(v)?,
            ("scheme", "t_final") => self.scheme.t_final = parse(v)?,
            ("scheme", "picard_tol") => self.scheme.picard_tol = parse(v)?,
            ("scheme", "picard_max") => self.scheme.picard_max = parse(v)?,
            ("scheme", "linear_tol") => self.scheme.linear_tol = parse(v)?,
            ("scheme", "linear_max") => self.scheme.linear_max = parse(v)?,
            ("scheme", "max_halvings") => self.scheme.max_halvings = parse(v)?,
            ("kh", "j1") => self.kh.j1 = parse(v)?,
            ("kh", "j2") => self.kh.j2 = parse(v)?,
            ("kh", "eps_perturb") => self.kh.eps_perturb = parse(v)?,
            ("kh", "modes") => self.kh.n_modes = parse(v)?,
            ("kh", "rho_in") => self.kh.inner[0] = parse(v)?,
            ("kh", "u1_in") => self.kh.inner[1] = parse(v)?,
            ("kh", "u2_in") => self.kh.inner[2] = parse(v)?,
            ("kh", "rho_out") => self.kh.outer[0] = parse(v)?,
            ("kh", "u1_out") => self.kh.outer[1] = parse(v)?,
            ("kh", "u2_out") => self.kh.outer[2] = parse(v)?,
            ("initial", "kind") => {
                self.initial = match v {
                    "kh" => InitialData::Kh { sample_id: 0 },
                    "uniform" => InitialData::Uniform { rho: 1.0, u: [0.0, 0.0] },
                    _ => return Err(format!("unknown initial data {v:?}, expected kh or uniform")),
                }
            }
            ("initial", "sample_id") => match &mut self.initial {
                InitialData::Kh { sample_id } => *sample_id = parse(v)?,
                _ => return Err("sample_id needs kind = kh".into()),
            },
            ("initial", "rho" | "u1" | "u2") => match &mut self.initial {
                InitialData::Uniform { rho, u } => {
                    let x: f64 = parse(v)?;
                    match key {
                        "rho" => *rho = x,
                        "u1" => u[0] = x,
                        _ => u[1] = x,
                    }
                }
                _ => return Err(format!("{key} needs kind = uniform")),
            },
            ("output", "snapshots") => self.snapshots = parse_list(v)?,
            ("mc", "seed") => self.mc.seed = parse(v)?,
            ("mc", "counts") => self.mc.counts = parse_list(v)?,
            ("mc", "repetitions") => self.mc.repetitions = parse(v)?,
            ("mc", "n_ref") => self.mc.n_ref = parse(v)?,
            ("mc", "ladder") => self.mc.ladder = parse_list(v)?,
            ("mc", "pairs") => self.mc.pairs = parse_pairs(v)?,
            ("mc", "reference_cells") => self.mc.reference_cells = parse(v)?,
            ("mc", "cesaro") => self.mc.cesaro = parse(v)?,
            ("consistency", "levels") => self.consistency.levels = parse_list(v)?,
            ("consistency", "modes") => {
                let m: Vec<i32> = parse_list(v)?;
                self.consistency.modes = m.try_into().map_err(|_| "expected two mode numbers".to_string())?;
            }
            ("consistency", "horizon") => self.consistency.horizon = parse(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, String> {
        Grid::new(self.nx, self.ny, self.lx, self.ly).map_err(|e| e.to_string())
    }

    /// Square grid with `cells` per axis on the configured box width.
    pub fn grid_with(&self, cells: usize) -> Result<Grid, String> {
        let ny = (cells as f64 * self.ly / self.lx).round() as usize;
        Grid::new(cells, ny, self.lx, self.ly).map_err(|e| e.to_string())
    }

    pub fn ladder(&self) -> Result<MeshLadder, String> {
        let grids = self.mc.ladder.iter().map(|n| self.grid_with(*n)).collect::<Result<Vec<_>, _>>()?;
        MeshLadder::new(grids).map_err(|e| e.to_string())
    }

    pub fn plan(&self) -> SamplePlan {
        SamplePlan {
            master_seed: self.mc.seed,
            sample_counts: self.mc.counts.clone(),
            repetitions: self.mc.repetitions,
            n_ref: self.mc.n_ref,
            kh: self.kh,
            gas: self.gas,
            scheme: self.scheme,
            workers: self.workers,
            eval_base: None,
            allow_reference_reuse: false,
        }
    }

    /// Checks the invariants of everything the experiment uses; the error
    /// names the responsible key.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let err = |key: &str, msg: String| Err((key.to_string(), msg));
        let grid = match self.grid() {
            Ok(g) => g,
            Err(e) => return err("grid.nx", e),
        };
        if let Err(e) = self.gas.validate() {
            return err("gas.gamma", e.to_string());
        }
        if let Admissibility::Rejected(v) = validate_params(&self.gas, &self.scheme, 2) {
            let key = match v {
                crate::scheme::Violation::EpsTooSmall { .. } => "scheme.eps_flux",
                _ => "scheme.alpha",
            };
            return err(key, v.to_string());
        }
        if let Err(e) = self.scheme.check(&self.gas, &grid) {
            return err("scheme.t_final", e.to_string());
        }
        if let Err(e) = self.kh.validate() {
            return err("kh.j1", e.to_string());
        }
        if let InitialData::Uniform { rho, .. } = self.initial {
            if !(rho > 0.0) {
                return err("initial.rho", format!("density must be positive, got {rho}"));
            }
        }
        if let Some(t) = self.snapshots.iter().find(|t| !(**t >= 0.0 && **t <= self.scheme.t_final)) {
            return err("output.snapshots", format!("time {t} outside [0, t_final]"));
        }
        if self.workers < 1 {
            return err("run.workers", "need at least one worker".into());
        }
        let monte_carlo = matches!(self.experiment, Experiment::McE1 | Experiment::McE2 | Experiment::TotalError);
        if monte_carlo {
            if let Err(e) = self.plan().validate() {
                let key = if self.mc.n_ref < self.mc.counts.iter().copied().max().unwrap_or(0) {
                    "mc.n_ref"
                } else if self.mc.repetitions == 0 {
                    "mc.repetitions"
                } else {
                    "mc.counts"
                };
                return err(key, e.to_string());
            }
        }
        if self.experiment == Experiment::McE2 {
            if let Err(e) = self.ladder() {
                return err("mc.ladder", e);
            }
        }
        if self.experiment == Experiment::TotalError {
            if self.mc.pairs.is_empty() {
                return err("mc.pairs", "no pairs".into());
            }
            for (cells, n) in &self.mc.pairs {
                if let Err(e) = self.grid_with(*cells) {
                    return err("mc.pairs", e);
                }
                if *n < 1 || *n > self.mc.n_ref {
                    return err("mc.pairs", format!("sample count {n} outside [1, n_ref]"));
                }
            }
            if self.mc.pairs.windows(2).any(|w| w[0].0 >= w[1].0) {
                return err("mc.pairs", "pairs must go from coarse to fine".into());
            }
            let finest_pair = self.mc.pairs.iter().map(|p| p.0).max().unwrap_or(0);
            if self.mc.reference_cells < finest_pair || self.grid_with(self.mc.reference_cells).is_err() {
                return err("mc.reference_cells", "reference mesh must be at least as fine as every pair".into());
            }
        }
        if self.experiment == Experiment::Consistency {
            if self.consistency.levels.is_empty() {
                return err("consistency.levels", "no levels".into());
            }
            for n in &self.consistency.levels {
                if let Err(e) = self.grid_with(*n) {
                    return err("consistency.levels", e);
                }
            }
            if !(self.consistency.horizon >= 0.0) {
                return err("consistency.horizon", "must be non-negative".into());
            }
        }
        Ok(())
    }

    /// Writes every key, so that the document alone reproduces the run.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let sp = &self.scheme;
        let dt = match sp.time_step {
            TimeStep::MeshRatio(r) => format!("{r}h"),
            TimeStep::Fixed(dt) => format!("{dt}"),
        };
        let _ = writeln!(s, "[run]\nexperiment = {}\nout = {}\nworkers = {}\n", self.experiment.name(), self.out.display(), self.workers);
        let _ = writeln!(s, "[grid]\nnx = {}\nny = {}\nlx = {}\nly = {}\n", self.nx, self.ny, self.lx, self.ly);
        let _ = writeln!(s, "[gas]\ngamma = {}\na = {}\n", self.gas.gamma, self.gas.a);
        let _ = writeln!(
            s,
            "[scheme]\nalpha = {}\neps_flux = {}\ndt = {dt}\nt_final = {}\npicard_tol = {}\npicard_max = {}\nlinear_tol = {}\nlinear_max = {}\nmax_halvings = {}\n",
            sp.alpha, sp.eps_flux, sp.t_final, sp.picard_tol, sp.picard_max, sp.linear_tol, sp.linear_max, sp.max_halvings
        );
        let kh = &self.kh;
        let _ = writeln!(
            s,
            "[kh]\nj1 = {}\nj2 = {}\neps_perturb = {}\nmodes = {}\nrho_in = {}\nu1_in = {}\nu2_in = {}\nrho_out = {}\nu1_out = {}\nu2_out = {}\n",
            kh.j1, kh.j2, kh.eps_perturb, kh.n_modes, kh.inner[0], kh.inner[1], kh.inner[2], kh.outer[0], kh.outer[1], kh.outer[2]
        );
        match self.initial {
            InitialData::Kh { sample_id } => {
                let _ = writeln!(s, "[initial]\nkind = kh\nsample_id = {sample_id}\n");
            }
            InitialData::Uniform { rho, u } => {
                let _ = writeln!(s, "[initial]\nkind = uniform\nrho = {rho}\nu1 = {}\nu2 = {}\n", u[0], u[1]);
            }
        }
        let _ = writeln!(s, "[output]\nsnapshots = {}\n", join(&self.snapshots));
        let mc = &self.mc;
        let pairs: Vec<String> = mc.pairs.iter().map(|(c, n)| format!("{c}:{n}")).collect();
        let _ = writeln!(
            s,
            "[mc]\nseed = {}\ncounts = {}\nrepetitions = {}\nn_ref = {}\nladder = {}\npairs = {}\nreference_cells = {}\ncesaro = {}\n",
            mc.seed,
            join(&mc.counts),
            mc.repetitions,
            mc.n_ref,
            join(&mc.ladder),
            pairs.join(","),
            mc.reference_cells,
            mc.cesaro
        );
        let c = &self.consistency;
        let _ = writeln!(
            s,
            "[consistency]\nlevels = {}\nmodes = {}\nhorizon = {}",
            join(&c.levels),
            join(&c.modes),
            c.horizon
        );
        s
    }
}

/// Parses a document and applies `section.key=value` overrides on top, then
/// validates the result.
pub fn parse_config_with(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut lines: HashMap<String, usize> = HashMap::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError { line: line_no, key: line.to_string(), message: "expected key = value".into() });
        };
        let key = key.trim();
        let full = format!("{section}.{key}");
        if section.is_empty() {
            return Err(ConfigError { line: line_no, key: full, message: "key outside of a section".into() });
        }
        cfg.set(&section, key, value)
            .map_err(|message| ConfigError { line: line_no, key: full.clone(), message })?;
        lines.insert(full, line_no);
    }
    for o in overrides {
        let (full, value) = o
            .split_once('=')
            .ok_or_else(|| ConfigError { line: 0, key: o.clone(), message: "expected section.key=value".into() })?;
        let (section, key) = full
            .split_once('.')
            .ok_or_else(|| ConfigError { line: 0, key: full.into(), message: "expected section.key=value".into() })?;
        cfg.set(section, key, value)
            .map_err(|message| ConfigError { line: 0, key: full.into(), message })?;
        lines.insert(full.to_string(), 0);
    }
    cfg.validate().map_err(|(key, message)| ConfigError {
        line: lines.get(&key).copied().unwrap_or(0),
        key,
        message,
    })?;
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_with(text, &[])
}
