//! Experiment drivers behind the command line.
//!
//! Every run writes its artifacts plus `config.ini` (the fully expanded
//! configuration) and `manifest.json` (seed, configuration hash, versions and
//! artifact list) into the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{consistency_residuals, dual_sobolev_norm, lq_norm, AnalysisError, ComponentWise, CutoffWave};
use crate::config::{ConfigError, Experiment, InitialData, RunConfig};
use crate::fields::{FieldError, FieldSet};
use crate::io::{load_field, save_field, step_reports_csv, IoError, FIELD_MAGIC};
use crate::montecarlo::{fmt_f64, sample_initial, ErrorTable, PlanError, Study};
use crate::scheme::{solve, solve_recording, SchemeError};

pub const TABLE_FORMAT: &str = "vfv-error-table-1";
pub const STEP_FORMAT: &str = "vfv-steps-1";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error at {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("{0}")]
    Setup(String),
}

impl RunError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Plan(_) => "plan",
            RunError::Scheme(_) => "solver",
            RunError::Io(_) => "io",
            RunError::Analysis(_) | RunError::Field(_) => "analysis",
            RunError::Setup(_) => "setup",
        }
    }

    /// JSON error record.
    pub fn record(&self) -> String {
        let value = json!({ "status": "error", "kind": self.kind(), "message": self.to_string() });
        serde_json::to_string_pretty(&value).expect("json") + "\n"
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(IoError::Io(e))
    }
}

/// Files produced by a run, relative to the output directory.
#[derive(Debug, Default)]
pub struct RunSummary {
    pub out: PathBuf,
    pub artifacts: Vec<String>,
}

struct Writer {
    dir: PathBuf,
    artifacts: Vec<String>,
}

impl Writer {
    fn text(&mut self, name: &str, content: &str) -> Result<(), RunError> {
        fs::write(self.dir.join(name), content)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn field(&mut self, name: &str, state: &FieldSet) -> Result<(), RunError> {
        save_field(self.dir.join(name), state)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn table(&mut self, stem: &str, table: &ErrorTable) -> Result<(), RunError> {
        self.text(&format!("{stem}.csv"), &table.to_csv())?;
        self.text(&format!("{stem}_plot.csv"), &table.plot_data())
    }
}

pub fn config_hash(canonical: &str) -> String {
    Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Test functions of the consistency experiment; see
/// [`crate::config::ConsistencyConfig`].
pub fn consistency_test_functions(cfg: &RunConfig) -> (CutoffWave, ComponentWise<CutoffWave>) {
    let c = &cfg.consistency;
    let horizon = if c.horizon > 0.0 { c.horizon } else { cfg.scheme.t_final };
    let sides = [cfg.lx, cfg.ly];
    let [kx, ky] = c.modes;
    let phi = CutoffWave::periodic(horizon, 1.0, [kx, ky], sides, 0.3);
    let phivec = ComponentWise([
        CutoffWave::periodic(horizon, 1.0, [kx, ky], sides, 1.1),
        CutoffWave::periodic(horizon, 1.0, [kx, ky], sides, 1.9),
    ]);
    (phi, phivec)
}

fn initial_state(cfg: &RunConfig, cells: Option<usize>) -> Result<FieldSet, RunError> {
    let grid = match cells {
        Some(n) => cfg.grid_with(n),
        None => cfg.grid(),
    }
    .map_err(RunError::Setup)?;
    Ok(match cfg.initial {
        InitialData::Kh { sample_id } => sample_initial(&cfg.plan(), sample_id, &grid),
        InitialData::Uniform { rho, u } => FieldSet::uniform(grid, rho, u)?,
    })
}

/// Runs the configured experiment and writes its artifacts to `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    fs::create_dir_all(&cfg.out)?;
    let mut w = Writer { dir: cfg.out.clone(), artifacts: Vec::new() };
    let canonical = cfg.serialize();
    w.text("config.ini", &canonical)?;

    match cfg.experiment {
        Experiment::Solve => {
            let initial = initial_state(cfg, None)?;
            let traj = solve(&initial, &cfg.gas, &cfg.scheme, &snapshot_times(cfg))?;
            for (i, (_, state)) in traj.snapshots.iter().enumerate() {
                w.field(&format!("snapshot_{i:03}.efld"), state)?;
            }
            let mut index = String::from("index,t\n");
            for (i, (t, _)) in traj.snapshots.iter().enumerate() {
                let _ = writeln!(index, "{i},{}", fmt_f64(*t));
            }
            w.text("snapshots.csv", &index)?;
            w.text("steps.csv", &step_reports_csv(&traj.reports))?;
        }
        Experiment::McE1 => {
            let grid = cfg.grid().map_err(RunError::Setup)?;
            let study = Study::new(cfg.plan())?.with_cache();
            let reference = study.reference(&grid)?;
            w.table("e1", &study.e1_table(&grid, &reference)?)?;
        }
        Experiment::McE2 => {
            let ladder = cfg.ladder().map_err(RunError::Setup)?;
            let study = Study::new(cfg.plan())?.with_cache();
            let reference = study.cesaro_reference(&ladder)?;
            w.table("e2", &study.e2_table(&ladder, &reference)?)?;
        }
        Experiment::TotalError => {
            let pairs = cfg
                .mc
                .pairs
                .iter()
                .map(|(cells, n)| cfg.grid_with(*cells).map(|g| (g, *n)))
                .collect::<Result<Vec<_>, _>>()
                .map_err(RunError::Setup)?;
            let reference = cfg.grid_with(cfg.mc.reference_cells).map_err(RunError::Setup)?;
            let study = Study::new(cfg.plan())?;
            w.table("total_error", &study.total_error(&pairs, &reference, cfg.mc.cesaro)?)?;
        }
        Experiment::Consistency => {
            let (phi, phivec) = consistency_test_functions(cfg);
            let mut csv = String::from("h,e1,e2,e3\n");
            for &cells in &cfg.consistency.levels {
                let initial = initial_state(cfg, Some(cells))?;
                let traj = solve_recording(&initial, &cfg.gas, &cfg.scheme)?;
                let e = consistency_residuals(&traj.levels, &initial, &cfg.gas, &phi, &phivec)?;
                let h = initial.grid().h();
                let _ = writeln!(csv, "{},{},{},{}", fmt_f64(h), fmt_f64(e.e1), fmt_f64(e.e2), fmt_f64(e.e3));
            }
            w.text("consistency.csv", &csv)?;
        }
    }

    let manifest = json!({
        "status": "ok",
        "tool": "vfv",
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": cfg.experiment.name(),
        "master_seed": cfg.mc.seed,
        "workers": cfg.workers,
        "config_sha256": config_hash(&canonical),
        "config": canonical,
        "formats": { "field": FIELD_MAGIC, "error_table": TABLE_FORMAT, "steps": STEP_FORMAT },
        "artifacts": w.artifacts,
    });
    fs::write(cfg.out.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("json") + "\n")?;
    Ok(RunSummary { out: cfg.out.clone(), artifacts: w.artifacts })
}

fn snapshot_times(cfg: &RunConfig) -> Vec<f64> {
    let mut times = cfg.snapshots.clone();
    times.push(cfg.scheme.t_final);
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

/// `L^q` and dual Sobolev norms of the three variables of a field dump, as CSV
/// rows `norm,param,rho,m1,m2`.
pub fn norms_report(path: &Path, qs: &[f64], ells: &[u32]) -> Result<String, RunError> {
    let state = load_field(path)?;
    let grid = *state.grid();
    let vars = state.variables();
    let mut out = String::from("norm,param,rho,m1,m2\n");
    for &q in qs {
        let _ = write!(out, "lq,{q}");
        for v in &vars {
            let _ = write!(out, ",{}", fmt_f64(lq_norm(&grid, v, q)?));
        }
        out.push('\n');
    }
    for &ell in ells {
        let _ = write!(out, "dual_sobolev,{ell}");
        for v in &vars {
            let _ = write!(out, ",{}", fmt_f64(dual_sobolev_norm(&grid, v, ell)?));
        }
        out.push('\n');
    }
    Ok(out)
}
