//! Field dumps and step report tables.
//!
//! A field dump is one ASCII header line `EFLD1 <nx> <ny> <lx> <ly> 3`
//! followed by the payload: the density, then the two momentum components,
//! each as `nx * ny` little-endian `f64` in row-major cell order.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::fields::{FieldError, FieldSet};
use crate::grid::{Grid, GridError};
use crate::montecarlo::fmt_f64;
use crate::scheme::StepReport;

pub const FIELD_MAGIC: &str = "EFLD1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed field file: {0}")]
    Format(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

pub fn write_field(mut w: impl Write, state: &FieldSet) -> Result<(), IoError> {
    let g = state.grid();
    // `{}` on f64 prints the shortest string that parses back exactly
    writeln!(w, "{FIELD_MAGIC} {} {} {} {} 3", g.nx(), g.ny(), g.lx(), g.ly())?;
    let mut buf = Vec::with_capacity(3 * 8 * g.n_cells());
    for var in state.variables() {
        for v in var {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_field(r: impl Read) -> Result<FieldSet, IoError> {
    let mut r = BufReader::new(r);
    let mut header = Vec::new();
    r.read_until(b'\n', &mut header)?;
    let header = String::from_utf8(header).map_err(|_| IoError::Format("header is not text".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 6 || parts[0] != FIELD_MAGIC {
        return Err(IoError::Format(format!("bad header {:?}", header.trim_end())));
    }
    let bad = |what: &str| IoError::Format(format!("bad {what} in header"));
    let nx: usize = parts[1].parse().map_err(|_| bad("nx"))?;
    let ny: usize = parts[2].parse().map_err(|_| bad("ny"))?;
    let lx: f64 = parts[3].parse().map_err(|_| bad("lx"))?;
    let ly: f64 = parts[4].parse().map_err(|_| bad("ly"))?;
    if parts[5] != "3" {
        return Err(IoError::Format(format!("expected 3 variables, got {}", parts[5])));
    }
    let grid = Grid::new(nx, ny, lx, ly)?;
    let n = grid.n_cells();
    let mut payload = Vec::with_capacity(3 * 8 * n);
    r.read_to_end(&mut payload)?;
    if payload.len() != 3 * 8 * n {
        return Err(IoError::Format(format!("expected {} payload bytes, got {}", 3 * 8 * n, payload.len())));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let rho = values[..n].to_vec();
    let mom = (0..n).map(|k| [values[n + k], values[2 * n + k]]).collect();
    Ok(FieldSet::new(grid, rho, mom)?)
}

pub fn save_field(path: impl AsRef<Path>, state: &FieldSet) -> Result<(), IoError> {
    let mut buf = Vec::new();
    write_field(&mut buf, state)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_field(path: impl AsRef<Path>) -> Result<FieldSet, IoError> {
    read_field(fs::File::open(path)?)
}

/// Columns `step,t,picard_iters,residual,mass_drift,energy`.
pub fn step_reports_csv(reports: &[StepReport]) -> String {
    let mut out = String::from("step,t,picard_iters,residual,mass_drift,energy\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.step,
            fmt_f64(r.t),
            r.picard_iters,
            fmt_f64(r.residual),
            fmt_f64(r.mass_drift),
            fmt_f64(r.energy)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_state() -> FieldSet {
        let grid = Grid::new(4, 2, 2.0, 1.0).unwrap();
        let rho = (0..8).map(|k| 1.0 + k as f64 / 3.0).collect();
        let mom = (0..8).map(|k| [k as f64 * 0.1, -(k as f64) * 1e-17]).collect();
        FieldSet::new(grid, rho, mom).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let s = sample_state();
        let mut buf = Vec::new();
        write_field(&mut buf, &s).unwrap();
        assert!(buf.starts_with(b"EFLD1 4 2 2 1 3\n"));
        assert_eq!(buf.len(), 16 + 3 * 8 * 8);
        assert_eq!(read_field(&buf[..]).unwrap(), s);
    }

    #[test]
    fn payload_layout() {
        let s = sample_state();
        let mut buf = Vec::new();
        write_field(&mut buf, &s).unwrap();
        let payload = &buf[16..];
        let at = |i: usize| f64::from_le_bytes(payload[8 * i..8 * i + 8].try_into().unwrap());
        assert_eq!(at(0), s.rho()[0]);
        assert_eq!(at(7), s.rho()[7]);
        assert_eq!(at(8 + 5), s.mom()[5][0]);
        assert_eq!(at(16 + 3), s.mom()[3][1]);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let s = sample_state();
        let mut buf = Vec::new();
        write_field(&mut buf, &s).unwrap();
        assert!(read_field(&buf[..buf.len() - 1]).is_err());
        let mut wrong = buf.clone();
        wrong[4] = b'2';
        assert!(read_field(&wrong[..]).is_err());
        assert!(read_field(&b"EFLD1 4 2 2 1 2\n"[..]).is_err());
        assert!(read_field(&b"EFLD1 4 x 2 1 3\n"[..]).is_err());
    }

    #[test]
    fn step_csv_layout() {
        let r = StepReport {
            step: 1,
            t: 0.5,
            dt: 0.5,
            picard_iters: 7,
            residual: 1e-13,
            linear_iters: 20,
            mass_drift: 0.0,
            energy: 2.5,
            energy_change: 0.0,
        };
        let csv = step_reports_csv(&[r]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("step,t,picard_iters,residual,mass_drift,energy"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "1");
        assert_eq!(row[2], "7");
        assert_eq!(row[5].parse::<f64>().unwrap(), 2.5);
    }
}
