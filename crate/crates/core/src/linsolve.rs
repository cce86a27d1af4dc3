//! Periodic five-point operators and a Jacobi-preconditioned BiCGStab.
//!
//! All loops run in a fixed order, so results are bit-reproducible.

use thiserror::Error;

use crate::grid::Grid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearSolveError {
    #[error("BiCGStab did not reach relative residual {tol:e} in {iterations} iterations (got {residual:e})")]
    NotConverged { iterations: usize, residual: f64, tol: f64 },
    #[error("zero on the diagonal at row {0}")]
    SingularDiagonal(usize),
}

/// `(A x)_K = diag_K x_K + east_K x_E + west_K x_W + north_K x_N + south_K x_S`
/// with periodic neighbours.
#[derive(Clone, Debug)]
pub struct FivePoint {
    nx: usize,
    ny: usize,
    pub diag: Vec<f64>,
    pub east: Vec<f64>,
    pub west: Vec<f64>,
    pub north: Vec<f64>,
    pub south: Vec<f64>,
}

impl FivePoint {
    pub fn identity(grid: &Grid) -> Self {
        let n = grid.n_cells();
        Self {
            nx: grid.nx(),
            ny: grid.ny(),
            diag: vec![1.0; n],
            east: vec![0.0; n],
            west: vec![0.0; n],
            north: vec![0.0; n],
            south: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        for j in 0..ny {
            let row = j * nx;
            let up = if j + 1 == ny { 0 } else { row + nx };
            let down = if j == 0 { (ny - 1) * nx } else { row - nx };
            for i in 0..nx {
                let k = row + i;
                let e = if i + 1 == nx { row } else { k + 1 };
                let w = if i == 0 { row + nx - 1 } else { k - 1 };
                y[k] = self.diag[k] * x[k]
                    + self.east[k] * x[e]
                    + self.west[k] * x[w]
                    + self.north[k] * x[up + i]
                    + self.south[k] * x[down + i];
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Scratch vectors for [`bicgstab_forced`], reusable across solves.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    inv_diag: Vec<f64>,
    r: Vec<f64>,
    r_hat: Vec<f64>,
    p: Vec<f64>,
    v: Vec<f64>,
    p_hat: Vec<f64>,
    s: Vec<f64>,
    s_hat: Vec<f64>,
    t: Vec<f64>,
}

impl Workspace {
    fn resize(&mut self, n: usize) {
        for v in [
            &mut self.inv_diag,
            &mut self.r,
            &mut self.r_hat,
            &mut self.p,
            &mut self.v,
            &mut self.p_hat,
            &mut self.s,
            &mut self.s_hat,
            &mut self.t,
        ] {
            v.clear();
            v.resize(n, 0.0);
        }
    }
}

/// Solves `A x = b` to `||b - A x||_2 <= tol ||b||_2`, starting from the
/// value already in `x`.
pub fn bicgstab(
    op: &FivePoint,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<LinearStats, LinearSolveError> {
    bicgstab_forced(op, b, x, tol, 0.0, max_iter, &mut Workspace::default())
}

/// Like [`bicgstab`], but also stops once the residual has dropped by the
/// factor `reduction` relative to the initial one.
pub fn bicgstab_forced(
    op: &FivePoint,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    reduction: f64,
    max_iter: usize,
    ws: &mut Workspace,
) -> Result<LinearStats, LinearSolveError> {
    let n = op.len();
    ws.resize(n);
    let Workspace { inv_diag, r, r_hat, p, v, p_hat, s, s_hat, t } = ws;
    for (k, (inv, d)) in inv_diag.iter_mut().zip(&op.diag).enumerate() {
        if *d == 0.0 {
            return Err(LinearSolveError::SingularDiagonal(k));
        }
        *inv = 1.0 / d;
    }

    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(LinearStats { iterations: 0, relative_residual: 0.0 });
    }
    op.apply(x, r);
    let mut rr = 0.0;
    for k in 0..n {
        r[k] = b[k] - r[k];
        rr += r[k] * r[k];
    }
    let mut r_norm = rr.sqrt();
    let target = (tol * b_norm).max(reduction * r_norm);
    let tol = target / b_norm;
    if r_norm <= target {
        return Ok(LinearStats { iterations: 0, relative_residual: r_norm / b_norm });
    }

    r_hat.copy_from_slice(r);
    let (mut rho_prev, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut rho = rr;

    for iter in 1..=max_iter {
        if rho == 0.0 || omega == 0.0 {
            // breakdown: restart from the current residual
            r_hat.copy_from_slice(r);
            p.iter_mut().for_each(|v| *v = 0.0);
            v.iter_mut().for_each(|v| *v = 0.0);
            rho = dot(r_hat, r);
            rho_prev = 1.0;
            alpha = 1.0;
            omega = 1.0;
        }
        let beta = (rho / rho_prev) * (alpha / omega);
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
            p_hat[k] = p[k] * inv_diag[k];
        }
        op.apply(p_hat, v);
        alpha = rho / dot(r_hat, v);
        let mut ss = 0.0;
        for k in 0..n {
            s[k] = r[k] - alpha * v[k];
            ss += s[k] * s[k];
            s_hat[k] = s[k] * inv_diag[k];
        }
        if ss.sqrt() <= target {
            for k in 0..n {
                x[k] += alpha * p_hat[k];
            }
            return finish(op, b, x, b_norm, iter, tol, t);
        }
        op.apply(s_hat, t);
        let (mut tt, mut ts) = (0.0, 0.0);
        for k in 0..n {
            tt += t[k] * t[k];
            ts += t[k] * s[k];
        }
        omega = if tt == 0.0 { 0.0 } else { ts / tt };
        let (mut rr, mut rh) = (0.0, 0.0);
        for k in 0..n {
            x[k] += alpha * p_hat[k] + omega * s_hat[k];
            r[k] = s[k] - omega * t[k];
            rr += r[k] * r[k];
            rh += r_hat[k] * r[k];
        }
        r_norm = rr.sqrt();
        if r_norm <= target {
            return finish(op, b, x, b_norm, iter, tol, t);
        }
        rho_prev = rho;
        rho = rh;
    }
    Err(LinearSolveError::NotConverged { iterations: max_iter, residual: r_norm / b_norm, tol })
}

// The recursive residual drifts from the true one; confirm before returning.
fn finish(
    op: &FivePoint,
    b: &[f64],
    x: &[f64],
    b_norm: f64,
    iterations: usize,
    tol: f64,
    scratch: &mut [f64],
) -> Result<LinearStats, LinearSolveError> {
    op.apply(x, scratch);
    let res = scratch.iter().zip(b).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt() / b_norm;
    if res <= 10.0 * tol {
        Ok(LinearStats { iterations, relative_residual: res })
    } else {
        Err(LinearSolveError::NotConverged { iterations, residual: res, tol })
    }
}
