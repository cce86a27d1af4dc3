//! Norms, weak-form consistency defects and transfers between nested grids.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::fields::{total_energy, FieldError, FieldSet, GasParams};
use crate::grid::{Grid, GridError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("L^q norm needs q >= 1, got {0}")]
    BadExponent(f64),
    #[error("expected {expected} cell values, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("nothing to average")]
    Empty,
    #[error("trajectory must start at t = 0 and have increasing times")]
    BadTrajectory,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Pointwise magnitude of a cell value: `|v|` for scalars, the Euclidean
/// length for vectors.
pub trait Magnitude: Copy {
    fn magnitude(&self) -> f64;
}

impl Magnitude for f64 {
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Magnitude for [f64; 2] {
    fn magnitude(&self) -> f64 {
        self[0].hypot(self[1])
    }
}

/// `(sum_K |K| |v_K|^q)^(1/q)`.
pub fn lq_norm<V: Magnitude>(grid: &Grid, field: &[V], q: f64) -> Result<f64, AnalysisError> {
    if !(q >= 1.0) {
        return Err(AnalysisError::BadExponent(q));
    }
    check_len(grid, field.len())?;
    let vol = grid.cell_volume();
    let norm = if q == 1.0 {
        vol * field.iter().map(|v| v.magnitude()).sum::<f64>()
    } else {
        (vol * field.iter().map(|v| v.magnitude().powf(q)).sum::<f64>()).powf(1.0 / q)
    };
    Ok(norm)
}

fn check_len(grid: &Grid, len: usize) -> Result<(), AnalysisError> {
    if len == grid.n_cells() {
        Ok(())
    } else {
        Err(AnalysisError::SizeMismatch { expected: grid.n_cells(), got: len })
    }
}

/// Signed frequency of DFT index `k` on `n` points.
fn signed_index(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Discrete `W^{-ell,2}` norm of a cellwise field on the periodic box:
/// `(sum_k (1 + |kappa_k|^2)^(-ell) |f_k|^2)^(1/2)` with `kappa = 2 pi k / side`
/// and DFT coefficients scaled so that `ell = 0` gives the L^2 norm.
pub fn dual_sobolev_norm(grid: &Grid, field: &[f64], ell: u32) -> Result<f64, AnalysisError> {
    check_len(grid, field.len())?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut data: Vec<Complex<f64>> = field.iter().map(|v| Complex::new(*v, 0.0)).collect();

    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_forward(nx);
    for row in data.chunks_mut(nx) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_forward(ny);
    let mut column = vec![Complex::new(0.0, 0.0); ny];
    for i in 0..nx {
        for j in 0..ny {
            column[j] = data[j * nx + i];
        }
        col_fft.process(&mut column);
        for j in 0..ny {
            data[j * nx + i] = column[j];
        }
    }

    // |f_k|^2 = area * |DFT_k / N|^2
    let scale = grid.area() / (grid.n_cells() as f64).powi(2);
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut sum = 0.0;
    for j in 0..ny {
        let ky = two_pi * signed_index(j, ny) / grid.ly();
        for i in 0..nx {
            let kx = two_pi * signed_index(i, nx) / grid.lx();
            let weight = (1.0 + kx * kx + ky * ky).powi(-(ell as i32));
            sum += weight * data[j * nx + i].norm_sqr();
        }
    }
    Ok((scale * sum).sqrt())
}

/// Smooth scalar test function of space and time.
pub trait ScalarTestFn {
    fn value(&self, t: f64, x: [f64; 2]) -> f64;
    fn gradient(&self, t: f64, x: [f64; 2]) -> [f64; 2];
}

/// Smooth vector test function; `jacobian[i][j]` is `d phi_i / d x_j`.
pub trait VectorTestFn {
    fn value(&self, t: f64, x: [f64; 2]) -> [f64; 2];
    fn jacobian(&self, t: f64, x: [f64; 2]) -> [[f64; 2]; 2];
}

/// `phi(t, x) = chi(t) (offset + amplitude sin(k . x + phase))` with the
/// C^2 cutoff `chi(t) = (1 - t/horizon)^3` on `[0, horizon]` and zero after.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutoffWave {
    pub horizon: f64,
    pub offset: f64,
    pub amplitude: f64,
    /// Angular wave vector.
    pub k: [f64; 2],
    pub phase: f64,
}

impl CutoffWave {
    /// Wave with integer mode numbers on a box of the given sides, periodic by
    /// construction.
    pub fn periodic(horizon: f64, amplitude: f64, modes: [i32; 2], sides: [f64; 2], phase: f64) -> Self {
        let two_pi = 2.0 * std::f64::consts::PI;
        Self {
            horizon,
            offset: 0.0,
            amplitude,
            k: [two_pi * modes[0] as f64 / sides[0], two_pi * modes[1] as f64 / sides[1]],
            phase,
        }
    }

    fn cutoff(&self, t: f64) -> f64 {
        if t >= self.horizon {
            0.0
        } else {
            (1.0 - t / self.horizon).powi(3)
        }
    }
}

impl ScalarTestFn for CutoffWave {
    fn value(&self, t: f64, x: [f64; 2]) -> f64 {
        let arg = self.k[0] * x[0] + self.k[1] * x[1] + self.phase;
        self.cutoff(t) * (self.offset + self.amplitude * arg.sin())
    }

    fn gradient(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let arg = self.k[0] * x[0] + self.k[1] * x[1] + self.phase;
        let c = self.cutoff(t) * self.amplitude * arg.cos();
        [c * self.k[0], c * self.k[1]]
    }
}

/// Vector test function built from one scalar function per component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComponentWise<F>(pub [F; 2]);

impl<F: ScalarTestFn> VectorTestFn for ComponentWise<F> {
    fn value(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        [self.0[0].value(t, x), self.0[1].value(t, x)]
    }

    fn jacobian(&self, t: f64, x: [f64; 2]) -> [[f64; 2]; 2] {
        [self.0[0].gradient(t, x), self.0[1].gradient(t, x)]
    }
}

/// Weak-form defects of a discrete trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConsistencyErrors {
    /// Continuity defect.
    pub e1: f64,
    /// Momentum defect, largest over the two components.
    pub e2: f64,
    /// Largest energy excess over the initial energy, clipped at zero.
    pub e3: f64,
}

/// Evaluates the weak continuity and momentum equations and the energy
/// inequality on `levels` (every time level, starting with `t = 0`).
///
/// Space integrals use the cell-center rule. In time the states are piecewise
/// constant on `(t_{k-1}, t_k]` with the value of level `k`, so time
/// derivatives of the test function integrate exactly to differences and the
/// flux terms are sampled at `t_k`. The boundary term at the last level is
/// kept, which vanishes when the test functions are cut off before the end.
pub fn consistency_residuals(
    levels: &[(f64, FieldSet)],
    initial: &FieldSet,
    gas: &GasParams,
    phi: &impl ScalarTestFn,
    phivec: &impl VectorTestFn,
) -> Result<ConsistencyErrors, AnalysisError> {
    let Some(((t0, _), rest)) = levels.split_first() else {
        return Err(AnalysisError::BadTrajectory);
    };
    if *t0 != 0.0 || levels.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(AnalysisError::BadTrajectory);
    }
    let grid = *initial.grid();
    if levels.iter().any(|(_, s)| s.grid() != &grid) {
        return Err(FieldError::GridMismatch.into());
    }
    let vol = grid.cell_volume();
    let centers: Vec<[f64; 2]> = (0..grid.n_cells()).map(|k| grid.center(k)).collect();

    let mut mass = 0.0;
    let mut momentum = [0.0; 2];
    // initial terms
    for (k, x) in centers.iter().enumerate() {
        mass += initial.rho()[k] * phi.value(0.0, *x);
        let v = phivec.value(0.0, *x);
        momentum[0] += initial.mom()[k][0] * v[0];
        momentum[1] += initial.mom()[k][1] * v[1];
    }

    let mut t_prev = 0.0;
    for (t, state) in rest {
        let dt = t - t_prev;
        let (rho, mom) = (state.rho(), state.mom());
        for (k, x) in centers.iter().enumerate() {
            let grad = phi.gradient(*t, *x);
            mass += rho[k] * (phi.value(*t, *x) - phi.value(t_prev, *x))
                + dt * (mom[k][0] * grad[0] + mom[k][1] * grad[1]);

            let dv = {
                let a = phivec.value(*t, *x);
                let b = phivec.value(t_prev, *x);
                [a[0] - b[0], a[1] - b[1]]
            };
            let jac = phivec.jacobian(*t, *x);
            let p = gas.pressure(rho[k]);
            for i in 0..2 {
                let convective = (mom[k][i] * mom[k][0] * jac[i][0] + mom[k][i] * mom[k][1] * jac[i][1]) / rho[k];
                momentum[i] += mom[k][i] * dv[i] + dt * (convective + p * jac[i][i]);
            }
        }
        t_prev = *t;
    }

    // final boundary terms
    let (t_end, last) = levels.last().expect("non-empty");
    for (k, x) in centers.iter().enumerate() {
        mass -= last.rho()[k] * phi.value(*t_end, *x);
        let v = phivec.value(*t_end, *x);
        momentum[0] -= last.mom()[k][0] * v[0];
        momentum[1] -= last.mom()[k][1] * v[1];
    }

    let e0 = total_energy(initial, gas)?;
    let mut e3 = 0.0f64;
    for (_, state) in levels {
        e3 = e3.max(total_energy(state, gas)? - e0);
    }
    Ok(ConsistencyErrors {
        e1: (vol * mass).abs(),
        e2: (vol * momentum[0]).abs().max((vol * momentum[1]).abs()),
        e3,
    })
}

/// Grids of one box whose resolutions double from each entry to the next.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshLadder {
    grids: Vec<Grid>,
}

impl MeshLadder {
    pub fn new(grids: Vec<Grid>) -> Result<Self, AnalysisError> {
        if grids.is_empty() {
            return Err(AnalysisError::Empty);
        }
        for pair in grids.windows(2) {
            if pair[0].refinement_ratio(&pair[1])? != 2 {
                return Err(GridError::NotNested(format!(
                    "ladder step {} -> {} is not a doubling",
                    pair[0].nx(),
                    pair[1].nx()
                ))
                .into());
            }
        }
        Ok(Self { grids })
    }

    /// Unit-square ladder with `coarsest * 2^i` cells per axis, `levels` entries.
    pub fn unit_square(coarsest: usize, levels: usize) -> Result<Self, AnalysisError> {
        let grids = (0..levels)
            .map(|i| Grid::unit_square(coarsest << i))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(grids)
    }

    pub fn grids(&self) -> &[Grid] {
        &self.grids
    }

    pub fn finest(&self) -> &Grid {
        self.grids.last().expect("ladders are non-empty")
    }

    pub fn len(&self) -> usize {
        self.grids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }

    /// The first `k` grids.
    pub fn prefix(&self, k: usize) -> Result<Self, AnalysisError> {
        Self::new(self.grids[..k.min(self.grids.len())].to_vec())
    }
}

/// Copies every coarse value into its block of fine cells.
pub fn inject_values<T: Copy>(coarse: &Grid, values: &[T], fine: &Grid) -> Result<Vec<T>, AnalysisError> {
    check_len(coarse, values.len())?;
    let r = coarse.refinement_ratio(fine)?;
    let mut out = Vec::with_capacity(fine.n_cells());
    for j in 0..fine.ny() {
        for i in 0..fine.nx() {
            out.push(values[coarse.index(i / r, j / r)]);
        }
    }
    Ok(out)
}

/// Averages every block of fine cells into its coarse cell.
pub fn restrict_values(fine: &Grid, values: &[f64], coarse: &Grid) -> Result<Vec<f64>, AnalysisError> {
    check_len(fine, values.len())?;
    let r = coarse.refinement_ratio(fine)?;
    let mut out = vec![0.0; coarse.n_cells()];
    for j in 0..fine.ny() {
        for i in 0..fine.nx() {
            out[coarse.index(i / r, j / r)] += values[fine.index(i, j)];
        }
    }
    let w = 1.0 / (r * r) as f64;
    out.iter_mut().for_each(|v| *v *= w);
    Ok(out)
}

pub fn inject_to_fine(coarse: &FieldSet, fine: &Grid) -> Result<FieldSet, AnalysisError> {
    let g = coarse.grid();
    let rho = inject_values(g, coarse.rho(), fine)?;
    let mom = inject_values(g, coarse.mom(), fine)?;
    Ok(FieldSet::new(*fine, rho, mom)?)
}

pub fn restrict_to_coarse(fine: &FieldSet, coarse: &Grid) -> Result<FieldSet, AnalysisError> {
    let g = fine.grid();
    let rho = restrict_values(g, fine.rho(), coarse)?;
    let m1 = restrict_values(g, &fine.mom_component(0), coarse)?;
    let m2 = restrict_values(g, &fine.mom_component(1), coarse)?;
    let mom = m1.into_iter().zip(m2).map(|(a, b)| [a, b]).collect();
    Ok(FieldSet::new(*coarse, rho, mom)?)
}

/// Arithmetic mean of fields living on the same grid, summed in order.
pub fn mean_fields<'a, I>(fields: I) -> Result<FieldSet, AnalysisError>
where
    I: IntoIterator<Item = &'a FieldSet>,
{
    let mut iter = fields.into_iter();
    let first = iter.next().ok_or(AnalysisError::Empty)?;
    let grid = *first.grid();
    let mut rho = first.rho().to_vec();
    let mut mom = first.mom().to_vec();
    let mut count = 1usize;
    for f in iter {
        if f.grid() != &grid {
            return Err(FieldError::GridMismatch.into());
        }
        for (a, b) in rho.iter_mut().zip(f.rho()) {
            *a += b;
        }
        for (a, b) in mom.iter_mut().zip(f.mom()) {
            a[0] += b[0];
            a[1] += b[1];
        }
        count += 1;
    }
    let w = 1.0 / count as f64;
    rho.iter_mut().for_each(|v| *v *= w);
    mom.iter_mut().for_each(|v| {
        v[0] *= w;
        v[1] *= w;
    });
    Ok(FieldSet::new(grid, rho, mom)?)
}

/// Cesàro mean over mesh levels: every member is injected to the finest grid
/// among them and the results are averaged.
pub fn cesaro_average(solutions: &[FieldSet]) -> Result<FieldSet, AnalysisError> {
    let finest = *solutions
        .iter()
        .map(|s| s.grid())
        .max_by_key(|g| g.n_cells())
        .ok_or(AnalysisError::Empty)?;
    let injected = solutions
        .iter()
        .map(|s| if s.grid() == &finest { Ok(s.clone()) } else { inject_to_fine(s, &finest) })
        .collect::<Result<Vec<_>, _>>()?;
    mean_fields(&injected)
}
