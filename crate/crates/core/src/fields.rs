//! Piecewise-constant density/momentum states, the convex energy, the data
//! space metric and the random Kelvin-Helmholtz initial data.

use std::f64::consts::PI;

use rand::Rng;
use thiserror::Error;

use crate::grid::Grid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("density must be non-negative, got {0}")]
    NegativeDensity(f64),
    #[error("density must be positive: rho[{cell}] = {value}")]
    NonPositiveDensity { cell: usize, value: f64 },
    #[error("expected {expected} cells, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("invalid gas parameters: gamma = {gamma}, a = {a}")]
    BadGas { gamma: f64, a: f64 },
    #[error("invalid Kelvin-Helmholtz data: {0}")]
    BadKhSpec(String),
}

/// Pressure law `p = a rho^gamma`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GasParams {
    pub gamma: f64,
    pub a: f64,
}

impl Default for GasParams {
    fn default() -> Self {
        Self { gamma: 1.4, a: 1.0 }
    }
}

impl GasParams {
    pub fn new(gamma: f64, a: f64) -> Result<Self, FieldError> {
        let gas = Self { gamma, a };
        gas.validate()?;
        Ok(gas)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if self.gamma > 1.0 && self.a > 0.0 && self.gamma.is_finite() && self.a.is_finite() {
            Ok(())
        } else {
            Err(FieldError::BadGas { gamma: self.gamma, a: self.a })
        }
    }

    #[inline]
    pub fn pressure(&self, rho: f64) -> f64 {
        self.a * rho.powf(self.gamma)
    }
}

/// Density and momentum on a grid. Density is strictly positive in every cell.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSet {
    grid: Grid,
    rho: Vec<f64>,
    mom: Vec<[f64; 2]>,
}

impl FieldSet {
    pub fn new(grid: Grid, rho: Vec<f64>, mom: Vec<[f64; 2]>) -> Result<Self, FieldError> {
        let n = grid.n_cells();
        for len in [rho.len(), mom.len()] {
            if len != n {
                return Err(FieldError::SizeMismatch { expected: n, got: len });
            }
        }
        if let Some((cell, &value)) = rho.iter().enumerate().find(|(_, r)| !(**r > 0.0)) {
            return Err(FieldError::NonPositiveDensity { cell, value });
        }
        Ok(Self { grid, rho, mom })
    }

    /// Uniform state with density `rho` and velocity `u`.
    pub fn uniform(grid: Grid, rho: f64, u: [f64; 2]) -> Result<Self, FieldError> {
        let n = grid.n_cells();
        Self::new(grid, vec![rho; n], vec![[rho * u[0], rho * u[1]]; n])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn mom(&self) -> &[[f64; 2]] {
        &self.mom
    }

    /// Momentum component `c` (0 or 1) as its own vector.
    pub fn mom_component(&self, c: usize) -> Vec<f64> {
        self.mom.iter().map(|m| m[c]).collect()
    }

    pub fn velocity(&self) -> Vec<[f64; 2]> {
        self.rho
            .iter()
            .zip(&self.mom)
            .map(|(r, m)| [m[0] / r, m[1] / r])
            .collect()
    }

    pub fn into_parts(self) -> (Grid, Vec<f64>, Vec<[f64; 2]>) {
        (self.grid, self.rho, self.mom)
    }

    /// The three conserved variables `(rho, m1, m2)` as separate vectors.
    pub fn variables(&self) -> [Vec<f64>; 3] {
        [self.rho.clone(), self.mom_component(0), self.mom_component(1)]
    }

    pub fn total_mass(&self) -> f64 {
        self.grid.cell_volume() * self.rho.iter().sum::<f64>()
    }

    pub fn total_momentum(&self) -> [f64; 2] {
        let v = self.grid.cell_volume();
        let (a, b) = self
            .mom
            .iter()
            .fold((0.0, 0.0), |(a, b), m| (a + m[0], b + m[1]));
        [v * a, v * b]
    }

    pub fn min_density(&self) -> f64 {
        self.rho.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Periodic shift by whole cells.
    pub fn shifted(&self, di: isize, dj: isize) -> FieldSet {
        FieldSet {
            grid: self.grid,
            rho: self.grid.shift(&self.rho, di, dj),
            mom: self.grid.shift(&self.mom, di, dj),
        }
    }

    /// Largest absolute difference over all three variables.
    pub fn max_abs_diff(&self, other: &FieldSet) -> f64 {
        let dr = self
            .rho
            .iter()
            .zip(&other.rho)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let dm = self
            .mom
            .iter()
            .zip(&other.mom)
            .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
            .fold(0.0, f64::max);
        dr.max(dm)
    }
}

/// `E(rho, m) = |m|^2 / (2 rho) + a/(gamma - 1) rho^gamma`, extended by `0`
/// at vacuum with zero momentum and `+inf` at vacuum otherwise.
pub fn energy_density(rho: f64, mom: [f64; 2], gas: &GasParams) -> Result<f64, FieldError> {
    if rho < 0.0 || rho.is_nan() {
        return Err(FieldError::NegativeDensity(rho));
    }
    if rho > 0.0 {
        let m2 = mom[0] * mom[0] + mom[1] * mom[1];
        Ok(0.5 * m2 / rho + gas.a / (gas.gamma - 1.0) * rho.powf(gas.gamma))
    } else if mom == [0.0, 0.0] {
        Ok(0.0)
    } else {
        Ok(f64::INFINITY)
    }
}

pub fn total_energy(state: &FieldSet, gas: &GasParams) -> Result<f64, FieldError> {
    let mut sum = 0.0;
    for (r, m) in state.rho.iter().zip(&state.mom) {
        sum += energy_density(*r, *m, gas)?;
    }
    Ok(state.grid.cell_volume() * sum)
}

/// `||rho1 - rho2||_{L^gamma} + ||m1/sqrt(rho1) - m2/sqrt(rho2)||_{L^2}` with
/// cell-midpoint quadrature.
pub fn data_metric(d1: &FieldSet, d2: &FieldSet, gas: &GasParams) -> Result<f64, FieldError> {
    if d1.grid != d2.grid {
        return Err(FieldError::GridMismatch);
    }
    let vol = d1.grid.cell_volume();
    let mut density = 0.0;
    let mut kinetic = 0.0;
    for k in 0..d1.grid.n_cells() {
        density += (d1.rho[k] - d2.rho[k]).abs().powf(gas.gamma);
        let s1 = 1.0 / d1.rho[k].sqrt();
        let s2 = 1.0 / d2.rho[k].sqrt();
        for c in 0..2 {
            let d = d1.mom[k][c] * s1 - d2.mom[k][c] * s2;
            kinetic += d * d;
        }
    }
    Ok((vol * density).powf(1.0 / gas.gamma) + (vol * kinetic).sqrt())
}

/// Kelvin-Helmholtz data: a dense band `J1 < x2 < J2` with randomly
/// perturbed interfaces `I_j(x1) = J_j + eps * sum_i a_j^i cos(b_j^i + 2 pi i x1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KhDataSpec {
    pub j1: f64,
    pub j2: f64,
    pub eps_perturb: f64,
    pub n_modes: usize,
    /// `(rho, u1, u2)` inside the band.
    pub inner: [f64; 3],
    /// `(rho, u1, u2)` outside the band.
    pub outer: [f64; 3],
}

impl Default for KhDataSpec {
    fn default() -> Self {
        Self {
            j1: 0.25,
            j2: 0.75,
            eps_perturb: 0.01,
            n_modes: 10,
            inner: [2.0, -0.5, 0.0],
            outer: [1.0, 0.5, 0.0],
        }
    }
}

impl KhDataSpec {
    pub fn validate(&self) -> Result<(), FieldError> {
        let bad = |msg: &str| Err(FieldError::BadKhSpec(msg.to_string()));
        if !(0.0 < self.j1 && self.j1 < self.j2 && self.j2 < 1.0) {
            return bad("need 0 < j1 < j2 < 1");
        }
        if !(self.eps_perturb >= 0.0) {
            return bad("eps_perturb must be non-negative");
        }
        if self.n_modes < 1 {
            return bad("need at least one mode");
        }
        if !(self.inner[0] > 0.0 && self.outer[0] > 0.0) {
            return bad("band densities must be positive");
        }
        Ok(())
    }
}

/// Random interface coefficients of one Kelvin-Helmholtz sample.
#[derive(Clone, Debug, PartialEq)]
pub struct KhCoefficients {
    /// `amplitudes[j][i]`, each row summing to one.
    pub amplitudes: [Vec<f64>; 2],
    /// `phases[j][i]` in `[-pi, pi)`.
    pub phases: [Vec<f64>; 2],
}

impl KhCoefficients {
    /// Draw order: `a_1`, `a_2` (m uniforms each, then normalized), then
    /// `b_1`, `b_2` (m uniforms on `[-pi, pi)` each).
    pub fn sample<R: Rng + ?Sized>(n_modes: usize, rng: &mut R) -> Self {
        let mut draw_amplitudes = || {
            let raw: Vec<f64> = (0..n_modes).map(|_| rng.gen::<f64>()).collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|a| a / sum).collect::<Vec<f64>>()
        };
        let amplitudes = [draw_amplitudes(), draw_amplitudes()];
        let mut draw_phases =
            || (0..n_modes).map(|_| rng.gen_range(-PI..PI)).collect::<Vec<f64>>();
        let phases = [draw_phases(), draw_phases()];
        Self { amplitudes, phases }
    }

    /// `Y_j(x1)`.
    pub fn profile(&self, j: usize, x1: f64) -> f64 {
        self.amplitudes[j]
            .iter()
            .zip(&self.phases[j])
            .enumerate()
            .map(|(i, (a, b))| a * (b + 2.0 * (i + 1) as f64 * PI * x1).cos())
            .sum()
    }
}

/// Cell-center projection of the band data for given interface coefficients.
pub fn kh_fields(spec: &KhDataSpec, coeffs: &KhCoefficients, grid: &Grid) -> FieldSet {
    let n = grid.n_cells();
    let mut rho = Vec::with_capacity(n);
    let mut mom = Vec::with_capacity(n);
    // the interfaces depend on x1 only
    let h = grid.h();
    let interfaces: Vec<(f64, f64)> = (0..grid.nx())
        .map(|i| {
            let x1 = (i as f64 + 0.5) * h;
            (
                spec.j1 + spec.eps_perturb * coeffs.profile(0, x1),
                spec.j2 + spec.eps_perturb * coeffs.profile(1, x1),
            )
        })
        .collect();
    for k in 0..n {
        let (i, _) = grid.coords(k);
        let x2 = grid.center(k)[1];
        let (lo, hi) = interfaces[i];
        let [r, u1, u2] = if lo < x2 && x2 < hi { spec.inner } else { spec.outer };
        rho.push(r);
        mom.push([r * u1, r * u2]);
    }
    FieldSet::new(*grid, rho, mom).expect("band densities are positive")
}

/// Draws one random Kelvin-Helmholtz initial state from `rng`.
pub fn sample_kh_data<R: Rng + ?Sized>(spec: &KhDataSpec, grid: &Grid, rng: &mut R) -> FieldSet {
    let coeffs = KhCoefficients::sample(spec.n_modes, rng);
    kh_fields(spec, &coeffs, grid)
}
