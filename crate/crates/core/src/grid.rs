//! Periodic structured grid of uniform square cells.
//!
//! Cells are indexed row-major (`k = j * nx + i`, y outer, x inner). Every
//! cell owns two faces: its east face (an x-face, normal `+x`) and its north
//! face (a y-face, normal `+y`). Face `2k` is the east face of cell `k`, face
//! `2k + 1` its north face. With periodic wrap this enumerates every face
//! exactly once, so a grid has `2 * nx * ny` faces.
//!
//! Jumps are oriented along the stored normal: `[[f]] = f_out - f_in`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 2 cells per axis, got {nx}x{ny}")]
    TooFewCells { nx: usize, ny: usize },
    #[error("box sides must be positive and finite, got {lx} x {ly}")]
    BadBox { lx: f64, ly: f64 },
    #[error("cells must be square: lx/nx = {hx} but ly/ny = {hy}")]
    NotSquare { hx: f64, hy: f64 },
    #[error("grids are not nested: {0}")]
    NotNested(String),
}

/// Axis of a face normal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self, GridError> {
        if nx < 2 || ny < 2 {
            return Err(GridError::TooFewCells { nx, ny });
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(GridError::BadBox { lx, ly });
        }
        let hx = lx / nx as f64;
        let hy = ly / ny as f64;
        if hx != hy {
            return Err(GridError::NotSquare { hx, hy });
        }
        Ok(Self { nx, ny, lx, ly })
    }

    /// `n x n` cells on the unit square.
    pub fn unit_square(n: usize) -> Result<Self, GridError> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    /// Mesh parameter (cell side).
    pub fn h(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn cell_volume(&self) -> f64 {
        let h = self.h();
        h * h
    }

    pub fn face_area(&self) -> f64 {
        self.h()
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_faces(&self) -> usize {
        2 * self.n_cells()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    pub fn center(&self, k: usize) -> [f64; 2] {
        let (i, j) = self.coords(k);
        let h = self.h();
        [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]
    }

    #[inline]
    pub fn east(&self, k: usize) -> usize {
        let (i, j) = self.coords(k);
        self.index(if i + 1 == self.nx { 0 } else { i + 1 }, j)
    }

    #[inline]
    pub fn west(&self, k: usize) -> usize {
        let (i, j) = self.coords(k);
        self.index(if i == 0 { self.nx - 1 } else { i - 1 }, j)
    }

    #[inline]
    pub fn north(&self, k: usize) -> usize {
        let (i, j) = self.coords(k);
        self.index(i, if j + 1 == self.ny { 0 } else { j + 1 })
    }

    #[inline]
    pub fn south(&self, k: usize) -> usize {
        let (i, j) = self.coords(k);
        self.index(i, if j == 0 { self.ny - 1 } else { j - 1 })
    }

    pub fn face(&self, f: usize) -> FaceView {
        let k = f / 2;
        let (axis, out_cell) = if f.is_multiple_of(2) {
            (Axis::X, self.east(k))
        } else {
            (Axis::Y, self.north(k))
        };
        FaceView {
            in_cell: k,
            out_cell,
            axis,
            sign: 1.0,
            area: self.face_area(),
        }
    }

    pub fn faces(&self) -> impl Iterator<Item = FaceView> + '_ {
        (0..self.n_faces()).map(move |f| self.face(f))
    }

    /// The four faces of cell `k` as `(face, outward sign)`; the sign is `+1`
    /// when the stored normal points out of `k`.
    pub fn cell_faces(&self, k: usize) -> [(FaceView, f64); 4] {
        [
            (self.face(2 * k), 1.0),
            (self.face(2 * self.west(k)), -1.0),
            (self.face(2 * k + 1), 1.0),
            (self.face(2 * self.south(k) + 1), -1.0),
        ]
    }

    /// Periodic shift of a cellwise field: `out[(i + di, j + dj)] = field[(i, j)]`.
    pub fn shift<T: Copy>(&self, field: &[T], di: isize, dj: isize) -> Vec<T> {
        assert_eq!(field.len(), self.n_cells());
        let mut out = field.to_vec();
        let nx = self.nx as isize;
        let ny = self.ny as isize;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let ti = (i as isize + di).rem_euclid(nx) as usize;
                let tj = (j as isize + dj).rem_euclid(ny) as usize;
                out[self.index(ti, tj)] = field[self.index(i, j)];
            }
        }
        out
    }

    /// Refinement ratio from `self` to `fine`, which must cover the same box
    /// with a power-of-two multiple of the cells per axis.
    pub fn refinement_ratio(&self, fine: &Grid) -> Result<usize, GridError> {
        if self.lx != fine.lx || self.ly != fine.ly {
            return Err(GridError::NotNested(format!(
                "boxes differ: {}x{} vs {}x{}",
                self.lx, self.ly, fine.lx, fine.ly
            )));
        }
        if !fine.nx.is_multiple_of(self.nx) || !fine.ny.is_multiple_of(self.ny) {
            return Err(GridError::NotNested(format!(
                "{}x{} does not divide {}x{}",
                self.nx, self.ny, fine.nx, fine.ny
            )));
        }
        let r = fine.nx / self.nx;
        if fine.ny / self.ny != r || !r.is_power_of_two() {
            return Err(GridError::NotNested(format!(
                "{}x{} -> {}x{} is not a dyadic refinement",
                self.nx, self.ny, fine.nx, fine.ny
            )));
        }
        Ok(r)
    }
}

/// A face with a fixed orientation from `in_cell` to `out_cell`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceView {
    pub in_cell: usize,
    pub out_cell: usize,
    pub axis: Axis,
    /// `+1` for the stored orientation, `-1` once reversed.
    pub sign: f64,
    pub area: f64,
}

impl FaceView {
    pub fn normal(&self) -> [f64; 2] {
        match self.axis {
            Axis::X => [self.sign, 0.0],
            Axis::Y => [0.0, self.sign],
        }
    }

    pub fn reversed(&self) -> FaceView {
        FaceView {
            in_cell: self.out_cell,
            out_cell: self.in_cell,
            sign: -self.sign,
            ..*self
        }
    }

    pub fn average(&self, field: &[f64]) -> f64 {
        0.5 * (field[self.in_cell] + field[self.out_cell])
    }

    pub fn jump(&self, field: &[f64]) -> f64 {
        field[self.out_cell] - field[self.in_cell]
    }

    /// `<v> . n` for a cellwise vector field.
    pub fn normal_average(&self, field: &[[f64; 2]]) -> f64 {
        let a = self.axis.index();
        0.5 * self.sign * (field[self.in_cell][a] + field[self.out_cell][a])
    }
}

/// `(div_h v)_K = sum over faces of K of |sigma|/|K| <v> . n_out`.
pub fn discrete_divergence(grid: &Grid, vec_field: &[[f64; 2]]) -> Vec<f64> {
    assert_eq!(vec_field.len(), grid.n_cells());
    let scale = grid.face_area() / grid.cell_volume();
    (0..grid.n_cells())
        .map(|k| {
            grid.cell_faces(k)
                .iter()
                .map(|(face, out)| out * face.normal_average(vec_field))
                .sum::<f64>()
                * scale
        })
        .collect()
}

/// Facewise gradient `[[phi]] / h * n`, indexed like [`Grid::face`].
pub fn discrete_gradient(grid: &Grid, field: &[f64]) -> Vec<[f64; 2]> {
    assert_eq!(field.len(), grid.n_cells());
    let inv_h = 1.0 / grid.h();
    grid.faces()
        .map(|face| {
            let g = face.jump(field) * inv_h;
            let n = face.normal();
            [g * n[0], g * n[1]]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(n: usize) -> Grid {
        Grid::unit_square(n).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(Grid::unit_square(1), Err(GridError::TooFewCells { .. })));
        assert!(matches!(Grid::new(4, 8, 1.0, 1.0), Err(GridError::NotSquare { .. })));
        assert!(Grid::new(4, 8, 1.0, 2.0).is_ok());
        assert!(matches!(Grid::new(4, 4, 0.0, 1.0), Err(GridError::BadBox { .. })));
    }

    #[test]
    fn faces_have_two_distinct_cells() {
        let grid = g(4);
        assert_eq!(grid.faces().count(), 32);
        for face in grid.faces() {
            assert_ne!(face.in_cell, face.out_cell);
            let n = face.normal();
            assert_eq!(n[0].abs() + n[1].abs(), 1.0);
        }
        // every cell appears in exactly four faces
        let mut count = vec![0; grid.n_cells()];
        for face in grid.faces() {
            count[face.in_cell] += 1;
            count[face.out_cell] += 1;
        }
        assert!(count.iter().all(|&c| c == 4));
    }

    #[test]
    fn average_and_jump() {
        let grid = g(2);
        let face = grid.face(0);
        let mut field = vec![3.0; 4];
        assert_eq!(face.average(&field), 3.0);
        assert_eq!(face.jump(&field), 0.0);
        field[face.in_cell] = 1.0;
        field[face.out_cell] = 2.0;
        assert_eq!(face.average(&field), 1.5);
        assert_eq!(face.jump(&field), 1.0);
        assert_eq!(face.reversed().jump(&field), -1.0);
        assert_eq!(face.reversed().normal(), [-1.0, 0.0]);
        field[face.in_cell] = -1.0;
        field[face.out_cell] = 1.0;
        assert_eq!(face.average(&field), 0.0);
    }

    #[test]
    fn divergence_of_constant_vanishes() {
        let grid = g(8);
        let div = discrete_divergence(&grid, &vec![[0.3, -1.7]; 64]);
        assert!(div.iter().all(|d| d.abs() < 1e-13));
    }

    #[test]
    fn divergence_matches_central_difference() {
        let grid = g(64);
        let h = grid.h();
        let field: Vec<[f64; 2]> = (0..grid.n_cells())
            .map(|k| [(2.0 * std::f64::consts::PI * grid.center(k)[0]).sin(), 0.0])
            .collect();
        let div = discrete_divergence(&grid, &field);
        for (k, d) in div.iter().enumerate() {
            let x = grid.center(k)[0];
            let s = |x: f64| (2.0 * std::f64::consts::PI * x).sin();
            let oracle = (s(x + h) - s(x - h)) / (2.0 * h);
            assert!((d - oracle).abs() < 1e-12, "cell {k}");
        }
    }

    #[test]
    fn gradient_of_linear_index_field() {
        let grid = g(8);
        let h = grid.h();
        let field: Vec<f64> = (0..grid.n_cells()).map(|k| grid.coords(k).0 as f64 * h).collect();
        let grad = discrete_gradient(&grid, &field);
        for (f, face) in grid.faces().enumerate() {
            let (i, _) = grid.coords(face.in_cell);
            if face.axis == Axis::X && i + 1 < grid.nx() {
                assert!((grad[f][0] - 1.0).abs() < 1e-12);
                assert_eq!(grad[f][1], 0.0);
            }
            if face.axis == Axis::Y {
                assert_eq!(grad[f], [0.0, 0.0]);
            }
        }
        let doubled: Vec<f64> = field.iter().map(|v| 2.0 * v).collect();
        let grad2 = discrete_gradient(&grid, &doubled);
        for (a, b) in grad.iter().zip(&grad2) {
            assert_eq!(2.0 * a[0], b[0]);
        }
        assert!(discrete_gradient(&grid, &vec![5.0; 64]).iter().all(|v| *v == [0.0, 0.0]));
    }

    #[test]
    fn shift_commutes_with_operators() {
        let grid = Grid::new(6, 4, 1.5, 1.0).unwrap();
        let phi: Vec<f64> = (0..grid.n_cells()).map(|k| ((k * 7919) % 13) as f64).collect();
        let psi: Vec<[f64; 2]> = (0..grid.n_cells())
            .map(|k| [((k * 31) % 7) as f64, ((k * 17) % 5) as f64])
            .collect();
        let div_then_shift = grid.shift(&discrete_divergence(&grid, &psi), 1, -1);
        let shift_then_div = discrete_divergence(&grid, &grid.shift(&psi, 1, -1));
        assert_eq!(div_then_shift, shift_then_div);

        // gradients live on faces; compare through the owning cells
        let grad = discrete_gradient(&grid, &phi);
        let grad_shifted = discrete_gradient(&grid, &grid.shift(&phi, 1, 0));
        for k in 0..grid.n_cells() {
            let src = grid.west(k);
            assert_eq!(grad_shifted[2 * k], grad[2 * src]);
            assert_eq!(grad_shifted[2 * k + 1], grad[2 * src + 1]);
        }
    }

    #[test]
    fn refinement_ratio() {
        assert_eq!(g(4).refinement_ratio(&g(16)), Ok(4));
        assert!(g(4).refinement_ratio(&g(12)).is_err());
        assert!(g(4).refinement_ratio(&g(6)).is_err());
        let other = Grid::new(8, 8, 2.0, 2.0).unwrap();
        assert!(g(4).refinement_ratio(&other).is_err());
    }
}
