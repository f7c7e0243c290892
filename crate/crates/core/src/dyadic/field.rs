use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use rayon::prelude::*;

use super::grid::DyadicGrid;
use crate::error::{Error, Result};
use crate::spectral::{self, Mat};

/// A piecewise-constant matrix-valued function on the finest cells of a grid.
///
/// Cell matrices are stored contiguously in column-major order. Values are
/// not required to be Hermitian: intermediates such as `p f q` live in the
/// same container.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    grid: DyadicGrid,
    data: Vec<Complex64>,
}

impl MatrixField {
    pub fn zeros(grid: DyadicGrid) -> Self {
        let nn = grid.matdim() * grid.matdim();
        Self {
            grid,
            data: vec![Complex64::new(0.0, 0.0); grid.num_cells() * nn],
        }
    }

    pub fn constant(grid: DyadicGrid, value: &Mat) -> Self {
        assert_eq!(value.nrows(), grid.matdim());
        let mut data = Vec::with_capacity(grid.num_cells() * value.len());
        for _ in 0..grid.num_cells() {
            data.extend_from_slice(value.as_slice());
        }
        Self { grid, data }
    }

    pub fn identity(grid: DyadicGrid) -> Self {
        Self::constant(grid, &spectral::identity(grid.matdim()))
    }

    /// Scalar field (`n = 1`) from real cell values.
    pub fn from_scalars(grid: DyadicGrid, values: &[f64]) -> Result<Self> {
        if grid.matdim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: grid.matdim(),
            });
        }
        if values.len() != grid.num_cells() {
            return Err(Error::DimensionMismatch {
                expected: grid.num_cells(),
                found: values.len(),
            });
        }
        Ok(Self {
            grid,
            data: values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        })
    }

    pub fn from_cells(grid: DyadicGrid, cells: Vec<Mat>) -> Result<Self> {
        if cells.len() != grid.num_cells() {
            return Err(Error::DimensionMismatch {
                expected: grid.num_cells(),
                found: cells.len(),
            });
        }
        let n = grid.matdim();
        let mut data = Vec::with_capacity(grid.num_cells() * n * n);
        for m in &cells {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: m.nrows(),
                });
            }
            data.extend_from_slice(m.as_slice());
        }
        Ok(Self { grid, data })
    }

    pub(crate) fn from_raw(grid: DyadicGrid, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), grid.num_cells() * grid.matdim() * grid.matdim());
        Self { grid, data }
    }

    /// Builds a field cell by cell, in parallel.
    pub fn from_fn(grid: DyadicGrid, f: impl Fn(usize) -> Mat + Sync + Send) -> Self {
        let cells: Vec<Mat> = (0..grid.num_cells()).into_par_iter().map(f).collect();
        Self::from_cells(grid, cells).expect("cell generator returned a matrix of the wrong size")
    }

    pub fn grid(&self) -> &DyadicGrid {
        &self.grid
    }

    pub fn matdim(&self) -> usize {
        self.grid.matdim()
    }

    pub fn num_cells(&self) -> usize {
        self.grid.num_cells()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn cell_slice(&self, cell: usize) -> &[Complex64] {
        let nn = self.matdim() * self.matdim();
        &self.data[cell * nn..(cell + 1) * nn]
    }

    pub fn cell(&self, cell: usize) -> Mat {
        let n = self.matdim();
        Mat::from_column_slice(n, n, self.cell_slice(cell))
    }

    pub fn cells(&self) -> impl Iterator<Item = Mat> + '_ {
        (0..self.num_cells()).map(|c| self.cell(c))
    }

    pub fn set_cell(&mut self, cell: usize, value: &Mat) {
        let nn = self.matdim() * self.matdim();
        self.data[cell * nn..(cell + 1) * nn].copy_from_slice(value.as_slice());
    }

    /// Cellwise map, in parallel.
    pub fn map(&self, f: impl Fn(&Mat) -> Mat + Sync + Send) -> Self {
        Self::from_fn(self.grid, |c| f(&self.cell(c)))
    }

    /// Cellwise binary map, in parallel.
    pub fn zip_map(&self, other: &Self, f: impl Fn(&Mat, &Mat) -> Mat + Sync + Send) -> Self {
        self.assert_same_grid(other);
        Self::from_fn(self.grid, |c| f(&self.cell(c), &other.cell(c)))
    }

    pub fn assert_same_grid(&self, other: &Self) {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            grid: self.grid,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn adjoint(&self) -> Self {
        self.map(|m| m.adjoint())
    }

    /// Cellwise matrix product `self(x) * other(x)`.
    pub fn product(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    /// Cellwise `a(x) * self(x) * b(x)`.
    pub fn sandwich(&self, a: &Self, b: &Self) -> Self {
        self.assert_same_grid(a);
        self.assert_same_grid(b);
        Self::from_fn(self.grid, |c| a.cell(c) * self.cell(c) * b.cell(c))
    }

    /// `self + s * other`, in place.
    pub fn add_scaled(&mut self, other: &Self, s: f64) {
        self.assert_same_grid(other);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    /// Largest entry modulus over all cells.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, z| m.max(z.norm()))
    }

    /// Largest cellwise operator norm.
    pub fn max_operator_norm(&self) -> f64 {
        (0..self.num_cells())
            .into_par_iter()
            .map(|c| spectral::operator_norm(&self.cell(c)))
            .collect::<Vec<_>>()
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn max_hermiticity_residual(&self) -> f64 {
        self.cells()
            .map(|m| spectral::hermiticity_residual(&m))
            .fold(0.0, f64::max)
    }

    /// Checks every cell is Hermitian and positive semidefinite within `tol`
    /// (relative to the largest cell norm).
    pub fn check_psd(&self, tol: f64) -> Result<()> {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mins: Vec<f64> = (0..self.num_cells())
            .into_par_iter()
            .map(|c| spectral::min_eigenvalue(&self.cell(c)))
            .collect();
        for (cell, m) in self.cells().enumerate() {
            spectral::check_hermitian(&m)?;
            if mins[cell] < -tol * scale {
                return Err(Error::NonPositiveField {
                    cell,
                    min_eigenvalue: mins[cell],
                });
            }
        }
        Ok(())
    }
}

impl Add for &MatrixField {
    type Output = MatrixField;

    fn add(self, rhs: Self) -> MatrixField {
        self.assert_same_grid(rhs);
        MatrixField {
            grid: self.grid,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &MatrixField {
    type Output = MatrixField;

    fn sub(self, rhs: Self) -> MatrixField {
        self.assert_same_grid(rhs);
        MatrixField {
            grid: self.grid,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul<f64> for &MatrixField {
    type Output = MatrixField;

    fn mul(self, rhs: f64) -> MatrixField {
        self.scale(rhs)
    }
}

impl Neg for &MatrixField {
    type Output = MatrixField;

    fn neg(self) -> MatrixField {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::Boundary;

    #[test]
    fn cell_roundtrip_and_arithmetic() {
        let g = DyadicGrid::new(1, 2, 2, Boundary::Torus).unwrap();
        let f = MatrixField::from_fn(g, |c| spectral::real_diag(&[c as f64, 1.0]));
        assert_eq!(f.cell(3), spectral::real_diag(&[3.0, 1.0]));
        let two = &f + &f;
        assert_eq!(two, f.scale(2.0));
        assert_eq!(&two - &f, f);
        let prod = f.product(&MatrixField::identity(g));
        assert_eq!(prod, f);
    }

    #[test]
    fn psd_check_flags_negative_cells() {
        let g = DyadicGrid::new(1, 2, 1, Boundary::Torus).unwrap();
        let f = MatrixField::from_scalars(g, &[1.0, 0.0, -0.5, 2.0]).unwrap();
        assert!(matches!(f.check_psd(1e-9), Err(Error::NonPositiveField { cell: 2, .. })));
    }
}
