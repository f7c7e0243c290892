//! Averaging operators on matrix fields: dyadic conditional expectations,
//! ball averages and their truncated and annular variants.

use num_complex::Complex64;
use rayon::prelude::*;

use super::field::MatrixField;
use super::grid::{Boundary, DyadicGrid};
use super::stencil::{annulus, BallStencil};
use crate::error::{Error, Result};

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

fn par_cells(grid: DyadicGrid, cell_value: impl Fn(usize, &mut [Complex64]) + Sync) -> MatrixField {
    let nn = grid.matdim() * grid.matdim();
    let chunks: Vec<Vec<Complex64>> = (0..grid.num_cells())
        .into_par_iter()
        .map(|c| {
            let mut buf = vec![zero(); nn];
            cell_value(c, &mut buf);
            buf
        })
        .collect();
    MatrixField::from_raw(grid, chunks.concat())
}

fn accumulate(acc: &mut [Complex64], src: &[Complex64]) {
    for (a, s) in acc.iter_mut().zip(src) {
        *a += s;
    }
}

/// `E_k f`: on each level-`k` cube, the cell average of `f` over that cube.
pub fn cond_expectation(f: &MatrixField, k: u32) -> Result<MatrixField> {
    let grid = *f.grid();
    grid.check_level(k)?;
    let nn = grid.matdim() * grid.matdim();
    let mut sums = vec![zero(); grid.num_cubes(k) * nn];
    for cell in 0..grid.num_cells() {
        let q = grid.cube_index(cell, k);
        accumulate(&mut sums[q * nn..(q + 1) * nn], f.cell_slice(cell));
    }
    let per_cube = (grid.cube_side_cells(k).pow(grid.dim() as u32)) as f64;
    for z in &mut sums {
        *z /= per_cube;
    }
    let mut data = Vec::with_capacity(grid.num_cells() * nn);
    for cell in 0..grid.num_cells() {
        let q = grid.cube_index(cell, k);
        data.extend_from_slice(&sums[q * nn..(q + 1) * nn]);
    }
    Ok(MatrixField::from_raw(grid, data))
}

/// `df_k = E_k f - E_{k-1} f` for `1 <= k <= K`.
pub fn martingale_difference(f: &MatrixField, k: u32) -> Result<MatrixField> {
    let grid = f.grid();
    if k == 0 || k > grid.finest_level() {
        return Err(Error::LevelOutOfRange {
            level: k,
            min: 1,
            max: grid.finest_level(),
        });
    }
    Ok(&cond_expectation(f, k)? - &cond_expectation(f, k - 1)?)
}

/// Per-row prefix sums along the last axis; row `r` occupies
/// `(side + 1) * nn` entries starting at `r * (side + 1) * nn`.
struct RowPrefix {
    data: Vec<Complex64>,
    side: usize,
    nn: usize,
}

impl RowPrefix {
    fn new(f: &MatrixField) -> Self {
        let grid = f.grid();
        let side = grid.side();
        let rows = if grid.dim() == 1 { 1 } else { side };
        let nn = grid.matdim() * grid.matdim();
        let mut data = vec![zero(); rows * (side + 1) * nn];
        for row in 0..rows {
            let base = row * (side + 1) * nn;
            for col in 0..side {
                let cell = row * side + col;
                let (head, tail) = data.split_at_mut(base + (col + 1) * nn);
                let prev = &head[base + col * nn..base + (col + 1) * nn];
                let next = &mut tail[..nn];
                for ((n, p), v) in next.iter_mut().zip(prev).zip(f.cell_slice(cell)) {
                    *n = p + v;
                }
            }
        }
        Self { data, side, nn }
    }

    fn at(&self, row: usize, col: usize) -> &[Complex64] {
        let off = (row * (self.side + 1) + col) * self.nn;
        &self.data[off..off + self.nn]
    }

    /// Adds `sum_{c in [a, b)} f(row, c)` into `acc` (`0 <= a <= b <= side`).
    fn add_range(&self, row: usize, a: usize, b: usize, acc: &mut [Complex64]) {
        let hi = self.at(row, b);
        let lo = self.at(row, a);
        for ((x, h), l) in acc.iter_mut().zip(hi).zip(lo) {
            *x += h - l;
        }
    }
}

/// Sum of `f` over the translate `x + B` for every cell `x`.
fn ball_sum(f: &MatrixField, stencil: &BallStencil) -> MatrixField {
    let grid = *f.grid();
    let prefix = RowPrefix::new(f);
    let side = grid.side() as i64;
    par_cells(grid, |cell, acc| {
        let c = grid.coords(cell);
        let (row, col) = if grid.dim() == 1 {
            (0i64, c[0] as i64)
        } else {
            (c[0] as i64, c[1] as i64)
        };
        for run in &stencil.runs {
            let len = run.hi - run.lo + 1;
            match grid.boundary() {
                Boundary::Torus => {
                    let r = (row + run.row).rem_euclid(side) as usize;
                    let start = (col + run.lo).rem_euclid(side);
                    let end = start + len;
                    if end <= side {
                        prefix.add_range(r, start as usize, end as usize, acc);
                    } else {
                        prefix.add_range(r, start as usize, side as usize, acc);
                        prefix.add_range(r, 0, (end - side) as usize, acc);
                    }
                }
                Boundary::Zero => {
                    let r = row + run.row;
                    if r < 0 || r >= side {
                        continue;
                    }
                    let a = (col + run.lo).max(0);
                    let b = (col + run.hi + 1).min(side);
                    if a < b {
                        prefix.add_range(r as usize, a as usize, b as usize, acc);
                    }
                }
            }
        }
    })
}

/// Number of cells in the discrete ball `B_k`.
pub fn ball_count(grid: &DyadicGrid, k: u32) -> usize {
    BallStencil::new(grid, k).count()
}

/// `M_k f(x)`: average of `f` over the discrete ball of radius `2^{-k}` about `x`.
pub fn ball_average(f: &MatrixField, k: u32) -> Result<MatrixField> {
    f.grid().check_level(k)?;
    let stencil = BallStencil::new(f.grid(), k);
    Ok(ball_sum(f, &stencil).scale(1.0 / stencil.count() as f64))
}

fn check_ordered(grid: &DyadicGrid, k: u32, n: u32) -> Result<()> {
    if k >= n {
        return Err(Error::LevelOrderViolation { k, n });
    }
    grid.check_level(n)
}

/// `M_{k,n} u(x)`: the ball average restricted to the level-`n` cubes that
/// meet the discrete sphere of `x + B_k`.
pub fn truncated_average(u: &MatrixField, k: u32, n: u32) -> Result<MatrixField> {
    let grid = *u.grid();
    check_ordered(&grid, k, n)?;
    let stencil = BallStencil::new(&grid, k);
    let sphere = stencil.sphere();
    let norm = 1.0 / stencil.count() as f64;
    let cubes = grid.num_cubes(n);
    Ok(par_cells(grid, |x, acc| {
        let mut marked = vec![false; cubes];
        for &b in &sphere {
            if let Some(y) = grid.shift(x, b) {
                marked[grid.cube_index(y, n)] = true;
            }
        }
        for &d in &stencil.offsets {
            if let Some(y) = grid.shift(x, d) {
                if marked[grid.cube_index(y, n)] {
                    accumulate(acc, u.cell_slice(y));
                }
            }
        }
        for z in acc.iter_mut() {
            *z *= norm;
        }
    }))
}

/// Offsets of the discrete annulus `I_{j,m}`.
pub fn annulus_offsets(grid: &DyadicGrid, j: u32, m: u32) -> Result<Vec<[i64; 2]>> {
    check_ordered(grid, j, m)?;
    Ok(annulus(grid, j, m))
}

/// `M~_{j,m} v = |B_j|^{-1} (indicator of I_{j,m}) * v`.
pub fn tilde_average(v: &MatrixField, j: u32, m: u32) -> Result<MatrixField> {
    let grid = *v.grid();
    let offsets = annulus_offsets(&grid, j, m)?;
    let norm = 1.0 / ball_count(&grid, j) as f64;
    Ok(par_cells(grid, |x, acc| {
        for &d in &offsets {
            if let Some(y) = grid.shift(x, d) {
                accumulate(acc, v.cell_slice(y));
            }
        }
        for z in acc.iter_mut() {
            *z *= norm;
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{self, Mat};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_grid(k: u32, boundary: Boundary) -> DyadicGrid {
        DyadicGrid::new(1, k, 1, boundary).unwrap()
    }

    fn scalars(f: &MatrixField) -> Vec<f64> {
        f.data().iter().map(|z| z.re).collect()
    }

    fn random_field(grid: DyadicGrid, seed: u64) -> MatrixField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = grid.matdim();
        let cells: Vec<Mat> = (0..grid.num_cells())
            .map(|_| {
                Mat::from_fn(n, n, |_, _| {
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                })
            })
            .collect();
        MatrixField::from_cells(grid, cells).unwrap()
    }

    /// Direct summation over all cells by center distance.
    fn ball_average_direct(f: &MatrixField, k: u32) -> MatrixField {
        let grid = *f.grid();
        let stencil = BallStencil::new(&grid, k);
        let count = stencil.count() as f64;
        MatrixField::from_fn(grid, |x| {
            let n = grid.matdim();
            let mut acc = spectral::zeros(n);
            for d in &stencil.offsets {
                if let Some(y) = grid.shift(x, *d) {
                    acc += f.cell(y);
                }
            }
            acc / Complex64::new(count, 0.0)
        })
    }

    #[test]
    fn conditional_expectation_examples() {
        let g = scalar_grid(2, Boundary::Torus);
        let f = MatrixField::from_scalars(g, &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert_eq!(scalars(&cond_expectation(&f, 1).unwrap()), vec![2.0, 2.0, 6.0, 6.0]);
        assert_eq!(scalars(&cond_expectation(&f, 0).unwrap()), vec![4.0; 4]);
        assert!(matches!(cond_expectation(&f, 3), Err(Error::LevelOutOfRange { .. })));
    }

    #[test]
    fn conditional_expectations_compose_to_the_coarser() {
        let g = DyadicGrid::new(2, 3, 2, Boundary::Torus).unwrap();
        let f = random_field(g, 4);
        for j in 0..=3 {
            for k in 0..=3 {
                let lhs = cond_expectation(&cond_expectation(&f, k).unwrap(), j).unwrap();
                let rhs = cond_expectation(&f, j.min(k)).unwrap();
                assert!((&lhs - &rhs).max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn martingale_difference_example() {
        let g = scalar_grid(2, Boundary::Torus);
        let f = MatrixField::from_scalars(g, &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert_eq!(scalars(&martingale_difference(&f, 1).unwrap()), vec![-2.0, -2.0, 2.0, 2.0]);
        assert!(matches!(martingale_difference(&f, 0), Err(Error::LevelOutOfRange { .. })));
    }

    #[test]
    fn martingale_differences_telescope() {
        let g = DyadicGrid::new(1, 4, 2, Boundary::Torus).unwrap();
        let f = random_field(g, 9);
        let mut acc = cond_expectation(&f, 0).unwrap();
        for k in 1..=4 {
            acc = &acc + &martingale_difference(&f, k).unwrap();
        }
        assert!((&acc - &f).max_abs() < 1e-14);
    }

    #[test]
    fn ball_average_examples() {
        let g = scalar_grid(2, Boundary::Torus);
        let f = MatrixField::from_scalars(g, &[1.0, 3.0, 5.0, 7.0]).unwrap();
        let m1 = scalars(&ball_average(&f, 1).unwrap());
        let expected = [11.0 / 3.0, 3.0, 5.0, 13.0 / 3.0];
        for (a, b) in m1.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
        assert_eq!(ball_average(&f, 2).unwrap(), f);
        let c = MatrixField::constant(DyadicGrid::new(2, 3, 2, Boundary::Torus).unwrap(), &spectral::real_diag(&[2.0, 5.0]));
        for k in 0..=3 {
            assert!((&ball_average(&c, k).unwrap() - &c).max_abs() < 1e-13);
        }
    }

    #[test]
    fn prefix_sums_match_direct_summation() {
        for boundary in [Boundary::Torus, Boundary::Zero] {
            for d in 1..=2 {
                let g = DyadicGrid::new(d, 4, 2, boundary).unwrap();
                let f = random_field(g, 13 + d as u64);
                for k in 0..=4 {
                    let fast = ball_average(&f, k).unwrap();
                    let slow = ball_average_direct(&f, k);
                    assert!((&fast - &slow).max_abs() < 1e-13, "{boundary:?} d={d} k={k}");
                }
            }
        }
    }

    #[test]
    fn truncated_average_is_dominated_by_ball_average() {
        let g = DyadicGrid::new(2, 4, 1, Boundary::Torus).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let vals: Vec<f64> = (0..g.num_cells()).map(|_| rng.random_range(0.0..1.0)).collect();
        let u = MatrixField::from_scalars(g, &vals).unwrap();
        for k in 0..4 {
            let full = ball_average(&u, k).unwrap();
            for n in k + 1..=4 {
                let t = truncated_average(&u, k, n).unwrap();
                for c in 0..g.num_cells() {
                    assert!(t.cell(c)[(0, 0)].re <= full.cell(c)[(0, 0)].re + 1e-14);
                    assert!(t.cell(c)[(0, 0)].re >= -1e-14);
                }
            }
        }
        assert!(truncated_average(&MatrixField::zeros(g), 1, 3).unwrap().max_abs() == 0.0);
        assert!(matches!(truncated_average(&u, 2, 2), Err(Error::LevelOrderViolation { .. })));
    }

    #[test]
    fn tilde_average_is_positive() {
        let g = DyadicGrid::new(1, 5, 1, Boundary::Zero).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let vals: Vec<f64> = (0..g.num_cells()).map(|_| rng.random_range(0.0..1.0)).collect();
        let v = MatrixField::from_scalars(g, &vals).unwrap();
        let t = tilde_average(&v, 1, 4).unwrap();
        assert!(t.data().iter().all(|z| z.re >= 0.0));
        assert_eq!(tilde_average(&MatrixField::zeros(g), 1, 4).unwrap().max_abs(), 0.0);
        assert!(matches!(tilde_average(&v, 3, 1), Err(Error::LevelOrderViolation { .. })));
    }
}
