//! Measurements behind each claim. Every function returns raw quantities;
//! the suite turns them into records.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::czd::CZDecomposition;
use crate::dyadic::{
    ball_average, cond_expectation, field_distribution, field_lp_norm, field_weak_l1,
    martingale_difference, tilde_average, truncated_average, Boundary, DyadicCube, DyadicGrid,
    MatrixField,
};
use crate::error::Result;
use crate::spectral::{self, Mat};
use crate::transforms::{average_gap, transform_t, LevelRange, PowerIteration, SignSequence};

/// `(sup_s s * phi(chi_{(s, inf)}(|Tf|))) / ||f||_1`.
pub fn weak11_ratio(tf: &MatrixField, f: &MatrixField) -> Result<f64> {
    let f1 = field_lp_norm(f, 1.0)?;
    Ok(if f1 > 0.0 { field_weak_l1(tf) / f1 } else { 0.0 })
}

/// `||Tf||_p / ||f||_p`.
pub fn lp_ratio(tf: &MatrixField, f: &MatrixField, p: f64) -> Result<f64> {
    let fp = field_lp_norm(f, p)?;
    Ok(if fp > 0.0 { field_lp_norm(tf, p)? / fp } else { 0.0 })
}

/// The dyadic row and column BMO norms.
pub fn bmo_norm(f: &MatrixField) -> Result<(f64, f64)> {
    let mut row = 0.0f64;
    let mut col = 0.0f64;
    for k in 0..=f.grid().finest_level() {
        let dev = f - &cond_expectation(f, k)?;
        let c = cond_expectation(&dev.adjoint().product(&dev), k)?;
        let r = cond_expectation(&dev.product(&dev.adjoint()), k)?;
        col = col.max(max_sqrt_norm(&c));
        row = row.max(max_sqrt_norm(&r));
    }
    Ok((row, col))
}

fn max_sqrt_norm(f: &MatrixField) -> f64 {
    (0..f.num_cells())
        .into_par_iter()
        .map(|c| spectral::max_eigenvalue(&f.cell(c)).max(0.0).sqrt())
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max)
}

/// `max(row, column) BMO of Tf / ||f||_inf`.
pub fn linfty_bmo_ratio(tf: &MatrixField, f: &MatrixField) -> Result<f64> {
    let top = f.max_operator_norm();
    let (r, c) = bmo_norm(tf)?;
    Ok(if top > 0.0 { r.max(c) / top } else { 0.0 })
}

/// The cell standing for the center of `cube`: the cell whose lower corner
/// is the center, or the cube itself when it is a single cell.
pub fn center_cell(grid: &DyadicGrid, cube: &DyadicCube) -> usize {
    let s = grid.cube_side_cells(cube.level);
    let off = s / 2;
    let c = [cube.coords[0] * s + off, cube.coords[1] * s + off];
    grid.index(if grid.dim() == 1 { [c[0], 0] } else { c })
}

/// Whether `cell` lies in `3Q` (cube coordinates within one of `Q`'s per
/// axis, cyclic on the torus).
fn in_triple(grid: &DyadicGrid, cube: &DyadicCube, cell: usize) -> bool {
    let other = grid.cube_of(cell, cube.level);
    let per = 1i64 << cube.level;
    (0..grid.dim()).all(|a| {
        let d = (cube.coords[a] as i64 - other.coords[a] as i64).abs();
        let d = match grid.boundary() {
            Boundary::Torus => d.min(per - d),
            Boundary::Zero => d,
        };
        d <= 1
    })
}

/// `max_{x in Q} ||F_{k,Q}(x)|| / (2^k l(Q) ||f||_inf)` where
/// `F_{k,Q}(x) = (M_k - E_k) f_2 (x) - (M_k - E_k) f_2 (c_Q)` and
/// `f_2 = f` outside `3Q`, for `2^{-k} >= l(Q)`.
pub fn kernel_regularity(f: &MatrixField, cube: &DyadicCube, k: u32) -> Result<f64> {
    let grid = *f.grid();
    let top = f.max_operator_norm();
    if top == 0.0 {
        return Ok(0.0);
    }
    let n = grid.matdim();
    let zero = Mat::zeros(n, n);
    let f2 = MatrixField::from_fn(grid, |c| {
        if in_triple(&grid, cube, c) {
            zero.clone()
        } else {
            f.cell(c)
        }
    });
    let gap = average_gap(&f2, k)?;
    let center = gap.cell(center_cell(&grid, cube));
    let worst = grid
        .cube_cells(cube)
        .into_iter()
        .map(|x| spectral::operator_norm(&(gap.cell(x) - &center)))
        .fold(0.0, f64::max);
    let scale = (k as f64).exp2() * cube.side() * top;
    Ok(worst / scale)
}

/// Sampled cubes for the kernel-regularity measurement: up to `per_level`
/// seeded cubes at every level `1..=K`.
pub fn sample_cubes(grid: &DyadicGrid, per_level: usize, seed: u64) -> Vec<DyadicCube> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for level in 1..=grid.finest_level() {
        let cubes: Vec<DyadicCube> = grid.cubes(level).collect();
        for _ in 0..per_level.min(cubes.len()) {
            out.push(cubes[rng.random_range(0..cubes.len())]);
        }
    }
    out
}

/// One term of the orthogonality grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayTerm {
    pub k: u32,
    pub n: u32,
    /// `||(M_k - E_k) dh_n||_2^2 * 2^{|n-k|} / ||dh_n||_2^2`.
    pub scaled: f64,
}

/// All admissible `(k, n)` terms with `dh_n != 0`.
pub fn orthogonality_decay(f: &MatrixField) -> Result<Vec<DecayTerm>> {
    let big_k = f.grid().finest_level();
    let mut out = Vec::new();
    for n in 1..=big_k {
        let dh = martingale_difference(f, n)?;
        let base = field_lp_norm(&dh, 2.0)?.powi(2);
        if base <= 1e-28 * field_lp_norm(f, 2.0)?.powi(2).max(f64::MIN_POSITIVE) {
            continue;
        }
        for k in 0..=big_k {
            let num = field_lp_norm(&average_gap(&dh, k)?, 2.0)?.powi(2);
            let exp = (n as i32 - k as i32).unsigned_abs();
            out.push(DecayTerm {
                k,
                n,
                scaled: num * (exp as f64).exp2() / base,
            });
        }
    }
    Ok(out)
}

/// `max_{n, k < n-1} ||M_k dh_n - M_{k,n-1} dh_n||_2 / ||dh_n||_2`.
pub fn martingale_cancellation_residual(f: &MatrixField) -> Result<f64> {
    let big_k = f.grid().finest_level();
    let mut worst = 0.0f64;
    for n in 2..=big_k {
        let dh = martingale_difference(f, n)?;
        let base = field_lp_norm(&dh, 2.0)?;
        if base == 0.0 {
            continue;
        }
        for k in 0..n - 1 {
            let diff = &ball_average(&dh, k)? - &truncated_average(&dh, k, n - 1)?;
            worst = worst.max(field_lp_norm(&diff, 2.0)? / base);
        }
    }
    Ok(worst)
}

/// `||R_j Delta_k||` with `R_j = M_j - E_j`, scaled by `2^{|j-k|/2}`, for
/// `j = 0..=K`, `k = 1..=K`.
pub fn carbery_grid(grid: DyadicGrid, settings: &PowerIteration) -> Result<Vec<(u32, u32, f64)>> {
    let scalar = grid.with_matdim(1);
    let big_k = grid.finest_level();
    let mut out = Vec::new();
    for j in 0..=big_k {
        for k in 1..=big_k {
            let norm = settings.estimate(scalar, |v| {
                let a = martingale_difference(v, k)?;
                let b = average_gap(&average_gap(&a, j)?, j)?;
                martingale_difference(&b, k)
            })?;
            let exp = (j as i32 - k as i32).unsigned_abs() as f64;
            out.push((j, k, norm * (exp / 2.0).exp2()));
        }
    }
    Ok(out)
}

/// `max ||M_{k,n} u||_p * 2^{n-k} / ||u||_p` over `p in {1, 2, inf}` and `k < n <= K`.
pub fn truncated_average_ratio(u: &MatrixField) -> Result<f64> {
    let big_k = u.grid().finest_level();
    let norms: Vec<f64> = [1.0, 2.0, f64::INFINITY]
        .iter()
        .map(|&p| field_lp_norm(u, p))
        .collect::<Result<_>>()?;
    if norms.iter().any(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let mut worst = 0.0f64;
    for n in 1..=big_k {
        for k in 0..n {
            let m = truncated_average(u, k, n)?;
            let scale = ((n - k) as f64).exp2();
            for (i, &p) in [1.0, 2.0, f64::INFINITY].iter().enumerate() {
                worst = worst.max(field_lp_norm(&m, p)? * scale / norms[i]);
            }
        }
    }
    Ok(worst)
}

/// `sum_{n >= 1} sum_{k < n} ||M_k b_n||_1 / ||f||_1`.
pub fn bad_part_l1(dec: &CZDecomposition) -> Result<f64> {
    let f1 = field_lp_norm(&dec.f, 1.0)?;
    if f1 == 0.0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for n in 1..dec.levels() {
        if dec.is_trivial(n) {
            continue;
        }
        let bn = dec.b(n);
        for k in 0..n as u32 {
            total += field_lp_norm(&ball_average(&bn, k)?, 1.0)?;
        }
    }
    Ok(total / f1)
}

/// Per-`n` quantities of the diagonal bad part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagonalTerm {
    pub n: u32,
    /// `||sum_j M_j b_{d,n+j}||_2^2 * 2^n / (lambda ||f||_1)`.
    pub l2_scaled: f64,
    /// `max_{x, j} ||sum_{i >= j} M~_{j,n+j} M~_{i,n+i} (p_{n+i})(x)|| * 2^n`.
    pub kernel_scaled: f64,
    /// `max |M_j b_{d,n+j} - M_{j,n+j} b_{d,n+j}|`, relative.
    pub truncation: f64,
    /// Largest Loewner violation of `M_{j,m} u <= M~_{j,m} u_m`, relative.
    pub domination: f64,
    /// Number of cells where that violation exceeds its tolerance.
    pub domination_failures: usize,
}

const DOMINATION_TOL: f64 = 1e-9;

/// The diagonal bad part measurements for every `n = 1..=K`.
pub fn diag_bad_l2(dec: &CZDecomposition) -> Result<Vec<DiagonalTerm>> {
    let grid = *dec.grid();
    let big_k = grid.finest_level();
    let f1 = field_lp_norm(&dec.f, 1.0)?;
    let scale = dec.lambda.max(dec.f.max_operator_norm());
    let mut out = Vec::new();
    for n in 1..=big_k {
        let mut sum = MatrixField::zeros(grid);
        let mut truncation = 0.0f64;
        let mut domination = 0.0f64;
        let mut failures = 0usize;
        let mut any = false;
        for j in 0..=big_k - n {
            let m = n + j;
            if dec.is_trivial(m as usize) {
                continue;
            }
            any = true;
            let bd = &dec.diagonal[m as usize];
            let full = ball_average(bd, j)?;
            let trunc = truncated_average(bd, j, m)?;
            truncation = truncation.max((&full - &trunc).max_abs() / scale);
            sum.add_scaled(&full, 1.0);

            let p = &dec.family.p[m as usize];
            let pfm = dec.family.averages[m as usize].sandwich(p, p);
            let pf = dec.f.sandwich(p, p);
            let upper = tilde_average(&pfm, j, m)?;
            for u in [&pfm, &pf] {
                let lower = truncated_average(u, j, m)?;
                let viol: Vec<f64> = (0..grid.num_cells())
                    .into_par_iter()
                    .map(|c| {
                        let (a, b) = (lower.cell(c), upper.cell(c));
                        let s = spectral::operator_norm(&b).max(dec.lambda);
                        spectral::loewner_violation(&a, &b) / s
                    })
                    .collect();
                for v in viol {
                    domination = domination.max(v);
                    if v > DOMINATION_TOL {
                        failures += 1;
                    }
                }
            }
        }
        if !any {
            continue;
        }
        let kernel = kernel_sum(dec, n)?;
        let l2 = field_lp_norm(&sum, 2.0)?.powi(2);
        let pow = (n as f64).exp2();
        out.push(DiagonalTerm {
            n,
            l2_scaled: if f1 > 0.0 { l2 * pow / (dec.lambda * f1) } else { 0.0 },
            kernel_scaled: kernel * pow,
            truncation,
            domination,
            domination_failures: failures,
        });
    }
    Ok(out)
}

/// `max_{x, j} || sum_{i >= j} M~_{j,n+j} M~_{i,n+i}(p_{n+i})(x) ||`.
pub fn kernel_sum(dec: &CZDecomposition, n: u32) -> Result<f64> {
    let grid = *dec.grid();
    let big_k = grid.finest_level();
    if n == 0 || n > big_k {
        return Ok(0.0);
    }
    let inner: Vec<Option<MatrixField>> = (0..=big_k - n)
        .map(|i| {
            let m = n + i;
            if dec.is_trivial(m as usize) {
                Ok(None)
            } else {
                tilde_average(&dec.family.p[m as usize], i, m).map(Some)
            }
        })
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    let mut tail = MatrixField::zeros(grid);
    for j in (0..=big_k - n).rev() {
        if let Some(v) = &inner[j as usize] {
            tail.add_scaled(v, 1.0);
        }
        if tail.max_abs() == 0.0 {
            continue;
        }
        let outer = tilde_average(&tail, j, n + j)?;
        worst = worst.max(outer.max_operator_norm());
    }
    Ok(worst)
}

/// Links of the good-part chain, all divided by `||f||_1 / lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoodPartChain {
    /// `lambda * phi(chi_{(lambda/2, inf)}(|Tg|)) / ||f||_1`.
    pub distribution: f64,
    /// `4 ||Tg||_2^2 / (lambda ||f||_1)`.
    pub chebyshev: f64,
    /// `4 ||g||_2^2 / (lambda ||f||_1)`.
    pub l2: f64,
    /// `4 ||g||_1 ||g||_inf / (lambda ||f||_1)`.
    pub holder: f64,
}

pub fn good_part_weak11(dec: &CZDecomposition, nu: &SignSequence) -> Result<GoodPartChain> {
    let grid = *dec.grid();
    let lambda = dec.lambda;
    let f1 = field_lp_norm(&dec.f, 1.0)?;
    let tg = transform_t(&dec.g, nu, LevelRange::full(&grid))?;
    let norm = |v: f64| if f1 > 0.0 { v * lambda / f1 } else { 0.0 };
    let g1 = field_lp_norm(&dec.g, 1.0)?;
    let g2 = field_lp_norm(&dec.g, 2.0)?;
    let ginf = dec.g.max_operator_norm();
    let tg2 = field_lp_norm(&tg, 2.0)?;
    Ok(GoodPartChain {
        distribution: norm(field_distribution(&tg, lambda / 2.0)),
        chebyshev: norm(4.0 * tg2 * tg2 / (lambda * lambda)),
        l2: norm(4.0 * g2 * g2 / (lambda * lambda)),
        holder: norm(4.0 * g1 * ginf / (lambda * lambda)),
    })
}
