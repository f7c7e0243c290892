//! Cuculescu projections and the Calderon-Zygmund decomposition.
//!
//! For a PSD field `f` and `lambda > 0`, with `f_k = E_k f` and `q_{-1} = 1`,
//!
//! ```text
//! p_k = chi_{(lambda, inf)}(q_{k-1} f_k q_{k-1}),   q_k = q_{k-1} - p_k,   k = 0..K
//! ```
//!
//! and `q = q_K`. The decomposition is `f = g + sum_n b_n` with
//!
//! ```text
//! g   = q f q + sum_n p_n f_n p_n
//! b_n = p_n (f - f_n) q_n + q_{n-1} (f - f_n) p_n
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{
    ball_average, cond_expectation, field_lp_norm, tensor_trace, Boundary, DyadicCube, DyadicGrid,
    MatrixField,
};
use crate::error::{Error, Result};
use crate::spectral::{self, Interval, Mat, ProjectionMatrix};

/// PSD slack used when validating inputs.
pub const PSD_TOL: f64 = 1e-9;

/// Relative slack for `E_k f <= lambda` in the root-level test, matching the
/// endpoint snapping of spectral projections.
const ROOT_SLACK: f64 = 1e-12;

/// Every matrix has finite trace support in finite dimensions.
pub fn has_finite_trace_support(_f: &MatrixField) -> bool {
    true
}

/// Result of `m_lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MLambda {
    /// Largest `m` with `E_k f <= lambda` for all `k <= m`.
    Level(u32),
    /// Already `E_0 f` is not bounded by `lambda`.
    RootExceeds,
}

fn cube_representatives(grid: &DyadicGrid, k: u32) -> Vec<usize> {
    grid.cubes(k).map(|q| grid.cube_cells(&q)[0]).collect()
}

fn bounded_by(x: &Mat, lambda: f64) -> bool {
    let top = spectral::max_eigenvalue(x);
    top <= lambda || (top - lambda).abs() <= ROOT_SLACK * top.abs().max(lambda)
}

/// `m_lambda(f)`.
pub fn m_lambda(f: &MatrixField, lambda: f64) -> Result<MLambda> {
    f.check_psd(PSD_TOL)?;
    check_lambda(lambda)?;
    let grid = *f.grid();
    let mut last = None;
    for k in 0..=grid.finest_level() {
        let fk = cond_expectation(f, k)?;
        let ok = cube_representatives(&grid, k)
            .into_par_iter()
            .all(|c| bounded_by(&fk.cell(c), lambda));
        if !ok {
            break;
        }
        last = Some(k);
    }
    Ok(match last {
        Some(m) => MLambda::Level(m),
        None => MLambda::RootExceeds,
    })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    Ok(())
}

fn hermitian_part(x: &Mat) -> Mat {
    (x + x.adjoint()).scale(0.5)
}

/// The stopping-time projections of a PSD field.
#[derive(Debug, Clone, PartialEq)]
pub struct CuculescuFamily {
    pub lambda: f64,
    pub root: MLambda,
    /// `q[k] = q_k` for `k = 0..=K`.
    pub q: Vec<MatrixField>,
    /// `p[k] = q_{k-1} - q_k`, with `q_{-1} = 1`.
    pub p: Vec<MatrixField>,
    /// `q = q_K`, the meet of the decreasing sequence.
    pub terminal: MatrixField,
    /// `f_k = E_k f`.
    pub averages: Vec<MatrixField>,
}

impl CuculescuFamily {
    pub fn grid(&self) -> &DyadicGrid {
        self.terminal.grid()
    }

    pub fn start_level(&self) -> u32 {
        0
    }

    /// `q_{k-1}` with `q_{-1} = 1`.
    pub fn q_before(&self, k: u32) -> MatrixField {
        if k == 0 {
            MatrixField::identity(*self.grid())
        } else {
            self.q[k as usize - 1].clone()
        }
    }

    /// Whether `p_k` vanishes everywhere.
    pub fn stops_nowhere(&self, k: u32) -> bool {
        self.p[k as usize].max_abs() == 0.0
    }

    /// Projection value of `p_k` on the level-`k` cube `cube`.
    pub fn p_on(&self, cube: &DyadicCube) -> Mat {
        let cell = self.grid().cube_cells(cube)[0];
        self.p[cube.level as usize].cell(cell)
    }
}

/// Builds the Cuculescu projections of `f` at height `lambda`.
pub fn cuculescu(f: &MatrixField, lambda: f64) -> Result<CuculescuFamily> {
    let root = m_lambda(f, lambda)?;
    let grid = *f.grid();
    let n = grid.matdim();
    let mut q_prev = MatrixField::identity(grid);
    let mut qs = Vec::new();
    let mut ps = Vec::new();
    let mut averages = Vec::new();
    for k in 0..=grid.finest_level() {
        let fk = cond_expectation(f, k)?;
        let per_cube: Vec<(Mat, Mat)> = cube_representatives(&grid, k)
            .into_par_iter()
            .map(|c| {
                let qp = q_prev.cell(c);
                let x = hermitian_part(&(&qp * fk.cell(c) * &qp));
                let p = spectral::spectral_projection_unchecked(&x, Interval::above(lambda)).into_inner();
                if p.iter().all(|z| *z == num_complex::Complex64::new(0.0, 0.0)) {
                    (spectral::zeros(n), qp)
                } else {
                    let q = spectral::clean_projection(&hermitian_part(&(&qp - &p)));
                    (p, q)
                }
            })
            .collect();
        let p_field = MatrixField::from_fn(grid, |c| per_cube[grid.cube_index(c, k)].0.clone());
        let q_field = MatrixField::from_fn(grid, |c| per_cube[grid.cube_index(c, k)].1.clone());
        ps.push(p_field);
        qs.push(q_field.clone());
        averages.push(fk);
        q_prev = q_field;
    }
    Ok(CuculescuFamily {
        lambda,
        root,
        terminal: q_prev,
        q: qs,
        p: ps,
        averages,
    })
}

/// Worst-case residuals of the defining properties of a Cuculescu family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuculescuResiduals {
    /// `max lambda_min`-violation of `q_k <= q_{k-1}`.
    pub monotone: f64,
    /// `max |E_k q_k - q_k|`.
    pub measurability: f64,
    /// Commutator `[q_k, q_{k-1} f_k q_{k-1}]`, relative to `max(lambda, ||f_k||)`.
    pub commutation: f64,
    /// Violation of `q_k f_k q_k <= lambda q_k`, relative to `max(lambda, ||f_k||)`.
    pub compression: f64,
    /// `max |sum_k p_k + q - 1|`.
    pub partition: f64,
    /// `max_k ||p_k f_k p_k||_inf / (2^d lambda)` over `k >= 1`.
    pub stopped_ratio: f64,
    /// The same ratio at `k = 0`; bounded by 1 unless the root level exceeds `lambda`.
    pub root_stopped_ratio: f64,
    /// `phi(1 - q) * lambda / ||f||_1`.
    pub maximal_ratio: f64,
    /// `phi(1 - q)`.
    pub bad_mass: f64,
}

impl CuculescuResiduals {
    /// The five residuals that must vanish.
    pub fn worst(&self) -> f64 {
        [
            self.monotone,
            self.measurability,
            self.commutation,
            self.compression,
            self.partition,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn max_over_cells(grid: &DyadicGrid, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    (0..grid.num_cells())
        .into_par_iter()
        .map(f)
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max)
}

/// Measures every defining property of `family` against `f`.
pub fn cuculescu_residuals(f: &MatrixField, family: &CuculescuFamily) -> Result<CuculescuResiduals> {
    let grid = *f.grid();
    let lambda = family.lambda;
    let two_d = (1u32 << grid.dim()) as f64;
    let mut r = CuculescuResiduals {
        monotone: 0.0,
        measurability: 0.0,
        commutation: 0.0,
        compression: 0.0,
        partition: 0.0,
        stopped_ratio: 0.0,
        root_stopped_ratio: 0.0,
        maximal_ratio: 0.0,
        bad_mass: 0.0,
    };
    let mut partition = family.terminal.clone();
    for k in 0..=grid.finest_level() {
        let qk = &family.q[k as usize];
        let pk = &family.p[k as usize];
        let fk = &family.averages[k as usize];
        let q_prev = family.q_before(k);
        partition.add_scaled(pk, 1.0);
        r.monotone = r.monotone.max(max_over_cells(&grid, |c| {
            spectral::loewner_violation(&qk.cell(c), &q_prev.cell(c))
        }));
        r.measurability = r.measurability.max((&cond_expectation(qk, k)? - qk).max_abs());
        r.commutation = r.commutation.max(max_over_cells(&grid, |c| {
            let fc = fk.cell(c);
            let qp = q_prev.cell(c);
            let q = qk.cell(c);
            let x = &qp * &fc * &qp;
            let scale = lambda.max(spectral::operator_norm(&fc));
            spectral::operator_norm(&(&q * &x - &x * &q)) / scale
        }));
        r.compression = r.compression.max(max_over_cells(&grid, |c| {
            let fc = fk.cell(c);
            let q = qk.cell(c);
            let lhs = hermitian_part(&(&q * &fc * &q));
            let scale = lambda.max(spectral::operator_norm(&fc));
            spectral::loewner_violation(&lhs, &q.scale(lambda)) / scale
        }));
        let stopped = max_over_cells(&grid, |c| {
            let p = pk.cell(c);
            spectral::operator_norm(&(&p * fk.cell(c) * &p))
        }) / (two_d * lambda);
        if k == 0 {
            r.root_stopped_ratio = stopped;
        } else {
            r.stopped_ratio = r.stopped_ratio.max(stopped);
        }
    }
    r.partition = (&partition - &MatrixField::identity(grid)).max_abs();
    let complement = &MatrixField::identity(grid) - &family.terminal;
    r.bad_mass = tensor_trace(&complement).re;
    let f1 = field_lp_norm(f, 1.0)?;
    r.maximal_ratio = if f1 > 0.0 { r.bad_mass * lambda / f1 } else { 0.0 };
    Ok(r)
}

/// Linear indices of the level-`k` cubes `Q` with `cube` inside `5Q`.
pub fn five_fold_cube_indices(grid: &DyadicGrid, cube: &DyadicCube) -> Vec<usize> {
    let per = 1i64 << cube.level;
    let axis = |c: usize| -> Vec<usize> {
        let mut v: Vec<usize> = (-2i64..=2)
            .filter_map(|d| {
                let raw = c as i64 + d;
                match grid.boundary() {
                    Boundary::Torus => Some(raw.rem_euclid(per) as usize),
                    Boundary::Zero => (0..per).contains(&raw).then_some(raw as usize),
                }
            })
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let a0 = axis(cube.coords[0]);
    if grid.dim() == 1 {
        return a0;
    }
    let a1 = axis(cube.coords[1]);
    let mut out = Vec::with_capacity(a0.len() * a1.len());
    for &i in &a0 {
        for &j in &a1 {
            out.push(DyadicCube { level: cube.level, coords: [i, j] }.linear_index(2));
        }
    }
    out
}

/// `zeta(x)`: the complement of the join of `p_Q` over all dyadic `Q` with `x in 5Q`.
pub fn zeta(family: &CuculescuFamily) -> MatrixField {
    let grid = *family.grid();
    let n = grid.matdim();
    let bases: Vec<Vec<Option<Mat>>> = (0..=grid.finest_level())
        .map(|k| {
            cube_representatives(&grid, k)
                .into_par_iter()
                .map(|c| {
                    let p = ProjectionMatrix::new_unchecked(family.p[k as usize].cell(c));
                    (p.rank() > 0).then(|| p.range_basis())
                })
                .collect()
        })
        .collect();
    MatrixField::from_fn(grid, |x| {
        let mut stack = Vec::new();
        for k in 0..=grid.finest_level() {
            let level = &bases[k as usize];
            if level.iter().all(Option::is_none) {
                continue;
            }
            for q in five_fold_cube_indices(&grid, &grid.cube_of(x, k)) {
                if let Some(b) = &level[q] {
                    stack.push(b.clone());
                }
            }
        }
        spectral::join_of_bases(n, &stack).complement().into_inner()
    })
}

/// The Calderon-Zygmund decomposition of a PSD field.
#[derive(Debug, Clone, PartialEq)]
pub struct CZDecomposition {
    pub f: MatrixField,
    pub lambda: f64,
    pub family: CuculescuFamily,
    pub g: MatrixField,
    /// `p_n (f - f_n) q_n`.
    pub b_left: Vec<MatrixField>,
    /// `q_{n-1} (f - f_n) p_n`.
    pub b_right: Vec<MatrixField>,
    pub zeta: MatrixField,
    /// `b_{d,n} = p_n (f - f_n) p_n`.
    pub diagonal: Vec<MatrixField>,
    /// `b_{off,n} = p_n (f - f_n) q_n + q_n (f - f_n) p_n`.
    pub offdiag: Vec<MatrixField>,
}

impl CZDecomposition {
    pub fn grid(&self) -> &DyadicGrid {
        self.f.grid()
    }

    pub fn levels(&self) -> usize {
        self.b_left.len()
    }

    pub fn b(&self, n: usize) -> MatrixField {
        &self.b_left[n] + &self.b_right[n]
    }

    /// `b = sum_n b_n`.
    pub fn b_total(&self) -> MatrixField {
        let mut out = MatrixField::zeros(*self.grid());
        for n in 0..self.levels() {
            out.add_scaled(&self.b_left[n], 1.0);
            out.add_scaled(&self.b_right[n], 1.0);
        }
        out
    }

    /// `b_n` vanishes identically (because `p_n = 0`).
    pub fn is_trivial(&self, n: usize) -> bool {
        self.family.stops_nowhere(n as u32)
    }
}

/// Runs the Cuculescu construction and assembles `g`, the `b_n`, `zeta`
/// and the diagonal/off-diagonal parts.
pub fn cz_decompose(f: &MatrixField, lambda: f64) -> Result<CZDecomposition> {
    let family = cuculescu(f, lambda)?;
    let grid = *f.grid();
    let q = &family.terminal;
    let mut g = f.sandwich(q, q);
    let mut b_left = Vec::new();
    let mut b_right = Vec::new();
    let mut diagonal = Vec::new();
    let mut offdiag = Vec::new();
    for k in 0..=grid.finest_level() {
        let pk = &family.p[k as usize];
        let qk = &family.q[k as usize];
        let fk = &family.averages[k as usize];
        if family.stops_nowhere(k) {
            for v in [&mut b_left, &mut b_right, &mut diagonal, &mut offdiag] {
                v.push(MatrixField::zeros(grid));
            }
            continue;
        }
        g.add_scaled(&fk.sandwich(pk, pk), 1.0);
        let q_prev = family.q_before(k);
        let dev = f - fk;
        let left = dev.sandwich(pk, qk);
        let right_q = dev.sandwich(qk, pk);
        b_right.push(dev.sandwich(&q_prev, pk));
        diagonal.push(dev.sandwich(pk, pk));
        offdiag.push(&left + &right_q);
        b_left.push(left);
    }
    let zeta = zeta(&family);
    Ok(CZDecomposition {
        f: f.clone(),
        lambda,
        family,
        g,
        b_left,
        b_right,
        zeta,
        diagonal,
        offdiag,
    })
}

/// `(b_d parts, b_off parts)`.
pub fn diag_offdiag_split(dec: &CZDecomposition) -> (&[MatrixField], &[MatrixField]) {
    (&dec.diagonal, &dec.offdiag)
}

/// Residuals of the decomposition's structural identities and bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResiduals {
    /// `||f - g - sum b_n||_1 / ||f||_1`.
    pub reconstruction: f64,
    /// `||g||_1 / ||f||_1`.
    pub good_l1_ratio: f64,
    /// `||g||_inf / (2^d lambda)`.
    pub good_linf_ratio: f64,
    /// Most negative eigenvalue of `g`, relative to `lambda`.
    pub good_psd_violation: f64,
    /// `phi(1 - zeta) * lambda / (5^d ||f||_1)`.
    pub zeta_ratio: f64,
    pub zeta_mass: f64,
    /// `max_n |sum_n (b_{d,n} + b_{off,n}) - sum_n b_n|`.
    pub split: f64,
    /// `max_n |b_n - (p_n f q_n + q_{n-1} f p_n - q_{n-1} f_n p_n)|`, relative.
    pub termwise: f64,
}

pub fn decomposition_residuals(dec: &CZDecomposition) -> Result<DecompositionResiduals> {
    let grid = *dec.grid();
    let f1 = field_lp_norm(&dec.f, 1.0)?;
    let lambda = dec.lambda;
    let scale = lambda.max(dec.f.max_operator_norm());
    let mut recon = &dec.f - &dec.g;
    recon.add_scaled(&dec.b_total(), -1.0);
    let mut split = MatrixField::zeros(grid);
    let mut termwise = 0.0f64;
    for n in 0..dec.levels() {
        split.add_scaled(&dec.diagonal[n], 1.0);
        split.add_scaled(&dec.offdiag[n], 1.0);
        split.add_scaled(&dec.b_left[n], -1.0);
        split.add_scaled(&dec.b_right[n], -1.0);
        if dec.is_trivial(n) {
            continue;
        }
        let p = &dec.family.p[n];
        let q = &dec.family.q[n];
        let q_prev = dec.family.q_before(n as u32);
        let fn_ = &dec.family.averages[n];
        let mut alt = dec.f.sandwich(p, q);
        alt.add_scaled(&dec.f.sandwich(&q_prev, p), 1.0);
        alt.add_scaled(&fn_.sandwich(&q_prev, p), -1.0);
        termwise = termwise.max((&alt - &dec.b(n)).max_abs() / scale);
    }
    let ones = MatrixField::identity(grid);
    let zeta_mass = tensor_trace(&(&ones - &dec.zeta)).re;
    let five_d = 5f64.powi(grid.dim() as i32);
    let two_d = (1u32 << grid.dim()) as f64;
    let psd = max_over_cells(&grid, |c| (-spectral::min_eigenvalue(&dec.g.cell(c))).max(0.0));
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    Ok(DecompositionResiduals {
        reconstruction: ratio(field_lp_norm(&recon, 1.0)?, f1),
        good_l1_ratio: ratio(field_lp_norm(&dec.g, 1.0)?, f1),
        good_linf_ratio: dec.g.max_operator_norm() / (two_d * lambda),
        good_psd_violation: psd / lambda,
        zeta_ratio: ratio(zeta_mass * lambda, five_d * f1),
        zeta_mass,
        split: split.max_abs() / scale,
        termwise,
    })
}

/// Worst residuals of the two cancellation conditions and of the consequence
/// `zeta (M_k - E_k) b_n zeta = 0` for `k >= n`, all relative to
/// `max(lambda, ||f||_inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CancellationReport {
    /// `max_{n, Q in Q_n} || |Q|^{-1} int_Q b_n ||`.
    pub integral: f64,
    /// `max ||zeta(x) b_n(y) zeta(x)||` over `y in 5 Q_{x,n}`.
    pub localized: f64,
    /// `max ||zeta M_k b_n zeta||` over `k >= n`.
    pub ball: f64,
    /// `max ||zeta E_k b_n zeta||` over `k >= n`.
    pub conditional: f64,
}

impl CancellationReport {
    pub fn worst(&self) -> f64 {
        self.integral
            .max(self.localized)
            .max(self.ball)
            .max(self.conditional)
    }
}

pub fn cancellation_check(dec: &CZDecomposition) -> Result<CancellationReport> {
    let grid = *dec.grid();
    let scale = dec.lambda.max(dec.f.max_operator_norm());
    let zeta_bases: Vec<Option<Mat>> = (0..grid.num_cells())
        .into_par_iter()
        .map(|x| {
            let z = ProjectionMatrix::new_unchecked(dec.zeta.cell(x));
            (z.rank() > 0).then(|| z.range_basis())
        })
        .collect();
    let compressed = |basis: &Mat, m: &Mat| spectral::operator_norm(&(basis.adjoint() * m * basis));
    let mut report = CancellationReport {
        integral: 0.0,
        localized: 0.0,
        ball: 0.0,
        conditional: 0.0,
    };
    let b_parts: Vec<MatrixField> = (0..dec.levels()).map(|n| dec.b(n)).collect();
    for (n, bn) in b_parts.iter().enumerate() {
        if dec.is_trivial(n) {
            continue;
        }
        let level = n as u32;
        report.integral = report.integral.max(cond_expectation(bn, level)?.max_abs() / scale);
        let pn = &dec.family.p[n];
        let active: Vec<bool> = cube_representatives(&grid, level)
            .iter()
            .map(|&c| pn.cell_slice(c).iter().any(|z| z.norm() > 0.0))
            .collect();
        let localized = max_over_cells(&grid, |x| {
            let Some(v) = &zeta_bases[x] else { return 0.0 };
            let mut worst = 0.0f64;
            for qi in five_fold_cube_indices(&grid, &grid.cube_of(x, level)) {
                if !active[qi] {
                    continue;
                }
                let cube = grid.cubes(level).nth(qi).expect("cube index in range");
                for y in grid.cube_cells(&cube) {
                    worst = worst.max(compressed(v, &bn.cell(y)));
                }
            }
            worst
        });
        report.localized = report.localized.max(localized / scale);
        for k in level..=grid.finest_level() {
            let mk = ball_average(bn, k)?;
            let ek = cond_expectation(bn, k)?;
            let (ball, cond) = (0..grid.num_cells())
                .into_par_iter()
                .map(|x| match &zeta_bases[x] {
                    Some(v) => (compressed(v, &mk.cell(x)), compressed(v, &ek.cell(x))),
                    None => (0.0, 0.0),
                })
                .collect::<Vec<_>>()
                .into_iter()
                .fold((0.0f64, 0.0f64), |(a, b), (c, d)| (a.max(c), b.max(d)));
            report.ball = report.ball.max(ball / scale);
            report.conditional = report.conditional.max(cond / scale);
        }
    }
    Ok(report)
}

/// Per-level comparison of `sum_{k<n} ||M_k b_n||_1` with
/// `(lambda phi(p_n))^{1/2} (phi(f p_n))^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoarseAverageTerm {
    pub n: u32,
    pub lhs: f64,
    pub rhs: f64,
}

impl CoarseAverageTerm {
    pub fn ratio(&self) -> f64 {
        if self.rhs > 0.0 {
            self.lhs / self.rhs
        } else {
            0.0
        }
    }
}

/// The terms above for every `n >= 1` with `p_n != 0`. `phi(f p_n)` is
/// evaluated as `tensor_trace(f p_n)`, which is real for PSD `f`.
pub fn coarse_average_terms(dec: &CZDecomposition) -> Result<Vec<CoarseAverageTerm>> {
    let mut out = Vec::new();
    for n in 1..dec.levels() {
        if dec.is_trivial(n) {
            continue;
        }
        let bn = dec.b(n);
        let mut lhs = 0.0;
        for k in 0..n as u32 {
            lhs += field_lp_norm(&ball_average(&bn, k)?, 1.0)?;
        }
        let pn = &dec.family.p[n];
        let phi_p = tensor_trace(pn).re;
        let phi_fp = tensor_trace(&dec.f.product(pn)).re.max(0.0);
        out.push(CoarseAverageTerm {
            n: n as u32,
            lhs,
            rhs: (dec.lambda * phi_p).sqrt() * phi_fp.sqrt(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spike() -> MatrixField {
        let g = DyadicGrid::new(1, 2, 1, Boundary::Torus).unwrap();
        MatrixField::from_scalars(g, &[4.0, 0.0, 0.0, 0.0]).unwrap()
    }

    fn scalars(f: &MatrixField) -> Vec<f64> {
        f.data().iter().map(|z| z.re).collect()
    }

    fn random_psd(grid: DyadicGrid, seed: u64) -> MatrixField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = grid.matdim();
        let cells = (0..grid.num_cells())
            .map(|_| {
                let a = Mat::from_fn(n, n, |_, _| {
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                });
                let s = if rng.random_range(0.0..1.0) < 0.2 { 8.0 } else { 1.0 };
                (&a * a.adjoint()).scale(s)
            })
            .collect();
        MatrixField::from_cells(grid, cells).unwrap()
    }

    #[test]
    fn m_lambda_examples() {
        assert_eq!(m_lambda(&spike(), 1.0).unwrap(), MLambda::Level(0));
        assert_eq!(m_lambda(&spike(), 4.0).unwrap(), MLambda::Level(2));
        let g = DyadicGrid::new(1, 2, 1, Boundary::Torus).unwrap();
        let two = MatrixField::from_scalars(g, &[2.0; 4]).unwrap();
        assert_eq!(m_lambda(&two, 1.0).unwrap(), MLambda::RootExceeds);
        let neg = MatrixField::from_scalars(g, &[1.0, -1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(m_lambda(&neg, 1.0), Err(Error::NonPositiveField { cell: 1, .. })));
    }

    #[test]
    fn worked_scalar_family() {
        let fam = cuculescu(&spike(), 1.0).unwrap();
        assert_eq!(scalars(&fam.q[0]), vec![1.0; 4]);
        assert_eq!(scalars(&fam.q[1]), vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(scalars(&fam.p[1]), vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(scalars(&fam.q[2]), scalars(&fam.q[1]));
        let r = cuculescu_residuals(&spike(), &fam).unwrap();
        assert_abs_diff_eq!(r.bad_mass, 0.5, epsilon = 1e-15);
        assert!(r.maximal_ratio <= 1.0);
    }

    #[test]
    fn worked_scalar_decomposition() {
        let dec = cz_decompose(&spike(), 1.0).unwrap();
        assert_eq!(scalars(&dec.g), vec![2.0, 2.0, 0.0, 0.0]);
        assert_eq!(scalars(&dec.b(1)), vec![2.0, -2.0, 0.0, 0.0]);
        assert_eq!(scalars(&dec.zeta), vec![0.0; 4]);
        assert_eq!(scalars(&dec.diagonal[1]), vec![2.0, -2.0, 0.0, 0.0]);
        assert_eq!(dec.offdiag[1].max_abs(), 0.0);
        let r = decomposition_residuals(&dec).unwrap();
        assert_eq!(r.reconstruction, 0.0);
        assert_abs_diff_eq!(r.zeta_mass, 1.0, epsilon = 1e-15);
        let c = cancellation_check(&dec).unwrap();
        assert_eq!(c.integral, 0.0);
    }

    #[test]
    fn large_lambda_stops_nothing() {
        let g = DyadicGrid::new(2, 3, 2, Boundary::Torus).unwrap();
        let f = random_psd(g, 1);
        let lambda = 2.0 * f.max_operator_norm();
        let dec = cz_decompose(&f, lambda).unwrap();
        assert!(dec.family.p.iter().all(|p| p.max_abs() == 0.0));
        assert_eq!(dec.g, f.sandwich(&dec.family.terminal, &dec.family.terminal));
        assert!((&dec.g - &f).max_abs() < 1e-15);
        assert!(dec.b_total().max_abs() == 0.0);
        assert!((&dec.zeta - &MatrixField::identity(g)).max_abs() == 0.0);
    }

    #[test]
    fn random_noncommuting_instance_satisfies_everything() {
        for (boundary, dim) in [(Boundary::Torus, 1), (Boundary::Zero, 2), (Boundary::Torus, 2)] {
            let g = DyadicGrid::new(dim, 3, 2, boundary).unwrap();
            let f = random_psd(g, 21 + dim as u64);
            let lambda = 0.5 * f.max_operator_norm();
            let dec = cz_decompose(&f, lambda).unwrap();
            let r = cuculescu_residuals(&f, &dec.family).unwrap();
            assert!(r.worst() < 1e-9, "{r:?}");
            assert!(r.stopped_ratio <= 1.0 + 1e-9);
            assert!(r.maximal_ratio <= 1.0);
            let d = decomposition_residuals(&dec).unwrap();
            assert!(d.reconstruction < 1e-12, "{d:?}");
            assert!(d.good_l1_ratio <= 1.0 + 1e-9);
            assert!(d.split < 1e-12 && d.termwise < 1e-9);
            assert!(d.zeta_ratio <= 1.0);
            let c = cancellation_check(&dec).unwrap();
            assert!(c.worst() < 1e-9, "{c:?}");
            for n in 0..dec.levels() {
                let e = cond_expectation(&dec.diagonal[n], n as u32).unwrap();
                assert!(e.max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zeta_is_orthogonal_to_dilated_stops() {
        let g = DyadicGrid::new(1, 4, 2, Boundary::Zero).unwrap();
        let f = random_psd(g, 5);
        let fam = cuculescu(&f, 0.8 * f.max_operator_norm()).unwrap();
        let z = zeta(&fam);
        for x in 0..g.num_cells() {
            for k in 0..=4 {
                for qi in five_fold_cube_indices(&g, &g.cube_of(x, k)) {
                    let cube = g.cubes(k).nth(qi).unwrap();
                    let p = fam.p_on(&cube);
                    assert!(spectral::max_abs(&(z.cell(x) * p)) < 1e-9);
                }
            }
        }
    }

    #[test]
    fn finite_trace_support_is_trivial() {
        assert!(has_finite_trace_support(&spike()));
    }
}
