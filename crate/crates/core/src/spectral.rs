//! Hermitian functional calculus on `n x n` complex matrices.
//!
//! The trace is the unnormalized matrix trace, so `schatten_norm(x, 1)` is the
//! sum of singular values and `distribution_at` counts singular values.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat = DMatrix<Complex64>;

/// Relative hermiticity tolerance (scaled by the operator norm).
pub const HERMITICITY_TOL: f64 = 1e-9;
/// Relative snapping tolerance for interval endpoints.
pub const ENDPOINT_SNAP: f64 = 1e-12;
/// Idempotence tolerance for projections.
pub const PROJECTION_TOL: f64 = 1e-8;
/// Singular-value cutoff used by the lattice operations.
pub const RANK_CUTOFF: f64 = 1e-10;

pub fn identity(n: usize) -> Mat {
    Mat::identity(n, n)
}

pub fn zeros(n: usize) -> Mat {
    Mat::zeros(n, n)
}

pub fn real_diag(values: &[f64]) -> Mat {
    let n = values.len();
    Mat::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(values[i], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Largest entry modulus of `x - x*`.
pub fn hermiticity_residual(x: &Mat) -> f64 {
    let n = x.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((x[(i, j)] - x[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Largest entry modulus; a cheap upper-bound proxy used for scaling tolerances.
pub fn max_abs(x: &Mat) -> f64 {
    x.iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

/// Frobenius norm.
pub fn frobenius(x: &Mat) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn check_square(x: &Mat) -> Result<()> {
    if x.nrows() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: x.ncols(),
        });
    }
    Ok(())
}

fn check_same_dim(a: &Mat, b: &Mat) -> Result<()> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    Ok(())
}

/// Validates hermiticity against `HERMITICITY_TOL * ||x||`.
pub fn check_hermitian(x: &Mat) -> Result<()> {
    check_square(x)?;
    let residual = hermiticity_residual(x);
    let tolerance = HERMITICITY_TOL * max_abs(x).max(f64::MIN_POSITIVE);
    if residual > tolerance {
        return Err(Error::NonHermitianInput {
            residual,
            tolerance,
        });
    }
    Ok(())
}

/// A validated Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(Mat);

impl HermitianMatrix {
    pub fn new(x: Mat) -> Result<Self> {
        check_hermitian(&x)?;
        Ok(Self(x))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Mat {
        &self.0
    }

    pub fn into_inner(self) -> Mat {
        self.0
    }
}

/// Eigenvalues in ascending order together with a unitary frame of eigenvectors.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub frame: Mat,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `frame * diag(g(eigenvalues)) * frame^*`.
    pub fn apply(&self, g: impl Fn(f64) -> f64) -> Mat {
        let n = self.dim();
        let mut scaled = self.frame.clone();
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            let w = g(lam);
            for i in 0..n {
                scaled[(i, j)] *= w;
            }
        }
        scaled * self.frame.adjoint()
    }

    pub fn reconstruct(&self) -> Mat {
        self.apply(|l| l)
    }

    /// Sum of the eigenprojections selected by `keep`.
    pub fn projector(&self, keep: impl Fn(f64) -> bool) -> Mat {
        self.apply(|l| if keep(l) { 1.0 } else { 0.0 })
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()))
    }
}

/// Eigendecomposition of the Hermitian part `(x + x^*)/2` without validation.
pub fn eigh(x: &Mat) -> SpectralDecomposition {
    let n = x.nrows();
    if n == 0 {
        return SpectralDecomposition {
            eigenvalues: Vec::new(),
            frame: Mat::zeros(0, 0),
        };
    }
    let sym = (x + x.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let frame = Mat::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    SpectralDecomposition { eigenvalues, frame }
}

pub fn eig_hermitian(x: &Mat) -> Result<SpectralDecomposition> {
    check_hermitian(x)?;
    Ok(eigh(x))
}

pub fn min_eigenvalue(x: &Mat) -> f64 {
    eigh(x).eigenvalues.first().copied().unwrap_or(0.0)
}

pub fn max_eigenvalue(x: &Mat) -> f64 {
    eigh(x).eigenvalues.last().copied().unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Endpoint {
    Unbounded,
    Open(f64),
    Closed(f64),
}

/// A real interval with independently open or closed endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: Endpoint,
    pub upper: Endpoint,
}

impl Interval {
    pub fn new(lower: Endpoint, upper: Endpoint) -> Self {
        Self { lower, upper }
    }

    pub fn everything() -> Self {
        Self::new(Endpoint::Unbounded, Endpoint::Unbounded)
    }

    /// `(a, b]`
    pub fn open_closed(a: f64, b: f64) -> Self {
        Self::new(Endpoint::Open(a), Endpoint::Closed(b))
    }

    /// `(a, inf)`
    pub fn above(a: f64) -> Self {
        Self::new(Endpoint::Open(a), Endpoint::Unbounded)
    }

    /// `(-inf, a]`
    pub fn at_most(a: f64) -> Self {
        Self::new(Endpoint::Unbounded, Endpoint::Closed(a))
    }

    fn endpoint_scale(&self) -> f64 {
        let mag = |e: Endpoint| match e {
            Endpoint::Unbounded => 0.0,
            Endpoint::Open(v) | Endpoint::Closed(v) => v.abs(),
        };
        mag(self.lower).max(mag(self.upper))
    }

    /// Membership with endpoint snapping: values within `snap` of an endpoint
    /// are treated as equal to it.
    pub fn contains(&self, v: f64, snap: f64) -> bool {
        let lower_ok = match self.lower {
            Endpoint::Unbounded => true,
            Endpoint::Open(a) => v > a && (v - a).abs() > snap,
            Endpoint::Closed(a) => v >= a || (v - a).abs() <= snap,
        };
        let upper_ok = match self.upper {
            Endpoint::Unbounded => true,
            Endpoint::Open(b) => v < b && (v - b).abs() > snap,
            Endpoint::Closed(b) => v <= b || (v - b).abs() <= snap,
        };
        lower_ok && upper_ok
    }
}

/// An orthogonal projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix(Mat);

impl ProjectionMatrix {
    pub fn new(p: Mat) -> Result<Self> {
        check_hermitian(&p)?;
        let residual = max_abs(&(&p * &p - &p));
        if residual > PROJECTION_TOL {
            return Err(Error::Format(format!(
                "matrix is not idempotent (residual {residual:.3e})"
            )));
        }
        Ok(Self(p))
    }

    /// Wraps a matrix known to be a projection (e.g. produced by `projector`).
    pub fn new_unchecked(p: Mat) -> Self {
        Self(p)
    }

    pub fn identity(n: usize) -> Self {
        Self(identity(n))
    }

    pub fn zero(n: usize) -> Self {
        Self(zeros(n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Mat {
        &self.0
    }

    pub fn into_inner(self) -> Mat {
        self.0
    }

    pub fn complement(&self) -> Self {
        Self(identity(self.dim()) - &self.0)
    }

    /// Orthonormal basis (columns) of the range.
    pub fn range_basis(&self) -> Mat {
        let eig = eigh(&self.0);
        let cols: Vec<usize> = (0..eig.dim()).filter(|&j| eig.eigenvalues[j] > 0.5).collect();
        Mat::from_fn(self.dim(), cols.len(), |i, j| eig.frame[(i, cols[j])])
    }

    pub fn rank(&self) -> usize {
        self.0.trace().re.round().max(0.0) as usize
    }
}

/// Snaps the spectrum of a nearly-projection Hermitian matrix to {0, 1}.
pub fn clean_projection(p: &Mat) -> Mat {
    eigh(p).projector(|l| l > 0.5)
}

/// `chi_I(x)` for Hermitian `x`.
pub fn spectral_projection(x: &Mat, interval: Interval) -> Result<ProjectionMatrix> {
    check_hermitian(x)?;
    Ok(spectral_projection_unchecked(x, interval))
}

pub fn spectral_projection_unchecked(x: &Mat, interval: Interval) -> ProjectionMatrix {
    let eig = eigh(x);
    projection_from_decomposition(&eig, interval)
}

pub fn projection_from_decomposition(eig: &SpectralDecomposition, interval: Interval) -> ProjectionMatrix {
    let n = eig.dim();
    let selected: Vec<usize> = {
        let scale = eig.max_abs_eigenvalue().max(interval.endpoint_scale());
        let snap = ENDPOINT_SNAP * scale;
        (0..n)
            .filter(|&j| interval.contains(eig.eigenvalues[j], snap))
            .collect()
    };
    if selected.is_empty() {
        return ProjectionMatrix::zero(n);
    }
    if selected.len() == n {
        return ProjectionMatrix::identity(n);
    }
    let basis = Mat::from_fn(n, selected.len(), |i, j| eig.frame[(i, selected[j])]);
    ProjectionMatrix(&basis * basis.adjoint())
}

/// Singular values in descending order.
pub fn singular_values(x: &Mat) -> Vec<f64> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Vec::new();
    }
    if x.nrows() == 1 && x.ncols() == 1 {
        return vec![x[(0, 0)].norm()];
    }
    let mut s: Vec<f64> = x.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Largest singular value.
pub fn operator_norm(x: &Mat) -> f64 {
    singular_values(x).first().copied().unwrap_or(0.0)
}

/// `|x| = (x^* x)^{1/2}`.
pub fn modulus(x: &Mat) -> Mat {
    sqrt_psd(&(x.adjoint() * x))
}

/// Principal square root of the PSD part of a Hermitian matrix.
pub fn sqrt_psd(x: &Mat) -> Mat {
    eigh(x).apply(|l| l.max(0.0).sqrt())
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidExponent(p));
    }
    Ok(())
}

/// Schatten `p`-norm with `p = f64::INFINITY` for the operator norm.
pub fn schatten_norm(x: &Mat, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let s = singular_values(x);
    Ok(schatten_from_singular_values(&s, p))
}

pub(crate) fn schatten_from_singular_values(s: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        s.iter().fold(0.0f64, |m, &v| m.max(v))
    } else if p == 1.0 {
        s.iter().sum()
    } else if p == 2.0 {
        s.iter().map(|v| v * v).sum::<f64>().sqrt()
    } else {
        s.iter().map(|v| v.powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// `Tr(chi_{(lambda, inf)}(|x|))`: the number of singular values strictly above `lambda`.
pub fn distribution_at(x: &Mat, lambda: f64) -> f64 {
    singular_values(x).iter().filter(|&&s| s > lambda).count() as f64
}

/// Default PSD slack `1e-9 * (1 + ||b - a||)` for Loewner comparisons.
pub fn default_loewner_tol(a: &Mat, b: &Mat) -> f64 {
    1e-9 * (1.0 + max_abs(&(b - a)))
}

/// `a <= b` in Loewner order: the smallest eigenvalue of `b - a` is at least `-tol`.
pub fn loewner_leq(a: &Mat, b: &Mat, tol: f64) -> Result<bool> {
    check_same_dim(a, b)?;
    Ok(min_eigenvalue(&(b - a)) >= -tol)
}

/// Amount by which `a <= b` fails, i.e. `max(0, -lambda_min(b - a))`.
pub fn loewner_violation(a: &Mat, b: &Mat) -> f64 {
    (-min_eigenvalue(&(b - a))).max(0.0)
}

fn check_projection_dims(dim: usize, ps: &[ProjectionMatrix]) -> Result<()> {
    for p in ps {
        if p.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
    }
    Ok(())
}

/// Projection onto the span of the union of ranges.
///
/// Range bases are orthonormalized in order; directions whose residual falls
/// below `RANK_CUTOFF` are treated as already spanned.
pub fn projection_join(dim: usize, ps: &[ProjectionMatrix]) -> Result<ProjectionMatrix> {
    check_projection_dims(dim, ps)?;
    let bases: Vec<Mat> = ps
        .iter()
        .filter(|p| p.rank() > 0)
        .map(|p| p.range_basis())
        .collect();
    Ok(join_of_bases(dim, &bases))
}

pub(crate) fn join_of_bases(dim: usize, bases: &[Mat]) -> ProjectionMatrix {
    // Modified Gram-Schmidt with one reorthogonalization pass; a column is
    // dropped when its residual against the span so far is below the cutoff.
    let mut frame: Vec<DVector<Complex64>> = Vec::with_capacity(dim);
    'outer: for b in bases {
        for j in 0..b.ncols() {
            if frame.len() == dim {
                break 'outer;
            }
            let mut v = b.column(j).into_owned();
            for _ in 0..2 {
                for e in &frame {
                    let c = e.dotc(&v);
                    v.axpy(-c, e, Complex64::new(1.0, 0.0));
                }
            }
            let norm = v.norm();
            if norm > RANK_CUTOFF {
                frame.push(v.unscale(norm));
            }
        }
    }
    if frame.len() == dim {
        return ProjectionMatrix::identity(dim);
    }
    let mut out = Mat::zeros(dim, dim);
    for e in &frame {
        out += e * e.adjoint();
    }
    ProjectionMatrix(out)
}

/// Projection onto the intersection of ranges.
pub fn projection_meet(dim: usize, ps: &[ProjectionMatrix]) -> Result<ProjectionMatrix> {
    check_projection_dims(dim, ps)?;
    if ps.is_empty() {
        return Ok(ProjectionMatrix::identity(dim));
    }
    let decreasing = ps.windows(2).all(|w| {
        let tol = default_loewner_tol(w[1].as_matrix(), w[0].as_matrix());
        loewner_violation(w[1].as_matrix(), w[0].as_matrix()) <= tol
    });
    if decreasing {
        return Ok(ps[ps.len() - 1].clone());
    }
    let complements: Vec<ProjectionMatrix> = ps.iter().map(|p| p.complement()).collect();
    Ok(projection_join(dim, &complements)?.complement())
}
