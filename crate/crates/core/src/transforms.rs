//! Averaging transforms on matrix fields.
//!
//! * `T f = sum_k nu_k (M_k - E_k) f`
//! * `D f = sum_k nu_k (M_k - M_{k-1}) f`
//! * the square function `(sum_k |(M_k - E_k) f|^2)^{1/2}`
//! * the martingale transform `sum_k nu_k (E_k - E_{k-1}) f`

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dyadic::{
    ball_average, cond_expectation, field_lp_norm, inner, martingale_difference, DyadicGrid,
    MatrixField,
};
use crate::error::{Error, Result};
use crate::spectral::{self, Mat};

/// Inclusive range of levels `lo..=hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelRange {
    pub lo: u32,
    pub hi: u32,
}

impl LevelRange {
    pub fn new(lo: u32, hi: u32) -> Self {
        Self { lo, hi }
    }

    pub fn single(k: u32) -> Self {
        Self { lo: k, hi: k }
    }

    /// `[0, K]`, the default range of `T` and the square function.
    pub fn full(grid: &DyadicGrid) -> Self {
        Self::new(0, grid.finest_level())
    }

    /// `[1, K]`, the default range of `D`.
    pub fn differential(grid: &DyadicGrid) -> Self {
        Self::new(1, grid.finest_level())
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> {
        self.lo..=self.hi
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    fn check(&self, grid: &DyadicGrid, min: u32) -> Result<()> {
        let max = grid.finest_level();
        for level in [self.lo, self.hi] {
            if level < min || level > max {
                return Err(Error::LevelOutOfRange { level, min, max });
            }
        }
        Ok(())
    }
}

/// Coefficients `nu_k` with `|nu_k| <= 1`. Levels without an entry carry 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SignSequence {
    values: BTreeMap<u32, f64>,
}

impl SignSequence {
    pub fn new(values: BTreeMap<u32, f64>) -> Result<Self> {
        for (&level, &value) in &values {
            if !(value.abs() <= 1.0) {
                return Err(Error::SignOutOfRange { level, value });
            }
        }
        Ok(Self { values })
    }

    pub fn zeros() -> Self {
        Self::default()
    }

    pub fn uniform(levels: LevelRange, value: f64) -> Result<Self> {
        Self::new(levels.iter().map(|k| (k, value)).collect())
    }

    pub fn ones(levels: LevelRange) -> Self {
        Self::uniform(levels, 1.0).expect("1 is an admissible coefficient")
    }

    /// Independent uniform random signs.
    pub fn random_signs(levels: LevelRange, rng: &mut impl Rng) -> Self {
        let values = levels
            .iter()
            .map(|k| (k, if rng.random::<bool>() { 1.0 } else { -1.0 }))
            .collect();
        Self { values }
    }

    /// Independent coefficients uniform in `[-1, 1]`.
    pub fn random_uniform(levels: LevelRange, rng: &mut impl Rng) -> Self {
        let values = levels.iter().map(|k| (k, rng.random_range(-1.0..=1.0))).collect();
        Self { values }
    }

    pub fn get(&self, k: u32) -> f64 {
        self.values.get(&k).copied().unwrap_or(0.0)
    }

    pub fn values(&self) -> &BTreeMap<u32, f64> {
        &self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// The sequence `k -> nu_{k+1}`, dropping any coefficient that would move below level 0.
    pub fn shifted_down(&self) -> Self {
        let values = self
            .values
            .iter()
            .filter(|(&k, _)| k >= 1)
            .map(|(&k, &v)| (k - 1, v))
            .collect();
        Self { values }
    }
}

/// `(M_k - E_k) f`.
pub fn average_gap(f: &MatrixField, k: u32) -> Result<MatrixField> {
    Ok(&ball_average(f, k)? - &cond_expectation(f, k)?)
}

/// `T f = sum_{k in levels} nu_k (M_k - E_k) f`.
pub fn transform_t(f: &MatrixField, nu: &SignSequence, levels: LevelRange) -> Result<MatrixField> {
    levels.check(f.grid(), 0)?;
    let mut out = MatrixField::zeros(*f.grid());
    for k in levels.iter() {
        let c = nu.get(k);
        if c != 0.0 {
            out.add_scaled(&average_gap(f, k)?, c);
        }
    }
    Ok(out)
}

/// `D f = sum_{k in levels} nu_k (M_k - M_{k-1}) f`, with `levels` inside `[1, K]`.
pub fn differential_transform(
    f: &MatrixField,
    nu: &SignSequence,
    levels: LevelRange,
) -> Result<MatrixField> {
    levels.check(f.grid(), 1)?;
    let mut out = MatrixField::zeros(*f.grid());
    let mut previous = ball_average(f, levels.lo - 1)?;
    for k in levels.iter() {
        let current = ball_average(f, k)?;
        let c = nu.get(k);
        if c != 0.0 {
            out.add_scaled(&(&current - &previous), c);
        }
        previous = current;
    }
    Ok(out)
}

/// The three pieces of `D f` obtained from
/// `M_k - M_{k-1} = (M_k - E_k) + (E_k - E_{k-1}) + (E_{k-1} - M_{k-1})`:
/// a `T` term, a martingale transform, and a level-shifted `T` term (returned
/// with its minus sign applied).
pub fn three_way_split(
    f: &MatrixField,
    nu: &SignSequence,
    levels: LevelRange,
) -> Result<[MatrixField; 3]> {
    levels.check(f.grid(), 1)?;
    let restricted = SignSequence {
        values: levels.iter().map(|k| (k, nu.get(k))).collect(),
    };
    let t_part = transform_t(f, &restricted, levels)?;
    let mart = martingale_transform(f, &restricted)?;
    let shifted = transform_t(
        f,
        &restricted.shifted_down(),
        LevelRange::new(levels.lo - 1, levels.hi - 1),
    )?;
    Ok([t_part, mart, -&shifted])
}

/// Which modulus the square function uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SquareForm {
    /// `|x|^2 = x^* x`
    #[default]
    Column,
    /// `|x^*|^2 = x x^*`
    Row,
}

/// Cellwise `(sum_k |(M_k - E_k) f|^2)^{1/2}`.
pub fn square_function(f: &MatrixField, levels: LevelRange, form: SquareForm) -> Result<MatrixField> {
    levels.check(f.grid(), 0)?;
    let n = f.matdim();
    let mut acc = MatrixField::zeros(*f.grid());
    for k in levels.iter() {
        let gap = average_gap(f, k)?;
        let sq = gap.map(|x| match form {
            SquareForm::Column => x.adjoint() * x,
            SquareForm::Row => x * x.adjoint(),
        });
        acc.add_scaled(&sq, 1.0);
    }
    Ok(acc.map(|m| {
        let h: Mat = (m + m.adjoint()) * num_complex::Complex64::new(0.5, 0.0);
        debug_assert_eq!(h.nrows(), n);
        spectral::sqrt_psd(&h)
    }))
}

/// `sum_{k=1..K} nu_k (E_k - E_{k-1}) f`.
pub fn martingale_transform(f: &MatrixField, nu: &SignSequence) -> Result<MatrixField> {
    let mut out = MatrixField::zeros(*f.grid());
    for k in 1..=f.grid().finest_level() {
        let c = nu.get(k);
        if c != 0.0 {
            out.add_scaled(&martingale_difference(f, k)?, c);
        }
    }
    Ok(out)
}

/// Settings for power iteration on `A^* A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerIteration {
    pub iterations: usize,
    pub rel_tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            iterations: 200,
            rel_tol: 1e-8,
            restarts: 5,
            seed: 0x5eed,
        }
    }
}

impl PowerIteration {
    /// Estimates `||A||` on `L_2` from a routine computing `A^* A v`.
    ///
    /// Each restart starts from a seeded Gaussian field and tracks the
    /// Rayleigh quotient `<v, A^*A v>`; the largest value over restarts is
    /// returned (as its square root).
    pub fn estimate(
        &self,
        grid: DyadicGrid,
        normal: impl Fn(&MatrixField) -> Result<MatrixField>,
    ) -> Result<f64> {
        let mut best = 0.0f64;
        for restart in 0..self.restarts {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (restart as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let n = grid.matdim();
            let cells: Vec<Mat> = (0..grid.num_cells())
                .map(|_| {
                    Mat::from_fn(n, n, |_, _| {
                        let re: f64 = rng.sample(rand_distr::StandardNormal);
                        let im: f64 = rng.sample(rand_distr::StandardNormal);
                        num_complex::Complex64::new(re, im)
                    })
                })
                .collect();
            let mut v = MatrixField::from_cells(grid, cells)?;
            let norm = field_lp_norm(&v, 2.0)?;
            v = v.scale(1.0 / norm);
            let mut previous = 0.0f64;
            for _ in 0..self.iterations {
                let w = normal(&v)?;
                let rayleigh = inner(&v, &w).re.max(0.0);
                let wn = field_lp_norm(&w, 2.0)?;
                if wn == 0.0 {
                    previous = 0.0;
                    break;
                }
                v = w.scale(1.0 / wn);
                let done = (rayleigh - previous).abs() <= self.rel_tol * rayleigh.max(f64::MIN_POSITIVE);
                previous = rayleigh;
                if done {
                    break;
                }
            }
            best = best.max(previous);
        }
        Ok(best.sqrt())
    }
}

/// Power-iteration estimate of `||T||` on `L_2`.
///
/// `M_k` and `E_k` have symmetric kernels, so `T^* = T` for real `nu`.
pub fn transform_t_norm(
    grid: DyadicGrid,
    nu: &SignSequence,
    levels: LevelRange,
    settings: &PowerIteration,
) -> Result<f64> {
    let scalar = grid.with_matdim(1);
    settings.estimate(scalar, |v| transform_t(&transform_t(v, nu, levels)?, nu, levels))
}

/// Power-iteration estimate of `||D||` on `L_2`.
pub fn differential_transform_norm(
    grid: DyadicGrid,
    nu: &SignSequence,
    levels: LevelRange,
    settings: &PowerIteration,
) -> Result<f64> {
    let scalar = grid.with_matdim(1);
    settings.estimate(scalar, |v| {
        differential_transform(&differential_transform(v, nu, levels)?, nu, levels)
    })
}
