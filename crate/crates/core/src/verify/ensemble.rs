use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dyadic::{field_lp_norm, Boundary, DyadicGrid, MatrixField};
use crate::error::{Error, Result};
use crate::spectral::Mat;
use crate::transforms::{LevelRange, SignSequence};

/// How field instances are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    /// `A A^*` with Gaussian `A`, times a log-uniform cell scale.
    RandomPsd,
    /// Zero except for a few rank-one spikes.
    SparseSpike,
    /// A slowly rotating positive background plus one spike.
    SmoothPlusSpike,
    /// Nonnegative scalar multiples of the identity.
    Scalar,
    /// Cycles through the four generators above by instance index.
    Mixed,
}

impl Generator {
    pub const BASIC: [Generator; 4] = [
        Generator::RandomPsd,
        Generator::SparseSpike,
        Generator::SmoothPlusSpike,
        Generator::Scalar,
    ];

    fn resolve(self, index: usize) -> Generator {
        match self {
            Generator::Mixed => Self::BASIC[index % Self::BASIC.len()],
            g => g,
        }
    }
}

impl std::str::FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "random-psd" => Generator::RandomPsd,
            "sparse-spike" => Generator::SparseSpike,
            "smooth-plus-spike" => Generator::SmoothPlusSpike,
            "scalar" => Generator::Scalar,
            "mixed" => Generator::Mixed,
            other => return Err(Error::InvalidConfig(format!("unknown generator `{other}`"))),
        })
    }
}

/// How the coefficients `nu_k` are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignPolicy {
    AllOnes,
    RandomSigns,
    RandomUniform,
}

impl std::str::FromStr for SignPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all-ones" => SignPolicy::AllOnes,
            "random-signs" => SignPolicy::RandomSigns,
            "random-uniform" => SignPolicy::RandomUniform,
            other => return Err(Error::InvalidConfig(format!("unknown sign policy `{other}`"))),
        })
    }
}

impl SignPolicy {
    pub fn draw(self, levels: LevelRange, rng: &mut impl Rng) -> SignSequence {
        match self {
            SignPolicy::AllOnes => SignSequence::ones(levels),
            SignPolicy::RandomSigns => SignSequence::random_signs(levels, rng),
            SignPolicy::RandomUniform => SignSequence::random_uniform(levels, rng),
        }
    }

    pub fn seeded(self, levels: LevelRange, seed: u64) -> SignSequence {
        self.draw(levels, &mut ChaCha8Rng::seed_from_u64(seed))
    }
}

/// How the height `lambda` is chosen for decomposition claims.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum LambdaPolicy {
    Fixed(f64),
    /// `lambda = c * ||f||_1`.
    L1Multiple(f64),
    /// Every point of the sweep grid for every instance.
    Sweep,
    /// Instance `i` takes the `i`-th point of the sweep grid (cyclically).
    RotatingSweep,
}

/// The sweep grid `{2^{-j} ||f||_inf : j = 0..K+2} + {||f||_1}`.
pub fn lambda_sweep(f: &MatrixField) -> Vec<f64> {
    let top = f.max_operator_norm();
    let mut out: Vec<f64> = (0..=f.grid().finest_level() + 2)
        .map(|j| top * (-(j as f64)).exp2())
        .collect();
    out.push(field_lp_norm(f, 1.0).unwrap_or(0.0));
    out.retain(|&l| l > 0.0);
    out
}

/// A deterministic family of random instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub seed: u64,
    pub count: usize,
    pub dim: usize,
    pub levels: Vec<u32>,
    pub matdim: usize,
    pub boundary: Boundary,
    pub lambda: LambdaPolicy,
    pub generator: Generator,
    pub signs: SignPolicy,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            count: 8,
            dim: 1,
            levels: vec![3, 4],
            matdim: 2,
            boundary: Boundary::Torus,
            lambda: LambdaPolicy::RotatingSweep,
            generator: Generator::Mixed,
            signs: SignPolicy::RandomSigns,
        }
    }
}

/// One drawn instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    /// Position in the ensemble: levels-major, then draw index.
    pub index: usize,
    pub draw: usize,
    pub generator: Generator,
    pub f: MatrixField,
    pub nu: SignSequence,
    pub lambdas: Vec<f64>,
}

impl Instance {
    pub fn grid(&self) -> &DyadicGrid {
        self.f.grid()
    }

    pub fn levels(&self) -> u32 {
        self.grid().finest_level()
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one draw, mixing every coordinate that identifies it.
pub fn instance_seed(seed: u64, dim: usize, levels: u32, matdim: usize, draw: usize) -> u64 {
    [dim as u64, levels as u64, matdim as u64, draw as u64]
        .into_iter()
        .fold(mix(seed), |acc, v| mix(acc ^ v))
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    Mat::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    Mat::from_fn(n, 1, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

fn rank_one(v: &Mat) -> Mat {
    let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    (v * v.adjoint()).scale(1.0 / norm2)
}

/// A unitary depending smoothly on the angle `theta`.
fn rotation(n: usize, theta: f64, phase: f64) -> Mat {
    let mut u = Mat::identity(n, n);
    for i in (0..n.saturating_sub(1)).step_by(2) {
        let (s, c) = (theta * (1.0 + i as f64)).sin_cos();
        let e = Complex64::from_polar(1.0, phase);
        u[(i, i)] = Complex64::new(c, 0.0);
        u[(i, i + 1)] = -e.conj() * s;
        u[(i + 1, i)] = e * s;
        u[(i + 1, i + 1)] = Complex64::new(c, 0.0);
    }
    u
}

fn draw_field(grid: DyadicGrid, generator: Generator, rng: &mut ChaCha8Rng) -> MatrixField {
    let n = grid.matdim();
    let cells = grid.num_cells();
    let spike_cell = |rng: &mut ChaCha8Rng| rng.random_range(0..cells);
    let data: Vec<Mat> = match generator {
        Generator::RandomPsd => (0..cells)
            .map(|_| {
                let a = gaussian_matrix(rng, n);
                let scale = rng.random_range(-1.5f64..1.5).exp() / n as f64;
                (&a * a.adjoint()).scale(scale)
            })
            .collect(),
        Generator::SparseSpike => {
            let mut out = vec![Mat::zeros(n, n); cells];
            let spikes = rng.random_range(1..=3);
            for _ in 0..spikes {
                let c = spike_cell(rng);
                let amp = rng.random_range(1.0..10.0);
                out[c] += rank_one(&gaussian_vector(rng, n)).scale(amp);
            }
            out
        }
        Generator::SmoothPlusSpike => {
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let shift = rng.random_range(0.0..1.0);
            let side = grid.side() as f64;
            let mut out: Vec<Mat> = (0..cells)
                .map(|c| {
                    let xy = grid.coords(c);
                    let t = [(xy[0] as f64 + 0.5) / side, (xy[1] as f64 + 0.5) / side];
                    let angle = std::f64::consts::TAU * (t[0] + shift);
                    let diag: Vec<f64> = (0..n)
                        .map(|i| 1.0 + 0.5 * (angle + i as f64 + std::f64::consts::TAU * t[1]).cos())
                        .collect();
                    let u = rotation(n, angle, phase);
                    &u * crate::spectral::real_diag(&diag) * u.adjoint()
                })
                .collect();
            let c = spike_cell(rng);
            let amp = rng.random_range(10.0..40.0);
            out[c] += rank_one(&gaussian_vector(rng, n)).scale(amp);
            out
        }
        Generator::Scalar => (0..cells)
            .map(|_| {
                let s: f64 = rng.random_range(0.0f64..1.0).powi(3) * 4.0;
                Mat::identity(n, n).scale(s)
            })
            .collect(),
        Generator::Mixed => unreachable!("resolved before drawing"),
    };
    let data = data
        .into_iter()
        .map(|m| (&m + m.adjoint()).scale(0.5))
        .collect();
    MatrixField::from_cells(grid, data).expect("generator produced correctly sized cells")
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        for &k in &self.levels {
            DyadicGrid::new(self.dim, k, self.matdim, self.boundary)?;
        }
        match self.lambda {
            LambdaPolicy::Fixed(v) | LambdaPolicy::L1Multiple(v) if !(v > 0.0 && v.is_finite()) => {
                Err(Error::InvalidConfig(format!("lambda parameter must be positive, got {v}")))
            }
            _ => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.levels.len() * self.count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Draws instance `index` (levels-major ordering).
    pub fn instance(&self, index: usize) -> Result<Instance> {
        self.validate()?;
        if index >= self.len() {
            return Err(Error::InvalidConfig(format!(
                "instance {index} out of range (ensemble has {})",
                self.len()
            )));
        }
        let levels = self.levels[index / self.count];
        let draw = index % self.count;
        let grid = DyadicGrid::new(self.dim, levels, self.matdim, self.boundary)?;
        let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(
            self.seed,
            self.dim,
            levels,
            self.matdim,
            draw,
        ));
        let generator = self.generator.resolve(draw);
        let f = draw_field(grid, generator, &mut rng);
        let range = LevelRange::full(&grid);
        let nu = self.signs.draw(range, &mut rng);
        let lambdas = match self.lambda {
            LambdaPolicy::Fixed(v) => vec![v],
            LambdaPolicy::L1Multiple(c) => vec![c * field_lp_norm(&f, 1.0)?],
            LambdaPolicy::Sweep => lambda_sweep(&f),
            LambdaPolicy::RotatingSweep => {
                let sweep = lambda_sweep(&f);
                if sweep.is_empty() {
                    vec![]
                } else {
                    vec![sweep[draw % sweep.len()]]
                }
            }
        };
        let lambdas = lambdas.into_iter().filter(|&l| l > 0.0).collect();
        Ok(Instance {
            index,
            draw,
            generator,
            f,
            nu,
            lambdas,
        })
    }

    pub fn instances(&self) -> Result<Vec<Instance>> {
        (0..self.len()).map(|i| self.instance(i)).collect()
    }
}
