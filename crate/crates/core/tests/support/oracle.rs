//! A commutative reimplementation of the pipeline on plain `f64` arrays,
//! used to cross-check 1x1 fields.

use dyadic_cz::czd::cz_decompose;
use dyadic_cz::dyadic::{ball_average, cond_expectation, Boundary, MatrixField};
use dyadic_cz::transforms::{differential_transform, transform_t, LevelRange};
use dyadic_cz::verify::{lambda_sweep, EnsembleSpec, Generator, Instance};

pub struct Oracle {
    pub dim: usize,
    pub levels: u32,
    pub torus: bool,
}

impl Oracle {
    fn side(&self) -> i64 {
        1 << self.levels
    }

    fn cells(&self) -> usize {
        (self.side() as usize).pow(self.dim as u32)
    }

    fn coords(&self, x: usize) -> [i64; 2] {
        let s = self.side() as usize;
        if self.dim == 1 {
            [x as i64, 0]
        } else {
            [(x / s) as i64, (x % s) as i64]
        }
    }

    fn cube(&self, x: usize, k: u32) -> [i64; 2] {
        let c = self.coords(x);
        let shift = self.levels - k;
        [c[0] >> shift, c[1] >> shift]
    }

    pub fn e(&self, f: &[f64], k: u32) -> Vec<f64> {
        (0..self.cells())
            .map(|x| {
                let q = self.cube(x, k);
                let members: Vec<usize> = (0..self.cells()).filter(|&y| self.cube(y, k) == q).collect();
                members.iter().map(|&y| f[y]).sum::<f64>() / members.len() as f64
            })
            .collect()
    }

    /// Cells whose centers lie within `2^{-k}` of `x`: the torus metric, or
    /// the Euclidean metric with the missing cells counted as zeros.
    pub fn m(&self, f: &[f64], k: u32) -> Vec<f64> {
        let r = 1i64 << (self.levels - k);
        let s = self.side();
        let axis = |a: i64, b: i64| {
            let d = (a - b).abs();
            if self.torus {
                d.min(s - d)
            } else {
                d
            }
        };
        let ball = |x: usize| -> Vec<usize> {
            let cx = self.coords(x);
            (0..self.cells())
                .filter(|&y| {
                    let cy = self.coords(y);
                    let d2: i64 = (0..self.dim).map(|i| axis(cx[i], cy[i]).pow(2)).sum();
                    d2 < r * r
                })
                .collect()
        };
        // The zero-extended ball has the same cardinality as an interior one.
        let full = if self.torus {
            None
        } else {
            let span = 2 * r - 1;
            let count = (0..span.pow(self.dim as u32))
                .filter(|i| {
                    let a = i % span - (r - 1);
                    let b = if self.dim == 2 { i / span - (r - 1) } else { 0 };
                    a * a + b * b < r * r
                })
                .count();
            Some(count)
        };
        (0..self.cells())
            .map(|x| {
                let members = ball(x);
                let sum: f64 = members.iter().map(|&y| f[y]).sum();
                sum / full.unwrap_or(members.len()) as f64
            })
            .collect()
    }

    /// Stopping projections `p_k` and the terminal `q` for height `lambda`.
    pub fn stopping(&self, f: &[f64], lambda: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut q = vec![1.0; self.cells()];
        let mut ps = vec![];
        for k in 0..=self.levels {
            let fk = self.e(f, k);
            let p: Vec<f64> = (0..self.cells())
                .map(|x| if q[x] * fk[x] > lambda { q[x] } else { 0.0 })
                .collect();
            for x in 0..self.cells() {
                q[x] -= p[x];
            }
            ps.push(p);
        }
        (ps, q)
    }
}

impl Oracle {
    pub fn for_field(f: &MatrixField) -> Self {
        let g = f.grid();
        Self {
            dim: g.dim(),
            levels: g.finest_level(),
            torus: g.boundary() == Boundary::Torus,
        }
    }
}

pub fn scalars(f: &MatrixField) -> Vec<f64> {
    (0..f.grid().num_cells()).map(|x| f.cell(x)[(0, 0)].re).collect()
}

/// Largest entrywise gap relative to `max(1, max |oracle|)`.
fn gap(pipeline: &[f64], oracle: &[f64]) -> f64 {
    assert_eq!(pipeline.len(), oracle.len());
    let scale = oracle.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    pipeline
        .iter()
        .zip(oracle)
        .map(|(u, v)| (u - v).abs() / scale)
        .fold(0.0, f64::max)
}

/// Worst relative discrepancy per pipeline stage over one instance and its
/// whole lambda sweep.
pub fn discrepancies(inst: &Instance) -> Vec<(&'static str, f64)> {
    let grid = *inst.grid();
    let o = Oracle::for_field(&inst.f);
    let f = scalars(&inst.f);
    let mut worst = [("E_k", 0.0f64), ("M_k", 0.0), ("T", 0.0), ("D", 0.0), ("q_k", 0.0), ("g", 0.0), ("b_n", 0.0)];
    let mut bump = |i: usize, v: f64| worst[i].1 = worst[i].1.max(v);

    let mut t = vec![0.0; f.len()];
    let mut d = vec![0.0; f.len()];
    let mut prev: Option<Vec<f64>> = None;
    for k in 0..=grid.finest_level() {
        let (e, m) = (o.e(&f, k), o.m(&f, k));
        bump(0, gap(&scalars(&cond_expectation(&inst.f, k).unwrap()), &e));
        bump(1, gap(&scalars(&ball_average(&inst.f, k).unwrap()), &m));
        for x in 0..f.len() {
            t[x] += inst.nu.get(k) * (m[x] - e[x]);
        }
        if let Some(prev) = &prev {
            for x in 0..f.len() {
                d[x] += inst.nu.get(k) * (m[x] - prev[x]);
            }
        }
        prev = Some(m);
    }
    bump(2, gap(&scalars(&transform_t(&inst.f, &inst.nu, LevelRange::full(&grid)).unwrap()), &t));
    if grid.finest_level() >= 1 {
        let dl = LevelRange::differential(&grid);
        bump(3, gap(&scalars(&differential_transform(&inst.f, &inst.nu, dl).unwrap()), &d));
    }

    for lambda in lambda_sweep(&inst.f) {
        let dec = cz_decompose(&inst.f, lambda).unwrap();
        let (ps, q) = o.stopping(&f, lambda);
        let mut running = vec![1.0; f.len()];
        let mut good: Vec<f64> = f.iter().zip(&q).map(|(v, q)| v * q).collect();
        for (n, p) in ps.iter().enumerate() {
            for x in 0..f.len() {
                running[x] -= p[x];
            }
            bump(4, gap(&scalars(&dec.family.q[n]), &running));
            bump(4, gap(&scalars(&dec.family.p[n]), p));
            let fn_ = o.e(&f, n as u32);
            let b: Vec<f64> = (0..f.len()).map(|x| p[x] * (f[x] - fn_[x])).collect();
            bump(6, gap(&scalars(&dec.b(n)), &b));
            for x in 0..f.len() {
                good[x] += p[x] * fn_[x];
            }
        }
        bump(4, gap(&scalars(&dec.family.terminal), &q));
        bump(5, gap(&scalars(&dec.g), &good));
    }
    worst.to_vec()
}

/// Eight seeded scalar instances on each of two grid shapes.
pub fn instances() -> Vec<Instance> {
    let mut out = vec![];
    for (dim, levels, boundary) in [(1, 5, Boundary::Torus), (2, 3, Boundary::Zero)] {
        let spec = EnsembleSpec {
            seed: 77,
            count: 8,
            dim,
            levels: vec![levels],
            matdim: 1,
            boundary,
            generator: Generator::Mixed,
            ..EnsembleSpec::default()
        };
        out.extend(spec.instances().unwrap());
    }
    out
}
