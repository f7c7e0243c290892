//! Discrete balls, spheres and annuli in cell-offset space.
//!
//! A cell `y` belongs to the discrete ball of radius `2^{-k}` around `x` when
//! the distance between cell centers is strictly below `2^{-k}`. In torus
//! mode offsets are taken modulo the grid and measured with the torus metric,
//! each residue counted once.

use super::grid::{Boundary, DyadicGrid};

/// A maximal run of offsets `[dx_lo, dx_hi]` (inclusive) along the last axis
/// at a fixed offset `row` along the first axis (unused in one dimension).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Run {
    pub row: i64,
    pub lo: i64,
    pub hi: i64,
}

/// Canonical torus representatives `-(N-1)/2 ..= N/2`.
fn canonical_range(n: i64) -> std::ops::RangeInclusive<i64> {
    -((n - 1) / 2)..=n / 2
}

fn canonical(c: i64, n: i64) -> i64 {
    let r = c.rem_euclid(n);
    if r > n / 2 {
        r - n
    } else {
        r
    }
}

#[derive(Debug, Clone)]
pub struct BallStencil {
    /// Radius in cells, `2^{K-k}`.
    pub radius: i64,
    pub offsets: Vec<[i64; 2]>,
    pub runs: Vec<Run>,
    boundary: Boundary,
    dim: usize,
    side: i64,
}

impl BallStencil {
    pub fn new(grid: &DyadicGrid, k: u32) -> Self {
        let radius = 1i64 << (grid.finest_level() - k);
        let side = grid.side() as i64;
        let dim = grid.dim();
        let boundary = grid.boundary();
        let mut stencil = Self {
            radius,
            offsets: Vec::new(),
            runs: Vec::new(),
            boundary,
            dim,
            side,
        };
        let axis_range: Vec<i64> = match boundary {
            Boundary::Torus => canonical_range(side).collect(),
            Boundary::Zero => (-(radius - 1)..=radius - 1).collect(),
        };
        let rows: Vec<i64> = if dim == 1 { vec![0] } else { axis_range.clone() };
        for &row in &rows {
            let mut run: Option<Run> = None;
            for &c in &axis_range {
                let delta = if dim == 1 { [c, 0] } else { [row, c] };
                if stencil.contains(delta) {
                    stencil.offsets.push(delta);
                    run = Some(match run {
                        None => Run { row, lo: c, hi: c },
                        Some(r) => {
                            debug_assert_eq!(r.hi + 1, c, "ball rows are contiguous");
                            Run { hi: c, ..r }
                        }
                    });
                }
            }
            if let Some(r) = run {
                stencil.runs.push(r);
            }
        }
        stencil
    }

    /// Number of cells in the discrete ball, `|B_k|` in cell units.
    pub fn count(&self) -> usize {
        self.offsets.len()
    }

    fn axis_dist(&self, c: i64) -> i64 {
        match self.boundary {
            Boundary::Torus => {
                let a = canonical(c, self.side).abs();
                a.min(self.side - a)
            }
            Boundary::Zero => c.abs(),
        }
    }

    /// Squared center distance (in cells) of an offset.
    pub fn dist2(&self, delta: [i64; 2]) -> i64 {
        (0..self.dim).map(|a| self.axis_dist(delta[a]).pow(2)).sum()
    }

    pub fn contains(&self, delta: [i64; 2]) -> bool {
        self.dist2(delta) < self.radius * self.radius
    }

    fn normalize(&self, delta: [i64; 2]) -> [i64; 2] {
        match self.boundary {
            Boundary::Torus => {
                let mut d = [0, 0];
                for a in 0..self.dim {
                    d[a] = canonical(delta[a], self.side);
                }
                d
            }
            Boundary::Zero => delta,
        }
    }

    /// Member offsets having at least one non-member axis neighbour: the
    /// discrete sphere.
    pub fn sphere(&self) -> Vec<[i64; 2]> {
        self.offsets
            .iter()
            .copied()
            .filter(|&d| {
                (0..self.dim).any(|a| {
                    [-1i64, 1].iter().any(|&s| {
                        let mut nb = d;
                        nb[a] += s;
                        !self.contains(self.normalize(nb))
                    })
                })
            })
            .collect()
    }
}

/// Offsets whose center lies within `sqrt(d) * 2^{-m}` of the sphere of
/// radius `2^{-j}` (closed on both sides).
pub fn annulus(grid: &DyadicGrid, j: u32, m: u32) -> Vec<[i64; 2]> {
    let ball = BallStencil::new(grid, j);
    let radius = ball.radius as f64;
    let width = (grid.dim() as f64).sqrt() * (1i64 << (grid.finest_level() - m)) as f64;
    let side = grid.side() as i64;
    let reach = (radius + width).ceil() as i64;
    let axis_range: Vec<i64> = match grid.boundary() {
        Boundary::Torus => canonical_range(side).collect(),
        Boundary::Zero => (-reach..=reach).collect(),
    };
    let rows: Vec<i64> = if grid.dim() == 1 { vec![0] } else { axis_range.clone() };
    let mut out = Vec::new();
    for &row in &rows {
        for &c in &axis_range {
            let delta = if grid.dim() == 1 { [c, 0] } else { [row, c] };
            let dist = (ball.dist2(delta) as f64).sqrt();
            if (dist - radius).abs() <= width + 1e-9 {
                out.push(delta);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_ball_counts() {
        let g = DyadicGrid::new(1, 2, 1, Boundary::Torus).unwrap();
        assert_eq!(BallStencil::new(&g, 2).count(), 1);
        assert_eq!(BallStencil::new(&g, 1).count(), 3);
        assert_eq!(BallStencil::new(&g, 0).count(), 4);
        let z = DyadicGrid::new(1, 2, 1, Boundary::Zero).unwrap();
        assert_eq!(BallStencil::new(&z, 0).count(), 7);
    }

    #[test]
    fn runs_cover_offsets() {
        for boundary in [Boundary::Torus, Boundary::Zero] {
            let g = DyadicGrid::new(2, 4, 1, boundary).unwrap();
            for k in 0..=4 {
                let b = BallStencil::new(&g, k);
                let total: i64 = b.runs.iter().map(|r| r.hi - r.lo + 1).sum();
                assert_eq!(total as usize, b.count());
            }
        }
    }

    #[test]
    fn ball_is_symmetric() {
        let g = DyadicGrid::new(2, 4, 1, Boundary::Torus).unwrap();
        let b = BallStencil::new(&g, 2);
        for d in &b.offsets {
            assert!(b.contains(b.normalize([-d[0], -d[1]])));
        }
    }

    #[test]
    fn sphere_is_inside_ball_and_nonempty() {
        let g = DyadicGrid::new(2, 5, 1, Boundary::Zero).unwrap();
        let b = BallStencil::new(&g, 2);
        let s = b.sphere();
        assert!(!s.is_empty());
        assert!(s.iter().all(|&d| b.contains(d)));
        assert!(!s.contains(&[0, 0]));
    }
}
