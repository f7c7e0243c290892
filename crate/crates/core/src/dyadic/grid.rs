use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the unit cube is closed up at its faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Periodic: the unit torus `[0,1)^d`.
    Torus,
    /// Fields are extended by zero outside `[0,1)^d`.
    Zero,
}

impl Boundary {
    pub fn code(self) -> u32 {
        match self {
            Boundary::Torus => 0,
            Boundary::Zero => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Boundary::Torus),
            1 => Some(Boundary::Zero),
            _ => None,
        }
    }
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "torus" => Ok(Boundary::Torus),
            "zero" => Ok(Boundary::Zero),
            other => Err(Error::InvalidConfig(format!("unknown boundary mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Boundary::Torus => "torus",
            Boundary::Zero => "zero",
        })
    }
}

/// Largest finest level accepted by `DyadicGrid::new`.
pub const MAX_LEVEL: u32 = 12;

/// The finest-level partition of `[0,1)^d` into `2^{Kd}` cells of side `2^{-K}`.
///
/// Cells are indexed row-major: in two dimensions cell `(m0, m1)` has index
/// `m0 * 2^K + m1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicGrid {
    dim: usize,
    levels: u32,
    boundary: Boundary,
    matdim: usize,
}

impl DyadicGrid {
    pub fn new(dim: usize, levels: u32, matdim: usize, boundary: Boundary) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidConfig(format!(
                "spatial dimension must be 1 or 2, got {dim}"
            )));
        }
        if levels > MAX_LEVEL {
            return Err(Error::InvalidConfig(format!(
                "finest level {levels} exceeds {MAX_LEVEL}"
            )));
        }
        if matdim == 0 {
            return Err(Error::InvalidConfig("matrix dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            levels,
            boundary,
            matdim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The finest level `K`.
    pub fn finest_level(&self) -> u32 {
        self.levels
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn matdim(&self) -> usize {
        self.matdim
    }

    pub fn with_matdim(&self, matdim: usize) -> Self {
        Self { matdim, ..*self }
    }

    /// Cells per axis.
    pub fn side(&self) -> usize {
        1 << self.levels
    }

    pub fn num_cells(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        (self.num_cells() as f64).recip()
    }

    pub fn coords(&self, cell: usize) -> [usize; 2] {
        if self.dim == 1 {
            [cell, 0]
        } else {
            [cell / self.side(), cell % self.side()]
        }
    }

    pub fn index(&self, coords: [usize; 2]) -> usize {
        if self.dim == 1 {
            coords[0]
        } else {
            coords[0] * self.side() + coords[1]
        }
    }

    pub fn check_level(&self, k: u32) -> Result<()> {
        if k > self.levels {
            return Err(Error::LevelOutOfRange {
                level: k,
                min: 0,
                max: self.levels,
            });
        }
        Ok(())
    }

    /// Cell reached from `cell` by the integer offset `delta`; `None` when the
    /// offset leaves the domain in zero-extension mode.
    pub fn shift(&self, cell: usize, delta: [i64; 2]) -> Option<usize> {
        let n = self.side() as i64;
        let c = self.coords(cell);
        let mut out = [0usize; 2];
        for axis in 0..self.dim {
            let raw = c[axis] as i64 + delta[axis];
            out[axis] = match self.boundary {
                Boundary::Torus => raw.rem_euclid(n) as usize,
                Boundary::Zero => {
                    if raw < 0 || raw >= n {
                        return None;
                    }
                    raw as usize
                }
            };
        }
        Some(self.index(out))
    }

    pub fn num_cubes(&self, k: u32) -> usize {
        1usize << (k as usize * self.dim)
    }

    /// Cells per axis of a level-`k` cube.
    pub fn cube_side_cells(&self, k: u32) -> usize {
        1 << (self.levels - k)
    }

    /// The level-`k` cube containing `cell`.
    pub fn cube_of(&self, cell: usize, k: u32) -> DyadicCube {
        let shift = self.levels - k;
        let c = self.coords(cell);
        DyadicCube {
            level: k,
            coords: [c[0] >> shift, if self.dim == 2 { c[1] >> shift } else { 0 }],
        }
    }

    /// Linear index (row-major over cube coordinates) of the level-`k` cube containing `cell`.
    pub fn cube_index(&self, cell: usize, k: u32) -> usize {
        self.cube_of(cell, k).linear_index(self.dim)
    }

    pub fn cubes(&self, k: u32) -> impl Iterator<Item = DyadicCube> + '_ {
        let per = 1usize << k;
        let dim = self.dim;
        (0..self.num_cubes(k)).map(move |i| {
            let coords = if dim == 1 { [i, 0] } else { [i / per, i % per] };
            DyadicCube { level: k, coords }
        })
    }

    /// Cells of `cube`, in increasing index order.
    pub fn cube_cells(&self, cube: &DyadicCube) -> Vec<usize> {
        let s = self.cube_side_cells(cube.level);
        let base = [cube.coords[0] * s, cube.coords[1] * s];
        if self.dim == 1 {
            (base[0]..base[0] + s).collect()
        } else {
            let mut out = Vec::with_capacity(s * s);
            for a in 0..s {
                for b in 0..s {
                    out.push(self.index([base[0] + a, base[1] + b]));
                }
            }
            out
        }
    }

    /// Whether the level-`k` cube `b` meets `5a` (same level), i.e. each cube
    /// coordinate differs by at most 2. Torus mode measures the difference
    /// cyclically; zero-extension mode clips to the domain.
    pub fn within_five_fold(&self, a: &DyadicCube, b: &DyadicCube) -> bool {
        debug_assert_eq!(a.level, b.level);
        let per = 1i64 << a.level;
        (0..self.dim).all(|axis| {
            let diff = (a.coords[axis] as i64 - b.coords[axis] as i64).abs();
            let diff = match self.boundary {
                Boundary::Torus => diff.min(per - diff),
                Boundary::Zero => diff,
            };
            diff <= 2
        })
    }

    /// The level-`k` cubes `Q` with `a` inside `5Q`.
    pub fn five_fold_neighbours(&self, a: &DyadicCube) -> Vec<DyadicCube> {
        self.cubes(a.level)
            .filter(|b| self.within_five_fold(a, b))
            .collect()
    }
}

/// A dyadic cube `prod [m_i 2^{-k}, (m_i + 1) 2^{-k})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicCube {
    pub level: u32,
    pub coords: [usize; 2],
}

impl DyadicCube {
    /// Side length `2^{-k}`.
    pub fn side(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    pub fn father(&self) -> Option<DyadicCube> {
        if self.level == 0 {
            return None;
        }
        Some(DyadicCube {
            level: self.level - 1,
            coords: [self.coords[0] >> 1, self.coords[1] >> 1],
        })
    }

    pub fn linear_index(&self, dim: usize) -> usize {
        if dim == 1 {
            self.coords[0]
        } else {
            (self.coords[0] << self.level) + self.coords[1]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unsupported_dimension() {
        assert!(matches!(
            DyadicGrid::new(3, 2, 1, Boundary::Torus),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn cell_counts_and_cubes() {
        let g = DyadicGrid::new(2, 3, 2, Boundary::Torus).unwrap();
        assert_eq!(g.num_cells(), 64);
        assert_eq!(g.cubes(1).count(), 4);
        for k in 0..=3 {
            let mut seen = vec![0; g.num_cells()];
            for q in g.cubes(k) {
                for c in g.cube_cells(&q) {
                    seen[c] += 1;
                    assert_eq!(g.cube_of(c, k), q);
                }
            }
            assert!(seen.iter().all(|&s| s == 1));
        }
    }

    #[test]
    fn father_contains_child() {
        let g = DyadicGrid::new(2, 4, 1, Boundary::Zero).unwrap();
        for cell in 0..g.num_cells() {
            for k in 1..=4 {
                assert_eq!(g.cube_of(cell, k).father().unwrap(), g.cube_of(cell, k - 1));
            }
        }
        assert!(g.cube_of(0, 0).father().is_none());
    }

    #[test]
    fn five_fold_wraps_on_torus_only() {
        let t = DyadicGrid::new(1, 4, 1, Boundary::Torus).unwrap();
        let z = DyadicGrid::new(1, 4, 1, Boundary::Zero).unwrap();
        let a = DyadicCube { level: 3, coords: [0, 0] };
        let b = DyadicCube { level: 3, coords: [7, 0] };
        assert!(t.within_five_fold(&a, &b));
        assert!(!z.within_five_fold(&a, &b));
        assert_eq!(t.five_fold_neighbours(&a).len(), 5);
        assert_eq!(z.five_fold_neighbours(&a).len(), 3);
    }

    #[test]
    fn shift_wraps_or_clips() {
        let t = DyadicGrid::new(1, 2, 1, Boundary::Torus).unwrap();
        let z = DyadicGrid::new(1, 2, 1, Boundary::Zero).unwrap();
        assert_eq!(t.shift(0, [-1, 0]), Some(3));
        assert_eq!(z.shift(0, [-1, 0]), None);
        assert_eq!(z.shift(1, [2, 0]), Some(3));
    }
}
