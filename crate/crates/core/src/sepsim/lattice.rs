use serde::{Deserialize, Serialize};

use super::SepError;
use crate::measures::DiscreteMeasure;

/// Arithmetic grid `y_i = (k_lo + i)·δ + shift`, `i = 0..len`.
///
/// Positions are computed as an integer times `δ`, so grids with `shift = 0`
/// are exactly symmetric under `y ↦ −y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub k_lo: i64,
    pub len: usize,
    pub delta: f64,
    #[serde(default)]
    pub shift: f64,
}

const ON_GRID_TOL: f64 = 1e-9;

impl Grid {
    pub fn new(delta: f64, k_lo: i64, len: usize) -> Result<Self, SepError> {
        if !(delta > 0.0 && delta.is_finite()) || len == 0 {
            return Err(SepError::BadLattice(format!("need δ > 0 and a non-empty grid, got δ={delta}, len={len}")));
        }
        Ok(Grid {
            k_lo,
            len,
            delta,
            shift: 0.0,
        })
    }

    /// Smallest grid of multiples of `δ` covering `[lo, hi]`.
    pub fn covering(delta: f64, lo: f64, hi: f64) -> Result<Self, SepError> {
        let k_lo = (lo / delta + ON_GRID_TOL).floor() as i64;
        let k_hi = (hi / delta - ON_GRID_TOL).ceil() as i64;
        Self::new(delta, k_lo, (k_hi - k_lo + 1).max(1) as usize)
    }

    pub fn y(&self, i: usize) -> f64 {
        (self.k_lo + i as i64) as f64 * self.delta + self.shift
    }

    pub fn ys(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.y(i)).collect()
    }

    /// `(y − shift)/δ` rounded, if `y` is within tolerance of a grid line
    /// (inside or outside the grid).
    pub fn steps_of(&self, y: f64) -> Option<i64> {
        let u = (y - self.shift) / self.delta;
        let k = u.round();
        ((u - k).abs() <= ON_GRID_TOL).then_some(k as i64)
    }

    /// Index of `y` if it is a grid point.
    pub fn index(&self, y: f64) -> Option<usize> {
        let k = self.steps_of(y)?;
        let i = k - self.k_lo;
        (i >= 0 && (i as usize) < self.len).then_some(i as usize)
    }

    /// `2·shift/δ`, the offset that appears in `d = y + x` and reflected starts.
    pub(crate) fn reflection_offset(&self) -> Option<i64> {
        let o = 2.0 * self.shift / self.delta;
        let r = o.round();
        ((o - r).abs() <= ON_GRID_TOL).then_some(r as i64)
    }
}

/// Walk lattice: a grid, a step horizon and a seed for Monte-Carlo paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub grid: Grid,
    /// Largest number of steps any path or dynamic program may take.
    pub horizon: usize,
    pub seed: u64,
}

/// How far snapping moved the atoms of a measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapReport {
    pub max_distance: f64,
    /// Mass that had to move.
    pub moved_mass: f64,
    /// `∫|x − snap(x)|`, an upper bound on the W1 cost of snapping.
    pub w1_bound: f64,
}

impl Lattice {
    pub const DEFAULT_HORIZON: usize = 2_000_000;

    pub fn new(grid: Grid, horizon: usize, seed: u64) -> Self {
        Lattice { grid, horizon, seed }
    }

    /// Grid of multiples of `δ` covering both supports plus `margin` on each side.
    pub fn covering(
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
        delta: f64,
        margin: f64,
        seed: u64,
    ) -> Result<Self, SepError> {
        let lo = mu.min_position().into_iter().chain(nu.min_position()).fold(f64::INFINITY, f64::min);
        let hi = mu.max_position().into_iter().chain(nu.max_position()).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() || !hi.is_finite() {
            return Err(SepError::Precondition("cannot cover empty measures".into()));
        }
        let grid = Grid::covering(delta, lo - margin, hi + margin)?;
        Ok(Lattice::new(grid, Self::DEFAULT_HORIZON, seed))
    }

    pub fn delta(&self) -> f64 {
        self.grid.delta
    }

    /// Same extent at half the step.
    pub fn refined(&self) -> Self {
        let mut grid = self.grid;
        grid.delta /= 2.0;
        grid.k_lo *= 2;
        grid.len = 2 * grid.len - 1;
        Lattice {
            grid,
            horizon: self.horizon,
            seed: self.seed,
        }
    }

    /// Rounds every atom to the nearest grid line (ties away from zero) and
    /// merges collisions.
    pub fn snap(&self, m: &DiscreteMeasure) -> Result<(DiscreteMeasure, SnapReport), SepError> {
        let g = &self.grid;
        let mut report = SnapReport {
            max_distance: 0.0,
            moved_mass: 0.0,
            w1_bound: 0.0,
        };
        let mut atoms = Vec::with_capacity(m.len());
        for &(p, w) in m.atoms() {
            let k = ((p - g.shift) / g.delta).round() as i64;
            let i = k - g.k_lo;
            if i < 0 || i as usize >= g.len {
                return Err(SepError::OffGrid(p));
            }
            let q = g.y(i as usize);
            let dist = (q - p).abs();
            if dist > ON_GRID_TOL * g.delta {
                report.moved_mass += w;
            }
            report.max_distance = report.max_distance.max(dist);
            report.w1_bound += dist * w;
            atoms.push((q, w));
        }
        Ok((DiscreteMeasure::from_atoms(atoms)?, report))
    }

    /// Per-atom grid indices of a measure already on the grid.
    pub(crate) fn indices(&self, m: &DiscreteMeasure) -> Result<Vec<(usize, f64)>, SepError> {
        m.atoms()
            .iter()
            .map(|&(p, w)| self.grid.index(p).map(|i| (i, w)).ok_or(SepError::OffGrid(p)))
            .collect()
    }
}
