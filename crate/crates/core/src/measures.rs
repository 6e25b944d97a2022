//! Finitely supported measures on the line and on the plane.
//!
//! All supports here are finite, so every moment exists. The only integrability
//! assumption the underlying theory needs (first moments, occasionally second or
//! third) is therefore automatic; continuous marginals are not represented.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance under which two positions are treated as the same atom.
pub const POSITION_TOL: f64 = 1e-12;

/// Default mass threshold for reading a support off a numeric coupling.
pub const SUPPORT_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("points and weights differ in length ({points} vs {weights})")]
    LengthMismatch { points: usize, weights: usize },
    #[error("negative weight {weight} at index {index}")]
    NegativeWeight { index: usize, weight: f64 },
    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },
    #[error("all weights are zero")]
    ZeroMass,
    #[error("not a probability measure: total mass {0}")]
    NotProbability(f64),
    #[error("total masses differ: {0} vs {1}")]
    MassMismatch(f64, f64),
}

/// A finite positive measure on the real line.
///
/// Atoms are kept sorted by position with near-duplicates (closer than
/// [`POSITION_TOL`]) merged and zero masses dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct DiscreteMeasure {
    atoms: Vec<(f64, f64)>,
    total_mass: f64,
}

#[derive(Serialize, Deserialize)]
struct MeasureRepr {
    atoms: Vec<[f64; 2]>,
}

impl TryFrom<MeasureRepr> for DiscreteMeasure {
    type Error = MeasureError;

    fn try_from(repr: MeasureRepr) -> Result<Self, Self::Error> {
        DiscreteMeasure::from_atoms(repr.atoms.into_iter().map(|[p, m]| (p, m)).collect())
    }
}

impl From<DiscreteMeasure> for MeasureRepr {
    fn from(m: DiscreteMeasure) -> Self {
        MeasureRepr {
            atoms: m.atoms.iter().map(|&(p, w)| [p, w]).collect(),
        }
    }
}

fn merge_sorted(mut atoms: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    for (p, m) in atoms {
        match out.last_mut() {
            Some(last) if (p - last.0).abs() <= POSITION_TOL => last.1 += m,
            _ => out.push((p, m)),
        }
    }
    out.retain(|&(_, m)| m > 0.0);
    out
}

impl DiscreteMeasure {
    /// Builds a canonical measure from parallel position and weight slices.
    pub fn new(points: &[f64], weights: &[f64]) -> Result<Self, MeasureError> {
        if points.len() != weights.len() {
            return Err(MeasureError::LengthMismatch {
                points: points.len(),
                weights: weights.len(),
            });
        }
        let measure = Self::from_atoms(points.iter().copied().zip(weights.iter().copied()).collect())?;
        if measure.is_empty() {
            return Err(MeasureError::ZeroMass);
        }
        Ok(measure)
    }

    /// Builds a canonical measure from `(position, mass)` pairs. An empty or
    /// all-zero input yields the zero measure.
    pub fn from_atoms(atoms: Vec<(f64, f64)>) -> Result<Self, MeasureError> {
        for (index, &(p, w)) in atoms.iter().enumerate() {
            if !p.is_finite() || !w.is_finite() {
                return Err(MeasureError::NonFinite { index });
            }
            if w < 0.0 {
                return Err(MeasureError::NegativeWeight { index, weight: w });
            }
        }
        Ok(Self::from_canonical(merge_sorted(atoms)))
    }

    fn from_canonical(atoms: Vec<(f64, f64)>) -> Self {
        let total_mass = atoms.iter().map(|a| a.1).sum();
        DiscreteMeasure { atoms, total_mass }
    }

    pub fn dirac(x: f64) -> Self {
        Self::from_canonical(vec![(x, 1.0)])
    }

    pub fn empty() -> Self {
        Self::from_canonical(Vec::new())
    }

    /// Uniform probability on `n` equally spaced points of `[lo, hi]`.
    pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Self {
        assert!(n >= 1);
        let w = 1.0 / n as f64;
        let atoms = (0..n)
            .map(|i| {
                let p = if n == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
                (p, w)
            })
            .collect();
        Self::from_canonical(merge_sorted(atoms))
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn min_position(&self) -> Option<f64> {
        self.atoms.first().map(|a| a.0)
    }

    pub fn max_position(&self) -> Option<f64> {
        self.atoms.last().map(|a| a.0)
    }

    /// Mass carried at `x` (within [`POSITION_TOL`]).
    pub fn mass_at(&self, x: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| (a.0 - x).abs() <= POSITION_TOL)
            .map(|a| a.1)
            .sum()
    }

    pub fn is_probability(&self, tol: f64) -> bool {
        (self.total_mass - 1.0).abs() <= tol
    }

    pub fn barycenter(&self) -> Result<f64, MeasureError> {
        if !(self.total_mass > 0.0) {
            return Err(MeasureError::ZeroMass);
        }
        Ok(self.atoms.iter().map(|&(p, m)| p * m).sum::<f64>() / self.total_mass)
    }

    pub fn variance(&self) -> Result<f64, MeasureError> {
        let mean = self.barycenter()?;
        Ok(self.atoms.iter().map(|&(p, m)| (p - mean).powi(2) * m).sum::<f64>() / self.total_mass)
    }

    /// `U(x) = ∫ |x − y| m(dy)`.
    pub fn potential(&self, x: f64) -> f64 {
        self.atoms.iter().map(|&(p, m)| (x - p).abs() * m).sum()
    }

    /// Mass of `(−∞, x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.atoms
            .iter()
            .take_while(|a| a.0 <= x + POSITION_TOL)
            .map(|a| a.1)
            .sum()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms.iter().map(|&(p, m)| f(p) * m).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_canonical(
            self.atoms
                .iter()
                .map(|&(p, m)| (p, m * factor))
                .filter(|a| a.1 > 0.0)
                .collect(),
        )
    }

    pub fn normalized(&self) -> Result<Self, MeasureError> {
        if !(self.total_mass > 0.0) {
            return Err(MeasureError::ZeroMass);
        }
        Ok(self.scaled(1.0 / self.total_mass))
    }

    /// Pushes atoms through `f`; colliding images are merged.
    pub fn map_positions(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_canonical(merge_sorted(self.atoms.iter().map(|&(p, m)| (f(p), m)).collect()))
    }

    pub fn shifted(&self, by: f64) -> Self {
        self.map_positions(|p| p + by)
    }
}

/// Why a convex-order test failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum ConvexOrderFailure {
    MeanMismatch { mean_mu: f64, mean_nu: f64 },
    PotentialExceeded { x: f64, potential_mu: f64, potential_nu: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexOrderVerdict {
    pub holds: bool,
    pub witness: Option<f64>,
    pub failure: Option<ConvexOrderFailure>,
}

/// Decides `mu ≤_c nu` for probability measures.
///
/// Potentials of atomic measures are piecewise linear with kinks at atoms, so
/// comparing them on the union of both supports is exact.
pub fn convex_order_leq(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    tol: f64,
) -> Result<ConvexOrderVerdict, MeasureError> {
    for m in [mu, nu] {
        if !m.is_probability(tol.max(1e-12)) {
            return Err(MeasureError::NotProbability(m.total_mass()));
        }
    }
    let (mean_mu, mean_nu) = (mu.barycenter()?, nu.barycenter()?);
    if (mean_mu - mean_nu).abs() > tol {
        return Ok(ConvexOrderVerdict {
            holds: false,
            witness: None,
            failure: Some(ConvexOrderFailure::MeanMismatch { mean_mu, mean_nu }),
        });
    }
    let mut grid: Vec<f64> = mu.positions().chain(nu.positions()).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() <= POSITION_TOL);
    for x in grid {
        let (pm, pn) = (mu.potential(x), nu.potential(x));
        if pm > pn + tol {
            return Ok(ConvexOrderVerdict {
                holds: false,
                witness: Some(x),
                failure: Some(ConvexOrderFailure::PotentialExceeded {
                    x,
                    potential_mu: pm,
                    potential_nu: pn,
                }),
            });
        }
    }
    Ok(ConvexOrderVerdict {
        holds: true,
        witness: None,
        failure: None,
    })
}

/// `∫ |F_mu − F_nu|`, exact on the merged grid of atoms.
pub fn wasserstein1(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64, MeasureError> {
    let (a, b) = (mu.total_mass(), nu.total_mass());
    if (a - b).abs() > 1e-9 * a.max(b).max(1.0) {
        return Err(MeasureError::MassMismatch(a, b));
    }
    let mut events: Vec<(f64, f64)> = mu
        .atoms()
        .iter()
        .copied()
        .chain(nu.atoms().iter().map(|&(p, m)| (p, -m)))
        .collect();
    events.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut gap = 0.0;
    let mut total = 0.0;
    for pair in events.windows(2) {
        gap += pair[0].1;
        total += gap.abs() * (pair[1].0 - pair[0].0);
    }
    Ok(total)
}

/// A finite positive measure on the plane, canonically ordered by `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CouplingRepr", into = "CouplingRepr")]
pub struct Coupling {
    entries: Vec<(f64, f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct CouplingRepr {
    entries: Vec<[f64; 3]>,
}

impl TryFrom<CouplingRepr> for Coupling {
    type Error = MeasureError;

    fn try_from(repr: CouplingRepr) -> Result<Self, Self::Error> {
        Coupling::new(repr.entries.into_iter().map(|[x, y, m]| (x, y, m)).collect())
    }
}

impl From<Coupling> for CouplingRepr {
    fn from(c: Coupling) -> Self {
        CouplingRepr {
            entries: c.entries.iter().map(|&(x, y, m)| [x, y, m]).collect(),
        }
    }
}

fn cmp_point(a: (f64, f64), b: (f64, f64)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1))
}

fn same_point(a: (f64, f64), b: (f64, f64)) -> bool {
    (a.0 - b.0).abs() <= POSITION_TOL && (a.1 - b.1).abs() <= POSITION_TOL
}

impl Coupling {
    /// Canonicalizes `(x, y, mass)` triples: sorted, duplicates summed, zero
    /// masses dropped.
    pub fn new(entries: Vec<(f64, f64, f64)>) -> Result<Self, MeasureError> {
        for (index, &(x, y, m)) in entries.iter().enumerate() {
            if !(x.is_finite() && y.is_finite() && m.is_finite()) {
                return Err(MeasureError::NonFinite { index });
            }
            if m < 0.0 {
                return Err(MeasureError::NegativeWeight { index, weight: m });
            }
        }
        Ok(Self::canonical(entries))
    }

    pub(crate) fn canonical(mut entries: Vec<(f64, f64, f64)>) -> Self {
        // Snap x to cluster representatives first so that near-equal x values
        // cannot interleave with distinct y values in the lexicographic sort.
        let mut xs: Vec<f64> = entries.iter().map(|e| e.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() <= POSITION_TOL);
        for e in entries.iter_mut() {
            let i = xs.partition_point(|&r| r < e.0 - POSITION_TOL);
            e.0 = xs[i];
        }
        entries.sort_by(|a, b| cmp_point((a.0, a.1), (b.0, b.1)));
        let mut out: Vec<(f64, f64, f64)> = Vec::with_capacity(entries.len());
        for (x, y, m) in entries {
            match out.last_mut() {
                Some(last) if last.0 == x && (last.1 - y).abs() <= POSITION_TOL => last.2 += m,
                _ => out.push((x, y, m)),
            }
        }
        out.retain(|e| e.2 > 0.0);
        Coupling { entries: out }
    }

    pub fn empty() -> Self {
        Coupling { entries: Vec::new() }
    }

    pub fn dirac(x: f64, y: f64) -> Self {
        Coupling {
            entries: vec![(x, y, 1.0)],
        }
    }

    /// Product coupling `mu ⊗ nu`.
    pub fn product(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Self {
        let mut entries = Vec::with_capacity(mu.len() * nu.len());
        for &(x, a) in mu.atoms() {
            for &(y, b) in nu.atoms() {
                entries.push((x, y, a * b));
            }
        }
        Self::canonical(entries)
    }

    pub fn entries(&self) -> &[(f64, f64, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }

    /// Mass at `(x, y)` within [`POSITION_TOL`].
    pub fn mass_at(&self, x: f64, y: f64) -> f64 {
        self.entries
            .iter()
            .filter(|e| same_point((e.0, e.1), (x, y)))
            .map(|e| e.2)
            .sum()
    }

    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.entries.iter().map(|&(x, y, m)| f(x, y) * m).sum()
    }

    pub fn marginals(&self) -> (DiscreteMeasure, DiscreteMeasure) {
        let xs = self.entries.iter().map(|e| (e.0, e.2)).collect();
        let ys = self.entries.iter().map(|e| (e.1, e.2)).collect();
        (
            DiscreteMeasure::from_canonical(merge_sorted(xs)),
            DiscreteMeasure::from_canonical(merge_sorted(ys)),
        )
    }

    /// Entries grouped into x-columns, in increasing x.
    pub fn columns(&self) -> Vec<(f64, Vec<(f64, f64)>)> {
        let mut cols: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
        for &(x, y, m) in &self.entries {
            match cols.last_mut() {
                Some(col) if (col.0 - x).abs() <= POSITION_TOL => col.1.push((y, m)),
                _ => cols.push((x, vec![(y, m)])),
            }
        }
        cols
    }

    /// Points with mass strictly above `threshold`.
    pub fn support(&self, threshold: f64) -> SupportSet {
        SupportSet::new(
            self.entries
                .iter()
                .filter(|e| e.2 > threshold)
                .map(|e| (e.0, e.1))
                .collect(),
        )
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::canonical(self.entries.iter().map(|&(x, y, m)| (x, y, m * factor)).collect())
    }

    /// Drops entries with mass at or below `threshold`.
    pub fn pruned(&self, threshold: f64) -> Self {
        Coupling {
            entries: self.entries.iter().copied().filter(|e| e.2 > threshold).collect(),
        }
    }

    pub fn map_points(&self, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        Self::canonical(
            self.entries
                .iter()
                .map(|&(x, y, m)| {
                    let (a, b) = f(x, y);
                    (a, b, m)
                })
                .collect(),
        )
    }

    /// Normalized conditional law of `y` in the column at `x`, if present.
    pub fn conditional(&self, x: f64) -> Option<DiscreteMeasure> {
        let col: Vec<(f64, f64)> = self
            .entries
            .iter()
            .filter(|e| (e.0 - x).abs() <= POSITION_TOL)
            .map(|e| (e.1, e.2))
            .collect();
        if col.is_empty() {
            return None;
        }
        DiscreteMeasure::from_canonical(merge_sorted(col)).normalized().ok()
    }

    /// Checks `|E[y | x] − x| ≤ tol·(1 + |x|)` column by column.
    pub fn is_martingale(&self, tol: f64) -> MartingaleVerdict {
        for (x, col) in self.columns() {
            let mass: f64 = col.iter().map(|c| c.1).sum();
            let mean = col.iter().map(|c| c.0 * c.1).sum::<f64>() / mass;
            if (mean - x).abs() > tol * (1.0 + x.abs()) {
                return MartingaleVerdict {
                    holds: false,
                    witness: Some(x),
                    conditional_mean: Some(mean),
                };
            }
        }
        MartingaleVerdict {
            holds: true,
            witness: None,
            conditional_mean: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleVerdict {
    pub holds: bool,
    pub witness: Option<f64>,
    pub conditional_mean: Option<f64>,
}

/// A finite set of points in the plane, sorted and free of duplicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "SupportRepr", into = "SupportRepr")]
pub struct SupportSet {
    points: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct SupportRepr {
    points: Vec<[f64; 2]>,
}

impl From<SupportRepr> for SupportSet {
    fn from(r: SupportRepr) -> Self {
        SupportSet::new(r.points.into_iter().map(|[x, y]| (x, y)).collect())
    }
}

impl From<SupportSet> for SupportRepr {
    fn from(s: SupportSet) -> Self {
        SupportRepr {
            points: s.points.iter().map(|&(x, y)| [x, y]).collect(),
        }
    }
}

impl SupportSet {
    pub fn new(mut points: Vec<(f64, f64)>) -> Self {
        points.sort_by(|a, b| cmp_point(*a, *b));
        points.dedup_by(|a, b| same_point(*a, *b));
        SupportSet { points }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, p: (f64, f64)) -> bool {
        self.points.iter().any(|&q| same_point(p, q))
    }

    /// Points grouped into x-columns with sorted y-values.
    pub fn columns(&self) -> Vec<(f64, Vec<f64>)> {
        let mut cols: Vec<(f64, Vec<f64>)> = Vec::new();
        for &(x, y) in &self.points {
            match cols.last_mut() {
                Some(col) if (col.0 - x).abs() <= POSITION_TOL => col.1.push(y),
                _ => cols.push((x, vec![y])),
            }
        }
        cols
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        SupportSet::new(self.points.iter().map(|&(x, y)| f(x, y)).collect())
    }

    /// Set equality up to `tol` per coordinate.
    pub fn approx_eq(&self, other: &SupportSet, tol: f64) -> bool {
        self.len() == other.len()
            && self
                .points
                .iter()
                .zip(&other.points)
                .all(|(a, b)| (a.0 - b.0).abs() <= tol && (a.1 - b.1).abs() <= tol)
    }
}
