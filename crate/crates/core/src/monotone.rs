//! Competitors, finite c-monotonicity and competitorblind functions.
//!
//! A competitor of a finite measure `α` on the plane is a measure `β` with the
//! same two marginals and, column by column, the same barycenter:
//!
//! * (C1) equal x-marginals,
//! * (C2) equal y-marginals,
//! * (C3) `Σ_y (y − x) β(x, y) = Σ_y (y − x) α(x, y)` for every `x`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{CostError, CostFunction};
use crate::lp::{LinearProgram, LpError, LpStatus};
use crate::measures::{Coupling, SupportSet, POSITION_TOL};
use crate::motlp::{CouplingLp, Sense};

/// Improvement below which a competitor does not count as a counterexample.
pub const IMPROVEMENT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonotoneError {
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("competitor LP ended with status {0:?}")]
    Status(LpStatus),
    #[error("grid needs at least 2 x-points and 3 y-points, got {nx} and {ny}")]
    DegenerateGrid { nx: usize, ny: usize },
}

/// A pair `(α, β)` of competitors and `β(c) − α(c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetitorCertificate {
    pub alpha: Coupling,
    pub beta: Coupling,
    pub gap: f64,
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= POSITION_TOL);
    v
}

fn index_of(grid: &[f64], v: f64) -> usize {
    grid.partition_point(|&g| g < v - POSITION_TOL)
}

/// Competitor polytope of `alpha` on `supp(α₀) × supp(α₁)`.
pub fn competitor_lp(alpha: &Coupling) -> CouplingLp {
    let xs = sorted_unique(alpha.entries().iter().map(|e| e.0).collect());
    let ys = sorted_unique(alpha.entries().iter().map(|e| e.1).collect());
    let (nx, ny) = (xs.len(), ys.len());
    let n = nx * ny;
    let points: Vec<(f64, f64)> = xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))).collect();
    let mut row_mass = vec![0.0; nx];
    let mut col_mass = vec![0.0; ny];
    let mut row_bary = vec![0.0; nx];
    for &(x, y, m) in alpha.entries() {
        let (i, j) = (index_of(&xs, x), index_of(&ys, y));
        row_mass[i] += m;
        col_mass[j] += m;
        row_bary[i] += y * m;
    }
    let mut rows = Vec::with_capacity(2 * nx + ny);
    let mut rhs = Vec::with_capacity(2 * nx + ny);
    for i in 0..nx {
        let mut r = vec![0.0; n];
        r[i * ny..(i + 1) * ny].iter_mut().for_each(|v| *v = 1.0);
        rows.push(r);
        rhs.push(row_mass[i]);
    }
    for j in 0..ny {
        let mut r = vec![0.0; n];
        for i in 0..nx {
            r[i * ny + j] = 1.0;
        }
        rows.push(r);
        rhs.push(col_mass[j]);
    }
    for i in 0..nx {
        let mut r = vec![0.0; n];
        for j in 0..ny {
            r[i * ny + j] = ys[j];
        }
        rows.push(r);
        rhs.push(row_bary[i]);
    }
    CouplingLp { points, rows, rhs }
}

/// Minimal `β(c)` over competitors `β` of `alpha`, with an argmin.
pub fn min_over_competitors(alpha: &Coupling, cost: &CostFunction) -> Result<(f64, Coupling), MonotoneError> {
    if alpha.is_empty() {
        return Ok((0.0, Coupling::empty()));
    }
    let lp = competitor_lp(alpha);
    let c = lp.cost_vector(cost)?;
    let sol = lp.solve(&c, Sense::Min, None)?;
    if sol.status != LpStatus::Optimal {
        return Err(MonotoneError::Status(sol.status));
    }
    Ok((sol.value, lp.coupling(&sol.masses)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    C1,
    C2,
    C3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C123Verdict {
    pub holds: bool,
    pub failed: Option<Condition>,
    /// Largest absolute residual of (C1), (C2), (C3).
    pub residuals: [f64; 3],
}

fn max_gap(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut all: Vec<(f64, f64)> = a.iter().copied().chain(b.iter().map(|&(p, m)| (p, -m))).collect();
    all.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut worst: f64 = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut s = 0.0;
        let p = all[i].0;
        while i < all.len() && (all[i].0 - p).abs() <= POSITION_TOL {
            s += all[i].1;
            i += 1;
        }
        worst = worst.max(s.abs());
    }
    worst
}

/// Checks (C1)–(C3) for `beta` against `alpha`, reporting the first failure.
pub fn verify_c123(alpha: &Coupling, beta: &Coupling, tol: f64) -> C123Verdict {
    let (a0, a1) = alpha.marginals();
    let (b0, b1) = beta.marginals();
    let r1 = max_gap(a0.atoms(), b0.atoms());
    let r2 = max_gap(a1.atoms(), b1.atoms());
    let drift = |q: &Coupling| -> Vec<(f64, f64)> {
        q.columns()
            .into_iter()
            .map(|(x, col)| (x, col.iter().map(|&(y, m)| (y - x) * m).sum()))
            .collect()
    };
    let r3 = max_gap(&drift(alpha), &drift(beta));
    let residuals = [r1, r2, r3];
    let failed = [Condition::C1, Condition::C2, Condition::C3]
        .into_iter()
        .zip(residuals)
        .find(|&(_, r)| r > tol)
        .map(|(c, _)| c);
    C123Verdict {
        holds: failed.is_none(),
        failed,
        residuals,
    }
}

/// The three-point pair used throughout the theory:
/// `α = λδ(x₁,y₁) + (1−λ)δ(x₁,y₂) + δ(x₂,y_λ)` and
/// `β = λδ(x₂,y₁) + (1−λ)δ(x₂,y₂) + δ(x₁,y_λ)` with `λ = (y₂ − y_λ)/(y₂ − y₁)`.
pub fn canonical_pair(x1: f64, x2: f64, y1: f64, ylam: f64, y2: f64) -> (Coupling, Coupling) {
    let lam = (y2 - ylam) / (y2 - y1);
    let alpha = Coupling::canonical(vec![(x1, y1, lam), (x1, y2, 1.0 - lam), (x2, ylam, 1.0)]);
    let beta = Coupling::canonical(vec![(x2, y1, lam), (x2, y2, 1.0 - lam), (x1, ylam, 1.0)]);
    (alpha, beta)
}

fn gap(alpha: &Coupling, beta: &Coupling, cost: &CostFunction) -> Result<f64, CostError> {
    Ok(cost.integrate(beta)? - cost.integrate(alpha)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneVerdict {
    pub monotone: bool,
    pub certificate: Option<CompetitorCertificate>,
    /// Tested budget: subsets up to this size.
    pub max_support: usize,
    pub subsets_tested: usize,
    /// Subsets whose exact improvement LP showed no competitor helps.
    pub subsets_certified: usize,
    pub random_trials_run: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Found {
    Canonical,
    Random,
    Exact,
}

struct SubsetOutcome {
    certificate: Option<(Found, CompetitorCertificate)>,
    certified: bool,
    trials: usize,
}

/// All index combinations of sizes `1..=k`, ordered by size then lexicographically.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for size in 1..=k.min(n) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            out.push(idx.clone());
            let mut i = size;
            while i > 0 && idx[i - 1] == n - size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..size {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out
}

/// `min β(c) − α(c)` jointly over probability measures `α` on `pts` and their
/// competitors `β` on the product grid. Returns the optimizer when it improves.
fn exact_improvement(pts: &[(f64, f64)], cost: &CostFunction) -> Result<Option<CompetitorCertificate>, MonotoneError> {
    let xs = sorted_unique(pts.iter().map(|p| p.0).collect());
    let ys = sorted_unique(pts.iter().map(|p| p.1).collect());
    let (na, nx, ny) = (pts.len(), xs.len(), ys.len());
    let n = na + nx * ny;
    let mut c = vec![0.0; n];
    for (k, &(x, y)) in pts.iter().enumerate() {
        c[k] = -cost.eval(x, y)?;
    }
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            c[na + i * ny + j] = cost.eval(x, y)?;
        }
    }
    let mut rows = Vec::with_capacity(1 + 2 * nx + ny);
    let mut rhs = Vec::new();
    let mut norm = vec![0.0; n];
    norm[..na].iter_mut().for_each(|v| *v = 1.0);
    rows.push(norm);
    rhs.push(1.0);
    for (i, &x) in xs.iter().enumerate() {
        let mut mass = vec![0.0; n];
        let mut bary = vec![0.0; n];
        for (k, &(px, py)) in pts.iter().enumerate() {
            if (px - x).abs() <= POSITION_TOL {
                mass[k] = -1.0;
                bary[k] = -py;
            }
        }
        for (j, &y) in ys.iter().enumerate() {
            mass[na + i * ny + j] = 1.0;
            bary[na + i * ny + j] = y;
        }
        rows.push(mass);
        rows.push(bary);
        rhs.extend([0.0, 0.0]);
    }
    for (j, &y) in ys.iter().enumerate() {
        let mut r = vec![0.0; n];
        for (k, &(_, py)) in pts.iter().enumerate() {
            if (py - y).abs() <= POSITION_TOL {
                r[k] = -1.0;
            }
        }
        for i in 0..nx {
            r[na + i * ny + j] = 1.0;
        }
        rows.push(r);
        rhs.push(0.0);
    }
    let sol = LinearProgram::new(c, &rows, rhs)?.solve()?;
    if sol.status != LpStatus::Optimal {
        return Err(MonotoneError::Status(sol.status));
    }
    if sol.value >= -IMPROVEMENT_TOL {
        return Ok(None);
    }
    let alpha = Coupling::canonical(pts.iter().zip(&sol.x).map(|(&(x, y), &m)| (x, y, m)).collect());
    let mut beta = Vec::new();
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            beta.push((x, y, sol.x[na + i * ny + j]));
        }
    }
    let beta = Coupling::canonical(beta);
    let gap = gap(&alpha, &beta, cost)?;
    Ok(Some(CompetitorCertificate { alpha, beta, gap }))
}

/// Canonical three-point pairs realizable inside a 3-point subset.
fn canonical_in(pts: &[(f64, f64)], cost: &CostFunction) -> Result<Option<CompetitorCertificate>, MonotoneError> {
    for a in 0..pts.len() {
        for b in 0..pts.len() {
            for k in 0..pts.len() {
                let (p, q, r) = (pts[a], pts[b], pts[k]);
                let same_col = (p.0 - q.0).abs() <= POSITION_TOL;
                if a == b || !same_col || p.1 >= q.1 || (r.0 - p.0).abs() <= POSITION_TOL {
                    continue;
                }
                if !(r.1 > p.1 && r.1 < q.1) {
                    continue;
                }
                let (alpha, beta) = canonical_pair(p.0, r.0, p.1, r.1, q.1);
                let g = gap(&alpha, &beta, cost)?;
                if g < -IMPROVEMENT_TOL {
                    return Ok(Some(CompetitorCertificate { alpha, beta, gap: g }));
                }
            }
        }
    }
    Ok(None)
}

fn trivial_subset(pts: &[(f64, f64)]) -> bool {
    let xs = sorted_unique(pts.iter().map(|p| p.0).collect());
    // One column: the only competitor is α itself. All columns singletons: any
    // competitor is a column-wise spread with the same total, hence equal.
    xs.len() < 2 || xs.len() == pts.len()
}

fn subset_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn check_subset(
    pts: &[(f64, f64)],
    cost: &CostFunction,
    trials: usize,
    seed: u64,
) -> Result<SubsetOutcome, MonotoneError> {
    let mut outcome = SubsetOutcome {
        certificate: None,
        certified: false,
        trials: 0,
    };
    if trivial_subset(pts) {
        outcome.certified = true;
        return Ok(outcome);
    }
    if pts.len() == 3 {
        if let Some(cert) = canonical_in(pts, cost)? {
            outcome.certificate = Some((Found::Canonical, cert));
            return Ok(outcome);
        }
    }
    let exact = exact_improvement(pts, cost)?;
    let Some(exact) = exact else {
        // No α on this subset admits an improving competitor, so random
        // weights cannot find one either.
        outcome.certified = true;
        return Ok(outcome);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        outcome.trials += 1;
        let alpha = Coupling::canonical(pts.iter().map(|&(x, y)| (x, y, rng.gen_range(0.05..1.0))).collect());
        let (value, beta) = min_over_competitors(&alpha, cost)?;
        let g = value - cost.integrate(&alpha)?;
        if g < -IMPROVEMENT_TOL {
            outcome.certificate = Some((Found::Random, CompetitorCertificate { alpha, beta, gap: g }));
            return Ok(outcome);
        }
    }
    outcome.certificate = Some((Found::Exact, exact));
    Ok(outcome)
}

/// Searches finite measures on subsets of `xi` (size ≤ `max_support`) for an
/// improving competitor.
///
/// Every subset gets an exact LP over all its probability measures; size-3
/// subsets are first probed with the canonical three-point pair, and subsets
/// with an improvement are also probed with `trials` random weight vectors.
/// The reported certificate is the one from the lexicographically first
/// failing subset, independent of thread count. A `monotone` verdict covers
/// only the tested budget.
pub fn is_finitely_monotone(
    xi: &SupportSet,
    cost: &CostFunction,
    max_support: usize,
    trials: usize,
    seed: u64,
) -> Result<MonotoneVerdict, MonotoneError> {
    let pts = xi.points();
    let subsets = combinations(pts.len(), max_support);
    let results: Vec<Result<SubsetOutcome, MonotoneError>> = subsets
        .par_iter()
        .enumerate()
        .map(|(k, idx)| {
            let sub: Vec<(f64, f64)> = idx.iter().map(|&i| pts[i]).collect();
            check_subset(&sub, cost, trials, subset_seed(seed, k))
        })
        .collect();
    let mut verdict = MonotoneVerdict {
        monotone: true,
        certificate: None,
        max_support,
        subsets_tested: 0,
        subsets_certified: 0,
        random_trials_run: 0,
    };
    for r in results {
        let r = r?;
        verdict.subsets_tested += 1;
        verdict.random_trials_run += r.trials;
        verdict.subsets_certified += r.certified as usize;
        if let Some((found, cert)) = r.certificate {
            log::debug!("improving competitor found by {found:?} search, gap {}", cert.gap);
            verdict.monotone = false;
            verdict.certificate = Some(cert);
            break;
        }
    }
    Ok(verdict)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindVerdict {
    pub blind: bool,
    /// `(x₁, x₂, y₁, y_λ, y₂)` where the defect differs.
    pub witness: Option<[f64; 5]>,
}

/// Checks that `λf(x,y₁) + (1−λ)f(x,y₂) − f(x,y_λ)` does not depend on `x` for
/// every grid triple `y₁ < y_λ < y₂`.
pub fn is_competitorblind(
    f: &CostFunction,
    x_grid: &[f64],
    y_grid: &[f64],
    tol: f64,
) -> Result<BlindVerdict, MonotoneError> {
    let xs = sorted_unique(x_grid.to_vec());
    let ys = sorted_unique(y_grid.to_vec());
    if xs.len() < 2 || ys.len() < 3 {
        return Err(MonotoneError::DegenerateGrid { nx: xs.len(), ny: ys.len() });
    }
    let table: Vec<Vec<f64>> = xs
        .iter()
        .map(|&x| ys.iter().map(|&y| f.eval(x, y)).collect::<Result<_, _>>())
        .collect::<Result<_, _>>()?;
    for a in 0..ys.len() {
        for m in a + 1..ys.len() {
            for b in m + 1..ys.len() {
                let lam = (ys[b] - ys[m]) / (ys[b] - ys[a]);
                let defect = |i: usize| lam * table[i][a] + (1.0 - lam) * table[i][b] - table[i][m];
                for i in 0..xs.len() {
                    for j in i + 1..xs.len() {
                        let (d1, d2) = (defect(i), defect(j));
                        if (d1 - d2).abs() > tol * (1.0 + d1.abs().max(d2.abs())) {
                            return Ok(BlindVerdict {
                                blind: false,
                                witness: Some([xs[i], xs[j], ys[a], ys[m], ys[b]]),
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(BlindVerdict {
        blind: true,
        witness: None,
    })
}

/// Least-squares fit `f(x,y) ≈ φ(x) + ψ(y) + k(x)·y` with `ψ` vanishing at the
/// two smallest y-grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindDecomposition {
    pub x_grid: Vec<f64>,
    pub y_grid: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub k: Vec<f64>,
    /// Root-mean-square misfit over the grid.
    pub residual: f64,
}

pub fn decompose_competitorblind(
    f: &CostFunction,
    x_grid: &[f64],
    y_grid: &[f64],
) -> Result<BlindDecomposition, MonotoneError> {
    let xs = sorted_unique(x_grid.to_vec());
    let ys = sorted_unique(y_grid.to_vec());
    let (nx, ny) = (xs.len(), ys.len());
    if nx < 1 || ny < 2 {
        return Err(MonotoneError::DegenerateGrid { nx, ny });
    }
    // Unknowns: φ (nx), ψ at y₂.. (ny − 2), k (nx).
    let nu = 2 * nx + ny - 2;
    let mut a = DMatrix::<f64>::zeros(nx * ny, nu);
    let mut rhs = DVector::<f64>::zeros(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let r = i * ny + j;
            a[(r, i)] = 1.0;
            if j >= 2 {
                a[(r, nx + j - 2)] = 1.0;
            }
            a[(r, nx + ny - 2 + i)] = ys[j];
            rhs[r] = f.eval(xs[i], ys[j])?;
        }
    }
    let sol = a
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .expect("SVD was computed with both factors");
    let resid = &a * &sol - &rhs;
    let residual = (resid.norm_squared() / (nx * ny) as f64).sqrt();
    let phi = sol.rows(0, nx).iter().copied().collect();
    let mut psi = vec![0.0, 0.0];
    psi.extend(sol.rows(nx, ny - 2).iter().copied());
    let k = sol.rows(nx + ny - 2, nx).iter().copied().collect();
    Ok(BlindDecomposition {
        x_grid: xs,
        y_grid: ys,
        phi,
        psi,
        k,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostFamily;

    fn example_alpha() -> Coupling {
        Coupling::new(vec![(0.0, -1.0, 0.5), (0.0, 1.0, 0.5), (1.0, 0.0, 1.0)]).unwrap()
    }

    #[test]
    fn min_over_competitors_example() {
        let (v, beta) = min_over_competitors(&example_alpha(), &CostFamily::SmNeg.into()).unwrap();
        assert!((v + 1.0).abs() < 1e-12);
        assert!((beta.mass_at(0.0, 0.0) - 1.0).abs() < 1e-12);
        assert!((beta.mass_at(1.0, -1.0) - 0.5).abs() < 1e-12);
        assert!((beta.mass_at(1.0, 1.0) - 0.5).abs() < 1e-12);
        assert!(verify_c123(&example_alpha(), &beta, 1e-9).holds);
    }

    #[test]
    fn blind_cost_is_constant_on_polytope() {
        let c = CostFunction::custom("y^2", |_, y| y * y);
        let (v, _) = min_over_competitors(&example_alpha(), &c).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singleton_polytope() {
        let a = Coupling::dirac(0.0, 0.0);
        let (v, beta) = min_over_competitors(&a, &CostFamily::Cubic.into()).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(beta, a);
    }

    #[test]
    fn canonical_pair_is_competitor() {
        let (a, b) = canonical_pair(0.0, 1.0, -1.0, 0.0, 1.0);
        assert_eq!(a, example_alpha());
        assert!(verify_c123(&a, &b, 1e-12).holds);
        let perturbed = Coupling::new(
            b.entries()
                .iter()
                .map(|&(x, y, m)| if (x, y) == (0.0, 0.0) { (x, y, m + 0.01) } else { (x, y, m) })
                .collect(),
        )
        .unwrap();
        assert_eq!(verify_c123(&a, &perturbed, 1e-9).failed, Some(Condition::C1));
        let moved = Coupling::new(vec![(1.0, -1.0, 0.51), (1.0, 1.0, 0.49), (0.0, 0.0, 1.0)]).unwrap();
        let v = verify_c123(&a, &moved, 1e-9);
        assert_eq!(v.failed, Some(Condition::C2));
        assert!(verify_c123(&a, &a, 0.0).holds);
    }

    #[test]
    fn finitely_monotone_examples() {
        let xi = SupportSet::new(vec![(0.0, -1.0), (0.0, 1.0), (1.0, 0.0)]);
        let v = is_finitely_monotone(&xi, &CostFamily::SmNeg.into(), 3, 10, 7).unwrap();
        assert!(!v.monotone);
        assert!((v.certificate.unwrap().gap + 1.0).abs() < 1e-9);
        let v = is_finitely_monotone(&SupportSet::new(vec![(2.0, 3.0)]), &CostFamily::SmNeg.into(), 4, 10, 7).unwrap();
        assert!(v.monotone);
    }

    #[test]
    fn combinations_order() {
        let c = combinations(4, 2);
        assert_eq!(c.len(), 4 + 6);
        assert_eq!(c[4], vec![0, 1]);
        assert_eq!(c[9], vec![2, 3]);
    }

    #[test]
    fn competitorblind_examples() {
        let blind = CostFunction::custom("x+y^2+xy", |x, y| x + y * y + x * y);
        let grid_x = [0.0, 1.0, 2.5];
        let grid_y = [-1.0, 0.0, 0.5, 2.0];
        assert!(is_competitorblind(&blind, &grid_x, &grid_y, 1e-9).unwrap().blind);
        let v = is_competitorblind(&CostFamily::SmPos.into(), &[0.0, 1.0], &[-1.0, 0.0, 1.0], 1e-9).unwrap();
        assert_eq!(v.witness, Some([0.0, 1.0, -1.0, 0.0, 1.0]));
        let absdiff: CostFunction = CostFamily::AbsDiff.into();
        let v = is_competitorblind(&absdiff, &[0.0, 2.0], &[-1.0, 0.0, 1.0], 1e-9).unwrap();
        assert_eq!(v.witness, Some([0.0, 2.0, -1.0, 0.0, 1.0]));
        assert!(is_competitorblind(&absdiff, &[0.0], &[0.0, 1.0, 2.0], 1e-9).is_err());
    }

    #[test]
    fn decomposition_examples() {
        let blind = CostFunction::custom("x+y^2+xy", |x, y| x + y * y + x * y);
        let d = decompose_competitorblind(&blind, &[0.0, 1.0, 2.5], &[-1.0, 0.0, 0.5, 2.0]).unwrap();
        assert!(d.residual < 1e-10);
        let d = decompose_competitorblind(&CostFamily::SmPos.into(), &[0.0, 1.0], &[-1.0, 0.0, 1.0]).unwrap();
        assert!((d.residual - 1.0 / 18f64.sqrt()).abs() < 1e-12);
        let five = CostFunction::custom("5", |_, _| 5.0);
        let d = decompose_competitorblind(&five, &[0.0, 1.0], &[-1.0, 0.0, 1.0]).unwrap();
        assert!(d.phi.iter().all(|v| (v - 5.0).abs() < 1e-12));
        assert!(d.psi.iter().chain(&d.k).all(|v| v.abs() < 1e-12));
        assert!(d.residual < 1e-12);
    }
}
