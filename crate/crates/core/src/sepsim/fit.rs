use serde::{Deserialize, Serialize};

use super::barrier::{level_cut, Barrier, BarrierKind, Cut, StopSet};
use super::dp::{embed, exact_row, Embedding};
use super::lattice::Lattice;
use super::SepError;
use crate::measures::{convex_order_leq, DiscreteMeasure};

const ORDER_TOL: f64 = 1e-9;
/// Smallest objective decrease that counts as a change.
const IMPROVE_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_sweeps: usize,
    /// Fitted barriers ignore the region at time 0 unless this is false.
    pub exclude_time_zero: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_sweeps: 200,
            exclude_time_zero: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoSided {
    Inner,
    Outer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub barrier: Barrier,
    /// Horizon-DP embedding of the fitted barrier.
    pub embedding: Embedding,
    /// W1 distance between the embedded law and the target.
    pub w1: f64,
    pub sweeps: usize,
    /// Outer fits only: whether the target puts no mass between the extreme
    /// start atoms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispersed: Option<bool>,
}

pub fn fit_right_barrier(mu: &DiscreteMeasure, nu: &DiscreteMeasure, lattice: &Lattice) -> Result<Fit, SepError> {
    fit_with(mu, nu, lattice, BarrierKind::Right, FitOptions::default())
}

pub fn fit_two_sided(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    lattice: &Lattice,
    kind: TwoSided,
) -> Result<Fit, SepError> {
    let kind = match kind {
        TwoSided::Inner => BarrierKind::TwoSidedInner,
        TwoSided::Outer => BarrierKind::TwoSidedOuter,
    };
    fit_with(mu, nu, lattice, kind, FitOptions::default())
}

struct Problem {
    kind: BarrierKind,
    open: bool,
    exclude_time_zero: bool,
    n: usize,
    delta: f64,
    starts: Vec<(usize, f64)>,
    target_cdf: Vec<f64>,
}

impl Problem {
    /// W1 on the grid from CDF differences; escaped mass is charged the full
    /// grid width.
    fn objective(&self, cuts: &[Cut]) -> f64 {
        let mut law = vec![0.0; self.n];
        let mut escaped = 0.0;
        for &(s, w) in &self.starts {
            let set = StopSet {
                start: s,
                stop: (0..self.n).map(|i| cuts[i].stops(i as i64 - s as i64)).collect(),
            };
            let row = exact_row(&set, self.exclude_time_zero);
            for (i, m) in row.absorbed {
                law[i] += w * m;
            }
            escaped += w * row.escaped;
        }
        let mut cum = 0.0;
        let mut w1 = 0.0;
        for i in 0..self.n - 1 {
            cum += law[i];
            w1 += (cum - self.target_cdf[i]).abs();
        }
        self.delta * (w1 + escaped * self.n as f64)
    }

    fn cut(&self, v: (f64, f64)) -> Cut {
        level_cut(self.kind, v.0, v.1, self.open)
    }
}

/// Candidate threshold pairs at level `i`, in the order they are tried.
fn candidates(kind: BarrierKind, i: usize, starts: &[(usize, f64)], below: bool, above: bool, current: (f64, f64)) -> Vec<(f64, f64)> {
    let ds: Vec<f64> = starts.iter().map(|&(s, _)| i as f64 - s as f64).collect();
    let (inf, ninf) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut out = Vec::new();
    match kind {
        BarrierKind::Right => {
            out.push((ninf, 0.0));
            out.extend(ds.iter().map(|&d| (d, 0.0)));
            out.push((inf, 0.0));
        }
        BarrierKind::Left => {
            out.push((inf, 0.0));
            out.extend(ds.iter().map(|&d| (d, 0.0)));
            out.push((ninf, 0.0));
        }
        BarrierKind::TwoSidedInner => {
            let (u1, u2) = current;
            let lows = [ninf, 0.0].into_iter().chain(ds.iter().copied().filter(|&d| d <= 0.0));
            out.extend(lows.map(|a| (a, u2)));
            let highs = [inf, 0.0].into_iter().chain(ds.iter().copied().filter(|&d| d >= 0.0));
            out.extend(highs.map(|b| (u1, b)));
        }
        BarrierKind::TwoSidedOuter => {
            let (u1, u2) = current;
            if above && !below {
                // Every start lies below: only d > 0 matters.
                let highs = [0.0, inf].into_iter().chain(ds.iter().copied());
                out.extend(highs.map(|b| (0.0, b)));
            } else if below && !above {
                let lows = [0.0, ninf].into_iter().chain(ds.iter().copied());
                out.extend(lows.map(|a| (a, 0.0)));
            } else {
                let lows = [ninf].into_iter().chain(ds.iter().copied());
                out.extend(lows.map(|a| (a, u2)));
                let highs = [inf].into_iter().chain(ds.iter().copied());
                out.extend(highs.map(|b| (u1, b)));
                out.retain(|&(a, b)| a <= b);
            }
        }
    }
    out
}

/// Fits a barrier of the given kind by coordinate descent on the W1 distance
/// between the exactly computed embedded law and `nu`.
///
/// Levels of `supp(nu)` are visited outward from the mean. At each level every
/// threshold that changes the set of stopped start atoms is tried and the best
/// strict improvement kept. The loop ends after a sweep without changes.
pub fn fit_with(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    lattice: &Lattice,
    kind: BarrierKind,
    opts: FitOptions,
) -> Result<Fit, SepError> {
    let verdict = convex_order_leq(mu, nu, ORDER_TOL)?;
    if !verdict.holds {
        return Err(SepError::Precondition(format!(
            "marginals are not in convex order{}",
            verdict.failure.map(|f| format!(": {f:?}")).unwrap_or_default()
        )));
    }
    let g = lattice.grid;
    let starts = lattice.indices(mu)?;
    let targets = lattice.indices(nu)?;
    let mut dispersed = None;
    if kind == BarrierKind::TwoSidedOuter {
        if starts.iter().any(|a| targets.iter().any(|b| a.0 == b.0)) {
            return Err(SepError::Precondition("outer barrier needs disjoint supports".into()));
        }
        let (lo, hi) = (starts[0].0, starts[starts.len() - 1].0);
        dispersed = Some(!targets.iter().any(|&(i, _)| lo <= i && i <= hi));
    }
    let n = g.len;
    let mut target = vec![0.0; n];
    for &(i, w) in &targets {
        target[i] += w;
    }
    let target_cdf: Vec<f64> = target
        .iter()
        .scan(0.0, |c, &m| {
            *c += m;
            Some(*c)
        })
        .collect();
    let prob = Problem {
        kind,
        open: matches!(kind, BarrierKind::TwoSidedOuter),
        exclude_time_zero: opts.exclude_time_zero,
        n,
        delta: g.delta,
        starts: starts.clone(),
        target_cdf,
    };

    let (inf, ninf) = (f64::INFINITY, f64::NEG_INFINITY);
    let never = match kind {
        BarrierKind::Right => (inf, 0.0),
        BarrierKind::Left => (ninf, 0.0),
        BarrierKind::TwoSidedInner => (ninf, inf),
        BarrierKind::TwoSidedOuter => (0.0, 0.0),
    };
    let mut values = vec![never; n];
    let (first, last) = (targets[0].0, targets[targets.len() - 1].0);
    match kind {
        BarrierKind::Right => {
            values[first] = (ninf, 0.0);
            values[last] = (ninf, 0.0);
        }
        BarrierKind::Left => {
            values[first] = (inf, 0.0);
            values[last] = (inf, 0.0);
        }
        BarrierKind::TwoSidedInner => {
            values[first] = (0.0, 0.0);
            values[last] = (0.0, 0.0);
        }
        BarrierKind::TwoSidedOuter => {
            values[first] = (ninf, 0.0);
            values[last] = (0.0, inf);
        }
    }
    let mut cuts: Vec<Cut> = values.iter().map(|&v| prob.cut(v)).collect();
    let mut best = prob.objective(&cuts);

    let mean = nu.barycenter()?;
    let mut order: Vec<usize> = targets.iter().map(|t| t.0).collect();
    order.sort_by(|&a, &b| {
        let (ya, yb) = (g.y(a), g.y(b));
        (ya - mean).abs().total_cmp(&(yb - mean).abs()).then(ya.total_cmp(&yb))
    });
    let (lo_start, hi_start) = (starts[0].0, starts[starts.len() - 1].0);

    let mut sweeps = 0;
    loop {
        if sweeps == opts.max_sweeps {
            return Err(SepError::NoConvergence {
                sweeps,
                residual: best,
            });
        }
        sweeps += 1;
        let mut changed = false;
        for &i in &order {
            let cands = candidates(kind, i, &starts, i < lo_start, i > hi_start, values[i]);
            let mut pick: Option<((f64, f64), f64)> = None;
            for v in cands {
                let c = prob.cut(v);
                if c == cuts[i] {
                    continue;
                }
                let old = std::mem::replace(&mut cuts[i], c);
                let obj = prob.objective(&cuts);
                cuts[i] = old;
                if obj < best - IMPROVE_TOL && pick.is_none_or(|p| obj < p.1) {
                    pick = Some((v, obj));
                }
            }
            if let Some((v, obj)) = pick {
                values[i] = v;
                cuts[i] = prob.cut(v);
                best = obj;
                changed = true;
            }
        }
        log::debug!("fit sweep {sweeps}: W1 {best:.6e}");
        if !changed {
            break;
        }
    }

    if kind == BarrierKind::Right {
        canonicalize_right(&mut values, &starts);
    }
    let (u, u2): (Vec<f64>, Vec<f64>) = values.into_iter().unzip();
    let two_sided = matches!(kind, BarrierKind::TwoSidedInner | BarrierKind::TwoSidedOuter);
    let barrier = Barrier::from_steps(kind, g, u, two_sided.then_some(u2))?.with_exclude_time_zero(opts.exclude_time_zero);
    let embedding = embed(&barrier, mu, lattice)?;
    let w1 = grid_w1(&embedding.law, nu)?;
    Ok(Fit {
        barrier,
        embedding,
        w1,
        sweeps,
        dispersed,
    })
}

/// Tightest threshold with the same stopped set: `k_y − max{k_x stopped}`.
fn canonicalize_right(values: &mut [(f64, f64)], starts: &[(usize, f64)]) {
    for (i, v) in values.iter_mut().enumerate() {
        let cut = ge_threshold(v.0);
        let stopped = starts.iter().map(|&(s, _)| s as i64).filter(|&s| i as i64 - s >= cut).max();
        v.0 = match stopped {
            Some(s) => (i as i64 - s) as f64,
            None => f64::INFINITY,
        };
    }
}

fn ge_threshold(u: f64) -> i64 {
    super::barrier::ge_cut(u, false)
}

/// W1 after renormalizing away truncated mass; lost mass beyond 1e-6 is an error.
fn grid_w1(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64, SepError> {
    if (a.total_mass() - b.total_mass()).abs() > 1e-6 {
        return Err(SepError::Precondition(format!(
            "embedding lost mass: {} of {}",
            a.total_mass(),
            b.total_mass()
        )));
    }
    let scale = b.total_mass() / a.total_mass();
    Ok(crate::measures::wasserstein1(&a.scaled(scale), b)?)
}

#[cfg(test)]
mod tests {
    use super::super::lattice::Grid;
    use super::*;

    fn lattice(delta: f64, lo: f64, hi: f64) -> Lattice {
        Lattice::new(Grid::covering(delta, lo, hi).unwrap(), 1_000_000, 0)
    }

    #[test]
    fn two_point_target_from_point() {
        let lat = lattice(0.25, -1.5, 1.5);
        let mu = DiscreteMeasure::dirac(0.0);
        let nu = DiscreteMeasure::new(&[-1.0, 1.0], &[0.5, 0.5]).unwrap();
        let fit = fit_right_barrier(&mu, &nu, &lat).unwrap();
        assert!(fit.w1 < 1e-9, "w1 = {}", fit.w1);
        for (y, psi) in fit.barrier.psi() {
            if (y.abs() - 1.0).abs() < 1e-12 {
                assert!((psi - y).abs() < 1e-12, "psi({y}) = {psi}");
            } else if y.abs() < 1.0 {
                assert_eq!(psi, f64::INFINITY);
            }
        }
        let inner = fit_two_sided(&mu, &nu, &lat, TwoSided::Inner).unwrap();
        assert!(inner.w1 < 1e-9);
    }

    #[test]
    fn identity_target_stops_at_time_zero() {
        let lat = lattice(0.1, -1.0, 1.0);
        let mu = DiscreteMeasure::new(&[-0.5, 0.0, 0.3], &[0.3, 0.3, 0.4]).unwrap();
        let opts = FitOptions {
            exclude_time_zero: false,
            ..FitOptions::default()
        };
        let fit = fit_with(&mu, &mu, &lat, BarrierKind::Right, opts).unwrap();
        assert!(fit.w1 < 1e-12);
        for &(x, _) in mu.atoms() {
            let i = lat.grid.index(x).unwrap();
            assert!(fit.barrier.psi_steps()[i] <= 0.0);
        }
        assert_eq!(fit.embedding.steps, 0);
    }

    #[test]
    fn rejects_non_convex_order_and_overlapping_outer() {
        let lat = lattice(0.1, -2.0, 2.0);
        let mu = DiscreteMeasure::new(&[-1.0, 1.0], &[0.5, 0.5]).unwrap();
        let nu = DiscreteMeasure::dirac(0.0);
        assert!(matches!(fit_right_barrier(&mu, &nu, &lat), Err(SepError::Precondition(_))));
        let nu2 = DiscreteMeasure::new(&[-2.0, 1.0, 2.0], &[0.25, 0.5, 0.25]).unwrap();
        assert!(matches!(
            fit_two_sided(&mu, &nu2, &lat, TwoSided::Outer),
            Err(SepError::Precondition(_))
        ));
    }
}
