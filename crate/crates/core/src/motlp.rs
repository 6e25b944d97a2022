//! Discrete martingale optimal transport as a linear program, and structural
//! checks on optimizer supports.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{CostError, CostFunction};
use crate::lp::{LinearProgram, LpError, LpStatus};
use crate::measures::{
    convex_order_leq, ConvexOrderVerdict, Coupling, DiscreteMeasure, MeasureError, SupportSet, POSITION_TOL,
};

/// Tolerance on total mass and means for the convex-order pre-screen.
pub const ORDER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MotError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    #[default]
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotSolution {
    pub coupling: Coupling,
    /// Optimal value; `null` in JSON unless optimal.
    pub value: f64,
    pub status: LpStatus,
    /// Convex-order diagnostic when the pre-screen rejects the marginals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convex_order: Option<ConvexOrderVerdict>,
}

/// Problem file: `{"mu", "nu", "cost": {"family", "params"}, "sense"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotProblem {
    pub mu: DiscreteMeasure,
    pub nu: DiscreteMeasure,
    pub cost: CostFunction,
    #[serde(default)]
    pub sense: Sense,
}

/// A linear program whose variables are masses on a fixed list of points in
/// the plane.
#[derive(Debug, Clone)]
pub struct CouplingLp {
    pub points: Vec<(f64, f64)>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

/// Outcome of [`CouplingLp::solve`].
#[derive(Debug, Clone)]
pub struct CouplingLpSolution {
    pub status: LpStatus,
    /// Masses per point, aligned with [`CouplingLp::points`].
    pub masses: Vec<f64>,
    /// Value of the primary objective in the requested sense.
    pub value: f64,
}

impl CouplingLp {
    /// Martingale couplings of `mu` and `nu`: row and column marginals plus
    /// `Σ_j (y_j − x_i) q_ij = 0` for every `i`.
    pub fn martingale(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Self {
        let (nx, ny) = (mu.len(), nu.len());
        let n = nx * ny;
        let mut points = Vec::with_capacity(n);
        for &(x, _) in mu.atoms() {
            for &(y, _) in nu.atoms() {
                points.push((x, y));
            }
        }
        let mut rows = Vec::with_capacity(2 * nx + ny);
        let mut rhs = Vec::with_capacity(2 * nx + ny);
        for (i, &(_, m)) in mu.atoms().iter().enumerate() {
            let mut r = vec![0.0; n];
            r[i * ny..(i + 1) * ny].iter_mut().for_each(|v| *v = 1.0);
            rows.push(r);
            rhs.push(m);
        }
        for (j, &(_, m)) in nu.atoms().iter().enumerate() {
            let mut r = vec![0.0; n];
            for i in 0..nx {
                r[i * ny + j] = 1.0;
            }
            rows.push(r);
            rhs.push(m);
        }
        for (i, &(x, _)) in mu.atoms().iter().enumerate() {
            let mut r = vec![0.0; n];
            for (j, &(y, _)) in nu.atoms().iter().enumerate() {
                r[i * ny + j] = y - x;
            }
            rows.push(r);
            rhs.push(0.0);
        }
        CouplingLp { points, rows, rhs }
    }

    pub fn cost_vector(&self, cost: &CostFunction) -> Result<Vec<f64>, CostError> {
        self.points.iter().map(|&(x, y)| cost.eval(x, y)).collect()
    }

    /// Optimizes `objective` in `sense`. With a `tiebreak`, the optimal face of
    /// the primary objective (variables with zero reduced cost) is searched for
    /// the minimizer of the tie-break objective.
    pub fn solve(
        &self,
        objective: &[f64],
        sense: Sense,
        tiebreak: Option<&[f64]>,
    ) -> Result<CouplingLpSolution, LpError> {
        let sign = match sense {
            Sense::Min => 1.0,
            Sense::Max => -1.0,
        };
        let c: Vec<f64> = objective.iter().map(|v| sign * v).collect();
        let first = LinearProgram::new(c.clone(), &self.rows, self.rhs.clone())?.solve()?;
        if first.status != LpStatus::Optimal {
            return Ok(CouplingLpSolution {
                status: first.status,
                masses: vec![0.0; self.points.len()],
                value: f64::NAN,
            });
        }
        let mut masses = first.x;
        if let Some(w) = tiebreak {
            let scale = c.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            let face: Vec<usize> = (0..c.len())
                .filter(|&j| first.reduced_costs[j] <= 1e-9 * scale)
                .collect();
            let rows: Vec<Vec<f64>> = self.rows.iter().map(|r| face.iter().map(|&j| r[j]).collect()).collect();
            let wf: Vec<f64> = face.iter().map(|&j| w[j]).collect();
            let second = LinearProgram::new(wf, &rows, self.rhs.clone())?.solve()?;
            if second.status == LpStatus::Optimal {
                masses = vec![0.0; c.len()];
                for (k, &j) in face.iter().enumerate() {
                    masses[j] = second.x[k];
                }
            } else {
                log::warn!("tie-break stage returned {:?}; keeping first-stage vertex", second.status);
            }
        }
        let value = masses.iter().zip(objective).map(|(q, v)| q * v).sum();
        Ok(CouplingLpSolution {
            status: LpStatus::Optimal,
            masses,
            value,
        })
    }

    pub fn coupling(&self, masses: &[f64]) -> Coupling {
        Coupling::canonical(
            self.points
                .iter()
                .zip(masses)
                .filter(|(_, &m)| m > 0.0)
                .map(|(&(x, y), &m)| (x, y, m))
                .collect(),
        )
    }
}

fn screen(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Option<MotSolution>, MotError> {
    let verdict = convex_order_leq(mu, nu, ORDER_TOL)?;
    if verdict.holds {
        return Ok(None);
    }
    Ok(Some(MotSolution {
        coupling: Coupling::empty(),
        value: f64::NAN,
        status: LpStatus::Infeasible,
        convex_order: Some(verdict),
    }))
}

/// Solves `inf/sup ∫ c dQ` over martingale couplings of `mu` and `nu`.
///
/// Marginals out of convex order give an `Infeasible` status carrying the
/// convex-order witness.
pub fn solve_mot(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostFunction,
    sense: Sense,
) -> Result<MotSolution, MotError> {
    solve_mot_inner(mu, nu, cost, sense, None)
}

/// [`solve_mot`] followed by minimizing `tiebreak` over the optimal face.
pub fn solve_mot_tiebreak(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostFunction,
    sense: Sense,
    tiebreak: &CostFunction,
) -> Result<MotSolution, MotError> {
    solve_mot_inner(mu, nu, cost, sense, Some(tiebreak))
}

fn solve_mot_inner(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostFunction,
    sense: Sense,
    tiebreak: Option<&CostFunction>,
) -> Result<MotSolution, MotError> {
    if let Some(rejected) = screen(mu, nu)? {
        return Ok(rejected);
    }
    let lp = CouplingLp::martingale(mu, nu);
    let c = lp.cost_vector(cost)?;
    let w = tiebreak.map(|t| lp.cost_vector(t)).transpose()?;
    let sol = lp.solve(&c, sense, w.as_deref())?;
    Ok(MotSolution {
        coupling: lp.coupling(&sol.masses),
        value: sol.value,
        status: sol.status,
        convex_order: None,
    })
}

/// A triple `(x₁,y₁), (x₁,y₂), (x₂,y′)` with `y′` strictly between `y₁` and `y₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotoneViolation {
    pub first: (f64, f64),
    pub second: (f64, f64),
    pub third: (f64, f64),
}

/// First lexicographic triple with `x₁ < x₂`, `y₁ < y₂` and `y′ ∈ (y₁, y₂)`.
pub fn check_left_monotone(s: &SupportSet) -> Option<MonotoneViolation> {
    let pts = s.points();
    let cols = s.columns();
    let mut start = 0;
    for (x1, ys) in &cols {
        start += ys.len();
        let later = &pts[start..];
        let (lo, hi) = (ys[0], ys[ys.len() - 1]);
        if ys.len() < 2 || !later.iter().any(|&(_, y)| y > lo && y < hi) {
            continue;
        }
        for (a, &y1) in ys.iter().enumerate() {
            for &y2 in &ys[a + 1..] {
                if let Some(&p) = later.iter().find(|&&(x2, y)| x2 > *x1 && y > y1 && y < y2) {
                    return Some(MonotoneViolation {
                        first: (*x1, y1),
                        second: (*x1, y2),
                        third: p,
                    });
                }
            }
        }
    }
    None
}

/// Mirror image of [`check_left_monotone`]: the third point lies to the left.
pub fn check_right_monotone(s: &SupportSet) -> Option<MonotoneViolation> {
    check_left_monotone(&s.map(|x, y| (-x, y))).map(|v| MonotoneViolation {
        first: (-v.first.0, v.first.1),
        second: (-v.second.0, v.second.1),
        third: (-v.third.0, v.third.1),
    })
}

/// Mass of entries `(x₂, y′)` lying strictly inside the y-range of some column
/// `x₁ < x₂`. Zero exactly when the support is left-monotone.
pub fn left_monotone_violation_mass(q: &Coupling, threshold: f64) -> f64 {
    let cols: Vec<(f64, Vec<(f64, f64)>)> = q
        .pruned(threshold)
        .columns()
        .into_iter()
        .filter(|c| !c.1.is_empty())
        .collect();
    let mut ranges: Vec<(f64, f64)> = Vec::new();
    let mut bad = 0.0;
    for (_, col) in &cols {
        for &(y, m) in col {
            if ranges.iter().any(|&(lo, hi)| y > lo + POSITION_TOL && y < hi - POSITION_TOL) {
                bad += m;
            }
        }
        let lo = col.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
        let hi = col.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            ranges.push((lo, hi));
        }
    }
    bad
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphsVerdict {
    pub holds: bool,
    /// Column where the check failed.
    pub column: Option<f64>,
    pub reason: Option<String>,
}

/// Whether the support lies on the graphs of two functions that are both
/// monotone in `direction`. Each column may hold at most two points; a single
/// point may be assigned to either graph.
pub fn check_monotone_graphs(s: &SupportSet, direction: Direction) -> GraphsVerdict {
    let sign = match direction {
        Direction::Increasing => 1.0,
        Direction::Decreasing => -1.0,
    };
    // Pareto front of (last lower, last upper) values, on the sign-adjusted axis.
    let mut states: Vec<(f64, f64)> = vec![(f64::NEG_INFINITY, f64::NEG_INFINITY)];
    for (x, ys) in s.columns() {
        let mut vals: Vec<f64> = ys.iter().map(|y| sign * y).collect();
        vals.sort_by(f64::total_cmp);
        if vals.len() > 2 {
            return GraphsVerdict {
                holds: false,
                column: Some(x),
                reason: Some(format!("column holds {} points", vals.len())),
            };
        }
        let mut next = Vec::new();
        for &(l, u) in &states {
            match vals[..] {
                [a, b] => {
                    // Either labelling of the two points may work.
                    if a >= l && b >= u {
                        next.push((a, b));
                    }
                    if b >= l && a >= u {
                        next.push((b, a));
                    }
                }
                [v] => {
                    if v >= l {
                        next.push((v, u));
                    }
                    if v >= u {
                        next.push((l, v));
                    }
                }
                _ => unreachable!(),
            }
        }
        next.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
        next.dedup();
        let front: Vec<(f64, f64)> = next
            .iter()
            .copied()
            .filter(|&p| !next.iter().any(|&q| q != p && q.0 <= p.0 && q.1 <= p.1))
            .collect();
        if front.is_empty() {
            return GraphsVerdict {
                holds: false,
                column: Some(x),
                reason: Some("no monotone assignment reaches this column".into()),
            };
        }
        states = front;
    }
    GraphsVerdict {
        holds: true,
        column: None,
        reason: None,
    }
}

/// Mass outside the best pair of monotone graphs, with the graphs split at the
/// diagonal: a lower branch (`y < x`) and an upper branch (`y ≥ x`). Each branch
/// keeps a maximum-weight chain with one point per column.
pub fn monotone_graphs_violation_mass(q: &Coupling, direction: Direction, threshold: f64) -> f64 {
    let sign = match direction {
        Direction::Increasing => 1.0,
        Direction::Decreasing => -1.0,
    };
    let kept = q.pruned(threshold);
    let total = kept.total_mass();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for &(x, y, m) in kept.entries() {
        if y < x - POSITION_TOL {
            lower.push((x, sign * y, m));
        } else {
            upper.push((x, sign * y, m));
        }
    }
    (total - max_weight_chain(&lower) - max_weight_chain(&upper)).max(0.0)
}

/// Heaviest chain with strictly increasing x and non-decreasing y. Entries are
/// in canonical `(x, y)` order.
fn max_weight_chain(entries: &[(f64, f64, f64)]) -> f64 {
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| entries[a].0.total_cmp(&entries[b].0).then(entries[a].1.total_cmp(&entries[b].1)));
    let mut best = vec![0.0; entries.len()];
    let mut overall: f64 = 0.0;
    for (k, &i) in order.iter().enumerate() {
        let (xi, yi, mi) = entries[i];
        let mut prev: f64 = 0.0;
        for &j in &order[..k] {
            let (xj, yj, _) = entries[j];
            if xj < xi - POSITION_TOL && yj <= yi + POSITION_TOL {
                prev = prev.max(best[j]);
            }
        }
        best[i] = prev + mi;
        overall = overall.max(best[i]);
    }
    overall
}
