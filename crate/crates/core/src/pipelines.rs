//! End-to-end symmetry checks: solve a problem directly and through a
//! transformation, then compare values and supports.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{CostFamily, CostFunction};
use crate::lp::{LpError, LpStatus};
use crate::measures::{Coupling, DiscreteMeasure, MeasureError, SupportSet, SUPPORT_THRESHOLD};
use crate::motlp::{solve_mot_tiebreak, CouplingLp, MotError, Sense};
use crate::transforms::{transform_cost, transform_support, TransformError, TransformSpec};
use crate::cost::CostError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Mot(#[from] MotError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("{side} problem is not optimal: {status:?}")]
    NotOptimal { side: &'static str, status: LpStatus },
}

/// A pair of marginals in convex order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub mu: DiscreteMeasure,
    pub nu: DiscreteMeasure,
}

/// Random martingale coupling with up to `max_x` columns and `max_y` targets.
///
/// The target law gets random atoms and weights; each target's mass is split
/// across the columns at random and every column is placed at the barycenter
/// of what it received. With `positive_mean_one` the targets are positive with
/// mean 1.
pub fn random_martingale_coupling(rng: &mut ChaCha8Rng, max_x: usize, max_y: usize, positive_mean_one: bool) -> Coupling {
    let ny = rng.gen_range(2..=max_y.max(2));
    let nx = rng.gen_range(1..=max_x.max(1).min(ny));
    let mut ys: Vec<f64> = Vec::with_capacity(ny);
    while ys.len() < ny {
        let y = if positive_mean_one {
            rng.gen_range(0.2..3.0)
        } else {
            rng.gen_range(-2.0..2.0)
        };
        let y = (y * 1000.0f64).round() / 1000.0;
        if ys.iter().all(|&v| (v - y).abs() > 1e-3) {
            ys.push(y);
        }
    }
    let w: Vec<f64> = (0..ny).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = w.iter().sum();
    let w: Vec<f64> = w.into_iter().map(|v| v / total).collect();
    if positive_mean_one {
        let mean: f64 = ys.iter().zip(&w).map(|(y, p)| y * p).sum();
        ys.iter_mut().for_each(|y| *y /= mean);
    }
    let mut rows = vec![vec![0.0; ny]; nx];
    for j in 0..ny {
        let split: Vec<f64> = (0..nx).map(|_| rng.gen_range(0.0..1.0f64).powi(2)).collect();
        let s: f64 = split.iter().sum::<f64>().max(1e-12);
        for (i, row) in rows.iter_mut().enumerate() {
            row[j] = w[j] * split[i] / s;
        }
    }
    let mut entries = Vec::new();
    for row in &rows {
        let m: f64 = row.iter().sum();
        if m <= 0.0 {
            continue;
        }
        let x = row.iter().zip(&ys).map(|(p, y)| p * y).sum::<f64>() / m;
        entries.extend(row.iter().zip(&ys).filter(|(p, _)| **p > 0.0).map(|(&p, &y)| (x, y, p)));
    }
    Coupling::new(entries).expect("finite entries")
}

/// Random convex-ordered instance: the marginals of
/// [`random_martingale_coupling`].
pub fn random_instance(rng: &mut ChaCha8Rng, max_mu: usize, max_nu: usize, positive_mean_one: bool) -> Instance {
    let (mu, nu) = random_martingale_coupling(rng, max_mu, max_nu, positive_mean_one).marginals();
    Instance { mu, nu }
}

/// Direct and transformed solutions of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub transform: String,
    pub value_direct: f64,
    pub value_image: f64,
    pub value_gap: f64,
    /// Whether `T` maps the direct support onto the image support.
    pub support_bijection: bool,
    pub direct: Coupling,
    pub image: Coupling,
}

/// Coupling LP on the image points `T(x_i, y_j)`, with the marginal and
/// martingale constraints of the original problem pulled back through
/// `q = q'/h`.
pub fn pullback_lp(spec: &TransformSpec, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<CouplingLp, TransformError> {
    let base = CouplingLp::martingale(mu, nu);
    let mut points = Vec::with_capacity(base.points.len());
    let mut inv_h = Vec::with_capacity(base.points.len());
    for &(x, y) in &base.points {
        points.push(spec.forward(x, y)?);
        inv_h.push(1.0 / spec.weight(x, y)?);
    }
    let rows = base
        .rows
        .iter()
        .map(|r| r.iter().zip(&inv_h).map(|(a, k)| a * k).collect())
        .collect();
    Ok(CouplingLp {
        points,
        rows,
        rhs: base.rhs,
    })
}

fn support(q: &Coupling) -> SupportSet {
    q.support(SUPPORT_THRESHOLD)
}

fn compare(
    spec: &TransformSpec,
    direct: Coupling,
    value_direct: f64,
    image: Coupling,
    value_image: f64,
) -> Result<PipelineReport, PipelineError> {
    let mapped = transform_support(spec, &support(&direct))?;
    let target = support(&image);
    let scale = target
        .points()
        .iter()
        .fold(1.0f64, |a, p| a.max(p.0.abs()).max(p.1.abs()));
    Ok(PipelineReport {
        transform: spec.name(),
        value_direct,
        value_image,
        value_gap: (value_direct - value_image).abs(),
        support_bijection: mapped.approx_eq(&target, 1e-9 * scale),
        direct,
        image,
    })
}

fn direct_solve(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<(Coupling, f64), PipelineError> {
    let sol = solve_mot_tiebreak(
        mu,
        nu,
        &CostFamily::AbsDiffNeg.into(),
        Sense::Min,
        &CostFamily::SmNeg.into(),
    )?;
    if sol.status != LpStatus::Optimal {
        return Err(PipelineError::NotOptimal {
            side: "direct",
            status: sol.status,
        });
    }
    Ok((sol.coupling, sol.value))
}

/// Minimizes `−|x − y|` over martingale couplings, and `−|x + y|` over the
/// couplings of the mirrored first marginal that pull back to martingale
/// couplings. Both use the pulled-back `−x·y²` as a tie-break.
pub fn mirror_pipeline(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<PipelineReport, PipelineError> {
    let spec = TransformSpec::mirror(true, false);
    let (direct, value_direct) = direct_solve(mu, nu)?;
    let lp = pullback_lp(&spec, mu, nu)?;
    let c = lp.cost_vector(&CostFamily::MirroredAbs.into())?;
    let w = lp.cost_vector(&transform_cost(&spec, &CostFamily::SmNeg.into()))?;
    let sol = lp.solve(&c, Sense::Min, Some(&w))?;
    if sol.status != LpStatus::Optimal {
        return Err(PipelineError::NotOptimal {
            side: "image",
            status: sol.status,
        });
    }
    compare(&spec, direct, value_direct, lp.coupling(&sol.masses), sol.value)
}

/// Minimizes `−|x − y|` directly and `−|y/x − 1|` over martingale couplings of
/// the numeraire-transformed marginals `x·μ(x)` at `1/x` and `y·ν(y)` at `1/y`.
/// Needs positive marginals with mean 1.
pub fn numeraire_pipeline(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<PipelineReport, PipelineError> {
    let spec = TransformSpec::numeraire(1.0, 0.0, 1.0)?;
    let (direct, value_direct) = direct_solve(mu, nu)?;
    let flip = |m: &DiscreteMeasure| DiscreteMeasure::from_atoms(m.atoms().iter().map(|&(p, w)| (1.0 / p, p * w)).collect());
    let (mu_p, nu_p) = (flip(mu)?, flip(nu)?);
    let sol = solve_mot_tiebreak(
        &mu_p,
        &nu_p,
        &CostFamily::NumeraireAbs.into(),
        Sense::Min,
        &transform_cost(&spec, &CostFunction::Family(CostFamily::SmNeg)),
    )?;
    if sol.status != LpStatus::Optimal {
        return Err(PipelineError::NotOptimal {
            side: "image",
            status: sol.status,
        });
    }
    compare(&spec, direct, value_direct, sol.coupling, sol.value)
}
