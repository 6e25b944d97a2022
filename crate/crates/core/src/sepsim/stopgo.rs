use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lattice::Lattice;
use super::walk::{substream, Steps};
use super::SepError;
use crate::cost::{CostFamily, CostFunction};

/// Functionals of a stopped path that only look at its start and end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PathFunctional {
    /// `c(f(0), f(s))`.
    TerminalCost { cost: CostFamily },
    /// `−|f(s) − f(0)|`.
    AbsDiffNeg,
    /// `|f(s) − f(0)|³`.
    AbsCubed,
}

impl PathFunctional {
    pub fn eval(&self, start: f64, end: f64) -> Result<f64, SepError> {
        match self {
            PathFunctional::TerminalCost { cost } => CostFunction::Family(*cost)
                .eval(start, end)
                .map_err(|e| SepError::Cost(e.to_string())),
            PathFunctional::AbsDiffNeg => Ok(-(end - start).abs()),
            PathFunctional::AbsCubed => Ok((end - start).abs().powi(3)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppedPath {
    pub start: f64,
    pub end: f64,
}

/// Continuation stopping times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sigma {
    FixedSteps { k: usize },
    /// First exit of the walk from `(−r, r)` around its start.
    ExitRadius { r: f64 },
}

impl Sigma {
    pub fn expected_time(&self, delta: f64) -> f64 {
        match *self {
            Sigma::FixedSteps { k } => k as f64 * delta * delta,
            Sigma::ExitRadius { r } => r * r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopGo {
    Sg,
    Sg2,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopGoReport {
    pub verdict: StopGo,
    /// Gap used for the verdict: exact when available, else the estimate.
    pub gap: f64,
    pub stderr: f64,
    pub exact: bool,
    pub mc_gap: f64,
    pub mc_stderr: f64,
    pub gap2: Option<f64>,
    pub stderr2: Option<f64>,
    pub expected_sigma: f64,
    pub n_samples: usize,
}

const SE_MULTIPLE: f64 = 3.0;

/// Continuation increment `W = B_σ` for sample `index`.
fn increment(sigma: Sigma, delta: f64, seed: u64, index: u64) -> f64 {
    let mut steps = Steps::new(substream(seed, index));
    match sigma {
        Sigma::FixedSteps { k } => {
            let s: i64 = (0..k).map(|_| steps.next_step()).sum();
            s as f64 * delta
        }
        Sigma::ExitRadius { r } => {
            let radius = (r / delta).round() as i64;
            let mut s = 0i64;
            while s.abs() < radius {
                s += steps.next_step();
            }
            s as f64 * delta
        }
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Per-sample `γ(f₀, y+W) + γ(g₀, y) − γ(f₀, y) − γ(g₀, y+W)` with common `W`.
fn gaps(gamma: PathFunctional, f: StoppedPath, g: StoppedPath, ws: &[f64]) -> Result<Vec<f64>, SepError> {
    let y = f.end;
    let base = gamma.eval(g.start, y)? - gamma.eval(f.start, y)?;
    ws.iter()
        .map(|&w| Ok(gamma.eval(f.start, y + w)? - gamma.eval(g.start, y + w)? + base))
        .collect()
}

/// Tests whether `(f, g)` is a stop-go pair against the continuations `σ`.
///
/// Both sides are estimated from the same `n_samples` increments. The verdict
/// is `Sg` when the gap exceeds three standard errors; failing that, with a
/// secondary functional and a primary gap within three standard errors of 0,
/// `Sg2` when the secondary gap does. For `terminal_cost(sm_neg)` the gap is
/// `(g₀ − f₀)·E[σ]` exactly and that value decides.
pub fn check_stop_go(
    f: StoppedPath,
    g: StoppedPath,
    gamma: PathFunctional,
    gamma2: Option<PathFunctional>,
    sigma: Sigma,
    lattice: &Lattice,
    n_samples: usize,
) -> Result<StopGoReport, SepError> {
    if (f.end - g.end).abs() > 1e-12 {
        return Err(SepError::EndMismatch(f.end, g.end));
    }
    if n_samples < 2 {
        return Err(SepError::Precondition("need at least two samples".into()));
    }
    let delta = lattice.delta();
    match sigma {
        Sigma::FixedSteps { k } if k == 0 => {
            return Err(SepError::Precondition("σ needs at least one step".into()));
        }
        Sigma::ExitRadius { r } => {
            let steps = r / delta;
            if !(steps >= 0.5) || (steps - steps.round()).abs() > 1e-9 {
                return Err(SepError::Precondition(format!("exit radius {r} is not a positive multiple of δ = {delta}")));
            }
        }
        _ => {}
    }
    let ws: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| increment(sigma, delta, lattice.seed, i))
        .collect();
    let expected_sigma = sigma.expected_time(delta);
    let (mc_gap, mc_stderr) = mean_se(&gaps(gamma, f, g, &ws)?);
    let exact = gamma
        == PathFunctional::TerminalCost {
            cost: CostFamily::SmNeg,
        };
    let (gap, stderr) = if exact {
        ((g.start - f.start) * expected_sigma, 0.0)
    } else {
        (mc_gap, mc_stderr)
    };
    let mut report = StopGoReport {
        verdict: StopGo::Neither,
        gap,
        stderr,
        exact,
        mc_gap,
        mc_stderr,
        gap2: None,
        stderr2: None,
        expected_sigma,
        n_samples,
    };
    if gap > SE_MULTIPLE * stderr {
        report.verdict = StopGo::Sg;
    } else if let Some(gamma2) = gamma2 {
        if gap.abs() <= SE_MULTIPLE * stderr {
            let (gap2, se2) = mean_se(&gaps(gamma2, f, g, &ws)?);
            report.gap2 = Some(gap2);
            report.stderr2 = Some(se2);
            if gap2 > SE_MULTIPLE * se2 {
                report.verdict = StopGo::Sg2;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::super::lattice::Grid;
    use super::*;

    fn lattice() -> Lattice {
        Lattice::new(Grid::covering(0.05, -1.0, 1.0).unwrap(), 1000, 11)
    }

    #[test]
    fn quadratic_cost_closed_form() {
        let f = StoppedPath { start: 0.0, end: 2.0 };
        let g = StoppedPath { start: 1.0, end: 2.0 };
        let gamma = PathFunctional::TerminalCost {
            cost: CostFamily::SmNeg,
        };
        let r = check_stop_go(f, g, gamma, None, Sigma::FixedSteps { k: 25 }, &lattice(), 10_000).unwrap();
        assert_eq!(r.verdict, StopGo::Sg);
        assert!((r.gap - 25.0 * 0.0025).abs() < 1e-15);
        assert!((r.mc_gap - r.gap).abs() <= 3.0 * r.mc_stderr);
    }

    #[test]
    fn secondary_functional_breaks_the_tie() {
        let f = StoppedPath { start: 0.0, end: 2.0 };
        let g = StoppedPath { start: 1.0, end: 2.0 };
        let r = check_stop_go(
            f,
            g,
            PathFunctional::AbsDiffNeg,
            Some(PathFunctional::AbsCubed),
            Sigma::ExitRadius { r: 0.5 },
            &lattice(),
            10_000,
        )
        .unwrap();
        assert_eq!(r.verdict, StopGo::Sg2);
        assert_eq!(r.gap, 0.0);
        assert!((r.gap2.unwrap() - 0.75).abs() < 3.0 * r.stderr2.unwrap());
    }

    #[test]
    fn equal_starts_are_neither() {
        let f = StoppedPath { start: 0.5, end: 1.0 };
        let r = check_stop_go(
            f,
            f,
            PathFunctional::AbsCubed,
            Some(PathFunctional::AbsDiffNeg),
            Sigma::FixedSteps { k: 10 },
            &lattice(),
            100,
        )
        .unwrap();
        assert_eq!(r.verdict, StopGo::Neither);
        let bad = StoppedPath { start: 0.0, end: 0.9 };
        assert!(matches!(
            check_stop_go(f, bad, PathFunctional::AbsCubed, None, Sigma::FixedSteps { k: 1 }, &lattice(), 10),
            Err(SepError::EndMismatch(..))
        ));
    }
}
