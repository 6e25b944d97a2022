use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::barrier::{Barrier, StopSet};
use super::lattice::Lattice;
use super::SepError;
use crate::measures::{Coupling, DiscreteMeasure};

/// Alive mass below which the horizon DP stops early.
const ALIVE_FLOOR: f64 = 1e-15;

/// Largest grid the DP will allocate for.
pub const STATE_CAP: usize = 1 << 22;

/// Law of `(B_0, B_τ)` for a barrier on a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    /// Absorbed mass, keyed by start label and stopping level.
    pub coupling: Coupling,
    /// Second marginal of `coupling`.
    pub law: DiscreteMeasure,
    /// Mass still moving when the horizon was reached.
    pub truncated: f64,
    /// Mass that walked off the grid.
    pub escaped: f64,
    /// Largest number of steps any start atom needed.
    pub steps: usize,
}

pub(crate) struct Row {
    pub absorbed: Vec<(usize, f64)>,
    pub truncated: f64,
    pub escaped: f64,
    steps: usize,
}

fn rows_to_embedding(
    lattice: &Lattice,
    labels: &[(f64, f64)],
    rows: Vec<Row>,
) -> Result<Embedding, SepError> {
    let g = &lattice.grid;
    let mut entries = Vec::new();
    let (mut truncated, mut escaped, mut steps) = (0.0, 0.0, 0);
    for (&(x, w), row) in labels.iter().zip(rows) {
        for (i, m) in row.absorbed {
            entries.push((x, g.y(i), w * m));
        }
        truncated += w * row.truncated;
        escaped += w * row.escaped;
        steps = steps.max(row.steps);
    }
    let coupling = Coupling::new(entries)?;
    let law = coupling.marginals().1;
    Ok(Embedding {
        coupling,
        law,
        truncated,
        escaped,
        steps,
    })
}

fn stop_sets(barrier: &Barrier, mu: &DiscreteMeasure, lattice: &Lattice) -> Result<Vec<StopSet>, SepError> {
    if barrier.grid() != &lattice.grid {
        return Err(SepError::BadLattice("barrier and lattice grids differ".into()));
    }
    if lattice.grid.len > STATE_CAP {
        return Err(SepError::StateOverflow {
            states: lattice.grid.len,
            cap: STATE_CAP,
        });
    }
    let cuts = barrier.cuts(barrier.openness);
    mu.atoms().iter().map(|&(x, _)| barrier.stop_set(x, &cuts)).collect()
}

/// Runs the absorbing walk of one start atom step by step.
fn horizon_row(set: &StopSet, exclude_time_zero: bool, horizon: usize) -> Row {
    let n = set.stop.len();
    let s = set.start;
    let mut absorbed = vec![0.0; n];
    if !exclude_time_zero && set.stop[s] {
        return Row {
            absorbed: vec![(s, 1.0)],
            truncated: 0.0,
            escaped: 0.0,
            steps: 0,
        };
    }
    let mut escaped = 0.0;
    let mut cur = vec![0.0; n];
    let mut next = vec![0.0; n];
    cur[s] = 1.0;
    let (mut lo, mut hi) = (s, s);
    let mut steps = 0;
    let mut alive = 1.0;
    // At step 0 the start level is alive even if it is a stop level.
    while steps < horizon && alive > ALIVE_FLOOR {
        steps += 1;
        let (nlo, nhi) = (lo.saturating_sub(1), (hi + 1).min(n - 1));
        for v in &mut next[nlo..=nhi] {
            *v = 0.0;
        }
        for i in lo..=hi {
            let half = 0.5 * cur[i];
            if half == 0.0 {
                continue;
            }
            if i == 0 {
                escaped += half;
            } else {
                next[i - 1] += half;
            }
            if i + 1 == n {
                escaped += half;
            } else {
                next[i + 1] += half;
            }
        }
        alive = 0.0;
        let (mut new_lo, mut new_hi) = (usize::MAX, 0);
        for i in nlo..=nhi {
            let m = next[i];
            if m == 0.0 {
                continue;
            }
            if set.stop[i] {
                absorbed[i] += m;
                next[i] = 0.0;
            } else {
                alive += m;
                new_lo = new_lo.min(i);
                new_hi = new_hi.max(i);
            }
        }
        for v in &mut cur[lo..=hi] {
            *v = 0.0;
        }
        std::mem::swap(&mut cur, &mut next);
        if new_lo == usize::MAX {
            alive = 0.0;
            break;
        }
        lo = new_lo;
        hi = new_hi;
    }
    Row {
        absorbed: absorbed.into_iter().enumerate().filter(|&(_, m)| m > 0.0).collect(),
        truncated: alive,
        escaped,
        steps,
    }
}

/// Gambler's-ruin law of one start atom; the grid edges act as escape levels.
pub(crate) fn exact_row(set: &StopSet, exclude_time_zero: bool) -> Row {
    let n = set.stop.len() as i64;
    let s = set.start as i64;
    let stop = |i: i64| (0..n).contains(&i) && set.stop[i as usize];
    let mut acc = vec![0.0; n as usize];
    let mut escaped = 0.0;
    let mut land = |i: i64, m: f64| {
        if i < 0 || i >= n {
            escaped += m;
        } else {
            acc[i as usize] += m;
        }
    };
    let ruin = |p: i64| {
        let a = (0..p).rev().find(|&i| stop(i)).unwrap_or(-1);
        let b = (p + 1..n).find(|&i| stop(i)).unwrap_or(n);
        (a, b, (p - a) as f64 / (b - a) as f64)
    };
    let mut from = |p: i64, w: f64| {
        if stop(p) || p < 0 || p >= n {
            land(p, w);
        } else {
            let (a, b, up) = ruin(p);
            land(b, w * up);
            land(a, w * (1.0 - up));
        }
    };
    if stop(s) {
        if exclude_time_zero {
            from(s - 1, 0.5);
            from(s + 1, 0.5);
        } else {
            from(s, 1.0);
        }
    } else {
        from(s, 1.0);
    }
    Row {
        absorbed: acc.into_iter().enumerate().filter(|&(_, m)| m > 0.0).collect(),
        truncated: 0.0,
        escaped,
        steps: 0,
    }
}

/// Absorption DP iterated up to the lattice horizon, one start atom at a time.
pub fn embed(barrier: &Barrier, mu: &DiscreteMeasure, lattice: &Lattice) -> Result<Embedding, SepError> {
    let sets = stop_sets(barrier, mu, lattice)?;
    let rows = sets
        .par_iter()
        .map(|set| horizon_row(set, barrier.exclude_time_zero, lattice.horizon))
        .collect();
    let emb = rows_to_embedding(lattice, mu.atoms(), rows)?;
    if emb.truncated > 0.0 {
        log::debug!("embedding truncated at horizon {}: {:.3e} mass alive", lattice.horizon, emb.truncated);
    }
    Ok(emb)
}

/// Same law as [`embed`] with an infinite horizon, from the closed-form exit
/// probabilities of the walk between consecutive stop levels.
pub fn exact_embedding(barrier: &Barrier, mu: &DiscreteMeasure, lattice: &Lattice) -> Result<Embedding, SepError> {
    let sets = stop_sets(barrier, mu, lattice)?;
    let rows = sets.iter().map(|set| exact_row(set, barrier.exclude_time_zero)).collect();
    rows_to_embedding(lattice, mu.atoms(), rows)
}

pub fn embedded_law(barrier: &Barrier, mu: &DiscreteMeasure, lattice: &Lattice) -> Result<DiscreteMeasure, SepError> {
    Ok(embed(barrier, mu, lattice)?.law)
}

pub fn induced_coupling(barrier: &Barrier, mu: &DiscreteMeasure, lattice: &Lattice) -> Result<Coupling, SepError> {
    Ok(embed(barrier, mu, lattice)?.coupling)
}

#[cfg(test)]
mod tests {
    use super::super::barrier::BarrierKind;
    use super::super::lattice::Grid;
    use super::*;

    fn exit_barrier(delta: f64) -> (Barrier, Lattice) {
        let grid = Grid::covering(delta, -1.5, 1.5).unwrap();
        let psi = grid
            .ys()
            .into_iter()
            .map(|y| {
                if (y.abs() - 1.0).abs() < 1e-9 {
                    y
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        let b = Barrier::new(BarrierKind::Right, grid, psi, None).unwrap();
        (b, Lattice::new(grid, 200_000, 0))
    }

    #[test]
    fn exit_of_unit_interval() {
        let (b, lat) = exit_barrier(0.1);
        let mu = DiscreteMeasure::dirac(0.0);
        let e = embed(&b, &mu, &lat).unwrap();
        assert!(e.truncated <= 1e-6);
        assert_eq!(e.law.len(), 2);
        for &(y, m) in e.law.atoms() {
            assert!((y.abs() - 1.0).abs() < 1e-12);
            assert!((m - 0.5).abs() < 1e-9);
        }
        let x = exact_embedding(&b, &mu, &lat).unwrap();
        assert_eq!(x.law.atoms(), &[(-1.0, 0.5), (1.0, 0.5)]);
    }

    #[test]
    fn stop_everywhere_at_time_zero_is_identity() {
        let grid = Grid::covering(0.1, -1.0, 1.0).unwrap();
        let b = Barrier::new(BarrierKind::Right, grid, vec![f64::NEG_INFINITY; grid.len], None)
            .unwrap()
            .with_exclude_time_zero(false);
        let lat = Lattice::new(grid, 10, 0);
        let mu = DiscreteMeasure::new(&[-0.3, 0.2], &[0.4, 0.6]).unwrap();
        let law = embedded_law(&b, &mu, &lat).unwrap();
        assert!(crate::measures::wasserstein1(&law, &mu).unwrap() < 1e-12);
        // With t > 0 semantics the walk takes exactly one step.
        let e = exact_embedding(&b.clone().with_exclude_time_zero(true), &mu, &lat).unwrap();
        assert!((e.law.mass_at(-0.4) - 0.2).abs() < 1e-12);
        assert!((e.law.mass_at(0.3) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn never_stopping_walk_escapes_or_truncates() {
        let grid = Grid::covering(0.1, -0.5, 0.5).unwrap();
        let b = Barrier::new(BarrierKind::Right, grid, vec![f64::INFINITY; grid.len], None).unwrap();
        let lat = Lattice::new(grid, 5, 0);
        let e = embed(&b, &DiscreteMeasure::dirac(0.0), &lat).unwrap();
        assert_eq!(e.law.total_mass(), 0.0);
        assert!(e.truncated > 0.5);
        let x = exact_embedding(&b, &DiscreteMeasure::dirac(0.0), &lat).unwrap();
        assert!((x.escaped - 1.0).abs() < 1e-15);
    }

    #[test]
    fn horizon_dp_matches_ruin_formula() {
        let grid = Grid::covering(0.05, -1.0, 1.0).unwrap();
        let psi: Vec<f64> = grid.ys().iter().map(|&y| if y.abs() > 0.6 { y.abs() * 0.3 } else { 0.9 }).collect();
        let b = Barrier::new(BarrierKind::Right, grid, psi, None).unwrap();
        let lat = Lattice::new(grid, 1_000_000, 0);
        let mu = DiscreteMeasure::new(&[-0.2, 0.0, 0.15], &[0.3, 0.3, 0.4]).unwrap();
        let a = embed(&b, &mu, &lat).unwrap();
        let x = exact_embedding(&b, &mu, &lat).unwrap();
        assert!(a.truncated < 1e-12);
        assert!((a.escaped - x.escaped).abs() < 1e-9);
        for (p, q) in a.coupling.entries().iter().zip(x.coupling.entries()) {
            assert_eq!((p.0, p.1), (q.0, q.1));
            assert!((p.2 - q.2).abs() < 1e-9);
        }
        let mean = |m: &DiscreteMeasure| m.integrate(|y| y);
        assert!((mean(&x.law) + 0.0 - mean(&mu)).abs() < 1e-9 || x.escaped > 0.0);
    }
}
