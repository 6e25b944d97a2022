use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::barrier::{Barrier, Openness};
use super::lattice::Lattice;
use super::SepError;
use crate::measures::DiscreteMeasure;

/// Independent random stream for item `index` of a seeded run.
pub(crate) fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Endless ±1 steps drawn 64 at a time.
pub(crate) struct Steps {
    rng: ChaCha8Rng,
    bits: u64,
    left: u32,
}

impl Steps {
    pub(crate) fn new(rng: ChaCha8Rng) -> Self {
        Steps { rng, bits: 0, left: 0 }
    }

    pub(crate) fn next_step(&mut self) -> i64 {
        if self.left == 0 {
            self.bits = self.rng.next_u64();
            self.left = 64;
        }
        let b = self.bits & 1;
        self.bits >>= 1;
        self.left -= 1;
        2 * b as i64 - 1
    }
}

/// One simulated path, replayable from its substream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub index: u64,
    /// Label `x₀` drawn from the start law.
    pub start: f64,
    seed: u64,
}

impl Path {
    fn steps(&self) -> Steps {
        Steps::new(substream(self.seed, self.index))
    }

    /// Positions at steps `0..=n` for a walk started at `x₀`.
    pub fn positions(&self, n: usize, delta: f64) -> Vec<f64> {
        let mut steps = self.steps();
        let mut k = 0i64;
        let mut out = Vec::with_capacity(n + 1);
        out.push(self.start);
        for _ in 0..n {
            k += steps.next_step();
            out.push(self.start + k as f64 * delta);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub paths: Vec<Path>,
    pub delta: f64,
    pub horizon: usize,
    /// Set when `horizon·δ²` is small compared with the spread the walk has to
    /// cover.
    pub warning: Option<String>,
}

/// Draws `n_paths` start labels from `mu`: `⌊n·m⌋` per atom in atom order, the
/// remainder sampled from `mu` with the lattice seed.
pub fn simulate_walk(mu: &DiscreteMeasure, lattice: &Lattice, n_paths: usize) -> Result<Ensemble, SepError> {
    if n_paths == 0 {
        return Err(SepError::Precondition("n_paths must be at least 1".into()));
    }
    let total = mu.total_mass();
    if total <= 0.0 {
        return Err(SepError::Precondition("start law has no mass".into()));
    }
    let mut starts = Vec::with_capacity(n_paths);
    for &(x, m) in mu.atoms() {
        let count = (n_paths as f64 * m / total).floor() as usize;
        starts.extend(std::iter::repeat_n(x, count.min(n_paths - starts.len())));
    }
    let mut master = substream(lattice.seed, u64::MAX);
    while starts.len() < n_paths {
        let u: f64 = master.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = mu.atoms()[mu.len() - 1].0;
        for &(x, m) in mu.atoms() {
            acc += m;
            if u < acc {
                pick = x;
                break;
            }
        }
        starts.push(pick);
    }
    let g = &lattice.grid;
    let spread = g.len as f64 * g.delta;
    let reach = (lattice.horizon as f64).sqrt() * g.delta;
    let warning = (reach < spread).then(|| {
        format!(
            "horizon of {} steps moves the walk about {reach:.3}, less than the grid width {spread:.3}",
            lattice.horizon
        )
    });
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(Ensemble {
        paths: starts
            .into_iter()
            .enumerate()
            .map(|(i, start)| Path {
                index: i as u64,
                start,
                seed: lattice.seed,
            })
            .collect(),
        delta: g.delta,
        horizon: lattice.horizon,
        warning,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitResult {
    pub steps: usize,
    pub y_final: f64,
    /// False when the horizon was reached or the walk left the grid.
    pub stopped: bool,
    pub left_grid: bool,
}

/// First step at which the path enters the barrier region.
pub fn hit_time(path: &Path, barrier: &Barrier, openness: Openness, horizon: usize) -> Result<HitResult, SepError> {
    let cuts = barrier.cuts(openness);
    let set = barrier.stop_set(path.start, &cuts)?;
    let g = barrier.grid();
    let n = g.len as i64;
    let mut i = set.start as i64;
    if !barrier.exclude_time_zero && set.stop[set.start] {
        return Ok(HitResult {
            steps: 0,
            y_final: g.y(set.start),
            stopped: true,
            left_grid: false,
        });
    }
    let mut steps = path.steps();
    for t in 1..=horizon {
        i += steps.next_step();
        if i < 0 || i >= n {
            let k = g.k_lo + i;
            return Ok(HitResult {
                steps: t,
                y_final: k as f64 * g.delta + g.shift,
                stopped: false,
                left_grid: true,
            });
        }
        if set.stop[i as usize] {
            return Ok(HitResult {
                steps: t,
                y_final: g.y(i as usize),
                stopped: true,
                left_grid: false,
            });
        }
    }
    Ok(HitResult {
        steps: horizon,
        y_final: g.y(i as usize),
        stopped: false,
        left_grid: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    /// Fraction of paths whose open and closed stopping positions differ by
    /// more than `epsilon`, or of which only one variant stopped.
    pub fraction: f64,
    pub stderr: f64,
    pub n_paths: usize,
    /// Fraction of paths that did not stop under at least one variant.
    pub truncated: f64,
}

/// Runs each path once against the open and once against the closed region,
/// with identical increments.
pub fn compare_open_closed(
    barrier: &Barrier,
    mu: &DiscreteMeasure,
    lattice: &Lattice,
    n_paths: usize,
    epsilon: f64,
) -> Result<CompareReport, SepError> {
    let ens = simulate_walk(mu, lattice, n_paths)?;
    let outcomes: Vec<(bool, bool)> = ens
        .paths
        .par_iter()
        .map(|p| {
            let op = hit_time(p, barrier, Openness::Open, lattice.horizon)?;
            let cl = hit_time(p, barrier, Openness::Closed, lattice.horizon)?;
            let differ = op.stopped != cl.stopped || (op.y_final - cl.y_final).abs() > epsilon;
            Ok((differ, !(op.stopped && cl.stopped)))
        })
        .collect::<Result<_, SepError>>()?;
    let n = outcomes.len() as f64;
    let hits = outcomes.iter().filter(|o| o.0).count() as f64;
    let truncated = outcomes.iter().filter(|o| o.1).count() as f64 / n;
    let fraction = hits / n;
    Ok(CompareReport {
        fraction,
        stderr: (fraction * (1.0 - fraction) / n).sqrt(),
        n_paths: outcomes.len(),
        truncated,
    })
}
