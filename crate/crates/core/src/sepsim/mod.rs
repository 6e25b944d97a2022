//! Lattice Skorokhod embeddings driven by phase-space barriers.
//!
//! Brownian motion is replaced by the symmetric ±δ walk with time step δ². A
//! path started at `x` is tracked in the phase plane `(d, y)` with `d = y − x`
//! (or `y + x`), and stopped on entering a barrier region. Since `d` is fixed
//! by `y` once the start is known, each start atom only sees a set of absorbing
//! levels; this is what makes the exact dynamic programs below cheap.

mod barrier;
mod dp;
mod fit;
mod lattice;
mod stopgo;
mod walk;

pub use barrier::{transform_barrier, Anchor, Barrier, BarrierKind, Openness, Phase};
pub use dp::{embed, embedded_law, exact_embedding, induced_coupling, Embedding};
pub use fit::{fit_right_barrier, fit_two_sided, fit_with, Fit, FitOptions, TwoSided};
pub use lattice::{Grid, Lattice, SnapReport};
pub use stopgo::{check_stop_go, PathFunctional, Sigma, StopGo, StopGoReport, StoppedPath};
pub use walk::{compare_open_closed, hit_time, simulate_walk, CompareReport, Ensemble, HitResult, Path};

use thiserror::Error;

use crate::measures::MeasureError;
use crate::transforms::TransformError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SepError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("{0} is not a point of the lattice grid")]
    OffGrid(f64),
    #[error("invalid barrier: {0}")]
    BadBarrier(String),
    #[error("invalid lattice: {0}")]
    BadLattice(String),
    #[error("state space of {states} exceeds the cap of {cap}; use a coarser step")]
    StateOverflow { states: usize, cap: usize },
    #[error("barrier fit did not settle within {sweeps} sweeps (last W1 residual {residual})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("stop-go pair needs equal end points, got {0} and {1}")]
    EndMismatch(f64, f64),
    #[error("cost evaluation failed: {0}")]
    Cost(String),
}
