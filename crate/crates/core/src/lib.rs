//! Numerical laboratory for discrete martingale optimal transport.
//!
//! * [`measures`]: atomic measures on the line and the plane.
//! * [`lp`] and [`motlp`]: a dense revised simplex and the martingale transport
//!   linear program built on it, plus structural checks of optimizer supports.
//! * [`monotone`]: competitor polytopes, finite c-monotonicity certification and
//!   competitorblind functions.
//! * [`transforms`]: `(T, h)` transformations of couplings and costs and their
//!   numerical classification.
//! * [`sepsim`]: lattice Skorokhod embeddings driven by phase-space barriers.

pub mod cost;
pub mod lp;
pub mod measures;
pub mod monotone;
pub mod motlp;
pub mod pipelines;
pub mod sepsim;
pub mod transforms;

pub use cost::CostFunction;
pub use measures::{Coupling, DiscreteMeasure, SupportSet};
