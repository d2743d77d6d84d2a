//! Phase-space analysis of stationary states in a saturating nonlinear
//! Hatano-Nelson model.
//!
//! Stationary profiles `ψ(x)` on a half line are orbits of a planar flow in
//! `(ψ, ∂xψ)`. Skin-localized states decay to the origin, extended states land
//! on a stable limit cycle. The crate integrates that flow, continues the limit
//! cycles in the linear nonreciprocity `γ`, compares them with the averaged
//! amplitude equation and measures the basins of the two attractors.

pub mod averaging;
pub mod basin;
pub mod error;
pub mod integrator;
pub mod model;
pub mod poincare;
pub mod quadrature;
pub mod shooting;
pub mod sweep;

pub use error::{Error, Result};
pub use integrator::{
    evaluate_dense, integrate, integrate_with, Direction, EventKind, EventRecord, EventSpec, IntegratorConfig,
    Recording, Trajectory,
};
pub use model::{ModelParams, OriginSpectrum, PhaseState};
