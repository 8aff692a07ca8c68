//! Monte Carlo simulation of regime-switching jump-diffusions.
//!
//! The library builds the coupled process `(X_t, Λ_t)` — a jump-diffusion `X`
//! whose coefficients depend on a finite level process `Λ` driven by a
//! switching-rate matrix `Q` — and estimates harmonic functions, Green
//! functions and switching functionals of that process from sampled paths.
//! A verification harness compares the estimates against exact ball kernels
//! of the Laplacian and against cross-estimator identities, and reports
//! scale-stability statistics for Harnack-type ratios.
//!
//! Every sampling routine is deterministic given `(seed, stream id)` and the
//! parallel reductions are worker-count independent.

pub mod cli;
pub mod coeffs;
pub mod engine;
pub mod error;
pub mod estimate;
pub mod geom;
pub mod harness;
pub mod kernels;
pub mod params;
pub mod quad;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod switching;
pub mod validate;

pub use coeffs::CoefficientSet;
pub use engine::{SimControls, SwitchedPathRecord};
pub use error::Error;
pub use estimate::MCEstimate;
pub use geom::Ball;
pub use params::ClassParams;
pub use rng::RngStream;
pub use switching::SwitchGraph;
