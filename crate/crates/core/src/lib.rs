//! Power-amplifier-aware downlink power allocation for cell-free massive MIMO.
//!
//! The crate covers the whole chain from a simulated deployment to an
//! optimized power allocation:
//!
//! - [`scenario`]: AP/user geometry, path loss and one-ring covariances.
//! - [`statistics`]: Monte-Carlo channels, MMSE estimation, partial-MMSE
//!   precoding and the effective statistics `b_k`, `C_ki`.
//! - [`problem`]: the stacked problem, SINR and cone constraints, PA models.
//! - [`solver`]: penalty method over a monotone accelerated projected gradient.
//! - [`oracle`]: closed-form and exhaustive references for small instances.
//! - [`experiments`]: the runtime, savings and sparsity studies.

pub mod error;
pub mod experiments;
pub mod linalg;
pub mod oracle;
pub mod problem;
pub mod rng;
pub mod scenario;
pub mod solver;
pub mod statistics;

pub use error::{Error, Result};
pub use problem::{assemble, PaModel, PowerAllocation, PowerParams, ProblemData, Targets};
pub use scenario::{Scenario, ScenarioConfig};
pub use solver::{penalty_minimize, SolverOptions, SolverResult};
pub use statistics::EffectiveStatistics;
