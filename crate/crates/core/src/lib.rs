//! Line-search filter differential dynamic programming.
//!
//! The solver handles discrete-time optimal control problems of the form
//!
//! ```text
//! minimise    Σ_t ℓ(x_t, u_t)
//! subject to  x_1 = x̂_1,  x_{t+1} = f(x_t, u_t),  c(x_t, u_t) = 0,  u_t ≥ 0 on a mask
//! ```
//!
//! Equality constraints are handled by a backward pass that applies a perturbed
//! Newton step to the stage KKT system and a forward pass that rolls out the
//! resulting nonlinear feedback law, with step acceptance decided by a filter
//! over (constraint violation, Lagrangian) pairs. Bound constraints on controls
//! are handled by a primal-dual interior-point loop around the same machinery.

pub mod backward;
pub mod barrier;
pub mod error;
pub mod filter;
pub mod linalg;
pub mod model;
pub mod problems;
pub mod solver;

pub use backward::{GainsTrajectory, RegState, StageGains, StageQ, ValueState};
pub use barrier::BarrierState;
pub use error::{Error, Result};
pub use filter::{Filter, LineSearchOutcome, Rejection, TrialPoint};
pub use linalg::{Inertia, SymIndefFactor, Tensor3};
pub use model::{Dims, Iterate, Mode, OcpModel, StageDerivatives};
pub use solver::{solve, solve_from, IterationRecord, SolverConfig, SolverReport, Status};
