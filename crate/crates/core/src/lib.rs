//! Stochastic Lagrange-d'Alembert variational integrators for forced
//! Hamiltonian SDEs in Stratonovich form, with structure checks, reference
//! models and a Monte Carlo harness.

pub mod error;
pub mod harness;
pub mod models;
pub mod ms;
pub mod noise;
pub mod solver;
pub mod sprk;
mod stages;
pub mod structure;
pub mod system;
pub mod tableau_io;
pub mod wrk;

pub use error::{Error, Result};
pub use ms::{dirk_step, heun_step, midpoint_step, sprk_step, stormer_verlet_step, StepStats};
pub use noise::{aggregate_path, truncate_increment, BrownianDriver, FinePath, IncrementMode};
pub use solver::{solve, SolveMode, SolverConfig, SolverError};
pub use sprk::{check_sprk_order_conditions, check_sprk_symplectic_conditions, ConditionReport, SprkTableau};
pub use system::{CallbackSystem, ForcedHamiltonian, LinearForcing, State, SystemTraits, Trajectory};
pub use wrk::{check_wrk_symplectic_conditions, wrk_step, WrkTableau};
