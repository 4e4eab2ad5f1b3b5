//! Simulation core for budgeted goal-conditioned agents.
//!
//! The crate models a deterministic Sokoban G-MDP with an integer step
//! budget, an exact BFS oracle for viability, planning/sampling error
//! injection, plan-graph construction, exact time-expanded path selection,
//! closed-loop agent controllers and the closed-form success bounds those
//! controllers are compared against.

pub mod agents;
pub mod bounds;
pub mod budget;
pub mod error_model;
pub mod oracle;
pub mod plan_graph;
pub mod rng;
pub mod sokoban;
pub mod solver;
pub mod trajectory;

pub use budget::{charge, Budget, BudgetViolation};
pub use rng::RngStream;
pub use sokoban::{Action, Pos, SokobanInstance, SokobanState};
pub use trajectory::{judge_success, StepRecord, TerminalStatus, TrajectoryRecord};
