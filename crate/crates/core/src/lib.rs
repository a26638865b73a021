//! History-driven iterative LQR for repeated minimum-time tasks.
//!
//! Each run starts from a feasible but slow iteration 0. Later iterations
//! pick terminal targets for short-horizon iLQR problems from states the
//! system visited in recent iterations. They prefer states with a small
//! remaining time to the goal. The crate also bundles a kinematic-bicycle
//! benchmark with static and moving obstacles.
//!
//! Module map:
//!
//! * [`dynamics`]: bicycle model, rollout, Jacobians, input saturation.
//! * [`environment`]: obstacle schedule and per-horizon constraint sets.
//! * [`history`]: completed iterations and weighted K-nearest queries.
//! * [`ilqr`]: barrier-constrained iLQR for a single terminal target.
//! * [`controller`]: optimization cycles and best-solution selection.
//! * [`runner`]: iteration loop and iteration-0 trajectory.
//! * [`scenario`] / [`runlog`]: scenario files and line-delimited run logs.

pub mod controller;
pub mod dynamics;
pub mod environment;
pub mod history;
pub mod ilqr;
pub mod runlog;
pub mod runner;
pub mod scenario;

pub use controller::{ControlDecision, Controller, ControllerConfig};
pub use dynamics::{Input, ModelParams, State};
pub use history::{DistanceWeights, HistorySet, TerminalCandidate, TrajectoryRecord};
pub use ilqr::{IlqrConfig, IlqrProblem, IlqrSolution};
pub use runner::{run_task, RunOptions, RunResult};
pub use scenario::{load_scenario, Scenario, ScenarioError};
