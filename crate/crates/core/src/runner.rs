//! The iteration loop: seed the history with a feasible iteration 0, then
//! repeatedly drive from start to target with the controller, recording
//! every completed iteration.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::controller::{ControlDecision, Controller};
use crate::dynamics::{self, Input, State};
use crate::environment::{self, ObstacleSpec};
use crate::history::{HistoryError, HistorySet, Source};
use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("no grid point produced a feasible initial trajectory for scenario {scenario:?} (tried {tried} combinations)")]
    NoFeasibleInitialTrajectory { scenario: String, tried: usize },
    #[error("iteration {iteration}: {source}")]
    Iteration { iteration: usize, source: HistoryError },
}

/// Compact per-step controller summary kept in run results.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub cycles_used: usize,
    pub selected: Source,
    pub selected_cost_to_go: u32,
    /// Full per-cycle data, kept only when verbose.
    pub cycles: Option<Vec<crate::controller::CycleDiagnostics>>,
}

impl StepDiagnostics {
    fn from_decision(d: ControlDecision, verbose: bool) -> Self {
        Self {
            cycles_used: d.cycles_used,
            selected: d.selected.source,
            selected_cost_to_go: d.selected.cost_to_go,
            cycles: verbose.then_some(d.cycles),
        }
    }
}

/// Outcome of one iteration, completed or not.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationResult {
    pub iteration: usize,
    pub states: Vec<State>,
    pub inputs: Vec<Input>,
    pub completed: bool,
    /// Controller diagnostics, one per input (empty for iteration 0).
    pub diagnostics: Vec<StepDiagnostics>,
    pub collision_free: bool,
    pub inputs_admissible: bool,
    pub replay_exact: bool,
    pub min_clearance: Option<f64>,
}

impl IterationResult {
    /// Completion time in steps.
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    fn audit(mut self, scenario: &Scenario) -> Self {
        let dt = scenario.model.dt;
        self.collision_free = environment::collision_free(&self.states, &scenario.obstacles, dt, self.iteration, 0);
        self.inputs_admissible = self.inputs.iter().all(Input::is_admissible);
        self.replay_exact = self.states.first() == Some(&scenario.x0)
            && dynamics::rollout(scenario.x0, &self.inputs, &scenario.model) == self.states;
        self.min_clearance = environment::min_clearance(&self.states, &scenario.obstacles, dt, self.iteration);
        self
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub iterations: Vec<IterationResult>,
    /// Not part of the run log.
    pub wall_clock: Duration,
}

impl RunResult {
    pub fn completion_steps(&self) -> Vec<Option<usize>> {
        self.iterations.iter().map(|it| it.completed.then(|| it.steps())).collect()
    }

    pub fn all_completed(&self) -> bool {
        self.iterations.iter().all(|it| it.completed)
    }
}

/// Distance covered while braking from `v` at the acceleration limit.
fn braking_distance(v: f64) -> f64 {
    let mut d = 0.0;
    let mut w = v;
    while w > 0.0 {
        d += w;
        w -= dynamics::ACCEL_LIMIT;
    }
    d
}

/// Largest acceleration in `[lo, hi]` after which the vehicle can still stop
/// within `room`; `lo` when none qualifies.
fn longitudinal_command(v: f64, room: f64, cruise: f64) -> f64 {
    let lo = -dynamics::ACCEL_LIMIT.min(v);
    let hi = dynamics::ACCEL_LIMIT.min(cruise - v).max(lo);
    let fits = |a: f64| braking_distance(v + a) <= room - v;
    if fits(hi) {
        return hi;
    }
    if !fits(lo) {
        return lo;
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        if fits(mid) {
            a = mid;
        } else {
            b = mid;
        }
    }
    a
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    0.5 - 0.5 * (std::f64::consts::PI * s).cos()
}

/// Lateral reference: `offset` over `[lo, hi]` with cosine ramps either side.
fn lateral_reference(x: f64, offset: f64, span: Option<(f64, f64)>, ramp: f64) -> f64 {
    match span {
        None => 0.0,
        Some((lo, hi)) => {
            if x < lo {
                offset * smoothstep((x - (lo - ramp)) / ramp)
            } else if x <= hi {
                offset
            } else {
                offset * (1.0 - smoothstep((x - hi) / ramp))
            }
        }
    }
}

/// Steering that turns the heading toward `course` in one step.
fn steering_command(s: &State, course: f64, p: &dynamics::ModelParams) -> f64 {
    if s.v.abs() < 1e-9 {
        return 0.0;
    }
    let sin_beta = ((course - s.theta) * p.lr / (s.v * p.dt)).clamp(-0.95, 0.95);
    let beta = sin_beta.asin();
    (beta.tan() * p.wheelbase() / p.lr).atan()
}

/// x-extent of every obstacle that is active in iteration 0, inflated by its
/// margin.
fn blocked_span(obstacles: &[ObstacleSpec]) -> Option<(f64, f64)> {
    obstacles
        .iter()
        .filter(|o| o.active.contains(0))
        .map(|o| {
            let (a, _) = o.shape.semi_axes();
            (o.center[0] - a - o.safety_margin, o.center[0] + a + o.safety_margin)
        })
        .reduce(|(a, b), (c, d)| (a.min(c), b.max(d)))
}

fn simulate_initial(scenario: &Scenario, cruise: f64, offset: f64) -> Option<(Vec<State>, Vec<Input>)> {
    let p = &scenario.model;
    let target = scenario.x_target;
    let span = if offset == 0.0 { None } else { blocked_span(&scenario.obstacles) };
    let ramp = scenario.initial.ramp_length;
    let mut s = scenario.x0;
    let mut states = vec![s];
    let mut inputs = Vec::new();
    while s.distance(&target) >= scenario.epsilon {
        if inputs.len() >= scenario.max_steps_per_iteration {
            return None;
        }
        let room = target.x - s.x;
        let a = longitudinal_command(s.v, room, cruise);
        let look = (3.0 * s.v * p.dt).max(5.0);
        let y_ahead = lateral_reference(s.x + look, offset, span, ramp);
        let course = (y_ahead - s.y).atan2(look);
        let u = dynamics::saturate(Input::new(a, steering_command(&s, course, p)));
        s = dynamics::step(s, u, p);
        states.push(s);
        inputs.push(u);
    }
    environment::collision_free(&states, &scenario.obstacles, p.dt, 0, 0).then_some((states, inputs))
}

/// Iteration 0: a slow, feasible trajectory from a small grid of cruise
/// speeds and lateral offsets. The first feasible grid point wins.
pub fn initial_trajectory(scenario: &Scenario) -> Result<(Vec<State>, Vec<Input>), RunError> {
    let mut tried = 0;
    for &cruise in &scenario.initial.cruise_speeds {
        for &offset in &scenario.initial.lateral_offsets {
            tried += 1;
            if let Some(found) = simulate_initial(scenario, cruise, offset) {
                return Ok(found);
            }
        }
    }
    Err(RunError::NoFeasibleInitialTrajectory { scenario: scenario.name.clone(), tried })
}

/// Drive one iteration with the controller.
pub fn run_iteration(
    scenario: &Scenario,
    controller: &Controller,
    iteration: usize,
    history: &HistorySet,
    verbose: bool,
) -> Result<IterationResult, HistoryError> {
    let mut s = scenario.x0;
    let mut states = vec![s];
    let mut inputs = Vec::new();
    let mut diagnostics = Vec::new();
    let mut completed = false;
    for t in 0..=scenario.max_steps_per_iteration {
        if s.distance(&scenario.x_target) < scenario.epsilon {
            completed = true;
            break;
        }
        if t == scenario.max_steps_per_iteration {
            break;
        }
        let decision = controller.compute_control(s, history, iteration, t)?;
        let u = dynamics::saturate(decision.input);
        s = dynamics::step(s, u, &scenario.model);
        states.push(s);
        inputs.push(u);
        diagnostics.push(StepDiagnostics::from_decision(decision, verbose));
    }
    Ok(IterationResult {
        iteration,
        states,
        inputs,
        completed,
        diagnostics,
        collision_free: false,
        inputs_admissible: false,
        replay_exact: false,
        min_clearance: None,
    }
    .audit(scenario))
}

/// Options that do not affect results.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub workers: usize,
    pub verbose: bool,
}

/// Run iteration 0 plus `scenario.num_iterations` controlled iterations.
pub fn run_task(scenario: &Scenario, options: RunOptions) -> Result<RunResult, RunError> {
    run_task_with(scenario, options, |_| {})
}

/// As [`run_task`], calling `on_iteration` after each iteration finishes.
pub fn run_task_with(
    scenario: &Scenario,
    options: RunOptions,
    mut on_iteration: impl FnMut(&IterationResult),
) -> Result<RunResult, RunError> {
    let started = Instant::now();
    let controller = Controller::new(
        scenario.controller.clone(),
        scenario.model,
        scenario.obstacles.clone(),
        options.workers,
    );
    let mut history =
        HistorySet::new(scenario.controller.history_window, scenario.x_target, scenario.epsilon);

    let (states, inputs) = initial_trajectory(scenario)?;
    let first = IterationResult {
        iteration: 0,
        states: states.clone(),
        inputs: inputs.clone(),
        completed: true,
        diagnostics: Vec::new(),
        collision_free: false,
        inputs_admissible: false,
        replay_exact: false,
        min_clearance: None,
    }
    .audit(scenario);
    history
        .record_iteration(0, states, inputs)
        .map_err(|source| RunError::Iteration { iteration: 0, source })?;
    on_iteration(&first);
    let mut iterations = vec![first];

    for i in 1..=scenario.num_iterations {
        let result = run_iteration(scenario, &controller, i, &history, options.verbose)
            .map_err(|source| RunError::Iteration { iteration: i, source })?;
        if result.completed {
            history
                .record_iteration(i, result.states.clone(), result.inputs.clone())
                .map_err(|source| RunError::Iteration { iteration: i, source })?;
        }
        on_iteration(&result);
        iterations.push(result);
    }
    Ok(RunResult { iterations, wall_clock: started.elapsed() })
}
