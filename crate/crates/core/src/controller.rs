//! The history-driven outer loop.
//!
//! Each call runs a handful of optimization cycles. A cycle gathers the `K`
//! historical states nearest to the current guided state, solves one local
//! iLQR problem per candidate with that candidate as terminal target, and
//! keeps the solution with the best trade-off between the candidate's
//! cost-to-go and how closely the solution reached it. The terminal state of
//! that solution guides the next cycle. Cycles stop when the candidate set
//! repeats or after `r_max` cycles.

use std::collections::BTreeSet;

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::dynamics::{Input, ModelParams, State};
use crate::environment::{constraint_window, ObstacleSpec};
use crate::history::{DistanceWeights, HistoryError, HistorySet, Source, TerminalCandidate};
use crate::ilqr::{self, IlqrConfig, IlqrProblem, IlqrSolution};

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    /// Candidates per cycle.
    pub k: usize,
    /// Maximum cycles per time step.
    pub r_max: usize,
    /// Candidate-selection metric.
    pub d0: DistanceWeights,
    /// Diagonal of the terminal-miss metric used when ranking solutions.
    pub d1: [f64; 4],
    pub w_h: f64,
    pub w_d: f64,
    /// Number of most recent iterations visible to the controller.
    pub history_window: usize,
    pub ilqr: IlqrConfig,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            k: 30,
            r_max: 10,
            d0: DistanceWeights::default(),
            d1: DistanceWeights::default().0,
            w_h: 1.0,
            w_d: 3.0,
            history_window: 2,
            ilqr: IlqrConfig::default(),
        }
    }
}

impl ControllerConfig {
    pub fn check(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err("controller.k must be >= 1".into());
        }
        if self.r_max == 0 {
            return Err("controller.r_max must be >= 1".into());
        }
        if self.history_window == 0 {
            return Err("controller.history_window must be >= 1".into());
        }
        if !self.d0.is_valid() {
            return Err("controller.d0 needs nonnegative weights with at least one > 0".into());
        }
        if !self.d1.iter().all(|w| w.is_finite() && *w >= 0.0) {
            return Err("controller.d1 weights must be finite and >= 0".into());
        }
        let nonneg = |w: f64| w.is_finite() && w >= 0.0;
        if !(nonneg(self.w_h) && nonneg(self.w_d) && self.w_h + self.w_d > 0.0) {
            return Err("controller.w_h and w_d must be >= 0 with a positive sum".into());
        }
        self.ilqr.check()
    }
}

/// What one cycle looked at and picked.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleDiagnostics {
    pub guide: State,
    pub sources: Vec<Source>,
    pub costs_to_go: Vec<u32>,
    pub selection_costs: Vec<f64>,
    pub solve_costs: Vec<f64>,
    pub best: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlDecision {
    pub input: Input,
    pub predicted_states: Vec<State>,
    pub predicted_inputs: Vec<Input>,
    pub selected: TerminalCandidate,
    pub cycles_used: usize,
    pub cycles: Vec<CycleDiagnostics>,
}

/// Ranking score of one solution.
pub fn selection_cost(solution: &IlqrSolution, candidate: &TerminalCandidate, config: &ControllerConfig) -> f64 {
    let end = solution.terminal_state();
    let miss = [
        end.x - candidate.state.x,
        end.y - candidate.state.y,
        end.v - candidate.state.v,
        end.theta - candidate.state.theta,
    ];
    let dist: f64 = miss.iter().zip(config.d1).map(|(e, w)| w * e * e).sum();
    config.w_h * candidate.cost_to_go as f64 + config.w_d * dist
}

/// Index of the best solution; ties go to the smaller cost-to-go, then the
/// smaller index.
pub fn select_best(solutions: &[IlqrSolution], candidates: &[TerminalCandidate], config: &ControllerConfig) -> usize {
    assert_eq!(solutions.len(), candidates.len());
    assert!(!solutions.is_empty());
    let scores: Vec<f64> = solutions.iter().zip(candidates).map(|(s, c)| selection_cost(s, c, config)).collect();
    (0..scores.len())
        .min_by(|&i, &j| {
            scores[i]
                .total_cmp(&scores[j])
                .then_with(|| candidates[i].cost_to_go.cmp(&candidates[j].cost_to_go))
                .then_with(|| i.cmp(&j))
        })
        .unwrap()
}

/// Runs the outer loop for one time step.
pub struct Controller {
    pub config: ControllerConfig,
    pub model: ModelParams,
    pub obstacles: Vec<ObstacleSpec>,
    pool: Option<ThreadPool>,
}

impl Controller {
    /// `workers <= 1` solves candidates serially on the calling thread.
    pub fn new(config: ControllerConfig, model: ModelParams, obstacles: Vec<ObstacleSpec>, workers: usize) -> Self {
        let pool = (workers > 1).then(|| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .expect("failed to build solver thread pool")
        });
        Self { config, model, obstacles, pool }
    }

    fn solve_all(&self, x_t: State, candidates: &[TerminalCandidate], iteration: usize, t: usize) -> Vec<IlqrSolution> {
        let window = constraint_window(&self.obstacles, self.model.dt, iteration, t, self.config.ilqr.horizon);
        let solve_one = |c: &TerminalCandidate| {
            ilqr::solve(&IlqrProblem {
                dynamics: &self.model,
                initial_state: x_t,
                target: c.state,
                window: &window,
                config: &self.config.ilqr,
            })
        };
        match &self.pool {
            Some(pool) => pool.install(|| candidates.par_iter().map(solve_one).collect()),
            None => candidates.iter().map(solve_one).collect(),
        }
    }

    pub fn compute_control(
        &self,
        x_t: State,
        history: &HistorySet,
        iteration: usize,
        t: usize,
    ) -> Result<ControlDecision, HistoryError> {
        let cfg = &self.config;
        let mut guide = x_t;
        let mut previous: Option<BTreeSet<Source>> = None;
        let mut best: Option<(IlqrSolution, TerminalCandidate)> = None;
        let mut cycles = Vec::new();

        for _ in 0..cfg.r_max {
            let candidates = history.k_nearest(&guide, cfg.k, &cfg.d0)?;
            let sources: BTreeSet<Source> = candidates.iter().map(|c| c.source).collect();
            if previous.as_ref() == Some(&sources) {
                break;
            }
            let solutions = self.solve_all(x_t, &candidates, iteration, t);
            let j = select_best(&solutions, &candidates, cfg);
            cycles.push(CycleDiagnostics {
                guide,
                sources: candidates.iter().map(|c| c.source).collect(),
                costs_to_go: candidates.iter().map(|c| c.cost_to_go).collect(),
                selection_costs: solutions.iter().zip(&candidates).map(|(s, c)| selection_cost(s, c, cfg)).collect(),
                solve_costs: solutions.iter().map(|s| s.final_cost).collect(),
                best: j,
            });
            guide = solutions[j].terminal_state();
            best = Some((solutions.into_iter().nth(j).unwrap(), candidates[j]));
            previous = Some(sources);
        }

        let (solution, selected) = best.expect("r_max >= 1 guarantees one cycle");
        Ok(ControlDecision {
            input: solution.inputs[0],
            predicted_states: solution.states,
            predicted_inputs: solution.inputs,
            selected,
            cycles_used: cycles.len(),
            cycles,
        })
    }
}
