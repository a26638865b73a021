//! Completed-iteration storage and weighted K-nearest queries.

use std::cmp::Ordering;

use thiserror::Error;

use crate::dynamics::{Input, State};

#[derive(Debug, Error, PartialEq)]
pub enum HistoryError {
    #[error("trajectory ends {distance:.3} from the target (tolerance {epsilon})")]
    TargetNotReached { distance: f64, epsilon: f64 },
    #[error("trajectory has {states} states for {inputs} inputs")]
    LengthMismatch { states: usize, inputs: usize },
    #[error("history holds {available} visible states but {requested} were requested; the initial trajectory is too short")]
    TooFewStates { available: usize, requested: usize },
    #[error("k must be at least 1")]
    ZeroK,
}

/// One completed iteration with its minimum-time cost-to-go.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub iteration_index: usize,
    pub states: Vec<State>,
    pub inputs: Vec<Input>,
    /// Steps remaining to the target; `cost_to_go[t] = T - t`.
    pub cost_to_go: Vec<u32>,
}

impl TrajectoryRecord {
    /// Completion time in steps.
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }
}

/// Diagonal weights of the selection metric over `[x, y, v, theta]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceWeights(pub [f64; 4]);

impl Default for DistanceWeights {
    fn default() -> Self {
        Self([1.0, 1.0, 0.5, 0.1])
    }
}

impl DistanceWeights {
    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|w| w.is_finite() && *w >= 0.0) && self.0.iter().any(|w| *w > 0.0)
    }

    /// Weighted squared distance.
    pub fn distance(&self, a: &State, b: &State) -> f64 {
        let d = [a.x - b.x, a.y - b.y, a.v - b.v, a.theta - b.theta];
        d.iter().zip(self.0).map(|(e, w)| w * e * e).sum()
    }
}

/// Where a stored state came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Source {
    pub iteration: usize,
    pub time: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalCandidate {
    pub state: State,
    pub cost_to_go: u32,
    pub source: Source,
    /// Weighted squared distance to the query state.
    pub distance: f64,
}

/// Ascending distance, then larger iteration, then larger time index.
pub fn candidate_order(a: &TerminalCandidate, b: &TerminalCandidate) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then_with(|| b.source.iteration.cmp(&a.source.iteration))
        .then_with(|| b.source.time.cmp(&a.source.time))
}

/// Completed iterations visible to the controller.
#[derive(Debug, Clone)]
pub struct HistorySet {
    records: Vec<TrajectoryRecord>,
    window: usize,
    target: State,
    epsilon: f64,
}

impl HistorySet {
    /// `window` is the number of most recent iterations answered by queries.
    pub fn new(window: usize, target: State, epsilon: f64) -> Self {
        Self { records: Vec::new(), window: window.max(1), target, epsilon }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Every record ever stored, oldest first.
    pub fn records(&self) -> &[TrajectoryRecord] {
        &self.records
    }

    /// The records queries currently see.
    pub fn visible(&self) -> &[TrajectoryRecord] {
        let start = self.records.len().saturating_sub(self.window);
        &self.records[start..]
    }

    pub fn visible_len(&self) -> usize {
        self.visible().iter().map(|r| r.states.len()).sum()
    }

    /// Append a completed iteration. Rejects trajectories whose final state is
    /// not within `epsilon` of the target.
    pub fn record_iteration(
        &mut self,
        iteration_index: usize,
        states: Vec<State>,
        inputs: Vec<Input>,
    ) -> Result<&TrajectoryRecord, HistoryError> {
        if states.len() != inputs.len() + 1 {
            return Err(HistoryError::LengthMismatch { states: states.len(), inputs: inputs.len() });
        }
        let last = states.last().expect("at least one state");
        let distance = last.distance(&self.target);
        if !(distance < self.epsilon) {
            return Err(HistoryError::TargetNotReached { distance, epsilon: self.epsilon });
        }
        let horizon = inputs.len() as u32;
        let cost_to_go = (0..=horizon).rev().collect();
        self.records.push(TrajectoryRecord { iteration_index, states, inputs, cost_to_go });
        Ok(self.records.last().unwrap())
    }

    /// The `k` visible states nearest to `guide` under `weights`, sorted by
    /// [`candidate_order`].
    pub fn k_nearest(
        &self,
        guide: &State,
        k: usize,
        weights: &DistanceWeights,
    ) -> Result<Vec<TerminalCandidate>, HistoryError> {
        if k == 0 {
            return Err(HistoryError::ZeroK);
        }
        let available = self.visible_len();
        if available < k {
            return Err(HistoryError::TooFewStates { available, requested: k });
        }
        let mut all: Vec<TerminalCandidate> = self
            .visible()
            .iter()
            .flat_map(|rec| {
                rec.states.iter().zip(&rec.cost_to_go).enumerate().map(move |(t, (s, h))| TerminalCandidate {
                    state: *s,
                    cost_to_go: *h,
                    source: Source { iteration: rec.iteration_index, time: t },
                    distance: weights.distance(s, guide),
                })
            })
            .collect();
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, candidate_order);
            all.truncate(k);
        }
        all.sort_by(candidate_order);
        Ok(all)
    }
}
