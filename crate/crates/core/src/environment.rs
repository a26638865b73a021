//! Obstacle schedule and per-step constraint sets along a prediction horizon.

use nalgebra::{Matrix4, Vector4};

use crate::dynamics::{State, ACCEL_LIMIT, STEER_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Ellipse { a: f64, b: f64 },
    Circle { radius: f64 },
}

impl Shape {
    /// Semi-axes along x and y.
    pub fn semi_axes(&self) -> (f64, f64) {
        match *self {
            Shape::Ellipse { a, b } => (a, b),
            Shape::Circle { radius } => (radius, radius),
        }
    }
}

/// Iterations in which an obstacle exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActiveIterations {
    All,
    Only(Vec<usize>),
}

impl ActiveIterations {
    pub fn contains(&self, iteration: usize) -> bool {
        match self {
            ActiveIterations::All => true,
            ActiveIterations::Only(list) => list.contains(&iteration),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleSpec {
    pub shape: Shape,
    pub center: [f64; 2],
    /// m/s; zero for static obstacles.
    pub velocity: [f64; 2],
    pub active: ActiveIterations,
    /// Time step within the iteration at which the obstacle starts moving.
    pub spawn_time: usize,
    /// Inflation applied when planning, m.
    pub safety_margin: f64,
}

impl ObstacleSpec {
    /// Centre at wall time `t` (steps since the iteration started).
    pub fn center_at(&self, t: usize, dt: f64) -> [f64; 2] {
        let elapsed = t.saturating_sub(self.spawn_time) as f64 * dt;
        [
            self.center[0] + self.velocity[0] * elapsed,
            self.center[1] + self.velocity[1] * elapsed,
        ]
    }

    pub fn pose_at(&self, t: usize, dt: f64, margin: f64) -> ObstaclePose {
        ObstaclePose {
            shape: self.shape,
            center: self.center_at(t, dt),
            margin,
        }
    }

    /// Violated invariant, if any.
    pub fn check(&self) -> Result<(), String> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        match self.shape {
            Shape::Ellipse { a, b } if !(positive(a) && positive(b)) => {
                return Err(format!("ellipse semi-axes must be > 0, got ({a}, {b})"))
            }
            Shape::Circle { radius } if !positive(radius) => {
                return Err(format!("circle radius must be > 0, got {radius}"))
            }
            _ => {}
        }
        if !(self.safety_margin.is_finite() && self.safety_margin >= 0.0) {
            return Err(format!("safety_margin must be >= 0, got {}", self.safety_margin));
        }
        if !self.center.iter().chain(&self.velocity).all(|v| v.is_finite()) {
            return Err("obstacle center and velocity must be finite".into());
        }
        Ok(())
    }
}

/// Obstacle geometry at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstaclePose {
    pub shape: Shape,
    pub center: [f64; 2],
    pub margin: f64,
}

impl ObstaclePose {
    fn inflated_axes(&self) -> (f64, f64) {
        let (a, b) = self.shape.semi_axes();
        (a + self.margin, b + self.margin)
    }

    /// `1 - (dx/a)^2 - (dy/b)^2` over the inflated shape: positive inside,
    /// zero on the boundary, negative outside.
    pub fn violation(&self, s: &State) -> f64 {
        let (a, b) = self.inflated_axes();
        let dx = (s.x - self.center[0]) / a;
        let dy = (s.y - self.center[1]) / b;
        1.0 - dx * dx - dy * dy
    }

    /// Gradient and Hessian of [`violation`](Self::violation) with respect to the state.
    pub fn violation_derivatives(&self, s: &State) -> (Vector4<f64>, Matrix4<f64>) {
        let (a, b) = self.inflated_axes();
        let grad = Vector4::new(
            -2.0 * (s.x - self.center[0]) / (a * a),
            -2.0 * (s.y - self.center[1]) / (b * b),
            0.0,
            0.0,
        );
        let mut hess = Matrix4::zeros();
        hess[(0, 0)] = -2.0 / (a * a);
        hess[(1, 1)] = -2.0 / (b * b);
        (grad, hess)
    }

    /// Distance from the point to the boundary measured along the ray through
    /// the centre. Exact for circles; negative inside.
    pub fn radial_clearance(&self, s: &State) -> f64 {
        let (a, b) = self.inflated_axes();
        let dx = s.x - self.center[0];
        let dy = s.y - self.center[1];
        let r = dx.hypot(dy);
        let rho = ((dx / a).powi(2) + (dy / b).powi(2)).sqrt();
        if rho == 0.0 {
            return -a.min(b);
        }
        r * (1.0 - 1.0 / rho)
    }
}

/// Symmetric box bounds on `[a, delta]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputBounds {
    pub accel: f64,
    pub steer: f64,
}

impl Default for InputBounds {
    fn default() -> Self {
        Self { accel: ACCEL_LIMIT, steer: STEER_LIMIT }
    }
}

/// Constraint sets for predicted steps `t+1 ..= t+N`.
///
/// Entry `k` (zero-based) constrains the predicted state `k + 1` and the
/// input `k`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintWindow {
    pub steps: Vec<Vec<ObstaclePose>>,
    pub input_bounds: Option<InputBounds>,
}

impl ConstraintWindow {
    /// A window of `horizon` empty steps with no input bounds.
    pub fn unconstrained(horizon: usize) -> Self {
        Self { steps: vec![Vec::new(); horizon], input_bounds: None }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Constraint window seen by the controller at time `t` of `iteration`.
///
/// Moving obstacles are extrapolated at constant velocity; poses are inflated
/// by each obstacle's safety margin.
pub fn constraint_window(
    obstacles: &[ObstacleSpec],
    dt: f64,
    iteration: usize,
    t: usize,
    horizon: usize,
) -> ConstraintWindow {
    let active: Vec<&ObstacleSpec> = obstacles.iter().filter(|o| o.active.contains(iteration)).collect();
    let steps = (1..=horizon)
        .map(|k| active.iter().map(|o| o.pose_at(t + k, dt, o.safety_margin)).collect())
        .collect();
    ConstraintWindow { steps, input_bounds: Some(InputBounds::default()) }
}

/// One violation value per obstacle pose.
pub fn violation(state: &State, poses: &[ObstaclePose]) -> Vec<f64> {
    poses.iter().map(|p| p.violation(state)).collect()
}

/// Post-hoc audit: every state is outside every active obstacle (no
/// inflation) at that state's wall time. `states[k]` is at time `t0 + k`.
pub fn collision_free(
    states: &[State],
    obstacles: &[ObstacleSpec],
    dt: f64,
    iteration: usize,
    t0: usize,
) -> bool {
    states.iter().enumerate().all(|(k, s)| {
        obstacles
            .iter()
            .filter(|o| o.active.contains(iteration))
            .all(|o| o.pose_at(t0 + k, dt, 0.0).violation(s) <= 0.0)
    })
}

/// Smallest radial clearance (no inflation) over the trajectory, or `None`
/// when no obstacle is active in the iteration.
pub fn min_clearance(states: &[State], obstacles: &[ObstacleSpec], dt: f64, iteration: usize) -> Option<f64> {
    let mut best: Option<f64> = None;
    for o in obstacles.iter().filter(|o| o.active.contains(iteration)) {
        for (t, s) in states.iter().enumerate() {
            let c = o.pose_at(t, dt, 0.0).radial_clearance(s);
            best = Some(best.map_or(c, |b| b.min(c)));
        }
    }
    best
}
