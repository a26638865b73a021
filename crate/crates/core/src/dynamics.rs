//! Discrete-time kinematic bicycle model.
//!
//! The continuous model is the slip-angle bicycle referenced at the centre of
//! gravity,
//!
//! ```text
//! beta  = atan(lr / (lf + lr) * tan(delta))
//! x'    = v cos(theta + beta)
//! y'    = v sin(theta + beta)
//! v'    = a
//! theta' = v / lr * sin(beta)
//! ```
//!
//! discretized with a single forward-Euler step of length `dt`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

/// Acceleration bound, m/s².
pub const ACCEL_LIMIT: f64 = 2.0;
/// Steering bound, rad.
pub const STEER_LIMIT: f64 = FRAC_PI_2;

/// Vehicle state `[x, y, v, theta]`. Heading is never wrapped.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub theta: f64,
}

impl State {
    pub const fn new(x: f64, y: f64, v: f64, theta: f64) -> Self {
        Self { x, y, v, theta }
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.v, self.theta)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.v.is_finite() && self.theta.is_finite()
    }

    /// Euclidean norm of the full-state difference.
    pub fn distance(&self, other: &State) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }
}

impl From<[f64; 4]> for State {
    fn from(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

impl From<State> for [f64; 4] {
    fn from(s: State) -> Self {
        [s.x, s.y, s.v, s.theta]
    }
}

/// Control input `[a, delta]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Input {
    pub a: f64,
    pub delta: f64,
}

impl Input {
    pub const ZERO: Input = Input { a: 0.0, delta: 0.0 };

    pub const fn new(a: f64, delta: f64) -> Self {
        Self { a, delta }
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.a, self.delta)
    }

    pub fn from_vector(v: &Vector2<f64>) -> Self {
        Self::new(v[0], v[1])
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.delta.is_finite()
    }

    /// True when both components lie inside the actuator bounds (inclusive).
    pub fn is_admissible(&self) -> bool {
        (-ACCEL_LIMIT..=ACCEL_LIMIT).contains(&self.a)
            && (-STEER_LIMIT..=STEER_LIMIT).contains(&self.delta)
    }
}

impl From<[f64; 2]> for Input {
    fn from(a: [f64; 2]) -> Self {
        Self::new(a[0], a[1])
    }
}

impl From<Input> for [f64; 2] {
    fn from(u: Input) -> Self {
        [u.a, u.delta]
    }
}

/// Sampling time and axle geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Sampling time, s.
    pub dt: f64,
    /// Distance from the centre of gravity to the front axle, m.
    pub lf: f64,
    /// Distance from the centre of gravity to the rear axle, m.
    pub lr: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { dt: 1.0, lf: 1.5, lr: 1.5 }
    }
}

impl ModelParams {
    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }

    pub fn is_valid(&self) -> bool {
        self.dt.is_finite()
            && self.dt > 0.0
            && self.lf.is_finite()
            && self.lr.is_finite()
            && self.lf >= 0.0
            && self.lr > 0.0
    }

    fn rear_ratio(&self) -> f64 {
        self.lr / self.wheelbase()
    }
}

/// Clamp both input components to the actuator bounds.
pub fn saturate(u: Input) -> Input {
    Input::new(
        u.a.clamp(-ACCEL_LIMIT, ACCEL_LIMIT),
        u.delta.clamp(-STEER_LIMIT, STEER_LIMIT),
    )
}

fn slip_angle(delta: f64, p: &ModelParams) -> f64 {
    (p.rear_ratio() * delta.tan()).atan()
}

/// d(beta)/d(delta), written so it stays finite at |delta| = pi/2.
fn slip_angle_derivative(delta: f64, p: &ModelParams) -> f64 {
    let c = p.rear_ratio();
    let (s, co) = delta.sin_cos();
    c / (co * co + c * c * s * s)
}

/// One Euler step of the bicycle model.
pub fn step(s: State, u: Input, p: &ModelParams) -> State {
    let beta = slip_angle(u.delta, p);
    let course = s.theta + beta;
    State {
        x: s.x + p.dt * s.v * course.cos(),
        y: s.y + p.dt * s.v * course.sin(),
        v: s.v + p.dt * u.a,
        theta: s.theta + p.dt * s.v / p.lr * beta.sin(),
    }
}

/// Simulate `inputs` from `x0`. The result has `inputs.len() + 1` states.
pub fn rollout(x0: State, inputs: &[Input], p: &ModelParams) -> Vec<State> {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(x0);
    let mut s = x0;
    for &u in inputs {
        s = step(s, u, p);
        states.push(s);
    }
    states
}

/// Analytic Jacobians `(df/ds, df/du)` of [`step`].
pub fn linearize(s: State, u: Input, p: &ModelParams) -> (Matrix4<f64>, Matrix4x2<f64>) {
    let dt = p.dt;
    let beta = slip_angle(u.delta, p);
    let dbeta = slip_angle_derivative(u.delta, p);
    let (sin_c, cos_c) = (s.theta + beta).sin_cos();
    let (sin_b, cos_b) = beta.sin_cos();

    #[rustfmt::skip]
    let a = Matrix4::new(
        1.0, 0.0, dt * cos_c,        -dt * s.v * sin_c,
        0.0, 1.0, dt * sin_c,         dt * s.v * cos_c,
        0.0, 0.0, 1.0,                0.0,
        0.0, 0.0, dt * sin_b / p.lr,  1.0,
    );
    #[rustfmt::skip]
    let b = Matrix4x2::new(
        0.0, -dt * s.v * sin_c * dbeta,
        0.0,  dt * s.v * cos_c * dbeta,
        dt,   0.0,
        0.0,  dt * s.v / p.lr * cos_b * dbeta,
    );
    (a, b)
}

/// Model interface used by the trajectory optimizer.
///
/// The optimizer is written against this trait so it can be exercised on
/// linear test systems as well as on the bicycle.
pub trait Dynamics: Sync {
    fn step(&self, x: &Vector4<f64>, u: &Vector2<f64>) -> Vector4<f64>;
    fn jacobians(&self, x: &Vector4<f64>, u: &Vector2<f64>) -> (Matrix4<f64>, Matrix4x2<f64>);
    fn saturate(&self, u: &Vector2<f64>) -> Vector2<f64>;
}

impl Dynamics for ModelParams {
    fn step(&self, x: &Vector4<f64>, u: &Vector2<f64>) -> Vector4<f64> {
        step(State::from_vector(x), Input::from_vector(u), self).to_vector()
    }

    fn jacobians(&self, x: &Vector4<f64>, u: &Vector2<f64>) -> (Matrix4<f64>, Matrix4x2<f64>) {
        linearize(State::from_vector(x), Input::from_vector(u), self)
    }

    fn saturate(&self, u: &Vector2<f64>) -> Vector2<f64> {
        saturate(Input::from_vector(u)).to_vector()
    }
}
