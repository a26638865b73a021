//! Finite-horizon iterative LQR with exponential-barrier constraint costs.
//!
//! The objective for one solve is
//!
//! ```text
//! J = (x_N - z)' P (x_N - z)
//!   + sum_k u_k' R u_k
//!   + sum_k sum_c q1 * exp(q2 * g_c)
//! ```
//!
//! where the `g_c <= 0` are the obstacle constraints on each predicted state
//! `x_{k+1}` and the input-box constraints on each `u_k`. Inputs are also
//! saturated in the forward pass so the returned inputs always respect the
//! actuator bounds.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use thiserror::Error;

use crate::dynamics::{Dynamics, Input, State};
use crate::environment::{ConstraintWindow, InputBounds, ObstaclePose};

/// The barrier exponent `q2 * g` is clamped here before `exp`.
pub const BARRIER_EXPONENT_CAP: f64 = 50.0;

/// Step lengths tried by the line search, largest first.
pub const LINE_SEARCH_STEPS: usize = 11;

#[derive(Debug, Clone, PartialEq)]
pub struct IlqrConfig {
    /// Prediction horizon N, steps.
    pub horizon: usize,
    /// Diagonal of the terminal weight P.
    pub terminal_weight: [f64; 4],
    /// Diagonal of the running input weight R.
    pub input_weight: [f64; 2],
    /// Diagonal of the running weight Q on the distance of the intermediate
    /// predicted states from the target.
    pub state_weight: [f64; 4],
    pub barrier_q1: f64,
    pub barrier_q2: f64,
    /// Barrier sharpness used for the input-box constraints only.
    pub input_barrier_q2: f64,
    pub max_iterations: usize,
    /// Relative cost decrease below which the solve stops.
    pub convergence_tol: f64,
    pub reg_init: f64,
    pub reg_max: f64,
}

impl Default for IlqrConfig {
    fn default() -> Self {
        Self {
            horizon: 6,
            terminal_weight: [100.0, 100.0, 100.0, 10.0],
            input_weight: [1e-3, 1e3],
            state_weight: [0.1, 0.1, 0.0, 0.0],
            barrier_q1: 10.0,
            barrier_q2: 20.0,
            input_barrier_q2: 40.0,
            max_iterations: 50,
            convergence_tol: 1e-4,
            reg_init: 1e-6,
            reg_max: 1e10,
        }
    }
}

impl IlqrConfig {
    pub fn check(&self) -> Result<(), String> {
        let nonneg = |w: &f64| w.is_finite() && *w >= 0.0;
        let positive = |w: f64| w.is_finite() && w > 0.0;
        if self.horizon == 0 {
            return Err("ilqr.horizon must be >= 1".into());
        }
        if self.max_iterations == 0 {
            return Err("ilqr.max_iterations must be >= 1".into());
        }
        if !self.terminal_weight.iter().all(nonneg) || !self.input_weight.iter().all(nonneg) || !self.state_weight.iter().all(nonneg) {
            return Err("ilqr weights must be finite and >= 0".into());
        }
        if !positive(self.barrier_q1) || !positive(self.barrier_q2) || !positive(self.input_barrier_q2) {
            return Err("ilqr barrier parameters must be > 0".into());
        }
        if !positive(self.convergence_tol) {
            return Err("ilqr.convergence_tol must be > 0".into());
        }
        if !(nonneg(&self.reg_init) && positive(self.reg_max) && self.reg_init <= self.reg_max) {
            return Err("ilqr regularization must satisfy 0 <= reg_init <= reg_max".into());
        }
        Ok(())
    }

    fn p(&self) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::from(self.terminal_weight))
    }

    fn q(&self) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::from(self.state_weight))
    }

    fn r(&self) -> Matrix2<f64> {
        Matrix2::from_diagonal(&Vector2::from(self.input_weight))
    }
}

/// One terminal-target subproblem.
pub struct IlqrProblem<'a, D: Dynamics + ?Sized> {
    pub dynamics: &'a D,
    pub initial_state: State,
    pub target: State,
    pub window: &'a ConstraintWindow,
    pub config: &'a IlqrConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlqrSolution {
    pub states: Vec<State>,
    pub inputs: Vec<Input>,
    pub final_cost: f64,
    pub converged: bool,
    pub iterations_used: usize,
    /// Cost of the initial guess followed by every accepted iterate.
    pub cost_trace: Vec<f64>,
}

impl IlqrSolution {
    pub fn terminal_state(&self) -> State {
        *self.states.last().expect("solution has at least one state")
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("regularized Q_uu is not positive definite at step {step} (lambda = {lambda})")]
pub struct NotPositiveDefinite {
    pub step: usize,
    pub lambda: f64,
}

/// Feedforward and feedback terms from one backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    pub feedforward: Vec<Vector2<f64>>,
    pub feedback: Vec<Matrix2x4<f64>>,
}

/// How the curvature of barrier terms is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curvature {
    /// True second derivative.
    Exact,
    /// Drops the constraint-function curvature; always positive semidefinite.
    GaussNewton,
}

/// `(b, db/dg, d2b/dg2)` for `b = q1 exp(q2 g)`.
fn barrier(g: f64, q1: f64, q2: f64) -> (f64, f64, f64) {
    let e = q1 * (q2 * g).min(BARRIER_EXPONENT_CAP).exp();
    (e, q2 * e, q2 * q2 * e)
}

/// Barrier cost of a predicted state with its gradient and Hessian.
pub fn state_barrier(
    x: &Vector4<f64>,
    poses: &[ObstaclePose],
    cfg: &IlqrConfig,
    curvature: Curvature,
) -> (f64, Vector4<f64>, Matrix4<f64>) {
    let s = State::from_vector(x);
    let mut value = 0.0;
    let mut grad = Vector4::zeros();
    let mut hess = Matrix4::zeros();
    for pose in poses {
        let g = pose.violation(&s);
        let (b, db, ddb) = barrier(g, cfg.barrier_q1, cfg.barrier_q2);
        let (dg, ddg) = pose.violation_derivatives(&s);
        value += b;
        grad += db * dg;
        hess += ddb * dg * dg.transpose();
        if curvature == Curvature::Exact {
            hess += db * ddg;
        }
    }
    (value, grad, hess)
}

/// Running input cost (quadratic plus box barrier) with gradient and Hessian.
pub fn input_cost(
    u: &Vector2<f64>,
    bounds: Option<&InputBounds>,
    cfg: &IlqrConfig,
) -> (f64, Vector2<f64>, Matrix2<f64>) {
    let r = cfg.r();
    let mut value = (u.transpose() * r * u)[0];
    let mut grad = 2.0 * r * u;
    let mut hess = 2.0 * r;
    if let Some(bounds) = bounds {
        let limits = [bounds.accel, bounds.steer];
        for i in 0..2 {
            for sign in [1.0, -1.0] {
                // g = sign * u_i - limit_i
                let (b, db, ddb) = barrier(sign * u[i] - limits[i], cfg.barrier_q1, cfg.input_barrier_q2);
                value += b;
                grad[i] += sign * db;
                hess[(i, i)] += ddb;
            }
        }
    }
    (value, grad, hess)
}

/// Terminal cost with gradient and Hessian.
pub fn terminal_cost(x: &Vector4<f64>, target: &Vector4<f64>, cfg: &IlqrConfig) -> (f64, Vector4<f64>, Matrix4<f64>) {
    let p = cfg.p();
    let e = x - target;
    ((e.transpose() * p * e)[0], 2.0 * p * e, 2.0 * p)
}

/// Running tracking cost of an intermediate predicted state.
pub fn state_cost(x: &Vector4<f64>, target: &Vector4<f64>, cfg: &IlqrConfig) -> (f64, Vector4<f64>, Matrix4<f64>) {
    let q = cfg.q();
    let e = x - target;
    ((e.transpose() * q * e)[0], 2.0 * q * e, 2.0 * q)
}

fn to_vectors<D: Dynamics + ?Sized>(problem: &IlqrProblem<'_, D>, states: &[State], inputs: &[Input]) -> (Vec<Vector4<f64>>, Vec<Vector2<f64>>) {
    debug_assert_eq!(states.len(), inputs.len() + 1);
    debug_assert_eq!(inputs.len(), problem.window.len());
    (states.iter().map(|s| s.to_vector()).collect(), inputs.iter().map(|u| u.to_vector()).collect())
}

fn cost_of(xs: &[Vector4<f64>], us: &[Vector2<f64>], window: &ConstraintWindow, target: &Vector4<f64>, cfg: &IlqrConfig) -> f64 {
    let n = us.len();
    let bounds = window.input_bounds.as_ref();
    let mut total = terminal_cost(&xs[n], target, cfg).0;
    for k in 0..n {
        total += input_cost(&us[k], bounds, cfg).0;
        total += state_barrier(&xs[k + 1], &window.steps[k], cfg, Curvature::GaussNewton).0;
        if k + 1 < n {
            total += state_cost(&xs[k + 1], target, cfg).0;
        }
    }
    total
}

/// Total objective of a dynamically consistent trajectory.
pub fn total_cost<D: Dynamics + ?Sized>(states: &[State], inputs: &[Input], problem: &IlqrProblem<'_, D>) -> f64 {
    let (xs, us) = to_vectors(problem, states, inputs);
    cost_of(&xs, &us, problem.window, &problem.target.to_vector(), problem.config)
}

/// Gradient of the total objective with respect to each input, through the
/// dynamics (adjoint recursion with exact Jacobians).
pub fn cost_gradient<D: Dynamics + ?Sized>(states: &[State], inputs: &[Input], problem: &IlqrProblem<'_, D>) -> Vec<Vector2<f64>> {
    let (xs, us) = to_vectors(problem, states, inputs);
    let cfg = problem.config;
    let n = us.len();
    let bounds = problem.window.input_bounds.as_ref();
    let target = problem.target.to_vector();
    let mut adjoint = terminal_cost(&xs[n], &target, cfg).1;
    let mut grads = vec![Vector2::zeros(); n];
    for k in (0..n).rev() {
        adjoint += state_barrier(&xs[k + 1], &problem.window.steps[k], cfg, Curvature::GaussNewton).1;
        if k + 1 < n {
            adjoint += state_cost(&xs[k + 1], &target, cfg).1;
        }
        let (a, b) = problem.dynamics.jacobians(&xs[k], &us[k]);
        grads[k] = input_cost(&us[k], bounds, cfg).1 + b.transpose() * adjoint;
        adjoint = a.transpose() * adjoint;
    }
    grads
}

/// Riccati recursion on the local linear-quadratic model.
pub fn backward_pass<D: Dynamics + ?Sized>(
    states: &[State],
    inputs: &[Input],
    problem: &IlqrProblem<'_, D>,
    lambda: f64,
) -> Result<Gains, NotPositiveDefinite> {
    let (xs, us) = to_vectors(problem, states, inputs);
    backward(&xs, &us, problem, lambda)
}

fn backward<D: Dynamics + ?Sized>(
    xs: &[Vector4<f64>],
    us: &[Vector2<f64>],
    problem: &IlqrProblem<'_, D>,
    lambda: f64,
) -> Result<Gains, NotPositiveDefinite> {
    let cfg = problem.config;
    let n = us.len();
    let bounds = problem.window.input_bounds.as_ref();
    let target = problem.target.to_vector();
    let (_, mut vx, mut vxx) = terminal_cost(&xs[n], &target, cfg);
    let mut feedforward = vec![Vector2::zeros(); n];
    let mut feedback = vec![Matrix2x4::zeros(); n];

    for k in (0..n).rev() {
        // barrier on the state this stage produces
        let (_, bx, bxx) = state_barrier(&xs[k + 1], &problem.window.steps[k], cfg, Curvature::GaussNewton);
        vx += bx;
        vxx += bxx;
        if k + 1 < n {
            let (_, sx, sxx) = state_cost(&xs[k + 1], &target, cfg);
            vx += sx;
            vxx += sxx;
        }

        let (a, b) = problem.dynamics.jacobians(&xs[k], &us[k]);
        let (_, lu, luu) = input_cost(&us[k], bounds, cfg);
        let qx = a.transpose() * vx;
        let qu = lu + b.transpose() * vx;
        let qxx = a.transpose() * vxx * a;
        let quu = luu + b.transpose() * vxx * b;
        let qux = b.transpose() * vxx * a;

        let quu_reg = quu + Matrix2::identity() * lambda;
        let chol = quu_reg.cholesky().ok_or(NotPositiveDefinite { step: k, lambda })?;
        let kff = -chol.solve(&qu);
        let kfb = -chol.solve(&qux);

        vx = qx + kfb.transpose() * quu * kff + kfb.transpose() * qu + qux.transpose() * kff;
        vxx = qxx + kfb.transpose() * quu * kfb + kfb.transpose() * qux + qux.transpose() * kfb;
        vxx = 0.5 * (vxx + vxx.transpose());

        feedforward[k] = kff;
        feedback[k] = kfb;
    }
    Ok(Gains { feedforward, feedback })
}

/// Apply `gains` with step length `alpha` and roll the result out.
pub fn forward_pass<D: Dynamics + ?Sized>(
    states: &[State],
    inputs: &[Input],
    gains: &Gains,
    alpha: f64,
    dynamics: &D,
) -> (Vec<State>, Vec<Input>) {
    let mut new_states = Vec::with_capacity(states.len());
    let mut new_inputs = Vec::with_capacity(inputs.len());
    let mut x = states[0].to_vector();
    new_states.push(states[0]);
    for k in 0..inputs.len() {
        let dx = x - states[k].to_vector();
        let u = inputs[k].to_vector() + alpha * gains.feedforward[k] + gains.feedback[k] * dx;
        let u = dynamics.saturate(&u);
        x = dynamics.step(&x, &u);
        new_inputs.push(Input::from_vector(&u));
        new_states.push(State::from_vector(&x));
    }
    (new_states, new_inputs)
}

/// Solve one subproblem from a zero input sequence.
///
/// Steps are accepted only when they lower the cost. A failed line search
/// raises the regularization; the solve stops on a small relative decrease,
/// after `max_iterations` backward passes, or once the regularization
/// exceeds its ceiling. The best iterate is always returned.
pub fn solve<D: Dynamics + ?Sized>(problem: &IlqrProblem<'_, D>) -> IlqrSolution {
    let cfg = problem.config;
    let n = problem.window.len();
    let target = problem.target.to_vector();
    let mut inputs = vec![Input::ZERO; n];
    let mut states = rollout(problem.dynamics, problem.initial_state, &inputs);
    let mut cost = total_cost(&states, &inputs, problem);
    let mut cost_trace = vec![cost];
    let mut lambda = cfg.reg_init;
    let mut converged = false;
    let mut iterations_used = 0;

    while iterations_used < cfg.max_iterations {
        iterations_used += 1;
        let gains = match backward_pass(&states, &inputs, problem, lambda) {
            Ok(g) => g,
            Err(_) => {
                lambda = (lambda * 10.0).max(1e-8);
                if lambda > cfg.reg_max {
                    break;
                }
                continue;
            }
        };

        let mut accepted = None;
        let mut alpha = 1.0;
        for _ in 0..LINE_SEARCH_STEPS {
            let (xs, us) = forward_pass(&states, &inputs, &gains, alpha, problem.dynamics);
            let xv: Vec<_> = xs.iter().map(|s| s.to_vector()).collect();
            let uv: Vec<_> = us.iter().map(|u| u.to_vector()).collect();
            let c = cost_of(&xv, &uv, problem.window, &target, cfg);
            if c < cost {
                accepted = Some((xs, us, c));
                break;
            }
            alpha *= 0.5;
        }

        match accepted {
            Some((xs, us, c)) => {
                let decrease = (cost - c) / cost.abs().max(f64::MIN_POSITIVE);
                states = xs;
                inputs = us;
                cost = c;
                cost_trace.push(c);
                lambda = if lambda < 1e-8 { 0.0 } else { lambda / 10.0 };
                if decrease < cfg.convergence_tol {
                    converged = true;
                    break;
                }
            }
            None => {
                lambda = (lambda * 10.0).max(1e-8);
                if lambda > cfg.reg_max {
                    // no descent direction left at any damping
                    converged = true;
                    break;
                }
            }
        }
    }

    IlqrSolution { states, inputs, final_cost: cost, converged, iterations_used, cost_trace }
}

fn rollout<D: Dynamics + ?Sized>(dynamics: &D, x0: State, inputs: &[Input]) -> Vec<State> {
    let mut x = x0.to_vector();
    let mut out = Vec::with_capacity(inputs.len() + 1);
    out.push(x0);
    for u in inputs {
        x = dynamics.step(&x, &u.to_vector());
        out.push(State::from_vector(&x));
    }
    out
}
