//! Comparisons between library results and the oracles, shared by the
//! integration tests and the acceptance suite.

use std::f64::consts::PI;

use i2lqr::dynamics::{self, Input, ModelParams, State};
use i2lqr::environment::{ConstraintWindow, InputBounds, ObstaclePose, Shape};
use i2lqr::history::{DistanceWeights, HistorySet};
use i2lqr::ilqr::{self, Curvature, IlqrConfig, IlqrProblem};
use nalgebra::{DVector, Vector2, Vector4};
use rand::Rng;

use super::{fd_jacobian, knn_scan, qp_solve, random_lq, rel_err, Linear, Stored};

/// Largest elementwise relative error of `[A | B]` against central differences.
pub fn jacobian_error(s: State, u: Input, p: &ModelParams) -> f64 {
    let (a, b) = dynamics::linearize(s, u, p);
    let x = DVector::from_column_slice(&[s.x, s.y, s.v, s.theta, u.a, u.delta]);
    let f = |x: &DVector<f64>| {
        let n = dynamics::step(State::new(x[0], x[1], x[2], x[3]), Input::new(x[4], x[5]), p);
        DVector::from_column_slice(&[n.x, n.y, n.v, n.theta])
    };
    let fd = fd_jacobian(f, &x, 1e-6);
    let mut worst: f64 = 0.0;
    for i in 0..4 {
        for j in 0..6 {
            let analytic = if j < 4 { a[(i, j)] } else { b[(i, j - 4)] };
            worst = worst.max(rel_err(analytic, fd[(i, j)], 1e-2));
        }
    }
    worst
}

pub fn random_state(rng: &mut impl Rng) -> State {
    State::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), rng.gen_range(-30.0..30.0), rng.gen_range(-PI..PI))
}

pub fn random_input(rng: &mut impl Rng) -> Input {
    Input::new(rng.gen_range(-2.0..2.0), rng.gen_range(-1.5..1.5))
}

/// Outcome of one linear-quadratic instance.
pub struct LqOutcome {
    /// Largest state difference (Euclidean) along the trajectory.
    pub state_error: f64,
    /// iLQR objective minus the QP objective.
    pub objective_gap: f64,
    pub accepted_steps: usize,
}

/// Solve a random barrier-free LQ instance with the optimizer and the
/// stacked-QP oracle.
pub fn lq_case(rng: &mut impl Rng) -> LqOutcome {
    let n = rng.gen_range(1..=5);
    let lq = random_lq(rng, n);
    let sys = Linear { a: lq.a[0], b: lq.b[0] };
    let cfg = IlqrConfig {
        horizon: n,
        terminal_weight: lq.p,
        input_weight: lq.r,
        state_weight: lq.q,
        reg_init: 0.0,
        ..Default::default()
    };
    let window = ConstraintWindow::unconstrained(n);
    let problem = IlqrProblem {
        dynamics: &sys,
        initial_state: State::from_vector(&lq.x0),
        target: State::from_vector(&lq.z),
        window: &window,
        config: &cfg,
    };
    let sol = ilqr::solve(&problem);

    let u_star = qp_solve(&lq);
    let x_star = lq.states(&u_star);
    let state_error = sol
        .states
        .iter()
        .zip(&x_star)
        .map(|(s, x)| (s.to_vector() - x).norm())
        .fold(0.0, f64::max);
    let u_ilqr: Vec<Vector2<f64>> = sol.inputs.iter().map(|u| u.to_vector()).collect();
    LqOutcome {
        state_error,
        objective_gap: lq.objective(&u_ilqr) - lq.objective(&u_star),
        accepted_steps: sol.cost_trace.len() - 1,
    }
}

/// A bicycle subproblem near an obstacle with the barrier-heavy defaults.
fn random_bicycle_problem(rng: &mut impl Rng) -> (State, State, ConstraintWindow, usize) {
    let n = rng.gen_range(1..=6);
    let x0 = State::new(rng.gen_range(0.0..20.0), rng.gen_range(-4.0..4.0), rng.gen_range(0.0..10.0), rng.gen_range(-0.5..0.5));
    let target = State::new(x0.x + rng.gen_range(0.0..40.0), rng.gen_range(-4.0..4.0), rng.gen_range(0.0..10.0), 0.0);
    let pose = ObstaclePose {
        shape: if rng.gen_bool(0.5) {
            Shape::Circle { radius: rng.gen_range(2.0..8.0) }
        } else {
            Shape::Ellipse { a: rng.gen_range(4.0..12.0), b: rng.gen_range(2.0..6.0) }
        },
        center: [x0.x + rng.gen_range(5.0..30.0), rng.gen_range(-10.0..10.0)],
        margin: 0.5,
    };
    let window = ConstraintWindow { steps: vec![vec![pose]; n], input_bounds: Some(InputBounds::default()) };
    (x0, target, window, n)
}

/// Norm-wise relative error of the adjoint gradient of the total cost with
/// respect to the input sequence, against central differences.
pub fn cost_gradient_error(rng: &mut impl Rng) -> f64 {
    let p = ModelParams::default();
    let (x0, target, window, n) = random_bicycle_problem(rng);
    let cfg = IlqrConfig { horizon: n, ..Default::default() };
    let problem = IlqrProblem { dynamics: &p, initial_state: x0, target, window: &window, config: &cfg };
    let inputs: Vec<Input> = (0..n).map(|_| Input::new(rng.gen_range(-1.9..1.9), rng.gen_range(-0.6..0.6))).collect();
    let states = dynamics::rollout(x0, &inputs, &p);
    let analytic = ilqr::cost_gradient(&states, &inputs, &problem);

    let flat = DVector::from_iterator(2 * n, inputs.iter().flat_map(|u| [u.a, u.delta]));
    let cost = |v: &DVector<f64>| {
        let us: Vec<Input> = (0..n).map(|k| Input::new(v[2 * k], v[2 * k + 1])).collect();
        let xs = dynamics::rollout(x0, &us, &p);
        DVector::from_element(1, ilqr::total_cost(&xs, &us, &problem))
    };
    let fd = fd_jacobian(cost, &flat, 1e-6);
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for k in 0..n {
        for c in 0..2 {
            diff = diff.max((analytic[k][c] - fd[(0, 2 * k + c)]).abs());
            scale = scale.max(analytic[k][c].abs()).max(fd[(0, 2 * k + c)].abs());
        }
    }
    diff / scale.max(1e-8)
}

/// Worst relative error of the exact barrier Hessian and the input-cost
/// Hessian against differences of their analytic gradients.
pub fn cost_hessian_error(rng: &mut impl Rng) -> f64 {
    let cfg = IlqrConfig::default();
    let (x0, _, window, _) = random_bicycle_problem(rng);
    let poses = &window.steps[0];
    let x = x0.to_vector() + Vector4::new(rng.gen_range(0.0..30.0), rng.gen_range(-6.0..6.0), 0.0, 0.0);
    let (_, _, h) = ilqr::state_barrier(&x, poses, &cfg, Curvature::Exact);
    let grad = |v: &DVector<f64>| {
        let g = ilqr::state_barrier(&Vector4::new(v[0], v[1], v[2], v[3]), poses, &cfg, Curvature::Exact).1;
        DVector::from_column_slice(g.as_slice())
    };
    let fd = fd_jacobian(grad, &DVector::from_column_slice(x.as_slice()), 1e-6);
    let scale = h.abs().max().max(1e-8);
    let mut worst = (0..16).map(|i| (h[i] - fd[i]).abs()).fold(0.0, f64::max) / scale;

    let u = Vector2::new(rng.gen_range(-1.9..1.9), rng.gen_range(-1.5..1.5));
    let bounds = InputBounds::default();
    let (_, _, hu) = ilqr::input_cost(&u, Some(&bounds), &cfg);
    let grad_u = |v: &DVector<f64>| {
        let g = ilqr::input_cost(&Vector2::new(v[0], v[1]), Some(&bounds), &cfg).1;
        DVector::from_column_slice(g.as_slice())
    };
    let fd = fd_jacobian(grad_u, &DVector::from_column_slice(u.as_slice()), 1e-6);
    let scale = hu.abs().max().max(1e-8);
    worst = worst.max((0..4).map(|i| (hu[i] - fd[i]).abs()).fold(0.0, f64::max) / scale);
    worst
}

fn grid(rng: &mut impl Rng) -> f64 {
    rng.gen_range(-4..=4) as f64 * 0.5
}

/// Build a random history, query it and compare with the exhaustive scan.
/// Coordinates are drawn from a coarse grid so ties are common.
pub fn knn_case(rng: &mut impl Rng) -> bool {
    let window = rng.gen_range(1..=3);
    let target = State::default();
    let mut history = HistorySet::new(window, target, 2.0);
    let iterations = rng.gen_range(1..=4);
    for i in 0..iterations {
        let len = rng.gen_range(1..200 / iterations);
        let mut states: Vec<State> = (0..len).map(|_| State::new(grid(rng), grid(rng), grid(rng), grid(rng))).collect();
        states.push(target);
        let inputs = vec![Input::ZERO; len];
        history.record_iteration(i, states, inputs).expect("final state is the target");
    }
    let visible: Vec<Stored> = history
        .visible()
        .iter()
        .flat_map(|r| r.states.iter().enumerate().map(move |(t, s)| (r.iteration_index, t, [s.x, s.y, s.v, s.theta])))
        .collect();
    let k = rng.gen_range(1..=10).min(visible.len());
    let weights = [rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0), rng.gen_range(0.01..2.0)];
    let guide = [grid(rng), grid(rng), grid(rng), grid(rng)];

    let got = history
        .k_nearest(&State::new(guide[0], guide[1], guide[2], guide[3]), k, &DistanceWeights(weights))
        .expect("k is at most the visible count");
    let mut got: Vec<(usize, usize)> = got.iter().map(|c| (c.source.iteration, c.source.time)).collect();
    let mut want = knn_scan(&visible, guide, k, weights);
    got.sort_unstable();
    want.sort_unstable();
    got == want
}
