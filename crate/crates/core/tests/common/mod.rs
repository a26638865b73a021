//! Brute-force reference implementations for the integration and acceptance
//! suites. Nothing here calls into the library's numerics.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix4, Matrix4x2, Vector2, Vector4};
use rand::Rng;

/// Target tolerance the runner uses for the bundled scenarios.
pub const RUNNER_EPSILON: f64 = 2.0;

/// One linear-quadratic instance:
/// `sum_k u_k' R u_k + sum_{k=1}^{N-1} e_k' Q e_k + e_N' P e_N` with
/// `e_k = x_k - z` and `x_{k+1} = A_k x_k + B_k u_k`. Weights are diagonal.
#[derive(Debug, Clone)]
pub struct LqInstance {
    pub a: Vec<Matrix4<f64>>,
    pub b: Vec<Matrix4x2<f64>>,
    pub r: [f64; 2],
    pub q: [f64; 4],
    pub p: [f64; 4],
    pub z: Vector4<f64>,
    pub x0: Vector4<f64>,
}

impl LqInstance {
    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    pub fn states(&self, inputs: &[Vector2<f64>]) -> Vec<Vector4<f64>> {
        let mut xs = vec![self.x0];
        for k in 0..self.horizon() {
            let next = self.a[k] * xs[k] + self.b[k] * inputs[k];
            xs.push(next);
        }
        xs
    }

    pub fn objective(&self, inputs: &[Vector2<f64>]) -> f64 {
        let xs = self.states(inputs);
        let n = self.horizon();
        let mut j = 0.0;
        for k in 0..n {
            j += self.r[0] * inputs[k][0].powi(2) + self.r[1] * inputs[k][1].powi(2);
        }
        for (k, x) in xs.iter().enumerate().skip(1) {
            let w = if k == n { &self.p } else { &self.q };
            j += (0..4).map(|i| w[i] * (x[i] - self.z[i]).powi(2)).sum::<f64>();
        }
        j
    }
}

/// Exact minimizer of an [`LqInstance`] by stacking every weighted residual
/// into one dense least-squares system over the input sequence.
pub fn qp_solve(lq: &LqInstance) -> Vec<Vector2<f64>> {
    let n = lq.horizon();
    let m = 2 * n;
    // rows: 4 per predicted state, 2 per input
    let rows = 4 * n + 2 * n;
    let mut g = DMatrix::<f64>::zeros(rows, m);
    let mut rhs = DVector::<f64>::zeros(rows);

    // x_k = Phi(k, 0) x0 + sum_{j<k} Phi(k, j+1) B_j u_j
    let phi = |to: usize, from: usize| -> Matrix4<f64> {
        let mut out = Matrix4::identity();
        for i in from..to {
            out = lq.a[i] * out;
        }
        out
    };
    for k in 1..=n {
        let w = if k == n { &lq.p } else { &lq.q };
        let free = phi(k, 0) * lq.x0 - lq.z;
        for i in 0..4 {
            let s = w[i].sqrt();
            let row = 4 * (k - 1) + i;
            rhs[row] = -s * free[i];
            for j in 0..k {
                let block = phi(k, j + 1) * lq.b[j];
                for c in 0..2 {
                    g[(row, 2 * j + c)] = s * block[(i, c)];
                }
            }
        }
    }
    for j in 0..n {
        for c in 0..2 {
            g[(4 * n + 2 * j + c, 2 * j + c)] = lq.r[c].sqrt();
        }
    }
    let sol = g.svd(true, true).solve(&rhs, 1e-14).expect("least-squares solve");
    (0..n).map(|j| Vector2::new(sol[2 * j], sol[2 * j + 1])).collect()
}

/// Random well-conditioned LQ instance of horizon `n`.
pub fn random_lq(rng: &mut impl Rng, n: usize) -> LqInstance {
    let mut mat4 = |scale: f64| Matrix4::from_fn(|_, _| rng.gen_range(-scale..scale));
    let a = Matrix4::identity() + mat4(0.3);
    let b = Matrix4x2::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    LqInstance {
        a: vec![a; n],
        b: vec![b; n],
        r: [rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0)],
        q: [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)],
        p: [rng.gen_range(1.0..10.0), rng.gen_range(1.0..10.0), rng.gen_range(1.0..10.0), rng.gen_range(1.0..10.0)],
        z: Vector4::from_fn(|_, _| rng.gen_range(-5.0..5.0)),
        x0: Vector4::from_fn(|_, _| rng.gen_range(-5.0..5.0)),
    }
}

/// Fewest Euler steps of a point mass with accelerations in `{-a_max, 0, +a_max}`
/// that ends within `epsilon` of `(distance, 0)` in `(position, speed)`.
///
/// Profiles are restricted to accelerate, coast, decelerate; see
/// [`min_time_exhaustive`] for the unrestricted check. `None` if no profile
/// within the search bound lands inside the tolerance.
pub fn min_time_bangbang_eps(distance: f64, a_max: f64, dt: f64, epsilon: f64) -> Option<usize> {
    assert!(distance >= 0.0 && a_max > 0.0 && dt > 0.0);
    // bounded search, about twice the triangular-profile time
    let cap = 2 * ((distance / (a_max * dt * dt)).sqrt().ceil() as usize) + 4;
    for steps in 0..=cap {
        for up in 0..=steps {
            for down in 0..=steps - up {
                let coast = steps - up - down;
                let (mut x, mut v) = (0.0f64, 0.0f64);
                let profile = std::iter::repeat(a_max)
                    .take(up)
                    .chain(std::iter::repeat(0.0).take(coast))
                    .chain(std::iter::repeat(-a_max).take(down));
                for a in profile {
                    x += dt * v;
                    v += dt * a;
                }
                if ((x - distance).powi(2) + v * v).sqrt() < epsilon {
                    return Some(steps);
                }
            }
        }
    }
    None
}

/// [`min_time_bangbang_eps`] at the runner's tolerance.
pub fn min_time_bangbang(distance: f64, a_max: f64, dt: f64) -> usize {
    min_time_bangbang_eps(distance, a_max, dt, RUNNER_EPSILON).expect("reachable at the runner tolerance")
}

/// Same question as [`min_time_bangbang_eps`] over all `3^T` profiles.
/// Only usable for short horizons.
pub fn min_time_exhaustive(distance: f64, a_max: f64, dt: f64, epsilon: f64, max_steps: usize) -> Option<usize> {
    for steps in 0..=max_steps {
        for code in 0..3usize.pow(steps as u32) {
            let (mut x, mut v, mut c) = (0.0f64, 0.0f64, code);
            for _ in 0..steps {
                let a = [-a_max, 0.0, a_max][c % 3];
                c /= 3;
                x += dt * v;
                v += dt * a;
            }
            if ((x - distance).powi(2) + v * v).sqrt() < epsilon {
                return Some(steps);
            }
        }
    }
    None
}

/// A stored state for [`knn_scan`]: iteration index, time index, state.
pub type Stored = (usize, usize, [f64; 4]);

/// Exhaustive K-nearest scan: score every stored state, sort fully, keep `k`.
/// Ties go to the later iteration, then the later time index.
pub fn knn_scan(stored: &[Stored], guide: [f64; 4], k: usize, weights: [f64; 4]) -> Vec<(usize, usize)> {
    let mut scored: Vec<(f64, usize, usize)> = stored
        .iter()
        .map(|&(it, t, s)| {
            let mut d = 0.0;
            for i in 0..4 {
                d += weights[i] * (s[i] - guide[i]) * (s[i] - guide[i]);
            }
            (d, it, t)
        })
        .collect();
    scored.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(b.1.cmp(&a.1))
            .then(b.2.cmp(&a.2))
    });
    scored.into_iter().take(k).map(|(_, it, t)| (it, t)).collect()
}

/// Central finite-difference Jacobian of `f: R^n -> R^m` at `x`.
pub fn fd_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, x.len());
    for j in 0..x.len() {
        let mut hi = x.clone();
        let mut lo = x.clone();
        hi[j] += h;
        lo[j] -= h;
        let col = (f(&hi) - f(&lo)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// Elementwise relative error with an absolute floor for near-zero entries.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Time-invariant linear system for driving the optimizer with LQ problems.
pub struct Linear {
    pub a: Matrix4<f64>,
    pub b: Matrix4x2<f64>,
}

impl i2lqr::dynamics::Dynamics for Linear {
    fn step(&self, x: &Vector4<f64>, u: &Vector2<f64>) -> Vector4<f64> {
        self.a * x + self.b * u
    }

    fn jacobians(&self, _: &Vector4<f64>, _: &Vector2<f64>) -> (Matrix4<f64>, Matrix4x2<f64>) {
        (self.a, self.b)
    }

    fn saturate(&self, u: &Vector2<f64>) -> Vector2<f64> {
        *u
    }
}
pub mod checks;
