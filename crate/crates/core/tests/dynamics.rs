mod common;

use std::f64::consts::{FRAC_PI_2, PI};

use i2lqr::dynamics::{self, Input, ModelParams, State};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::checks::jacobian_error;

fn params() -> ModelParams {
    ModelParams::default()
}

#[test]
fn single_step_matches_scalar_formula() {
    let p = params();
    let s = dynamics::step(State::new(0.0, 0.0, 1.0, 0.0), Input::new(0.0, 0.3), &p);
    let beta = (p.lr / (p.lf + p.lr) * 0.3f64.tan()).atan();
    let expected = [beta.cos(), beta.sin(), 1.0, beta.sin() / p.lr];
    for (got, want) in [s.x, s.y, s.v, s.theta].into_iter().zip(expected) {
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn bang_profile_positions_accumulate() {
    let states = dynamics::rollout(
        State::default(),
        &[Input::new(2.0, 0.0), Input::new(2.0, 0.0), Input::new(-2.0, 0.0)],
        &params(),
    );
    let xs: Vec<f64> = states.iter().map(|s| s.x).collect();
    let vs: Vec<f64> = states.iter().map(|s| s.v).collect();
    assert_eq!(xs, vec![0.0, 0.0, 2.0, 6.0]);
    assert_eq!(vs, vec![0.0, 2.0, 4.0, 2.0]);
}

#[test]
fn jacobians_match_finite_differences_at_100_points() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let s = State::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), rng.gen_range(-30.0..30.0), rng.gen_range(-PI..PI));
        let u = Input::new(rng.gen_range(-2.0..2.0), rng.gen_range(-1.5..1.5));
        let err = jacobian_error(s, u, &p);
        assert!(err < 1e-5, "relative error {err} at {s:?}, {u:?}");
    }
}

fn state() -> impl Strategy<Value = State> {
    (-100.0..100.0, -100.0..100.0, -30.0..30.0, -PI..PI).prop_map(|(x, y, v, t)| State::new(x, y, v, t))
}

fn input() -> impl Strategy<Value = Input> {
    (-5.0..5.0, -3.0..3.0).prop_map(|(a, d)| Input::new(a, d))
}

proptest! {
    #[test]
    fn step_is_deterministic(s in state(), u in input()) {
        let p = params();
        let a = dynamics::step(s, u, &p);
        let b = dynamics::step(s, u, &p);
        prop_assert_eq!(a.x.to_bits(), b.x.to_bits());
        prop_assert_eq!(a.y.to_bits(), b.y.to_bits());
        prop_assert_eq!(a.v.to_bits(), b.v.to_bits());
        prop_assert_eq!(a.theta.to_bits(), b.theta.to_bits());
    }

    #[test]
    fn jacobian_consistency(s in state(), a in -2.0..2.0f64, d in -1.5..1.5f64) {
        prop_assert!(jacobian_error(s, Input::new(a, d), &params()) < 1e-5);
    }

    #[test]
    fn rollout_composes(x0 in state(), us in prop::collection::vec(input(), 0..12), split in 0usize..12) {
        let p = params();
        let split = split.min(us.len());
        let whole = dynamics::rollout(x0, &us, &p);
        let head = dynamics::rollout(x0, &us[..split], &p);
        let tail = dynamics::rollout(*head.last().unwrap(), &us[split..], &p);
        let glued: Vec<State> = head.iter().chain(&tail[1..]).copied().collect();
        prop_assert_eq!(whole, glued);
    }

    #[test]
    fn saturation_is_idempotent_and_admissible(a in -1e3..1e3f64, d in -1e2..1e2f64) {
        let once = dynamics::saturate(Input::new(a, d));
        prop_assert_eq!(dynamics::saturate(once), once);
        prop_assert!(once.is_admissible());
        prop_assert!(once.a.abs() <= 2.0 && once.delta.abs() <= FRAC_PI_2);
    }
}
