mod common;

use common::*;
use congestion_core::routing::{generate, RoutingParams};
use congestion_core::theory::{delta_interval, gamma_max, DeltaInterval};
use rand::Rng;

#[test]
fn constants_bound_sampled_quantities_on_random_games() {
    let mut r = rng(21);
    for seed in 0..5 {
        let game = random_game(&mut r, 6, 4, 4);
        assert_eq!(constant_violations(&game, 2000, seed), 0);
    }
}

#[test]
fn constants_bound_sampled_quantities_on_routing_games() {
    for seed in 0..3 {
        let game = generate(&RoutingParams::default(), seed).unwrap().game;
        assert_eq!(constant_violations(&game, 2000, seed), 0);
    }
}

fn condition(gamma: f64, c1: f64, delta: f64) -> f64 {
    c1 * c1 + gamma * gamma * delta * delta - delta / 2.0
}

#[test]
fn interval_endpoints_satisfy_the_step_condition() {
    let mut r = rng(8);
    for _ in 0..1000 {
        let c1 = 10f64.powf(r.gen_range(-1.0..1.5));
        let gamma = gamma_max(c1) * r.gen_range(1e-3..=1.0);
        match delta_interval(gamma, c1) {
            DeltaInterval::Feasible { lo, hi } => {
                assert!(lo <= hi);
                assert!(condition(gamma, c1, lo) <= 1e-12, "lo {lo}");
                assert!(condition(gamma, c1, hi) <= 1e-12, "hi {hi}");
                let mid = 0.5 * (lo + hi);
                assert!(condition(gamma, c1, mid) <= 1e-12);
            }
            DeltaInterval::Infeasible => panic!("γ = {gamma} ≤ 1/(4C₁) reported infeasible"),
        }
    }
}

#[test]
fn feasibility_switches_at_the_learning_rate_ceiling() {
    let mut r = rng(9);
    for _ in 0..1000 {
        let c1 = 10f64.powf(r.gen_range(-1.0..1.5));
        let g = gamma_max(c1);
        let gamma = g * r.gen_range(0.5..1.5);
        assert_eq!(delta_interval(gamma, c1).is_feasible(), gamma <= g);
        assert!(delta_interval(g, c1).is_feasible());
        assert!(!delta_interval(g + 1e-15_f64.max(g * 1e-15), c1).is_feasible());
    }
}
