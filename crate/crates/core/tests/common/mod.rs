//! Random instances and independent reference computations shared by the
//! integration suites. Nothing here calls into the library's numerics.
#![allow(dead_code)]

use congestion_core::theory::compute_constants;
use congestion_core::{AgentSpec, Bundle, CongestionGame, LossPolynomial};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random game with `resources` resources, `agents` agents, 1..=max_bundles
/// distinct bundles per agent, masses in [0.5, 3], coefficients in [0, 1].
pub fn random_game(rng: &mut ChaCha8Rng, resources: usize, agents: usize, max_bundles: usize) -> CongestionGame {
    let losses = (0..resources)
        .map(|_| LossPolynomial::new(rng.gen(), rng.gen(), rng.gen()).unwrap())
        .collect();
    let capacities = (0..resources).map(|_| rng.gen_range(0.5..4.0)).collect();
    let specs = (0..agents)
        .map(|_| {
            let want = rng.gen_range(1..=max_bundles);
            let mut sets: Vec<Vec<usize>> = Vec::new();
            for _ in 0..want * 20 {
                if sets.len() == want {
                    break;
                }
                let mut set: Vec<usize> = (0..resources).filter(|_| rng.gen_bool(0.4)).collect();
                if set.is_empty() {
                    set.push(rng.gen_range(0..resources));
                }
                if !sets.contains(&set) {
                    sets.push(set);
                }
            }
            let bundles = sets.iter().map(|s| Bundle::from_indices(s).unwrap()).collect();
            AgentSpec::new(rng.gen_range(0.5..3.0), bundles).unwrap()
        })
        .collect();
    CongestionGame::new(capacities, losses, specs).unwrap()
}

/// Uniform point on the simplex of dimension `k` (normalized exponentials).
pub fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln() + 1e-3).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn random_strategies(rng: &mut ChaCha8Rng, game: &CongestionGame) -> Vec<Vec<f64>> {
    game.agents().iter().map(|a| random_simplex(rng, a.n_bundles())).collect()
}

/// `φ_r = Σ_i m_i Σ_{P ∋ r} μ_{i,P}`, by walking bundle members.
pub fn loads(game: &CongestionGame, strategies: &[Vec<f64>]) -> Vec<f64> {
    let mut phi = vec![0.0; game.n_resources()];
    for (agent, mu) in game.agents().iter().zip(strategies) {
        for (bundle, w) in agent.bundles().iter().zip(mu) {
            for r in bundle.resources() {
                phi[r.index()] += agent.mass() * w;
            }
        }
    }
    phi
}

fn loss(game: &CongestionGame, r: usize, u: f64) -> f64 {
    let l = game.losses()[r];
    l.a2 * u * u + l.a1 * u + l.a0
}

/// `Σ_r a2 φ³/3 + a1 φ²/2 + a0 φ`.
pub fn potential(game: &CongestionGame, strategies: &[Vec<f64>]) -> f64 {
    loads(game, strategies)
        .iter()
        .zip(game.losses())
        .map(|(&u, l)| l.a2 * u * u * u / 3.0 + l.a1 * u * u / 2.0 + l.a0 * u)
        .sum()
}

pub fn bundle_losses(game: &CongestionGame, strategies: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let phi = loads(game, strategies);
    game.agents()
        .iter()
        .map(|a| {
            a.bundles()
                .iter()
                .map(|b| b.resources().iter().map(|r| loss(game, r.index(), phi[r.index()])).sum())
                .collect()
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exhaustive grid search of the potential over the capacity-feasible part
/// of a single agent's simplex (2 or 3 bundles).
pub fn grid_minimize_single_agent(game: &CongestionGame, step: f64) -> Option<Vec<f64>> {
    assert_eq!(game.n_agents(), 1);
    let k = game.agents()[0].n_bundles();
    let steps = (1.0 / step).round() as usize;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut consider = |mu: Vec<f64>| {
        let s = vec![mu.clone()];
        let feasible = loads(game, &s)
            .iter()
            .zip(game.capacities())
            .all(|(p, c)| *p <= c + 1e-12);
        if feasible {
            let v = potential(game, &s);
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, mu));
            }
        }
    };
    match k {
        2 => {
            for a in 0..=steps {
                let x = a as f64 / steps as f64;
                consider(vec![x, 1.0 - x]);
            }
        }
        3 => {
            for a in 0..=steps {
                for b in 0..=(steps - a) {
                    let x = a as f64 / steps as f64;
                    let y = b as f64 / steps as f64;
                    consider(vec![x, y, (1.0 - x - y).max(0.0)]);
                }
            }
        }
        _ => panic!("grid search supports 2 or 3 bundles"),
    }
    best.map(|(_, mu)| mu)
}

/// Single agent, mass 1, one resource per bundle, linear losses.
pub fn parallel_links(capacities: Vec<f64>) -> CongestionGame {
    let k = capacities.len();
    let bundles = (0..k).map(|r| Bundle::from_indices(&[r]).unwrap()).collect();
    CongestionGame::new(
        capacities,
        vec![LossPolynomial::linear(); k],
        vec![AgentSpec::new(1.0, bundles).unwrap()],
    )
    .unwrap()
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// `‖[Σ_{τ<k} Γ(τ)]₊‖₂` from a list of per-round excess vectors.
pub fn acv_from_excess(excess: &[Vec<f64>], k: usize) -> f64 {
    let r = excess.first().map_or(0, Vec::len);
    (0..r)
        .map(|j| excess[..k].iter().map(|e| e[j]).sum::<f64>().max(0.0).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Samples (μ, λ) and checks the three defining inequalities; returns the
/// number of violations.
pub fn constant_violations(game: &CongestionGame, samples: usize, seed: u64) -> usize {
    let k = compute_constants(game);
    let mut r = rng(seed);
    let mut bad = 0;
    for _ in 0..samples {
        let s = random_strategies(&mut r, game);
        let scale = 10f64.powf(r.gen_range(-2.0..2.0));
        let lam: Vec<f64> = (0..game.n_resources())
            .map(|_| if r.gen_bool(0.3) { 0.0 } else { scale * r.gen::<f64>() })
            .collect();
        let lam_sq: f64 = lam.iter().map(|x| x * x).sum();
        let lhs1: f64 = game
            .agents()
            .iter()
            .map(|a| {
                let m = a
                    .bundles()
                    .iter()
                    .map(|b| b.resources().iter().map(|r| lam[r.index()]).sum::<f64>())
                    .fold(0.0, f64::max);
                a.mass() * m * m
            })
            .sum();
        let losses = bundle_losses(game, &s);
        let lhs2: f64 = game
            .agents()
            .iter()
            .zip(&losses)
            .map(|(a, l)| {
                let m = l.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
                a.mass() * m * m
            })
            .sum();
        let phi = loads(game, &s);
        let lhs3 = phi
            .iter()
            .zip(game.capacities())
            .map(|(p, c)| (p - c).powi(2))
            .sum::<f64>()
            .sqrt();
        bad += usize::from(lhs1 > k.c1 * k.c1 * lam_sq)
            + usize::from(lhs2 > k.c2 * k.c2)
            + usize::from(lhs3 > k.c3);
    }
    bad
}

