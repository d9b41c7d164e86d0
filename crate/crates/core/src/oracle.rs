//! First-principles solvers for small instances: a Slater-point search and
//! the capacity-constrained minimizer of the Rosenthal potential together
//! with its dual prices. Solutions carry their own KKT residual.

use serde::Serialize;

use crate::dynamics::euclidean_choice;
use crate::error::Result;
use crate::game::{CongestionGame, PopulationProfile};
use crate::pricing::PriceVector;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 1_000_000;

/// Largest total bundle count the harness hands to the constrained solver.
pub const SMALL_INSTANCE_BUNDLES: usize = 12;

const MAX_OUTER: usize = 500;
const PENALTY: f64 = 10.0;
const DIVERGED_PRICE: f64 = 1e9;

type Strategies = Vec<Vec<f64>>;

fn project(strategies: &[Vec<f64>]) -> Strategies {
    strategies
        .iter()
        .map(|y| euclidean_choice(y).expect("iterates stay finite"))
        .collect()
}

fn step(mu: &[Vec<f64>], grad: &[Vec<f64>], t: f64) -> Strategies {
    let moved: Strategies = mu
        .iter()
        .zip(grad)
        .map(|(m, g)| m.iter().zip(g).map(|(a, b)| a - t * b).collect())
        .collect();
    project(&moved)
}

fn inner(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .sum()
}

fn diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> Strategies {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
        .collect()
}

fn sup_norm(a: &[Vec<f64>]) -> f64 {
    a.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
}

/// `(i, P) ↦ mᵢ Σ_{r∈P} w_r`.
fn pull_back(game: &CongestionGame, weights: &[f64]) -> Strategies {
    game.agents()
        .iter()
        .map(|a| {
            a.bundles()
                .iter()
                .map(|b| a.mass() * b.iter().map(|r| weights[r.index()]).sum::<f64>())
                .collect()
        })
        .collect()
}

/// Projected gradient with a backtracking (sufficient-decrease) step on a
/// smooth objective over the product of simplices. Stops when the
/// unit-step projected-gradient residual falls below `tol`, or after
/// `budget` iterations. Returns the iterate and iterations used.
fn projected_gradient<F>(
    mut mu: Strategies,
    objective: F,
    tol: f64,
    budget: usize,
) -> (Strategies, usize)
where
    F: Fn(&[Vec<f64>]) -> (f64, Strategies),
{
    let mut t = 1.0;
    for it in 0..budget {
        let (f, grad) = objective(&mu);
        if sup_norm(&diff(&mu, &step(&mu, &grad, 1.0))) <= tol {
            return (mu, it);
        }
        loop {
            let cand = step(&mu, &grad, t);
            let d = diff(&cand, &mu);
            let model = f + inner(&grad, &d) + inner(&d, &d) / (2.0 * t);
            if objective(&cand).0 <= model + 1e-15 * f.abs().max(1.0) || t < 1e-14 {
                mu = cand;
                t *= 2.0;
                break;
            }
            t *= 0.5;
        }
    }
    (mu, budget)
}

#[derive(Debug, Clone, Serialize)]
pub struct SlaterResult {
    pub satisfied: bool,
    pub witness: Option<PopulationProfile>,
    /// Smallest `max_r Γ_r` seen during the search.
    pub best_max_excess: f64,
}

fn max_excess(game: &CongestionGame, strategies: &[Vec<f64>]) -> f64 {
    game.excess_from_loads(&game.loads_unchecked(strategies))
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Looks for `μ̂` with `Γ(μ̂) ≤ −margin`: first the uniform profile, then a
/// projected-gradient descent on a log-sum-exp smoothing of `max_r Γ_r` at
/// decreasing temperatures. A negative answer means the search failed,
/// not that no such profile exists.
pub fn slater_check(game: &CongestionGame, margin: f64) -> SlaterResult {
    let uniform = PopulationProfile::uniform(game);
    let mut best = (max_excess(game, uniform.strategies()), uniform.strategies().to_vec());
    if best.0 <= -margin {
        return SlaterResult {
            satisfied: true,
            witness: Some(uniform),
            best_max_excess: best.0,
        };
    }

    let scale = game.capacities().iter().copied().fold(0.0, f64::max).max(1.0);
    let mut mu = best.1.clone();
    for temperature in [1e-1, 3e-2, 1e-2, 3e-3, 1e-3].map(|t| t * scale) {
        let smooth = |s: &[Vec<f64>]| {
            let excess = game.excess_from_loads(&game.loads_unchecked(s));
            let top = excess.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = excess.iter().map(|g| ((g - top) / temperature).exp()).collect();
            let z: f64 = w.iter().sum();
            let value = top + temperature * z.ln();
            let weights: Vec<f64> = w.iter().map(|x| x / z).collect();
            (value, pull_back(game, &weights))
        };
        let (next, _) = projected_gradient(mu, smooth, 1e-10, 2_000);
        mu = next;
        let m = max_excess(game, &mu);
        if m < best.0 {
            best = (m, mu.clone());
        }
        if best.0 <= -margin {
            break;
        }
    }

    let satisfied = best.0 <= -margin;
    SlaterResult {
        satisfied,
        witness: satisfied.then(|| PopulationProfile::from_choice(best.1)),
        best_max_excess: best.0,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PrimalDualSolution {
    pub mu_star: PopulationProfile,
    pub lambda_star: PriceVector,
    pub potential: f64,
    /// Max of primal infeasibility, complementary slackness and the
    /// projected-gradient stationarity residual of the Lagrangian.
    pub kkt_residual: f64,
    pub feasible: bool,
    pub converged: bool,
    pub iterations: usize,
}

/// Components of the KKT residual of `(μ, λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktResidual {
    pub infeasibility: f64,
    pub complementarity: f64,
    pub stationarity: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.infeasibility
            .max(self.complementarity)
            .max(self.stationarity)
    }
}

pub fn kkt_residual(
    game: &CongestionGame,
    profile: &PopulationProfile,
    lambda: &PriceVector,
) -> Result<KktResidual> {
    let excess = game.excess(profile)?;
    let infeasibility = excess.iter().fold(0.0, |m: f64, g| m.max(*g));
    let complementarity = excess
        .iter()
        .zip(lambda.as_slice())
        .fold(0.0, |m: f64, (g, l)| m.max((g * l).abs()));
    let (grad, _) = game.kkt_operator(profile, lambda.as_slice())?;
    let mu = profile.strategies();
    let stationarity = sup_norm(&diff(mu, &step(mu, &grad, 1.0)));
    Ok(KktResidual {
        infeasibility,
        complementarity,
        stationarity,
    })
}

/// Minimizes the potential over `{μ ∈ Δ : Γ(μ) ≤ 0}` by the method of
/// multipliers: each outer step minimizes the augmented Lagrangian by
/// projected gradient, then updates `λ ← [λ + ρΓ(μ)]₊`.
pub fn minimize_potential_constrained(
    game: &CongestionGame,
    tol: f64,
    max_iters: usize,
) -> Result<PrimalDualSolution> {
    let resources = game.n_resources();
    let mut mu = PopulationProfile::uniform(game).strategies().to_vec();
    let mut lambda = vec![0.0; resources];
    let mut used = 0;
    let inner_tol = tol * 0.1;
    let mut converged = false;

    for _ in 0..MAX_OUTER {
        if used >= max_iters {
            break;
        }
        let lam = lambda.clone();
        let augmented = |s: &[Vec<f64>]| {
            let loads = game.loads_unchecked(s);
            let shifted: Vec<f64> = lam
                .iter()
                .zip(game.excess_from_loads(&loads))
                .map(|(l, g)| (l + PENALTY * g).max(0.0))
                .collect();
            let penalty: f64 = shifted
                .iter()
                .zip(&lam)
                .map(|(s, l)| s * s - l * l)
                .sum::<f64>()
                / (2.0 * PENALTY);
            let value = game.potential_at_loads(&loads) + penalty;
            let weights: Vec<f64> = game
                .resource_losses(&loads)
                .iter()
                .zip(&shifted)
                .map(|(a, b)| a + b)
                .collect();
            (value, pull_back(game, &weights))
        };
        let (next, its) = projected_gradient(mu, augmented, inner_tol, max_iters - used);
        used += its.max(1);
        mu = next;

        let excess = game.excess_from_loads(&game.loads_unchecked(&mu));
        lambda
            .iter_mut()
            .zip(&excess)
            .for_each(|(l, g)| *l = (*l + PENALTY * g).max(0.0));

        let profile = PopulationProfile::from_choice(mu.clone());
        let residual = kkt_residual(game, &profile, &PriceVector::new(lambda.clone())?)?;
        if residual.max() <= tol {
            converged = true;
            break;
        }
        if lambda.iter().any(|l| *l > DIVERGED_PRICE) {
            break;
        }
    }

    let mu_star = PopulationProfile::from_choice(mu);
    let lambda_star = PriceVector::new(lambda)?;
    let residual = kkt_residual(game, &mu_star, &lambda_star)?;
    Ok(PrimalDualSolution {
        potential: game.potential(&mu_star)?,
        feasible: residual.infeasibility <= tol,
        kkt_residual: residual.max(),
        converged,
        iterations: used,
        mu_star,
        lambda_star,
    })
}
