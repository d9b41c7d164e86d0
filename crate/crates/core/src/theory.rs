//! Analysis constants, step-size feasibility, and the expected-violation
//! bounds that simulated trajectories are compared against.
//!
//! The constants are closed-form upper bounds rather than tight values:
//!
//! * `C₁² = Σᵢ mᵢ · max_P |P|` (Cauchy–Schwarz on `Σ_{r∈P} λ_r`),
//! * `C₂² = Σᵢ mᵢ · (max_P Σ_{r∈P} ℓ_r(φ̄_r))²` with `φ̄_r` the load when every
//!   agent that can reach `r` puts all of its mass there,
//! * `C₃ = ‖max(φ̄ − L, L)‖₂`.

use serde::Serialize;

use crate::game::CongestionGame;
use crate::pricing::PricingConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub m_star: f64,
    pub delta_psi_sq: f64,
    pub phi_max: Vec<f64>,
    pub agents: usize,
}

impl GameConstants {
    /// `C̃₁ = √(2(C₂² + 2C₃²))`.
    pub fn c1_tilde(&self) -> f64 {
        (2.0 * (self.c2 * self.c2 + 2.0 * self.c3 * self.c3)).sqrt()
    }

    pub fn delta_psi(&self) -> f64 {
        self.delta_psi_sq.sqrt()
    }
}

pub fn compute_constants(game: &CongestionGame) -> GameConstants {
    let agents = game.agents();
    let m_star = agents.iter().map(|a| a.mass()).fold(0.0, f64::max);
    let c1_sq: f64 = agents
        .iter()
        .map(|a| a.mass() * a.max_bundle_size() as f64)
        .sum();

    let mut phi_max = vec![0.0; game.n_resources()];
    for agent in agents {
        let mut reachable = vec![false; game.n_resources()];
        for r in agent.bundles().iter().flat_map(|b| b.iter()) {
            reachable[r.index()] = true;
        }
        for (phi, hit) in phi_max.iter_mut().zip(reachable) {
            if hit {
                *phi += agent.mass();
            }
        }
    }

    let worst_losses = game.resource_losses(&phi_max);
    let c2_sq: f64 = agents
        .iter()
        .map(|a| {
            let worst = a
                .bundles()
                .iter()
                .map(|b| b.iter().map(|r| worst_losses[r.index()]).sum::<f64>())
                .fold(0.0, f64::max);
            a.mass() * worst * worst
        })
        .sum();

    let c3 = phi_max
        .iter()
        .zip(game.capacities())
        .map(|(phi, cap)| (phi - cap).max(*cap).powi(2))
        .sum::<f64>()
        .sqrt();

    let delta_psi_sq = 2.0
        * m_star
        * agents
            .iter()
            .map(|a| (a.n_bundles() as f64).ln())
            .sum::<f64>();

    GameConstants {
        c1: c1_sq.sqrt(),
        c2: c2_sq.sqrt(),
        c3,
        m_star,
        delta_psi_sq,
        phi_max,
        agents: agents.len(),
    }
}

/// Largest learning rate for which some `δ > 0` satisfies the step
/// condition: `1/(4C₁)`, or `+∞` when `C₁ = 0`.
pub fn gamma_max(c1: f64) -> f64 {
    if c1 == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (4.0 * c1)
    }
}

/// `(C₁² + γ²δ²) − δ/2`; the step condition asks for this to be `≤ 0`.
pub fn delta_condition(gamma: f64, c1: f64, delta: f64) -> f64 {
    (c1 * c1 + gamma * gamma * delta * delta) - delta / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DeltaInterval {
    Feasible { lo: f64, hi: f64 },
    Infeasible,
}

impl DeltaInterval {
    pub fn contains(&self, delta: f64) -> bool {
        match *self {
            DeltaInterval::Feasible { lo, hi } => lo <= delta && delta <= hi,
            DeltaInterval::Infeasible => false,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, DeltaInterval::Feasible { .. })
    }
}

/// Range of `δ` satisfying the step condition for a given `γ`.
///
/// Empty iff `γ > 1/(4C₁)`, i.e. `16γ²C₁² > 1`. The lower endpoint is computed as
/// `4C₁² / (1 + √(1 − 16γ²C₁²))` (same value as the textbook form, without
/// the cancellation), and both endpoints are moved inward by a few ulps if
/// rounding puts them just outside the condition.
pub fn delta_interval(gamma: f64, c1: f64) -> DeltaInterval {
    if gamma.is_nan() || gamma <= 0.0 {
        return DeltaInterval::Infeasible;
    }
    if gamma > gamma_max(c1) {
        return DeltaInterval::Infeasible;
    }
    let g2 = gamma * gamma;
    let root = (1.0 - 16.0 * g2 * c1 * c1).max(0.0).sqrt();
    let mut hi = (1.0 + root) / (4.0 * g2);
    let mut lo = 4.0 * c1 * c1 / (1.0 + root);
    if lo > hi {
        lo = hi;
    }
    for _ in 0..64 {
        if delta_condition(gamma, c1, hi) <= 0.0 || hi <= lo {
            break;
        }
        hi = hi.next_down();
    }
    for _ in 0..64 {
        if delta_condition(gamma, c1, lo) <= 0.0 || lo >= hi {
            break;
        }
        lo = lo.next_up();
    }
    DeltaInterval::Feasible { lo, hi }
}

/// Noise scale `σ` meeting `E‖ξ‖∞² ≤ σ²/(4m*N)` for noise bounded by
/// `half_width` almost surely.
pub fn uniform_noise_sigma(half_width: f64, m_star: f64, agents: usize) -> f64 {
    2.0 * half_width * (m_star * agents as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs {
    pub delta: f64,
    /// Step-size scale: `γ = c/√n`.
    pub c: f64,
    pub sigma: f64,
    pub lambda_star_norm: f64,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub gamma: f64,
    pub alpha: f64,
    /// Bound on `E[‖Λ(n) − λ*‖²/2]`.
    pub distance_bound: f64,
    /// Bound on `E[‖Λ(n)‖₂]`.
    pub price_norm_bound: f64,
    pub violation_constant: f64,
    /// Bound on `E[ACV(n)]`.
    pub acv_bound: f64,
    pub preconditions_met: bool,
    pub reasons: Vec<String>,
}

/// Evaluates the expected-violation bounds for `γ = c/√n`, `β = γ` and
/// `α = δγ²`. When `pricing` is given, it is checked against those choices.
pub fn violation_bounds(
    constants: &GameConstants,
    inputs: &BoundInputs,
    pricing: Option<&PricingConfig>,
) -> BoundReport {
    let BoundInputs {
        delta,
        c,
        sigma,
        lambda_star_norm,
        horizon,
    } = *inputs;
    let n = horizon as f64;
    let sqrt_n = n.sqrt();
    let gamma = c / sqrt_n;
    let alpha = delta * gamma * gamma;
    let c1_tilde = constants.c1_tilde();
    let lam_sq = lambda_star_norm * lambda_star_norm;

    let distance_bound = constants.delta_psi_sq / 2.0
        + (1.0 + alpha * n) * lam_sq / 2.0
        + c1_tilde * c1_tilde / 2.0 * gamma * gamma * n
        + gamma * gamma * n * sigma * sigma / 2.0;
    let price_norm_bound = constants.delta_psi()
        + (1.0 + (1.0 + delta * gamma * gamma * n).sqrt()) * lambda_star_norm
        + (c1_tilde + sigma) * gamma * sqrt_n;
    let violation_constant = constants.delta_psi()
        + (1.0 + (1.0 + delta * c * c).sqrt()) * lambda_star_norm
        + (c1_tilde + sigma) * c;
    let acv_bound = (delta * c + 1.0 / c) * violation_constant * sqrt_n;

    let mut reasons = Vec::new();
    if c.is_nan() || c <= 0.0 || horizon == 0 {
        reasons.push(format!("need c > 0 and n ≥ 1, got c = {c}, n = {horizon}"));
    }
    let interval = delta_interval(gamma, constants.c1);
    match interval {
        DeltaInterval::Infeasible => reasons.push(format!(
            "γ = {gamma} exceeds 1/(4C₁) = {}",
            gamma_max(constants.c1)
        )),
        DeltaInterval::Feasible { lo, hi } if !interval.contains(delta) => {
            reasons.push(format!("δ = {delta} outside [{lo}, {hi}]"))
        }
        DeltaInterval::Feasible { .. } => {}
    }
    if !(delta > 0.0 && delta * gamma * gamma < 1.0) {
        reasons.push(format!("δ = {delta} outside (0, 1/γ²)"));
    }
    if let Some(p) = pricing {
        if (p.beta - gamma).abs() > 1e-12 * gamma.max(1e-300) {
            reasons.push(format!("β = {} differs from γ = {gamma}", p.beta));
        }
        if (p.alpha - alpha).abs() > 1e-12 * alpha.max(1e-300) {
            reasons.push(format!("α = {} differs from δγ² = {alpha}", p.alpha));
        }
        if !p.analysis_range_ok() {
            reasons.push(format!("α = {} outside (0, 1]", p.alpha));
        }
    }

    BoundReport {
        gamma,
        alpha,
        distance_bound,
        price_norm_bound,
        violation_constant,
        acv_bound,
        preconditions_met: reasons.is_empty(),
        reasons,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{AgentSpec, Bundle, LossPolynomial};

    fn agent(mass: f64, bundles: &[&[usize]]) -> AgentSpec {
        AgentSpec::new(
            mass,
            bundles.iter().map(|b| Bundle::from_indices(b).unwrap()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn c1_from_bundle_sizes() {
        let game = CongestionGame::new(
            vec![1.0; 3],
            vec![LossPolynomial::linear(); 3],
            vec![agent(2.0, &[&[0], &[0, 1, 2]])],
        )
        .unwrap();
        let k = compute_constants(&game);
        assert!((k.c1 * k.c1 - 6.0).abs() < 1e-12);
        assert_eq!(k.m_star, 2.0);
        assert_eq!(k.phi_max, vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn entropy_spread() {
        let game = CongestionGame::new(
            vec![1.0; 4],
            vec![LossPolynomial::linear(); 4],
            vec![agent(1.0, &[&[0], &[1], &[2], &[3]])],
        )
        .unwrap();
        let k = compute_constants(&game);
        assert!((k.delta_psi_sq - 2.0 * 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn c2_c3_hand_values() {
        // φ̄ = (3, 1); ℓ(u) = u; agent bundle worst losses: a: 3, b: max(3, 4) = 4.
        let game = CongestionGame::new(
            vec![2.0, 5.0],
            vec![LossPolynomial::linear(); 2],
            vec![agent(2.0, &[&[0]]), agent(1.0, &[&[0], &[0, 1]])],
        )
        .unwrap();
        let k = compute_constants(&game);
        assert_eq!(k.phi_max, vec![3.0, 1.0]);
        assert!((k.c2 * k.c2 - (2.0 * 9.0 + 16.0)).abs() < 1e-12);
        // max(3−2, 2) = 2, max(1−5, 5) = 5.
        assert!((k.c3 - 29f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn gamma_max_examples() {
        assert_eq!(gamma_max(2.0), 0.125);
        assert_eq!(gamma_max(0.25), 1.0);
        assert!((gamma_max(6f64.sqrt()) - 0.10206207261596575).abs() < 1e-15);
        assert_eq!(gamma_max(0.0), f64::INFINITY);
    }

    #[test]
    fn interval_collapses_at_boundary() {
        assert_eq!(delta_interval(0.25, 1.0), DeltaInterval::Feasible { lo: 4.0, hi: 4.0 });
        assert_eq!(delta_condition(0.25, 1.0, 4.0), 0.0);
    }

    #[test]
    fn interval_endpoints_satisfy_condition() {
        let DeltaInterval::Feasible { lo, hi } = delta_interval(0.1, 1.0) else {
            panic!("expected feasible interval");
        };
        let root = 0.84f64.sqrt();
        assert!((lo - (1.0 - root) / 0.04).abs() < 1e-9);
        assert!((hi - (1.0 + root) / 0.04).abs() < 1e-9);
        assert!(delta_condition(0.1, 1.0, lo) <= 1e-12);
        assert!(delta_condition(0.1, 1.0, hi) <= 1e-12);
    }

    #[test]
    fn infeasible_above_gamma_max() {
        assert_eq!(delta_interval(1.0, 1.0), DeltaInterval::Infeasible);
        assert_eq!(delta_interval(0.0, 1.0), DeltaInterval::Infeasible);
    }

    #[test]
    fn noise_sigma_from_support() {
        assert!((uniform_noise_sigma(0.01, 20.0, 10) - 0.02 * 200f64.sqrt()).abs() < 1e-15);
    }

    fn consts() -> GameConstants {
        GameConstants {
            c1: 1.0,
            c2: 0.5,
            c3: 1.5,
            m_star: 1.0,
            delta_psi_sq: 2.0 * 2f64.ln(),
            phi_max: vec![1.0, 1.0],
            agents: 1,
        }
    }

    #[test]
    fn noise_free_zero_dual_specialization() {
        let k = consts();
        let inputs = BoundInputs {
            delta: 3.0,
            c: 0.5,
            sigma: 0.0,
            lambda_star_norm: 0.0,
            horizon: 400,
        };
        let report = violation_bounds(&k, &inputs, None);
        let a = k.delta_psi() + k.c1_tilde() * 0.5;
        assert!((report.violation_constant - a).abs() < 1e-12);
        assert!((report.acv_bound - (3.0 * 0.5 + 2.0) * a * 20.0).abs() < 1e-9);
        // With γ = c/√n the price-norm bound equals A.
        assert!((report.price_norm_bound - report.violation_constant).abs() < 1e-12);
        assert!(report.preconditions_met, "{:?}", report.reasons);
    }

    #[test]
    fn preconditions_flag_mismatches() {
        let k = consts();
        let inputs = BoundInputs {
            delta: 1000.0,
            c: 0.5,
            sigma: 0.0,
            lambda_star_norm: 0.2,
            horizon: 400,
        };
        let gamma = 0.5 / 20.0;
        let pricing = PricingConfig::new(1e-5, 10.0 * gamma).unwrap();
        let report = violation_bounds(&k, &inputs, Some(&pricing));
        assert!(!report.preconditions_met);
        assert_eq!(report.reasons.len(), 3, "{:?}", report.reasons);

        let good = PricingConfig::new(3.0 * gamma * gamma, gamma).unwrap();
        let inputs = BoundInputs { delta: 3.0, ..inputs };
        assert!(violation_bounds(&k, &inputs, Some(&good)).preconditions_met);
    }
}
