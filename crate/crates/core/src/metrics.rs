//! Trajectory logs and the performance measures computed from them:
//! aggregated capacity violation (ACV), aggregated delay (AD), and the
//! certificate bounding ACV by the price history.

use serde::Serialize;

use crate::error::{structural, Error, Result};
use crate::game::PopulationProfile;
use crate::pricing::PriceVector;

/// Slack used when checking the price-dominance certificate.
pub const CERTIFICATE_SLACK: f64 = 1e-9;

/// What happened in one round `k`.
#[derive(Debug, Clone, Serialize)]
pub struct RoundRecord {
    pub profile: PopulationProfile,
    pub loads: Vec<f64>,
    pub excess: Vec<f64>,
    /// Prices broadcast to the agents in this round, `Λ(k)`.
    pub prices: PriceVector,
    /// Noise-free delays `Dᵢ(k)`.
    pub delays: Vec<f64>,
    pub noisy_losses: Vec<Vec<f64>>,
}

/// Rounds `0..n` plus the prices `Λ(n)` emitted after the last round.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryRecord {
    resources: usize,
    rounds: Vec<RoundRecord>,
    final_prices: PriceVector,
}

impl TrajectoryRecord {
    pub fn new(resources: usize) -> Self {
        Self {
            resources,
            rounds: Vec::new(),
            final_prices: PriceVector::zeros(resources),
        }
    }

    pub fn push(&mut self, round: RoundRecord) -> Result<()> {
        let r = self.resources;
        if round.loads.len() != r || round.excess.len() != r || round.prices.len() != r {
            return Err(structural("round record does not match the resource count"));
        }
        if round.delays.len() != round.profile.strategies().len() {
            return Err(structural("round record has one delay per agent"));
        }
        self.rounds.push(round);
        Ok(())
    }

    pub fn set_final_prices(&mut self, prices: PriceVector) -> Result<()> {
        if prices.len() != self.resources {
            return Err(structural("final prices do not match the resource count"));
        }
        self.final_prices = prices;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn resources(&self) -> usize {
        self.resources
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    pub fn final_prices(&self) -> &PriceVector {
        &self.final_prices
    }

    /// `Λ(k)` for `k ∈ [0, n]`.
    pub fn prices_at(&self, k: usize) -> Result<&PriceVector> {
        match k.cmp(&self.rounds.len()) {
            std::cmp::Ordering::Less => Ok(&self.rounds[k].prices),
            std::cmp::Ordering::Equal => Ok(&self.final_prices),
            std::cmp::Ordering::Greater => Err(structural(format!(
                "price index {k} beyond {} recorded rounds",
                self.rounds.len()
            ))),
        }
    }
}

fn positive_part_norm(cumulative: &[f64]) -> f64 {
    cumulative
        .iter()
        .map(|v| v.max(0.0).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `ACV(k) = ‖[Σ_{τ<k} Γ(τ)]₊‖₂`.
pub fn acv(traj: &TrajectoryRecord, k: usize) -> Result<f64> {
    if k > traj.len() {
        return Err(structural(format!(
            "ACV({k}) requested with {} recorded rounds",
            traj.len()
        )));
    }
    let cumulative = (0..traj.resources)
        .map(|r| traj.rounds[..k].iter().map(|rec| rec.excess[r]).sum())
        .collect::<Vec<f64>>();
    Ok(positive_part_norm(&cumulative))
}

/// `[ACV(1), ..., ACV(n)]`, accumulated in a single pass.
pub fn acv_series(traj: &TrajectoryRecord) -> Vec<f64> {
    let mut cumulative = vec![0.0; traj.resources];
    traj.rounds
        .iter()
        .map(|rec| {
            cumulative
                .iter_mut()
                .zip(&rec.excess)
                .for_each(|(c, g)| *c += g);
            positive_part_norm(&cumulative)
        })
        .collect()
}

/// `AD(k) = Σ_{τ=0}^{k} Σᵢ Dᵢ(τ)`; needs rounds `0..=k`.
pub fn ad(traj: &TrajectoryRecord, k: usize) -> Result<f64> {
    if k >= traj.len() {
        return Err(structural(format!(
            "AD({k}) needs {} rounds, {} recorded",
            k + 1,
            traj.len()
        )));
    }
    Ok(traj.rounds[..=k]
        .iter()
        .map(|rec| rec.delays.iter().sum::<f64>())
        .sum())
}

/// `[AD(0), ..., AD(n−1)]`.
pub fn ad_series(traj: &TrajectoryRecord) -> Vec<f64> {
    let mut total = 0.0;
    traj.rounds
        .iter()
        .map(|rec| {
            total += rec.delays.iter().sum::<f64>();
            total
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriceCertificate {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

fn check_zero_start(traj: &TrajectoryRecord) -> Result<()> {
    if let Some(first) = traj.rounds.first() {
        if first.prices.as_slice().iter().any(|&p| p != 0.0) {
            return Err(Error::Contract(
                "price certificate requires zero initial prices".into(),
            ));
        }
    }
    Ok(())
}

/// `ACV(k) ≤ (‖Λ(k)‖₂ + α Σ_{τ=1}^{k−1} ‖Λ(τ)‖₂) / β`.
pub fn price_certificate(
    traj: &TrajectoryRecord,
    k: usize,
    alpha: f64,
    beta: f64,
) -> Result<PriceCertificate> {
    check_zero_start(traj)?;
    let lhs = acv(traj, k)?;
    let discounted: f64 = (1..k).map(|t| traj.rounds[t].prices.norm()).sum();
    let rhs = (traj.prices_at(k)?.norm() + alpha * discounted) / beta;
    Ok(PriceCertificate {
        lhs,
        rhs,
        holds: lhs <= rhs + CERTIFICATE_SLACK,
    })
}

/// Certificate at every `k ∈ [1, n]`.
pub fn price_certificate_series(
    traj: &TrajectoryRecord,
    alpha: f64,
    beta: f64,
) -> Result<Vec<PriceCertificate>> {
    check_zero_start(traj)?;
    let acvs = acv_series(traj);
    let mut discounted = 0.0;
    (1..=traj.len())
        .map(|k| {
            if k >= 2 {
                discounted += traj.rounds[k - 1].prices.norm();
            }
            let lhs = acvs[k - 1];
            let rhs = (traj.prices_at(k)?.norm() + alpha * discounted) / beta;
            Ok(PriceCertificate {
                lhs,
                rhs,
                holds: lhs <= rhs + CERTIFICATE_SLACK,
            })
        })
        .collect()
}
