//! Agent-side learning: cumulative scores driven by noisy losses plus
//! prices, mapped to mixed strategies by a choice map (logit or Euclidean
//! projection).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{structural, Error, Result};
use crate::game::{CongestionGame, IncidenceMatrix, PopulationProfile};
use crate::pricing::PriceVector;

/// Stream offset for per-agent noise; stream 0 of a seed is reserved for
/// instance generation.
const NOISE_STREAM_OFFSET: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChoiceMap {
    #[default]
    Logit,
    EuclideanProjection,
}

impl ChoiceMap {
    pub fn apply(self, y: &[f64]) -> Result<Vec<f64>> {
        match self {
            ChoiceMap::Logit => logit_choice(y),
            ChoiceMap::EuclideanProjection => euclidean_choice(y),
        }
    }
}

fn check_finite(y: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(structural("choice map needs a non-empty score vector"));
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite score {v}")));
    }
    Ok(())
}

/// Softmax of `y`, evaluated after subtracting `max(y)`.
pub fn logit_choice(y: &[f64]) -> Result<Vec<f64>> {
    check_finite(y)?;
    let top = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = y.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

/// Euclidean projection of `y` onto the probability simplex, i.e. the
/// maximizer of `⟨μ, y⟩ − ½‖μ‖²` over the simplex.
pub fn euclidean_choice(y: &[f64]) -> Result<Vec<f64>> {
    check_finite(y)?;
    let mut sorted = y.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    Ok(y.iter().map(|v| (v - theta).max(0.0)).collect())
}

/// Price per unit of task of each bundle: `π_P = Σ_{r∈P} Λ_r`.
pub fn bundle_price(incidence: &IncidenceMatrix, prices: &[f64]) -> Result<Vec<f64>> {
    if prices.len() != incidence.rows() {
        return Err(structural(format!(
            "{} prices for an incidence matrix with {} resources",
            prices.len(),
            incidence.rows()
        )));
    }
    if let Some(p) = prices.iter().find(|p| p.is_nan() || **p < 0.0) {
        return Err(Error::Contract(format!("negative price {p}")));
    }
    Ok(incidence.transpose_apply(prices))
}

/// Cumulative bundle scores of every agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreState {
    scores: Vec<Vec<f64>>,
}

impl ScoreState {
    pub fn zeros(game: &CongestionGame) -> Self {
        Self {
            scores: game.agents().iter().map(|a| vec![0.0; a.n_bundles()]).collect(),
        }
    }

    pub fn new(game: &CongestionGame, scores: Vec<Vec<f64>>) -> Result<Self> {
        let state = Self { scores };
        state.check(game)?;
        if state.scores.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("scores must be finite".into()));
        }
        Ok(state)
    }

    pub fn scores(&self) -> &[Vec<f64>] {
        &self.scores
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.scores[i]
    }

    fn check(&self, game: &CongestionGame) -> Result<()> {
        if self.scores.len() != game.n_agents()
            || self
                .scores
                .iter()
                .zip(game.agents())
                .any(|(y, a)| y.len() != a.n_bundles())
        {
            return Err(structural("score state does not match the game's bundle counts"));
        }
        Ok(())
    }
}

/// `Y ← Y − γ(ℓ̂ + π)` for every agent and bundle.
pub fn score_update(
    state: &ScoreState,
    noisy_losses: &[Vec<f64>],
    bundle_prices: &[Vec<f64>],
    gamma: f64,
) -> Result<ScoreState> {
    let n = state.scores.len();
    if noisy_losses.len() != n || bundle_prices.len() != n {
        return Err(structural("score update inputs disagree on the agent count"));
    }
    let scores = state
        .scores
        .iter()
        .zip(noisy_losses.iter().zip(bundle_prices))
        .map(|(y, (l, p))| update_agent_scores(y, l, p, gamma))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreState { scores })
}

fn update_agent_scores(y: &[f64], losses: &[f64], prices: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if losses.len() != y.len() || prices.len() != y.len() {
        return Err(structural(format!(
            "score update with {} scores, {} losses, {} prices",
            y.len(),
            losses.len(),
            prices.len()
        )));
    }
    Ok(y.iter()
        .zip(losses.iter().zip(prices))
        .map(|(v, (l, p))| v - gamma * (l + p))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningConfig {
    pub gamma: f64,
    #[serde(default)]
    pub choice_map: ChoiceMap,
    /// Subtract each agent's maximum score after every update. Leaves the
    /// played strategies unchanged (both choice maps are shift-invariant).
    #[serde(default)]
    pub recenter: bool,
}

impl LearningConfig {
    pub fn new(gamma: f64, choice_map: ChoiceMap) -> Result<Self> {
        let config = Self {
            gamma,
            choice_map,
            recenter: false,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be non-negative, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    /// iid uniform on `[−half_width, half_width]`, zero mean.
    UniformIid { half_width: f64 },
}

/// Loss noise with one independent random stream per agent, so that the
/// draws do not depend on how agents are scheduled across threads.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    kind: NoiseKind,
    streams: Vec<ChaCha8Rng>,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, seed: u64, agents: usize) -> Result<Self> {
        if let NoiseKind::UniformIid { half_width } = kind {
            if !(half_width.is_finite() && half_width >= 0.0) {
                return Err(Error::Config(format!(
                    "noise half-width must be non-negative, got {half_width}"
                )));
            }
        }
        let streams = (0..agents)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(NOISE_STREAM_OFFSET + i as u64);
                rng
            })
            .collect();
        Ok(Self { kind, streams })
    }

    pub fn none(agents: usize) -> Self {
        Self::new(NoiseKind::None, 0, agents).expect("noise-free model is always valid")
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    /// Almost-sure bound on `‖ξ‖∞`.
    pub fn sup_norm_bound(&self) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::UniformIid { half_width } => half_width,
        }
    }
}

fn perturb(kind: NoiseKind, rng: &mut ChaCha8Rng, losses: &[f64]) -> Vec<f64> {
    match kind {
        NoiseKind::None => losses.to_vec(),
        NoiseKind::UniformIid { half_width } if half_width > 0.0 => losses
            .iter()
            .map(|l| l + rng.gen_range(-half_width..=half_width))
            .collect(),
        NoiseKind::UniformIid { .. } => losses.to_vec(),
    }
}

/// Everything produced by one round of the learning dynamics.
#[derive(Debug, Clone)]
pub struct HedgeRound {
    /// Scores after the update, `Y(k+1)`.
    pub state: ScoreState,
    /// Strategies played this round, `μ(k) = Φ(Y(k))`.
    pub profile: PopulationProfile,
    pub loads: Vec<f64>,
    /// Noise-free bundle losses at `μ(k)`.
    pub losses: Vec<Vec<f64>>,
    pub noisy_losses: Vec<Vec<f64>>,
    pub bundle_prices: Vec<Vec<f64>>,
}

/// One round: play `Φ(Y)`, observe noisy losses and the broadcast prices,
/// and update the scores.
pub fn hedge_round(
    game: &CongestionGame,
    state: &ScoreState,
    prices: &PriceVector,
    config: &LearningConfig,
    noise: &mut NoiseModel,
) -> Result<HedgeRound> {
    config.validate()?;
    state.check(game)?;
    if prices.len() != game.n_resources() {
        return Err(structural(format!(
            "{} prices for {} resources",
            prices.len(),
            game.n_resources()
        )));
    }
    if noise.streams.len() != game.n_agents() {
        return Err(structural("noise model built for a different agent count"));
    }

    let strategies = state
        .scores
        .par_iter()
        .map(|y| config.choice_map.apply(y))
        .collect::<Result<Vec<_>>>()?;
    let loads = game.loads_unchecked(&strategies);
    let resource_losses = game.resource_losses(&loads);
    let losses = game.bundle_losses_from_resource_losses(&resource_losses);
    let bundle_prices = game.agents().iter().map(|a| {
        a.bundles()
            .iter()
            .map(|b| b.iter().map(|r| prices.as_slice()[r.index()]).sum::<f64>())
            .collect::<Vec<f64>>()
    });
    let bundle_prices: Vec<Vec<f64>> = bundle_prices.collect();

    let kind = noise.kind;
    let updated = state
        .scores
        .par_iter()
        .zip(noise.streams.par_iter_mut())
        .zip(losses.par_iter().zip(bundle_prices.par_iter()))
        .map(|((y, rng), (l, p))| {
            let noisy = perturb(kind, rng, l);
            let mut next = update_agent_scores(y, &noisy, p, config.gamma)?;
            if config.recenter {
                let top = next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                next.iter_mut().for_each(|v| *v -= top);
            }
            Ok((next, noisy))
        })
        .collect::<Result<Vec<_>>>()?;
    let (scores, noisy_losses): (Vec<_>, Vec<_>) = updated.into_iter().unzip();

    Ok(HedgeRound {
        state: ScoreState { scores },
        profile: PopulationProfile::from_choice(strategies),
        loads,
        losses,
        noisy_losses,
        bundle_prices,
    })
}
