//! Congestion-game instances and the quantities evaluated at a population
//! profile: loads, capacity excess, bundle losses, delays, and the Rosenthal
//! potential with its gradient.

use serde::{Deserialize, Serialize};

use crate::error::{structural, Error, Result};

/// Tolerance on the simplex constraint accepted when constructing a profile.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResourceId(pub usize);

impl ResourceId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A non-empty set of resources used jointly. Stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Bundle {
    resources: Vec<ResourceId>,
}

impl Bundle {
    pub fn new(resources: impl IntoIterator<Item = ResourceId>) -> Result<Self> {
        let mut resources: Vec<ResourceId> = resources.into_iter().collect();
        resources.sort_unstable();
        resources.dedup();
        if resources.is_empty() {
            return Err(structural("bundle must contain at least one resource"));
        }
        Ok(Self { resources })
    }

    pub fn from_indices(indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().copied().map(ResourceId))
    }

    pub fn contains(&self, r: ResourceId) -> bool {
        self.resources.binary_search(&r).is_ok()
    }

    pub fn len(&self) -> usize {
        self.resources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resources.is_empty()
    }

    pub fn resources(&self) -> &[ResourceId] {
        &self.resources
    }

    pub fn iter(&self) -> impl Iterator<Item = ResourceId> + '_ {
        self.resources.iter().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    mass: f64,
    bundles: Vec<Bundle>,
}

impl AgentSpec {
    pub fn new(mass: f64, bundles: Vec<Bundle>) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(structural(format!("agent mass must be positive, got {mass}")));
        }
        if bundles.is_empty() {
            return Err(structural("agent must have at least one bundle"));
        }
        for (a, first) in bundles.iter().enumerate() {
            if bundles[a + 1..].contains(first) {
                return Err(structural("agent bundles must be pairwise distinct"));
            }
        }
        Ok(Self { mass, bundles })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn bundles(&self) -> &[Bundle] {
        &self.bundles
    }

    pub fn n_bundles(&self) -> usize {
        self.bundles.len()
    }

    pub fn max_bundle_size(&self) -> usize {
        self.bundles.iter().map(Bundle::len).max().unwrap_or(0)
    }
}

/// Binary resource-by-bundle incidence of one agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidenceMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<bool>,
}

impl IncidenceMatrix {
    pub fn from_bundles(resources: usize, bundles: &[Bundle]) -> Self {
        let cols = bundles.len();
        let mut entries = vec![false; resources * cols];
        for (p, bundle) in bundles.iter().enumerate() {
            for r in bundle.iter() {
                entries[r.index() * cols + p] = true;
            }
        }
        Self {
            rows: resources,
            cols,
            entries,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, p: usize) -> bool {
        self.entries[r * self.cols + p]
    }

    pub fn column_sum(&self, p: usize) -> usize {
        (0..self.rows).filter(|&r| self.get(r, p)).count()
    }

    /// `Mᵀ x`: for each bundle, the sum of `x` over its resources.
    pub fn transpose_apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, &xr) in x.iter().enumerate().take(self.rows) {
            for (p, o) in out.iter_mut().enumerate() {
                if self.get(r, p) {
                    *o += xr;
                }
            }
        }
        out
    }
}

/// `ℓ(u) = a2·u² + a1·u + a0` with non-negative coefficients, hence convex and
/// non-decreasing on `u ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPolynomial {
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
}

impl LossPolynomial {
    pub fn new(a2: f64, a1: f64, a0: f64) -> Result<Self> {
        for (name, v) in [("a2", a2), ("a1", a1), ("a0", a0)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(structural(format!(
                    "loss coefficient {name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(Self { a2, a1, a0 })
    }

    pub fn linear() -> Self {
        Self {
            a2: 0.0,
            a1: 1.0,
            a0: 0.0,
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        (self.a2 * u + self.a1) * u + self.a0
    }

    /// `∫₀ᵘ ℓ(s) ds`.
    pub fn integral(&self, u: f64) -> f64 {
        ((self.a2 * u / 3.0 + self.a1 / 2.0) * u + self.a0) * u
    }

    pub fn derivative(&self, u: f64) -> f64 {
        2.0 * self.a2 * u + self.a1
    }
}

/// Immutable congestion-game instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GameDocument", into = "GameDocument")]
pub struct CongestionGame {
    agents: Vec<AgentSpec>,
    capacities: Vec<f64>,
    losses: Vec<LossPolynomial>,
}

impl CongestionGame {
    pub fn new(
        capacities: Vec<f64>,
        losses: Vec<LossPolynomial>,
        agents: Vec<AgentSpec>,
    ) -> Result<Self> {
        let resources = capacities.len();
        if resources == 0 {
            return Err(structural("a game needs at least one resource"));
        }
        if losses.len() != resources {
            return Err(structural(format!(
                "{} loss polynomials for {resources} resources",
                losses.len()
            )));
        }
        if let Some(c) = capacities.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(structural(format!("capacities must be positive, got {c}")));
        }
        if agents.is_empty() {
            return Err(structural("a game needs at least one agent"));
        }
        for (i, agent) in agents.iter().enumerate() {
            for bundle in agent.bundles() {
                if let Some(r) = bundle.iter().find(|r| r.index() >= resources) {
                    return Err(structural(format!(
                        "agent {i} references resource {} outside [0, {resources})",
                        r.index()
                    )));
                }
            }
        }
        Ok(Self {
            agents,
            capacities,
            losses,
        })
    }

    pub fn n_resources(&self) -> usize {
        self.capacities.len()
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    pub fn agent(&self, i: usize) -> Result<&AgentSpec> {
        self.agents
            .get(i)
            .ok_or_else(|| structural(format!("agent index {i} out of range")))
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    pub fn losses(&self) -> &[LossPolynomial] {
        &self.losses
    }

    pub fn total_bundles(&self) -> usize {
        self.agents.iter().map(AgentSpec::n_bundles).sum()
    }

    pub fn bundle_counts(&self) -> Vec<usize> {
        self.agents.iter().map(AgentSpec::n_bundles).collect()
    }

    pub fn incidence(&self, agent: usize) -> Result<IncidenceMatrix> {
        let spec = self.agent(agent)?;
        Ok(IncidenceMatrix::from_bundles(
            self.n_resources(),
            spec.bundles(),
        ))
    }

    /// Same game with every capacity replaced.
    pub fn with_capacities(&self, capacities: Vec<f64>) -> Result<Self> {
        Self::new(capacities, self.losses.clone(), self.agents.clone())
    }

    pub fn check_profile(&self, profile: &PopulationProfile) -> Result<()> {
        check_shape(self, profile.strategies())
    }

    /// `φ_r = Σᵢ Σ_{P∋r} mᵢ μ⁽ⁱ⁾_P`.
    pub fn resource_load(&self, profile: &PopulationProfile) -> Result<Vec<f64>> {
        self.check_profile(profile)?;
        Ok(self.loads_unchecked(profile.strategies()))
    }

    pub(crate) fn loads_unchecked(&self, strategies: &[Vec<f64>]) -> Vec<f64> {
        let mut loads = vec![0.0; self.n_resources()];
        for (agent, mu) in self.agents.iter().zip(strategies) {
            for (bundle, &w) in agent.bundles().iter().zip(mu) {
                let x = agent.mass() * w;
                for r in bundle.iter() {
                    loads[r.index()] += x;
                }
            }
        }
        loads
    }

    /// `Γ = φ − L`.
    pub fn excess(&self, profile: &PopulationProfile) -> Result<Vec<f64>> {
        let loads = self.resource_load(profile)?;
        Ok(self.excess_from_loads(&loads))
    }

    pub fn excess_from_loads(&self, loads: &[f64]) -> Vec<f64> {
        loads
            .iter()
            .zip(&self.capacities)
            .map(|(phi, cap)| phi - cap)
            .collect()
    }

    /// `ℓ_r(φ_r)` for every resource.
    pub fn resource_losses(&self, loads: &[f64]) -> Vec<f64> {
        self.losses
            .iter()
            .zip(loads)
            .map(|(loss, &phi)| loss.eval(phi))
            .collect()
    }

    /// Bundle losses of every agent, given the per-resource losses.
    pub fn bundle_losses_from_resource_losses(&self, resource_losses: &[f64]) -> Vec<Vec<f64>> {
        self.agents
            .iter()
            .map(|agent| agent_bundle_losses(agent, resource_losses))
            .collect()
    }

    pub fn bundle_losses(&self, profile: &PopulationProfile) -> Result<Vec<Vec<f64>>> {
        let loads = self.resource_load(profile)?;
        Ok(self.bundle_losses_from_resource_losses(&self.resource_losses(&loads)))
    }

    /// `ℓ⁽ⁱ⁾_P(μ) = Σ_{r∈P} ℓ_r(φ_r(μ))`.
    pub fn bundle_loss(
        &self,
        profile: &PopulationProfile,
        agent: usize,
        bundle: usize,
    ) -> Result<f64> {
        let spec = self.agent(agent)?;
        let bundle = spec.bundles().get(bundle).ok_or_else(|| {
            structural(format!("bundle index {bundle} out of range for agent {agent}"))
        })?;
        let loads = self.resource_load(profile)?;
        Ok(bundle
            .iter()
            .map(|r| self.losses[r.index()].eval(loads[r.index()]))
            .sum())
    }

    /// `Dᵢ(μ) = ⟨μ⁽ⁱ⁾, ℓ⁽ⁱ⁾(μ)⟩`.
    pub fn agent_delay(&self, profile: &PopulationProfile, agent: usize) -> Result<f64> {
        let spec = self.agent(agent)?;
        let loads = self.resource_load(profile)?;
        let losses = agent_bundle_losses(spec, &self.resource_losses(&loads));
        Ok(dot(&profile.strategies()[agent], &losses))
    }

    /// Rosenthal potential `V(μ) = Σ_r ∫₀^{φ_r} ℓ_r`.
    pub fn potential(&self, profile: &PopulationProfile) -> Result<f64> {
        let loads = self.resource_load(profile)?;
        Ok(self.potential_at_loads(&loads))
    }

    pub fn potential_at_loads(&self, loads: &[f64]) -> f64 {
        self.losses
            .iter()
            .zip(loads)
            .map(|(loss, &phi)| loss.integral(phi))
            .sum()
    }

    /// `∂V/∂μ⁽ⁱ⁾_P = mᵢ·ℓ⁽ⁱ⁾_P(μ)`.
    pub fn potential_gradient(&self, profile: &PopulationProfile) -> Result<Vec<Vec<f64>>> {
        let mut grad = self.bundle_losses(profile)?;
        for (g, agent) in grad.iter_mut().zip(&self.agents) {
            g.iter_mut().for_each(|x| *x *= agent.mass());
        }
        Ok(grad)
    }

    /// `M̃ᵀλ`: entry `(i, P)` is `mᵢ Σ_{r∈P} λ_r`.
    pub fn scaled_incidence_transpose(&self, lambda: &[f64]) -> Result<Vec<Vec<f64>>> {
        if lambda.len() != self.n_resources() {
            return Err(structural(format!(
                "price vector has length {}, game has {} resources",
                lambda.len(),
                self.n_resources()
            )));
        }
        Ok(self
            .agents
            .iter()
            .map(|agent| {
                agent
                    .bundles()
                    .iter()
                    .map(|b| agent.mass() * b.iter().map(|r| lambda[r.index()]).sum::<f64>())
                    .collect()
            })
            .collect())
    }

    /// The extended KKT operator `ṽ(μ, λ) = [∇V(μ) + M̃ᵀλ, L − M̃μ]`.
    pub fn kkt_operator(
        &self,
        profile: &PopulationProfile,
        lambda: &[f64],
    ) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let mut primal = self.potential_gradient(profile)?;
        let priced = self.scaled_incidence_transpose(lambda)?;
        for (p, q) in primal.iter_mut().zip(&priced) {
            p.iter_mut().zip(q).for_each(|(a, b)| *a += b);
        }
        let dual = self
            .resource_load(profile)?
            .iter()
            .zip(&self.capacities)
            .map(|(phi, cap)| cap - phi)
            .collect();
        Ok((primal, dual))
    }
}

fn agent_bundle_losses(agent: &AgentSpec, resource_losses: &[f64]) -> Vec<f64> {
    agent
        .bundles()
        .iter()
        .map(|b| b.iter().map(|r| resource_losses[r.index()]).sum())
        .collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_shape(game: &CongestionGame, strategies: &[Vec<f64>]) -> Result<()> {
    if strategies.len() != game.n_agents() {
        return Err(structural(format!(
            "profile has {} agents, game has {}",
            strategies.len(),
            game.n_agents()
        )));
    }
    for (i, (mu, agent)) in strategies.iter().zip(game.agents()).enumerate() {
        if mu.len() != agent.n_bundles() {
            return Err(structural(format!(
                "agent {i}: strategy has {} entries, agent has {} bundles",
                mu.len(),
                agent.n_bundles()
            )));
        }
    }
    Ok(())
}

/// One mixed strategy per agent; a point of the product of simplices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PopulationProfile {
    strategies: Vec<Vec<f64>>,
}

impl PopulationProfile {
    /// Validates shape and the simplex constraint (to [`SIMPLEX_TOL`]), then
    /// renormalizes each strategy exactly onto its simplex.
    pub fn new(game: &CongestionGame, strategies: Vec<Vec<f64>>) -> Result<Self> {
        check_shape(game, &strategies)?;
        let mut strategies = strategies;
        for (i, mu) in strategies.iter_mut().enumerate() {
            if let Some(x) = mu.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return Err(structural(format!(
                    "agent {i}: strategy entry {x} is not a non-negative number"
                )));
            }
            let total: f64 = mu.iter().sum();
            if (total - 1.0).abs() > SIMPLEX_TOL {
                return Err(structural(format!(
                    "agent {i}: strategy sums to {total}, expected 1"
                )));
            }
            mu.iter_mut().for_each(|x| *x /= total);
        }
        Ok(Self { strategies })
    }

    pub fn uniform(game: &CongestionGame) -> Self {
        let strategies = game
            .agents()
            .iter()
            .map(|a| vec![1.0 / a.n_bundles() as f64; a.n_bundles()])
            .collect();
        Self { strategies }
    }

    /// Wraps strategies produced by a choice map, which lands on the simplex
    /// by construction.
    pub(crate) fn from_choice(strategies: Vec<Vec<f64>>) -> Self {
        Self { strategies }
    }

    pub fn strategies(&self) -> &[Vec<f64>] {
        &self.strategies
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.strategies[i]
    }

    /// Componentwise convex combination `t·self + (1−t)·other`.
    pub fn mix(&self, other: &Self, t: f64) -> Result<Self> {
        if self.strategies.len() != other.strategies.len()
            || self
                .strategies
                .iter()
                .zip(&other.strategies)
                .any(|(a, b)| a.len() != b.len())
        {
            return Err(structural("profiles have different shapes"));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Contract(format!("mixing weight {t} outside [0, 1]")));
        }
        let strategies = self
            .strategies
            .iter()
            .zip(&other.strategies)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| t * x + (1.0 - t) * y).collect())
            .collect();
        Ok(Self { strategies })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AgentDocument {
    mass: f64,
    bundles: Vec<Vec<usize>>,
}

/// On-disk JSON layout of a game.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct GameDocument {
    resources: usize,
    capacities: Vec<f64>,
    losses: Vec<[f64; 3]>,
    agents: Vec<AgentDocument>,
}

impl TryFrom<GameDocument> for CongestionGame {
    type Error = Error;

    fn try_from(doc: GameDocument) -> Result<Self> {
        if doc.capacities.len() != doc.resources {
            return Err(structural(format!(
                "`resources` is {} but {} capacities given",
                doc.resources,
                doc.capacities.len()
            )));
        }
        let losses = doc
            .losses
            .iter()
            .map(|&[a2, a1, a0]| LossPolynomial::new(a2, a1, a0))
            .collect::<Result<Vec<_>>>()?;
        let agents = doc
            .agents
            .iter()
            .map(|a| {
                let bundles = a
                    .bundles
                    .iter()
                    .map(|b| Bundle::from_indices(b))
                    .collect::<Result<Vec<_>>>()?;
                AgentSpec::new(a.mass, bundles)
            })
            .collect::<Result<Vec<_>>>()?;
        CongestionGame::new(doc.capacities, losses, agents)
    }
}

impl From<CongestionGame> for GameDocument {
    fn from(game: CongestionGame) -> Self {
        GameDocument {
            resources: game.n_resources(),
            losses: game.losses.iter().map(|l| [l.a2, l.a1, l.a0]).collect(),
            agents: game
                .agents
                .iter()
                .map(|a| AgentDocument {
                    mass: a.mass,
                    bundles: a
                        .bundles
                        .iter()
                        .map(|b| b.iter().map(ResourceId::index).collect())
                        .collect(),
                })
                .collect(),
            capacities: game.capacities,
        }
    }
}
