//! Experiment orchestration: seeded end-to-end runs coupling the learning
//! dynamics with the price updates, replications, parameter sweeps, and
//! CSV / JSON output.
//!
//! Round `k` of a run: play `μ(k) = Φ(Y(k))`, compute the loads, let the
//! agents update with the prices `Λ(k)` broadcast at the end of round
//! `k − 1` (`Λ(0) = 0`), then compute `Λ(k+1)` from the loads of round `k`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{hedge_round, ChoiceMap, LearningConfig, NoiseKind, NoiseModel, ScoreState};
use crate::error::{Error, Result};
use crate::game::{dot, CongestionGame};
use crate::metrics::{acv_series, ad_series, price_certificate_series, RoundRecord, TrajectoryRecord};
use crate::oracle::{self, SMALL_INSTANCE_BUNDLES};
use crate::pricing::{price_update, PriceVector, PricingConfig};
use crate::routing::{self, RoutingParams};
use crate::theory::{
    compute_constants, violation_bounds, gamma_max, uniform_noise_sigma, BoundInputs, BoundReport,
    GameConstants,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameSource {
    Inline(CongestionGame),
    Routing(RoutingParams),
}

impl Default for GameSource {
    fn default() -> Self {
        GameSource::Routing(RoutingParams::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub game: GameSource,
    pub horizon: usize,
    /// Step-size scale, `γ = c/√n`. Exactly one of `c` and `gamma` is set.
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    pub alpha: f64,
    /// Absolute `β`; at most one of `beta` and `beta_multiplier` is set.
    pub beta: Option<f64>,
    /// `β = multiplier · γ`; used (as 1) when neither form is given.
    pub beta_multiplier: Option<f64>,
    pub noise_half_width: f64,
    pub pricing_enabled: bool,
    pub seed: u64,
    pub replications: usize,
    pub output: Option<PathBuf>,
    pub choice_map: ChoiceMap,
    pub recenter: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            game: GameSource::default(),
            horizon: 1000,
            c: None,
            gamma: None,
            alpha: 1e-5,
            beta: None,
            beta_multiplier: None,
            noise_half_width: 0.01,
            pricing_enabled: true,
            seed: 0,
            replications: 10,
            output: None,
            choice_map: ChoiceMap::Logit,
            recenter: false,
        }
    }
}

impl ExperimentConfig {
    /// Reference experiment: 15-node routing game, n = 1000, c = 0.1,
    /// α = 1e-5, β = γ, uniform noise of half-width 0.01.
    pub fn reference() -> Self {
        Self {
            c: Some(0.1),
            ..Self::default()
        }
    }

    pub fn resolve(&self) -> Result<ResolvedParams> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        let sqrt_n = (self.horizon as f64).sqrt();
        let gamma = match (self.c, self.gamma) {
            (Some(c), None) => c / sqrt_n,
            (None, Some(g)) => g,
            _ => return Err(Error::Config("give exactly one of `c` and `gamma`".into())),
        };
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {gamma}")));
        }
        let beta = match (self.beta, self.beta_multiplier) {
            (Some(b), None) => b,
            (None, Some(m)) => m * gamma,
            (None, None) => gamma,
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give at most one of `beta` and `beta_multiplier`".into(),
                ))
            }
        };
        let pricing = PricingConfig::new(self.alpha, beta)?;
        if !(self.noise_half_width.is_finite() && self.noise_half_width >= 0.0) {
            return Err(Error::Config(format!(
                "noise half-width must be non-negative, got {}",
                self.noise_half_width
            )));
        }
        if let GameSource::Routing(p) = &self.game {
            p.validate()?;
        }
        Ok(ResolvedParams {
            gamma,
            c: gamma * sqrt_n,
            alpha: pricing.alpha,
            beta: pricing.beta,
        })
    }

    pub fn learning(&self, resolved: &ResolvedParams) -> LearningConfig {
        LearningConfig {
            gamma: resolved.gamma,
            choice_map: self.choice_map,
            recenter: self.recenter,
        }
    }

    pub fn noise_kind(&self) -> NoiseKind {
        if self.noise_half_width > 0.0 {
            NoiseKind::UniformIid {
                half_width: self.noise_half_width,
            }
        } else {
            NoiseKind::None
        }
    }

    /// Noise seed of replication `rep`.
    pub fn replication_seed(&self, rep: usize) -> u64 {
        self.seed.wrapping_add(rep as u64)
    }

    /// The game shared by all replications; routing games are generated
    /// from the base seed.
    pub fn build_game(&self) -> Result<CongestionGame> {
        match &self.game {
            GameSource::Inline(game) => Ok(game.clone()),
            GameSource::Routing(params) => Ok(routing::generate(params, self.seed)?.game),
        }
    }

    /// Same configuration with every capacity set to `capacity`.
    pub fn with_capacity(&self, capacity: f64) -> Result<Self> {
        let game = match &self.game {
            GameSource::Inline(g) => {
                GameSource::Inline(g.with_capacities(vec![capacity; g.n_resources()])?)
            }
            GameSource::Routing(p) => GameSource::Routing(RoutingParams {
                capacity,
                ..p.clone()
            }),
        };
        Ok(Self {
            game,
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolvedParams {
    pub gamma: f64,
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Runs `horizon` rounds from zero scores and zero prices. With `pricing`
/// set to `None` the prices stay at zero throughout.
pub fn simulate(
    game: &CongestionGame,
    learning: &LearningConfig,
    pricing: Option<&PricingConfig>,
    noise: &mut NoiseModel,
    horizon: usize,
) -> Result<TrajectoryRecord> {
    let mut traj = TrajectoryRecord::new(game.n_resources());
    let mut state = ScoreState::zeros(game);
    let mut prices = PriceVector::zeros(game.n_resources());
    for _ in 0..horizon {
        let round = hedge_round(game, &state, &prices, learning, noise)?;
        let next = match pricing {
            Some(cfg) => price_update(&prices, &round.loads, game.capacities(), cfg)?,
            None => prices.clone(),
        };
        let delays = round
            .losses
            .iter()
            .zip(round.profile.strategies())
            .map(|(l, mu)| dot(mu, l))
            .collect();
        traj.push(RoundRecord {
            excess: game.excess_from_loads(&round.loads),
            loads: round.loads,
            profile: round.profile,
            prices,
            delays,
            noisy_losses: round.noisy_losses,
        })?;
        state = round.state;
        prices = next;
    }
    traj.set_final_prices(prices)?;
    Ok(traj)
}

/// Per-round series; entry `k` describes round `k`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Series {
    /// `ACV(k + 1)`.
    pub acv: Vec<f64>,
    /// `ACV(k + 1)/(k + 1)`.
    pub acv_avg: Vec<f64>,
    /// `AD(k)/(k + 1)`, the mean per-round total delay so far.
    pub ad_avg: Vec<f64>,
    /// `‖Λ(k)‖₂`.
    pub price_norm: Vec<f64>,
    /// `max_r Λ_r(k)`.
    pub max_price: Vec<f64>,
    /// `Λ(k)`.
    pub prices: Vec<Vec<f64>>,
}

impl Series {
    pub fn from_trajectory(traj: &TrajectoryRecord) -> Self {
        let acv = acv_series(traj);
        let per_round = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .enumerate()
                .map(|(k, x)| x / (k + 1) as f64)
                .collect()
        };
        let acv_avg = per_round(&acv);
        let ad_avg = per_round(&ad_series(traj));
        let rounds = traj.rounds();
        Self {
            acv,
            acv_avg,
            ad_avg,
            price_norm: rounds.iter().map(|r| r.prices.norm()).collect(),
            max_price: rounds.iter().map(|r| r.prices.max()).collect(),
            prices: rounds.iter().map(|r| r.prices.as_slice().to_vec()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.acv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.acv.is_empty()
    }

    /// Entrywise mean of the scalar columns (per-resource prices dropped).
    pub fn mean(all: &[&Series]) -> Series {
        let n = all.first().map_or(0, |s| s.len());
        let k = all.len() as f64;
        let avg = |pick: fn(&Series) -> &Vec<f64>| -> Vec<f64> {
            (0..n)
                .map(|t| all.iter().map(|s| pick(s)[t]).sum::<f64>() / k)
                .collect()
        };
        Series {
            acv: avg(|s| &s.acv),
            acv_avg: avg(|s| &s.acv_avg),
            ad_avg: avg(|s| &s.ad_avg),
            price_norm: avg(|s| &s.price_norm),
            max_price: avg(|s| &s.max_price),
            prices: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertificateSummary {
    pub holds: bool,
    pub rounds_checked: usize,
    /// `min_k (rhs − lhs)`.
    pub worst_margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicationResult {
    pub replication: usize,
    pub seed: u64,
    pub resources: usize,
    pub bundle_counts: Vec<usize>,
    pub final_acv: f64,
    pub final_acv_avg: f64,
    pub final_ad_avg: f64,
    pub final_price_norm: f64,
    pub constants: GameConstants,
    pub bound_report: Option<BoundReport>,
    pub bound_note: Option<String>,
    /// Present when pricing is enabled.
    pub certificate: Option<CertificateSummary>,
    #[serde(skip)]
    pub series: Series,
}

fn certificate_summary(traj: &TrajectoryRecord, pricing: &PricingConfig) -> Result<CertificateSummary> {
    let certs = price_certificate_series(traj, pricing.alpha, pricing.beta)?;
    Ok(CertificateSummary {
        holds: certs.iter().all(|c| c.holds),
        rounds_checked: certs.len(),
        worst_margin: certs
            .iter()
            .map(|c| c.rhs - c.lhs)
            .fold(f64::INFINITY, f64::min),
    })
}

/// Bound report for a run, when the dual optimum is computable.
fn run_bounds(
    config: &ExperimentConfig,
    resolved: &ResolvedParams,
    game: &CongestionGame,
    constants: &GameConstants,
) -> Result<(Option<BoundReport>, Option<String>)> {
    if game.total_bundles() > SMALL_INSTANCE_BUNDLES {
        return Ok((
            None,
            Some(format!(
                "dual optimum not computed: {} bundles exceed the oracle limit of {SMALL_INSTANCE_BUNDLES}",
                game.total_bundles()
            )),
        ));
    }
    let sol = oracle::minimize_potential_constrained(
        game,
        oracle::DEFAULT_TOL,
        oracle::DEFAULT_MAX_ITERS,
    )?;
    if !(sol.converged && sol.feasible) {
        return Ok((
            None,
            Some("constrained potential minimizer not found; the bound is vacuous".into()),
        ));
    }
    let inputs = BoundInputs {
        delta: resolved.alpha / (resolved.gamma * resolved.gamma),
        c: resolved.c,
        sigma: uniform_noise_sigma(config.noise_half_width, constants.m_star, constants.agents),
        lambda_star_norm: sol.lambda_star.norm(),
        horizon: config.horizon,
    };
    let pricing = PricingConfig::new(resolved.alpha, resolved.beta)?;
    Ok((Some(violation_bounds(constants, &inputs, Some(&pricing))), None))
}

/// One replication, returning the full trajectory alongside the summary.
pub fn run_replication(
    config: &ExperimentConfig,
    rep: usize,
) -> Result<(ReplicationResult, TrajectoryRecord)> {
    let resolved = config.resolve()?;
    let game = config.build_game()?;
    let seed = config.replication_seed(rep);
    let pricing = PricingConfig::new(resolved.alpha, resolved.beta)?;
    let mut noise = NoiseModel::new(config.noise_kind(), seed, game.n_agents())?;
    let traj = simulate(
        &game,
        &config.learning(&resolved),
        config.pricing_enabled.then_some(&pricing),
        &mut noise,
        config.horizon,
    )?;
    let series = Series::from_trajectory(&traj);
    let constants = compute_constants(&game);
    let (bound_report, bound_note) = run_bounds(config, &resolved, &game, &constants)?;
    let certificate = if config.pricing_enabled {
        Some(certificate_summary(&traj, &pricing)?)
    } else {
        None
    };
    let last = series.len() - 1;
    let result = ReplicationResult {
        replication: rep,
        seed,
        resources: game.n_resources(),
        bundle_counts: game.bundle_counts(),
        final_acv: series.acv[last],
        final_acv_avg: series.acv_avg[last],
        final_ad_avg: series.ad_avg[last],
        final_price_norm: traj.final_prices().norm(),
        constants,
        bound_report,
        bound_note,
        certificate,
        series,
    };
    Ok((result, traj))
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub resolved: ResolvedParams,
    pub warnings: Vec<String>,
    pub replications: Vec<ReplicationResult>,
    pub wall_time_secs: f64,
}

impl ExperimentResult {
    pub fn mean_series(&self) -> Series {
        let all: Vec<&Series> = self.replications.iter().map(|r| &r.series).collect();
        Series::mean(&all)
    }

    pub fn mean_final_acv_avg(&self) -> f64 {
        mean(self.replications.iter().map(|r| r.final_acv_avg))
    }

    pub fn mean_final_ad_avg(&self) -> f64 {
        mean(self.replications.iter().map(|r| r.final_ad_avg))
    }

    pub fn mean_final_acv(&self) -> f64 {
        mean(self.replications.iter().map(|r| r.final_acv))
    }

    pub fn certificate_holds(&self) -> bool {
        self.replications
            .iter()
            .all(|r| r.certificate.is_none_or(|l| l.holds))
    }
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len() as f64;
    values.sum::<f64>() / n
}

fn theory_warnings(config: &ExperimentConfig, resolved: &ResolvedParams) -> Vec<String> {
    let mut warnings = Vec::new();
    if !config.pricing_enabled {
        return warnings;
    }
    if (resolved.beta - resolved.gamma).abs() > 1e-12 * resolved.gamma {
        warnings.push(format!(
            "analysis preconditions not met: β = {} differs from γ = {}",
            resolved.beta, resolved.gamma
        ));
    }
    if resolved.alpha == 0.0 {
        warnings.push("analysis preconditions not met: α = 0".into());
    }
    if let GameSource::Inline(game) = &config.game {
        let c1 = compute_constants(game).c1;
        if resolved.gamma > gamma_max(c1) {
            warnings.push(format!(
                "analysis preconditions not met: γ = {} exceeds 1/(4C₁) = {}",
                resolved.gamma,
                gamma_max(c1)
            ));
        }
    }
    warnings
}

/// All replications of a configuration, run in parallel; replication `r`
/// draws its noise from seed `seed + r`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let start = Instant::now();
    let resolved = config.resolve()?;
    let warnings = theory_warnings(config, &resolved);
    for w in &warnings {
        log::warn!("{w}");
    }
    let replications = (0..config.replications)
        .into_par_iter()
        .map(|rep| run_replication(config, rep).map(|(r, _)| r))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        config: config.clone(),
        resolved,
        warnings,
        replications,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub beta_multiplier: f64,
    pub capacity: f64,
    pub result: ExperimentResult,
}

/// Cartesian product of `β` multipliers and capacities; every cell shares
/// the base seed so cells are paired replication by replication.
pub fn sweep(
    base: &ExperimentConfig,
    beta_multipliers: &[f64],
    capacities: &[f64],
) -> Result<Vec<SweepCell>> {
    if beta_multipliers.is_empty() || capacities.is_empty() {
        return Err(Error::Config("sweep needs at least one multiplier and one capacity".into()));
    }
    let cells: Vec<(f64, f64)> = beta_multipliers
        .iter()
        .flat_map(|&m| capacities.iter().map(move |&c| (m, c)))
        .collect();
    cells
        .into_par_iter()
        .map(|(m, cap)| {
            let config = ExperimentConfig {
                beta: None,
                beta_multiplier: Some(m),
                ..base.with_capacity(cap)?
            };
            Ok(SweepCell {
                beta_multiplier: m,
                capacity: cap,
                result: run_experiment(&config)?,
            })
        })
        .collect()
}

/// Which per-resource price columns to add to the CSV.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum PriceColumns {
    #[default]
    None,
    All,
    Resources(Vec<usize>),
}

impl std::str::FromStr for PriceColumns {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "" | "none" => Ok(PriceColumns::None),
            "all" => Ok(PriceColumns::All),
            list => list
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("bad resource index `{t}`")))
                })
                .collect::<Result<Vec<_>>>()
                .map(PriceColumns::Resources),
        }
    }
}

impl PriceColumns {
    fn indices(&self, resources: usize) -> Result<Vec<usize>> {
        match self {
            PriceColumns::None => Ok(Vec::new()),
            PriceColumns::All => Ok((0..resources).collect()),
            PriceColumns::Resources(list) => {
                if let Some(r) = list.iter().find(|&&r| r >= resources) {
                    return Err(Error::Config(format!(
                        "price column for resource {r}, game has {resources}"
                    )));
                }
                Ok(list.clone())
            }
        }
    }
}

pub const CSV_COLUMNS: [&str; 6] = ["round", "acv", "acv_avg", "ad_avg", "price_norm", "max_price"];

/// Writes one row per round: `round, acv, acv_avg, ad_avg, price_norm,
/// max_price`, then the requested `price_r<k>` columns.
pub fn emit_csv(series: &Series, path: &Path, columns: &PriceColumns) -> Result<()> {
    let resources = series.prices.first().map_or(0, Vec::len);
    let extra = columns.indices(resources)?;
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> = CSV_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(extra.iter().map(|r| format!("price_r{r}")));
    writer.write_record(&header).map_err(csv_err)?;
    for k in 0..series.len() {
        let mut row = vec![
            k.to_string(),
            series.acv[k].to_string(),
            series.acv_avg[k].to_string(),
            series.ad_avg[k].to_string(),
            series.price_norm[k].to_string(),
            series.max_price[k].to_string(),
        ];
        row.extend(extra.iter().map(|&r| series.prices[k][r].to_string()));
        writer.write_record(&row).map_err(csv_err)?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// `<path>.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// `<stem>.rep<k>.<ext>` next to `path`.
pub fn replication_path(path: &Path, rep: usize) -> PathBuf {
    let stem = path.file_stem().map_or_else(Default::default, |s| s.to_os_string());
    let mut name = stem;
    name.push(format!(".rep{rep}"));
    if let Some(ext) = path.extension() {
        name.push(".");
        name.push(ext);
    }
    path.with_file_name(name)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Writes the result: a single replication goes to `path` directly;
/// several go to `<stem>.rep<k>.<ext>` with their mean series at `path`.
/// Metadata lands in `<path>.meta.json`. Fails with an assertion error if
/// the price certificate was violated on any priced run.
pub fn write_result(result: &ExperimentResult, path: &Path, columns: &PriceColumns) -> Result<()> {
    if !result.certificate_holds() {
        return Err(Error::Assertion(
            "ACV exceeded its price-based upper bound on a logged round".into(),
        ));
    }
    match result.replications.as_slice() {
        [single] => emit_csv(&single.series, path, columns)?,
        reps => {
            for r in reps {
                emit_csv(&r.series, &replication_path(path, r.replication), columns)?;
            }
            emit_csv(&result.mean_series(), path, &PriceColumns::None)?;
        }
    }
    write_json(result, &meta_path(path))
}

/// Outcome of `check-bounds`: one line per check.
#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub lines: Vec<String>,
    pub passed: bool,
}

pub fn check_bounds(result: &ExperimentResult) -> BoundCheck {
    let mut lines = Vec::new();
    let mut passed = true;
    for r in &result.replications {
        if let Some(l) = r.certificate {
            passed &= l.holds;
            lines.push(format!(
                "[{}] replication {}: price certificate over {} rounds, worst margin {:.3e}",
                if l.holds { "PASS" } else { "FAIL" },
                r.replication,
                l.rounds_checked,
                l.worst_margin
            ));
        }
    }
    let reports: Vec<&BoundReport> = result
        .replications
        .iter()
        .filter_map(|r| r.bound_report.as_ref())
        .collect();
    match reports.first() {
        Some(report) if report.preconditions_met => {
            let ok = result.mean_final_acv() < report.acv_bound;
            passed &= ok;
            lines.push(format!(
                "[{}] mean ACV(n) = {:.6} against expected-violation bound {:.6}",
                if ok { "PASS" } else { "FAIL" },
                result.mean_final_acv(),
                report.acv_bound
            ));
        }
        Some(report) => lines.push(format!(
            "[SKIP] expected-violation bound: {}",
            report.reasons.join("; ")
        )),
        None => {
            let note = result
                .replications
                .iter()
                .find_map(|r| r.bound_note.clone())
                .unwrap_or_default();
            lines.push(format!("[SKIP] expected-violation bound: {note}"));
        }
    }
    if !result.config.pricing_enabled {
        lines.push("[SKIP] price certificate: pricing disabled".into());
    }
    BoundCheck { lines, passed }
}
