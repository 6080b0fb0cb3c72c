//! Experiment orchestration: regimes, context grids, paired-seed evaluation,
//! aggregation and CSV persistence.

pub mod pipeline;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::LabConfig;
use crate::env::{EpisodeContext, Environment};
use crate::error::{Error, Result};
use crate::rl::{ActorCritic, Checkpoint};
use crate::scheduler::{run_episode, ActivationMessage, Driver, Method, SafetyGate};
use crate::seeding::{purpose, stream};
use crate::xapps::XAppPool;

pub use pipeline::{run_pipeline, PipelineOutput};

/// How the xApps are orchestrated during an evaluation episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Learned power xApp with the baseline RBG xApp.
    PowerOnly,
    /// Learned RBG xApp with the baseline power xApp.
    RbgOnly,
    /// Both learned xApps deployed independently, every period.
    Both,
    /// Method-1 scheduler (retain the deactivated xApp's last action).
    Method1,
    /// Method-2 scheduler (baseline xApps fill in).
    Method2,
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Regime::PowerOnly,
        Regime::RbgOnly,
        Regime::Both,
        Regime::Method1,
        Regime::Method2,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Regime::PowerOnly => "power-only",
            Regime::RbgOnly => "rbg-only",
            Regime::Both => "both",
            Regime::Method1 => "method1",
            Regime::Method2 => "method2",
        }
    }

    /// The message a scheduler-free regime applies every period.
    pub fn fixed_message(self) -> Option<ActivationMessage> {
        match self {
            Regime::PowerOnly => Some(ActivationMessage::Pairing([true, false, false, true])),
            Regime::RbgOnly => Some(ActivationMessage::Pairing([false, true, true, false])),
            Regime::Both => Some(ActivationMessage::Retain { power: true, rbg: true }),
            Regime::Method1 | Regime::Method2 => None,
        }
    }

    pub fn method(self) -> Option<Method> {
        match self {
            Regime::Method1 => Some(Method::One),
            Regime::Method2 => Some(Method::Two),
            _ => None,
        }
    }

    fn code(self) -> u64 {
        self as u64
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.tag() == s)
            .ok_or_else(|| Error::config(format!("unknown regime '{s}'")))
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// An evaluation run: regimes × context grid × seeds × episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub regimes: Vec<Regime>,
    pub arrival_rates_bps: Vec<f64>,
    pub mean_speeds_mps: Vec<f64>,
    pub episodes_per_cell: usize,
    pub seeds: Vec<u64>,
    /// Directory holding `power.ckpt` and `rbg.ckpt`.
    #[serde(default)]
    pub pool_dir: Option<PathBuf>,
    #[serde(default)]
    pub scheduler_method1: Option<PathBuf>,
    #[serde(default)]
    pub scheduler_method2: Option<PathBuf>,
    /// Lab configuration the checkpoints were trained with.
    #[serde(default)]
    pub config: Option<PathBuf>,
}

impl ExperimentSpec {
    /// Nine-cell grid over every regime, five seeds of fifty episodes.
    pub fn desk() -> Self {
        Self {
            regimes: Regime::ALL.to_vec(),
            arrival_rates_bps: vec![2e6, 5e6, 8e6],
            mean_speeds_mps: vec![5.0, 25.0, 45.0],
            episodes_per_cell: 50,
            seeds: vec![1, 2, 3, 4, 5],
            pool_dir: None,
            scheduler_method1: None,
            scheduler_method2: None,
            config: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::config(format!("experiment spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Reads a spec; relative paths inside it are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut spec.pool_dir,
            &mut spec.scheduler_method1,
            &mut spec.scheduler_method2,
            &mut spec.config,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.regimes.is_empty() {
            return Err(Error::config("experiment spec lists no regimes"));
        }
        if self.arrival_rates_bps.is_empty() || self.mean_speeds_mps.is_empty() {
            return Err(Error::config("experiment grid is empty"));
        }
        if self.episodes_per_cell == 0 {
            return Err(Error::config("episodes_per_cell must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("experiment spec lists no seeds"));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::config("experiment seeds must be distinct"));
        }
        let mut regimes = self.regimes.clone();
        regimes.sort_unstable();
        regimes.dedup();
        if regimes.len() != self.regimes.len() {
            return Err(Error::config("experiment regimes must be distinct"));
        }
        Ok(())
    }

    /// Grid cells in row-major (arrival rate, then speed) order.
    pub fn cells(&self) -> Vec<EpisodeContext> {
        self.arrival_rates_bps
            .iter()
            .flat_map(|&d| {
                self.mean_speeds_mps.iter().map(move |&v| EpisodeContext {
                    arrival_rate_bps: d,
                    mean_speed_mps: v,
                })
            })
            .collect()
    }
}

/// One evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub regime: Regime,
    pub d_bps: f64,
    pub v_mps: f64,
    pub seed: u64,
    pub episode: u64,
    pub tau_e: f64,
    pub leftover_bits: u64,
}

/// One scheduling decision made during evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationRow {
    pub regime: Regime,
    pub d_bps: f64,
    pub v_mps: f64,
    pub seed: u64,
    pub episode: u64,
    pub period: usize,
    pub c1: f64,
    pub c2: f64,
    pub f: f64,
    pub mu_bits: String,
    pub gated: u8,
    pub period_reward: f64,
}

/// Trained schedulers available to an evaluation.
#[derive(Debug, Clone, Default)]
pub struct Schedulers {
    pub method1: Option<ActorCritic>,
    pub method2: Option<ActorCritic>,
}

impl Schedulers {
    pub fn get(&self, method: Method) -> Option<&ActorCritic> {
        match method {
            Method::One => self.method1.as_ref(),
            Method::Two => self.method2.as_ref(),
        }
    }

    /// Loads the scheduler checkpoints `spec` needs.
    pub fn load_for(spec: &ExperimentSpec) -> Result<Self> {
        let load = |path: &Option<PathBuf>, method: Method| -> Result<Option<ActorCritic>> {
            let needed = spec.regimes.iter().any(|r| r.method() == Some(method));
            match (needed, path) {
                (false, _) => Ok(None),
                (true, None) => Err(Error::config(format!(
                    "spec runs method {} but names no scheduler checkpoint",
                    method.number()
                ))),
                (true, Some(p)) => {
                    let ckpt = Checkpoint::load(p)?;
                    if ckpt.kind != method.checkpoint_kind() {
                        return Err(Error::config(format!(
                            "{} holds a '{}' checkpoint, expected '{}'",
                            p.display(),
                            ckpt.kind,
                            method.checkpoint_kind()
                        )));
                    }
                    Ok(Some(ckpt.net))
                }
            }
        };
        Ok(Self {
            method1: load(&spec.scheduler_method1, Method::One)?,
            method2: load(&spec.scheduler_method2, Method::Two)?,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evaluation {
    pub metrics: Vec<MetricsRow>,
    pub activations: Vec<ActivationRow>,
}

/// Environment stream for episode `episode` of a cell; shared by every regime.
fn env_stream(seed: u64, ctx: &EpisodeContext, episode: u64) -> rand_chacha::ChaCha8Rng {
    stream(
        seed,
        &[purpose::ENV, ctx.arrival_rate_bps.to_bits(), ctx.mean_speed_mps.to_bits(), episode],
    )
}

/// Runs one regime over the experiment grid.
///
/// Each (cell, seed) pair is an independent unit with its own environment,
/// and, when the safety gate is enabled, its own gate whose statistics carry
/// across that unit's episodes. Units run on `jobs` threads; the output is in
/// grid order regardless.
pub fn run_regime(
    regime: Regime,
    spec: &ExperimentSpec,
    lab: &LabConfig,
    pool: &XAppPool,
    schedulers: &Schedulers,
    jobs: usize,
) -> Result<Evaluation> {
    spec.validate()?;
    lab.validate()?;
    for ctx in spec.cells() {
        lab.network.validate_context(ctx.arrival_rate_bps, ctx.mean_speed_mps)?;
    }
    let scheduler = match regime.method() {
        Some(method) => {
            let net = schedulers
                .get(method)
                .ok_or_else(|| Error::config(format!("regime {regime} needs a method {} scheduler", method.number())))?;
            if net.head_sizes != [method.num_options()] {
                return Err(Error::config(format!(
                    "method {} scheduler has heads {:?}",
                    method.number(),
                    net.head_sizes
                )));
            }
            Some((method, net))
        }
        None => None,
    };
    let units: Vec<(EpisodeContext, u64)> = spec
        .cells()
        .into_iter()
        .flat_map(|ctx| spec.seeds.iter().map(move |&s| (ctx, s)))
        .collect();

    let run_unit = |&(ctx, seed): &(EpisodeContext, u64)| -> Result<Evaluation> {
        let mut env = Environment::new(lab.network.clone(), 0, ctx, &mut env_stream(seed, &ctx, 0))?;
        let mut gate = lab.safety.enabled.then(|| SafetyGate::new(lab.safety.clone()));
        let mut out = Evaluation::default();
        for episode in 0..spec.episodes_per_cell as u64 {
            let mut env_rng = env_stream(seed, &ctx, episode);
            let mut policy_rng = stream(
                seed,
                &[
                    purpose::POLICY,
                    regime.code(),
                    ctx.arrival_rate_bps.to_bits(),
                    ctx.mean_speed_mps.to_bits(),
                    episode,
                ],
            );
            let mut driver = match (regime.fixed_message(), scheduler) {
                (Some(msg), _) => Driver::Fixed(msg),
                (None, Some((method, net))) => Driver::Scheduler {
                    method,
                    net,
                    explore: false,
                    gate: gate.as_mut(),
                },
                (None, None) => unreachable!("scheduler regimes resolved above"),
            };
            let trace = run_episode(&mut env, pool, lab, &mut driver, episode, ctx, &mut env_rng, &mut policy_rng)?;
            out.metrics.push(MetricsRow {
                regime,
                d_bps: ctx.arrival_rate_bps,
                v_mps: ctx.mean_speed_mps,
                seed,
                episode,
                tau_e: trace.tau_e,
                leftover_bits: trace.leftover_bits,
            });
            if scheduler.is_some() {
                out.activations.extend(trace.periods.iter().map(|p| ActivationRow {
                    regime,
                    d_bps: ctx.arrival_rate_bps,
                    v_mps: ctx.mean_speed_mps,
                    seed,
                    episode,
                    period: p.period,
                    c1: p.c1,
                    c2: p.c2,
                    f: p.f,
                    mu_bits: p.message.bit_string(),
                    gated: p.gated as u8,
                    period_reward: p.reward,
                }));
            }
        }
        Ok(out)
    };

    let parts: Vec<Evaluation> = if jobs <= 1 {
        units.iter().map(run_unit).collect::<Result<_>>()?
    } else {
        let threads = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::invariant(format!("thread pool: {e}")))?;
        threads.install(|| units.par_iter().map(run_unit).collect::<Result<_>>())?
    };
    let mut out = Evaluation::default();
    for part in parts {
        out.metrics.extend(part.metrics);
        out.activations.extend(part.activations);
    }
    Ok(out)
}

/// Runs every regime in `spec`, in the experiment's order.
pub fn evaluate(
    spec: &ExperimentSpec,
    lab: &LabConfig,
    pool: &XAppPool,
    schedulers: &Schedulers,
    jobs: usize,
) -> Result<Evaluation> {
    let mut out = Evaluation::default();
    for &regime in &spec.regimes {
        let part = run_regime(regime, spec, lab, pool, schedulers, jobs)?;
        out.metrics.extend(part.metrics);
        out.activations.extend(part.activations);
    }
    Ok(out)
}

/// Trailing mean over `window`; the first `window - 1` entries average the
/// available prefix.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::Empty("moving-average series"));
    }
    if window == 0 {
        return Err(Error::config("moving-average window must be >= 1"));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, &x) in series.iter().enumerate() {
        sum += x;
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    Ok(out)
}

/// Per-(regime, cell) means.
///
/// `degradation_pct` is `100 · (1 − τ̄ / max(τ̄_power-only, τ̄_rbg-only))`
/// for the row's own regime; for `both` this is the conflict degradation.
/// It is empty when the cell lacks either single-xApp regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub regime: Regime,
    pub d_bps: f64,
    pub v_mps: f64,
    pub mean_tau: f64,
    pub mean_leftover: f64,
    pub degradation_pct: Option<f64>,
}

/// Order-independent sum: sorts before adding.
fn stable_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn summarize(rows: &[MetricsRow]) -> Result<Vec<SummaryRow>> {
    if rows.is_empty() {
        return Err(Error::Empty("metrics rows"));
    }
    type Key = (Regime, u64, u64);
    let mut groups: BTreeMap<Key, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for row in rows {
        if !(row.d_bps >= 0.0 && row.v_mps >= 0.0) {
            return Err(Error::invariant("metrics rows must have non-negative contexts"));
        }
        // Non-negative floats order like their bit patterns.
        let entry = groups
            .entry((row.regime, row.d_bps.to_bits(), row.v_mps.to_bits()))
            .or_default();
        entry.0.push(row.tau_e);
        entry.1.push(row.leftover_bits as f64);
    }
    let means: BTreeMap<Key, (f64, f64)> = groups
        .into_iter()
        .map(|(k, (tau, left))| (k, (stable_mean(tau), stable_mean(left))))
        .collect();
    Ok(means
        .iter()
        .map(|(&(regime, d, v), &(mean_tau, mean_leftover))| {
            let single = |r| means.get(&(r, d, v)).map(|m| m.0);
            let degradation_pct = match (single(Regime::PowerOnly), single(Regime::RbgOnly)) {
                (Some(p), Some(r)) if p.max(r) > 0.0 => Some(100.0 * (1.0 - mean_tau / p.max(r))),
                _ => None,
            };
            SummaryRow {
                regime,
                d_bps: f64::from_bits(d),
                v_mps: f64::from_bits(v),
                mean_tau,
                mean_leftover,
                degradation_pct,
            }
        })
        .collect())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path)?;
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}
