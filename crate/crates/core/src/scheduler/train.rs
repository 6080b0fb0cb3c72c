//! Scheduler training over a frozen xApp pool.

use rand::seq::IndexedRandom;

use crate::config::LabConfig;
use crate::env::{Environment, EpisodeContext};
use crate::error::{Error, Result};
use crate::rl::{A2CLearner, ActorCritic, Checkpoint, TrajectoryStep};
use crate::scheduler::{run_episode, Driver, EpisodeTrace, Method, STATE_DIM};
use crate::seeding::{purpose, stream};
use crate::xapps::{HistoryRow, XAppPool};

#[derive(Debug, Clone)]
pub struct TrainedScheduler {
    pub checkpoint: Checkpoint,
    pub history: Vec<HistoryRow>,
    /// Per-episode traces, in episode order.
    pub traces: Vec<EpisodeTrace>,
}

/// Context of training episode `episode`, drawn from its own stream so
/// other controllers can be replayed on exactly the same episodes.
pub fn training_episode_context(lab: &LabConfig, seed: u64, episode: u64) -> Result<EpisodeContext> {
    let mut rng = stream(seed, &[purpose::CONTEXT, episode]);
    let arrival_rate_bps = *lab
        .scheduler
        .train_arrival_rates_bps
        .choose(&mut rng)
        .ok_or(Error::Empty("scheduler training arrival rates"))?;
    let mean_speed_mps = *lab
        .scheduler
        .train_mean_speeds_mps
        .choose(&mut rng)
        .ok_or(Error::Empty("scheduler training mean speeds"))?;
    Ok(EpisodeContext {
        arrival_rate_bps,
        mean_speed_mps,
    })
}

pub fn train_scheduler(
    method: Method,
    pool: &XAppPool,
    lab: &LabConfig,
    episodes: usize,
    seed: u64,
) -> Result<TrainedScheduler> {
    train_scheduler_with(method, pool, lab, episodes, seed, |_| {})
}

/// Trains a scheduler for `method`; the pool is only read.
///
/// Every episode is split into `T / †` decisions; the scheduler samples its
/// message, the xApps act greedily for `†` slots, and one actor-critic update
/// is applied over the episode's decisions.
pub fn train_scheduler_with(
    method: Method,
    pool: &XAppPool,
    lab: &LabConfig,
    episodes: usize,
    seed: u64,
    mut on_episode: impl FnMut(&HistoryRow),
) -> Result<TrainedScheduler> {
    lab.validate()?;
    let mut init_rng = stream(seed, &[purpose::INIT]);
    let mut policy_rng = stream(seed, &[purpose::POLICY]);
    let net = ActorCritic::new(
        STATE_DIM,
        &lab.model.scheduler_hidden,
        &[method.num_options()],
        &mut init_rng,
    )?;
    let mut learner = A2CLearner::new(net, lab.scheduler.a2c.clone())?;

    let first = training_episode_context(lab, seed, 0)?;
    let mut env = Environment::new(lab.network.clone(), 0, first, &mut stream(seed, &[purpose::ENV]))?;
    let mut history = Vec::with_capacity(episodes);
    let mut traces = Vec::with_capacity(episodes);
    for episode in 0..episodes as u64 {
        let ctx = training_episode_context(lab, seed, episode)?;
        let mut env_rng = stream(seed, &[purpose::ENV, episode]);
        let trace = {
            let mut driver = Driver::Scheduler {
                method,
                net: &learner.net,
                explore: true,
                gate: None,
            };
            run_episode(&mut env, pool, lab, &mut driver, episode, ctx, &mut env_rng, &mut policy_rng)?
        };
        let steps: Vec<TrajectoryStep> = trace
            .periods
            .iter()
            .map(|p| TrajectoryStep {
                state: p.state.clone(),
                actions: vec![p.action.expect("scheduler periods record their action")],
                reward: p.reward,
                value: p.value.expect("scheduler periods record their value"),
                log_prob: p.log_prob.expect("scheduler periods record their log-probability"),
            })
            .collect();
        learner.update(&steps)?;
        let row = HistoryRow {
            episode,
            d_e: ctx.arrival_rate_bps,
            mean_speed: ctx.mean_speed_mps,
            tau_e: trace.tau_e,
        };
        on_episode(&row);
        history.push(row);
        traces.push(trace);
    }

    let hyper = learner.hyper.clone();
    Ok(TrainedScheduler {
        checkpoint: Checkpoint {
            kind: method.checkpoint_kind().to_string(),
            net: learner.into_net(),
            hyper,
            episodes: episodes as u64,
            seed,
        },
        history,
        traces,
    })
}

/// Replays the training episodes of `seed` under a fixed message.
pub fn replay_fixed(
    message: crate::scheduler::ActivationMessage,
    pool: &XAppPool,
    lab: &LabConfig,
    episodes: usize,
    seed: u64,
) -> Result<Vec<HistoryRow>> {
    let first = training_episode_context(lab, seed, 0)?;
    let mut env = Environment::new(lab.network.clone(), 0, first, &mut stream(seed, &[purpose::ENV]))?;
    let mut policy_rng = stream(seed, &[purpose::POLICY]);
    (0..episodes as u64)
        .map(|episode| {
            let ctx = training_episode_context(lab, seed, episode)?;
            let mut env_rng = stream(seed, &[purpose::ENV, episode]);
            let trace = run_episode(
                &mut env,
                pool,
                lab,
                &mut Driver::Fixed(message),
                episode,
                ctx,
                &mut env_rng,
                &mut policy_rng,
            )?;
            Ok(HistoryRow {
                episode,
                d_e: ctx.arrival_rate_bps,
                mean_speed: ctx.mean_speed_mps,
                tau_e: trace.tau_e,
            })
        })
        .collect()
}

/// One row of the training activation trace.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ActivationTraceRow {
    pub episode: u64,
    pub period: usize,
    pub c1: f64,
    pub c2: f64,
    pub f: f64,
    pub mu_bits: String,
    pub gated: u8,
    pub period_reward: f64,
}

pub fn activation_trace(traces: &[EpisodeTrace]) -> Vec<ActivationTraceRow> {
    traces
        .iter()
        .enumerate()
        .flat_map(|(episode, trace)| {
            trace.periods.iter().map(move |p| ActivationTraceRow {
                episode: episode as u64,
                period: p.period,
                c1: p.c1,
                c2: p.c2,
                f: p.f,
                mu_bits: p.message.bit_string(),
                gated: p.gated as u8,
                period_reward: p.reward,
            })
        })
        .collect()
}
