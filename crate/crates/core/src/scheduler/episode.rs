//! One episode under a fixed activation message or a scheduler policy.

use rand::Rng;

use crate::config::LabConfig;
use crate::env::{EpisodeContext, Environment};
use crate::error::{Error, Result};
use crate::rl::ActorCritic;
use crate::scheduler::{period_reward, scheduler_act, scheduler_observe, ActivationMessage, Controller, Method, SafetyGate};
use crate::xapps::{episode_reward, FeatureScale, XAppPool};

/// Who chooses the activation message each period.
pub enum Driver<'a> {
    /// The same message every period.
    Fixed(ActivationMessage),
    Scheduler {
        method: Method,
        net: &'a ActorCritic,
        /// Sample (training) rather than take the argmax (evaluation).
        explore: bool,
        gate: Option<&'a mut SafetyGate>,
    },
}

/// One scheduling decision and what followed it.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodRecord {
    pub period: usize,
    /// Normalized scheduler input.
    pub state: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    pub f: f64,
    pub message: ActivationMessage,
    /// Option index chosen by the policy (before any gate override).
    pub action: Option<usize>,
    pub value: Option<f64>,
    pub log_prob: Option<f64>,
    pub gated: bool,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub context: EpisodeContext,
    pub tau_e: f64,
    pub leftover_bits: u64,
    pub slot_rates_bps: Vec<f64>,
    pub periods: Vec<PeriodRecord>,
}

/// Resets `env` into `episode` with `ctx` and runs it to completion.
///
/// Environment randomness comes only from `env_rng`; the xApps act
/// greedily, and `policy_rng` is consumed only by an exploring scheduler.
#[allow(clippy::too_many_arguments)]
pub fn run_episode<E: Rng + ?Sized, P: Rng + ?Sized>(
    env: &mut Environment,
    pool: &XAppPool,
    lab: &LabConfig,
    driver: &mut Driver<'_>,
    episode: u64,
    ctx: EpisodeContext,
    env_rng: &mut E,
    policy_rng: &mut P,
) -> Result<EpisodeTrace> {
    let period = lab.scheduler.period_slots;
    let slots = lab.network.slots_per_episode;
    if period == 0 || slots % period != 0 {
        return Err(Error::config(format!(
            "scheduling period {period} does not divide the episode length {slots}"
        )));
    }
    env.reset(episode, ctx, env_rng)?;
    let scale = FeatureScale::new(env.config(), lab.scheduler.arrival_norm_bps);
    let mut controller = Controller::new(env);
    let mut previous = None;
    let mut periods = Vec::with_capacity(slots / period);
    let mut slot_rates = Vec::with_capacity(slots);
    let mut leftover_bits = 0u64;

    for p in 0..slots / period {
        let state = scheduler_observe(&ctx, previous, &lab.scheduler);
        let (message, action, value, log_prob, gated) = match driver {
            Driver::Fixed(msg) => (*msg, None, None, None, false),
            Driver::Scheduler {
                method,
                net,
                explore,
                gate,
            } => {
                let policy = net.policy(&state)?;
                let value = net.value(&state)?;
                let (proposed, index) = scheduler_act(*method, &policy, policy_rng, *explore)?;
                let (message, gated) = match gate {
                    Some(gate) => {
                        let fallback = method.fallback(gate.config().fallback);
                        let d = gate.decide(value, proposed, fallback);
                        (d.message, d.gated)
                    }
                    None => (proposed, false),
                };
                (message, Some(index), Some(value), Some(policy.log_prob(&[index])), gated)
            }
        };
        message.validate()?;
        let start = slot_rates.len();
        for _ in 0..period {
            let alloc = controller.allocation(&message, pool, env, &scale, policy_rng)?;
            let outcome = env.step(&alloc, env_rng)?;
            slot_rates.push(outcome.throughput_bps);
            leftover_bits += outcome.leftover_bits;
        }
        let reward = period_reward(&slot_rates[start..], ctx.arrival_rate_bps, lab);
        periods.push(PeriodRecord {
            period: p,
            c1: ctx.arrival_rate_bps,
            c2: ctx.mean_speed_mps,
            f: state[2],
            state,
            message,
            action,
            value,
            log_prob,
            gated,
            reward,
        });
        previous = Some(reward);
    }

    let cfg = &lab.network;
    let tau_e = episode_reward(&slot_rates, ctx.arrival_rate_bps, cfg.rbgs_per_oru, cfg.num_orus, slots)?;
    Ok(EpisodeTrace {
        context: ctx,
        tau_e,
        leftover_bits,
        slot_rates_bps: slot_rates,
        periods,
    })
}
