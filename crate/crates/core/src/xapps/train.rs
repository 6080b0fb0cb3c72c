//! Independent episodic training of one learned xApp.

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::config::LabConfig;
use crate::env::{Environment, EpisodeContext};
use crate::error::{Error, Result};
use crate::rl::{A2CLearner, ActorCritic, Checkpoint, TrajectoryStep};
use crate::seeding::{purpose, stream};
use crate::xapps::{
    baseline_power, baseline_rbg, episode_reward, power_act, power_observe, rbg_act, rbg_observe,
    slot_reward, FeatureScale, XAppKind,
};

/// One line of the reward-history CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub episode: u64,
    pub d_e: f64,
    pub mean_speed: f64,
    pub tau_e: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedXApp {
    pub checkpoint: Checkpoint,
    pub history: Vec<HistoryRow>,
}

/// Trains `kind` for `episodes` episodes with the other parameter family held
/// at its equal-split baseline.
///
/// Each episode draws its arrival rate and mean speed uniformly from the
/// configured training sets, rolls out `T` slots while sampling from the
/// policy, and applies one actor-critic update.
pub fn train_xapp(kind: XAppKind, lab: &LabConfig, episodes: usize, seed: u64) -> Result<TrainedXApp> {
    train_xapp_with(kind, lab, episodes, seed, |_| {})
}

/// As [`train_xapp`], calling `on_episode` after every update.
pub fn train_xapp_with(
    kind: XAppKind,
    lab: &LabConfig,
    episodes: usize,
    seed: u64,
    mut on_episode: impl FnMut(&HistoryRow),
) -> Result<TrainedXApp> {
    if !kind.is_trainable() {
        return Err(Error::config(format!("{} is not a trainable xApp", kind.tag())));
    }
    lab.validate()?;
    let cfg = &lab.network;
    let heads = kind.head_sizes(cfg)?;
    let mut init_rng = stream(seed, &[purpose::INIT]);
    let mut context_rng = stream(seed, &[purpose::CONTEXT]);
    let mut env_rng = stream(seed, &[purpose::ENV]);
    let mut policy_rng = stream(seed, &[purpose::POLICY]);

    let net = ActorCritic::new(XAppKind::input_dim(cfg), &lab.model.hidden, &heads, &mut init_rng)?;
    let mut learner = A2CLearner::new(net, lab.a2c.clone())?;
    let scale = FeatureScale::new(cfg, lab.scheduler.arrival_norm_bps);

    let first = draw_context(lab, &mut context_rng)?;
    let mut env = Environment::new(cfg.clone(), 0, first, &mut env_rng)?;
    let fixed = match kind {
        XAppKind::PowerA2C => baseline_rbg(cfg),
        _ => baseline_power(cfg, env.power_set()),
    };

    let mut history = Vec::with_capacity(episodes);
    let mut steps = Vec::with_capacity(cfg.slots_per_episode);
    let mut rates = Vec::with_capacity(cfg.slots_per_episode);
    for episode in 0..episodes as u64 {
        let ctx = if episode == 0 { first } else { draw_context(lab, &mut context_rng)? };
        if episode > 0 {
            env.reset(episode, ctx, &mut env_rng)?;
        }
        steps.clear();
        rates.clear();
        let base = fixed.apply_to(&env.reset_allocation());
        while !env.is_done() {
            let state = env.state();
            let input = match kind {
                XAppKind::PowerA2C => power_observe(state, env.power_set()),
                _ => rbg_observe(state, env.power_set()),
            }
            .normalized(&scale);
            let policy = learner.net.policy(&input)?;
            let value = learner.net.value(&input)?;
            let decision = match kind {
                XAppKind::PowerA2C => power_act(&policy, cfg, env.power_set(), &mut policy_rng, true)?,
                _ => rbg_act(&policy, cfg, &mut policy_rng, true)?,
            };
            let alloc = decision.action.apply_to(&base);
            let outcome = env.step(&alloc, &mut env_rng)?;
            rates.push(outcome.throughput_bps);
            steps.push(TrajectoryStep {
                state: input,
                actions: decision.indices,
                reward: slot_reward(outcome.throughput_bps, ctx.arrival_rate_bps, cfg),
                value,
                log_prob: decision.log_prob,
            });
        }
        learner.update(&steps)?;
        let row = HistoryRow {
            episode,
            d_e: ctx.arrival_rate_bps,
            mean_speed: ctx.mean_speed_mps,
            tau_e: episode_reward(
                &rates,
                ctx.arrival_rate_bps,
                cfg.rbgs_per_oru,
                cfg.num_orus,
                cfg.slots_per_episode,
            )?,
        };
        on_episode(&row);
        history.push(row);
    }

    let hyper = learner.hyper.clone();
    Ok(TrainedXApp {
        checkpoint: Checkpoint {
            kind: kind.tag().to_string(),
            net: learner.into_net(),
            hyper,
            episodes: episodes as u64,
            seed,
        },
        history,
    })
}

fn draw_context<R: rand::Rng + ?Sized>(lab: &LabConfig, rng: &mut R) -> Result<EpisodeContext> {
    let cfg = &lab.network;
    let arrival_rate_bps = *cfg
        .arrival_rate_set_bps
        .choose(rng)
        .ok_or(Error::Empty("training arrival-rate set"))?;
    let mean_speed_mps = *cfg
        .mean_speed_set_mps
        .choose(rng)
        .ok_or(Error::Empty("training mean-speed set"))?;
    Ok(EpisodeContext {
        arrival_rate_bps,
        mean_speed_mps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LabConfig {
        let mut lab = LabConfig::desk();
        lab.model.hidden = vec![16];
        lab
    }

    #[test]
    fn history_has_one_row_per_episode() {
        let out = train_xapp(XAppKind::PowerA2C, &tiny(), 10, 1).unwrap();
        assert_eq!(out.history.len(), 10);
        assert!(out.history.iter().all(|r| r.tau_e >= 0.0 && r.tau_e.is_finite()));
        let lab = tiny();
        for row in &out.history {
            assert!(lab.network.arrival_rate_set_bps.contains(&row.d_e));
            assert!(lab.network.mean_speed_set_mps.contains(&row.mean_speed));
        }
    }

    #[test]
    fn same_seed_same_checkpoint() {
        let a = train_xapp(XAppKind::RbgA2C, &tiny(), 5, 9).unwrap();
        let b = train_xapp(XAppKind::RbgA2C, &tiny(), 5, 9).unwrap();
        assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
        assert_eq!(a.history, b.history);
        let c = train_xapp(XAppKind::RbgA2C, &tiny(), 5, 10).unwrap();
        assert_ne!(a.checkpoint.to_bytes(), c.checkpoint.to_bytes());
    }

    #[test]
    fn baselines_are_not_trainable() {
        assert!(train_xapp(XAppKind::PowerBaseline, &tiny(), 1, 0).is_err());
    }

    #[test]
    fn checkpoint_matches_kind() {
        let out = train_xapp(XAppKind::RbgA2C, &tiny(), 1, 0).unwrap();
        assert_eq!(out.checkpoint.kind, "rbg");
        assert_eq!(out.checkpoint.net.head_sizes, vec![4; 12]);
    }
}
