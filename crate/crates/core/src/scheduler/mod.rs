//! Context-aware scheduler that decides, once per scheduling period, which
//! xApps are active.
//!
//! Method 1 chooses among the two learned xApps alone, singly or together; a
//! deactivated xApp's parameters stay at its last emitted action. Method 2
//! pairs each learned xApp with an equal-split baseline for the same
//! parameter family and activates exactly one of each pair.

pub mod episode;
pub mod safety;
pub mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{FallbackPolicy, LabConfig, SchedulerConfig};
use crate::env::{Allocation, EpisodeContext, Environment};
use crate::error::{Error, Result};
use crate::rl::PolicyOutput;
use crate::xapps::{FeatureScale, XAppAction, XAppKind, XAppPool};

pub use episode::{run_episode, Driver, EpisodeTrace, PeriodRecord};
pub use safety::SafetyGate;
pub use train::{activation_trace, replay_fixed, ActivationTraceRow, train_scheduler, train_scheduler_with, training_episode_context, TrainedScheduler};

/// Length of the scheduler's state vector `[c¹, c², f]`.
pub const STATE_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    One,
    Two,
}

impl Method {
    pub fn num_options(self) -> usize {
        match self {
            Method::One => METHOD1_OPTIONS.len(),
            Method::Two => METHOD2_OPTIONS.len(),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Method::One => 1,
            Method::Two => 2,
        }
    }

    pub fn checkpoint_kind(self) -> &'static str {
        match self {
            Method::One => "scheduler-m1",
            Method::Two => "scheduler-m2",
        }
    }

    /// The message the safety layer substitutes under `policy`.
    pub fn fallback(self, policy: FallbackPolicy) -> ActivationMessage {
        // The equal-split baselines are always deployable, so the
        // equal-allocation fallback uses them under either method.
        match (self, policy) {
            (_, FallbackPolicy::EqualAllocation) => ActivationMessage::Pairing([false, false, true, true]),
            (Method::One, FallbackPolicy::BestSinglePower) => ActivationMessage::Retain { power: true, rbg: false },
            (Method::One, FallbackPolicy::BestSingleRbg) => ActivationMessage::Retain { power: false, rbg: true },
            (Method::Two, FallbackPolicy::BestSinglePower) => ActivationMessage::Pairing([true, false, false, true]),
            (Method::Two, FallbackPolicy::BestSingleRbg) => ActivationMessage::Pairing([false, true, true, false]),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Method::One),
            "2" => Ok(Method::Two),
            other => Err(Error::config(format!("method must be 1 or 2, got '{other}'"))),
        }
    }
}

/// Method 1 options, `(μ¹, μ²)`: power only, RBG only, both.
pub const METHOD1_OPTIONS: [(bool, bool); 3] = [(true, false), (false, true), (true, true)];

/// Method 2 pairings, `(μ¹, μ², μ³, μ⁴)` over (A2C power, A2C RBG, baseline
/// power, baseline RBG).
pub const METHOD2_OPTIONS: [[bool; 4]; 4] = [
    [true, true, false, false],
    [true, false, false, true],
    [false, true, true, false],
    [false, false, true, true],
];

/// Which xApps run for the coming scheduling period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActivationMessage {
    /// Method-1 style: an inactive learned xApp keeps its last action.
    Retain { power: bool, rbg: bool },
    /// Method-2 style: each family is driven by its learned xApp or its baseline.
    Pairing([bool; 4]),
}

impl ActivationMessage {
    pub fn from_index(method: Method, index: usize) -> Result<Self> {
        let out_of_range = || Error::Dimension {
            what: "activation option",
            expected: method.num_options(),
            got: index,
        };
        Ok(match method {
            Method::One => {
                let (power, rbg) = *METHOD1_OPTIONS.get(index).ok_or_else(out_of_range)?;
                ActivationMessage::Retain { power, rbg }
            }
            Method::Two => ActivationMessage::Pairing(*METHOD2_OPTIONS.get(index).ok_or_else(out_of_range)?),
        })
    }

    pub fn bits(&self) -> Vec<bool> {
        match *self {
            ActivationMessage::Retain { power, rbg } => vec![power, rbg],
            ActivationMessage::Pairing(mu) => mu.to_vec(),
        }
    }

    /// `"10"`, `"1001"`, ...
    pub fn bit_string(&self) -> String {
        self.bits().iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    /// Checks the message against its own family's constraint.
    pub fn validate(&self) -> Result<()> {
        match *self {
            ActivationMessage::Retain { power, rbg } if power || rbg => Ok(()),
            ActivationMessage::Retain { .. } => Err(Error::invariant("activation message deactivates every xApp")),
            ActivationMessage::Pairing(mu) if mu[0] != mu[2] && mu[1] != mu[3] => Ok(()),
            ActivationMessage::Pairing(_) => Err(Error::invariant(
                "activation message must enable exactly one power and one RBG xApp",
            )),
        }
    }
}

/// Raw and normalized scheduler state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextVector {
    /// Episode mean arrival rate, bit/s.
    pub c1: f64,
    /// Episode mean speed, m/s.
    pub c2: f64,
    /// Previous period's normalized rate; 0 in the first period.
    pub f: f64,
}

impl ContextVector {
    pub fn new(ctx: &EpisodeContext, previous_reward: Option<f64>) -> Self {
        Self {
            c1: ctx.arrival_rate_bps,
            c2: ctx.mean_speed_mps,
            f: previous_reward.unwrap_or(0.0),
        }
    }

    pub fn normalized(&self, cfg: &SchedulerConfig) -> Vec<f64> {
        vec![self.c1 / cfg.arrival_norm_bps, self.c2 / cfg.speed_norm_mps, self.f]
    }
}

pub fn scheduler_observe(ctx: &EpisodeContext, previous_reward: Option<f64>, cfg: &SchedulerConfig) -> Vec<f64> {
    ContextVector::new(ctx, previous_reward).normalized(cfg)
}

/// Picks an activation message from a single-head policy.
pub fn scheduler_act<R: Rng + ?Sized>(
    method: Method,
    policy: &PolicyOutput,
    rng: &mut R,
    explore: bool,
) -> Result<(ActivationMessage, usize)> {
    if policy.head_sizes() != [method.num_options()] {
        return Err(Error::Dimension {
            what: "scheduler policy head",
            expected: method.num_options(),
            got: policy.head_sizes().iter().sum(),
        });
    }
    let index = policy.act(rng, explore)[0];
    Ok((ActivationMessage::from_index(method, index)?, index))
}

/// Slot-level realization of activation messages.
///
/// Keeps the last action each learned xApp emitted so a deactivated xApp's
/// parameters stay in force; both start at the episode's reset allocation.
#[derive(Debug, Clone)]
pub struct Controller {
    last_power: Vec<usize>,
    last_owners: Vec<usize>,
}

impl Controller {
    pub fn new(env: &Environment) -> Self {
        let reset = env.reset_allocation();
        Self {
            last_power: reset.power_levels().to_vec(),
            last_owners: reset.owners().to_vec(),
        }
    }

    pub fn last_power(&self) -> &[usize] {
        &self.last_power
    }

    pub fn last_owners(&self) -> &[usize] {
        &self.last_owners
    }

    /// Allocation for the next slot under `msg`; active xApps act greedily on
    /// the current state.
    pub fn allocation<R: Rng + ?Sized>(
        &mut self,
        msg: &ActivationMessage,
        pool: &XAppPool,
        env: &Environment,
        scale: &FeatureScale,
        rng: &mut R,
    ) -> Result<Allocation> {
        msg.validate()?;
        let (power_kind, rbg_kind) = match *msg {
            ActivationMessage::Retain { power, rbg } => {
                (power.then_some(XAppKind::PowerA2C), rbg.then_some(XAppKind::RbgA2C))
            }
            ActivationMessage::Pairing(mu) => (
                Some(if mu[0] { XAppKind::PowerA2C } else { XAppKind::PowerBaseline }),
                Some(if mu[1] { XAppKind::RbgA2C } else { XAppKind::RbgBaseline }),
            ),
        };
        let act = |kind, rng: &mut R| pool.act(kind, env.state(), env.config(), env.power_set(), scale, rng, false);
        if let Some(kind) = power_kind {
            let XAppAction::Power(levels) = act(kind, rng)? else {
                unreachable!("power xApps emit power actions")
            };
            self.last_power = levels;
        }
        if let Some(kind) = rbg_kind {
            let XAppAction::Rbg(owners) = act(kind, rng)? else {
                unreachable!("RBG xApps emit RBG actions")
            };
            self.last_owners = owners;
        }
        let cfg = env.config();
        Ok(Allocation::new(
            cfg.num_orus,
            cfg.rbgs_per_oru,
            self.last_owners.clone(),
            self.last_power.clone(),
        ))
    }
}

/// `Σ τ_t / (d_e · R · B · †)` over one scheduling period.
pub fn period_reward(slot_rates_bps: &[f64], arrival_rate_bps: f64, lab: &LabConfig) -> f64 {
    let cfg = &lab.network;
    slot_rates_bps.iter().sum::<f64>()
        / (arrival_rate_bps * cfg.rbgs_per_oru as f64 * cfg.num_orus as f64 * lab.scheduler.period_slots as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn method_two_options_are_the_constraint_set() {
        let mut valid = Vec::new();
        for code in 0..16u8 {
            let mu = [code & 8 != 0, code & 4 != 0, code & 2 != 0, code & 1 != 0];
            if ActivationMessage::Pairing(mu).validate().is_ok() {
                valid.push(mu);
            }
        }
        valid.sort();
        let mut options = METHOD2_OPTIONS.to_vec();
        options.sort();
        assert_eq!(valid, options);
    }

    #[test]
    fn method_one_never_deactivates_both() {
        assert!(ActivationMessage::Retain { power: false, rbg: false }.validate().is_err());
        let policy = PolicyOutput::from_logits(vec![0.0; 3], &[3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let (msg, _) = scheduler_act(Method::One, &policy, &mut rng, true).unwrap();
            msg.validate().unwrap();
            assert_ne!(msg.bit_string(), "00");
        }
    }

    #[test]
    fn uniform_method_two_policy_visits_pairings_evenly() {
        let policy = PolicyOutput::from_logits(vec![0.0; 4], &[4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let (msg, i) = scheduler_act(Method::Two, &policy, &mut rng, true).unwrap();
            msg.validate().unwrap();
            counts[i] += 1;
        }
        let sigma = (0.25f64 * 0.75 / n as f64).sqrt();
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn head_size_mismatch_is_an_error() {
        let policy = PolicyOutput::from_logits(vec![0.0; 4], &[4]).unwrap();
        assert!(scheduler_act(Method::One, &policy, &mut ChaCha8Rng::seed_from_u64(0), false).is_err());
    }

    #[test]
    fn context_is_scaled_by_configured_maxima() {
        let cfg = SchedulerConfig::default();
        let ctx = EpisodeContext {
            arrival_rate_bps: 8e6,
            mean_speed_mps: 25.0,
        };
        let s = scheduler_observe(&ctx, None, &cfg);
        assert!((s[0] - 8.0 / 9.0).abs() < 1e-12);
        assert_eq!(s[1], 0.5);
        assert_eq!(s[2], 0.0);
        assert_eq!(scheduler_observe(&ctx, Some(0.7), &cfg)[2], 0.7);
    }

    #[test]
    fn bit_strings() {
        assert_eq!(ActivationMessage::from_index(Method::One, 2).unwrap().bit_string(), "11");
        assert_eq!(ActivationMessage::from_index(Method::Two, 1).unwrap().bit_string(), "1001");
        assert!(ActivationMessage::from_index(Method::Two, 4).is_err());
        assert!("3".parse::<Method>().is_err());
    }

    #[test]
    fn fallbacks_are_valid_messages() {
        for method in [Method::One, Method::Two] {
            for policy in [
                FallbackPolicy::EqualAllocation,
                FallbackPolicy::BestSinglePower,
                FallbackPolicy::BestSingleRbg,
            ] {
                method.fallback(policy).validate().unwrap();
            }
        }
    }
}
