//! Power and RBG allocation xApps.
//!
//! Two xApps are learned (A2C power, A2C RBG) and two are fixed equal-split
//! baselines. Each controls one family of network control parameters: the
//! power xApps pick a level index per (O-RU, RBG); the RBG xApps pick an
//! owner per (O-RU, RBG) among the O-RU's own users.

pub mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::NetworkConfig;
use crate::env::{round_robin_owners, Allocation, NetworkState, PowerSet};
use crate::error::{Error, Result};
use crate::rl::{ActorCritic, Checkpoint, PolicyOutput};

pub use train::{train_xapp, train_xapp_with, HistoryRow, TrainedXApp};

/// Number of per-link features fed to either xApp.
pub const FEATURES_PER_LINK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum XAppKind {
    PowerA2C,
    RbgA2C,
    PowerBaseline,
    RbgBaseline,
}

/// The network control parameter family an xApp writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ncp {
    Power,
    RbgOwnership,
}

impl XAppKind {
    pub fn tag(self) -> &'static str {
        match self {
            XAppKind::PowerA2C => "power",
            XAppKind::RbgA2C => "rbg",
            XAppKind::PowerBaseline => "power-baseline",
            XAppKind::RbgBaseline => "rbg-baseline",
        }
    }

    pub fn controls(self) -> Ncp {
        match self {
            XAppKind::PowerA2C | XAppKind::PowerBaseline => Ncp::Power,
            XAppKind::RbgA2C | XAppKind::RbgBaseline => Ncp::RbgOwnership,
        }
    }

    pub fn is_trainable(self) -> bool {
        matches!(self, XAppKind::PowerA2C | XAppKind::RbgA2C)
    }

    /// Actor head layout for a trainable kind.
    pub fn head_sizes(self, cfg: &NetworkConfig) -> Result<Vec<usize>> {
        match self {
            XAppKind::PowerA2C => Ok(vec![cfg.power_levels; cfg.num_links()]),
            XAppKind::RbgA2C => Ok(vec![cfg.users_per_oru(); cfg.num_links()]),
            other => Err(Error::config(format!("{} has no policy network", other.tag()))),
        }
    }

    pub fn input_dim(cfg: &NetworkConfig) -> usize {
        FEATURES_PER_LINK * cfg.num_links()
    }
}

impl std::str::FromStr for XAppKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power" => Ok(XAppKind::PowerA2C),
            "rbg" => Ok(XAppKind::RbgA2C),
            "power-baseline" => Ok(XAppKind::PowerBaseline),
            "rbg-baseline" => Ok(XAppKind::RbgBaseline),
            other => Err(Error::config(format!("unknown xApp kind '{other}'"))),
        }
    }
}

/// Divisors that bring raw link features to order one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureScale {
    pub csi: f64,
    pub rate_bps: f64,
    pub bits: f64,
    pub power_mw: f64,
}

impl FeatureScale {
    pub fn new(cfg: &NetworkConfig, rate_norm_bps: f64) -> Self {
        Self {
            csi: cfg.csi_max,
            rate_bps: rate_norm_bps,
            bits: rate_norm_bps * cfg.slot_duration_s,
            power_mw: cfg.p_max_mw(),
        }
    }
}

/// Raw per-link features, `(b, r)` major with four values per link.
///
/// For the power xApp the four values are `(ζ, Ψ, p, ϱ)` of the link's
/// current owner. The RBG xApp reads the same quantities as its
/// `(Γ, R̃, p, L)` state: CSI, realized rate, power, and arrivals.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkFeatures {
    values: Vec<[f64; FEATURES_PER_LINK]>,
}

pub type PowerFeatures = LinkFeatures;
pub type RbgFeatures = LinkFeatures;

impl LinkFeatures {
    pub fn links(&self) -> &[[f64; FEATURES_PER_LINK]] {
        &self.values
    }

    /// Flattened raw values.
    pub fn flat(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    /// Flattened and scaled network input.
    pub fn normalized(&self, scale: &FeatureScale) -> Vec<f64> {
        self.values
            .iter()
            .flat_map(|[csi, rate, power, bits]| {
                [csi / scale.csi, rate / scale.rate_bps, power / scale.power_mw, bits / scale.bits]
            })
            .collect()
    }
}

fn observe_links(state: &NetworkState, power_set: &PowerSet) -> LinkFeatures {
    let values = state
        .links
        .iter()
        .zip(state.allocation.power_levels())
        .map(|(link, &level)| {
            [link.csi, link.rate_bps, power_set.mw(level), link.arrived_bits as f64]
        })
        .collect();
    LinkFeatures { values }
}

pub fn power_observe(state: &NetworkState, power_set: &PowerSet) -> PowerFeatures {
    observe_links(state, power_set)
}

pub fn rbg_observe(state: &NetworkState, power_set: &PowerSet) -> RbgFeatures {
    observe_links(state, power_set)
}

/// What an xApp asks the network to do in the next slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum XAppAction {
    /// Power level index per (b, r).
    Power(Vec<usize>),
    /// Global owner id per (b, r).
    Rbg(Vec<usize>),
}

impl XAppAction {
    /// Overwrites the parameter family this action controls.
    pub fn apply_to(&self, base: &Allocation) -> Allocation {
        match self {
            XAppAction::Power(levels) => base.with_power(levels.clone()),
            XAppAction::Rbg(owners) => base.with_owners(owners.clone()),
        }
    }
}

/// Result of sampling (or greedily reading) a learned policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: XAppAction,
    /// Per-head indices as chosen from the policy.
    pub indices: Vec<usize>,
    pub log_prob: f64,
}

fn check_heads(policy: &PolicyOutput, heads: usize, size: usize) -> Result<()> {
    if policy.num_heads() != heads {
        return Err(Error::Dimension {
            what: "policy head count",
            expected: heads,
            got: policy.num_heads(),
        });
    }
    if let Some(&bad) = policy.head_sizes().iter().find(|&&n| n != size) {
        return Err(Error::Dimension {
            what: "policy head size",
            expected: size,
            got: bad,
        });
    }
    Ok(())
}

/// Power levels per (b, r): sampled when `explore`, else argmax.
pub fn power_act<R: Rng + ?Sized>(
    policy: &PolicyOutput,
    cfg: &NetworkConfig,
    power_set: &PowerSet,
    rng: &mut R,
    explore: bool,
) -> Result<Decision> {
    check_heads(policy, cfg.num_links(), power_set.len())?;
    let indices = policy.act(rng, explore);
    let log_prob = policy.log_prob(&indices);
    Ok(Decision {
        action: XAppAction::Power(indices.clone()),
        indices,
        log_prob,
    })
}

/// Owners per (b, r), each chosen among the users served by O-RU `b`.
pub fn rbg_act<R: Rng + ?Sized>(
    policy: &PolicyOutput,
    cfg: &NetworkConfig,
    rng: &mut R,
    explore: bool,
) -> Result<Decision> {
    let per_oru = cfg.users_per_oru();
    check_heads(policy, cfg.num_links(), per_oru)?;
    let indices = policy.act(rng, explore);
    let owners = indices
        .iter()
        .enumerate()
        .map(|(i, &local)| (i / cfg.rbgs_per_oru) * per_oru + local)
        .collect();
    let log_prob = policy.log_prob(&indices);
    Ok(Decision {
        action: XAppAction::Rbg(owners),
        indices,
        log_prob,
    })
}

/// Every (b, r) at the geometric-midpoint power level.
pub fn baseline_power(cfg: &NetworkConfig, power_set: &PowerSet) -> XAppAction {
    XAppAction::Power(vec![power_set.midpoint_index(); cfg.num_links()])
}

/// Each O-RU's RBGs dealt round-robin over its users.
pub fn baseline_rbg(cfg: &NetworkConfig) -> XAppAction {
    XAppAction::Rbg(round_robin_owners(cfg))
}

/// `τ_t / (d_e · R · B · T)`: one slot's share of the episode reward.
pub fn slot_reward(throughput_bps: f64, arrival_rate_bps: f64, cfg: &NetworkConfig) -> f64 {
    throughput_bps
        / (arrival_rate_bps * cfg.rbgs_per_oru as f64 * cfg.num_orus as f64 * cfg.slots_per_episode as f64)
}

/// Normalized episode throughput `τ_e = Σ_t τ_t / (d_e · R · B · T)`.
pub fn episode_reward(
    slot_rates_bps: &[f64],
    arrival_rate_bps: f64,
    rbgs_per_oru: usize,
    num_orus: usize,
    slots: usize,
) -> Result<f64> {
    if slot_rates_bps.len() != slots {
        return Err(Error::Dimension {
            what: "slot rates per episode",
            expected: slots,
            got: slot_rates_bps.len(),
        });
    }
    let denom = arrival_rate_bps * rbgs_per_oru as f64 * num_orus as f64 * slots as f64;
    if !(denom > 0.0 && denom.is_finite()) {
        return Err(Error::config("episode reward normalizer must be positive"));
    }
    Ok(slot_rates_bps.iter().sum::<f64>() / denom)
}

/// Frozen, deployed xApps: read-only policies plus the fixed baselines.
#[derive(Debug, Clone)]
pub struct XAppPool {
    power: ActorCritic,
    rbg: ActorCritic,
    power_checksum: String,
    rbg_checksum: String,
}

impl XAppPool {
    pub const POWER_FILE: &'static str = "power.ckpt";
    pub const RBG_FILE: &'static str = "rbg.ckpt";

    pub fn new(power: &Checkpoint, rbg: &Checkpoint, cfg: &NetworkConfig) -> Result<Self> {
        for (ckpt, kind) in [(power, XAppKind::PowerA2C), (rbg, XAppKind::RbgA2C)] {
            if ckpt.kind != kind.tag() {
                return Err(Error::config(format!(
                    "expected a '{}' checkpoint, found '{}'",
                    kind.tag(),
                    ckpt.kind
                )));
            }
            let heads = kind.head_sizes(cfg)?;
            if ckpt.net.head_sizes != heads || ckpt.net.input_dim() != XAppKind::input_dim(cfg) {
                return Err(Error::config(format!(
                    "'{}' checkpoint does not match the configured network",
                    kind.tag()
                )));
            }
        }
        Ok(Self {
            power: power.net.clone(),
            rbg: rbg.net.clone(),
            power_checksum: power.checksum(),
            rbg_checksum: rbg.checksum(),
        })
    }

    pub fn load(dir: &std::path::Path, cfg: &NetworkConfig) -> Result<Self> {
        let power = Checkpoint::load(&dir.join(Self::POWER_FILE))?;
        let rbg = Checkpoint::load(&dir.join(Self::RBG_FILE))?;
        Self::new(&power, &rbg, cfg)
    }

    pub fn power_net(&self) -> &ActorCritic {
        &self.power
    }

    pub fn rbg_net(&self) -> &ActorCritic {
        &self.rbg
    }

    /// Checksums of the checkpoints the pool was built from.
    pub fn checksums(&self) -> (&str, &str) {
        (&self.power_checksum, &self.rbg_checksum)
    }

    /// Runs one xApp against the current state.
    pub fn act<R: Rng + ?Sized>(
        &self,
        kind: XAppKind,
        state: &NetworkState,
        cfg: &NetworkConfig,
        power_set: &PowerSet,
        scale: &FeatureScale,
        rng: &mut R,
        explore: bool,
    ) -> Result<XAppAction> {
        Ok(match kind {
            XAppKind::PowerA2C => {
                let input = power_observe(state, power_set).normalized(scale);
                power_act(&self.power.policy(&input)?, cfg, power_set, rng, explore)?.action
            }
            XAppKind::RbgA2C => {
                let input = rbg_observe(state, power_set).normalized(scale);
                rbg_act(&self.rbg.policy(&input)?, cfg, rng, explore)?.action
            }
            XAppKind::PowerBaseline => baseline_power(cfg, power_set),
            XAppKind::RbgBaseline => baseline_rbg(cfg),
        })
    }
}
