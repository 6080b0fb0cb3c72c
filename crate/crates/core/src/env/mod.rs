//! Seeded discrete-time simulator of the multi-cell downlink.
//!
//! One [`Environment`] owns one episode's [`NetworkState`]. Each call to
//! [`Environment::step`] applies an allocation for the current slot, draws
//! arrivals, evaluates CSI/SINR/capacity, transmits, and then moves users.
//! Every random draw comes from the caller's RNG stream, in a fixed order that
//! does not depend on the allocation, so two controllers fed the same stream
//! see the same traffic and mobility.

pub mod channel;
pub mod mobility;
pub mod power;
pub mod traffic;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};

use crate::config::NetworkConfig;
use crate::error::{Error, Result};

pub use channel::{channel_gain, compute_csi, compute_sinr_capacity, GainMatrix};
pub use mobility::{step_mobility, Layout};
pub use power::{build_power_set, PowerSet};
pub use traffic::{draw_arrivals, transmit, Transmission};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn distance(self, other: Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserState {
    pub position: Position,
    /// Constant within an episode.
    pub speed_mps: f64,
    /// Heading in `[0, 2π)`.
    pub direction: f64,
    pub serving_oru: usize,
}

/// RBG ownership and power level for every (O-RU, RBG) pair, O-RU major.
///
/// Storing one owner per pair makes "exactly one user per RBG" structural.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Allocation {
    rbgs_per_oru: usize,
    owner: Vec<usize>,
    power: Vec<usize>,
}

impl Allocation {
    pub fn new(num_orus: usize, rbgs_per_oru: usize, owner: Vec<usize>, power: Vec<usize>) -> Self {
        assert_eq!(owner.len(), num_orus * rbgs_per_oru, "one owner per (b, r)");
        assert_eq!(power.len(), owner.len(), "one power level per (b, r)");
        Self {
            rbgs_per_oru,
            owner,
            power,
        }
    }

    /// RBGs of each O-RU dealt round-robin over its users; every RBG at `power_level`.
    pub fn equal_split(cfg: &NetworkConfig, power_level: usize) -> Self {
        let owner = round_robin_owners(cfg);
        let power = vec![power_level; owner.len()];
        Self::new(cfg.num_orus, cfg.rbgs_per_oru, owner, power)
    }

    pub fn rbgs_per_oru(&self) -> usize {
        self.rbgs_per_oru
    }

    pub fn num_orus(&self) -> usize {
        self.owner.len() / self.rbgs_per_oru
    }

    pub fn owner(&self, oru: usize, rbg: usize) -> usize {
        self.owner[oru * self.rbgs_per_oru + rbg]
    }

    pub fn power_level(&self, oru: usize, rbg: usize) -> usize {
        self.power[oru * self.rbgs_per_oru + rbg]
    }

    pub fn owners(&self) -> &[usize] {
        &self.owner
    }

    pub fn power_levels(&self) -> &[usize] {
        &self.power
    }

    pub fn with_power(&self, power: Vec<usize>) -> Self {
        Self::new(self.num_orus(), self.rbgs_per_oru, self.owner.clone(), power)
    }

    pub fn with_owners(&self, owner: Vec<usize>) -> Self {
        Self::new(self.num_orus(), self.rbgs_per_oru, owner, self.power.clone())
    }

    /// Checks shape, that each owner is served by the allocating O-RU, and
    /// that every power index is in range.
    pub fn validate(&self, cfg: &NetworkConfig, power_levels: usize) -> Result<()> {
        if self.rbgs_per_oru != cfg.rbgs_per_oru || self.owner.len() != cfg.num_links() {
            return Err(Error::invariant(format!(
                "allocation shape {}x{} does not match network {}x{}",
                self.num_orus(),
                self.rbgs_per_oru,
                cfg.num_orus,
                cfg.rbgs_per_oru
            )));
        }
        let per_oru = cfg.users_per_oru();
        for (i, (&u, &p)) in self.owner.iter().zip(&self.power).enumerate() {
            let b = i / self.rbgs_per_oru;
            if u >= cfg.num_users || u / per_oru != b {
                return Err(Error::invariant(format!(
                    "RBG {} of O-RU {b} owned by user {u}, who is not served by it",
                    i % self.rbgs_per_oru
                )));
            }
            if p >= power_levels {
                return Err(Error::invariant(format!(
                    "power index {p} out of range (K = {power_levels})"
                )));
            }
        }
        Ok(())
    }
}

/// Owner of RBG `r` at O-RU `b` is local user `r mod (U/B)`; leftover RBGs
/// go to the lowest local indices.
pub fn round_robin_owners(cfg: &NetworkConfig) -> Vec<usize> {
    let per_oru = cfg.users_per_oru();
    (0..cfg.num_orus)
        .flat_map(|b| (0..cfg.rbgs_per_oru).map(move |r| b * per_oru + r % per_oru))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeContext {
    /// Mean per-RBG arrival rate `d_e`.
    pub arrival_rate_bps: f64,
    pub mean_speed_mps: f64,
}

/// Per-(O-RU, RBG) statistics for the most recent slot.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LinkStats {
    /// Serving gain `h(b, owner)`.
    pub gain: f64,
    pub csi: f64,
    pub sinr: f64,
    pub capacity_bps: f64,
    pub arrived_bits: u64,
    pub rate_bps: f64,
    pub delivered_bits: u64,
    pub leftover_bits: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub slot: usize,
    pub episode: u64,
    pub context: EpisodeContext,
    pub users: Vec<UserState>,
    /// Allocation used in the most recent slot (the reset allocation before slot 0).
    pub allocation: Allocation,
    pub links: Vec<LinkStats>,
    /// Shadowing in dB per (O-RU, user), fixed for the episode.
    pub shadowing_db: Vec<f64>,
    pub gains: GainMatrix,
}

impl NetworkState {
    pub fn link(&self, oru: usize, rbg: usize) -> &LinkStats {
        &self.links[oru * self.allocation.rbgs_per_oru() + rbg]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOutcome {
    /// `τ_t = Σ_{b,r} Ψ`.
    pub throughput_bps: f64,
    pub leftover_bits: u64,
}

#[derive(Debug, Clone)]
pub struct Environment {
    cfg: NetworkConfig,
    power_set: PowerSet,
    layout: Layout,
    state: NetworkState,
}

impl Environment {
    /// Validates `cfg` and resets into episode `episode` with context `ctx`.
    pub fn new<R: Rng + ?Sized>(
        cfg: NetworkConfig,
        episode: u64,
        ctx: EpisodeContext,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let power_set = build_power_set(cfg.p_min_mw(), cfg.p_max_mw(), cfg.power_levels)?;
        let layout = Layout::new(&cfg);
        let state = reset_state(&cfg, &layout, &power_set, episode, ctx, rng)?;
        Ok(Self {
            cfg,
            power_set,
            layout,
            state,
        })
    }

    pub fn reset<R: Rng + ?Sized>(
        &mut self,
        episode: u64,
        ctx: EpisodeContext,
        rng: &mut R,
    ) -> Result<&NetworkState> {
        self.state = reset_state(&self.cfg, &self.layout, &self.power_set, episode, ctx, rng)?;
        Ok(&self.state)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn power_set(&self) -> &PowerSet {
        &self.power_set
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.slot >= self.cfg.slots_per_episode
    }

    /// The allocation every episode starts from: round-robin RBGs at the
    /// geometric-midpoint power level.
    pub fn reset_allocation(&self) -> Allocation {
        Allocation::equal_split(&self.cfg, self.power_set.midpoint_index())
    }

    /// Runs one slot under `allocation`.
    pub fn step<R: Rng + ?Sized>(&mut self, allocation: &Allocation, rng: &mut R) -> Result<SlotOutcome> {
        if self.is_done() {
            return Err(Error::invariant(format!(
                "episode already ran {} slots",
                self.cfg.slots_per_episode
            )));
        }
        allocation.validate(&self.cfg, self.power_set.len())?;
        let cfg = &self.cfg;
        let state = &mut self.state;
        state.allocation = allocation.clone();
        state.gains = gain_matrix(cfg, &self.layout, &state.users, &state.shadowing_db, Some(&mut *rng));
        let arrivals = draw_arrivals(
            rng,
            state.context.arrival_rate_bps,
            cfg.slot_duration_s,
            cfg.num_links(),
        );
        state.links = evaluate_links(cfg, &self.power_set, &state.gains, &state.allocation, &arrivals);
        let throughput_bps = state.links.iter().map(|l| l.rate_bps).sum();
        let leftover_bits = state.links.iter().map(|l| l.leftover_bits).sum();
        step_mobility(rng, &mut state.users, &self.layout, cfg);
        state.slot += 1;
        Ok(SlotOutcome {
            throughput_bps,
            leftover_bits,
        })
    }
}

fn reset_state<R: Rng + ?Sized>(
    cfg: &NetworkConfig,
    layout: &Layout,
    power_set: &PowerSet,
    episode: u64,
    ctx: EpisodeContext,
    rng: &mut R,
) -> Result<NetworkState> {
    cfg.validate_context(ctx.arrival_rate_bps, ctx.mean_speed_mps)?;
    let per_oru = cfg.users_per_oru();
    let users: Vec<UserState> = (0..cfg.num_users)
        .map(|u| {
            let serving_oru = u / per_oru;
            let position = mobility::place_on_annulus(
                rng,
                layout.orus[serving_oru],
                cfg.initial_distance_min_m,
                cfg.initial_distance_max_m,
            );
            let speed_mps = mobility::draw_speed(rng, cfg, ctx.mean_speed_mps);
            let direction = rng.random_range(0.0..std::f64::consts::TAU);
            UserState {
                position,
                speed_mps,
                direction,
                serving_oru,
            }
        })
        .collect();
    let shadow = Normal::new(0.0, cfg.shadowing_std_db)
        .map_err(|e| Error::config(format!("shadowing: {e}")))?;
    let shadowing_db: Vec<f64> = (0..cfg.num_orus * cfg.num_users)
        .map(|_| shadow.sample(rng))
        .collect();
    let gains = gain_matrix::<R>(cfg, layout, &users, &shadowing_db, None);
    let allocation = Allocation::equal_split(cfg, power_set.midpoint_index());
    let links = evaluate_links(cfg, power_set, &gains, &allocation, &vec![0; cfg.num_links()]);
    Ok(NetworkState {
        slot: 0,
        episode,
        context: ctx,
        users,
        allocation,
        links,
        shadowing_db,
        gains,
    })
}

/// Gains from current positions and episode shadowing; with `rng` and fading
/// enabled, each entry is scaled by an Exp(1) Rayleigh power draw.
fn gain_matrix<R: Rng + ?Sized>(
    cfg: &NetworkConfig,
    layout: &Layout,
    users: &[UserState],
    shadowing_db: &[f64],
    rng: Option<&mut R>,
) -> GainMatrix {
    let mut values = Vec::with_capacity(layout.orus.len() * users.len());
    for (b, &site) in layout.orus.iter().enumerate() {
        for (u, user) in users.iter().enumerate() {
            values.push(channel_gain(cfg, site, user.position, shadowing_db[b * users.len() + u]));
        }
    }
    if cfg.rayleigh_fading {
        if let Some(rng) = rng {
            for v in values.iter_mut() {
                let fade: f64 = Exp1.sample(rng);
                *v *= fade;
            }
        }
    }
    GainMatrix::new(layout.orus.len(), users.len(), values)
}

fn evaluate_links(
    cfg: &NetworkConfig,
    power_set: &PowerSet,
    gains: &GainMatrix,
    allocation: &Allocation,
    arrivals: &[u64],
) -> Vec<LinkStats> {
    let csi = compute_csi(gains, allocation, cfg.csi_max);
    let radio = compute_sinr_capacity(gains, allocation, power_set, cfg.noise_mw(), cfg.rbg_bandwidth_hz);
    (0..cfg.num_links())
        .map(|i| {
            let b = i / cfg.rbgs_per_oru;
            let (sinr, capacity_bps) = radio[i];
            let tx = traffic::transmit_link(arrivals[i], capacity_bps, cfg.slot_duration_s);
            LinkStats {
                gain: gains.get(b, allocation.owners()[i]),
                csi: csi[i],
                sinr,
                capacity_bps,
                arrived_bits: arrivals[i],
                rate_bps: tx.rate_bps,
                delivered_bits: tx.delivered_bits,
                leftover_bits: tx.leftover_bits,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx(d: f64, v: f64) -> EpisodeContext {
        EpisodeContext {
            arrival_rate_bps: d,
            mean_speed_mps: v,
        }
    }

    #[test]
    fn reset_places_users_evenly_on_annuli() {
        let cfg = NetworkConfig::default();
        let env = Environment::new(cfg.clone(), 0, ctx(3e6, 10.0), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let s = env.state();
        assert_eq!(s.slot, 0);
        for b in 0..4 {
            let served: Vec<_> = s.users.iter().filter(|u| u.serving_oru == b).collect();
            assert_eq!(served.len(), 4);
            for u in served {
                let d = u.position.distance(env.layout().orus[b]);
                assert!((150.0 - 1e-9..=450.0 + 1e-9).contains(&d), "{d}");
                assert!((0.0..std::f64::consts::TAU).contains(&u.direction));
            }
        }
        assert_eq!(s.context, ctx(3e6, 10.0));
        assert!(s.links.iter().all(|l| l.arrived_bits == 0 && l.rate_bps == 0.0));
    }

    #[test]
    fn reset_is_deterministic() {
        let cfg = NetworkConfig::desk();
        let a = Environment::new(cfg.clone(), 3, ctx(5e6, 20.0), &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = Environment::new(cfg, 3, ctx(5e6, 20.0), &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a.state(), b.state());
    }

    #[test]
    fn reset_rejects_out_of_range_speed() {
        let err = Environment::new(NetworkConfig::desk(), 0, ctx(5e6, 80.0), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn reference_config_runs_a_full_episode() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut env = Environment::new(NetworkConfig::default(), 0, ctx(9e6, 40.0), &mut rng).unwrap();
        let alloc = env.reset_allocation();
        let mut trace = Vec::new();
        while !env.is_done() {
            trace.push(env.step(&alloc, &mut rng).unwrap());
        }
        assert_eq!(trace.len(), 50);
        assert!(env.step(&alloc, &mut rng).is_err());
        assert!(trace.iter().all(|o| o.throughput_bps > 0.0));
    }

    #[test]
    fn foreign_owner_is_rejected() {
        let cfg = NetworkConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut env = Environment::new(cfg.clone(), 0, ctx(5e6, 10.0), &mut rng).unwrap();
        let mut owners = round_robin_owners(&cfg);
        owners[0] = cfg.num_users - 1;
        let bad = env.reset_allocation().with_owners(owners);
        assert!(matches!(env.step(&bad, &mut rng), Err(Error::Invariant(_))));
        let bad_power = env.reset_allocation().with_power(vec![cfg.power_levels; cfg.num_links()]);
        assert!(matches!(env.step(&bad_power, &mut rng), Err(Error::Invariant(_))));
    }

    #[test]
    fn round_robin_remainder_goes_to_lowest_users() {
        let cfg = NetworkConfig {
            num_orus: 1,
            num_users: 4,
            rbgs_per_oru: 5,
            ..NetworkConfig::default()
        };
        assert_eq!(round_robin_owners(&cfg), vec![0, 1, 2, 3, 0]);
    }

    #[test]
    fn identical_streams_give_identical_traces() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let cfg = NetworkConfig {
                rayleigh_fading: true,
                ..NetworkConfig::desk()
            };
            let mut env = Environment::new(cfg, 0, ctx(7e6, 30.0), &mut rng).unwrap();
            let alloc = env.reset_allocation();
            let mut out = Vec::new();
            while !env.is_done() {
                out.push(env.step(&alloc, &mut rng).unwrap().throughput_bps.to_bits());
            }
            (out, env.state().clone())
        };
        assert_eq!(run(), run());
    }
}
