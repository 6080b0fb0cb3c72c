//! Run configuration.
//!
//! A config file is a flat TOML document. Top-level keys are the
//! [`NetworkConfig`] fields; the optional `a2c`, `model`, `scheduler`,
//! `safety` and `training` tables (dotted keys such as `safety.beta = 0.05`
//! work too) hold the learning and orchestration knobs. Every missing key
//! falls back to the reference full-scale defaults; unknown keys are errors.
//!
//! Powers are given in dBm here and converted to mW by the accessors.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rl::A2CHyper;

/// Physical and traffic parameters of the simulated network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub num_orus: usize,
    pub rbgs_per_oru: usize,
    pub num_users: usize,
    pub inter_site_distance_m: f64,
    pub rbg_bandwidth_hz: f64,
    pub noise_power_dbm: f64,
    pub p_min_dbm: f64,
    pub p_max_dbm: f64,
    pub power_levels: usize,
    pub pathloss_intercept_db: f64,
    pub pathloss_slope_db: f64,
    pub shadowing_std_db: f64,
    pub slot_duration_s: f64,
    pub slots_per_episode: usize,
    pub direction_change_prob: f64,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    /// Per-speed spread around the episode mean speed.
    pub speed_spread_mps: f64,
    pub arrival_rate_set_bps: Vec<f64>,
    pub mean_speed_set_mps: Vec<f64>,
    pub initial_distance_min_m: f64,
    pub initial_distance_max_m: f64,
    /// Upper clamp on the log-normalized CSI feature.
    pub csi_max: f64,
    /// Per-slot unit-mean Rayleigh power fading on every link.
    pub rayleigh_fading: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            num_orus: 4,
            rbgs_per_oru: 12,
            num_users: 16,
            inter_site_distance_m: 900.0,
            rbg_bandwidth_hz: 20e6 / 12.0,
            noise_power_dbm: -114.0,
            p_min_dbm: 1.0,
            p_max_dbm: 38.0,
            power_levels: 10,
            pathloss_intercept_db: 120.9,
            pathloss_slope_db: 37.6,
            shadowing_std_db: 8.0,
            slot_duration_s: 0.1,
            slots_per_episode: 50,
            direction_change_prob: 0.3,
            speed_min_mps: 1.0,
            speed_max_mps: 50.0,
            speed_spread_mps: 5.0,
            arrival_rate_set_bps: vec![3e6, 5e6, 7e6, 9e6],
            mean_speed_set_mps: vec![10.0, 20.0, 30.0, 40.0],
            initial_distance_min_m: 150.0,
            initial_distance_max_m: 450.0,
            csi_max: 30.0,
            rayleigh_fading: false,
        }
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

impl NetworkConfig {
    /// Reduced desk-scale network: 2 O-RUs, 8 users, 6 RBGs, 6 power levels.
    pub fn desk() -> Self {
        Self {
            num_orus: 2,
            rbgs_per_oru: 6,
            num_users: 8,
            rbg_bandwidth_hz: 20e6 / 6.0,
            power_levels: 6,
            ..Self::default()
        }
    }

    pub fn p_min_mw(&self) -> f64 {
        dbm_to_mw(self.p_min_dbm)
    }

    pub fn p_max_mw(&self) -> f64 {
        dbm_to_mw(self.p_max_dbm)
    }

    pub fn noise_mw(&self) -> f64 {
        dbm_to_mw(self.noise_power_dbm)
    }

    pub fn users_per_oru(&self) -> usize {
        self.num_users / self.num_orus
    }

    /// Number of (O-RU, RBG) pairs.
    pub fn num_links(&self) -> usize {
        self.num_orus * self.rbgs_per_oru
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::config(msg.to_string()));
        if self.num_orus == 0 {
            return fail("num_orus must be >= 1");
        }
        if self.rbgs_per_oru == 0 {
            return fail("rbgs_per_oru must be >= 1");
        }
        if self.num_users == 0 || self.num_users % self.num_orus != 0 {
            return fail("num_users must be a positive multiple of num_orus");
        }
        if self.power_levels < 2 {
            return fail("power_levels must be >= 2");
        }
        if !(self.p_min_dbm <= self.p_max_dbm) {
            return fail("p_min_dbm must not exceed p_max_dbm");
        }
        if self.power_levels == 2 && self.p_min_dbm != self.p_max_dbm {
            return fail("power_levels = 2 requires p_min_dbm == p_max_dbm");
        }
        if !(0.0..=1.0).contains(&self.direction_change_prob) {
            return fail("direction_change_prob must lie in [0, 1]");
        }
        if !(self.slot_duration_s > 0.0) {
            return fail("slot_duration_s must be > 0");
        }
        if self.slots_per_episode == 0 {
            return fail("slots_per_episode must be >= 1");
        }
        let positive = [
            self.inter_site_distance_m,
            self.rbg_bandwidth_hz,
            self.speed_min_mps,
            self.speed_max_mps,
            self.initial_distance_min_m,
            self.csi_max,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return fail("distances, bandwidth, speeds and csi_max must be finite and > 0");
        }
        if !(self.speed_min_mps <= self.speed_max_mps) {
            return fail("speed_min_mps must not exceed speed_max_mps");
        }
        if !(self.initial_distance_min_m <= self.initial_distance_max_m) {
            return fail("initial_distance_min_m must not exceed initial_distance_max_m");
        }
        if !(self.speed_spread_mps >= 0.0) || !(self.shadowing_std_db >= 0.0) {
            return fail("speed_spread_mps and shadowing_std_db must be >= 0");
        }
        if self.arrival_rate_set_bps.is_empty() || self.mean_speed_set_mps.is_empty() {
            return fail("arrival_rate_set_bps and mean_speed_set_mps must be non-empty");
        }
        if self
            .arrival_rate_set_bps
            .iter()
            .chain(&self.mean_speed_set_mps)
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return fail("arrival rates and mean speeds must be finite and > 0");
        }
        if [
            self.noise_power_dbm,
            self.p_min_dbm,
            self.p_max_dbm,
            self.pathloss_intercept_db,
            self.pathloss_slope_db,
        ]
        .iter()
        .any(|v| !v.is_finite())
        {
            return fail("dB quantities must be finite");
        }
        Ok(())
    }

    /// Checks that an episode context lies in the simulator's valid range.
    pub fn validate_context(&self, arrival_rate_bps: f64, mean_speed_mps: f64) -> Result<()> {
        if !(arrival_rate_bps.is_finite() && arrival_rate_bps >= 0.0) {
            return Err(Error::config(format!(
                "arrival rate {arrival_rate_bps} must be finite and >= 0"
            )));
        }
        if !(mean_speed_mps >= self.speed_min_mps && mean_speed_mps <= self.speed_max_mps) {
            return Err(Error::config(format!(
                "mean speed {mean_speed_mps} outside [{}, {}]",
                self.speed_min_mps, self.speed_max_mps
            )));
        }
        Ok(())
    }
}

/// Network widths for actor and critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub scheduler_hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            scheduler_hidden: vec![128, 128],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    /// Slots per scheduling decision.
    pub period_slots: usize,
    /// Normalizer for the arrival-rate context (and for rate features).
    pub arrival_norm_bps: f64,
    /// Normalizer for the speed context.
    pub speed_norm_mps: f64,
    /// Contexts sampled while training the scheduler.
    pub train_arrival_rates_bps: Vec<f64>,
    pub train_mean_speeds_mps: Vec<f64>,
    pub a2c: A2CHyper,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            period_slots: 10,
            arrival_norm_bps: 9e6,
            speed_norm_mps: 50.0,
            train_arrival_rates_bps: vec![2e6, 5e6, 8e6],
            train_mean_speeds_mps: vec![5.0, 25.0, 45.0],
            // The scheduler makes five decisions per episode against the
            // xApps' fifty, so it takes larger steps.
            a2c: A2CHyper {
                learning_rate: 3e-4,
                ..A2CHyper::default()
            },
        }
    }
}

/// Deterministic policy substituted by the safety gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FallbackPolicy {
    /// Baseline power and baseline RBG xApps.
    EqualAllocation,
    /// Power A2C xApp alone (RBGs at baseline).
    BestSinglePower,
    /// RBG A2C xApp alone (power at baseline).
    BestSingleRbg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyConfig {
    pub enabled: bool,
    pub beta: f64,
    pub z_threshold: f64,
    pub t_back: usize,
    pub warmup: usize,
    pub fallback: FallbackPolicy,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            beta: 0.05,
            z_threshold: -2.0,
            t_back: 3,
            warmup: 20,
            fallback: FallbackPolicy::EqualAllocation,
        }
    }
}

impl SafetyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta <= 1.0) {
            return Err(Error::config("safety.beta must lie in [0, 1]"));
        }
        if self.z_threshold.is_nan() {
            return Err(Error::config("safety.z_threshold must not be NaN"));
        }
        if self.t_back == 0 {
            return Err(Error::config("safety.t_back must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub xapp_episodes: usize,
    pub scheduler_episodes: usize,
    pub moving_average_window: usize,
    /// Worker threads for independent work units; 1 keeps logs bit-stable.
    pub jobs: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            xapp_episodes: 100_000,
            scheduler_episodes: 10_000,
            moving_average_window: 500,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct LabConfig {
    pub network: NetworkConfig,
    pub a2c: A2CHyper,
    pub model: ModelConfig,
    pub scheduler: SchedulerConfig,
    pub safety: SafetyConfig,
    pub training: TrainingConfig,
}

const SECTIONS: [&str; 5] = ["a2c", "model", "scheduler", "safety", "training"];

impl LabConfig {
    /// Desk-scale defaults: reduced network, 2x10^4 xApp training episodes.
    pub fn desk() -> Self {
        Self {
            network: NetworkConfig::desk(),
            training: TrainingConfig {
                xapp_episodes: 20_000,
                ..TrainingConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        fn section<T: for<'de> Deserialize<'de> + Default>(
            table: &mut toml::Table,
            name: &str,
        ) -> Result<T> {
            match table.remove(name) {
                None => Ok(T::default()),
                Some(value) => value
                    .try_into()
                    .map_err(|e| Error::config(format!("[{name}]: {e}"))),
            }
        }
        let a2c = section(&mut table, "a2c")?;
        let model = section(&mut table, "model")?;
        let scheduler = section(&mut table, "scheduler")?;
        let safety = section(&mut table, "safety")?;
        let training = section(&mut table, "training")?;
        debug_assert!(SECTIONS.iter().all(|s| !table.contains_key(*s)));
        let network: NetworkConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::config(e.to_string()))?;
        let cfg = Self {
            network,
            a2c,
            model,
            scheduler,
            safety,
            training,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and parses a config file, returning it with the SHA-256 of its bytes.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Error::config(format!("{} is not UTF-8", path.display())))?;
        let cfg = Self::parse(text)?;
        Ok((cfg, sha256_hex(&bytes)))
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.a2c.validate()?;
        self.scheduler.a2c.validate()?;
        self.safety.validate()?;
        if self.model.hidden.contains(&0) || self.model.scheduler_hidden.contains(&0) {
            return Err(Error::config("hidden layer widths must be >= 1"));
        }
        let period = self.scheduler.period_slots;
        if period == 0 || self.network.slots_per_episode % period != 0 {
            return Err(Error::config(format!(
                "scheduler.period_slots ({period}) must divide slots_per_episode ({})",
                self.network.slots_per_episode
            )));
        }
        if !(self.scheduler.arrival_norm_bps > 0.0 && self.scheduler.speed_norm_mps > 0.0) {
            return Err(Error::config("scheduler normalizers must be > 0"));
        }
        if self.scheduler.train_arrival_rates_bps.is_empty()
            || self.scheduler.train_mean_speeds_mps.is_empty()
        {
            return Err(Error::config("scheduler training context sets must be non-empty"));
        }
        for &v in &self.scheduler.train_mean_speeds_mps {
            self.network.validate_context(0.0, v)?;
        }
        for &v in &self.network.mean_speed_set_mps {
            self.network.validate_context(0.0, v)?;
        }
        if self.training.moving_average_window == 0 || self.training.jobs == 0 {
            return Err(Error::config(
                "training.moving_average_window and training.jobs must be >= 1",
            ));
        }
        Ok(())
    }

    /// Renders the full resolved config as TOML.
    pub fn to_toml(&self) -> String {
        let mut table = match toml::Value::try_from(&self.network) {
            Ok(toml::Value::Table(t)) => t,
            _ => unreachable!("network config serializes to a table"),
        };
        let mut push = |name: &str, value: Result<toml::Value>| {
            if let Ok(v) = value {
                table.insert(name.to_string(), v);
            }
        };
        let ser = |v: std::result::Result<toml::Value, toml::ser::Error>| {
            v.map_err(|e| Error::config(e.to_string()))
        };
        push("a2c", ser(toml::Value::try_from(&self.a2c)));
        push("model", ser(toml::Value::try_from(&self.model)));
        push("scheduler", ser(toml::Value::try_from(&self.scheduler)));
        push("safety", ser(toml::Value::try_from(&self.safety)));
        push("training", ser(toml::Value::try_from(&self.training)));
        toml::to_string(&table).expect("config table serializes")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
