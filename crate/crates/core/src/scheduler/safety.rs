//! Confidence gate on the scheduler's critic value.
//!
//! The gate tracks exponentially weighted estimates of the mean and absolute
//! dispersion of `V(s)` at decision time. A value whose z-score falls below
//! the threshold marks the state as out of distribution: the fallback message
//! replaces the scheduler's choice for `t_back` decisions, during which the
//! statistics are frozen, and the gate then re-arms.

use crate::config::SafetyConfig;
use crate::scheduler::ActivationMessage;

/// Keeps the dispersion strictly positive.
pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyGate {
    cfg: SafetyConfig,
    mean: f64,
    dispersion: f64,
    updates: usize,
    timer: usize,
    frozen: bool,
}

/// What the gate decided for one scheduling decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateDecision {
    pub message: ActivationMessage,
    pub gated: bool,
    /// z-score of the value, when statistics were updated for it.
    pub z: Option<f64>,
}

impl SafetyGate {
    pub fn new(cfg: SafetyConfig) -> Self {
        Self::with_state(cfg, 0.0, 1.0)
    }

    pub fn with_state(cfg: SafetyConfig, mean: f64, dispersion: f64) -> Self {
        Self {
            cfg,
            mean,
            dispersion: dispersion.max(SIGMA_FLOOR),
            updates: 0,
            timer: 0,
            frozen: false,
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn dispersion(&self) -> f64 {
        self.dispersion
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Decisions still to be overridden after the current one.
    pub fn timer(&self) -> usize {
        self.timer
    }

    pub fn config(&self) -> &SafetyConfig {
        &self.cfg
    }

    /// EWMA update with `value`; a frozen gate ignores it.
    pub fn update(&mut self, value: f64) {
        if self.frozen {
            return;
        }
        let beta = self.cfg.beta;
        let previous = self.mean;
        self.mean = (1.0 - beta) * self.mean + beta * value;
        self.dispersion = ((1.0 - beta) * self.dispersion + beta * (value - previous).abs()).max(SIGMA_FLOOR);
        self.updates += 1;
    }

    pub fn z_score(&self, value: f64) -> f64 {
        (value - self.mean) / self.dispersion
    }

    /// Passes `proposed` through or substitutes `fallback`.
    ///
    /// A disabled gate is a pass-through and keeps no statistics.
    pub fn decide(&mut self, value: f64, proposed: ActivationMessage, fallback: ActivationMessage) -> GateDecision {
        if !self.cfg.enabled {
            return GateDecision {
                message: proposed,
                gated: false,
                z: None,
            };
        }
        if self.timer > 0 {
            self.timer -= 1;
            if self.timer == 0 {
                self.frozen = false;
            }
            return GateDecision {
                message: fallback,
                gated: true,
                z: None,
            };
        }
        self.update(value);
        let z = self.z_score(value);
        if self.updates > self.cfg.warmup && z < self.cfg.z_threshold {
            self.timer = self.cfg.t_back - 1;
            self.frozen = self.timer > 0;
            return GateDecision {
                message: fallback,
                gated: true,
                z: Some(z),
            };
        }
        GateDecision {
            message: proposed,
            gated: false,
            z: Some(z),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(beta: f64) -> SafetyConfig {
        SafetyConfig {
            enabled: true,
            beta,
            ..SafetyConfig::default()
        }
    }

    const PROPOSED: ActivationMessage = ActivationMessage::Retain { power: true, rbg: true };
    const FALLBACK: ActivationMessage = ActivationMessage::Pairing([false, false, true, true]);

    #[test]
    fn half_step_update_arithmetic() {
        let mut gate = SafetyGate::new(cfg(0.5));
        gate.update(-4.0);
        assert_eq!(gate.mean(), -2.0);
        assert_eq!(gate.dispersion(), 2.5);
        assert!((gate.z_score(-4.0) - -0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_beta_keeps_state() {
        let mut gate = SafetyGate::with_state(cfg(0.0), 0.3, 0.7);
        gate.update(100.0);
        assert_eq!((gate.mean(), gate.dispersion()), (0.3, 0.7));
    }

    #[test]
    fn small_deviation_passes() {
        let mut gate = SafetyGate::with_state(cfg(0.5), -2.0, 2.5);
        gate.updates = 100;
        let d = gate.decide(-2.5, PROPOSED, FALLBACK);
        assert_eq!(d.message, PROPOSED);
        assert!(!d.gated);
    }

    #[test]
    fn anomaly_overrides_exactly_t_back_decisions() {
        let mut gate = SafetyGate::new(cfg(0.05));
        let normal = |i: usize| 1.0 + 0.01 * ((i * 7) % 5) as f64;
        for i in 0..40 {
            assert!(!gate.decide(normal(i), PROPOSED, FALLBACK).gated);
        }
        let (m, s) = (gate.mean(), gate.dispersion());
        let first = gate.decide(m - 10.0 * s, PROPOSED, FALLBACK);
        assert!(first.gated && first.message == FALLBACK);
        let (m_trig, s_trig) = (gate.mean(), gate.dispersion());
        assert!(gate.is_frozen());
        for i in 0..2 {
            let d = gate.decide(-1e6, PROPOSED, FALLBACK);
            assert!(d.gated, "decision {i}");
            assert_eq!((gate.mean(), gate.dispersion()), (m_trig, s_trig));
        }
        assert!(!gate.is_frozen());
        let after = gate.decide(m_trig, PROPOSED, FALLBACK);
        assert!(!after.gated);
        assert_eq!(after.message, PROPOSED);
    }

    #[test]
    fn warmup_suppresses_early_triggers() {
        let mut gate = SafetyGate::new(cfg(0.05));
        for _ in 0..20 {
            assert!(!gate.decide(-1e3, PROPOSED, FALLBACK).gated);
        }
    }

    #[test]
    fn disabled_gate_is_transparent() {
        let mut gate = SafetyGate::new(SafetyConfig::default());
        for v in [0.0, -1e9, 5.0] {
            assert_eq!(gate.decide(v, PROPOSED, FALLBACK).message, PROPOSED);
        }
        assert_eq!(gate.updates(), 0);
    }

    #[test]
    fn single_decision_back_off_never_freezes() {
        let mut gate = SafetyGate::new(SafetyConfig {
            t_back: 1,
            ..cfg(0.05)
        });
        gate.updates = 50;
        assert!(gate.decide(-1e3, PROPOSED, FALLBACK).gated);
        assert!(!gate.is_frozen());
        assert!(!gate.decide(gate.mean(), PROPOSED, FALLBACK).gated);
    }
}
