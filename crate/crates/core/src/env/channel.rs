//! Large-scale propagation, CSI and SINR.

use crate::config::NetworkConfig;
use crate::env::{Allocation, Position};
use crate::env::power::PowerSet;

/// Distances below this are clamped before taking the log.
pub const MIN_DISTANCE_M: f64 = 1.0;

/// Linear gain from log-distance path loss plus a shadowing term in dB.
pub fn channel_gain(cfg: &NetworkConfig, oru: Position, user: Position, shadow_db: f64) -> f64 {
    let distance_km = oru.distance(user).max(MIN_DISTANCE_M) / 1000.0;
    let loss_db =
        cfg.pathloss_intercept_db + cfg.pathloss_slope_db * distance_km.log10() + shadow_db;
    10f64.powf(-loss_db / 10.0)
}

/// Linear gains `h(b, u)` for every O-RU/user pair, O-RU major.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    num_users: usize,
    values: Vec<f64>,
}

impl GainMatrix {
    pub fn new(num_orus: usize, num_users: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), num_orus * num_users, "gain matrix shape");
        Self { num_users, values }
    }

    pub fn get(&self, oru: usize, user: usize) -> f64 {
        self.values[oru * self.num_users + user]
    }

    pub fn num_orus(&self) -> usize {
        self.values.len() / self.num_users
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Log-normalized CSI for each (b, r): `log2(1 + Σ_{b'≠b} h(b', u) / h(b, u))`
/// where `u` owns (b, r). Non-finite or oversized values are clamped to `csi_max`.
pub fn compute_csi(gains: &GainMatrix, alloc: &Allocation, csi_max: f64) -> Vec<f64> {
    let num_orus = gains.num_orus();
    let rbgs = alloc.rbgs_per_oru();
    let mut out = Vec::with_capacity(num_orus * rbgs);
    for b in 0..num_orus {
        for r in 0..rbgs {
            let user = alloc.owner(b, r);
            let serving = gains.get(b, user);
            let interfering: f64 = (0..num_orus)
                .filter(|&other| other != b)
                .map(|other| gains.get(other, user))
                .sum();
            let zeta = (1.0 + interfering / serving).log2();
            out.push(if zeta.is_finite() { zeta.min(csi_max) } else { csi_max });
        }
    }
    out
}

/// SINR and Shannon capacity (bits/s) for each (b, r). Interference on RBG `r`
/// comes from the same RBG index at every other O-RU, received at the owner of (b, r).
pub fn compute_sinr_capacity(
    gains: &GainMatrix,
    alloc: &Allocation,
    power_set: &PowerSet,
    noise_mw: f64,
    rbg_bandwidth_hz: f64,
) -> Vec<(f64, f64)> {
    let num_orus = gains.num_orus();
    let rbgs = alloc.rbgs_per_oru();
    let mut out = Vec::with_capacity(num_orus * rbgs);
    for b in 0..num_orus {
        for r in 0..rbgs {
            let user = alloc.owner(b, r);
            let signal = gains.get(b, user) * power_set.mw(alloc.power_level(b, r));
            let interference: f64 = (0..num_orus)
                .filter(|&other| other != b)
                .map(|other| gains.get(other, user) * power_set.mw(alloc.power_level(other, r)))
                .sum();
            let sinr = signal / (interference + noise_mw);
            out.push((sinr, rbg_bandwidth_hz * (1.0 + sinr).log2()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::power::build_power_set;

    fn alloc(num_orus: usize, rbgs: usize, owner: Vec<usize>, power: Vec<usize>) -> Allocation {
        Allocation::new(num_orus, rbgs, owner, power)
    }

    fn at(x: f64, y: f64) -> Position {
        Position { x, y }
    }

    #[test]
    fn one_km_reference_loss() {
        let cfg = NetworkConfig::default();
        let g = channel_gain(&cfg, at(0.0, 0.0), at(1000.0, 0.0), 0.0);
        assert!((g / 10f64.powf(-12.09) - 1.0).abs() < 1e-12);
        let shadowed = channel_gain(&cfg, at(0.0, 0.0), at(0.0, 1000.0), 8.0);
        assert!((shadowed / 10f64.powf(-12.89) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_decade_closer_removes_slope() {
        let cfg = NetworkConfig::default();
        let g = channel_gain(&cfg, at(0.0, 0.0), at(100.0, 0.0), 0.0);
        assert!((-10.0 * g.log10() - 83.3).abs() < 1e-9);
    }

    #[test]
    fn distance_is_clamped_at_one_metre() {
        let cfg = NetworkConfig::default();
        let co_located = channel_gain(&cfg, at(5.0, 5.0), at(5.0, 5.0), 0.0);
        let one_metre = channel_gain(&cfg, at(0.0, 0.0), at(1.0, 0.0), 0.0);
        assert!(co_located.is_finite());
        assert_eq!(co_located, one_metre);
    }

    #[test]
    fn csi_without_interferers_is_zero() {
        let gains = GainMatrix::new(1, 2, vec![1e-10, 3e-11]);
        let a = alloc(1, 2, vec![0, 1], vec![1, 1]);
        assert_eq!(compute_csi(&gains, &a, 30.0), vec![0.0, 0.0]);
    }

    #[test]
    fn csi_equal_gains_is_one_bit() {
        // user 0 served by O-RU 0, user 1 by O-RU 1; both see equal gains.
        let gains = GainMatrix::new(2, 2, vec![1e-9, 1e-9, 1e-9, 1e-9]);
        let a = alloc(2, 1, vec![0, 1], vec![1, 1]);
        assert_eq!(compute_csi(&gains, &a, 30.0), vec![1.0, 1.0]);
    }

    #[test]
    fn csi_clamps_when_serving_gain_underflows() {
        let gains = GainMatrix::new(2, 2, vec![0.0, 1e-9, 1e-9, 1e-9]);
        let a = alloc(2, 1, vec![0, 1], vec![1, 1]);
        assert_eq!(compute_csi(&gains, &a, 30.0)[0], 30.0);
    }

    #[test]
    fn single_cell_sinr() {
        let set = build_power_set(2.0, 8.0, 3).unwrap();
        let gains = GainMatrix::new(1, 1, vec![1.0]);
        let a = alloc(1, 1, vec![0], vec![1]);
        let (sinr, cap) = compute_sinr_capacity(&gains, &a, &set, 1.0, 1e6)[0];
        assert_eq!(sinr, 2.0);
        assert!((cap - 1e6 * 3f64.log2()).abs() < 1e-6);
    }

    #[test]
    fn silent_level_has_no_capacity() {
        let set = build_power_set(2.0, 8.0, 3).unwrap();
        let gains = GainMatrix::new(1, 1, vec![1.0]);
        let a = alloc(1, 1, vec![0], vec![0]);
        assert_eq!(compute_sinr_capacity(&gains, &a, &set, 1.0, 1e6)[0], (0.0, 0.0));
    }

    #[test]
    fn two_cell_interference() {
        // serving h·p = 1·4 = 4, interfering h·p = 0.5·4 = 2, noise 1 → 4/3.
        let set = build_power_set(4.0, 4.0, 2).unwrap();
        let gains = GainMatrix::new(2, 2, vec![1.0, 0.5, 0.5, 1.0]);
        let a = alloc(2, 1, vec![0, 1], vec![1, 1]);
        let (sinr, _) = compute_sinr_capacity(&gains, &a, &set, 1.0, 1.0)[0];
        assert!((sinr - 4.0 / 3.0).abs() < 1e-15);
    }
}
