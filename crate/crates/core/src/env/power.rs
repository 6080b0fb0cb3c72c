use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discrete transmit power levels in mW: a silent level followed by a
/// geometric ladder from `p_min` to `p_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSet {
    levels: Vec<f64>,
    ratio: f64,
}

impl PowerSet {
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Common ratio between consecutive nonzero levels.
    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn mw(&self, index: usize) -> f64 {
        self.levels[index]
    }

    pub fn max_mw(&self) -> f64 {
        self.levels[self.levels.len() - 1]
    }

    /// Index of the nonzero level closest (geometrically) to `sqrt(p_min * p_max)`.
    pub fn midpoint_index(&self) -> usize {
        let nonzero = &self.levels[1..];
        let target = (nonzero[0] * nonzero[nonzero.len() - 1]).sqrt().ln();
        let mut best = 1;
        let mut best_dist = f64::INFINITY;
        for (i, level) in nonzero.iter().enumerate() {
            let dist = (level.ln() - target).abs();
            // Strict comparison keeps the lower level on an exact tie.
            if dist < best_dist - 1e-12 {
                best = i + 1;
                best_dist = dist;
            }
        }
        best
    }
}

/// Builds `{0} ∪ {p_min·β^k : k = 0..K-2}` with `β = (p_max/p_min)^(1/(K-2))`.
pub fn build_power_set(p_min_mw: f64, p_max_mw: f64, levels: usize) -> Result<PowerSet> {
    if !(p_min_mw.is_finite() && p_min_mw > 0.0) {
        return Err(Error::config(format!("p_min must be > 0, got {p_min_mw}")));
    }
    if !(p_max_mw.is_finite() && p_max_mw >= p_min_mw) {
        return Err(Error::config(format!(
            "p_max ({p_max_mw}) must be >= p_min ({p_min_mw})"
        )));
    }
    if levels < 2 {
        return Err(Error::config(format!("need at least 2 power levels, got {levels}")));
    }
    if levels == 2 {
        if p_min_mw != p_max_mw {
            return Err(Error::config(
                "two power levels require p_min == p_max".to_string(),
            ));
        }
        return Ok(PowerSet {
            levels: vec![0.0, p_min_mw],
            ratio: 1.0,
        });
    }
    let steps = (levels - 2) as i32;
    let ratio = (p_max_mw / p_min_mw).powf(1.0 / steps as f64);
    let mut out = Vec::with_capacity(levels);
    out.push(0.0);
    out.extend((0..steps).map(|k| p_min_mw * ratio.powi(k)));
    out.push(p_max_mw);
    Ok(PowerSet { levels: out, ratio })
}
