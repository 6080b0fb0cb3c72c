use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the actor's advantage is formed from rewards and critic values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdvantageMode {
    /// `A_t = G_t - V(s_t)`.
    #[default]
    FullReturn,
    /// `A_t = τ_t + γ V(s_{t+1}) - V(s_t)`, with `V(s_T) = 0`.
    OneStep,
}

/// `G_t = Σ_{j=0}^{T-t-1} γ^j τ_{t+j}` by backward recursion.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::Empty("reward sequence"));
    }
    let mut out = vec![0.0; rewards.len()];
    let mut running = 0.0;
    for (g, &r) in out.iter_mut().zip(rewards).rev() {
        running = r + gamma * running;
        *g = running;
    }
    Ok(out)
}

pub fn advantages(rewards: &[f64], values: &[f64], gamma: f64, mode: AdvantageMode) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::Empty("reward sequence"));
    }
    if values.len() != rewards.len() {
        return Err(Error::Dimension {
            what: "critic values",
            expected: rewards.len(),
            got: values.len(),
        });
    }
    Ok(match mode {
        AdvantageMode::FullReturn => discounted_returns(rewards, gamma)?
            .iter()
            .zip(values)
            .map(|(g, v)| g - v)
            .collect(),
        AdvantageMode::OneStep => (0..rewards.len())
            .map(|t| {
                let next = values.get(t + 1).copied().unwrap_or(0.0);
                rewards[t] + gamma * next - values[t]
            })
            .collect(),
    })
}
