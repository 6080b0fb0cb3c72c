//! Multi-head categorical policies.
//!
//! The actor's output vector is cut into consecutive heads, one per
//! independent decision, and each head is soft-maxed on its own. A joint
//! action is one index per head and its log-probability is the sum of the
//! per-head log-probabilities.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rl::Mlp;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    head_sizes: Vec<usize>,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

fn softmax_into(logits: &[f64], out: &mut Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let start = out.len();
    let mut total = 0.0;
    for &z in logits {
        let e = (z - max).exp();
        total += e;
        out.push(e);
    }
    for p in &mut out[start..] {
        *p /= total;
    }
}

impl PolicyOutput {
    pub fn from_logits(logits: Vec<f64>, head_sizes: &[usize]) -> Result<Self> {
        let width: usize = head_sizes.iter().sum();
        if width != logits.len() {
            return Err(Error::Dimension {
                what: "policy logits",
                expected: width,
                got: logits.len(),
            });
        }
        if head_sizes.contains(&0) {
            return Err(Error::config("policy heads must have at least one action"));
        }
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("policy logits"));
        }
        let mut probs = Vec::with_capacity(width);
        let mut offset = 0;
        for &n in head_sizes {
            softmax_into(&logits[offset..offset + n], &mut probs);
            offset += n;
        }
        Ok(Self {
            head_sizes: head_sizes.to_vec(),
            logits,
            probs,
        })
    }

    /// Builds a policy directly from per-head probabilities (for tests and
    /// scripted controllers); logits are their natural logs.
    pub fn from_probs(heads: &[Vec<f64>]) -> Result<Self> {
        let head_sizes: Vec<usize> = heads.iter().map(Vec::len).collect();
        for head in heads {
            let total: f64 = head.iter().sum();
            if head.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::invariant("head probabilities must be a distribution"));
            }
        }
        let probs: Vec<f64> = heads.iter().flatten().copied().collect();
        let logits = probs.iter().map(|p| p.ln()).collect();
        Ok(Self {
            head_sizes,
            logits,
            probs,
        })
    }

    pub fn num_heads(&self) -> usize {
        self.head_sizes.len()
    }

    pub fn head_sizes(&self) -> &[usize] {
        &self.head_sizes
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn heads(&self) -> impl Iterator<Item = &[f64]> + '_ {
        let mut offset = 0;
        self.head_sizes.iter().map(move |&n| {
            let head = &self.probs[offset..offset + n];
            offset += n;
            head
        })
    }

    pub fn head(&self, i: usize) -> &[f64] {
        self.heads().nth(i).expect("head index in range")
    }

    /// Samples every head independently by inverse CDF.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        self.heads()
            .map(|head| {
                let u: f64 = rng.random();
                let mut cumulative = 0.0;
                let mut last_positive = 0;
                for (i, &p) in head.iter().enumerate() {
                    cumulative += p;
                    if p > 0.0 {
                        last_positive = i;
                    }
                    if u < cumulative {
                        return i;
                    }
                }
                // Rounding left the cumulative sum just under u.
                last_positive
            })
            .collect()
    }

    /// Most likely index per head; ties go to the lowest index.
    pub fn greedy(&self) -> Vec<usize> {
        self.heads()
            .map(|head| {
                let mut best = 0;
                for (i, &p) in head.iter().enumerate() {
                    if p > head[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }

    pub fn act<R: Rng + ?Sized>(&self, rng: &mut R, explore: bool) -> Vec<usize> {
        if explore { self.sample(rng) } else { self.greedy() }
    }

    /// `Σ_h log π_h(a_h)`.
    pub fn log_prob(&self, actions: &[usize]) -> f64 {
        assert_eq!(actions.len(), self.num_heads(), "one action per head");
        self.heads().zip(actions).map(|(head, &a)| head[a].ln()).sum()
    }

    pub fn head_log_probs(&self, actions: &[usize]) -> Vec<f64> {
        self.heads().zip(actions).map(|(head, &a)| head[a].ln()).collect()
    }
}

/// Runs the actor and splits its output into categorical heads.
pub fn actor_forward(actor: &Mlp, state: &[f64], head_sizes: &[usize]) -> Result<PolicyOutput> {
    if actor.output_dim() != head_sizes.iter().sum::<usize>() {
        return Err(Error::Dimension {
            what: "actor output width",
            expected: head_sizes.iter().sum(),
            got: actor.output_dim(),
        });
    }
    PolicyOutput::from_logits(actor.forward(state)?, head_sizes)
}
