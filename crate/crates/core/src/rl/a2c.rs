//! Advantage actor-critic: combined loss with analytic gradients, Adam with
//! global-norm clipping, and a learner that applies one update per trajectory.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rl::policy::{actor_forward, PolicyOutput};
use crate::rl::returns::{advantages, discounted_returns, AdvantageMode};
use crate::rl::Mlp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct A2CHyper {
    pub learning_rate: f64,
    pub gamma: f64,
    /// Weight `α` of the squared value error.
    pub value_weight: f64,
    pub clip_norm: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub advantage_mode: AdvantageMode,
}

impl Default for A2CHyper {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            gamma: 0.95,
            value_weight: 0.5,
            clip_norm: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            advantage_mode: AdvantageMode::FullReturn,
        }
    }
}

impl A2CHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be > 0"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("gamma must lie in (0, 1)"));
        }
        if !(self.value_weight > 0.0 && self.value_weight.is_finite()) {
            return Err(Error::config("value_weight must be > 0"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::config("clip_norm must be > 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("beta1 and beta2 must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon must be > 0"));
        }
        Ok(())
    }
}

/// Actor and critic networks plus the actor's head layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub actor: Mlp,
    pub critic: Mlp,
    pub head_sizes: Vec<usize>,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        head_sizes: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let mut actor_dims = vec![input_dim];
        actor_dims.extend_from_slice(hidden);
        let mut critic_dims = actor_dims.clone();
        actor_dims.push(head_sizes.iter().sum());
        critic_dims.push(1);
        // Small output weights start the actor near uniform.
        let actor = Mlp::init(&actor_dims, 0.01, rng)?;
        let critic = Mlp::init(&critic_dims, 1.0, rng)?;
        Self::from_parts(actor, critic, head_sizes.to_vec())
    }

    pub fn from_parts(actor: Mlp, critic: Mlp, head_sizes: Vec<usize>) -> Result<Self> {
        if actor.output_dim() != head_sizes.iter().sum::<usize>() {
            return Err(Error::Dimension {
                what: "actor output width",
                expected: head_sizes.iter().sum(),
                got: actor.output_dim(),
            });
        }
        if critic.output_dim() != 1 || critic.input_dim() != actor.input_dim() {
            return Err(Error::Dimension {
                what: "critic shape",
                expected: actor.input_dim(),
                got: critic.input_dim(),
            });
        }
        Ok(Self {
            actor,
            critic,
            head_sizes,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn policy(&self, state: &[f64]) -> Result<PolicyOutput> {
        actor_forward(&self.actor, state, &self.head_sizes)
    }

    pub fn value(&self, state: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(state)?[0])
    }
}

/// One decision of an on-policy rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub state: Vec<f64>,
    pub actions: Vec<usize>,
    pub reward: f64,
    pub value: f64,
    pub log_prob: f64,
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub actor_loss: f64,
    pub value_loss: f64,
    pub actor_grad: Vec<f64>,
    pub critic_grad: Vec<f64>,
}

/// `L = -Σ A_t log π(a_t|s_t) + α Σ (G_t - V(s_t))²` with the advantages held
/// constant, plus its gradients with respect to actor and critic parameters.
pub fn combined_loss(
    net: &ActorCritic,
    steps: &[TrajectoryStep],
    advantages: &[f64],
    returns: &[f64],
    value_weight: f64,
) -> Result<LossOutput> {
    if steps.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    for (what, len) in [("advantages", advantages.len()), ("returns", returns.len())] {
        if len != steps.len() {
            return Err(Error::Dimension {
                what,
                expected: steps.len(),
                got: len,
            });
        }
    }
    let mut actor_grad = vec![0.0; net.actor.num_params()];
    let mut critic_grad = vec![0.0; net.critic.num_params()];
    let mut actor_loss = 0.0;
    let mut value_loss = 0.0;
    for ((step, &adv), &ret) in steps.iter().zip(advantages).zip(returns) {
        let trace = net.actor.forward_trace(&step.state)?;
        let policy = PolicyOutput::from_logits(trace.output().to_vec(), &net.head_sizes)?;
        if step.actions.len() != policy.num_heads() {
            return Err(Error::Dimension {
                what: "actions per step",
                expected: policy.num_heads(),
                got: step.actions.len(),
            });
        }
        actor_loss -= adv * policy.log_prob(&step.actions);
        // d(-A log π)/dz = -A (onehot(a) - p) per head.
        let mut d_logits: Vec<f64> = policy.probs().iter().map(|p| adv * p).collect();
        let mut offset = 0;
        for (&n, &a) in net.head_sizes.iter().zip(&step.actions) {
            d_logits[offset + a] -= adv;
            offset += n;
        }
        net.actor.backward(&trace, &d_logits, &mut actor_grad);

        let critic_trace = net.critic.forward_trace(&step.state)?;
        let value = critic_trace.output()[0];
        let err = ret - value;
        value_loss += err * err;
        net.critic.backward(&critic_trace, &[-2.0 * value_weight * err], &mut critic_grad);
    }
    let loss = actor_loss + value_weight * value_loss;
    if !loss.is_finite() {
        return Err(Error::NonFinite("A2C loss"));
    }
    if actor_grad.iter().chain(&critic_grad).any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("A2C gradients"));
    }
    Ok(LossOutput {
        loss,
        actor_loss,
        value_loss,
        actor_grad,
        critic_grad,
    })
}

/// Scales all gradient buffers together so their joint L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut().flat_map(|g| g.iter_mut()) {
            *g *= scale;
        }
    }
    norm
}

/// Adaptive-moment optimizer state for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, hyper: &A2CHyper) -> Self {
        Self {
            learning_rate: hyper.learning_rate,
            beta1: hyper.beta1,
            beta2: hyper.beta2,
            epsilon: hyper.epsilon,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension {
                what: "optimizer parameter count",
                expected: self.m.len(),
                got: params.len().max(grads.len()),
            });
        }
        self.step += 1;
        let bias1 = 1.0 - self.beta1.powi(self.step as i32);
        let bias2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub loss: f64,
    pub actor_loss: f64,
    pub value_loss: f64,
    pub grad_norm: f64,
}

/// An actor-critic under training: networks, optimizer state and hyperparameters.
#[derive(Debug, Clone)]
pub struct A2CLearner {
    pub net: ActorCritic,
    pub hyper: A2CHyper,
    actor_opt: Adam,
    critic_opt: Adam,
}

impl A2CLearner {
    pub fn new(net: ActorCritic, hyper: A2CHyper) -> Result<Self> {
        hyper.validate()?;
        let actor_opt = Adam::new(net.actor.num_params(), &hyper);
        let critic_opt = Adam::new(net.critic.num_params(), &hyper);
        Ok(Self {
            net,
            hyper,
            actor_opt,
            critic_opt,
        })
    }

    pub fn into_net(self) -> ActorCritic {
        self.net
    }

    /// One gradient step from a complete on-policy trajectory.
    pub fn update(&mut self, steps: &[TrajectoryStep]) -> Result<UpdateStats> {
        let rewards: Vec<f64> = steps.iter().map(|s| s.reward).collect();
        let values: Vec<f64> = steps.iter().map(|s| s.value).collect();
        let returns = discounted_returns(&rewards, self.hyper.gamma)?;
        let adv = advantages(&rewards, &values, self.hyper.gamma, self.hyper.advantage_mode)?;
        let mut out = combined_loss(&self.net, steps, &adv, &returns, self.hyper.value_weight)?;
        let grad_norm = clip_global_norm(
            &mut [&mut out.actor_grad, &mut out.critic_grad],
            self.hyper.clip_norm,
        );
        self.actor_opt.step(self.net.actor.params_mut(), &out.actor_grad)?;
        self.critic_opt.step(self.net.critic.params_mut(), &out.critic_grad)?;
        Ok(UpdateStats {
            loss: out.loss,
            actor_loss: out.actor_loss,
            value_loss: out.value_loss,
            grad_norm,
        })
    }
}
