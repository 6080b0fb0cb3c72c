use oran_lab::config::LabConfig;
use oran_lab::env::{EpisodeContext, Environment};
use oran_lab::harness::{evaluate, ExperimentSpec, Regime, Schedulers};
use oran_lab::rl::{A2CHyper, ActorCritic, Checkpoint};
use oran_lab::scheduler::{
    period_reward, run_episode, ActivationMessage, Controller, Driver, Method, SafetyGate, STATE_DIM,
};
use oran_lab::xapps::{FeatureScale, XAppKind, XAppPool};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn lab() -> LabConfig {
    let mut lab = LabConfig::desk();
    lab.model.hidden = vec![16];
    lab.model.scheduler_hidden = vec![16];
    lab
}

fn pool(lab: &LabConfig, seed: u64) -> XAppPool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = &lab.network;
    let mut make = |kind: XAppKind| Checkpoint {
        kind: kind.tag().to_string(),
        net: ActorCritic::new(XAppKind::input_dim(cfg), &[16], &kind.head_sizes(cfg).unwrap(), &mut rng).unwrap(),
        hyper: A2CHyper::default(),
        episodes: 0,
        seed,
    };
    let power = make(XAppKind::PowerA2C);
    let rbg = make(XAppKind::RbgA2C);
    XAppPool::new(&power, &rbg, cfg).unwrap()
}

fn ctx() -> EpisodeContext {
    EpisodeContext {
        arrival_rate_bps: 5e6,
        mean_speed_mps: 25.0,
    }
}

#[test]
fn retain_keeps_the_inactive_family_fixed() {
    let lab = lab();
    let pool = pool(&lab, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let env = Environment::new(lab.network.clone(), 0, ctx(), &mut rng).unwrap();
    let scale = FeatureScale::new(&lab.network, lab.scheduler.arrival_norm_bps);
    let mut controller = Controller::new(&env);
    let reset = env.reset_allocation();

    let power_only = ActivationMessage::Retain { power: true, rbg: false };
    let a = controller.allocation(&power_only, &pool, &env, &scale, &mut rng).unwrap();
    assert_eq!(a.owners(), reset.owners());

    let rbg_only = ActivationMessage::Retain { power: false, rbg: true };
    let b = controller.allocation(&rbg_only, &pool, &env, &scale, &mut rng).unwrap();
    assert_eq!(b.power_levels(), a.power_levels());

    // Greedy xApps on an unchanged state give the same answer again.
    let c = controller.allocation(&rbg_only, &pool, &env, &scale, &mut rng).unwrap();
    assert_eq!(b, c);
}

#[test]
fn baseline_pairing_is_the_reset_allocation() {
    let lab = lab();
    let pool = pool(&lab, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let env = Environment::new(lab.network.clone(), 0, ctx(), &mut rng).unwrap();
    let scale = FeatureScale::new(&lab.network, lab.scheduler.arrival_norm_bps);
    let mut controller = Controller::new(&env);
    let msg = ActivationMessage::Pairing([false, false, true, true]);
    let alloc = controller.allocation(&msg, &pool, &env, &scale, &mut rng).unwrap();
    assert_eq!(alloc, env.reset_allocation());
}

#[test]
fn scheduler_feedback_is_the_previous_period_reward() {
    let lab = lab();
    let pool = pool(&lab, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let net = ActorCritic::new(STATE_DIM, &[16], &[Method::Two.num_options()], &mut rng).unwrap();
    let mut env = Environment::new(lab.network.clone(), 0, ctx(), &mut rng).unwrap();
    let mut driver = Driver::Scheduler {
        method: Method::Two,
        net: &net,
        explore: true,
        gate: None,
    };
    let mut env_rng = ChaCha8Rng::seed_from_u64(7);
    let mut policy_rng = ChaCha8Rng::seed_from_u64(8);
    let trace = run_episode(&mut env, &pool, &lab, &mut driver, 0, ctx(), &mut env_rng, &mut policy_rng).unwrap();

    let period = lab.scheduler.period_slots;
    assert_eq!(trace.periods.len(), lab.network.slots_per_episode / period);
    assert_eq!(trace.slot_rates_bps.len(), lab.network.slots_per_episode);
    assert_eq!(trace.periods[0].f, 0.0);
    for (i, p) in trace.periods.iter().enumerate() {
        let rates = &trace.slot_rates_bps[i * period..(i + 1) * period];
        assert_eq!(p.reward, period_reward(rates, ctx().arrival_rate_bps, &lab));
        if i > 0 {
            assert_eq!(p.f, trace.periods[i - 1].reward);
        }
        assert!(p.action.is_some() && p.value.is_some() && p.log_prob.is_some());
        assert!(!p.gated);
    }
    // Period rewards average to the episode reward.
    let mean = trace.periods.iter().map(|p| p.reward).sum::<f64>() / trace.periods.len() as f64;
    assert!((mean - trace.tau_e).abs() < 1e-12);
}

#[test]
fn fixed_regimes_share_the_environment_draws() {
    let lab = lab();
    let pool = pool(&lab, 9);
    let mut finals = Vec::new();
    for regime in [Regime::PowerOnly, Regime::RbgOnly, Regime::Both] {
        let mut env_rng = ChaCha8Rng::seed_from_u64(10);
        let mut policy_rng = ChaCha8Rng::seed_from_u64(11);
        let mut env = Environment::new(lab.network.clone(), 0, ctx(), &mut env_rng).unwrap();
        let mut driver = Driver::Fixed(regime.fixed_message().unwrap());
        run_episode(&mut env, &pool, &lab, &mut driver, 0, ctx(), &mut env_rng, &mut policy_rng).unwrap();
        finals.push((env.state().users.clone(), env.state().shadowing_db.clone()));
    }
    assert!(finals.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn evaluation_is_deterministic_and_job_count_invariant() {
    let lab = lab();
    let pool = pool(&lab, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let schedulers = Schedulers {
        method1: Some(ActorCritic::new(STATE_DIM, &[16], &[3], &mut rng).unwrap()),
        method2: Some(ActorCritic::new(STATE_DIM, &[16], &[4], &mut rng).unwrap()),
    };
    let spec = ExperimentSpec {
        episodes_per_cell: 2,
        seeds: vec![1, 2],
        ..ExperimentSpec::desk()
    };
    let a = evaluate(&spec, &lab, &pool, &schedulers, 1).unwrap();
    let b = evaluate(&spec, &lab, &pool, &schedulers, 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.metrics.len(), 5 * 9 * 2 * 2);
    // Regimes are paired: each covers the same cells, seeds and episodes.
    for regime in Regime::ALL {
        let keys: Vec<_> = a
            .metrics
            .iter()
            .filter(|r| r.regime == regime)
            .map(|r| (r.d_bps.to_bits(), r.v_mps.to_bits(), r.seed, r.episode))
            .collect();
        assert_eq!(keys.len(), 36);
    }
}

#[test]
fn gate_falls_back_for_t_back_decisions_inside_episodes() {
    let mut lab = lab();
    lab.safety.enabled = true;
    lab.safety.warmup = 0;
    lab.safety.z_threshold = 0.5; // Anything at or below the mean is anomalous.
    let t_back = lab.safety.t_back;
    let pool = pool(&lab, 14);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let net = ActorCritic::new(STATE_DIM, &[16], &[Method::One.num_options()], &mut rng).unwrap();
    let mut gate = SafetyGate::new(lab.safety.clone());
    let mut env = Environment::new(lab.network.clone(), 0, ctx(), &mut rng).unwrap();
    let mut gated = Vec::new();
    for episode in 0..4 {
        let mut driver = Driver::Scheduler {
            method: Method::One,
            net: &net,
            explore: false,
            gate: Some(&mut gate),
        };
        let mut env_rng = ChaCha8Rng::seed_from_u64(100 + episode);
        let trace = run_episode(&mut env, &pool, &lab, &mut driver, episode, ctx(), &mut env_rng, &mut rng).unwrap();
        for p in &trace.periods {
            if p.gated {
                assert_eq!(p.message, Method::One.fallback(lab.safety.fallback));
            }
            gated.push(p.gated);
        }
    }
    assert!(gated.iter().any(|&g| g));
    // Every back-off run lasts exactly t_back decisions (the last may be cut off).
    let mut run = 0;
    for (i, &g) in gated.iter().enumerate() {
        if g {
            run += 1;
        } else {
            assert!(run == 0 || run % t_back == 0, "back-off of {run} decisions ending at {i}");
            run = 0;
        }
    }
}
