//! End-to-end acceptance gate. Each test covers one numbered criterion and
//! prints a `criterion N ... PASS` line when it holds.

use std::path::{Path, PathBuf};
use std::process::Command;

use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use memgrid::checkpoint::Checkpoint;
use memgrid::config::SystemConfig;
use memgrid::devices::{
    self, BatteryHealth, ChpParams, DeviceRun, EfficiencyPolynomial, StorageParams, StorageState,
};
use memgrid::environment::{
    denormalize_action, perturb_profile, replay_actions, run_episode, DayProfile,
    GreedyPolicy, MicrogridEnv, ProfileChannel, RandomPolicy, RenewableScenario,
};
use memgrid::io;
use memgrid::neural::{
    adam_step, finite_diff_check_summary, soft_update, Activation, AdamState, DenseNetwork,
    LayerSpec, Matrix,
};
use memgrid::scengen::{
    self, coverage_index, discriminator_loss, envelope_index, generator_loss, PairedSeries,
};
use memgrid::td3::{target_value, ReplayBuffer, Td3Agent, Transition};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn fixture_config(name: &str) -> SystemConfig {
    SystemConfig::load(&fixture(name)).expect("fixture config")
}

fn fixture_profile(name: &str) -> DayProfile {
    io::read_profile(&fixture(name)).expect("fixture profile")
}

// --- criterion 1: device oracles -------------------------------------------

#[test]
fn criterion_1_device_oracles() {
    // Polynomial efficiency at half load.
    let poly = EfficiencyPolynomial::new(vec![0.2, 0.3, -0.15], 1200.0, 0.05);
    assert_relative_eq!(poly.at_ratio(0.5), 0.3125, max_relative = 1e-9);

    // CHP at 600 kW: eta_e(0.5) = 0.3125 -> gas 1920 kW, heat 780 kW at
    // h2e = 1.3.
    let chp = ChpParams {
        electric_efficiency: poly.clone(),
        heat_to_electric: EfficiencyPolynomial::constant(1.3, 1200.0, 0.05),
    };
    match devices::chp_step(&chp, 600.0).unwrap() {
        DeviceRun::On(flow) => {
            assert_relative_eq!(flow.gas_in, 1920.0, max_relative = 1e-9);
            assert_relative_eq!(flow.heat_out, 780.0, max_relative = 1e-9);
        }
        DeviceRun::Off => panic!("chp off"),
    }

    // Boiler, chiller, absorption chiller worked values.
    let gb = EfficiencyPolynomial::constant(0.85, 2500.0, 0.05);
    match devices::gb_step(&gb, 1250.0).unwrap() {
        DeviceRun::On(gas) => assert_relative_eq!(gas, 1470.5882352941176, max_relative = 1e-9),
        DeviceRun::Off => panic!("gb off"),
    }
    let ec = EfficiencyPolynomial::constant(2.75, 4000.0, 0.05);
    match devices::ec_step(&ec, 2000.0).unwrap() {
        DeviceRun::On(p) => assert_relative_eq!(p, 727.2727272727273, max_relative = 1e-9),
        DeviceRun::Off => panic!("ec off"),
    }
    let ac = EfficiencyPolynomial::constant(0.7, 2500.0, 0.05);
    match devices::ac_step(&ac, 1250.0).unwrap() {
        DeviceRun::On(h) => assert_relative_eq!(h, 1785.7142857142858, max_relative = 1e-9),
        DeviceRun::Off => panic!("ac off"),
    }

    // Storage charge and discharge steps.
    let params = StorageParams {
        capacity_kwh: 1200.0,
        decay: 0.999,
        eta_ch: 0.95,
        eta_dis: 0.95,
        p_ch_max: 500.0,
        p_dis_max: 500.0,
        soc_min: 0.1,
        soc_max: 0.9,
    };
    let charged = devices::storage_step(&StorageState::new(0.5), &params, 100.0, 0.0, 1.0).unwrap();
    assert_relative_eq!(charged.soc, 0.5786666666666667, max_relative = 1e-9);
    let discharged =
        devices::storage_step(&StorageState::new(0.6), &params, 0.0, 95.0, 1.0).unwrap();
    assert_relative_eq!(discharged.soc, 0.5160666666666667, max_relative = 1e-9);

    // Battery aging at the charged state.
    let health = BatteryHealth::new(1.0, 0.8, 4000.0);
    let state = StorageState::with_health(charged.soc, health);
    let age = devices::aging_increment(state.soc, &params, &health, 100.0, 0.0, 1.0);
    assert_relative_eq!(
        age.calendric,
        6.6148e-6 * charged.soc + 4.6404e-6,
        max_relative = 1e-9
    );
    assert_relative_eq!(age.cyclic, 9.895833333333334e-6, max_relative = 1e-9);
    let aged = devices::ess_age(&state, &params, 100.0, 0.0, 1.0);
    assert_relative_eq!(1.0 - aged.soh, 0.2 * age.total(), max_relative = 1e-9);

    // SOH monotone over 1e5 random feasible steps.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut state = StorageState::with_health(0.5, BatteryHealth::new(1.0, 0.8, 4000.0));
    let mut prev = 1.0f64;
    for _ in 0..100_000 {
        let (max_ch, max_dis) = devices::feasible_storage_range(&state, &params, 1.0);
        let (ch, dis) = if rng.gen_bool(0.5) {
            (rng.gen_range(0.0..=max_ch), 0.0)
        } else {
            (0.0, rng.gen_range(0.0..=max_dis))
        };
        let mut next = devices::storage_step(&state, &params, ch, dis, 1.0).unwrap();
        let health = devices::ess_age(
            &StorageState {
                health: state.health,
                ..next
            },
            &params,
            ch,
            dis,
            1.0,
        );
        assert!(health.soh <= prev);
        assert!(health.soh >= 0.8);
        prev = health.soh;
        next.health = Some(health);
        state = next;
    }

    println!("criterion 1 (device oracles): PASS");
}

// --- criterion 2: balance ledger -------------------------------------------

#[test]
fn criterion_2_balance_ledger() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let base = SystemConfig::default();
    for _ in 0..10_000 {
        let mut cfg = base.clone();
        for unit in [&mut cfg.storage.ess, &mut cfg.storage.tss, &mut cfg.storage.css] {
            unit.soc_init = rng.gen_range(unit.soc_min..unit.soc_max);
        }
        let profile = DayProfile {
            wt_kw: vec![rng.gen_range(0.0..500.0)],
            pv_kw: vec![rng.gen_range(0.0..500.0)],
            p_load_kw: vec![rng.gen_range(0.0..3000.0)],
            h_load_kw: vec![rng.gen_range(0.0..2500.0)],
            q_load_kw: vec![rng.gen_range(0.0..2500.0)],
            price_e_per_kwh: vec![rng.gen_range(0.01..0.3)],
        };
        let mut env = MicrogridEnv::new(&cfg, profile.clone()).unwrap();
        let raw = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let action = denormalize_action(&raw, env.boxes());
        let s = env.step(&action).unwrap();
        let l = &s.ledger;

        // Carrier balances close exactly against the reported imbalance.
        let e = l.p_grid_kw + l.wt_kw + l.pv_kw + l.p_chp_kw + l.ess_dis_kw
            - profile.p_load_kw[0]
            - l.p_ec_kw
            - l.ess_ch_kw;
        assert_relative_eq!(e, s.imbalance_e_kwh, max_relative = 1e-9, epsilon = 1e-9);
        let h = l.h_chp_kw + l.h_gb_kw + l.tss_dis_kw
            - profile.h_load_kw[0]
            - l.h_ac_kw
            - l.tss_ch_kw;
        assert_relative_eq!(h, s.imbalance_h_kwh, max_relative = 1e-9, epsilon = 1e-9);
        let c = l.q_ec_kw + l.q_ac_kw + l.css_dis_kw - profile.q_load_kw[0] - l.css_ch_kw;
        assert_relative_eq!(c, s.imbalance_c_kwh, max_relative = 1e-9, epsilon = 1e-9);
        assert_relative_eq!(
            s.gas_purchased_kwh,
            l.gas_chp_kw + l.gas_gb_kw,
            max_relative = 1e-12
        );

        // Reward is exactly the negated cost total.
        let energy = profile.price_e_per_kwh[0] * l.p_grid_kw
            + cfg.pricing.gas_price_per_kwh() * s.gas_purchased_kwh;
        let carbon = cfg.pricing.carbon_tax_per_kg
            * (cfg.pricing.carbon_intensity_electric * l.p_grid_kw
                + cfg.pricing.carbon_intensity_gas * s.gas_purchased_kwh);
        let penalty = s.imbalance_e_kwh.abs() + s.imbalance_h_kwh.abs() + s.imbalance_c_kwh.abs();
        assert_relative_eq!(
            s.reward,
            -(energy + carbon + penalty),
            max_relative = 1e-9,
            epsilon = 1e-9
        );
    }
    println!("criterion 2 (balance ledger): PASS");
}

// --- criterion 3: gradient checks ------------------------------------------

fn critic_loss_grads_fd(
    critic: &DenseNetwork,
    sa: &Matrix,
    targets: &[f64],
    h: f64,
) -> Vec<f64> {
    let loss = |net: &DenseNetwork| -> f64 {
        let mut n = net.clone();
        let out = n.forward_train(sa).unwrap().output().clone();
        let m = targets.len() as f64;
        (0..out.rows)
            .map(|r| {
                let d = out.get(r, 0) - targets[r];
                d * d / m
            })
            .sum()
    };
    let base = critic.params_flat();
    let mut grads = vec![0.0; base.len()];
    for i in 0..base.len() {
        let mut probe = critic.clone();
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_params_flat(&p);
        let lp = loss(&probe);
        p[i] = base[i] - h;
        probe.set_params_flat(&p);
        let lm = loss(&probe);
        grads[i] = (lp - lm) / (2.0 * h);
    }
    grads
}

fn actor_loss_grads_fd(
    actor: &DenseNetwork,
    critic: &DenseNetwork,
    obs: &Matrix,
    h: f64,
) -> Vec<f64> {
    let loss = |net: &DenseNetwork| -> f64 {
        let mut a = net.clone();
        let mut c = critic.clone();
        let act = a.forward_train(obs).unwrap().output().clone();
        let q = c.forward_train(&obs.hcat(&act)).unwrap().output().clone();
        -(0..q.rows).map(|r| q.get(r, 0)).sum::<f64>() / q.rows as f64
    };
    let base = actor.params_flat();
    let mut grads = vec![0.0; base.len()];
    for i in 0..base.len() {
        let mut probe = actor.clone();
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_params_flat(&p);
        let lp = loss(&probe);
        p[i] = base[i] - h;
        probe.set_params_flat(&p);
        let lm = loss(&probe);
        grads[i] = (lp - lm) / (2.0 * h);
    }
    grads
}

#[test]
fn criterion_3_gradient_checks() {
    // Layer-type coverage: dense nets with every activation and batch norm.
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        worst = worst.max(finite_diff_check_summary(&mut rng));
    }

    // Both TD3 losses on small actor/critic pairs.
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3100 + seed);
        let obs_dim = 4;
        let act_dim = 2;
        let mut actor = DenseNetwork::new(
            obs_dim,
            &[
                LayerSpec::new(8, Activation::Relu),
                LayerSpec::new(act_dim, Activation::Tanh),
            ],
            &mut rng,
        );
        let mut critic = DenseNetwork::new(
            obs_dim + act_dim,
            &[
                LayerSpec::new(8, Activation::Relu),
                LayerSpec::new(1, Activation::Identity),
            ],
            &mut rng,
        );
        let mut obs = Matrix::zeros(6, obs_dim);
        for v in &mut obs.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut act = Matrix::zeros(6, act_dim);
        for v in &mut act.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        let targets: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..0.0)).collect();

        // Critic loss: analytic vs finite differences.
        let sa = obs.hcat(&act);
        let cache = critic.forward_train(&sa).unwrap();
        let q = cache.output().clone();
        let m = targets.len() as f64;
        let mut upstream = Matrix::zeros(q.rows, 1);
        for r in 0..q.rows {
            upstream.set(r, 0, 2.0 * (q.get(r, 0) - targets[r]) / m);
        }
        let (analytic, _) = critic.backward(&cache, &upstream);
        let numeric = critic_loss_grads_fd(&critic, &sa, &targets, 1e-5);
        for (a, n) in analytic.iter().zip(&numeric) {
            let denom = a.abs().max(n.abs()).max(1e-6);
            worst = worst.max((a - n).abs() / denom);
        }

        // Actor loss: chain through the critic input gradient.
        let a_cache = actor.forward_train(&obs).unwrap();
        let pi = a_cache.output().clone();
        let c_cache = critic.forward_train(&obs.hcat(&pi)).unwrap();
        let mut up = Matrix::zeros(obs.rows, 1);
        for r in 0..obs.rows {
            up.set(r, 0, -1.0 / obs.rows as f64);
        }
        let (_, d_input) = critic.backward(&c_cache, &up);
        let d_act = d_input.columns(obs_dim, obs_dim + act_dim);
        let (analytic, _) = actor.backward(&a_cache, &d_act);
        let numeric = actor_loss_grads_fd(&actor, &critic, &obs, 1e-5);
        for (a, n) in analytic.iter().zip(&numeric) {
            let denom = a.abs().max(n.abs()).max(1e-6);
            worst = worst.max((a - n).abs() / denom);
        }
    }
    assert!(worst < 1e-4, "max relative gradient error {worst}");
    println!("criterion 3 (gradient checks): PASS (max rel err {worst:.3e})");
}

// --- criterion 4: TD3 algebra ----------------------------------------------

#[test]
fn criterion_4_td3_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);

    // Min-dominance of the clipped double-Q backup on random batches.
    for _ in 0..10_000 {
        let r = rng.gen_range(-10.0..0.0);
        let gamma = rng.gen_range(0.0..1.0);
        let q1 = rng.gen_range(-50.0..50.0);
        let q2 = rng.gen_range(-50.0..50.0);
        let y = target_value(r, gamma, q1, q2, false);
        assert!(y <= r + gamma * q1 + 1e-12);
        assert!(y <= r + gamma * q2 + 1e-12);
    }

    // Smoothing noise bounded by the clip radius.
    let cfg = SystemConfig::default().td3;
    let agent = Td3Agent::new(6, 3, &cfg, &mut rng);
    let mut next_obs = Matrix::zeros(32, 6);
    for v in &mut next_obs.data {
        *v = rng.gen_range(-1.0..1.0);
    }
    let base = agent.actor_target.forward_eval(&next_obs).unwrap();
    for _ in 0..100 {
        let smoothed = agent.smoothed_target_actions(&next_obs, &mut rng);
        for (b, s) in base.data.iter().zip(&smoothed.data) {
            let lo = (b - cfg.smoothing_clip).clamp(-1.0, 1.0);
            let hi = (b + cfg.smoothing_clip).clamp(-1.0, 1.0);
            assert!(*s >= lo - 1e-12 && *s <= hi + 1e-12);
        }
    }

    // With sigma = 0 and cloned twins, one TD3 update equals a hand-rolled
    // deterministic-policy-gradient (DDPG) update on the same batch.
    let mut cfg = SystemConfig::default().td3;
    cfg.smoothing_sigma = 0.0;
    cfg.policy_delay = 1;
    cfg.hidden_dims = vec![16, 16];
    cfg.batch_size = 32;
    let obs_dim = 5;
    let act_dim = 2;
    let mut agent = Td3Agent::new(obs_dim, act_dim, &cfg, &mut rng);
    agent.critic2 = agent.critic1.clone();
    agent.critic2_target = agent.critic1_target.clone();
    let mut buffer = ReplayBuffer::new(256).unwrap();
    for _ in 0..64 {
        buffer.push(Transition {
            obs: (0..obs_dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            action: (0..act_dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            reward: rng.gen_range(-1.0..0.0),
            next_obs: (0..obs_dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            terminal: rng.gen_bool(0.2),
        });
    }
    let indices: Vec<usize> = (0..32).collect();

    // Reference DDPG step.
    let mut ref_actor = agent.actor.clone();
    let mut ref_critic = agent.critic1.clone();
    let mut ref_actor_t = agent.actor_target.clone();
    let mut ref_critic_t = agent.critic1_target.clone();
    let mut ref_c_opt = AdamState::new(cfg.critic_lr, 0.9, 0.999, ref_critic.param_count());
    let mut ref_a_opt = AdamState::new(cfg.actor_lr, 0.9, 0.999, ref_actor.param_count());
    {
        let n = indices.len();
        let mut obs = Matrix::zeros(n, obs_dim);
        let mut act = Matrix::zeros(n, act_dim);
        let mut next_obs = Matrix::zeros(n, obs_dim);
        for (r, &i) in indices.iter().enumerate() {
            let t = buffer.get(i);
            for c in 0..obs_dim {
                obs.set(r, c, t.obs[c]);
                next_obs.set(r, c, t.next_obs[c]);
            }
            for c in 0..act_dim {
                act.set(r, c, t.action[c]);
            }
        }
        let next_act = ref_actor_t.forward_eval(&next_obs).unwrap();
        let qn = ref_critic_t.forward_eval(&next_obs.hcat(&next_act)).unwrap();
        let targets: Vec<f64> = indices
            .iter()
            .enumerate()
            .map(|(r, &i)| {
                let t = buffer.get(i);
                let mask = if t.terminal { 0.0 } else { 1.0 };
                t.reward + cfg.gamma * mask * qn.get(r, 0)
            })
            .collect();
        let sa = obs.hcat(&act);
        let cache = ref_critic.forward_train(&sa).unwrap();
        let q = cache.output().clone();
        let mut upstream = Matrix::zeros(n, 1);
        for r in 0..n {
            upstream.set(r, 0, 2.0 * (q.get(r, 0) - targets[r]) / n as f64);
        }
        let (grads, _) = ref_critic.backward(&cache, &upstream);
        let mut params = ref_critic.params_flat();
        adam_step(&mut params, &grads, &mut ref_c_opt);
        ref_critic.set_params_flat(&params);

        let a_cache = ref_actor.forward_train(&obs).unwrap();
        let pi = a_cache.output().clone();
        let c_cache = ref_critic.forward_train(&obs.hcat(&pi)).unwrap();
        let mut up = Matrix::zeros(n, 1);
        for r in 0..n {
            up.set(r, 0, -1.0 / n as f64);
        }
        let (_, d_input) = ref_critic.backward(&c_cache, &up);
        let d_act = d_input.columns(obs_dim, obs_dim + act_dim);
        let (a_grads, _) = ref_actor.backward(&a_cache, &d_act);
        let mut params = ref_actor.params_flat();
        adam_step(&mut params, &a_grads, &mut ref_a_opt);
        ref_actor.set_params_flat(&params);

        soft_update(&mut ref_actor_t, &ref_actor, cfg.tau);
        soft_update(&mut ref_critic_t, &ref_critic, cfg.tau);
    }

    agent.update_batch(&buffer, &indices, &mut rng);
    for (a, b) in agent
        .critic1
        .params_flat()
        .iter()
        .zip(&ref_critic.params_flat())
    {
        assert_relative_eq!(a, b, max_relative = 1e-9, epsilon = 1e-12);
    }
    for (a, b) in agent.actor.params_flat().iter().zip(&ref_actor.params_flat()) {
        assert_relative_eq!(a, b, max_relative = 1e-9, epsilon = 1e-12);
    }
    for (a, b) in agent
        .actor_target
        .params_flat()
        .iter()
        .zip(&ref_actor_t.params_flat())
    {
        assert_relative_eq!(a, b, max_relative = 1e-9, epsilon = 1e-12);
    }

    // FIFO at full capacity.
    let capacity = 36_000;
    let mut buffer = ReplayBuffer::new(capacity).unwrap();
    for i in 0..capacity + 5_000 {
        buffer.push(Transition {
            obs: vec![i as f64],
            action: vec![],
            reward: 0.0,
            next_obs: vec![],
            terminal: false,
        });
    }
    assert_eq!(buffer.len(), capacity);
    let mut kept: Vec<usize> = (0..capacity).map(|i| buffer.get(i).obs[0] as usize).collect();
    kept.sort_unstable();
    assert_eq!(kept.first(), Some(&5_000));
    assert_eq!(kept.last(), Some(&(capacity + 5_000 - 1)));

    println!("criterion 4 (TD3 algebra): PASS");
}

// --- criterion 5: TD3 learning ---------------------------------------------

#[test]
fn criterion_5_td3_learning() {
    let cfg = fixture_config("config_desk.toml");
    assert_eq!(cfg.seed, 7);
    let profile = fixture_profile("train_6h.csv");
    let mut env = MicrogridEnv::new(&cfg, profile.clone()).unwrap();

    // Random-policy reference over 200 episodes.
    let mut random_returns = Vec::new();
    for ep in 0..200u64 {
        let mut policy = RandomPolicy::new(*env.boxes(), 7_000 + ep);
        let trace = run_episode(&mut env, &mut policy).unwrap();
        random_returns.push(trace.total_reward());
    }
    let random_mean = random_returns.iter().sum::<f64>() / random_returns.len() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let result = memgrid::td3::train_td3(&mut env, &cfg, 500, &mut rng).unwrap();
    let last50: Vec<f64> = result
        .curve
        .iter()
        .rev()
        .take(50)
        .map(|s| s.total_reward)
        .collect();
    let trained_mean = last50.iter().sum::<f64>() / last50.len() as f64;

    // Returns are negative costs; require a >= 30% improvement.
    let improvement = (trained_mean - random_mean) / random_mean.abs();
    assert!(
        improvement >= 0.30,
        "trained mean {trained_mean:.2} vs random mean {random_mean:.2} ({improvement:.2})"
    );

    // Held-out day: the fixture day with shifted loads.
    let held_out = perturb_profile(
        &profile,
        &[
            (1, ProfileChannel::PLoad, 480.0),
            (3, ProfileChannel::HLoad, 340.0),
            (4, ProfileChannel::QLoad, 230.0),
        ],
    )
    .unwrap();
    let mut eval_env = MicrogridEnv::new(&cfg, held_out).unwrap();
    let mut actor_policy = memgrid::td3::ActorPolicy {
        actor: result.agent.actor.clone(),
        scaler: result.scaler.clone(),
        boxes: *eval_env.boxes(),
    };
    let trained_trace = run_episode(&mut eval_env, &mut actor_policy).unwrap();
    let mut greedy = GreedyPolicy::new(&eval_env);
    let greedy_trace = run_episode(&mut eval_env, &mut greedy).unwrap();
    let trained_cost = trained_trace.total_cost();
    let greedy_cost = greedy_trace.total_cost();
    assert!(
        trained_cost <= greedy_cost * 1.10,
        "trained cost {trained_cost:.2} vs greedy {greedy_cost:.2}"
    );

    println!(
        "criterion 5 (TD3 learning): PASS (random {random_mean:.1}, trained {trained_mean:.1}, \
         held-out trained {trained_cost:.1} vs greedy {greedy_cost:.1})"
    );
}

// --- criterion 6: off-design direction -------------------------------------

#[test]
fn criterion_6_off_design_direction() {
    let cfg = fixture_config("config_offdesign.toml");
    let days = ["day_spring.csv", "day_summer.csv", "day_autumn.csv", "day_winter.csv"];
    // The greedy rule reads only loads and renewables, so both models
    // deliver identical outputs; only fuel and electricity inputs differ.
    for day in days {
        let profile = fixture_profile(day);
        let mut off_env = MicrogridEnv::new(&cfg, profile.clone()).unwrap();
        let mut off_greedy = GreedyPolicy::new(&off_env);
        let off_trace = run_episode(&mut off_env, &mut off_greedy).unwrap();
        let mut rated_env = MicrogridEnv::new(&cfg, profile).unwrap().with_rated_models();
        let mut rated_greedy = GreedyPolicy::new(&rated_env);
        let rated_trace = run_episode(&mut rated_env, &mut rated_greedy).unwrap();
        assert!(
            off_trace.total_cost() > rated_trace.total_cost(),
            "{day}: off-design {:.3} not above rated {:.3}",
            off_trace.total_cost(),
            rated_trace.total_cost()
        );
    }

    // Degree-0 polynomials: the two models coincide exactly.
    let cfg0 = SystemConfig::default();
    let profile = fixture_profile("day_spring.csv");
    let mut off_env = MicrogridEnv::new(&cfg0, profile.clone()).unwrap();
    let mut greedy = GreedyPolicy::new(&off_env);
    let off_trace = run_episode(&mut off_env, &mut greedy).unwrap();
    let mut rated_env = MicrogridEnv::new(&cfg0, profile).unwrap().with_rated_models();
    let rated_trace = replay_actions(&mut rated_env, &off_trace.actions).unwrap();
    assert_relative_eq!(
        off_trace.total_cost(),
        rated_trace.total_cost(),
        max_relative = 1e-12
    );

    println!("criterion 6 (off-design direction): PASS");
}

// --- criterion 7: adversarial scenario training -----------------------------

fn sine_family(days: usize, horizon: usize, seed: u64) -> PairedSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let mut forecast = Vec::with_capacity(days);
    let mut actual = Vec::with_capacity(days);
    for _ in 0..days {
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let amp: f64 = rng.gen_range(0.2..0.35);
        let base: f64 = rng.gen_range(0.35..0.6);
        let f: Vec<f64> = (0..horizon)
            .map(|h| {
                (base + amp * (std::f64::consts::TAU * h as f64 / horizon as f64 + phase).sin())
                    .clamp(0.0, 1.0)
            })
            .collect();
        let a: Vec<f64> = f
            .iter()
            .map(|&v| (v + noise.sample(&mut rng)).clamp(0.0, 1.0))
            .collect();
        forecast.push(f);
        actual.push(a);
    }
    PairedSeries { forecast, actual }
}

#[test]
fn criterion_7_adversarial_training() {
    // Loss identities.
    assert_relative_eq!(discriminator_loss(&[0.9], &[0.2]), 0.025, max_relative = 1e-12);
    assert_relative_eq!(generator_loss(&[0.2]), 0.32, max_relative = 1e-12);
    assert_eq!(discriminator_loss(&[1.0, 1.0], &[0.0, 0.0]), 0.0);
    assert_eq!(generator_loss(&[1.0, 1.0, 1.0]), 0.0);

    let horizon = 24;
    let train = sine_family(64, horizon, 11);
    let held_out = sine_family(16, horizon, 111);

    let gan_cfg = memgrid::config::GanTrainConfig {
        noise_dim: 8,
        learning_rate: 2e-4,
        beta1: 0.5,
        beta2: 0.999,
        batch_size: 16,
        epochs: 2000,
        hidden_dims: vec![64, 64],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (model, _) = scengen::train_gan(&gan_cfg, &train, &mut rng).unwrap();

    let error_std = train.error_std();
    let mut cov_gan = 0.0;
    let mut env_gan = 0.0;
    let mut cov_mc = 0.0;
    let mut env_mc = 0.0;
    let n_days = held_out.days() as f64;
    let mut gen_rng = ChaCha8Rng::seed_from_u64(1100);
    for (f, a) in held_out.forecast.iter().zip(&held_out.actual) {
        let s_gan = scengen::generate(&model, f, 100, &mut gen_rng);
        let s_mc = scengen::monte_carlo_baseline(f, &error_std, 100, &mut gen_rng);
        let day_actual = vec![a.clone()];
        cov_gan += coverage_index(&day_actual, &s_gan).unwrap() / n_days;
        env_gan += envelope_index(&s_gan).unwrap() / n_days;
        cov_mc += coverage_index(&day_actual, &s_mc).unwrap() / n_days;
        env_mc += envelope_index(&s_mc).unwrap() / n_days;
    }

    assert!(cov_gan >= 0.85, "held-out coverage {cov_gan:.3}");
    assert!(env_gan < 1.0, "envelope width {env_gan:.3}");
    if (cov_gan - cov_mc).abs() <= 0.05 {
        assert!(
            env_gan < env_mc,
            "at matched coverage ({cov_gan:.3} vs {cov_mc:.3}), width {env_gan:.3} \
             not below baseline {env_mc:.3}"
        );
    }

    println!(
        "criterion 7 (adversarial scenario training): PASS (coverage {cov_gan:.3}, \
         width {env_gan:.3}; baseline coverage {cov_mc:.3}, width {env_mc:.3})"
    );
}

// --- criterion 8: index oracles --------------------------------------------

#[test]
fn criterion_8_index_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let horizon = rng.gen_range(1..6);
        let n_scen = rng.gen_range(1..6);
        let n_act = rng.gen_range(1..4);
        let curve = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..horizon).map(|_| rng.gen_range(0.0..1.0)).collect()
        };
        let scenarios: Vec<Vec<f64>> = (0..n_scen).map(|_| curve(&mut rng)).collect();
        let actuals: Vec<Vec<f64>> = (0..n_act).map(|_| curve(&mut rng)).collect();

        // Brute-force recomputation with per-point scans.
        let mut hits = 0usize;
        let mut total = 0usize;
        for a in &actuals {
            for (h, &v) in a.iter().enumerate() {
                total += 1;
                let inside_any_bound = scenarios.iter().any(|s| s[h] <= v)
                    && scenarios.iter().any(|s| s[h] >= v);
                if inside_any_bound {
                    hits += 1;
                }
            }
        }
        let brute_cov = hits as f64 / total as f64;
        assert_eq!(coverage_index(&actuals, &scenarios).unwrap(), brute_cov);

        let mut width_sum = 0.0;
        for h in 0..horizon {
            let mut column: Vec<f64> = scenarios.iter().map(|s| s[h]).collect();
            column.sort_by(f64::total_cmp);
            width_sum += column.last().unwrap() - column.first().unwrap();
        }
        assert_eq!(
            envelope_index(&scenarios).unwrap(),
            width_sum / horizon as f64
        );

        // Monotonicity under inclusion.
        let mut extended = scenarios.clone();
        extended.push(curve(&mut rng));
        assert!(
            coverage_index(&actuals, &extended).unwrap()
                >= coverage_index(&actuals, &scenarios).unwrap()
        );
        assert!(envelope_index(&extended).unwrap() >= envelope_index(&scenarios).unwrap());
    }
    println!("criterion 8 (index oracles): PASS");
}

// --- criterion 9: purchase intervals ---------------------------------------

#[test]
fn criterion_9_purchase_intervals() {
    let cfg = SystemConfig::default();
    let profile = fixture_profile("day_spring.csv");
    let env = MicrogridEnv::new(&cfg, profile.clone()).unwrap();
    let policy = GreedyPolicy::new(&env);

    // 99 perturbed wind realizations plus the forecast itself.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut scenarios = vec![RenewableScenario {
        wt_kw: profile.wt_kw.clone(),
        pv_kw: profile.pv_kw.clone(),
    }];
    for _ in 0..99 {
        let wt: Vec<f64> = profile
            .wt_kw
            .iter()
            .map(|v| (v * rng.gen_range(0.6..1.4)).clamp(0.0, cfg.renewables.wt_rated_kw))
            .collect();
        scenarios.push(RenewableScenario {
            wt_kw: wt,
            pv_kw: profile.pv_kw.clone(),
        });
    }
    let bounds =
        memgrid::environment::purchase_bounds(&env, &policy, &scenarios, cfg.dt_hours).unwrap();

    // Dispatch under the forecast stays inside the envelopes hour by hour.
    let mut forecast_env = MicrogridEnv::new(&cfg, profile).unwrap();
    let mut greedy = GreedyPolicy::new(&forecast_env);
    let trace = run_episode(&mut forecast_env, &mut greedy).unwrap();
    let elec = trace.electricity_purchased_kwh(cfg.dt_hours);
    let gas = trace.gas_purchased_kwh();
    for h in 0..elec.len() {
        assert!(
            bounds.electricity_min[h] <= elec[h] + 1e-9
                && elec[h] <= bounds.electricity_max[h] + 1e-9,
            "hour {h}: electricity {} outside [{}, {}]",
            elec[h],
            bounds.electricity_min[h],
            bounds.electricity_max[h]
        );
        assert!(
            bounds.gas_min[h] <= gas[h] + 1e-9 && gas[h] <= bounds.gas_max[h] + 1e-9,
            "hour {h}: gas {} outside [{}, {}]",
            gas[h],
            bounds.gas_min[h],
            bounds.gas_max[h]
        );
    }

    // A single scenario collapses the interval.
    let single = memgrid::environment::purchase_bounds(
        &env,
        &policy,
        &scenarios[..1],
        cfg.dt_hours,
    )
    .unwrap();
    assert_eq!(single.electricity_min, single.electricity_max);
    assert_eq!(single.gas_min, single.gas_max);

    println!("criterion 9 (purchase intervals): PASS");
}

// --- criterion 10: reproducibility ------------------------------------------

fn run_cli(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_memgrid"))
        .args(args)
        .status()
        .expect("spawn cli");
    assert!(status.success(), "command {args:?} failed: {status}");
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    entries.sort();
    entries
}

#[test]
fn criterion_10_reproducibility() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = fixture("config_desk.toml");
    let cfg = cfg_path.to_str().unwrap();
    let profile = fixture("train_6h.csv");
    let profile = profile.to_str().unwrap();

    // Two identical training runs from the same manifest inputs.
    for run in ["a", "b"] {
        run_cli(&[
            "--config",
            cfg,
            "train",
            "--profile",
            profile,
            "--episodes",
            "40",
            "--out",
            tmp.path().join(run).to_str().unwrap(),
        ]);
    }
    let a = dir_bytes(&tmp.path().join("a"));
    let b = dir_bytes(&tmp.path().join("b"));
    assert_eq!(a.len(), b.len());
    for ((name_a, bytes_a), (name_b, bytes_b)) in a.iter().zip(&b) {
        assert_eq!(name_a, name_b);
        assert_eq!(bytes_a, bytes_b, "output {name_a} differs between runs");
    }

    // Dispatch re-run, byte-identical as well.
    for run in ["d1", "d2"] {
        run_cli(&[
            "--config",
            cfg,
            "dispatch",
            "--profile",
            profile,
            "--checkpoint",
            tmp.path().join("a/agent.json").to_str().unwrap(),
            "--out",
            tmp.path().join(run).to_str().unwrap(),
        ]);
    }
    assert_eq!(dir_bytes(&tmp.path().join("d1")), dir_bytes(&tmp.path().join("d2")));

    // Checkpoints round-trip losslessly: load + save reproduces the bytes.
    let ckpt_path = tmp.path().join("a/agent.json");
    let loaded = Checkpoint::load(&ckpt_path).unwrap();
    let resaved = tmp.path().join("resaved.json");
    loaded.save(&resaved).unwrap();
    assert_eq!(
        std::fs::read(&ckpt_path).unwrap(),
        std::fs::read(&resaved).unwrap()
    );

    println!("criterion 10 (reproducibility): PASS");
}
