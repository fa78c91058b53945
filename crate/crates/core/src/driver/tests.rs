use super::*;
use crate::mathcore::{sigmoid, Vector};
use crate::policy::SoftmaxPolicy;
use crate::world::{FeatureGenerator, WorldSpec};

fn world(m: usize, k: usize, d: usize, seed: u64) -> World {
    World::build(WorldSpec::random(m, k, d, 2.0, FeatureGenerator::Gaussian, seed)).unwrap()
}

fn short(rounds: usize) -> DriverConfig {
    DriverConfig {
        rounds,
        alpha: sqrt_t_alpha(rounds),
        gd_steps: 10,
        refresh_interval: 7,
        ..DriverConfig::default()
    }
}

fn one_dim_world(rewards_phi: &[f64], theta: f64) -> World {
    let k = rewards_phi.len();
    let spec = WorldSpec {
        num_prompts: 1,
        pool_size: k,
        feature_dim: 1,
        theta_plus: vec![theta],
        s_bound: 3.0,
        r_max: 3.0,
        prompt_weights: vec![1.0],
        seed: 0,
        generator: FeatureGenerator::Gaussian,
        hidden_dim: None,
        center: false,
    };
    let features = rewards_phi.iter().map(|&v| Vector::new(vec![v]).unwrap()).collect();
    World::from_parts(spec, features).unwrap()
}

#[test]
fn comparator_cases() {
    let mut spec = WorldSpec::random(5, 4, 3, 2.0, FeatureGenerator::Gaussian, 3);
    spec.theta_plus = vec![0.0; 3];
    let null = World::build(spec).unwrap();
    assert!(comparator_policy(&null).choices().iter().all(|&c| c == 0));

    // rewards 0.1, 0.9, 0.4
    let w = one_dim_world(&[0.05, 0.45, 0.2], 2.0);
    assert_eq!(comparator_policy(&w).choices(), &[1]);

    for seed in 0..5 {
        let w = world(6, 5, 3, seed);
        let star = comparator_policy(&w);
        for x in 0..6 {
            let best = (0..5).map(|y| w.reward(x, y).unwrap()).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(w.reward(x, star.choice(x)).unwrap(), best);
        }
    }
}

#[test]
fn regret_increment_cases() {
    let w = world(4, 3, 2, 8);
    let star = comparator_policy(&w);
    let uniform = SoftmaxPolicy::uniform(4, 3);
    assert_eq!(regret_increment(&w, &star, &star, &uniform).unwrap(), 0.0);
    let r = regret_increment(&w, &star, &uniform, &uniform).unwrap();
    assert!(r > 0.0 && r <= 1.0);

    let mut spec = WorldSpec::random(4, 3, 2, 2.0, FeatureGenerator::Gaussian, 8);
    spec.theta_plus = vec![0.0, 0.0];
    let null = World::build(spec).unwrap();
    let p = SoftmaxPolicy::from_logits(4, 3, (0..12).map(|i| i as f64 * 0.3).collect()).unwrap();
    assert!(regret_increment(&null, &comparator_policy(&null), &p, &uniform).unwrap().abs() < 1e-15);
}

#[test]
fn regret_increment_hand_expansion() {
    let w = one_dim_world(&[0.6, -0.3], 1.5);
    let g = w.true_gap(0, 0, 1).unwrap();
    assert!(g > 0.0);
    let star = comparator_policy(&w);
    let uniform = SoftmaxPolicy::uniform(1, 2);
    let enumerated = regret_increment(&w, &star, &uniform, &uniform).unwrap();
    // y* = 0; y, y′ uniform over {0, 1}
    let p = |a: usize, b: usize| w.oracle_prob(0, a, b).unwrap();
    let hand = 0.5 * (p(0, 0) - 0.5 * p(0, 0) - 0.5 * p(1, 0)) + 0.5 * (p(0, 1) - 0.5 * p(0, 1) - 0.5 * p(1, 1));
    assert!((enumerated - hand).abs() < 1e-14);
    assert!((hand - 0.25 * (sigmoid(g) - sigmoid(-g))).abs() < 1e-14);
}

#[test]
fn diversity_cases() {
    let same = one_dim_world(&[0.3, 0.3, 0.3], 1.0);
    let u = SoftmaxPolicy::uniform(1, 3);
    assert!(diversity_gamma(&same, &u, &u).unwrap() < 1e-15);

    let c = 0.7;
    let toy = one_dim_world(&[c, 0.0], 1.0);
    let u = SoftmaxPolicy::uniform(1, 2);
    let g = diversity_gamma(&toy, &u, &u).unwrap();
    assert!((g - c * c / 4.0).abs() < 1e-14);

    for seed in 0..10 {
        let gauss = World::build(WorldSpec::random(16, 4, 4, 2.0, FeatureGenerator::Gaussian, seed)).unwrap();
        let clus = World::build(WorldSpec::random(16, 4, 4, 2.0, FeatureGenerator::Clustered, seed)).unwrap();
        let u = SoftmaxPolicy::uniform(16, 4);
        let gg = diversity_gamma(&gauss, &u, &u).unwrap();
        let gc = diversity_gamma(&clus, &u, &u).unwrap();
        assert!(gc < gg, "seed {seed}: clustered {gc} vs gaussian {gg}");
    }
}

#[test]
fn empty_horizon() {
    let w = world(3, 3, 2, 1);
    let trace = run_depo(&w, &short(0), 4).unwrap();
    assert!(trace.rounds.is_empty());
    assert_eq!(trace.cumulative_regret, 0.0);
    let report = decomposition_report(&trace, 0.0);
    assert_eq!(report.cumulative_regret, 0.0);
    assert_eq!(report.bonus_term, 0.0);
    assert_eq!(report.potential_sum, 0.0);
    assert_eq!(report.potential_bound, 0.0);
    assert_eq!(report.ratio, None);
}

#[test]
fn runs_are_deterministic() {
    let w = world(4, 3, 2, 2);
    let a = run_depo(&w, &short(40), 11).unwrap();
    let b = run_depo(&w, &short(40), 11).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_csv_string(), b.to_csv_string());
    let c = run_depo(&w, &short(40), 12).unwrap();
    assert_ne!(a.to_csv_string(), c.to_csv_string());
}

#[test]
fn uniform_bonus_without_alpha_is_passive() {
    let w = world(4, 3, 2, 3);
    let mut cfg = short(40);
    cfg.alpha = 0.0;
    let passive = run_baseline(&w, &cfg, 5, BaselineMode::Passive).unwrap();
    let uniform = run_baseline(&w, &cfg, 5, BaselineMode::UniformBonus).unwrap();
    assert_eq!(passive.rounds, uniform.rounds);
    assert_eq!(passive.final_policy, uniform.final_policy);
}

#[test]
fn arms_share_prompt_sequences() {
    let w = world(5, 3, 2, 4);
    let cfg = short(50);
    let depo = run_depo(&w, &cfg, 9).unwrap();
    let passive = run_baseline(&w, &cfg, 9, BaselineMode::Passive).unwrap();
    let xs = |t: &RunTrace| t.rounds.iter().map(|r| r.prompt_id).collect::<Vec<_>>();
    assert_eq!(xs(&depo), xs(&passive));
    assert!(passive.rounds.iter().all(|r| r.bonus == 0.0));
    assert_eq!(decomposition_report(&passive, 0.0).bonus_term, 0.0);
    assert!(depo.rounds.iter().any(|r| r.bonus > 0.0));
}

#[test]
fn trace_invariants_hold() {
    let w = world(4, 4, 3, 6);
    let mut cfg = short(120);
    cfg.probe_pairs = 20;
    for arm in [Arm::Depo, Arm::Passive, Arm::UniformBonus] {
        let trace = run(&w, &cfg, arm, 3).unwrap();
        let checks = verify_rounds(&trace.rounds, trace.pair_dim, cfg.lambda);
        assert!(checks.iter().all(|c| c.passed), "{arm}: {checks:?}");
        assert!(trace.potential_sum <= trace.potential_bound);
        let prefix: f64 = trace.rounds.iter().map(|r| r.regret_inc).sum();
        assert!((prefix - trace.cumulative_regret).abs() < 1e-9);
        assert!(trace.rounds.iter().all(|r| r.kappa_true > 0.0 && r.kappa_true <= 0.25));
        assert_eq!(trace.newton_unconverged, 0);
        let s = trace.summary();
        assert!(s.invariants_hold());
        assert_eq!(s.checkpoints, vec![30, 60, 120]);
    }
}

#[test]
fn width_modes_and_switches_run() {
    let w = world(3, 3, 2, 7);
    for mode in [WidthMode::Empirical, WidthMode::TheoreticalTrue, WidthMode::TheoreticalPlugin] {
        for previous in [false, true] {
            let cfg = DriverConfig {
                width_mode: mode,
                radius_uses_previous: previous,
                track_refreshed_regret: true,
                ..short(30)
            };
            let trace = run_depo(&w, &cfg, 1).unwrap();
            assert_eq!(trace.rounds.len(), 30);
            assert!(trace.cumulative_regret_refreshed.is_some());
            assert!(trace.rounds.iter().all(|r| r.regret_inc_refreshed.is_some()));
        }
    }
}

#[test]
fn csv_round_trip() {
    let w = world(3, 3, 2, 8);
    let trace = run_depo(&w, &short(25), 2).unwrap();
    let text = trace.to_csv_string();
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
    let back = read_csv(text.as_bytes()).unwrap();
    assert_eq!(back, trace.rounds);

    let cfg = DriverConfig {
        track_refreshed_regret: true,
        ..short(10)
    };
    let trace = run_depo(&w, &cfg, 2).unwrap();
    let text = trace.to_csv_string();
    assert!(text.lines().next().unwrap().ends_with(REFRESHED_REGRET_COLUMN));
    assert_eq!(read_csv(text.as_bytes()).unwrap(), trace.rounds);

    assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
}

#[test]
fn verify_flags_broken_traces() {
    let w = world(3, 3, 2, 9);
    let trace = run_depo(&w, &short(20), 2).unwrap();
    let mut broken = trace.rounds.clone();
    broken[5].cum_regret += 1e-6;
    broken[7].quad_form = 50.0;
    let checks = verify_rounds(&broken, trace.pair_dim, 1.0);
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed).map(|c| (c.name.as_str(), c.round)).collect();
    assert!(failed.contains(&("cumulative_regret_prefix", Some(6))));
    assert!(failed.contains(&("elliptical_potential", Some(8))));
}

#[test]
fn config_violations_are_all_reported() {
    let cfg = DriverConfig {
        lambda: -1.0,
        delta: 2.0,
        beta: 0.0,
        ..DriverConfig::default()
    };
    let v = cfg.violations();
    assert_eq!(v.len(), 3);
    assert!(v.iter().any(|s| s.starts_with("lambda") && s.contains("> 0")));
    assert!(matches!(run_depo(&world(2, 2, 1, 1), &cfg, 0), Err(DriverError::Config(_))));
    assert_eq!(sqrt_t_alpha(400), 20.0);
    assert_eq!(sqrt_t_alpha(2000), 45.0);
}

#[test]
fn enumeration_budget_is_enforced() {
    let w = World::build(WorldSpec::random(1001, 32, 2, 2.0, FeatureGenerator::Gaussian, 1)).unwrap();
    assert!(matches!(run_depo(&w, &short(1), 0), Err(DriverError::World(WorldError::EnumerationBudget { .. }))));
}
