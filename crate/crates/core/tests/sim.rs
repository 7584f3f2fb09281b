use std::f64::consts::FRAC_PI_2;

use crowdnav_core::orca::orca_robot_policy;
use crowdnav_core::sim::{
    compute_reward, discounted_return, generate_circle_crossing, min_separation, Action, CrowdSim,
    Event, Human, HumanState, RewardConfig, Scenario, SimConfig, Vec2,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn empty_config() -> SimConfig {
    SimConfig {
        human_num: 0,
        ..SimConfig::default()
    }
}

fn toward_goal() -> Action {
    Action::new(1.0, FRAC_PI_2)
}

fn scenario_with(humans: Vec<Human>) -> (SimConfig, Scenario) {
    let config = SimConfig {
        human_num: humans.len(),
        ..SimConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut scenario = generate_circle_crossing(&empty_config(), &mut rng).unwrap();
    scenario.humans = humans;
    (config, scenario)
}

fn parked(position: Vec2) -> Human {
    Human {
        state: HumanState {
            position,
            velocity: Vec2::ZERO,
            radius: 0.3,
        },
        goal: position,
        v_pref: 1.0,
        reached_goal: true,
    }
}

#[test]
fn robot_only_scenario() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = generate_circle_crossing(&empty_config(), &mut rng).unwrap();
    assert!(s.humans.is_empty());
    assert_eq!(s.robot.position, Vec2::new(0.0, -4.0));
    assert_eq!(s.robot.goal, Vec2::new(0.0, 4.0));
    let config = SimConfig::default();
    assert_eq!(config.min_travel_time(), 8.0);
}

#[test]
fn same_seed_same_scenario() {
    let config = SimConfig::default();
    let a = generate_circle_crossing(&config, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
    let b = generate_circle_crossing(&config, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
    assert_eq!(a, b);
    let c = generate_circle_crossing(&config, &mut ChaCha8Rng::seed_from_u64(43)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn generated_agents_do_not_overlap() {
    let config = SimConfig::default();
    for seed in 0..200 {
        let s = generate_circle_crossing(&config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert_eq!(s.humans.len(), 5);
        for (i, h) in s.humans.iter().enumerate() {
            assert!(
                (h.goal + h.state.position).length() < 1e-12,
                "goal is antipodal"
            );
            assert!(h.state.position.distance(s.robot.position) > h.state.radius + s.robot.radius);
            for o in &s.humans[i + 1..] {
                assert!(
                    h.state.position.distance(o.state.position) > h.state.radius + o.state.radius
                );
            }
        }
    }
}

#[test]
fn impossible_placement_is_an_error() {
    let config = SimConfig {
        human_num: 200,
        circle_radius: 1.0,
        ..SimConfig::default()
    };
    let err = generate_circle_crossing(&config, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
    assert!(err.to_string().contains("could not place"));
}

#[test]
fn free_step_kinematics() {
    let mut sim = CrowdSim::new(empty_config(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let out = sim.step(toward_goal()).unwrap();
    let p = out.next_state.robot.position;
    assert!(p.x.abs() < 1e-15 && (p.y + 3.75).abs() < 1e-15);
    assert_eq!(out.reward, 0.0);
    assert_eq!(out.event, Event::None);
}

#[test]
fn overspeed_action_is_rejected() {
    let mut sim = CrowdSim::new(empty_config(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(sim.step(Action::new(1.5, 0.0)).is_err());
}

#[test]
fn collision_step() {
    // a parked human 0.5 m ahead: the robot overlaps it after one step
    let (config, scenario) = scenario_with(vec![parked(Vec2::new(0.0, -3.5))]);
    let mut sim = CrowdSim::from_scenario(config, scenario);
    let out = sim.step(toward_goal()).unwrap();
    assert_eq!(out.event, Event::Collision);
    assert_eq!(out.reward, -0.25);
    assert!(sim.is_finished());
    assert!(sim.step(toward_goal()).is_err());
}

#[test]
fn goal_step_and_collision_precedence() {
    let (config, mut scenario) = scenario_with(vec![]);
    scenario.robot.position = Vec2::new(0.0, 3.5);
    let mut sim = CrowdSim::from_scenario(config, scenario.clone());
    let out = sim.step(toward_goal()).unwrap();
    assert_eq!(out.event, Event::ReachedGoal);
    assert_eq!(out.reward, 1.0);

    // same step, but a human sits on the goal
    scenario.humans = vec![parked(Vec2::new(0.0, 4.0))];
    let config = SimConfig {
        human_num: 1,
        ..config
    };
    let mut sim = CrowdSim::from_scenario(config, scenario);
    assert_eq!(sim.step(toward_goal()).unwrap().event, Event::Collision);
}

#[test]
fn discomfort_step() {
    // human 0.7 m to the side: surface gap 0.1 m
    let (config, mut scenario) = scenario_with(vec![parked(Vec2::new(0.7, -3.75))]);
    scenario.robot.position = Vec2::new(0.0, -4.0);
    let mut sim = CrowdSim::from_scenario(config, scenario);
    let out = sim.step(toward_goal()).unwrap();
    match out.event {
        Event::Discomfort { d_min } => assert!((d_min - 0.1).abs() < 1e-12),
        other => panic!("expected discomfort, got {other:?}"),
    }
    assert!((out.reward + 0.0125).abs() < 1e-12);
}

#[test]
fn reward_table() {
    let r = RewardConfig::default();
    assert_eq!(compute_reward(Event::ReachedGoal, &r, 0.25), 1.0);
    assert_eq!(compute_reward(Event::Collision, &r, 0.25), -0.25);
    assert!((compute_reward(Event::Discomfort { d_min: 0.1 }, &r, 0.25) + 0.0125).abs() < 1e-15);
    assert_eq!(compute_reward(Event::None, &r, 0.25), 0.0);
    assert_eq!(compute_reward(Event::Timeout, &r, 0.25), 0.0);
}

#[test]
fn discounted_return_formula() {
    assert_eq!(discounted_return(&[1.0], 0.9, 1.0, 0.25), 1.0);
    for k in 0..40 {
        let mut rewards = vec![0.0; k + 1];
        rewards[k] = 1.0;
        let expected = 0.9f64.powf(0.25 * k as f64);
        assert!((discounted_return(&rewards, 0.9, 1.0, 0.25) - expected).abs() < 1e-14);
    }
    // per-step factor is gamma^(dt * v_pref), not gamma
    let two = discounted_return(&[0.0, 1.0], 0.9, 2.0, 0.25);
    assert!((two - 0.9f64.powf(0.5)).abs() < 1e-15);
}

#[test]
fn empty_crowd_straight_line_reaches_goal() {
    let mut sim = CrowdSim::new(empty_config(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut events = vec![];
    while !sim.is_finished() {
        events.push(sim.step(toward_goal()).unwrap().event);
    }
    // the goal counts as reached once the center is within one robot radius:
    // 7.75 m of travel leaves 0.25 m < 0.3 m
    assert_eq!(events.len(), 31);
    assert_eq!(*events.last().unwrap(), Event::ReachedGoal);
    assert!(events[..30].iter().all(|&e| e == Event::None));
}

#[test]
fn timeout_ends_episode() {
    let config = SimConfig {
        human_num: 0,
        time_limit: 2.0,
        ..SimConfig::default()
    };
    let mut sim = CrowdSim::new(config, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut n = 0;
    loop {
        n += 1;
        let out = sim.step(Action::new(0.5, 0.0)).unwrap();
        if out.event.is_terminal() {
            assert_eq!(out.event, Event::Timeout);
            assert_eq!(out.reward, 0.0);
            break;
        }
    }
    assert_eq!(n, 8);
}

#[test]
fn config_validation() {
    let bad = SimConfig {
        time_limit: 25.1,
        ..SimConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = SimConfig {
        time_step: 0.0,
        ..SimConfig::default()
    };
    assert!(bad.validate().is_err());
    SimConfig::default().validate().unwrap();
}

fn run_orca_episode(
    config: SimConfig,
    seed: u64,
) -> (Vec<crowdnav_core::sim::JointState>, Vec<f64>) {
    let mut sim = CrowdSim::new(config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let mut states = vec![sim.observe()];
    let mut rewards = vec![];
    while !sim.is_finished() {
        let a = orca_robot_policy(&sim.observe(), &config.orca, config.time_step);
        let out = sim.step(a).unwrap();
        states.push(out.next_state);
        rewards.push(out.reward);
    }
    (states, rewards)
}

#[test]
fn episodes_are_bit_reproducible() {
    let config = SimConfig::default();
    for seed in [3, 42, 99] {
        let a = run_orca_episode(config, seed);
        let b = run_orca_episode(config, seed);
        assert_eq!(a, b);
    }
}

#[test]
fn human_velocity_matches_displacement() {
    let config = SimConfig::default();
    let (states, _) = run_orca_episode(config, 5);
    for w in states.windows(2) {
        for (before, after) in w[0].humans.iter().zip(&w[1].humans) {
            let implied = (after.position - before.position) / config.time_step;
            assert!((implied - after.velocity).length() < 1e-9);
        }
    }
}

#[test]
fn min_separation_matches_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dt = 0.25;
    for _ in 0..1000 {
        let mut v = || Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let (p1, v1, p2, v2) = (v(), v(), v(), v());
        let (r1, r2) = (0.3, 0.25);
        let exact = min_separation(p1, v1, r1, p2, v2, r2, dt);
        let sampled = (0..=1000)
            .map(|k| {
                let t = dt * k as f64 / 1000.0;
                (p1 + v1 * t).distance(p2 + v2 * t) - (r1 + r2)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(exact <= sampled + 1e-12);
        assert!((exact - sampled).abs() < 1e-4, "{exact} vs {sampled}");
    }
}

proptest! {
    #[test]
    fn min_separation_is_symmetric(
        p1 in (-3.0..3.0f64, -3.0..3.0f64), v1 in (-2.0..2.0f64, -2.0..2.0f64),
        p2 in (-3.0..3.0f64, -3.0..3.0f64), v2 in (-2.0..2.0f64, -2.0..2.0f64),
        r1 in 0.1..0.5f64, r2 in 0.1..0.5f64,
    ) {
        let (p1, v1) = (Vec2::new(p1.0, p1.1), Vec2::new(v1.0, v1.1));
        let (p2, v2) = (Vec2::new(p2.0, p2.1), Vec2::new(v2.0, v2.1));
        let a = min_separation(p1, v1, r1, p2, v2, r2, 0.25);
        let b = min_separation(p2, v2, r2, p1, v1, r1, 0.25);
        prop_assert!((a - b).abs() < 1e-12);
    }
}
