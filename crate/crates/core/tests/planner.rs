use std::f64::consts::FRAC_PI_2;

use crowdnav_core::model::random_joint_state;
use crowdnav_core::orca::orca_robot_policy;
use crowdnav_core::planner::{
    estimate_reward, propagate_robot, InnerDiscount, PlanConfig, Planner, StatePredictor,
    ValueEstimator,
};
use crowdnav_core::sim::{
    min_separation, Action, ActionSpace, CrowdSim, Event, HumanState, JointState, RobotState,
    SimConfig, Vec2,
};
use crowdnav_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DT: f64 = 0.25;

/// Smooth but nonlinear value stub mixing robot and human coordinates.
struct StubValue;

fn stub_value(s: &JointState) -> f64 {
    let r = &s.robot;
    let mut v = -0.1 * r.position.distance(r.goal) + 0.05 * (r.velocity.x * 1.3).sin();
    for (i, h) in s.humans.iter().enumerate() {
        v += 0.02 * ((i as f64 + 1.0) * h.position.x - r.position.y).cos()
            - 0.03 / (1.0 + h.position.distance(r.position));
    }
    v
}

impl ValueEstimator for StubValue {
    fn values(&self, states: &[JointState]) -> Result<Vec<f64>> {
        Ok(states.iter().map(stub_value).collect())
    }
}

/// Humans drift with a robot-dependent swirl.
struct StubPredictor;

fn stub_humans(s: &JointState, dt: f64) -> Vec<HumanState> {
    s.humans
        .iter()
        .map(|h| {
            let away = h.position - s.robot.position;
            let swirl = Vec2::new(-away.y, away.x) * 0.1 + h.velocity * 0.8;
            HumanState {
                position: h.position + swirl * dt,
                velocity: swirl,
                radius: h.radius,
            }
        })
        .collect()
}

impl StatePredictor for StubPredictor {
    fn predict_humans(&self, states: &[JointState], dt: f64) -> Result<Vec<Vec<HumanState>>> {
        Ok(states.iter().map(|s| stub_humans(s, dt)).collect())
    }
}

/// Independent reward of a predicted step: same table, written out here.
fn oracle_reward(s: &JointState, a: Action, next_humans: &[HumanState]) -> (f64, bool) {
    let v = Vec2::new(a.speed * a.heading.cos(), a.speed * a.heading.sin());
    let mut d_min = f64::INFINITY;
    for (h, n) in s.humans.iter().zip(next_humans) {
        d_min = d_min.min(min_separation(
            s.robot.position,
            v,
            s.robot.radius,
            h.position,
            n.velocity,
            h.radius,
            DT,
        ));
    }
    let end = s.robot.position + v * DT;
    if d_min < 0.0 {
        (-0.25, true)
    } else if end.distance(s.robot.goal) < s.robot.radius {
        (1.0, true)
    } else if d_min < 0.2 {
        ((d_min - 0.2) * 0.5 * DT, false)
    } else {
        (0.0, false)
    }
}

/// Exhaustive recursion over all actions at every level.
fn oracle(s: &JointState, d: usize, gamma: f64) -> f64 {
    let fv = stub_value(s);
    if d == 1 {
        return fv;
    }
    let space = ActionSpace::new(s.robot.v_pref);
    let humans = stub_humans(s, DT);
    let mut best = f64::NEG_INFINITY;
    for &a in space.actions() {
        let (r, terminal) = oracle_reward(s, a, &humans);
        let next = JointState {
            robot: propagate_robot(&s.robot, a, DT),
            humans: humans.clone(),
        };
        let future = if terminal {
            0.0
        } else {
            oracle(&next, d - 1, gamma)
        };
        best = best.max(r + gamma * future);
    }
    let d = d as f64;
    fv / d + (d - 1.0) / d * best
}

fn planner(depth: usize, width: usize) -> Planner<StubValue, StubPredictor> {
    let config = PlanConfig {
        depth,
        width,
        ..PlanConfig::default()
    };
    Planner::new(config, &SimConfig::default(), StubValue, StubPredictor).unwrap()
}

fn crowded_state(rng: &mut ChaCha8Rng) -> JointState {
    // robot and humans close enough that collisions and discomfort occur
    let mut s = random_joint_state(rng, 5);
    s.robot.goal = s.robot.position + Vec2::from_polar(rng.random_range(0.2..3.0), 1.0);
    for h in &mut s.humans {
        h.position =
            s.robot.position + Vec2::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
    }
    s
}

#[test]
fn depth_one_is_the_value_function() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = planner(1, 2);
    for _ in 0..20 {
        let s = crowded_state(&mut rng);
        assert_eq!(p.d_step_value(&s, 1).unwrap(), stub_value(&s));
    }
    assert_eq!(p.prediction_calls(), 0);
    assert!(p.d_step_value(&crowded_state(&mut rng), 0).is_err());
}

#[test]
fn full_width_matches_exhaustive_recursion() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let gamma = 0.9f64.powf(DT);
    let p = planner(2, 80);
    let mut terminal_seen = false;
    for _ in 0..30 {
        let s = crowded_state(&mut rng);
        for d in 1..=2 {
            let got = p.d_step_value(&s, d).unwrap();
            let want = oracle(&s, d, gamma);
            assert!((got - want).abs() <= 1e-12, "d={d}: {got} vs {want}");
        }
        let humans = stub_humans(&s, DT);
        terminal_seen |= ActionSpace::new(1.0)
            .actions()
            .iter()
            .any(|&a| oracle_reward(&s, a, &humans).1);
    }
    assert!(
        terminal_seen,
        "test states never produce a terminal prediction"
    );
}

#[test]
fn full_width_depth_three_matches_exhaustive_recursion() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gamma = 0.9f64.powf(DT);
    let p = planner(3, 80);
    for _ in 0..3 {
        let s = crowded_state(&mut rng);
        let got = p.d_step_value(&s, 3).unwrap();
        let want = oracle(&s, 3, gamma);
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }
}

#[test]
fn plain_inner_discount_uses_gamma() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let config = PlanConfig {
        depth: 2,
        width: 80,
        inner_discount: InnerDiscount::Plain,
        ..PlanConfig::default()
    };
    let p = Planner::new(config, &SimConfig::default(), StubValue, StubPredictor).unwrap();
    let s = crowded_state(&mut rng);
    let got = p.d_step_value(&s, 2).unwrap();
    assert!((got - oracle(&s, 2, 0.9)).abs() <= 1e-12);
}

#[test]
fn clipping_never_increases_the_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let s = crowded_state(&mut rng);
        for d in 2..=3 {
            let mut last = f64::NEG_INFINITY;
            for w in [1, 2, 3, 5, 8] {
                let v = planner(d, w).d_step_value(&s, d).unwrap();
                assert!(last <= v + 1e-12, "d={d} w={w}: {last} > {v}");
                last = v;
            }
        }
    }
}

#[test]
fn prediction_budget_is_respected() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (d, w) in [(1, 2), (2, 1), (2, 2), (3, 2), (3, 3), (4, 2)] {
        let p = planner(d, w);
        let s = crowded_state(&mut rng);
        p.reset_prediction_calls();
        p.d_step_value(&s, d).unwrap();
        let bound: u64 = 80
            * (0..d.saturating_sub(1))
                .map(|k| (w as u64).pow(k as u32))
                .sum::<u64>();
        assert!(
            p.prediction_calls() <= bound,
            "d={d} w={w}: {} > {bound}",
            p.prediction_calls()
        );
    }
    // free space: no terminal children, so the bound is met exactly
    let mut s = crowded_state(&mut rng);
    s.humans.clear();
    s.robot.goal = s.robot.position + Vec2::new(20.0, 0.0);
    let p = planner(3, 2);
    p.d_step_value(&s, 3).unwrap();
    assert_eq!(p.prediction_calls(), 80 * 3);
}

#[test]
fn search_tree_agrees_with_batched_backup() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = planner(3, 2);
    for _ in 0..5 {
        let s = crowded_state(&mut rng);
        let tree = p.search_tree(&s, 3).unwrap();
        let v = p.d_step_value(&s, 3).unwrap();
        assert!((tree.backed_up - v).abs() < 1e-14);
        assert!(tree.children.len() <= 2);
        for e in &tree.children {
            assert_eq!(e.node.is_none(), e.terminal);
        }
    }
}

#[test]
fn greedy_selection_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = planner(1, 2);
    let g = 0.9f64.powf(DT);
    for _ in 0..30 {
        let s = crowded_state(&mut rng);
        let humans = stub_humans(&s, DT);
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, &a) in ActionSpace::new(1.0).actions().iter().enumerate() {
            let (r, terminal) = oracle_reward(&s, a, &humans);
            let next = JointState {
                robot: propagate_robot(&s.robot, a, DT),
                humans: humans.clone(),
            };
            let q = r + g * if terminal { 0.0 } else { stub_value(&next) };
            if q > best.0 {
                best = (q, i);
            }
        }
        let (idx, _) = p.select_action(&s, 0.0, &mut rng).unwrap();
        assert_eq!(idx, best.1);
    }
}

struct TowardGoal;

impl ValueEstimator for TowardGoal {
    fn values(&self, states: &[JointState]) -> Result<Vec<f64>> {
        Ok(states.iter().map(|s| -s.robot.distance_to_goal()).collect())
    }
}

#[test]
fn empty_crowd_picks_full_speed_toward_goal() {
    let state = JointState {
        robot: RobotState {
            position: Vec2::new(0.0, -4.0),
            velocity: Vec2::ZERO,
            radius: 0.3,
            goal: Vec2::new(0.0, 4.0),
            v_pref: 1.0,
            heading: FRAC_PI_2,
        },
        humans: vec![],
    };
    for depth in [1, 2] {
        let config = PlanConfig {
            depth,
            ..PlanConfig::default()
        };
        let p = Planner::new(config, &SimConfig::default(), TowardGoal, StubPredictor).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (idx, a) = p.select_action(&state, 0.0, &mut rng).unwrap();
        assert_eq!(idx, 4 * 16 + 4);
        assert_eq!(a.speed, 1.0);
        assert!((a.heading - FRAC_PI_2).abs() < 1e-12);
        let next = propagate_robot(&state.robot, a, DT);
        assert!(next.position.x.abs() < 1e-12 && (next.position.y + 3.75).abs() < 1e-12);
    }
}

#[test]
fn exploration_is_uniform() {
    let p = planner(2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let s = crowded_state(&mut rng);
    let mut counts = [0u32; 80];
    let draws = 10_000;
    for _ in 0..draws {
        let (i, _) = p.select_action(&s, 1.0, &mut rng).unwrap();
        counts[i] += 1;
    }
    let expected = draws as f64 / 80.0;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // 79 degrees of freedom; the 0.999 quantile is about 122
    assert!(chi2 < 122.0, "chi2 {chi2}");
    assert_eq!(p.prediction_calls(), 0, "exploration must not plan");
}

#[test]
fn planning_does_not_mutate_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let p = planner(2, 2);
    let s = crowded_state(&mut rng);
    let copy = s.clone();
    let first = p.decide(&s, 0.0, &mut rng, true).unwrap();
    let second = p.decide(&s, 0.0, &mut rng, true).unwrap();
    assert_eq!(s, copy);
    assert_eq!(first, second);
    assert_eq!(first.action_values.len(), 80);
}

#[test]
fn reward_estimate_matches_simulator_under_perfect_prediction() {
    let config = SimConfig::default();
    let mut events = Vec::new();
    for seed in 0..40 {
        let mut sim = CrowdSim::new(config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        while !sim.is_finished() {
            let s = sim.observe();
            let a = orca_robot_policy(&s, &config.orca, DT);
            let out = sim.step(a).unwrap();
            if out.event == Event::Timeout {
                continue;
            }
            let (r, e) = estimate_reward(&s, a, &out.next_state, DT, &config.reward);
            assert_eq!(r, out.reward);
            assert_eq!(e, out.event);
            events.push(e.name());
        }
    }
    for kind in ["none", "discomfort", "collision", "reached_goal"] {
        assert!(events.contains(&kind), "no {kind} step exercised");
    }
}

#[test]
fn reward_estimate_basic_cases() {
    let reward = SimConfig::default().reward;
    let mut s = JointState {
        robot: RobotState {
            position: Vec2::new(0.0, 3.5),
            velocity: Vec2::ZERO,
            radius: 0.3,
            goal: Vec2::new(0.0, 4.0),
            v_pref: 1.0,
            heading: 0.0,
        },
        humans: vec![],
    };
    let up = Action::new(1.0, FRAC_PI_2);
    let next = JointState {
        robot: propagate_robot(&s.robot, up, DT),
        humans: vec![],
    };
    assert_eq!(estimate_reward(&s, up, &next, DT, &reward).0, 1.0);
    s.robot.position = Vec2::new(0.0, -4.0);
    assert_eq!(
        estimate_reward(&s, up, &next, DT, &reward),
        (0.0, Event::None)
    );
}
