use crowdnav_core::orca::{
    compute_orca_velocity, orca_robot_policy, preferred_velocity, OrcaAgent, OrcaParams,
};
use crowdnav_core::sim::{
    min_separation, CrowdSim, HumanState, JointState, RobotState, SimConfig, Vec2,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DT: f64 = 0.25;

fn agent(x: f64, y: f64, vx: f64, vy: f64) -> OrcaAgent {
    OrcaAgent {
        position: Vec2::new(x, y),
        velocity: Vec2::new(vx, vy),
        radius: 0.3,
    }
}

#[test]
fn no_neighbors_gives_preferred_velocity() {
    let params = OrcaParams::default();
    let pref = Vec2::new(0.6, -0.3);
    let v = compute_orca_velocity(&agent(0.0, 0.0, 0.0, 0.0), pref, 1.0, &[], &params, DT);
    assert_eq!(v, pref);
}

#[test]
fn agent_at_goal_stays() {
    let p = Vec2::new(1.0, 2.0);
    assert_eq!(preferred_velocity(p, p, 1.0, DT), Vec2::ZERO);
    let params = OrcaParams::default();
    let v = compute_orca_velocity(
        &agent(1.0, 2.0, 0.0, 0.0),
        Vec2::ZERO,
        1.0,
        &[agent(3.0, 2.0, 0.0, 0.0)],
        &params,
        DT,
    );
    assert!(v.length() < 1e-12);
}

#[test]
fn preferred_velocity_slows_near_goal() {
    let v = preferred_velocity(Vec2::ZERO, Vec2::new(0.1, 0.0), 1.0, DT);
    assert!((v - Vec2::new(0.4, 0.0)).length() < 1e-12);
}

/// Runs two ORCA agents toward each other's start; returns the closest
/// surface gap and the final positions.
fn run_pair(offset: f64, steps: usize) -> (f64, [Vec2; 2], [Vec2; 2]) {
    let params = OrcaParams::default();
    // point-symmetric about the origin
    let goals = [Vec2::new(4.0, offset), Vec2::new(-4.0, -offset)];
    let mut agents = [agent(-4.0, offset, 0.0, 0.0), agent(4.0, -offset, 0.0, 0.0)];
    let mut closest = f64::INFINITY;
    for _ in 0..steps {
        let v: Vec<Vec2> = (0..2)
            .map(|i| {
                let pref = preferred_velocity(agents[i].position, goals[i], 1.0, DT);
                compute_orca_velocity(&agents[i], pref, 1.0, &[agents[1 - i]], &params, DT)
            })
            .collect();
        assert!((v[0] + v[1]).length() < 1e-9, "not mirror images: {v:?}");
        assert!((v[0].length() - v[1].length()).abs() < 1e-12);
        let sep = min_separation(
            agents[0].position,
            v[0],
            0.3,
            agents[1].position,
            v[1],
            0.3,
            DT,
        );
        closest = closest.min(sep);
        for (a, vel) in agents.iter_mut().zip(&v) {
            a.position += *vel * DT;
            a.velocity = *vel;
        }
    }
    (closest, [agents[0].position, agents[1].position], goals)
}

#[test]
fn symmetric_head_on_pair_passes() {
    let (closest, end, goals) = run_pair(0.05, 100);
    assert!(closest > 0.0, "pair collided: {closest}");
    assert!(end[0].distance(goals[0]) < 0.05);
    assert!(end[1].distance(goals[1]) < 0.05);
}

#[test]
fn exactly_collinear_pair_never_collides() {
    // perfect collinear symmetry gives ORCA no side to pick; the agents
    // slow down instead of passing, but must never touch
    let (closest, _, _) = run_pair(0.0, 100);
    assert!(closest > 0.0);
}

#[test]
fn empty_crowd_robot_heads_straight_at_full_speed() {
    let state = JointState {
        robot: RobotState {
            position: Vec2::new(0.0, -4.0),
            velocity: Vec2::ZERO,
            radius: 0.3,
            goal: Vec2::new(0.0, 4.0),
            v_pref: 1.0,
            heading: 0.0,
        },
        humans: vec![],
    };
    let a = orca_robot_policy(&state, &OrcaParams::default(), DT);
    assert!((a.speed - 1.0).abs() < 1e-12);
    assert!((a.heading - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
}

#[test]
fn humans_visible_to_each_other_do_not_collide() {
    let config = SimConfig::default();
    let mut worst = f64::INFINITY;
    for seed in 0..100 {
        let mut sim = CrowdSim::new(config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        while !sim.is_finished() {
            let obs = sim.observe();
            let before: Vec<HumanState> = obs.humans.clone();
            let a = orca_robot_policy(&obs, &config.orca, DT);
            let out = sim.step(a).unwrap();
            let after = &out.next_state.humans;
            for i in 0..before.len() {
                for j in i + 1..before.len() {
                    let d = min_separation(
                        before[i].position,
                        after[i].velocity,
                        before[i].radius,
                        before[j].position,
                        after[j].velocity,
                        before[j].radius,
                        DT,
                    );
                    worst = worst.min(d);
                }
            }
        }
    }
    assert!(worst >= 0.0, "human-human overlap {worst}");
}

fn arb_agent() -> impl Strategy<Value = OrcaAgent> {
    (
        -5.0..5.0f64,
        -5.0..5.0f64,
        -1.0..1.0f64,
        -1.0..1.0f64,
        0.2..0.4f64,
    )
        .prop_map(|(x, y, vx, vy, r)| OrcaAgent {
            position: Vec2::new(x, y),
            velocity: Vec2::new(vx, vy),
            radius: r,
        })
}

proptest! {
    #[test]
    fn output_respects_speed_limit(
        me in arb_agent(),
        others in prop::collection::vec(arb_agent(), 0..8),
        pref in (-2.0..2.0f64, -2.0..2.0f64),
        max_speed in 0.3..1.5f64,
    ) {
        let v = compute_orca_velocity(&me, Vec2::new(pref.0, pref.1), max_speed, &others, &OrcaParams::default(), DT);
        prop_assert!(v.length() <= max_speed + 1e-9);
        prop_assert!(v.x.is_finite() && v.y.is_finite());
    }

    #[test]
    fn rotation_equivariance(
        me in arb_agent(),
        others in prop::collection::vec(arb_agent(), 1..6),
        pref in (-1.0..1.0f64, -1.0..1.0f64),
        angle in -3.0..3.0f64,
    ) {
        let params = OrcaParams::default();
        let pref = Vec2::new(pref.0, pref.1);
        let rot = |a: &OrcaAgent| OrcaAgent {
            position: a.position.rotated(angle),
            velocity: a.velocity.rotated(angle),
            radius: a.radius,
        };
        let v = compute_orca_velocity(&me, pref, 1.0, &others, &params, DT);
        let rotated: Vec<OrcaAgent> = others.iter().map(rot).collect();
        let w = compute_orca_velocity(&rot(&me), pref.rotated(angle), 1.0, &rotated, &params, DT);
        prop_assert!((v.rotated(angle) - w).length() < 1e-6, "{:?} vs {:?}", v.rotated(angle), w);
    }
}
