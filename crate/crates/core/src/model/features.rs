use crate::error::{Error, Result};
use crate::sim::{HumanState, JointState, Vec2};
use crate::tensor::Matrix;

pub const ROBOT_FEATURES: usize = 5;
pub const HUMAN_FEATURES: usize = 7;

/// Robot-centric frame: origin at the robot, x-axis toward its goal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub origin: Vec2,
    /// World angle of the frame's x-axis.
    pub angle: f64,
}

impl Frame {
    pub fn of(state: &JointState) -> Frame {
        let r = &state.robot;
        let to_goal = r.goal - r.position;
        // on the goal the direction is undefined; fall back to the heading
        let angle = if to_goal.length_squared() > 0.0 {
            to_goal.angle()
        } else {
            r.heading
        };
        Frame {
            origin: r.position,
            angle,
        }
    }

    pub fn point_to_local(&self, p: Vec2) -> Vec2 {
        (p - self.origin).rotated(-self.angle)
    }

    pub fn vector_to_local(&self, v: Vec2) -> Vec2 {
        v.rotated(-self.angle)
    }

    pub fn vector_to_world(&self, v: Vec2) -> Vec2 {
        v.rotated(self.angle)
    }
}

/// Per-agent input features of one state in its robot-centric frame.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalState {
    pub frame: Frame,
    /// (dist_to_goal, v_pref, vx, vy, radius)
    pub robot: [f64; ROBOT_FEATURES],
    /// (px, py, vx, vy, radius, dist_to_robot, radius + robot radius)
    pub humans: Vec<[f64; HUMAN_FEATURES]>,
}

pub fn canonicalize(state: &JointState) -> CanonicalState {
    let frame = Frame::of(state);
    let r = &state.robot;
    let v = frame.vector_to_local(r.velocity);
    let humans = state
        .humans
        .iter()
        .map(|h| human_features(&frame, h, r.radius))
        .collect();
    CanonicalState {
        frame,
        robot: [r.distance_to_goal(), r.v_pref, v.x, v.y, r.radius],
        humans,
    }
}

fn human_features(frame: &Frame, h: &HumanState, robot_radius: f64) -> [f64; HUMAN_FEATURES] {
    let p = frame.point_to_local(h.position);
    let v = frame.vector_to_local(h.velocity);
    [
        p.x,
        p.y,
        v.x,
        v.y,
        h.radius,
        h.position.distance(frame.origin),
        h.radius + robot_radius,
    ]
}

/// Features of many states that share one human count, stacked for a batched forward.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub num_humans: usize,
    pub frames: Vec<Frame>,
    /// B × ROBOT_FEATURES
    pub robot: Matrix,
    /// (B·N) × HUMAN_FEATURES, state-major
    pub humans: Matrix,
}

impl GraphBatch {
    /// All states must have the same number of humans.
    pub fn new<'a>(states: impl IntoIterator<Item = &'a JointState>) -> Result<GraphBatch> {
        let canon: Vec<CanonicalState> = states.into_iter().map(canonicalize).collect();
        Self::from_canonical(&canon)
    }

    pub fn from_canonical(canon: &[CanonicalState]) -> Result<GraphBatch> {
        let n = canon.first().map_or(0, |c| c.humans.len());
        if canon.iter().any(|c| c.humans.len() != n) {
            return Err(Error::contract("graph batch mixes human counts"));
        }
        let b = canon.len();
        let mut robot = Vec::with_capacity(b * ROBOT_FEATURES);
        let mut humans = Vec::with_capacity(b * n * HUMAN_FEATURES);
        for c in canon {
            robot.extend_from_slice(&c.robot);
            for h in &c.humans {
                humans.extend_from_slice(h);
            }
        }
        Ok(GraphBatch {
            num_humans: n,
            frames: canon.iter().map(|c| c.frame).collect(),
            robot: Matrix::from_vec(b, ROBOT_FEATURES, robot)?,
            humans: Matrix::from_vec(b * n, HUMAN_FEATURES, humans)?,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Nodes per graph (robot plus humans).
    pub fn nodes(&self) -> usize {
        self.num_humans + 1
    }
}

/// Groups state indices by human count, preserving order within each group.
pub(crate) fn group_by_humans(states: &[JointState]) -> Vec<Vec<usize>> {
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for (i, s) in states.iter().enumerate() {
        let n = s.humans.len();
        match groups.iter_mut().find(|(k, _)| *k == n) {
            Some((_, g)) => g.push(i),
            None => groups.push((n, vec![i])),
        }
    }
    groups.into_iter().map(|(_, g)| g).collect()
}
