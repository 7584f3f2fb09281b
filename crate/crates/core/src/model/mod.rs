//! Relational graph networks: state embedding, attention, GCN propagation,
//! and the value / human-motion heads.

mod check;
mod features;
mod graph;
mod networks;

pub use check::{
    gradient_check, random_joint_state, GradcheckReport, GRADCHECK_FLOOR, GRADCHECK_STEP,
};
pub use features::{
    canonicalize, CanonicalState, Frame, GraphBatch, HUMAN_FEATURES, ROBOT_FEATURES,
};
pub use graph::{GraphForwardTrace, GraphStack, ModelConfig};
pub use networks::{LinearMotion, ModelParams, PredictionNetwork, ValueNetwork};
