pub mod error;
pub mod harness;
pub mod model;
pub mod orca;
pub mod planner;
pub mod sim;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
