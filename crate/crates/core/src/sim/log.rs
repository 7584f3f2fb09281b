use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Action, Event, HumanState, RobotState};
use crate::error::Result;

/// One line of an episode log: the state reached after `action` was executed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// seconds since episode start, after this step
    pub time: f64,
    pub robot: RobotState,
    pub humans: Vec<HumanState>,
    pub action: Action,
    pub reward: f64,
    pub event: Event,
}

/// Writes records as JSON lines.
pub fn write_episode_log<W: Write>(mut out: W, records: &[StepRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_episode_log(text: &str) -> Result<Vec<StepRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
