use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::CaseRecord;
use crate::error::{Error, Result};
use crate::sim::{Event, SimConfig};

/// How "Avg. Return" averages discounted returns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnConvention {
    /// Return-to-go of every step of every episode, averaged over all steps.
    #[default]
    StepAveraged,
    /// Return from the start state, averaged over episodes.
    PerEpisode,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub cases: usize,
    pub success: f64,
    pub collision: f64,
    pub timeout: f64,
    /// Seconds beyond the straight-line time, over successful cases only.
    pub extra_time: Option<f64>,
    pub avg_return: f64,
    /// Avg. return of the straight-line, empty-crowd episodes.
    pub upper_bound: f64,
    pub max_diff: f64,
}

/// Discounted return-to-go of every step.
fn returns_to_go(rewards: &[f64], discount: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = 0.0;
    for (o, &r) in out.iter_mut().zip(rewards).rev() {
        g = r + discount * g;
        *o = g;
    }
    out
}

fn average_return<'a>(
    episodes: impl Iterator<Item = &'a [f64]>,
    discount: f64,
    convention: ReturnConvention,
) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for rewards in episodes {
        let rtg = returns_to_go(rewards, discount);
        match convention {
            ReturnConvention::StepAveraged => {
                sum += rtg.iter().sum::<f64>();
                count += rtg.len();
            }
            ReturnConvention::PerEpisode => {
                sum += rtg.first().copied().unwrap_or(0.0);
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Avg. return of one case's straight-line episode.
pub fn upper_bound_return(
    record: &CaseRecord,
    sim: &SimConfig,
    gamma: f64,
    convention: ReturnConvention,
) -> f64 {
    let discount = gamma.powf(sim.time_step * sim.robot_v_pref);
    average_return(
        std::iter::once(record.straight_line_rewards.as_slice()),
        discount,
        convention,
    )
}

pub fn aggregate(
    records: &[CaseRecord],
    sim: &SimConfig,
    gamma: f64,
    convention: ReturnConvention,
) -> Result<Metrics> {
    if records.is_empty() {
        return Err(Error::contract("no case records to aggregate"));
    }
    let n = records.len() as f64;
    let count = |e: Event| records.iter().filter(|r| r.outcome == e.name()).count() as f64;
    let (success, collision, timeout) = (
        count(Event::ReachedGoal),
        count(Event::Collision),
        count(Event::Timeout),
    );
    if success + collision + timeout != n {
        return Err(Error::contract(
            "a case record ended without a terminal event",
        ));
    }
    let extra: Vec<f64> = records
        .iter()
        .filter(|r| r.succeeded())
        .map(|r| r.navigation_time - r.straight_line_rewards.len() as f64 * sim.time_step)
        .collect();
    let discount = gamma.powf(sim.time_step * sim.robot_v_pref);
    let avg_return = average_return(
        records.iter().map(|r| r.rewards.as_slice()),
        discount,
        convention,
    );
    let upper_bound = average_return(
        records.iter().map(|r| r.straight_line_rewards.as_slice()),
        discount,
        convention,
    );
    Ok(Metrics {
        cases: records.len(),
        success: success / n,
        collision: collision / n,
        timeout: timeout / n,
        extra_time: (!extra.is_empty()).then(|| extra.iter().sum::<f64>() / extra.len() as f64),
        avg_return,
        upper_bound,
        max_diff: upper_bound - avg_return,
    })
}

/// Mean and sample standard deviation over independently seeded runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub runs: usize,
    pub mean: Metrics,
    pub std: Metrics,
}

pub fn summarize_seeds(runs: &[Metrics]) -> Result<MetricsSummary> {
    let first = runs
        .first()
        .ok_or_else(|| Error::contract("no runs to summarize"))?;
    let stat = |f: &dyn Fn(&Metrics) -> f64| {
        let xs: Vec<f64> = runs.iter().map(f).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
        } else {
            0.0
        };
        (mean, var.sqrt())
    };
    let extra: Vec<f64> = runs.iter().filter_map(|m| m.extra_time).collect();
    let extra_stat = if extra.is_empty() {
        (None, None)
    } else {
        let mean = extra.iter().sum::<f64>() / extra.len() as f64;
        let var = if extra.len() > 1 {
            extra.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (extra.len() - 1) as f64
        } else {
            0.0
        };
        (Some(mean), Some(var.sqrt()))
    };
    let (success, success_sd) = stat(&|m| m.success);
    let (collision, collision_sd) = stat(&|m| m.collision);
    let (timeout, timeout_sd) = stat(&|m| m.timeout);
    let (avg_return, avg_return_sd) = stat(&|m| m.avg_return);
    let (upper_bound, upper_bound_sd) = stat(&|m| m.upper_bound);
    let (max_diff, max_diff_sd) = stat(&|m| m.max_diff);
    Ok(MetricsSummary {
        runs: runs.len(),
        mean: Metrics {
            cases: first.cases,
            success,
            collision,
            timeout,
            extra_time: extra_stat.0,
            avg_return,
            upper_bound,
            max_diff,
        },
        std: Metrics {
            cases: first.cases,
            success: success_sd,
            collision: collision_sd,
            timeout: timeout_sd,
            extra_time: extra_stat.1,
            avg_return: avg_return_sd,
            upper_bound: upper_bound_sd,
            max_diff: max_diff_sd,
        },
    })
}

/// Column names as printed in the paper's results table.
pub const CSV_COLUMNS: [&str; 6] = [
    "Method",
    "Success",
    "Collision",
    "Extra Time",
    "Avg. Return",
    "Max Diff.",
];

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One header row plus one row per method.
pub fn metrics_csv(rows: &[(&str, &Metrics)]) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for (name, m) in rows {
        let extra = m
            .extra_time
            .map_or_else(|| "n/a".to_string(), |t| format!("{t:.4}"));
        writeln!(
            out,
            "{},{:.4},{:.4},{},{:.4},{:.4}",
            csv_field(name),
            m.success,
            m.collision,
            extra,
            m.avg_return,
            m.max_diff
        )
        .expect("writing to a string");
    }
    out
}
