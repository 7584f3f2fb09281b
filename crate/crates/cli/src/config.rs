use std::path::Path;

use crowdnav_core::harness::{EvalConfig, ReturnConvention};
use crowdnav_core::model::ModelConfig;
use crowdnav_core::planner::PlanConfig;
use crowdnav_core::sim::SimConfig;
use crowdnav_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything a run can be configured with; every key is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Root of every random stream.
    pub seed: u64,
    pub sim: SimConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub cases: usize,
    pub return_convention: ReturnConvention,
    pub parallel: bool,
    pub plan: PlanConfig,
}

impl Default for EvalSection {
    fn default() -> Self {
        let core = EvalConfig::default();
        EvalSection {
            cases: core.cases,
            return_convention: core.return_convention,
            parallel: core.parallel,
            plan: PlanConfig::default(),
        }
    }
}

impl EvalSection {
    pub fn to_core(self, base_seed: u64) -> EvalConfig {
        EvalConfig {
            cases: self.cases,
            base_seed,
            return_convention: self.return_convention,
            parallel: self.parallel,
        }
    }
}

impl Config {
    pub fn parse(text: &str, origin: &str) -> Result<Config, CliError> {
        let config: Config =
            toml::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Semantic checks, named by the offending section.
    pub fn validate(&self) -> Result<(), CliError> {
        let check = |section: &str, r: crowdnav_core::Result<()>| {
            r.map_err(|e| CliError::Config(format!("[{section}] {e}")))
        };
        check("sim", self.sim.validate())?;
        check("model", self.model.validate())?;
        check("train", self.train.validate())?;
        check("eval.plan", self.eval.plan.validate())?;
        if self.eval.cases == 0 {
            return Err(CliError::Config("[eval] cases must be at least 1".into()));
        }
        Ok(())
    }

    /// The defaults, as a commented starting point.
    pub fn template() -> String {
        let body = toml::to_string_pretty(&Config::default()).expect("defaults serialize");
        format!("# crowdnav configuration; every key is optional.\n{body}")
    }
}
