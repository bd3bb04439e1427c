//! Pipeline configuration, loaded from JSON and command-line overrides.

use std::path::{Path, PathBuf};

use dmval_core::irl::{ConstantsGrid, OptimizerConfig, DEFAULT_THETA_INIT};
use dmval_core::reward::{FeatureConstants, RewardWeights};
use dmval_core::rollout::AgentConfig;
use dmval_core::trajdata::ColumnMap;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const CONFIG_FILE: &str = "config.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatmapConfig {
    /// Number of converged demonstrations to export heat maps for.
    pub count: usize,
    pub resolution: f64,
    /// Longitudinal extent around the ego, behind and ahead.
    pub behind: f64,
    pub ahead: f64,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self {
            count: 3,
            resolution: 0.5,
            behind: 30.0,
            ahead: 60.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub columns: ColumnMap,
    /// Recordings left out besides those flagged with a merge lane.
    pub excluded_recordings: Vec<u32>,
    pub constants: FeatureConstants,
    pub theta_init: RewardWeights,
    pub agent: AgentConfig,
    pub optimizer: OptimizerConfig,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    pub seed: u64,
    pub grid: ConstantsGrid,
    /// Leading demonstrations used by the grid search.
    pub gridsearch_demos: usize,
    pub heatmap: HeatmapConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            columns: ColumnMap::default(),
            excluded_recordings: vec![58, 59, 60],
            constants: FeatureConstants::default(),
            theta_init: DEFAULT_THETA_INIT,
            agent: AgentConfig::default(),
            optimizer: OptimizerConfig::default(),
            jobs: 0,
            seed: 0,
            grid: ConstantsGrid::default(),
            gridsearch_demos: 15,
            heatmap: HeatmapConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        self.constants
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.agent
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if !self.theta_init.is_finite() {
            return bad("theta_init must be finite".into());
        }
        let opt = &self.optimizer;
        if !(opt.grad_tol > 0.0) || opt.max_iters == 0 || opt.horizon < 2 {
            return bad(format!(
                "optimizer needs grad_tol > 0, max_iters >= 1 and horizon >= 2, got {opt:?}"
            ));
        }
        let g = &self.grid;
        if g.c.is_empty() || g.sigma_x.is_empty() || g.sigma_y.is_empty() {
            return bad("constants grid has an empty axis".into());
        }
        for k in g.combinations() {
            k.validate()
                .map_err(|e| CliError::Config(format!("grid: {e}")))?;
        }
        if self.gridsearch_demos == 0 {
            return bad("gridsearch_demos must be at least 1".into());
        }
        let h = &self.heatmap;
        if !(h.resolution > 0.0 && h.behind >= 0.0 && h.ahead >= 0.0) {
            return bad(format!("invalid heat map settings {h:?}"));
        }
        Ok(())
    }

    /// Agent settings for data sampled at `dt`.
    pub fn agent_for(&self, dt: f64) -> AgentConfig {
        AgentConfig { dt, ..self.agent }
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.out_dir.join(stage)
    }

    /// Creates `dir` and writes this configuration into it.
    pub fn write_into(&self, dir: &Path) -> CliResult<()> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        write_json(&dir.join(CONFIG_FILE), self)
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.into()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(e.into()))
}
