//! Stage implementations behind the `dmval` command.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod extract;
pub mod gridsearch;
pub mod synth;
pub mod train;
pub mod validate;

use config::PipelineConfig;
use error::CliResult;
use extract::{DemoManifest, MANIFEST_FILE};
use train::RESULTS_FILE;
use validate::ValidationReport;

pub fn load_manifest(cfg: &PipelineConfig) -> CliResult<DemoManifest> {
    DemoManifest::load(&cfg.stage_dir("extract").join(MANIFEST_FILE))
}

pub fn load_train_results(cfg: &PipelineConfig) -> CliResult<Vec<train::TrainRecord>> {
    train::load_results(&cfg.stage_dir("train").join(RESULTS_FILE))
}

/// Extraction, training and validation in sequence.
pub fn run_all(cfg: &PipelineConfig) -> CliResult<ValidationReport> {
    let manifest = extract::cmd_extract(cfg)?;
    train::cmd_train(cfg, &manifest)?;
    let results = load_train_results(cfg)?;
    validate::cmd_validate(cfg, &manifest, &results)
}
