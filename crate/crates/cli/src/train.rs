//! Training stage: one IRL fit per demonstration.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Instant;

use dmval_core::irl::{train, TrainingDiagnostics, TrainingResult, TrainingStatus};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{write_json, PipelineConfig};
use crate::error::{CliError, CliResult};
use crate::extract::DemoManifest;

pub const RESULTS_FILE: &str = "results.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMINGS_FILE: &str = "timings.json";

/// One line of the results file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub demo_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub result: Option<TrainingResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub diagnostics: Option<TrainingDiagnostics>,
    /// Set when the demonstration could not be trained at all.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl TrainRecord {
    pub fn converged(&self) -> bool {
        self.result.as_ref().is_some_and(|r| r.converged())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub total: usize,
    pub converged: usize,
    pub failed_indefinite_hessian: usize,
    pub failed_no_minimum: usize,
    pub errored: usize,
    pub convergence_rate: f64,
    /// Failed fits whose initial Jacobian shows velocity dominance.
    pub failed_with_vel_dominance: usize,
    pub converged_with_vel_dominance: usize,
}

impl TrainSummary {
    pub fn failures(&self) -> usize {
        self.total - self.converged
    }
}

fn summarize(records: &[TrainRecord]) -> TrainSummary {
    let status = |s| {
        records
            .iter()
            .filter(|r| r.result.as_ref().is_some_and(|x| x.status == s))
            .count()
    };
    let dominant = |conv: bool| {
        records
            .iter()
            .filter(|r| r.result.is_some() && r.converged() == conv)
            .filter(|r| r.diagnostics.as_ref().is_some_and(|d| d.vel_dominance))
            .count()
    };
    let converged = status(TrainingStatus::Converged);
    TrainSummary {
        total: records.len(),
        converged,
        failed_indefinite_hessian: status(TrainingStatus::FailedIndefiniteHessian),
        failed_no_minimum: status(TrainingStatus::FailedNoMinimum),
        errored: records.iter().filter(|r| r.error.is_some()).count(),
        convergence_rate: if records.is_empty() {
            0.0
        } else {
            converged as f64 / records.len() as f64
        },
        failed_with_vel_dominance: dominant(false),
        converged_with_vel_dominance: dominant(true),
    }
}

pub(crate) fn pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

/// Trains every demonstration of the manifest in parallel and writes one
/// JSON line per demonstration, in manifest order.
pub fn cmd_train(cfg: &PipelineConfig, manifest: &DemoManifest) -> CliResult<TrainSummary> {
    let wanted = manifest.demos.iter().map(|e| e.demo_id.clone()).collect();
    let demos = crate::extract::load_demos(cfg, manifest, &wanted)?;
    let started = Instant::now();
    let outcomes: Vec<(TrainRecord, f64)> = pool(cfg.jobs)?.install(|| {
        demos
            .par_iter()
            .map(|demo| {
                let t0 = Instant::now();
                let rec = match train(demo, cfg.constants, cfg.theta_init, &cfg.optimizer) {
                    Ok((result, diagnostics)) => TrainRecord {
                        demo_id: demo.demo_id.clone(),
                        result: Some(result),
                        diagnostics: Some(diagnostics),
                        error: None,
                    },
                    Err(e) => TrainRecord {
                        demo_id: demo.demo_id.clone(),
                        result: None,
                        diagnostics: None,
                        error: Some(e.to_string()),
                    },
                };
                (rec, t0.elapsed().as_secs_f64())
            })
            .collect()
    });

    let dir = cfg.stage_dir("train");
    cfg.write_into(&dir)?;
    let path = dir.join(RESULTS_FILE);
    let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for (rec, _) in &outcomes {
        let line = serde_json::to_string(rec).map_err(|e| CliError::Data(e.into()))?;
        writeln!(w, "{line}").map_err(|e| CliError::io(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let records: Vec<TrainRecord> = outcomes.iter().map(|(r, _)| r.clone()).collect();
    let summary = summarize(&records);
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    let per_demo: BTreeMap<&str, f64> = outcomes
        .iter()
        .map(|(r, t)| (r.demo_id.as_str(), *t))
        .collect();
    write_json(
        &dir.join(TIMINGS_FILE),
        &serde_json::json!({ "wall_seconds": started.elapsed().as_secs_f64(), "per_demo_seconds": per_demo }),
    )?;
    Ok(summary)
}

pub fn load_results(path: &Path) -> CliResult<Vec<TrainRecord>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| {
            CliError::Data(dmval_core::Error::DataIntegrity(format!(
                "{} line {}: {e}",
                path.display(),
                i + 1
            )))
        })?;
        out.push(rec);
    }
    Ok(out)
}
