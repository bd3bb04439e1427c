//! Validation stage: rollouts, tactical table, operational statistics,
//! phase-plot data and reward heat maps.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use dmval_core::operational::{
    emit_phase_data, lane_change_point_stats, preceding_series, LaneChangeStats, Panel,
    PhaseManifest, PhaseSeries, Source,
};
use dmval_core::reward::{heatmap, Feature, GridSpec, HeatmapMode};
use dmval_core::rollout::rollout;
use dmval_core::scenarios::Demonstration;
use dmval_core::tactical::{
    classify, tabulate, TacticalCategory, TacticalLabel, TacticalTable, Trajectory,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{write_json, PipelineConfig};
use crate::error::{CliError, CliResult};
use crate::extract::{load_demos, DemoManifest};
use crate::train::TrainRecord;

pub const REPORT_FILE: &str = "report.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoError {
    pub demo_id: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoLabels {
    pub demo_id: String,
    pub human: TacticalLabel,
    pub model: TacticalLabel,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OperationalReport {
    /// Paired comparison at the lane-change frame, human minus model.
    pub lane_change: Option<LaneChangeStats>,
    /// Why `lane_change` is absent.
    pub lane_change_note: Option<String>,
    /// Series per phase-plot panel.
    pub series_per_panel: BTreeMap<String, usize>,
    /// Excluded trajectories per `source/reason`.
    pub exclusions: BTreeMap<String, usize>,
    pub contact_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub demos_trained: usize,
    pub demos_converged: usize,
    pub rollouts: usize,
    pub rollout_failures: Vec<DemoError>,
    pub labels: Vec<DemoLabels>,
    pub tactical: Option<TacticalTable>,
    pub operational: OperationalReport,
    pub phase_data: PhaseManifest,
    pub heatmaps: Vec<PathBuf>,
}

struct DemoOutcome {
    labels: DemoLabels,
    series: Vec<PhaseSeries>,
    exclusions: Vec<String>,
}

fn snake<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn lane_change_frame(label: &TacticalLabel) -> Option<i64> {
    (label.category == TacticalCategory::LaneChange)
        .then_some(label.event_frame)
        .flatten()
}

fn validate_demo(
    cfg: &PipelineConfig,
    demo: &Demonstration,
    rec: &TrainRecord,
    rollout_dir: &std::path::Path,
) -> Result<DemoOutcome, String> {
    let weights = rec
        .result
        .as_ref()
        .and_then(|r| r.weights)
        .ok_or("no trained weights")?;
    let agent = cfg.agent_for(demo.dt);
    let run = rollout(demo, &weights, cfg.constants, &agent).map_err(|e| e.to_string())?;
    run.write_csv(&rollout_dir.join(format!("{}.csv", demo.demo_id)))
        .map_err(|e| e.to_string())?;

    let human_traj = Trajectory::from_track(&demo.ego);
    let model_traj = Trajectory::from_rollout(&run, &demo.ego);
    let human = classify(&human_traj, &demo.neighbors, &demo.layout);
    let model = classify(&model_traj, &demo.neighbors, &demo.layout);

    let mut series = Vec::new();
    let mut exclusions = Vec::new();
    for (source, traj, label) in [
        (Source::Human, &human_traj, human),
        (Source::Model, &model_traj, model),
    ] {
        if Panel::of(source, label.category).is_none() {
            continue;
        }
        match preceding_series(
            &demo.demo_id,
            source,
            label.category,
            traj,
            &demo.neighbors,
            &demo.layout,
            lane_change_frame(&label),
        ) {
            Ok(s) => series.push(s),
            Err(x) => exclusions.push(format!("{}/{}", snake(&source), snake(&x))),
        }
    }
    Ok(DemoOutcome {
        labels: DemoLabels {
            demo_id: demo.demo_id.clone(),
            human,
            model,
        },
        series,
        exclusions,
    })
}

fn write_heatmaps(
    cfg: &PipelineConfig,
    demos: &[(&Demonstration, &TrainRecord)],
    dir: &std::path::Path,
) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    if cfg.heatmap.count == 0 {
        return Ok(written);
    }
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for (demo, rec) in demos.iter().take(cfg.heatmap.count) {
        let Some(weights) = rec.result.as_ref().and_then(|r| r.weights) else {
            continue;
        };
        let human = classify(
            &Trajectory::from_track(&demo.ego),
            &demo.neighbors,
            &demo.layout,
        );
        let frame = lane_change_frame(&human).unwrap_or(demo.first_frame());
        let Some(ego) = demo.ego.at(frame) else {
            continue;
        };
        let others: Vec<[f64; 2]> = demo
            .neighbors
            .iter()
            .filter_map(|n| n.at(frame))
            .map(|f| [f.x, f.y])
            .collect();
        let grid = GridSpec {
            x_min: ego.x - cfg.heatmap.behind,
            x_max: ego.x + cfg.heatmap.ahead,
            y_min: demo.layout.road_boundary_low,
            y_max: demo.layout.road_boundary_high,
            resolution: cfg.heatmap.resolution,
        };
        for (name, mode) in [
            ("positional", HeatmapMode::Positional),
            ("collision", HeatmapMode::Single(Feature::Collision)),
        ] {
            let map = heatmap(&weights, cfg.constants, &demo.layout, &others, grid, mode)?;
            let stem = format!("{}_{name}", demo.demo_id);
            map.write(
                &dir.join(format!("{stem}.csv")),
                &dir.join(format!("{stem}.json")),
            )?;
            written.push(PathBuf::from("heatmaps").join(format!("{stem}.csv")));
        }
    }
    Ok(written)
}

/// Rolls out every converged agent and assembles the validation report.
pub fn cmd_validate(
    cfg: &PipelineConfig,
    manifest: &DemoManifest,
    results: &[TrainRecord],
) -> CliResult<ValidationReport> {
    let converged: Vec<&TrainRecord> = results.iter().filter(|r| r.converged()).collect();
    let wanted: BTreeSet<String> = converged.iter().map(|r| r.demo_id.clone()).collect();
    let listed: BTreeSet<&str> = manifest.demos.iter().map(|e| e.demo_id.as_str()).collect();
    let missing: Vec<&str> = wanted
        .iter()
        .map(String::as_str)
        .filter(|id| !listed.contains(id))
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Data(dmval_core::Error::Contract(format!(
            "trained demonstrations missing from the manifest: {}",
            missing.join(", ")
        ))));
    }
    let demos = load_demos(cfg, manifest, &wanted)?;
    let by_id: BTreeMap<&str, &TrainRecord> =
        converged.iter().map(|r| (r.demo_id.as_str(), *r)).collect();
    let pairs: Vec<(&Demonstration, &TrainRecord)> = demos
        .iter()
        .map(|d| (d, by_id[d.demo_id.as_str()]))
        .collect();

    let dir = cfg.stage_dir("validate");
    cfg.write_into(&dir)?;
    let rollout_dir = dir.join("rollouts");
    std::fs::create_dir_all(&rollout_dir).map_err(|e| CliError::io(&rollout_dir, e))?;

    let outcomes: Vec<(String, Result<DemoOutcome, String>)> = crate::train::pool(cfg.jobs)?
        .install(|| {
            pairs
                .par_iter()
                .map(|(d, r)| (d.demo_id.clone(), validate_demo(cfg, d, r, &rollout_dir)))
                .collect()
        });

    let mut report = ValidationReport {
        demos_trained: results.len(),
        demos_converged: converged.len(),
        rollouts: 0,
        rollout_failures: Vec::new(),
        labels: Vec::new(),
        tactical: None,
        operational: OperationalReport::default(),
        phase_data: PhaseManifest::default(),
        heatmaps: Vec::new(),
    };
    let mut series = Vec::new();
    let mut model_labels = BTreeMap::new();
    let mut human_labels = BTreeMap::new();
    for (demo_id, outcome) in outcomes {
        match outcome {
            Ok(o) => {
                report.rollouts += 1;
                model_labels.insert(demo_id.clone(), o.labels.model);
                human_labels.insert(demo_id, o.labels.human);
                report.labels.push(o.labels);
                for x in o.exclusions {
                    *report.operational.exclusions.entry(x).or_default() += 1;
                }
                series.extend(o.series);
            }
            Err(error) => report.rollout_failures.push(DemoError { demo_id, error }),
        }
    }
    if !model_labels.is_empty() {
        let table = tabulate(&model_labels, &human_labels)?;
        table.write_csv(&dir.join("tactical_table.csv"))?;
        write_json(&dir.join("tactical_table.json"), &table)?;
        report.tactical = Some(table);
    }

    let op = &mut report.operational;
    for s in &series {
        if let Some(p) = Panel::of(s.source, s.category) {
            *op.series_per_panel.entry(snake(&p)).or_default() += 1;
        }
        op.contact_samples += s.contact_samples;
    }
    let lc = |src: Source| -> BTreeMap<String, PhaseSeries> {
        series
            .iter()
            .filter(|s| s.source == src && s.category == TacticalCategory::LaneChange)
            .map(|s| (s.demo_id.clone(), s.clone()))
            .collect()
    };
    match lane_change_point_stats(&lc(Source::Human), &lc(Source::Model)) {
        Ok(stats) => op.lane_change = Some(stats),
        Err(e) => op.lane_change_note = Some(e.to_string()),
    }
    report.phase_data = emit_phase_data(&series, &dir.join("phase"))?;
    for f in &mut report.phase_data.files {
        f.path = PathBuf::from("phase").join(&f.path);
    }
    report.heatmaps = write_heatmaps(cfg, &pairs, &dir.join("heatmaps"))?;
    write_json(&dir.join(REPORT_FILE), &report)?;
    Ok(report)
}
