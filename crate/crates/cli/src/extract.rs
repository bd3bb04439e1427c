//! Scenario extraction stage.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use dmval_core::scenarios::{extract_left_lane_changes, Demonstration, ManifestEntry};
use dmval_core::trajdata::{discover_recordings, load_recording, RecordingFiles};
use serde::{Deserialize, Serialize};

use crate::config::{read_json, write_json, PipelineConfig};
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordingSummary {
    pub recording_id: u32,
    pub demos: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcludedRecording {
    pub recording_id: u32,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoManifest {
    pub recordings: Vec<RecordingSummary>,
    pub excluded_recordings: Vec<ExcludedRecording>,
    pub total_demos: usize,
    pub demos: Vec<ManifestEntry>,
}

impl DemoManifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        read_json(path)
    }
}

fn exclusion_reason(
    cfg: &PipelineConfig,
    recording_id: u32,
    has_merge_lane: bool,
) -> Option<String> {
    if has_merge_lane {
        Some("recording contains a merge lane".into())
    } else if cfg.excluded_recordings.contains(&recording_id) {
        Some("listed in excluded_recordings (merge-lane location)".into())
    } else {
        None
    }
}

/// Demonstrations of one recording, or the reason it is excluded.
fn recording_demos(
    cfg: &PipelineConfig,
    recording_id: u32,
) -> CliResult<Result<Vec<Demonstration>, String>> {
    let files = RecordingFiles::in_dir(&cfg.data_dir, recording_id);
    let rec = load_recording(&files, &cfg.columns)?;
    if let Some(reason) = exclusion_reason(cfg, recording_id, rec.meta.has_merge_lane) {
        return Ok(Err(reason));
    }
    Ok(Ok(extract_left_lane_changes(&rec)?))
}

/// Runs extraction over every recording in the data directory and writes
/// the manifest.
pub fn cmd_extract(cfg: &PipelineConfig) -> CliResult<DemoManifest> {
    let ids = discover_recordings(&cfg.data_dir)?;
    if ids.is_empty() {
        return Err(CliError::Data(dmval_core::Error::DataIntegrity(format!(
            "no recordings found in {}",
            cfg.data_dir.display()
        ))));
    }
    let mut manifest = DemoManifest {
        recordings: Vec::new(),
        excluded_recordings: Vec::new(),
        total_demos: 0,
        demos: Vec::new(),
    };
    for id in ids {
        match recording_demos(cfg, id)? {
            Ok(demos) => {
                manifest.recordings.push(RecordingSummary {
                    recording_id: id,
                    demos: demos.len(),
                });
                manifest
                    .demos
                    .extend(demos.iter().map(Demonstration::manifest_entry));
            }
            Err(reason) => manifest.excluded_recordings.push(ExcludedRecording {
                recording_id: id,
                reason,
            }),
        }
    }
    manifest.total_demos = manifest.demos.len();
    let dir = cfg.stage_dir("extract");
    cfg.write_into(&dir)?;
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Re-extracts the demonstrations named in `manifest` from the raw data, in
/// manifest order.
pub fn load_demos(
    cfg: &PipelineConfig,
    manifest: &DemoManifest,
    wanted: &BTreeSet<String>,
) -> CliResult<Vec<Demonstration>> {
    let mut by_recording: BTreeMap<u32, Vec<&ManifestEntry>> = BTreeMap::new();
    for e in manifest
        .demos
        .iter()
        .filter(|e| wanted.contains(&e.demo_id))
    {
        by_recording.entry(e.recording_id).or_default().push(e);
    }
    let mut found: BTreeMap<String, Demonstration> = BTreeMap::new();
    for (&rid, entries) in &by_recording {
        let demos = match recording_demos(cfg, rid)? {
            Ok(d) => d,
            Err(reason) => {
                return Err(CliError::Data(dmval_core::Error::RecordingRejected {
                    recording_id: rid,
                    reason,
                }))
            }
        };
        for e in entries {
            let demo = demos
                .iter()
                .find(|d| d.demo_id == e.demo_id)
                .ok_or_else(|| {
                    CliError::Data(dmval_core::Error::DataIntegrity(format!(
                        "demonstration {} listed in the manifest is not in recording {rid}",
                        e.demo_id
                    )))
                })?;
            found.insert(e.demo_id.clone(), demo.clone());
        }
    }
    let missing: Vec<&str> = wanted
        .iter()
        .filter(|id| !found.contains_key(*id))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Data(dmval_core::Error::Contract(format!(
            "demonstrations not in the manifest: {}",
            missing.join(", ")
        ))));
    }
    Ok(manifest
        .demos
        .iter()
        .filter_map(|e| found.remove(&e.demo_id))
        .collect())
}
