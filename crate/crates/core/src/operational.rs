//! Longitudinal safety margins to the preceding vehicle.
//!
//! Inverse time-to-collision and time gap are computed per frame for human
//! and model trajectories alike, with the same filtering rules for both.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{paired_t_test, PairedTest};
use crate::tactical::{TacticalCategory, Trajectory};
use crate::trajdata::{RoadLayout, Track};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperationalSample {
    pub frame: i64,
    /// Bumper-to-bumper longitudinal gap.
    pub x_gap: f64,
    /// Ego speed minus preceding speed; positive when closing.
    pub v_rel: f64,
    pub v_agent: f64,
    pub ttc: f64,
    pub inv_ttc: f64,
    pub t_gap: f64,
}

/// Metrics of one frame, or `None` for a contact sample (`x_gap <= 0`).
pub fn compute_metrics(
    frame: i64,
    x_gap: f64,
    v_rel: f64,
    v_agent: f64,
) -> Option<OperationalSample> {
    if !(x_gap > 0.0) {
        return None;
    }
    Some(OperationalSample {
        frame,
        x_gap,
        v_rel,
        v_agent,
        ttc: if v_rel > 0.0 {
            x_gap / v_rel
        } else {
            f64::INFINITY
        },
        inv_ttc: v_rel / x_gap,
        t_gap: if v_agent > 0.0 {
            x_gap / v_agent
        } else {
            f64::INFINITY
        },
    })
}

/// Center distance minus both half-lengths.
pub fn bumper_gap(center_distance: f64, ego_length: f64, other_length: f64) -> f64 {
    center_distance - 0.5 * (ego_length + other_length)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Human,
    Model,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exclusion {
    MultiplePreceding,
    PrecedingOutOfSightAtLaneChange,
    NoPreceding,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSeries {
    pub demo_id: String,
    pub source: Source,
    pub category: TacticalCategory,
    pub samples: Vec<OperationalSample>,
    pub lane_change_frame: Option<i64>,
    /// Frames with a leader but a non-positive gap.
    pub contact_samples: usize,
}

impl PhaseSeries {
    pub fn sample_at(&self, frame: i64) -> Option<&OperationalSample> {
        self.samples.iter().find(|s| s.frame == frame)
    }
}

/// Nearest vehicle ahead whose center lies in `lane`.
fn leader_at<'a>(
    neighbors: &'a [Track],
    layout: &RoadLayout,
    lane: u32,
    frame: i64,
    x: f64,
) -> Option<(&'a Track, usize)> {
    neighbors
        .iter()
        .filter_map(|n| {
            let f = n.at(frame)?;
            (f.x > x && layout.lane_of(f.y) == Some(lane)).then_some((
                n,
                (f.frame - n.first_frame()) as usize,
                f.x,
            ))
        })
        .min_by(|a, b| a.2.total_cmp(&b.2).then(a.0.track_id.cmp(&b.0.track_id)))
        .map(|(n, i, _)| (n, i))
}

/// Gap series to the preceding vehicle.
///
/// With a lane-change frame the analysis span ends at that frame and the
/// leader is searched in the lane the trajectory started in; a leader must be
/// visible at the change. Without one, the leader is searched in the current
/// lane and the series ends when the leader leaves view. More than one
/// distinct leader over the span excludes the trajectory.
pub fn preceding_series(
    demo_id: &str,
    source: Source,
    category: TacticalCategory,
    traj: &Trajectory,
    neighbors: &[Track],
    layout: &RoadLayout,
    lane_change_frame: Option<i64>,
) -> std::result::Result<PhaseSeries, Exclusion> {
    let origin_lane = traj.positions.first().and_then(|p| layout.lane_of(p[1]));
    let mut leaders: Vec<Option<(&Track, usize)>> = Vec::new();
    for (i, p) in traj.positions.iter().enumerate() {
        let frame = traj.frame(i);
        if lane_change_frame.is_some_and(|lc| frame > lc) {
            break;
        }
        let lane = match lane_change_frame {
            Some(_) => origin_lane,
            None => layout.lane_of(p[1]),
        };
        let leader = lane.and_then(|l| leader_at(neighbors, layout, l, frame, p[0]));
        if lane_change_frame.is_none() && leader.is_none() && leaders.iter().any(Option::is_some) {
            break;
        }
        leaders.push(leader);
    }

    let mut ids: Vec<u32> = leaders.iter().flatten().map(|(t, _)| t.track_id).collect();
    ids.sort_unstable();
    ids.dedup();
    match ids.len() {
        0 => return Err(Exclusion::NoPreceding),
        1 => {}
        _ => return Err(Exclusion::MultiplePreceding),
    }
    if let Some(lc) = lane_change_frame {
        let lc_index = (lc - traj.first_frame) as usize;
        if leaders.get(lc_index).is_none_or(|l| l.is_none()) {
            return Err(Exclusion::PrecedingOutOfSightAtLaneChange);
        }
    }

    let mut samples = Vec::new();
    let mut contact_samples = 0;
    for (i, leader) in leaders.iter().enumerate() {
        let Some((track, fi)) = leader else { continue };
        let lf = &track.frames[*fi];
        let p = traj.positions[i];
        let v = traj.velocities[i];
        let gap = bumper_gap(lf.x - p[0], traj.length, track.vehicle_length);
        match compute_metrics(traj.frame(i), gap, v[0] - lf.vx, v[0]) {
            Some(s) => samples.push(s),
            None => contact_samples += 1,
        }
    }
    Ok(PhaseSeries {
        demo_id: demo_id.to_string(),
        source,
        category,
        samples,
        lane_change_frame,
        contact_samples,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeStats {
    /// Tests on `human - model`.
    pub inv_ttc: PairedTest,
    pub t_gap: PairedTest,
    /// Pairs dropped because a source had no finite sample at its change.
    pub unpaired: usize,
}

fn at_change(s: &PhaseSeries) -> Option<(f64, f64)> {
    let sample = s.sample_at(s.lane_change_frame?)?;
    (sample.inv_ttc.is_finite() && sample.t_gap.is_finite())
        .then_some((sample.inv_ttc, sample.t_gap))
}

/// Paired comparison at each source's own lane-change frame.
pub fn lane_change_point_stats(
    human: &BTreeMap<String, PhaseSeries>,
    model: &BTreeMap<String, PhaseSeries>,
) -> Result<LaneChangeStats> {
    let mut h = (Vec::new(), Vec::new());
    let mut m = (Vec::new(), Vec::new());
    let mut unpaired = 0;
    for (id, hs) in human {
        let Some(ms) = model.get(id) else { continue };
        match (at_change(hs), at_change(ms)) {
            (Some(a), Some(b)) => {
                h.0.push(a.0);
                h.1.push(a.1);
                m.0.push(b.0);
                m.1.push(b.1);
            }
            _ => unpaired += 1,
        }
    }
    if h.0.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} lane-change pairs, at least 2 needed",
            h.0.len()
        )));
    }
    Ok(LaneChangeStats {
        inv_ttc: paired_t_test(&h.0, &m.0)?,
        t_gap: paired_t_test(&h.1, &m.1)?,
        unpaired,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Panel {
    /// Human lane changes.
    A,
    /// Model lane changes.
    B,
    /// Human car following.
    C,
    /// Model car following.
    D,
}

impl Panel {
    pub fn of(source: Source, category: TacticalCategory) -> Option<Panel> {
        match (source, category) {
            (Source::Human, TacticalCategory::LaneChange) => Some(Panel::A),
            (Source::Model, TacticalCategory::LaneChange) => Some(Panel::B),
            (Source::Human, TacticalCategory::CarFollowing) => Some(Panel::C),
            (Source::Model, TacticalCategory::CarFollowing) => Some(Panel::D),
            _ => None,
        }
    }

    fn dir_name(self) -> &'static str {
        match self {
            Panel::A => "panel_a",
            Panel::B => "panel_b",
            Panel::C => "panel_c",
            Panel::D => "panel_d",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseManifest {
    pub files: Vec<PhaseFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseFile {
    pub panel: Panel,
    pub demo_id: String,
    pub source: Source,
    pub category: TacticalCategory,
    /// Relative to the output directory.
    pub path: PathBuf,
    pub points: usize,
}

/// Writes one `(t_gap, inv_ttc)` CSV per series into per-panel directories.
///
/// The `marker` column is `initial` on the first sample, `lane_change` on
/// the lane-change sample and empty otherwise. Series outside the four
/// panels are skipped.
pub fn emit_phase_data(series: &[PhaseSeries], out_dir: &Path) -> Result<PhaseManifest> {
    let mut manifest = PhaseManifest::default();
    for s in series {
        let Some(panel) = Panel::of(s.source, s.category) else {
            continue;
        };
        let source = match s.source {
            Source::Human => "human",
            Source::Model => "model",
        };
        let rel = PathBuf::from(panel.dir_name()).join(format!("{}_{source}.csv", s.demo_id));
        let path = out_dir.join(&rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["frame", "t_gap", "inv_ttc", "marker"])?;
        for (i, p) in s.samples.iter().enumerate() {
            let marker = if s.lane_change_frame == Some(p.frame) {
                "lane_change"
            } else if i == 0 {
                "initial"
            } else {
                ""
            };
            w.write_record([
                p.frame.to_string(),
                p.t_gap.to_string(),
                p.inv_ttc.to_string(),
                marker.into(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        manifest.files.push(PhaseFile {
            panel,
            demo_id: s.demo_id.clone(),
            source: s.source,
            category: s.category,
            path: rel,
            points: s.samples.len(),
        });
    }
    Ok(manifest)
}
