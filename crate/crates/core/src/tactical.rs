//! Tactical classification of trajectories and the per-category table.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rollout::AgentRollout;
use crate::trajdata::{RoadLayout, Track};

/// Ego center positions per frame plus the ego's footprint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub first_frame: i64,
    pub positions: Vec<[f64; 2]>,
    pub velocities: Vec<[f64; 2]>,
    pub length: f64,
    pub width: f64,
}

impl Trajectory {
    pub fn from_track(track: &Track) -> Self {
        Self {
            first_frame: track.first_frame(),
            positions: track.frames.iter().map(|f| [f.x, f.y]).collect(),
            velocities: track.frames.iter().map(|f| [f.vx, f.vy]).collect(),
            length: track.vehicle_length,
            width: track.vehicle_width,
        }
    }

    /// The agent's trajectory with the footprint of the demonstrating vehicle.
    pub fn from_rollout(rollout: &AgentRollout, ego: &Track) -> Self {
        Self {
            first_frame: rollout.first_frame,
            positions: rollout.states.iter().map(|s| [s.x, s.y]).collect(),
            velocities: rollout.states.iter().map(|s| [s.vx, s.vy]).collect(),
            length: ego.vehicle_length,
            width: ego.vehicle_width,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn frame(&self, i: usize) -> i64 {
        self.first_frame + i as i64
    }

    fn frames(&self) -> impl Iterator<Item = (i64, [f64; 2])> + '_ {
        self.positions
            .iter()
            .enumerate()
            .map(|(i, p)| (self.frame(i), *p))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TacticalCategory {
    LaneChange,
    Collision,
    CarFollowing,
    OffRoad,
}

impl TacticalCategory {
    /// Table order.
    pub const ALL: [TacticalCategory; 4] = [
        TacticalCategory::LaneChange,
        TacticalCategory::Collision,
        TacticalCategory::CarFollowing,
        TacticalCategory::OffRoad,
    ];

    /// Behaviors that also occur in the human data.
    pub fn is_desirable(self) -> bool {
        matches!(
            self,
            TacticalCategory::LaneChange | TacticalCategory::CarFollowing
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            TacticalCategory::LaneChange => "lane_change",
            TacticalCategory::Collision => "collision",
            TacticalCategory::CarFollowing => "car_following",
            TacticalCategory::OffRoad => "off_road",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TacticalLabel {
    pub category: TacticalCategory,
    /// Frame of the deciding event; `None` only for car following.
    pub event_frame: Option<i64>,
}

/// Strict overlap of two axis-aligned rectangles given center offsets and
/// summed half extents. Touching edges do not overlap.
fn overlaps(dx: f64, dy: f64, half_len: f64, half_wid: f64) -> bool {
    dx.abs() < half_len && dy.abs() < half_wid
}

/// First frame at which the ego footprint overlaps a neighbor's.
pub fn detect_collision(traj: &Trajectory, neighbors: &[Track]) -> Option<i64> {
    traj.frames().find_map(|(frame, p)| {
        neighbors
            .iter()
            .filter_map(|n| n.at(frame).map(|f| (n, f)))
            .any(|(n, f)| {
                overlaps(
                    p[0] - f.x,
                    p[1] - f.y,
                    0.5 * (traj.length + n.vehicle_length),
                    0.5 * (traj.width + n.vehicle_width),
                )
            })
            .then_some(frame)
    })
}

/// First frame with the ego center outside the road edges.
pub fn detect_offroad(traj: &Trajectory, layout: &RoadLayout) -> Option<i64> {
    traj.frames()
        .find(|(_, p)| !layout.is_on_road(p[1]))
        .map(|(frame, _)| frame)
}

/// First frame on the far side of a lane divider.
pub fn detect_lane_change(traj: &Trajectory, layout: &RoadLayout) -> Option<i64> {
    let mut frames = traj.frames();
    let (_, p0) = frames.next()?;
    let side0 = layout.divider_side(p0[1]);
    frames
        .find(|(_, p)| layout.divider_side(p[1]) != side0)
        .map(|(frame, _)| frame)
}

pub fn classify(traj: &Trajectory, neighbors: &[Track], layout: &RoadLayout) -> TacticalLabel {
    let label = |category, event_frame| TacticalLabel {
        category,
        event_frame,
    };
    if let Some(f) = detect_collision(traj, neighbors) {
        label(TacticalCategory::Collision, Some(f))
    } else if let Some(f) = detect_offroad(traj, layout) {
        label(TacticalCategory::OffRoad, Some(f))
    } else if let Some(f) = detect_lane_change(traj, layout) {
        label(TacticalCategory::LaneChange, Some(f))
    } else {
        label(TacticalCategory::CarFollowing, None)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TacticalRow {
    pub category: TacticalCategory,
    pub model_count: usize,
    pub model_percent: f64,
    pub human_count: usize,
    pub human_percent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TacticalTable {
    pub rows: Vec<TacticalRow>,
    pub model_total: usize,
    pub human_total: usize,
    pub model_desirable_percent: f64,
    pub human_desirable_percent: f64,
}

fn percent(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

/// Counts and shares per category. Both maps must hold the same demo ids.
pub fn tabulate(
    labels: &BTreeMap<String, TacticalLabel>,
    human_labels: &BTreeMap<String, TacticalLabel>,
) -> Result<TacticalTable> {
    if labels.is_empty() {
        return Err(Error::Contract("no model labels to tabulate".into()));
    }
    let model_ids: BTreeSet<&String> = labels.keys().collect();
    let human_ids: BTreeSet<&String> = human_labels.keys().collect();
    let orphans: Vec<&str> = model_ids
        .symmetric_difference(&human_ids)
        .map(|s| s.as_str())
        .collect();
    if !orphans.is_empty() {
        return Err(Error::Contract(format!(
            "model and human labels differ in demo ids: {}",
            orphans.join(", ")
        )));
    }
    let count =
        |m: &BTreeMap<String, TacticalLabel>, c| m.values().filter(|l| l.category == c).count();
    let desirable = |m: &BTreeMap<String, TacticalLabel>| {
        m.values().filter(|l| l.category.is_desirable()).count()
    };
    let (mt, ht) = (labels.len(), human_labels.len());
    Ok(TacticalTable {
        rows: TacticalCategory::ALL
            .iter()
            .map(|&c| TacticalRow {
                category: c,
                model_count: count(labels, c),
                model_percent: percent(count(labels, c), mt),
                human_count: count(human_labels, c),
                human_percent: percent(count(human_labels, c), ht),
            })
            .collect(),
        model_total: mt,
        human_total: ht,
        model_desirable_percent: percent(desirable(labels), mt),
        human_desirable_percent: percent(desirable(human_labels), ht),
    })
}

impl TacticalTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "category",
            "model_count",
            "model_percent",
            "human_count",
            "human_percent",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.category.name().to_string(),
                r.model_count.to_string(),
                format!("{:.1}", r.model_percent),
                r.human_count.to_string(),
                format!("{:.1}", r.human_percent),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajdata::{build_layout, CoordinateFrame, DrivingDirection, TrackFrame};

    fn traj(ys: &[f64]) -> Trajectory {
        Trajectory {
            first_frame: 0,
            positions: ys
                .iter()
                .enumerate()
                .map(|(i, &y)| [10.0 * i as f64, y])
                .collect(),
            velocities: vec![[25.0, 0.0]; ys.len()],
            length: 4.0,
            width: 2.0,
        }
    }

    fn parked(x: f64, y: f64, frames: std::ops::Range<i64>) -> Track {
        Track {
            track_id: 9,
            vehicle_length: 4.0,
            vehicle_width: 2.0,
            direction: DrivingDirection::Lower,
            num_lane_changes: 0,
            coordinates: CoordinateFrame::Canonical,
            frames: frames
                .map(|frame| TrackFrame {
                    frame,
                    x,
                    y,
                    vx: 0.0,
                    vy: 0.0,
                    ax: 0.0,
                    ay: 0.0,
                    lane_id: 1,
                    preceding_id: None,
                })
                .collect(),
        }
    }

    #[test]
    fn coincident_centers_collide() {
        let t = traj(&[1.0; 5]);
        assert_eq!(detect_collision(&t, &[parked(30.0, 1.0, 0..5)]), Some(3));
    }

    #[test]
    fn lateral_clearance_is_not_a_collision() {
        let t = traj(&[1.0; 5]);
        assert_eq!(detect_collision(&t, &[parked(30.0, 3.01, 0..5)]), None);
        assert_eq!(detect_collision(&t, &[parked(30.0, 3.0, 0..5)]), None);
    }

    #[test]
    fn divider_crossing_frame() {
        let layout = build_layout(&[0.0, 4.0, 8.0]).unwrap();
        let mut ys: Vec<f64> = (0..30).map(|i| 2.0 + 0.1 * i as f64).collect();
        ys[20] = 3.99;
        ys[21] = 4.05;
        assert_eq!(detect_lane_change(&traj(&ys), &layout), Some(21));
        assert_eq!(
            detect_lane_change(&traj(&[2.0, 3.9, 0.1, 2.0]), &layout),
            None
        );
    }

    #[test]
    fn offroad_threshold() {
        let layout = build_layout(&[0.0, 4.0, 8.0]).unwrap();
        let mut ys = vec![6.0; 20];
        ys[10] = 10.001;
        assert_eq!(detect_offroad(&traj(&ys), &layout), Some(10));
    }

    #[test]
    fn hierarchy() {
        let layout = build_layout(&[0.0, 4.0, 8.0]).unwrap();
        let t = traj(&[2.0, 3.0, 5.0, 6.0, 10.5, 10.5]);
        assert_eq!(
            classify(&t, &[], &layout).category,
            TacticalCategory::OffRoad
        );
        let l = classify(&t, &[parked(40.0, 10.5, 0..6)], &layout);
        assert_eq!(
            (l.category, l.event_frame),
            (TacticalCategory::Collision, Some(4))
        );
        let l = classify(&traj(&[2.0; 4]), &[], &layout);
        assert_eq!(
            (l.category, l.event_frame),
            (TacticalCategory::CarFollowing, None)
        );
    }

    #[test]
    fn table_shares_and_errors() {
        let mk = |c| TacticalLabel {
            category: c,
            event_frame: None,
        };
        let model: BTreeMap<String, TacticalLabel> = TacticalCategory::ALL
            .iter()
            .enumerate()
            .map(|(i, &c)| (format!("d{i}"), mk(c)))
            .collect();
        let human: BTreeMap<String, TacticalLabel> = model
            .keys()
            .map(|k| (k.clone(), mk(TacticalCategory::LaneChange)))
            .collect();
        let t = tabulate(&model, &human).unwrap();
        assert!(t.rows.iter().all(|r| r.model_percent == 25.0));
        assert_eq!(t.model_desirable_percent, 50.0);
        assert_eq!(t.human_desirable_percent, 100.0);
        assert!(tabulate(&BTreeMap::new(), &human).is_err());
        let mut extra = human.clone();
        extra.insert("orphan".into(), mk(TacticalCategory::LaneChange));
        let err = tabulate(&model, &extra).unwrap_err().to_string();
        assert!(err.contains("orphan"));
    }
}
