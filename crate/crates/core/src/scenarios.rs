//! Extraction of single left lane changes and their segmentation into
//! horizon-length training windows.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Action, KinematicState};
use crate::error::{Error, Result};
use crate::reward::{FeatureConstants, NeighborFutures, SceneContext};
use crate::trajdata::{Recording, RoadLayout, Track};

/// One ego lane change with everything needed to train and replay it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub demo_id: String,
    pub recording_id: u32,
    pub ego: Track,
    /// Same-roadway tracks clipped to the ego's frame span.
    pub neighbors: Vec<Track>,
    pub layout: RoadLayout,
    pub desired_velocity: f64,
    pub dt: f64,
}

pub fn demo_id(recording_id: u32, track_id: u32) -> String {
    format!("{recording_id:02}-{track_id:05}")
}

impl Demonstration {
    pub fn first_frame(&self) -> i64 {
        self.ego.first_frame()
    }

    pub fn last_frame(&self) -> i64 {
        self.ego.last_frame()
    }

    pub fn num_frames(&self) -> usize {
        self.ego.frames.len()
    }

    pub fn neighbor_futures(&self) -> NeighborFutures {
        NeighborFutures::from_tracks(&self.neighbors, self.first_frame(), self.last_frame())
    }

    pub fn scene<'a>(
        &'a self,
        futures: &'a NeighborFutures,
        constants: FeatureConstants,
    ) -> SceneContext<'a> {
        SceneContext {
            layout: &self.layout,
            neighbors: futures,
            desired_velocity: self.desired_velocity,
            constants,
        }
    }

    pub fn initial_state(&self) -> KinematicState {
        let f = &self.ego.frames[0];
        KinematicState {
            x: f.x,
            y: f.y,
            vx: f.vx,
            vy: f.vy,
        }
    }

    pub fn manifest_entry(&self) -> ManifestEntry {
        ManifestEntry {
            demo_id: self.demo_id.clone(),
            recording_id: self.recording_id,
            ego_track_id: self.ego.track_id,
            first_frame: self.first_frame(),
            last_frame: self.last_frame(),
            desired_velocity: self.desired_velocity,
        }
    }

    /// Checks the extraction contract: exactly one leftward lane change, the
    /// desired velocity equals the peak speed and neighbors stay in span.
    pub fn check_invariants(&self) -> Result<()> {
        let bad = |reason: String| Error::UnsuitableDemo {
            demo_id: self.demo_id.clone(),
            reason,
        };
        self.ego.check_invariants()?;
        if self.ego.frames.is_empty() {
            return Err(bad("empty ego track".into()));
        }
        match lane_transitions(&self.ego) {
            (1, 0) => {}
            (left, right) => {
                return Err(bad(format!(
                    "expected one leftward lane change, found {left} leftward and {right} rightward"
                )))
            }
        }
        let peak = peak_speed(&self.ego);
        if peak != self.desired_velocity {
            return Err(bad(format!(
                "desired velocity {} differs from peak speed {peak}",
                self.desired_velocity
            )));
        }
        let (first, last) = (self.first_frame(), self.last_frame());
        if self
            .neighbors
            .iter()
            .any(|n| n.first_frame() < first || n.last_frame() > last)
        {
            return Err(bad("neighbor slice exceeds ego span".into()));
        }
        Ok(())
    }
}

/// Counts (leftward, rightward) lane-id transitions of a canonical track.
pub fn lane_transitions(track: &Track) -> (usize, usize) {
    let mut left = 0;
    let mut right = 0;
    for w in track.frames.windows(2) {
        match w[1].lane_id.cmp(&w[0].lane_id) {
            std::cmp::Ordering::Greater => left += 1,
            std::cmp::Ordering::Less => right += 1,
            std::cmp::Ordering::Equal => {}
        }
    }
    (left, right)
}

pub fn peak_speed(track: &Track) -> f64 {
    track
        .frames
        .iter()
        .map(|f| f.vx)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Persisted summary of one demonstration, enough to re-select it later.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub demo_id: String,
    pub recording_id: u32,
    pub ego_track_id: u32,
    pub first_frame: i64,
    pub last_frame: i64,
    pub desired_velocity: f64,
}

/// All single left lane changes of a recording, sorted by ego track id.
pub fn extract_left_lane_changes(recording: &Recording) -> Result<Vec<Demonstration>> {
    let meta = &recording.meta;
    if meta.has_merge_lane {
        return Err(Error::RecordingRejected {
            recording_id: meta.recording_id,
            reason: "recording contains a merge lane".into(),
        });
    }
    let canonical = recording.canonical()?;
    let mut tracks: Vec<&Track> = canonical.tracks.iter().collect();
    tracks.sort_by_key(|t| t.track_id);

    let mut demos = Vec::new();
    for ego in &tracks {
        if ego.num_lane_changes != 1 || ego.frames.is_empty() || lane_transitions(ego) != (1, 0) {
            continue;
        }
        let (first, last) = (ego.first_frame(), ego.last_frame());
        let neighbors = tracks
            .iter()
            .filter(|t| t.track_id != ego.track_id && t.direction == ego.direction)
            .filter_map(|t| t.clipped(first, last))
            .collect();
        let demo = Demonstration {
            demo_id: demo_id(meta.recording_id, ego.track_id),
            recording_id: meta.recording_id,
            ego: (*ego).clone(),
            neighbors,
            layout: meta.layout(ego.direction)?,
            desired_velocity: peak_speed(ego),
            dt: meta.dt(),
        };
        demo.check_invariants()?;
        demos.push(demo);
    }
    Ok(demos)
}

/// One horizon-length training window under velocity control.
///
/// State `k` of the window (1-based) is the recorded frame `start_frame + k`;
/// `state0` is the position one step before the window's first frame,
/// back-projected along that frame's velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub index: usize,
    pub start_frame: i64,
    pub state0: KinematicState,
    pub actions: Vec<Action>,
    pub states: Vec<KinematicState>,
}

/// Consecutive non-overlapping windows of `n` frames; a trailing remainder
/// shorter than `n` is dropped.
pub fn segment(demo: &Demonstration, n: usize) -> Result<Vec<Segment>> {
    if n < 2 {
        return Err(Error::Contract(format!(
            "segment length must be at least 2, got {n}"
        )));
    }
    let frames = &demo.ego.frames;
    if frames.len() < n {
        return Err(Error::UnsuitableDemo {
            demo_id: demo.demo_id.clone(),
            reason: format!("{} frames, horizon needs {n}", frames.len()),
        });
    }
    let dt = demo.dt;
    Ok(frames
        .chunks_exact(n)
        .enumerate()
        .map(|(index, chunk)| {
            let f0 = &chunk[0];
            Segment {
                index,
                start_frame: f0.frame - 1,
                state0: KinematicState {
                    x: f0.x - dt * f0.vx,
                    y: f0.y - dt * f0.vy,
                    vx: f0.vx,
                    vy: f0.vy,
                },
                actions: chunk.iter().map(|f| [f.vx, f.vy]).collect(),
                states: chunk
                    .iter()
                    .map(|f| KinematicState {
                        x: f.x,
                        y: f.y,
                        vx: f.vx,
                        vy: f.vy,
                    })
                    .collect(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajdata::{build_layout, CoordinateFrame, DrivingDirection, TrackFrame};

    fn straight_demo(num_frames: usize) -> Demonstration {
        let frames = (0..num_frames)
            .map(|i| TrackFrame {
                frame: 100 + i as i64,
                x: 30.0 * 0.04 * i as f64,
                y: 1.875,
                vx: 30.0,
                vy: 0.0,
                ax: 0.0,
                ay: 0.0,
                lane_id: 1,
                preceding_id: None,
            })
            .collect();
        Demonstration {
            demo_id: demo_id(1, 1),
            recording_id: 1,
            ego: Track {
                track_id: 1,
                vehicle_length: 4.5,
                vehicle_width: 1.9,
                direction: DrivingDirection::Lower,
                num_lane_changes: 0,
                coordinates: CoordinateFrame::Canonical,
                frames,
            },
            neighbors: vec![],
            layout: build_layout(&[0.0, 3.75, 7.5]).unwrap(),
            desired_velocity: 30.0,
            dt: 0.04,
        }
    }

    #[test]
    fn remainder_is_dropped() {
        let segs = segment(&straight_demo(12), 5).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[1].states.last().unwrap().x, 30.0 * 0.04 * 9.0);
    }

    #[test]
    fn exact_fit_and_average_track() {
        assert_eq!(segment(&straight_demo(5), 5).unwrap().len(), 1);
        assert_eq!(segment(&straight_demo(359), 5).unwrap().len(), 71);
    }

    #[test]
    fn short_demo_is_unsuitable() {
        assert!(matches!(
            segment(&straight_demo(4), 5),
            Err(Error::UnsuitableDemo { .. })
        ));
        assert!(matches!(
            segment(&straight_demo(10), 1),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn back_projection_reproduces_first_frame() {
        let demo = straight_demo(10);
        let s = &segment(&demo, 5).unwrap()[1];
        assert_eq!(s.start_frame, 104);
        let x1 = s.state0.x + demo.dt * s.actions[0][0];
        assert!((x1 - demo.ego.frames[5].x).abs() < 1e-12);
    }
}
