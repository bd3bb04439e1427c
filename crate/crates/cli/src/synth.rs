//! Seeded synthetic corpus in the raw recording format.

use std::path::Path;

use dmval_core::synthgen::{
    generate_kinematic_fixture, write_fixture, FixtureSpec, LaneChangeSpec, SpeedPoint, TrackSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliResult;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Regular recordings; one extra recording with a merge lane is appended.
    pub recordings: u32,
    /// Left lane changers per recording.
    pub changers: usize,
    /// Vehicles keeping their lane per recording.
    pub followers: usize,
    /// Frames per track at 25 Hz.
    pub frames: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            recordings: 2,
            changers: 3,
            followers: 4,
            frames: 250,
            seed: 0,
        }
    }
}

fn recording_spec(
    rng: &mut ChaCha8Rng,
    recording_id: u32,
    cfg: &SynthConfig,
    merge: bool,
) -> FixtureSpec {
    let num_lanes = 3;
    let duration = cfg.frames as f64 / 25.0;
    let mut tracks = Vec::new();
    let mut id = 1;
    // Changers are spread out longitudinally so they never overlap.
    for k in 0..cfg.changers {
        let lane = rng.random_range(1..num_lanes as u32);
        let v0 = rng.random_range(22.0..30.0);
        tracks.push(TrackSpec {
            id,
            length: rng.random_range(4.2..5.0),
            width: 1.9,
            first_frame: 0,
            num_frames: cfg.frames,
            x0: k as f64 * 150.0,
            lane,
            speed: vec![
                SpeedPoint { t: 0.0, v: v0 },
                SpeedPoint {
                    t: duration,
                    v: v0 + rng.random_range(-1.0..1.0),
                },
            ],
            lane_changes: vec![LaneChangeSpec {
                t: rng.random_range(0.3..0.6) * duration,
                duration: rng.random_range(3.0..5.0),
                to_lane: lane + 1,
            }],
        });
        id += 1;
    }
    for k in 0..cfg.followers {
        let v = rng.random_range(20.0..32.0);
        tracks.push(TrackSpec {
            id,
            length: rng.random_range(4.2..12.0),
            width: 2.0,
            first_frame: 0,
            num_frames: cfg.frames,
            x0: k as f64 * 150.0 + rng.random_range(40.0..80.0),
            lane: (k % num_lanes) as u32 + 1,
            speed: vec![SpeedPoint { t: 0.0, v }],
            lane_changes: vec![],
        });
        id += 1;
    }
    FixtureSpec {
        recording_id,
        frame_rate: 25.0,
        num_lanes,
        lane_width: rng.random_range(3.5..3.9),
        has_merge_lane: merge,
        tracks,
    }
}

/// Writes `cfg.recordings + 1` recordings into `dir` and returns their ids.
pub fn write_corpus(cfg: &SynthConfig, dir: &Path) -> CliResult<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ids = Vec::new();
    for k in 0..=cfg.recordings {
        let id = k + 1;
        let spec = recording_spec(&mut rng, id, cfg, k == cfg.recordings);
        write_fixture(&generate_kinematic_fixture(&spec)?, dir)?;
        ids.push(id);
    }
    Ok(ids)
}
