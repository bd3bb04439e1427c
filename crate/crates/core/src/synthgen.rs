//! Synthetic recordings with known ground truth.
//!
//! Two generators are provided. Kinematic fixtures script every vehicle with
//! piecewise-linear speed profiles and smoothstep lane changes. Known-weight
//! demonstrations replay an agent with given reward weights among scripted
//! neighbors and convert its trajectory into velocity-action form.
//!
//! All synthetic traffic uses the lower roadway, so canonical and raw
//! coordinates differ only by the sign of y.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{Cholesky, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Action, Dynamics, KinematicState};
use crate::error::{Error, Result};
use crate::reward::{
    flatten_actions, trajectory_feature_values, trajectory_features, unflatten_actions,
    FeatureConstants, RewardWeights, SceneContext,
};
use crate::rollout::{rollout, AgentConfig};
use crate::scenarios::{demo_id, peak_speed, Demonstration};
use crate::trajdata::{
    decanonicalize, write_recording, CoordinateFrame, DrivingDirection, Recording, RecordingFiles,
    RecordingMeta, RoadLayout, Track, TrackFrame,
};

/// Raw y of the first lower-roadway marking.
const LOWER_ROADWAY_OFFSET: f64 = 20.0;
const MEDIAN_WIDTH: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedPoint {
    /// Seconds since the track's first frame.
    pub t: f64,
    pub v: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeSpec {
    /// Start of the lateral motion, seconds since the track's first frame.
    pub t: f64,
    pub duration: f64,
    pub to_lane: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackSpec {
    pub id: u32,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_width")]
    pub width: f64,
    pub first_frame: i64,
    pub num_frames: usize,
    pub x0: f64,
    /// Canonical lane at the first frame, rightmost = 1.
    pub lane: u32,
    /// Speed knots, linearly interpolated and held constant outside.
    pub speed: Vec<SpeedPoint>,
    #[serde(default)]
    pub lane_changes: Vec<LaneChangeSpec>,
}

fn default_length() -> f64 {
    4.5
}

fn default_width() -> f64 {
    1.9
}

fn default_frame_rate() -> f64 {
    25.0
}

fn default_lanes() -> usize {
    3
}

fn default_lane_width() -> f64 {
    3.75
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub recording_id: u32,
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    #[serde(default = "default_lanes")]
    pub num_lanes: usize,
    #[serde(default = "default_lane_width")]
    pub lane_width: f64,
    #[serde(default)]
    pub has_merge_lane: bool,
    pub tracks: Vec<TrackSpec>,
}

impl FixtureSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn meta(&self) -> RecordingMeta {
        let w = self.lane_width;
        let n = self.num_lanes;
        let upper_start = LOWER_ROADWAY_OFFSET - MEDIAN_WIDTH - n as f64 * w;
        RecordingMeta {
            recording_id: self.recording_id,
            frame_rate: self.frame_rate,
            upper_lane_markings: (0..=n).map(|k| upper_start + k as f64 * w).collect(),
            lower_lane_markings: (0..=n)
                .map(|k| LOWER_ROADWAY_OFFSET + k as f64 * w)
                .collect(),
            speed_limit: None,
            has_merge_lane: self.has_merge_lane,
        }
    }

    pub fn layout(&self) -> Result<RoadLayout> {
        self.meta().layout(DrivingDirection::Lower)
    }

    fn validate(&self) -> Result<()> {
        let spec_err = |m: String| Err(Error::Spec(m));
        if self.num_lanes < 2 {
            return spec_err(format!("at least 2 lanes needed, got {}", self.num_lanes));
        }
        if !(self.lane_width > 0.0 && self.frame_rate > 0.0) {
            return spec_err("lane width and frame rate must be positive".into());
        }
        let mut ids = BTreeSet::new();
        for t in &self.tracks {
            if !ids.insert(t.id) {
                return spec_err(format!("track id {} used more than once", t.id));
            }
            if t.id == 0 {
                return spec_err("track id 0 is reserved".into());
            }
            let lane_ok = |l: u32| l >= 1 && l as usize <= self.num_lanes;
            if !lane_ok(t.lane) || t.lane_changes.iter().any(|c| !lane_ok(c.to_lane)) {
                return spec_err(format!(
                    "track {}: lane outside 1..={}",
                    t.id, self.num_lanes
                ));
            }
            if t.num_frames == 0 || t.speed.is_empty() {
                return spec_err(format!(
                    "track {}: needs frames and at least one speed knot",
                    t.id
                ));
            }
            if t.speed.windows(2).any(|w| !(w[1].t > w[0].t)) {
                return spec_err(format!(
                    "track {}: speed knots must have increasing times",
                    t.id
                ));
            }
            if t.lane_changes.iter().any(|c| !(c.duration > 0.0))
                || t.lane_changes
                    .windows(2)
                    .any(|w| w[1].t < w[0].t + w[0].duration)
            {
                return spec_err(format!(
                    "track {}: lane changes must be ordered and non-overlapping",
                    t.id
                ));
            }
            if !(t.length > 0.0 && t.width > 0.0) {
                return spec_err(format!("track {}: dimensions must be positive", t.id));
            }
        }
        Ok(())
    }
}

/// Speed and distance travelled at time `t` under piecewise-linear speed.
fn speed_profile(knots: &[SpeedPoint], t: f64) -> (f64, f64, f64) {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if t <= first.t {
        return (first.v, first.v * t, 0.0);
    }
    let mut dist = first.v * first.t.max(0.0);
    let mut t0 = first.t.max(0.0);
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let slope = (b.v - a.v) / (b.t - a.t);
        let v_at = |s: f64| a.v + slope * (s - a.t);
        let end = t.min(b.t);
        if end > t0 {
            dist += 0.5 * (v_at(t0) + v_at(end)) * (end - t0);
            t0 = end;
        }
        if t <= b.t {
            return (v_at(t), dist, slope);
        }
    }
    (last.v, dist + last.v * (t - t0), 0.0)
}

/// Smoothstep `3s^2 - 2s^3` and its first two derivatives.
fn smoothstep(s: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if s >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        (s * s * (3.0 - 2.0 * s), 6.0 * s * (1.0 - s), 6.0 - 12.0 * s)
    }
}

fn scripted_frames(spec: &TrackSpec, layout: &RoadLayout, dt: f64) -> Vec<TrackFrame> {
    let center = |lane: u32| layout.lane_centers[lane as usize - 1];
    (0..spec.num_frames)
        .map(|i| {
            let t = i as f64 * dt;
            let (v, dist, a) = speed_profile(&spec.speed, t);
            let mut y = center(spec.lane);
            let (mut vy, mut ay) = (0.0, 0.0);
            let mut from = spec.lane;
            for c in &spec.lane_changes {
                let delta = center(c.to_lane) - center(from);
                let (s, ds, dds) = smoothstep((t - c.t) / c.duration);
                y += delta * s;
                vy += delta * ds / c.duration;
                ay += delta * dds / (c.duration * c.duration);
                from = c.to_lane;
            }
            TrackFrame {
                frame: spec.first_frame + i as i64,
                x: spec.x0 + dist,
                y,
                vx: v,
                vy,
                ax: a,
                ay,
                lane_id: 0,
                preceding_id: None,
            }
        })
        .collect()
}

/// Fills lane ids from geometry, counts lane changes and links each frame to
/// the nearest vehicle ahead in the same lane.
fn annotate(tracks: &mut [Track], layout: &RoadLayout) {
    for t in tracks.iter_mut() {
        for f in &mut t.frames {
            f.lane_id = layout.lane_of(f.y).map_or(0, |l| l as i32);
        }
        t.num_lane_changes = t
            .frames
            .windows(2)
            .filter(|w| w[0].lane_id != w[1].lane_id)
            .count() as u32;
    }
    let snapshot: Vec<Track> = tracks.to_vec();
    for t in tracks.iter_mut() {
        for f in &mut t.frames {
            f.preceding_id = snapshot
                .iter()
                .filter(|o| o.track_id != t.track_id)
                .filter_map(|o| o.at(f.frame).map(|g| (o.track_id, g)))
                .filter(|(_, g)| g.lane_id == f.lane_id && f.lane_id != 0 && g.x > f.x)
                .min_by(|a, b| a.1.x.total_cmp(&b.1.x))
                .map(|(id, _)| id);
        }
    }
}

fn canonical_tracks(spec: &FixtureSpec) -> Result<Vec<Track>> {
    spec.validate()?;
    let layout = spec.layout()?;
    let dt = 1.0 / spec.frame_rate;
    let mut tracks: Vec<Track> = spec
        .tracks
        .iter()
        .map(|t| Track {
            track_id: t.id,
            vehicle_length: t.length,
            vehicle_width: t.width,
            direction: DrivingDirection::Lower,
            num_lane_changes: 0,
            coordinates: CoordinateFrame::Canonical,
            frames: scripted_frames(t, &layout, dt),
        })
        .collect();
    annotate(&mut tracks, &layout);
    Ok(tracks)
}

fn to_raw(meta: RecordingMeta, tracks: &[Track]) -> Result<Recording> {
    let tracks = tracks
        .iter()
        .map(|t| decanonicalize(t, &meta))
        .collect::<Result<Vec<_>>>()?;
    Ok(Recording { meta, tracks })
}

/// Raw recording that realizes `spec` exactly.
pub fn generate_kinematic_fixture(spec: &FixtureSpec) -> Result<Recording> {
    to_raw(spec.meta(), &canonical_tracks(spec)?)
}

/// Demonstration of scripted track `ego_id` among the other tracks of
/// `spec`, in velocity-action form: each frame's velocity is the finite
/// difference from the previous position. The desired velocity is the peak
/// of those speeds. No lane-change requirement is imposed.
pub fn scripted_demo(spec: &FixtureSpec, ego_id: u32) -> Result<Demonstration> {
    let layout = spec.layout()?;
    let dt = 1.0 / spec.frame_rate;
    let mut tracks = canonical_tracks(spec)?;
    let pos = tracks
        .iter()
        .position(|t| t.track_id == ego_id)
        .ok_or_else(|| Error::Spec(format!("no track with id {ego_id}")))?;
    let mut ego = tracks.remove(pos);
    if ego.frames.len() < 2 {
        return Err(Error::Spec(format!(
            "track {ego_id} needs at least 2 frames"
        )));
    }
    for i in (1..ego.frames.len()).rev() {
        let (a, b) = (ego.frames[i - 1], ego.frames[i]);
        ego.frames[i].vx = (b.x - a.x) / dt;
        ego.frames[i].vy = (b.y - a.y) / dt;
    }
    ego.frames[0].vx = ego.frames[1].vx;
    ego.frames[0].vy = ego.frames[1].vy;
    let (first, last) = (ego.first_frame(), ego.last_frame());
    Ok(Demonstration {
        demo_id: demo_id(spec.recording_id, ego_id),
        recording_id: spec.recording_id,
        desired_velocity: peak_speed(&ego),
        neighbors: tracks
            .iter()
            .filter_map(|t| t.clipped(first, last))
            .collect(),
        ego,
        layout,
        dt,
    })
}

/// The ego vehicle of a known-weight scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgoSpec {
    pub id: u32,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_width")]
    pub width: f64,
    pub first_frame: i64,
    pub num_frames: usize,
    pub x0: f64,
    pub lane: u32,
    /// Lateral offset from the lane center at the first frame.
    #[serde(default)]
    pub y_offset: f64,
    pub v0: f64,
    pub desired_velocity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    /// Independent Gaussian noise on every position.
    PositionJitter {
        sigma: f64,
    },
    /// Per training window, velocity actions drawn from the Gaussian whose
    /// inverse covariance is the negated reward Hessian at `center`; each
    /// window starts from the noise-free position.
    Boltzmann {
        #[serde(default)]
        center: WindowCenter,
    },
}

/// Mean of the per-window action distribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowCenter {
    /// The unconstrained maximizer of the window reward.
    #[default]
    Mode,
    /// The noise-free actions of the bounded acceleration agent.
    Nominal,
}

/// Scripted neighbors plus an ego driven by known weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScenario {
    pub neighbors: FixtureSpec,
    pub ego: EgoSpec,
    pub noise: NoiseModel,
    /// Window length used by [`NoiseModel::Boltzmann`].
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    pub seed: u64,
}

fn default_horizon() -> usize {
    5
}

/// Maximizer of the velocity-control window reward, by Newton's method from
/// `init`. Fails when the reward is not locally concave along the way.
fn window_mode(
    weights: &RewardWeights,
    state0: &KinematicState,
    init: &[Action],
    scene: &SceneContext<'_>,
    start_frame: i64,
    dynamics: Dynamics,
) -> Result<(DVector<f64>, Cholesky<f64, nalgebra::Dyn>)> {
    let value = |u: &DVector<f64>| -> Result<f64> {
        let v =
            trajectory_feature_values(state0, &unflatten_actions(u), scene, start_frame, dynamics)?;
        Ok(weights.to_array().iter().zip(v).map(|(w, p)| w * p).sum())
    };
    let mut u = flatten_actions(init);
    let mut r = value(&u)?;
    for _ in 0..100 {
        let tf = trajectory_features(state0, &unflatten_actions(&u), scene, start_frame, dynamics)?;
        let chol =
            Cholesky::new(-tf.hessian(weights)).ok_or(Error::IndefiniteHessian { segment: 0 })?;
        let step = chol.solve(&tf.gradient(weights));
        if step.amax() < 1e-10 {
            return Ok((u, chol));
        }
        let mut alpha = 1.0;
        loop {
            let trial = &u + &step * alpha;
            let rt = value(&trial)?;
            if rt >= r {
                u = trial;
                r = rt;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                return Ok((u, chol));
            }
        }
    }
    let tf = trajectory_features(state0, &unflatten_actions(&u), scene, start_frame, dynamics)?;
    let chol =
        Cholesky::new(-tf.hessian(weights)).ok_or(Error::IndefiniteHessian { segment: 0 })?;
    Ok((u, chol))
}

fn ego_placeholder(ego: &EgoSpec, layout: &RoadLayout, dt: f64) -> Track {
    let y = layout.lane_centers[ego.lane as usize - 1] + ego.y_offset;
    Track {
        track_id: ego.id,
        vehicle_length: ego.length,
        vehicle_width: ego.width,
        direction: DrivingDirection::Lower,
        num_lane_changes: 0,
        coordinates: CoordinateFrame::Canonical,
        frames: (0..ego.num_frames)
            .map(|i| TrackFrame {
                frame: ego.first_frame + i as i64,
                x: ego.x0 + ego.v0 * dt * i as f64,
                y,
                vx: ego.v0,
                vy: 0.0,
                ax: 0.0,
                ay: 0.0,
                lane_id: 0,
                preceding_id: None,
            })
            .collect(),
    }
}

/// Demonstration of an agent with `theta_star`, in velocity-action form.
///
/// Each recorded velocity is the one that carried the vehicle from the
/// previous frame, so positions and velocities are consistent under velocity
/// control. The demonstration keeps the generating desired velocity, which
/// can differ from the peak recorded speed once noise is added.
pub fn generate_demo(
    theta_star: &RewardWeights,
    constants: FeatureConstants,
    scenario: &SyntheticScenario,
    agent: &AgentConfig,
) -> Result<Demonstration> {
    if !theta_star.is_finite() {
        return Err(Error::Contract("generating weights must be finite".into()));
    }
    let ego = &scenario.ego;
    let spec = &scenario.neighbors;
    if spec.tracks.iter().any(|t| t.id == ego.id) {
        return Err(Error::Spec(format!(
            "ego id {} collides with a neighbor id",
            ego.id
        )));
    }
    if !(ego.lane >= 1 && ego.lane as usize <= spec.num_lanes) {
        return Err(Error::Spec(format!(
            "ego lane {} outside 1..={}",
            ego.lane, spec.num_lanes
        )));
    }
    if ego.num_frames < scenario.horizon {
        return Err(Error::Spec(format!(
            "ego needs at least {} frames, got {}",
            scenario.horizon, ego.num_frames
        )));
    }
    let layout = spec.layout()?;
    let dt = 1.0 / spec.frame_rate;
    let agent = AgentConfig { dt, ..*agent };
    let (first, last) = (ego.first_frame, ego.first_frame + ego.num_frames as i64 - 1);
    let neighbors: Vec<Track> = canonical_tracks(spec)?
        .iter()
        .filter_map(|t| t.clipped(first, last))
        .collect();
    let mut demo = Demonstration {
        demo_id: demo_id(spec.recording_id, ego.id),
        recording_id: spec.recording_id,
        ego: ego_placeholder(ego, &layout, dt),
        neighbors,
        layout,
        desired_velocity: ego.desired_velocity,
        dt,
    };
    let run = rollout(&demo, theta_star, constants, &agent)?;

    let mut velocities: Vec<[f64; 2]> = Vec::with_capacity(run.states.len());
    for (i, s) in run.states.iter().enumerate() {
        velocities.push(match i {
            0 => [s.vx, s.vy],
            _ => [run.states[i - 1].vx, run.states[i - 1].vy],
        });
    }
    let mut positions: Vec<[f64; 2]> = run.states.iter().map(|s| [s.x, s.y]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    match scenario.noise {
        NoiseModel::None => {}
        NoiseModel::PositionJitter { sigma } => {
            for p in &mut positions {
                p[0] += sigma * rng.sample::<f64, _>(StandardNormal);
                p[1] += sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
        NoiseModel::Boltzmann { center } => {
            let futures = demo.neighbor_futures();
            let scene = demo.scene(&futures, constants);
            let dynamics = Dynamics::VelocityControl { dt };
            let n = scenario.horizon;
            for w in 0..positions.len() / n {
                let f0 = w * n;
                let state0 = KinematicState {
                    x: positions[f0][0] - dt * velocities[f0][0],
                    y: positions[f0][1] - dt * velocities[f0][1],
                    vx: velocities[f0][0],
                    vy: velocities[f0][1],
                };
                let nominal: Vec<Action> = velocities[f0..f0 + n].to_vec();
                let start = first + f0 as i64 - 1;
                let (mean, chol) = match center {
                    WindowCenter::Nominal => {
                        let tf = trajectory_features(&state0, &nominal, &scene, start, dynamics)?;
                        let chol = Cholesky::new(-tf.hessian(theta_star))
                            .ok_or(Error::IndefiniteHessian { segment: w })?;
                        (flatten_actions(&nominal), chol)
                    }
                    WindowCenter::Mode => {
                        window_mode(theta_star, &state0, &nominal, &scene, start, dynamics)
                            .map_err(|e| match e {
                                Error::IndefiniteHessian { .. } => {
                                    Error::IndefiniteHessian { segment: w }
                                }
                                other => other,
                            })?
                    }
                };
                let z = DVector::from_fn(2 * n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let eps = chol
                    .l()
                    .transpose()
                    .solve_upper_triangular(&z)
                    .expect("Cholesky factor is invertible");
                let u = unflatten_actions(&(mean + eps));
                let (mut x, mut y) = (state0.x, state0.y);
                for (k, a) in u.iter().enumerate() {
                    x += dt * a[0];
                    y += dt * a[1];
                    positions[f0 + k] = [x, y];
                    velocities[f0 + k] = *a;
                }
            }
        }
    }

    let mut frames = Vec::with_capacity(positions.len());
    for (i, (p, v)) in positions.iter().zip(&velocities).enumerate() {
        let prev = if i == 0 { *v } else { velocities[i - 1] };
        frames.push(TrackFrame {
            frame: first + i as i64,
            x: p[0],
            y: p[1],
            vx: v[0],
            vy: v[1],
            ax: (v[0] - prev[0]) / dt,
            ay: (v[1] - prev[1]) / dt,
            lane_id: 0,
            preceding_id: None,
        });
    }
    demo.ego.frames = frames;
    let mut all = vec![demo.ego.clone()];
    all.extend(demo.neighbors.iter().cloned());
    annotate(&mut all, &demo.layout);
    demo.ego = all.remove(0);
    demo.neighbors = all;
    Ok(demo)
}

/// Raw recording holding the demonstration's ego and its neighbors. The
/// ego's recorded peak speed becomes the desired velocity on re-extraction.
pub fn demo_recording(demo: &Demonstration, spec: &FixtureSpec) -> Result<Recording> {
    let mut tracks = vec![demo.ego.clone()];
    tracks.extend(demo.neighbors.iter().cloned());
    tracks.sort_by_key(|t| t.track_id);
    to_raw(spec.meta(), &tracks)
}

/// Writes the three HighD files of `recording` into `dir`.
pub fn write_fixture(recording: &Recording, dir: &Path) -> Result<RecordingFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_recording(recording, dir)
}

/// Random weights with fixed signs and magnitudes drawn uniformly from the
/// given ranges, one per feature.
pub fn random_weights(
    rng: &mut impl Rng,
    signs: [f64; 4],
    ranges: [(f64, f64); 4],
) -> RewardWeights {
    let mut w = [0.0; 4];
    for i in 0..4 {
        let (lo, hi) = ranges[i];
        w[i] = signs[i] * rng.random_range(lo..=hi);
    }
    RewardWeights::from_array(w)
}

/// Peak speed of the generated ego, the desired velocity a recording-based
/// extraction would assign.
pub fn extracted_desired_velocity(demo: &Demonstration) -> f64 {
    peak_speed(&demo.ego)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajdata::canonicalize;

    fn one_track(lane_changes: Vec<LaneChangeSpec>) -> FixtureSpec {
        FixtureSpec {
            recording_id: 1,
            frame_rate: 25.0,
            num_lanes: 3,
            lane_width: 3.75,
            has_merge_lane: false,
            tracks: vec![TrackSpec {
                id: 1,
                length: 4.5,
                width: 1.9,
                first_frame: 0,
                num_frames: 250,
                x0: 10.0,
                lane: 1,
                speed: vec![
                    SpeedPoint { t: 0.0, v: 25.0 },
                    SpeedPoint { t: 4.0, v: 29.0 },
                ],
                lane_changes,
            }],
        }
    }

    #[test]
    fn speed_profile_integrates_exactly() {
        let knots = [
            SpeedPoint { t: 1.0, v: 10.0 },
            SpeedPoint { t: 3.0, v: 20.0 },
        ];
        let (v, d, a) = speed_profile(&knots, 2.0);
        assert_eq!((v, a), (15.0, 5.0));
        assert!((d - (10.0 + 12.5)).abs() < 1e-12);
        let (v, d, _) = speed_profile(&knots, 4.0);
        assert_eq!(v, 20.0);
        assert!((d - (10.0 + 30.0 + 20.0)).abs() < 1e-12);
    }

    #[test]
    fn lane_change_is_scripted() {
        let spec = one_track(vec![LaneChangeSpec {
            t: 3.0,
            duration: 2.0,
            to_lane: 2,
        }]);
        let rec = generate_kinematic_fixture(&spec).unwrap();
        let meta = &rec.meta;
        let t = canonicalize(&rec.tracks[0], meta).unwrap();
        assert_eq!(t.num_lane_changes, 1);
        let lc = t
            .frames
            .windows(2)
            .position(|w| w[1].lane_id != w[0].lane_id)
            .unwrap()
            + 1;
        assert_eq!(lc, 100);
        assert_eq!(t.frames[0].lane_id, 1);
        assert_eq!(t.frames[249].lane_id, 2);
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let mut spec = one_track(vec![]);
        spec.tracks.push(spec.tracks[0].clone());
        assert!(matches!(
            generate_kinematic_fixture(&spec),
            Err(Error::Spec(_))
        ));
    }
}
