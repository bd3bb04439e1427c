//! Four-feature linear reward: preferred velocity, lane keeping, road
//! boundaries and collision avoidance, with analytic derivatives of the summed
//! reward over a planning horizon with respect to the action sequence.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{Action, Dynamics, KinematicState};
use crate::error::{Error, Result};
use crate::trajdata::{RoadLayout, Track};

pub const NUM_FEATURES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Velocity,
    Lane,
    Bounds,
    Collision,
}

impl Feature {
    pub const ALL: [Feature; NUM_FEATURES] = [
        Feature::Velocity,
        Feature::Lane,
        Feature::Bounds,
        Feature::Collision,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Shape constants of the lane/bounds and collision Gaussians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConstants {
    /// 1/m^2
    pub c: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl Default for FeatureConstants {
    fn default() -> Self {
        Self {
            c: 0.14,
            sigma_x: 15.0,
            sigma_y: 1.4,
        }
    }
}

impl FeatureConstants {
    pub fn new(c: f64, sigma_x: f64, sigma_y: f64) -> Result<Self> {
        let k = Self {
            c,
            sigma_x,
            sigma_y,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.c, self.sigma_x, self.sigma_y]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
        {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "feature constants must be strictly positive: {self:?}"
            )))
        }
    }
}

/// Per-human feature weights. Unconstrained in sign.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub vel: f64,
    pub lane: f64,
    pub bounds: f64,
    pub collision: f64,
}

impl RewardWeights {
    pub const fn new(vel: f64, lane: f64, bounds: f64, collision: f64) -> Self {
        Self {
            vel,
            lane,
            bounds,
            collision,
        }
    }

    pub fn from_array(a: [f64; NUM_FEATURES]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; NUM_FEATURES] {
        [self.vel, self.lane, self.bounds, self.collision]
    }

    pub fn scaled(self, alpha: f64) -> Self {
        Self::from_array(self.to_array().map(|w| alpha * w))
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|w| w.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.to_array().iter().all(|&w| w == 0.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; NUM_FEATURES]);

impl FeatureVector {
    pub fn get(&self, f: Feature) -> f64 {
        self.0[f.index()]
    }
}

/// Dot product of weights and features.
pub fn reward(weights: &RewardWeights, phi: &FeatureVector) -> f64 {
    weights
        .to_array()
        .iter()
        .zip(phi.0.iter())
        .map(|(w, p)| w * p)
        .sum()
}

/// Positions of the other vehicles per frame over a contiguous frame span.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NeighborFutures {
    first_frame: i64,
    positions: Vec<Vec<[f64; 2]>>,
}

impl NeighborFutures {
    /// Frames `[first, last]`; a neighbor outside its recorded span is absent.
    pub fn from_tracks(tracks: &[Track], first: i64, last: i64) -> Self {
        let len = (last - first + 1).max(0) as usize;
        let mut positions = vec![Vec::new(); len];
        for t in tracks {
            for f in &t.frames {
                if f.frame >= first && f.frame <= last {
                    positions[(f.frame - first) as usize].push([f.x, f.y]);
                }
            }
        }
        Self {
            first_frame: first,
            positions,
        }
    }

    pub fn from_positions(first_frame: i64, positions: Vec<Vec<[f64; 2]>>) -> Self {
        Self {
            first_frame,
            positions,
        }
    }

    /// Empty road over `[first, last]`.
    pub fn empty(first: i64, last: i64) -> Self {
        Self::from_positions(first, vec![Vec::new(); (last - first + 1).max(0) as usize])
    }

    pub fn first_frame(&self) -> i64 {
        self.first_frame
    }

    pub fn last_frame(&self) -> i64 {
        self.first_frame + self.positions.len() as i64 - 1
    }

    pub fn at(&self, frame: i64) -> Result<&[[f64; 2]]> {
        if frame < self.first_frame || frame > self.last_frame() {
            return Err(Error::Contract(format!(
                "scene covers frames {}..={}, frame {frame} was queried",
                self.first_frame,
                self.last_frame()
            )));
        }
        Ok(&self.positions[(frame - self.first_frame) as usize])
    }
}

/// Everything besides the ego state that the reward depends on.
#[derive(Clone, Copy, Debug)]
pub struct SceneContext<'a> {
    pub layout: &'a RoadLayout,
    pub neighbors: &'a NeighborFutures,
    pub desired_velocity: f64,
    pub constants: FeatureConstants,
}

#[inline]
fn gaussian_1d(d: f64, sigma: f64) -> f64 {
    (-0.5 * d * d / (sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt())
}

fn lateral_sum(y: f64, centers: &[f64], c: f64) -> f64 {
    centers
        .iter()
        .map(|yc| (-c * (yc - y) * (yc - y)).exp())
        .sum()
}

fn collision_sum(x: f64, y: f64, others: &[[f64; 2]], k: &FeatureConstants) -> f64 {
    others
        .iter()
        .map(|o| gaussian_1d(x - o[0], k.sigma_x) * gaussian_1d(y - o[1], k.sigma_y))
        .sum()
}

fn feature_values(
    x: f64,
    y: f64,
    vx: f64,
    others: &[[f64; 2]],
    scene: &SceneContext<'_>,
) -> FeatureVector {
    let k = &scene.constants;
    let dv = vx - scene.desired_velocity;
    FeatureVector([
        dv * dv,
        lateral_sum(y, &scene.layout.lane_centers, k.c),
        lateral_sum(y, &scene.layout.road_boundaries(), k.c),
        collision_sum(x, y, others, k),
    ])
}

/// Feature vector of an ego state at `frame`. Heading is ignored.
pub fn features(
    x: f64,
    y: f64,
    vx: f64,
    scene: &SceneContext<'_>,
    frame: i64,
) -> Result<FeatureVector> {
    let others = scene.neighbors.at(frame)?;
    Ok(feature_values(x, y, vx, others, scene))
}

/// Value, gradient and Hessian of one feature with respect to (x, y, vx).
#[derive(Clone, Copy, Debug, Default)]
struct StateDerivative {
    value: f64,
    grad: [f64; 3],
    hess: [[f64; 3]; 3],
}

const X: usize = 0;
const Y: usize = 1;
const VX: usize = 2;

fn lateral_derivative(y: f64, centers: &[f64], c: f64) -> StateDerivative {
    let mut d = StateDerivative::default();
    for &yc in centers {
        let u = y - yc;
        let e = (-c * u * u).exp();
        d.value += e;
        d.grad[Y] += -2.0 * c * u * e;
        d.hess[Y][Y] += (4.0 * c * c * u * u - 2.0 * c) * e;
    }
    d
}

fn state_derivatives(
    s: &KinematicState,
    others: &[[f64; 2]],
    scene: &SceneContext<'_>,
) -> [StateDerivative; NUM_FEATURES] {
    let k = &scene.constants;
    let mut vel = StateDerivative::default();
    let dv = s.vx - scene.desired_velocity;
    vel.value = dv * dv;
    vel.grad[VX] = 2.0 * dv;
    vel.hess[VX][VX] = 2.0;

    let lane = lateral_derivative(s.y, &scene.layout.lane_centers, k.c);
    let bounds = lateral_derivative(s.y, &scene.layout.road_boundaries(), k.c);

    let mut col = StateDerivative::default();
    let sx2 = k.sigma_x * k.sigma_x;
    let sy2 = k.sigma_y * k.sigma_y;
    for o in others {
        let dx = s.x - o[0];
        let dy = s.y - o[1];
        let g = gaussian_1d(dx, k.sigma_x) * gaussian_1d(dy, k.sigma_y);
        let px = -dx / sx2;
        let py = -dy / sy2;
        col.value += g;
        col.grad[X] += px * g;
        col.grad[Y] += py * g;
        col.hess[X][X] += (px * px - 1.0 / sx2) * g;
        col.hess[Y][Y] += (py * py - 1.0 / sy2) * g;
        col.hess[X][Y] += px * py * g;
    }
    col.hess[Y][X] = col.hess[X][Y];
    [vel, lane, bounds, col]
}

/// Summed features over a horizon together with their derivatives with
/// respect to the flattened action sequence `[u0x, u0y, u1x, u1y, ...]`.
#[derive(Clone, Debug)]
pub struct TrajectoryFeatures {
    pub values: [f64; NUM_FEATURES],
    pub gradients: [DVector<f64>; NUM_FEATURES],
    pub hessians: [DMatrix<f64>; NUM_FEATURES],
}

impl TrajectoryFeatures {
    pub fn reward(&self, w: &RewardWeights) -> f64 {
        reward(w, &FeatureVector(self.values))
    }

    pub fn gradient(&self, w: &RewardWeights) -> DVector<f64> {
        let w = w.to_array();
        let mut g = DVector::zeros(self.gradients[0].len());
        for (wi, gi) in w.iter().zip(&self.gradients) {
            g.axpy(*wi, gi, 1.0);
        }
        g
    }

    pub fn hessian(&self, w: &RewardWeights) -> DMatrix<f64> {
        let w = w.to_array();
        let n = self.hessians[0].nrows();
        let mut h = DMatrix::zeros(n, n);
        for (wi, hi) in w.iter().zip(&self.hessians) {
            h += hi * *wi;
        }
        h
    }
}

fn check_horizon(scene: &SceneContext<'_>, start_frame: i64, n: usize) -> Result<()> {
    let last = start_frame + n as i64;
    if start_frame + 1 < scene.neighbors.first_frame() || last > scene.neighbors.last_frame() {
        return Err(Error::Contract(format!(
            "horizon frames {}..={last} exceed scene coverage {}..={}",
            start_frame + 1,
            scene.neighbors.first_frame(),
            scene.neighbors.last_frame()
        )));
    }
    Ok(())
}

/// Feature sums over the states reached from `state0` (at `start_frame`)
/// under `actions`; state `k` is evaluated at frame `start_frame + k`.
pub fn trajectory_feature_values(
    state0: &KinematicState,
    actions: &[Action],
    scene: &SceneContext<'_>,
    start_frame: i64,
    dynamics: Dynamics,
) -> Result<[f64; NUM_FEATURES]> {
    check_horizon(scene, start_frame, actions.len())?;
    let mut sum = [0.0; NUM_FEATURES];
    for (k, s) in dynamics.propagate(state0, actions).iter().enumerate() {
        let phi = features(s.x, s.y, s.vx, scene, start_frame + k as i64 + 1)?;
        for (acc, v) in sum.iter_mut().zip(phi.0) {
            *acc += v;
        }
    }
    Ok(sum)
}

pub fn trajectory_features(
    state0: &KinematicState,
    actions: &[Action],
    scene: &SceneContext<'_>,
    start_frame: i64,
    dynamics: Dynamics,
) -> Result<TrajectoryFeatures> {
    let n = actions.len();
    check_horizon(scene, start_frame, n)?;
    let dim = 2 * n;
    let mut values = [0.0; NUM_FEATURES];
    let mut gradients: [DVector<f64>; NUM_FEATURES] = std::array::from_fn(|_| DVector::zeros(dim));
    let mut hessians: [DMatrix<f64>; NUM_FEATURES] =
        std::array::from_fn(|_| DMatrix::zeros(dim, dim));

    // Column indices touched by each state variable and their coefficients.
    let mut jac: Vec<(usize, usize, f64)> = Vec::with_capacity(3 * dim);
    for (i, s) in dynamics.propagate(state0, actions).iter().enumerate() {
        let k = i + 1;
        let others = scene.neighbors.at(start_frame + k as i64)?;
        let derivs = state_derivatives(s, others, scene);

        jac.clear();
        for j in 0..n {
            let cp = dynamics.position_coeff(k, j);
            let cv = dynamics.velocity_coeff(k, j);
            if cp != 0.0 {
                jac.push((X, 2 * j, cp));
                jac.push((Y, 2 * j + 1, cp));
            }
            if cv != 0.0 {
                jac.push((VX, 2 * j, cv));
            }
        }

        for (f, d) in derivs.iter().enumerate() {
            values[f] += d.value;
            for &(var, col, coeff) in &jac {
                gradients[f][col] += coeff * d.grad[var];
            }
            let h = &mut hessians[f];
            for (a, &(va, ca, ka)) in jac.iter().enumerate() {
                for &(vb, cb, kb) in &jac[a..] {
                    let hv = d.hess[va][vb];
                    if hv == 0.0 {
                        continue;
                    }
                    let add = ka * kb * hv;
                    h[(ca, cb)] += add;
                    if (va, ca) != (vb, cb) {
                        h[(cb, ca)] += add;
                    }
                }
            }
        }
    }
    for h in &mut hessians {
        // Mirror the upper triangle so symmetry is exact.
        for r in 0..dim {
            for c in (r + 1)..dim {
                let avg = 0.5 * (h[(r, c)] + h[(c, r)]);
                h[(r, c)] = avg;
                h[(c, r)] = avg;
            }
        }
    }
    Ok(TrajectoryFeatures {
        values,
        gradients,
        hessians,
    })
}

/// Summed reward over the states reached under `actions`.
pub fn traj_reward(
    weights: &RewardWeights,
    state0: &KinematicState,
    actions: &[Action],
    scene: &SceneContext<'_>,
    start_frame: i64,
    dynamics: Dynamics,
) -> Result<f64> {
    let v = trajectory_feature_values(state0, actions, scene, start_frame, dynamics)?;
    Ok(reward(weights, &FeatureVector(v)))
}

pub fn traj_reward_grad(
    weights: &RewardWeights,
    state0: &KinematicState,
    actions: &[Action],
    scene: &SceneContext<'_>,
    start_frame: i64,
    dynamics: Dynamics,
) -> Result<DVector<f64>> {
    Ok(trajectory_features(state0, actions, scene, start_frame, dynamics)?.gradient(weights))
}

pub fn traj_reward_hess(
    weights: &RewardWeights,
    state0: &KinematicState,
    actions: &[Action],
    scene: &SceneContext<'_>,
    start_frame: i64,
    dynamics: Dynamics,
) -> Result<DMatrix<f64>> {
    Ok(trajectory_features(state0, actions, scene, start_frame, dynamics)?.hessian(weights))
}

pub fn flatten_actions(actions: &[Action]) -> DVector<f64> {
    DVector::from_iterator(
        2 * actions.len(),
        actions.iter().flat_map(|a| a.iter().copied()),
    )
}

pub fn unflatten_actions(v: &DVector<f64>) -> Vec<Action> {
    v.as_slice().chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Cell size in meters.
    pub resolution: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "feature", rename_all = "snake_case")]
pub enum HeatmapMode {
    /// Lane, bounds and collision terms; velocity does not depend on position.
    Positional,
    Single(Feature),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub grid: GridSpec,
    pub mode: HeatmapMode,
    pub weights: RewardWeights,
    pub constants: FeatureConstants,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major: `values[iy * xs.len() + ix]`.
    #[serde(skip)]
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.xs.len() + ix]
    }

    /// Grid point with the largest value.
    pub fn argmax(&self) -> (f64, f64) {
        let (i, _) =
            self.values
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                    if v > bv {
                        (i, v)
                    } else {
                        (bi, bv)
                    }
                });
        (self.xs[i % self.xs.len()], self.ys[i / self.xs.len()])
    }

    /// `x,y,value` CSV and a JSON sidecar with grid, weights and constants.
    pub fn write(&self, csv_path: &Path, meta_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(csv_path)?;
        w.write_record(["x", "y", "value"])?;
        for (iy, y) in self.ys.iter().enumerate() {
            for (ix, x) in self.xs.iter().enumerate() {
                w.write_record([x.to_string(), y.to_string(), self.value(ix, iy).to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(csv_path, e))?;
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(meta_path, json).map_err(|e| Error::io(meta_path, e))
    }
}

fn axis(min: f64, max: f64, step: f64) -> Vec<f64> {
    let n = ((max - min) / step).floor() as usize + 1;
    (0..n).map(|i| min + step * i as f64).collect()
}

/// Position-dependent reward sampled on a regular grid.
pub fn heatmap(
    weights: &RewardWeights,
    constants: FeatureConstants,
    layout: &RoadLayout,
    neighbors: &[[f64; 2]],
    grid: GridSpec,
    mode: HeatmapMode,
) -> Result<Heatmap> {
    if !(grid.resolution > 0.0 && grid.x_max >= grid.x_min && grid.y_max >= grid.y_min) {
        return Err(Error::Contract(format!("invalid heat map grid {grid:?}")));
    }
    let xs = axis(grid.x_min, grid.x_max, grid.resolution);
    let ys = axis(grid.y_min, grid.y_max, grid.resolution);
    let mut values = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        let lane = lateral_sum(y, &layout.lane_centers, constants.c);
        let bounds = lateral_sum(y, &layout.road_boundaries(), constants.c);
        for &x in &xs {
            let col = collision_sum(x, y, neighbors, &constants);
            let v = match mode {
                HeatmapMode::Positional => {
                    weights.lane * lane + weights.bounds * bounds + weights.collision * col
                }
                HeatmapMode::Single(Feature::Velocity) => 0.0,
                HeatmapMode::Single(Feature::Lane) => weights.lane * lane,
                HeatmapMode::Single(Feature::Bounds) => weights.bounds * bounds,
                HeatmapMode::Single(Feature::Collision) => weights.collision * col,
            };
            values.push(v);
        }
    }
    Ok(Heatmap {
        grid,
        mode,
        weights: *weights,
        constants,
        xs,
        ys,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajdata::build_layout;
    use approx::assert_abs_diff_eq;

    fn scene_parts() -> (RoadLayout, NeighborFutures) {
        let layout = build_layout(&[0.0, 3.75, 7.5, 11.25]).unwrap();
        let neighbors = NeighborFutures::from_positions(0, vec![vec![[40.0, 5.6]]; 20]);
        (layout, neighbors)
    }

    #[test]
    fn lane_term_is_one_at_a_center() {
        let layout = build_layout(&[0.0, 4.0, 8.0]).unwrap();
        let nf = NeighborFutures::empty(0, 0);
        let scene = SceneContext {
            layout: &layout,
            neighbors: &nf,
            desired_velocity: 30.0,
            constants: FeatureConstants::default(),
        };
        let phi = features(0.0, 2.0, 30.0, &scene, 0).unwrap();
        let other_center = (-0.14f64 * 16.0).exp();
        assert_abs_diff_eq!(phi.get(Feature::Lane), 1.0 + other_center, epsilon = 1e-15);
        assert_eq!(phi.get(Feature::Velocity), 0.0);
    }

    #[test]
    fn collision_peak_value() {
        let layout = build_layout(&[0.0, 4.0, 8.0]).unwrap();
        let nf = NeighborFutures::from_positions(3, vec![vec![[10.0, 2.0]]]);
        let scene = SceneContext {
            layout: &layout,
            neighbors: &nf,
            desired_velocity: 30.0,
            constants: FeatureConstants::default(),
        };
        let phi = features(10.0, 2.0, 30.0, &scene, 3).unwrap();
        let expected = 1.0 / (2.0 * PI * 15.0 * 1.4);
        assert_abs_diff_eq!(phi.get(Feature::Collision), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(expected, 7.579e-3, epsilon = 5e-7);
    }

    #[test]
    fn reward_is_dot_product() {
        let phi = FeatureVector([4.0, 1.0, 0.0, 7.579e-3]);
        assert_eq!(reward(&RewardWeights::default(), &phi), 0.0);
        assert_eq!(
            reward(
                &RewardWeights::new(0.0, 1.0, 0.0, 0.0),
                &FeatureVector([0.0, 1.0, 0.0, 0.0])
            ),
            1.0
        );
        assert_abs_diff_eq!(
            reward(&RewardWeights::new(-1.0, 2.0, -3.0, -10.0), &phi),
            -2.07579,
            epsilon = 1e-12
        );
    }

    #[test]
    fn single_step_horizon_is_reward_of_successor() {
        let (layout, nf) = scene_parts();
        let scene = SceneContext {
            layout: &layout,
            neighbors: &nf,
            desired_velocity: 31.0,
            constants: FeatureConstants::default(),
        };
        let w = RewardWeights::new(-1.0, 2.0, -1.5, -30.0);
        let s0 = KinematicState {
            x: 0.0,
            y: 1.9,
            vx: 28.0,
            vy: 0.2,
        };
        let a = [[1.0, 0.3]];
        let dynamics = Dynamics::AccelerationControl { dt: 0.04 };
        let s1 = dynamics.propagate(&s0, &a)[0];
        let direct = reward(&w, &features(s1.x, s1.y, s1.vx, &scene, 5).unwrap());
        let via = traj_reward(&w, &s0, &a, &scene, 4, dynamics).unwrap();
        assert_eq!(direct, via);
    }

    #[test]
    fn horizon_beyond_scene_is_a_contract_error() {
        let (layout, nf) = scene_parts();
        let scene = SceneContext {
            layout: &layout,
            neighbors: &nf,
            desired_velocity: 31.0,
            constants: FeatureConstants::default(),
        };
        let r = traj_reward(
            &RewardWeights::default(),
            &KinematicState::default(),
            &[[0.0, 0.0]; 5],
            &scene,
            16,
            Dynamics::VelocityControl { dt: 0.04 },
        );
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn zero_weights_give_zero_derivatives() {
        let (layout, nf) = scene_parts();
        let scene = SceneContext {
            layout: &layout,
            neighbors: &nf,
            desired_velocity: 31.0,
            constants: FeatureConstants::default(),
        };
        let s0 = KinematicState {
            x: 20.0,
            y: 2.0,
            vx: 30.0,
            vy: 0.0,
        };
        let tf = trajectory_features(
            &s0,
            &[[0.5, 0.1]; 5],
            &scene,
            0,
            Dynamics::AccelerationControl { dt: 0.04 },
        )
        .unwrap();
        let w = RewardWeights::default();
        assert_eq!(tf.reward(&w), 0.0);
        assert!(tf.gradient(&w).iter().all(|&g| g == 0.0));
        assert!(tf.hessian(&w).iter().all(|&h| h == 0.0));
    }

    #[test]
    fn pure_velocity_hessian_under_velocity_control() {
        // (vx_k - vd)^2 with vx_k = u_{k-1,x}: Hessian is 2*theta on x entries.
        let (layout, nf) = scene_parts();
        let scene = SceneContext {
            layout: &layout,
            neighbors: &nf,
            desired_velocity: 31.0,
            constants: FeatureConstants::default(),
        };
        let w = RewardWeights::new(-1.0, 0.0, 0.0, 0.0);
        let h = traj_reward_hess(
            &w,
            &KinematicState::default(),
            &[[29.0, 0.0]; 5],
            &scene,
            0,
            Dynamics::VelocityControl { dt: 0.04 },
        )
        .unwrap();
        for r in 0..10 {
            for c in 0..10 {
                let expected = if r == c && r % 2 == 0 { -2.0 } else { 0.0 };
                assert_eq!(h[(r, c)], expected);
            }
        }
    }

    #[test]
    fn pure_velocity_hessian_under_acceleration_control() {
        // vx_k = v0 + dt * sum_{j<k} a_j, so H_{2i,2j} = -2 dt^2 (N - max(i, j)).
        let (layout, nf) = scene_parts();
        let scene = SceneContext {
            layout: &layout,
            neighbors: &nf,
            desired_velocity: 31.0,
            constants: FeatureConstants::default(),
        };
        let dt = 0.04;
        let h = traj_reward_hess(
            &RewardWeights::new(-1.0, 0.0, 0.0, 0.0),
            &KinematicState::default(),
            &[[0.0, 0.0]; 5],
            &scene,
            0,
            Dynamics::AccelerationControl { dt },
        )
        .unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let expected = -2.0 * dt * dt * (5 - i.max(j)) as f64;
                assert_abs_diff_eq!(h[(2 * i, 2 * j)], expected, epsilon = 1e-15);
                assert_eq!(h[(2 * i + 1, 2 * j + 1)], 0.0);
            }
        }
    }

    #[test]
    fn symmetric_neighbors_cancel_lateral_collision_gradient() {
        let layout = build_layout(&[0.0, 4.0, 8.0, 12.0]).unwrap();
        let nf = NeighborFutures::from_positions(0, vec![vec![[35.0, 2.0], [35.0, 10.0]]; 10]);
        let scene = SceneContext {
            layout: &layout,
            neighbors: &nf,
            desired_velocity: 30.0,
            constants: FeatureConstants::default(),
        };
        let s0 = KinematicState {
            x: 20.0,
            y: 6.0,
            vx: 30.0,
            vy: 0.0,
        };
        let tf = trajectory_features(
            &s0,
            &[[0.0, 0.0]; 5],
            &scene,
            0,
            Dynamics::AccelerationControl { dt: 0.04 },
        )
        .unwrap();
        let g = &tf.gradients[Feature::Collision.index()];
        for j in 0..5 {
            assert!(
                g[2 * j + 1].abs() < 1e-18,
                "lateral component {}",
                g[2 * j + 1]
            );
        }
    }

    #[test]
    fn heatmap_collision_peak_sits_on_neighbor() {
        let layout = build_layout(&[0.0, 4.0, 8.0, 12.0]).unwrap();
        let grid = GridSpec {
            x_min: 0.0,
            x_max: 60.0,
            y_min: -2.0,
            y_max: 14.0,
            resolution: 0.5,
        };
        let hm = heatmap(
            &RewardWeights::new(0.0, 0.0, 0.0, 5.0),
            FeatureConstants::default(),
            &layout,
            &[[30.0, 6.0]],
            grid,
            HeatmapMode::Single(Feature::Collision),
        )
        .unwrap();
        assert_eq!(hm.argmax(), (30.0, 6.0));
        let zero = heatmap(
            &RewardWeights::default(),
            FeatureConstants::default(),
            &layout,
            &[[30.0, 6.0]],
            grid,
            HeatmapMode::Positional,
        )
        .unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn heatmap_lane_maxima_at_centers() {
        // Narrow lanes merge into one hump at c = 0.14 and pull the outer
        // maxima inwards; 6 m lanes keep the shift below one grid cell.
        let layout = build_layout(&[0.0, 6.0, 12.0, 18.0]).unwrap();
        let grid = GridSpec {
            x_min: 0.0,
            x_max: 0.0,
            y_min: -3.0,
            y_max: 21.0,
            resolution: 0.0625,
        };
        let hm = heatmap(
            &RewardWeights::new(0.0, 1.0, 0.0, 0.0),
            FeatureConstants::default(),
            &layout,
            &[],
            grid,
            HeatmapMode::Single(Feature::Lane),
        )
        .unwrap();
        let v = &hm.values;
        let maxima: Vec<f64> = (1..v.len() - 1)
            .filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1])
            .map(|i| hm.ys[i])
            .collect();
        assert_eq!(maxima.len(), 3);
        for (m, c) in maxima.iter().zip(&layout.lane_centers) {
            assert!((m - c).abs() <= 0.0625, "max at {m}, center {c}");
        }
    }
}
