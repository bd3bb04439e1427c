//! Receding-horizon replay of a trained agent.
//!
//! The agent starts from the demonstration's first frame, plans `N`
//! acceleration actions that maximize its summed reward against the recorded
//! neighbor futures, executes the first `replan_stride` of them and replans.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dynamics::{step_dynamics, Action, Dynamics, KinematicState};
use crate::error::{Error, Result};
use crate::reward::{
    flatten_actions, trajectory_feature_values, trajectory_features, unflatten_actions,
    FeatureConstants, RewardWeights, SceneContext,
};
use crate::scenarios::Demonstration;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    /// Planning horizon in steps.
    pub horizon: usize,
    pub dt: f64,
    pub ax_bounds: (f64, f64),
    pub ay_bounds: (f64, f64),
    /// Actions executed between replans.
    pub replan_stride: usize,
    pub max_newton_iters: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            horizon: 5,
            dt: 1.0 / 25.0,
            ax_bounds: (-6.63, 20.06),
            ay_bounds: (-1.63, 1.63),
            replan_stride: 1,
            max_newton_iters: 100,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = |b: (f64, f64)| b.0.is_finite() && b.1.is_finite() && b.0 <= b.1;
        if self.horizon < 1 {
            return Err(Error::Contract("horizon must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Contract(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !ordered(self.ax_bounds) || !ordered(self.ay_bounds) {
            return Err(Error::Contract(
                "action bounds must be finite and ordered".into(),
            ));
        }
        if self.replan_stride < 1 || self.max_newton_iters < 1 {
            return Err(Error::Contract(
                "replan_stride and max_newton_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, a: Action) -> bool {
        a[0] >= self.ax_bounds.0
            && a[0] <= self.ax_bounds.1
            && a[1] >= self.ay_bounds.0
            && a[1] <= self.ay_bounds.1
    }

    fn bounds(&self, i: usize) -> (f64, f64) {
        if i.is_multiple_of(2) {
            self.ax_bounds
        } else {
            self.ay_bounds
        }
    }

    fn project(&self, v: &mut DVector<f64>) {
        for (i, x) in v.iter_mut().enumerate() {
            let (lo, hi) = self.bounds(i);
            *x = x.clamp(lo, hi);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub actions: Vec<Action>,
    /// Summed reward of the plan.
    pub value: f64,
    pub iterations: usize,
}

/// Maximizes the horizon reward over box-constrained accelerations with a
/// projected Newton method.
///
/// The Hessian of the negated reward is made positive definite by replacing
/// each eigenvalue with its magnitude, floored relative to the largest one, so
/// the iterates do not depend on the overall scale of the weights. Variables
/// held at a bound by an outward-pointing gradient are frozen for the step.
/// The horizon length is `warm_start.len()`.
pub fn plan(
    state: &KinematicState,
    weights: &RewardWeights,
    scene: &SceneContext<'_>,
    start_frame: i64,
    warm_start: &[Action],
    config: &AgentConfig,
) -> Result<Plan> {
    const ARMIJO: f64 = 1e-4;
    const STEP_TOL: f64 = 1e-10;
    const EIG_FLOOR: f64 = 1e-8;

    let dynamics = Dynamics::AccelerationControl { dt: config.dt };
    let planning_error = |reason: String| Error::Planning {
        frame: start_frame,
        reason,
    };
    let objective = |a: &DVector<f64>| -> Result<f64> {
        let v =
            trajectory_feature_values(state, &unflatten_actions(a), scene, start_frame, dynamics)?;
        let r: f64 = weights.to_array().iter().zip(v).map(|(w, p)| w * p).sum();
        Ok(-r)
    };

    let mut x = flatten_actions(warm_start);
    config.project(&mut x);
    let mut f = objective(&x)?;
    if !f.is_finite() {
        return Err(planning_error("non-finite objective at warm start".into()));
    }
    let n = x.len();
    let mut iterations = 0;
    if !weights.is_zero() {
        while iterations < config.max_newton_iters {
            iterations += 1;
            let tf =
                trajectory_features(state, &unflatten_actions(&x), scene, start_frame, dynamics)?;
            let g = -tf.gradient(weights);
            let h = -tf.hessian(weights);

            let free: Vec<usize> = (0..n)
                .filter(|&i| {
                    let (lo, hi) = config.bounds(i);
                    !((x[i] <= lo && g[i] > 0.0) || (x[i] >= hi && g[i] < 0.0))
                })
                .collect();
            if free.is_empty() || free.iter().all(|&i| g[i] == 0.0) {
                break;
            }
            let hf = DMatrix::from_fn(free.len(), free.len(), |r, c| h[(free[r], free[c])]);
            let gf = DVector::from_fn(free.len(), |r, _| g[free[r]]);
            let eig = SymmetricEigen::new(hf);
            let lmax = eig.eigenvalues.amax();
            let df = if lmax > 0.0 {
                let floor = EIG_FLOOR * lmax;
                let qtg = eig.eigenvectors.transpose() * &gf;
                let scaled = DVector::from_fn(qtg.len(), |i, _| {
                    -qtg[i] / eig.eigenvalues[i].abs().max(floor)
                });
                &eig.eigenvectors * scaled
            } else {
                -gf
            };
            let mut d = DVector::zeros(n);
            for (r, &i) in free.iter().enumerate() {
                d[i] = df[r];
            }

            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let mut trial = &x + &d * alpha;
                config.project(&mut trial);
                let ft = objective(&trial)?;
                if !ft.is_finite() {
                    return Err(planning_error("non-finite objective".into()));
                }
                let decrease = g.dot(&(&x - &trial));
                if f - ft >= ARMIJO * decrease && decrease >= 0.0 {
                    accepted = Some((trial, ft));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((trial, ft)) = accepted else { break };
            let step = (&trial - &x).amax();
            x = trial;
            f = ft;
            if step < STEP_TOL {
                break;
            }
        }
    }
    Ok(Plan {
        actions: unflatten_actions(&x),
        value: -f,
        iterations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentRollout {
    pub demo_id: String,
    /// Frame number of `states[0]`.
    pub first_frame: i64,
    /// One state per demonstration frame.
    pub states: Vec<KinematicState>,
    /// `actions[i]` moves `states[i]` to `states[i + 1]`.
    pub actions: Vec<Action>,
    pub planner_values: Vec<f64>,
}

impl AgentRollout {
    pub fn frame(&self, i: usize) -> i64 {
        self.first_frame + i as i64
    }

    /// Per-frame CSV; the last frame has no executed action.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "frame,x,y,vx,vy,ax,ay").map_err(io)?;
        for (i, s) in self.states.iter().enumerate() {
            let (ax, ay) = match self.actions.get(i) {
                Some(a) => (a[0].to_string(), a[1].to_string()),
                None => (String::new(), String::new()),
            };
            writeln!(
                w,
                "{},{},{},{},{},{ax},{ay}",
                self.frame(i),
                s.x,
                s.y,
                s.vx,
                s.vy
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Replays `demo` with an agent maximizing `weights`.
pub fn rollout(
    demo: &Demonstration,
    weights: &RewardWeights,
    constants: FeatureConstants,
    config: &AgentConfig,
) -> Result<AgentRollout> {
    config.validate()?;
    if !weights.is_finite() {
        return Err(Error::Contract("weights must be finite".into()));
    }
    let futures = demo.neighbor_futures();
    let scene = demo.scene(&futures, constants);
    let total = demo.num_frames();
    let first = demo.first_frame();

    let mut states = Vec::with_capacity(total);
    let mut actions = Vec::with_capacity(total.saturating_sub(1));
    let mut planner_values = Vec::new();
    let mut state = demo.initial_state();
    states.push(state);
    let mut warm: Vec<Action> = Vec::new();

    while states.len() < total {
        let i = states.len() - 1;
        let remaining = total - 1 - i;
        let n = config.horizon.min(remaining);
        warm.resize(n, warm.last().copied().unwrap_or([0.0, 0.0]));
        let p = plan(&state, weights, &scene, first + i as i64, &warm, config).map_err(
            |e| match e {
                Error::Planning { frame, reason } => Error::Planning {
                    frame,
                    reason: format!("{}: {reason}", demo.demo_id),
                },
                other => other,
            },
        )?;
        planner_values.push(p.value);
        let executed = config.replan_stride.min(n);
        for &a in &p.actions[..executed] {
            state = step_dynamics(&state, a, config.dt);
            states.push(state);
            actions.push(a);
        }
        warm = p.actions[executed..].to_vec();
    }
    Ok(AgentRollout {
        demo_id: demo.demo_id.clone(),
        first_frame: first,
        states,
        actions,
        planner_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::NeighborFutures;
    use crate::trajdata::build_layout;

    fn scene_with<'a>(
        layout: &'a crate::trajdata::RoadLayout,
        futures: &'a NeighborFutures,
        vd: f64,
    ) -> SceneContext<'a> {
        SceneContext {
            layout,
            neighbors: futures,
            desired_velocity: vd,
            constants: FeatureConstants::default(),
        }
    }

    #[test]
    fn zero_weights_return_warm_start() {
        let layout = build_layout(&[0.0, 3.75, 7.5]).unwrap();
        let futures = NeighborFutures::empty(0, 10);
        let scene = scene_with(&layout, &futures, 30.0);
        let s = KinematicState {
            x: 0.0,
            y: 1.875,
            vx: 25.0,
            vy: 0.0,
        };
        let warm = vec![[0.0, 0.0]; 5];
        let p = plan(
            &s,
            &RewardWeights::default(),
            &scene,
            0,
            &warm,
            &AgentConfig::default(),
        )
        .unwrap();
        assert_eq!(p.actions, warm);
    }

    #[test]
    fn slow_start_saturates_acceleration() {
        let layout = build_layout(&[0.0, 3.75, 7.5]).unwrap();
        let futures = NeighborFutures::empty(0, 10);
        let scene = scene_with(&layout, &futures, 30.0);
        let s = KinematicState {
            x: 0.0,
            y: 1.875,
            vx: 20.0,
            vy: 0.0,
        };
        let cfg = AgentConfig::default();
        let w = RewardWeights::new(-1.0, 0.0, 0.0, 0.0);
        let p = plan(&s, &w, &scene, 0, &[[0.0, 0.0]; 5], &cfg).unwrap();
        assert_eq!(p.actions[0][0], cfg.ax_bounds.1);

        // Brute force over a coarse grid of constant accelerations never beats the plan.
        for k in 0..=200 {
            let a = cfg.ax_bounds.0 + (cfg.ax_bounds.1 - cfg.ax_bounds.0) * k as f64 / 200.0;
            let v = trajectory_feature_values(
                &s,
                &[[a, 0.0]; 5],
                &scene,
                0,
                Dynamics::AccelerationControl { dt: cfg.dt },
            )
            .unwrap();
            assert!(-v[0] <= p.value + 1e-9);
        }
    }

    #[test]
    fn symmetric_neighbors_give_no_lateral_action() {
        let layout = build_layout(&[0.0, 3.75, 7.5, 11.25]).unwrap();
        let y = 5.625;
        let futures = NeighborFutures::from_positions(
            0,
            (0..=10)
                .map(|k| {
                    vec![
                        [10.0 + 1.2 * k as f64, y + 3.75],
                        [10.0 + 1.2 * k as f64, y - 3.75],
                    ]
                })
                .collect(),
        );
        let scene = scene_with(&layout, &futures, 30.0);
        let s = KinematicState {
            x: 0.0,
            y,
            vx: 30.0,
            vy: 0.0,
        };
        let w = RewardWeights::new(-1.0, 1.0, -1.0, -20.0);
        let p = plan(&s, &w, &scene, 0, &[[0.0, 0.0]; 5], &AgentConfig::default()).unwrap();
        assert!(p.actions.iter().all(|a| a[1].abs() < 1e-6));
    }
}
