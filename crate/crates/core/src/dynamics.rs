//! Point-mass action models.
//!
//! Both models are linear in the action sequence, so every propagated position
//! and velocity is an affine function of the actions. The coefficient
//! accessors expose that map for analytic differentiation.

use serde::{Deserialize, Serialize};

/// Position and velocity of a vehicle center in canonical coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KinematicState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

/// Longitudinal and lateral action component.
pub type Action = [f64; 2];

/// Explicit Euler step under acceleration control: velocity is updated with
/// the action, position advances with the pre-update velocity.
pub fn step_dynamics(state: &KinematicState, action: Action, dt: f64) -> KinematicState {
    KinematicState {
        x: state.x + state.vx * dt,
        y: state.y + state.vy * dt,
        vx: state.vx + action[0] * dt,
        vy: state.vy + action[1] * dt,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dynamics {
    /// Actions are velocities: `p_k = p_{k-1} + dt * u_{k-1}`, `v_k = u_{k-1}`.
    VelocityControl { dt: f64 },
    /// Actions are accelerations, integrated with [`step_dynamics`].
    AccelerationControl { dt: f64 },
}

impl Dynamics {
    pub fn dt(&self) -> f64 {
        match *self {
            Dynamics::VelocityControl { dt } | Dynamics::AccelerationControl { dt } => dt,
        }
    }

    /// States 1..=N reached from `state0`.
    pub fn propagate(&self, state0: &KinematicState, actions: &[Action]) -> Vec<KinematicState> {
        let mut out = Vec::with_capacity(actions.len());
        let mut s = *state0;
        for &a in actions {
            s = match *self {
                Dynamics::VelocityControl { dt } => KinematicState {
                    x: s.x + a[0] * dt,
                    y: s.y + a[1] * dt,
                    vx: a[0],
                    vy: a[1],
                },
                Dynamics::AccelerationControl { dt } => step_dynamics(&s, a, dt),
            };
            out.push(s);
        }
        out
    }

    /// d position_k / d action_j (same for both axes); `k` is 1-based.
    pub fn position_coeff(&self, k: usize, j: usize) -> f64 {
        match *self {
            Dynamics::VelocityControl { dt } => {
                if j < k {
                    dt
                } else {
                    0.0
                }
            }
            Dynamics::AccelerationControl { dt } => {
                if j + 1 < k {
                    dt * dt * (k - 1 - j) as f64
                } else {
                    0.0
                }
            }
        }
    }

    /// d velocity_k / d action_j (same for both axes); `k` is 1-based.
    pub fn velocity_coeff(&self, k: usize, j: usize) -> f64 {
        match *self {
            Dynamics::VelocityControl { .. } => {
                if j + 1 == k {
                    1.0
                } else {
                    0.0
                }
            }
            Dynamics::AccelerationControl { dt } => {
                if j < k {
                    dt
                } else {
                    0.0
                }
            }
        }
    }
}
