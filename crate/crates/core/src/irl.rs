//! Reward-weight learning from demonstrations.
//!
//! Each demonstration is cut into horizon-length segments. For a segment with
//! reward gradient `g` and Hessian `H` (with respect to the demonstrated
//! velocity actions, dimension `d`), the negated Laplace log-likelihood is
//!
//! ```text
//! NLL = -( 1/2 g' H^-1 g + 1/2 log det(-H) - d/2 log 2pi )
//! ```
//!
//! which is only defined while `-H` is positive definite. The reward is
//! linear in the weights, so per-feature gradients and Hessians are computed
//! once per demonstration and every evaluation is a small dense solve.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::reward::{
    trajectory_features, FeatureConstants, RewardWeights, TrajectoryFeatures, NUM_FEATURES,
};
use crate::rollout::{rollout, AgentConfig};
use crate::scenarios::{segment, Demonstration, Segment};
use crate::tactical::{classify, Trajectory};

/// Small, sign-plausible starting point.
pub const DEFAULT_THETA_INIT: RewardWeights = RewardWeights::new(-0.1, 0.1, -0.1, -0.1);

/// Precomputed per-feature derivatives of every segment of one demonstration.
#[derive(Clone, Debug)]
pub struct DemoLikelihood {
    pub demo_id: String,
    segments: Vec<TrajectoryFeatures>,
}

/// NLL value together with its gradient with respect to the weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NllEval {
    pub value: f64,
    pub gradient: [f64; NUM_FEATURES],
}

fn segment_features(
    demo: &Demonstration,
    seg: &Segment,
    futures: &crate::reward::NeighborFutures,
    constants: FeatureConstants,
) -> Result<TrajectoryFeatures> {
    let scene = demo.scene(futures, constants);
    trajectory_features(
        &seg.state0,
        &seg.actions,
        &scene,
        seg.start_frame,
        Dynamics::VelocityControl { dt: demo.dt },
    )
}

fn factor(
    tf: &TrajectoryFeatures,
    w: &RewardWeights,
    index: usize,
) -> Result<(Cholesky<f64, Dyn>, DVector<f64>)> {
    let neg_h = -tf.hessian(w);
    let chol = Cholesky::new(neg_h).ok_or(Error::IndefiniteHessian { segment: index })?;
    Ok((chol, tf.gradient(w)))
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum()
}

fn nll_of(tf: &TrajectoryFeatures, w: &RewardWeights, index: usize) -> Result<f64> {
    let (chol, g) = factor(tf, w, index)?;
    let z = chol.solve(&g);
    let d = g.len() as f64;
    Ok(0.5 * g.dot(&z) - 0.5 * log_det(&chol) + 0.5 * d * (2.0 * PI).ln())
}

fn nll_grad_of(tf: &TrajectoryFeatures, w: &RewardWeights, index: usize) -> Result<NllEval> {
    let (chol, g) = factor(tf, w, index)?;
    let z = chol.solve(&g);
    let a_inv = chol.inverse();
    let d = g.len() as f64;
    let value = 0.5 * g.dot(&z) - 0.5 * log_det(&chol) + 0.5 * d * (2.0 * PI).ln();
    let mut gradient = [0.0; NUM_FEATURES];
    for (i, out) in gradient.iter_mut().enumerate() {
        let hi = &tf.hessians[i];
        let quad = z.dot(&(hi * &z));
        let trace = a_inv.component_mul(hi).sum();
        *out = tf.gradients[i].dot(&z) + 0.5 * quad + 0.5 * trace;
    }
    Ok(NllEval { value, gradient })
}

impl DemoLikelihood {
    pub fn new(demo: &Demonstration, constants: FeatureConstants, horizon: usize) -> Result<Self> {
        let futures = demo.neighbor_futures();
        let segments = segment(demo, horizon)?
            .iter()
            .map(|s| segment_features(demo, s, &futures, constants))
            .collect::<Result<_>>()?;
        Ok(Self {
            demo_id: demo.demo_id.clone(),
            segments,
        })
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn segment(&self, index: usize) -> &TrajectoryFeatures {
        &self.segments[index]
    }

    pub fn segment_nll(&self, index: usize, w: &RewardWeights) -> Result<f64> {
        nll_of(&self.segments[index], w, index)
    }

    pub fn nll(&self, w: &RewardWeights) -> Result<f64> {
        self.segments
            .iter()
            .enumerate()
            .map(|(i, tf)| nll_of(tf, w, i))
            .sum()
    }

    pub fn nll_with_gradient(&self, w: &RewardWeights) -> Result<NllEval> {
        let mut total = NllEval {
            value: 0.0,
            gradient: [0.0; NUM_FEATURES],
        };
        for (i, tf) in self.segments.iter().enumerate() {
            let e = nll_grad_of(tf, w, i)?;
            total.value += e.value;
            for (t, g) in total.gradient.iter_mut().zip(e.gradient) {
                *t += g;
            }
        }
        Ok(total)
    }

    /// Weight gradient summed over the segments where `-H` is positive
    /// definite, and the number of segments that were skipped.
    pub fn partial_gradient(&self, w: &RewardWeights) -> ([f64; NUM_FEATURES], usize) {
        let mut grad = [0.0; NUM_FEATURES];
        let mut skipped = 0;
        for (i, tf) in self.segments.iter().enumerate() {
            match nll_grad_of(tf, w, i) {
                Ok(e) => {
                    for (t, g) in grad.iter_mut().zip(e.gradient) {
                        *t += g;
                    }
                }
                Err(_) => skipped += 1,
            }
        }
        (grad, skipped)
    }
}

/// NLL of one segment of `demo`.
pub fn segment_nll(
    weights: &RewardWeights,
    demo: &Demonstration,
    seg: &Segment,
    constants: FeatureConstants,
) -> Result<f64> {
    let tf = segment_features(demo, seg, &demo.neighbor_futures(), constants)?;
    nll_of(&tf, weights, seg.index)
}

/// Summed NLL over all segments of `demo`.
pub fn demo_nll(
    weights: &RewardWeights,
    demo: &Demonstration,
    constants: FeatureConstants,
    horizon: usize,
) -> Result<f64> {
    DemoLikelihood::new(demo, constants, horizon)?.nll(weights)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingStatus {
    Converged,
    FailedIndefiniteHessian,
    FailedNoMinimum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingResult {
    pub demo_id: String,
    pub status: TrainingStatus,
    pub weights: Option<RewardWeights>,
    pub iterations: usize,
    pub final_nll: Option<f64>,
    /// Segment whose `-H` lost positive definiteness, for indefinite failures.
    pub failed_segment: Option<usize>,
}

impl TrainingResult {
    pub fn converged(&self) -> bool {
        self.status == TrainingStatus::Converged
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingDiagnostics {
    /// dNLL/dtheta at the initial weights.
    pub init_jacobian: [f64; NUM_FEATURES],
    /// The velocity component is negative and at least ten times larger in
    /// magnitude than every other component.
    pub vel_dominance: bool,
    /// Segments already indefinite at the initial weights; they are left out
    /// of `init_jacobian`.
    pub init_indefinite_segments: usize,
}

pub fn vel_dominance(jacobian: &[f64; NUM_FEATURES]) -> bool {
    let v = jacobian[0];
    v < 0.0 && jacobian[1..].iter().all(|j| v.abs() >= 10.0 * j.abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Infinity-norm of the NLL gradient at convergence.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Segment length in frames.
    pub horizon: usize,
    /// Experimental: reject trial points with a positive velocity weight.
    pub restrict_vel_nonpositive: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            max_iters: 500,
            horizon: 5,
            restrict_vel_nonpositive: false,
        }
    }
}

type Vec4 = nalgebra::Vector4<f64>;
type Mat4 = nalgebra::Matrix4<f64>;

enum LineSearch {
    Accepted(Vec4, NllEval),
    NoDecrease,
    Indefinite(usize),
}

/// BFGS on the four weights.
///
/// The first trial step of every line search follows the usual quasi-Newton
/// heuristic `min(1, 2.02 (f_k - f_{k-1}) / g'p)`, which on the first
/// iteration moves the weights by about one unit along the steepest descent
/// direction. An indefinite `-H` at any evaluated point ends training with
/// [`TrainingStatus::FailedIndefiniteHessian`].
struct Bfgs<'a> {
    lik: &'a DemoLikelihood,
    cfg: &'a OptimizerConfig,
}

impl Bfgs<'_> {
    fn eval(&self, x: &Vec4) -> Result<NllEval> {
        self.lik
            .nll_with_gradient(&RewardWeights::from_array([x[0], x[1], x[2], x[3]]))
    }

    fn line_search(&self, x: &Vec4, f: f64, g: &Vec4, p: &Vec4, alpha0: f64) -> LineSearch {
        const ARMIJO: f64 = 1e-4;
        let slope = g.dot(p);
        let mut alpha = alpha0;
        for _ in 0..60 {
            let trial = x + p * alpha;
            let rejected = self.cfg.restrict_vel_nonpositive && trial[0] > 0.0;
            if !rejected {
                match self.eval(&trial) {
                    Ok(e) if e.value.is_finite() && e.value <= f + ARMIJO * alpha * slope => {
                        return LineSearch::Accepted(trial, e)
                    }
                    Ok(_) => {}
                    Err(Error::IndefiniteHessian { segment }) => {
                        return LineSearch::Indefinite(segment)
                    }
                    Err(_) => return LineSearch::NoDecrease,
                }
            }
            alpha *= 0.5;
        }
        LineSearch::NoDecrease
    }
}

/// Fits reward weights to one demonstration by minimizing its summed NLL.
pub fn train(
    demo: &Demonstration,
    constants: FeatureConstants,
    theta_init: RewardWeights,
    cfg: &OptimizerConfig,
) -> Result<(TrainingResult, TrainingDiagnostics)> {
    if !theta_init.is_finite() {
        return Err(Error::Contract("initial weights must be finite".into()));
    }
    let lik = DemoLikelihood::new(demo, constants, cfg.horizon)?;
    Ok(train_likelihood(&lik, theta_init, cfg))
}

pub fn train_likelihood(
    lik: &DemoLikelihood,
    theta_init: RewardWeights,
    cfg: &OptimizerConfig,
) -> (TrainingResult, TrainingDiagnostics) {
    let (init_jacobian, skipped) = lik.partial_gradient(&theta_init);
    let diagnostics = TrainingDiagnostics {
        init_jacobian,
        vel_dominance: vel_dominance(&init_jacobian),
        init_indefinite_segments: skipped,
    };
    let fail = |status, iterations, failed_segment| TrainingResult {
        demo_id: lik.demo_id.clone(),
        status,
        weights: None,
        iterations,
        final_nll: None,
        failed_segment,
    };

    let bfgs = Bfgs { lik, cfg };
    let mut x = Vec4::from(theta_init.to_array());
    let mut e = match bfgs.eval(&x) {
        Ok(e) => e,
        Err(Error::IndefiniteHessian { segment }) => {
            return (
                fail(TrainingStatus::FailedIndefiniteHessian, 0, Some(segment)),
                diagnostics,
            )
        }
        Err(_) => return (fail(TrainingStatus::FailedNoMinimum, 0, None), diagnostics),
    };
    let mut g = Vec4::from(e.gradient);
    let mut h_inv = Mat4::identity();
    let mut f_prev = e.value + 0.5 * g.norm();

    for iter in 0..cfg.max_iters {
        if g.amax() <= cfg.grad_tol {
            let result = TrainingResult {
                demo_id: lik.demo_id.clone(),
                status: TrainingStatus::Converged,
                weights: Some(RewardWeights::from_array([x[0], x[1], x[2], x[3]])),
                iterations: iter,
                final_nll: Some(e.value),
                failed_segment: None,
            };
            return (result, diagnostics);
        }
        let mut restarted = false;
        let (x_new, e_new) = loop {
            let mut p = -(h_inv * g);
            if g.dot(&p) >= 0.0 {
                h_inv = Mat4::identity();
                p = -g;
            }
            let slope = g.dot(&p);
            let mut alpha0 = (2.02 * (e.value - f_prev) / slope).min(1.0);
            if !(alpha0.is_finite() && alpha0 > 0.0) {
                alpha0 = 1.0;
            }
            match bfgs.line_search(&x, e.value, &g, &p, alpha0) {
                LineSearch::Accepted(xn, en) => break (xn, en),
                LineSearch::Indefinite(segment) => {
                    return (
                        fail(
                            TrainingStatus::FailedIndefiniteHessian,
                            iter + 1,
                            Some(segment),
                        ),
                        diagnostics,
                    )
                }
                LineSearch::NoDecrease if !restarted && h_inv != Mat4::identity() => {
                    restarted = true;
                    h_inv = Mat4::identity();
                }
                LineSearch::NoDecrease => {
                    return (
                        fail(TrainingStatus::FailedNoMinimum, iter + 1, None),
                        diagnostics,
                    )
                }
            }
        };
        let g_new = Vec4::from(e_new.gradient);
        let s = x_new - x;
        let y = g_new - g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let i = Mat4::identity();
            if h_inv == i {
                h_inv = i * (sy / y.norm_squared());
            }
            let left = i - s * y.transpose() * rho;
            let right = i - y * s.transpose() * rho;
            h_inv = left * h_inv * right + s * s.transpose() * rho;
        }
        f_prev = e.value;
        x = x_new;
        e = e_new;
        g = g_new;
    }
    (
        fail(TrainingStatus::FailedNoMinimum, cfg.max_iters, None),
        diagnostics,
    )
}

/// Sets of candidate shape constants; every combination is evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsGrid {
    pub c: Vec<f64>,
    pub sigma_x: Vec<f64>,
    pub sigma_y: Vec<f64>,
    /// Wins ties; other ties fall back to enumeration order.
    pub preferred: Option<FeatureConstants>,
}

impl Default for ConstantsGrid {
    fn default() -> Self {
        Self {
            c: vec![0.14, 0.18, 0.22],
            sigma_x: vec![5.0, 10.0, 15.0, 20.0],
            sigma_y: vec![1.4, 1.8, 2.2],
            preferred: Some(FeatureConstants::default()),
        }
    }
}

impl ConstantsGrid {
    pub fn combinations(&self) -> Vec<FeatureConstants> {
        let mut out = Vec::new();
        for &c in &self.c {
            for &sigma_x in &self.sigma_x {
                for &sigma_y in &self.sigma_y {
                    out.push(FeatureConstants {
                        c,
                        sigma_x,
                        sigma_y,
                    });
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsScore {
    pub constants: FeatureConstants,
    /// Rollouts labeled lane change or car following.
    pub desirable: usize,
    pub converged: usize,
    pub evaluated: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedConstants {
    pub rank: usize,
    pub score: ConstantsScore,
    /// Shares the best score with at least one other combination.
    pub tied_for_best: bool,
}

/// Trains, rolls out and classifies every demonstration under one set of
/// constants.
pub fn score_constants(
    demos: &[Demonstration],
    constants: FeatureConstants,
    theta_init: RewardWeights,
    opt: &OptimizerConfig,
    agent: &AgentConfig,
) -> Result<ConstantsScore> {
    let mut score = ConstantsScore {
        constants,
        desirable: 0,
        converged: 0,
        evaluated: demos.len(),
    };
    for demo in demos {
        let (res, _) = train(demo, constants, theta_init, opt)?;
        let Some(w) = res.weights else { continue };
        score.converged += 1;
        let r = rollout(demo, &w, constants, agent)?;
        let traj = Trajectory::from_rollout(&r, &demo.ego);
        if classify(&traj, &demo.neighbors, &demo.layout)
            .category
            .is_desirable()
        {
            score.desirable += 1;
        }
    }
    Ok(score)
}

/// Orders scores by desirable count, breaking ties by preference.
pub fn rank_scores(mut scores: Vec<ConstantsScore>, grid: &ConstantsGrid) -> Vec<RankedConstants> {
    let order = grid.combinations();
    let pref = |k: &FeatureConstants| {
        if grid.preferred.as_ref() == Some(k) {
            0
        } else {
            1 + order.iter().position(|o| o == k).unwrap_or(order.len())
        }
    };
    scores.sort_by(|a, b| {
        b.desirable
            .cmp(&a.desirable)
            .then_with(|| pref(&a.constants).cmp(&pref(&b.constants)))
    });
    let best = scores.first().map_or(0, |s| s.desirable);
    let n_best = scores.iter().filter(|s| s.desirable == best).count();
    scores
        .into_iter()
        .enumerate()
        .map(|(i, score)| RankedConstants {
            rank: i + 1,
            tied_for_best: n_best > 1 && score.desirable == best,
            score,
        })
        .collect()
}

pub fn grid_search(
    demos: &[Demonstration],
    grid: &ConstantsGrid,
    theta_init: RewardWeights,
    opt: &OptimizerConfig,
    agent: &AgentConfig,
) -> Result<Vec<RankedConstants>> {
    if demos.is_empty() {
        return Err(Error::Contract(
            "grid search needs at least one demonstration".into(),
        ));
    }
    let combos = grid.combinations();
    if combos.is_empty() {
        return Err(Error::Contract("constants grid is empty".into()));
    }
    let scores = combos
        .into_iter()
        .map(|k| score_constants(demos, k, theta_init, opt, agent))
        .collect::<Result<Vec<_>>>()?;
    Ok(rank_scores(scores, grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_36_combinations() {
        assert_eq!(ConstantsGrid::default().combinations().len(), 36);
    }

    #[test]
    fn dominance_rule() {
        assert!(vel_dominance(&[-10.0, 1.0, -1.0, 0.5]));
        assert!(!vel_dominance(&[-9.0, 1.0, 0.0, 0.0]));
        assert!(!vel_dominance(&[10.0, 0.1, 0.1, 0.1]));
    }

    #[test]
    fn ties_prefer_the_configured_combination() {
        let grid = ConstantsGrid::default();
        let mk = |sx: f64, desirable| ConstantsScore {
            constants: FeatureConstants {
                c: 0.14,
                sigma_x: sx,
                sigma_y: 1.4,
            },
            desirable,
            converged: 15,
            evaluated: 15,
        };
        let ranked = rank_scores(vec![mk(20.0, 9), mk(5.0, 3), mk(15.0, 9)], &grid);
        assert_eq!(ranked[0].score.constants.sigma_x, 15.0);
        assert_eq!(ranked[1].score.constants.sigma_x, 20.0);
        assert!(ranked[0].tied_for_best && ranked[1].tied_for_best);
        assert!(!ranked[2].tied_for_best);
    }
}
