use dmval_core::dynamics::{Action, Dynamics, KinematicState};
use dmval_core::reward::*;
use dmval_core::trajdata::{build_layout, RoadLayout};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Fixture {
    layout: RoadLayout,
    futures: NeighborFutures,
    v_d: f64,
    state0: KinematicState,
    actions: Vec<Action>,
    dynamics: Dynamics,
    weights: RewardWeights,
}

impl Fixture {
    fn scene(&self) -> SceneContext<'_> {
        SceneContext {
            layout: &self.layout,
            neighbors: &self.futures,
            desired_velocity: self.v_d,
            constants: FeatureConstants::default(),
        }
    }
}

const START: i64 = 10;

fn random_fixture(rng: &mut ChaCha8Rng) -> Fixture {
    let lanes = rng.random_range(2..=4);
    let w = rng.random_range(3.2..4.2);
    let markings: Vec<f64> = (0..=lanes).map(|k| k as f64 * w).collect();
    let layout = build_layout(&markings).unwrap();
    let n = rng.random_range(2..=6);
    let state0 = KinematicState {
        x: rng.random_range(-50.0..50.0),
        y: rng.random_range(-1.0..markings[lanes] + 1.0),
        vx: rng.random_range(15.0..35.0),
        vy: rng.random_range(-1.0..1.0),
    };
    let dynamics = if rng.random_bool(0.5) {
        Dynamics::VelocityControl { dt: 0.04 }
    } else {
        Dynamics::AccelerationControl { dt: 0.04 }
    };
    let actions = (0..n)
        .map(|_| match dynamics {
            Dynamics::VelocityControl { .. } => [
                state0.vx + rng.random_range(-2.0..2.0),
                rng.random_range(-1.5..1.5),
            ],
            Dynamics::AccelerationControl { .. } => {
                [rng.random_range(-6.0..6.0), rng.random_range(-1.6..1.6)]
            }
        })
        .collect();
    let count = rng.random_range(0..5);
    let starts: Vec<[f64; 3]> = (0..count)
        .map(|_| {
            [
                state0.x + rng.random_range(-30.0..30.0),
                rng.random_range(0.0..markings[lanes]),
                rng.random_range(15.0..35.0),
            ]
        })
        .collect();
    let positions = (0..=n + 1)
        .map(|k| {
            starts
                .iter()
                .map(|s| [s[0] + 0.04 * s[2] * k as f64, s[1]])
                .collect()
        })
        .collect();
    Fixture {
        layout,
        futures: NeighborFutures::from_positions(START, positions),
        v_d: rng.random_range(20.0..35.0),
        state0,
        actions,
        dynamics,
        weights: RewardWeights::new(
            -rng.random_range(0.1..3.0),
            rng.random_range(0.1..10.0),
            -rng.random_range(0.1..10.0),
            -rng.random_range(1.0..200.0),
        ),
    }
}

fn value(f: &Fixture, w: &RewardWeights, u: &DVector<f64>) -> f64 {
    traj_reward(
        w,
        &f.state0,
        &unflatten_actions(u),
        &f.scene(),
        START,
        f.dynamics,
    )
    .unwrap()
}

fn grad(f: &Fixture, w: &RewardWeights, u: &DVector<f64>) -> DVector<f64> {
    traj_reward_grad(
        w,
        &f.state0,
        &unflatten_actions(u),
        &f.scene(),
        START,
        f.dynamics,
    )
    .unwrap()
}

fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = b.amax().max(1e-300);
    (a - b).amax() / scale
}

fn unit(i: usize) -> RewardWeights {
    let mut a = [0.0; 4];
    a[i] = 1.0;
    RewardWeights::from_array(a)
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-5;
    for case in 0..100 {
        let f = random_fixture(&mut rng);
        let u = flatten_actions(&f.actions);
        let mut weightings = vec![f.weights];
        weightings.extend((0..4).map(unit));
        for w in &weightings {
            let g = grad(&f, w, &u);
            let fd = DVector::from_fn(u.len(), |i, _| {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[i] += h;
                dn[i] -= h;
                (value(&f, w, &up) - value(&f, w, &dn)) / (2.0 * h)
            });
            if fd.amax() < 1e-9 {
                assert!(g.amax() < 1e-9, "case {case}");
                continue;
            }
            let e = rel_err(&g, &fd);
            assert!(e < 1e-5, "case {case} weights {w:?}: relative error {e:e}");
        }
    }
}

#[test]
fn hessian_matches_differences_of_gradient_and_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-5;
    for case in 0..100 {
        let f = random_fixture(&mut rng);
        let u = flatten_actions(&f.actions);
        let mut weightings = vec![f.weights];
        weightings.extend((0..4).map(unit));
        for w in &weightings {
            let hess =
                traj_reward_hess(w, &f.state0, &f.actions, &f.scene(), START, f.dynamics).unwrap();
            assert_eq!(
                hess,
                hess.transpose(),
                "case {case}: Hessian not exactly symmetric"
            );
            let mut fd = DMatrix::zeros(u.len(), u.len());
            for i in 0..u.len() {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[i] += h;
                dn[i] -= h;
                fd.set_column(i, &((grad(&f, w, &up) - grad(&f, w, &dn)) / (2.0 * h)));
            }
            let scale = fd.amax();
            if scale < 1e-9 {
                assert!(hess.amax() < 1e-9);
                continue;
            }
            let e = (&hess - &fd).amax() / scale;
            assert!(e < 1e-4, "case {case} weights {w:?}: relative error {e:e}");
        }
    }
}

#[test]
fn pure_velocity_hessian_is_constant() {
    // Velocity control: vx_k = u_{k-1}, so the Hessian of -(vx - v_d)^2 is
    // -2 on every longitudinal diagonal entry and zero elsewhere.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = RewardWeights::new(-1.0, 0.0, 0.0, 0.0);
    for _ in 0..10 {
        let mut f = random_fixture(&mut rng);
        f.dynamics = Dynamics::VelocityControl { dt: 0.04 };
        let n = f.actions.len();
        let hess =
            traj_reward_hess(&w, &f.state0, &f.actions, &f.scene(), START, f.dynamics).unwrap();
        let expected =
            DMatrix::from_fn(
                2 * n,
                2 * n,
                |r, c| if r == c && r % 2 == 0 { -2.0 } else { 0.0 },
            );
        assert_eq!(hess, expected);
    }
}

#[test]
fn reward_examples() {
    let phi = FeatureVector([4.0, 1.0, 0.0, 7.579e-3]);
    let r = reward(&RewardWeights::new(-1.0, 2.0, -3.0, -10.0), &phi);
    assert!((r - -2.07579).abs() < 1e-12);
    assert_eq!(reward(&RewardWeights::default(), &phi), 0.0);

    let layout = build_layout(&[0.0, 4.0]).err();
    assert!(layout.is_some());
    let layout = build_layout(&[0.0, 4.0, 8.0]).unwrap();
    let futures = NeighborFutures::from_positions(0, vec![vec![[5.0, 2.0]]]);
    let scene = SceneContext {
        layout: &layout,
        neighbors: &futures,
        desired_velocity: 30.0,
        constants: FeatureConstants::default(),
    };
    let phi = features(5.0, 2.0, 30.0, &scene, 0).unwrap();
    assert_eq!(phi.get(Feature::Velocity), 0.0);
    let peak = 1.0 / (2.0 * std::f64::consts::PI * 15.0 * 1.4);
    assert!((phi.get(Feature::Collision) - peak).abs() < 1e-15);
    assert!((peak - 7.579e-3).abs() < 1e-6);
    assert!((phi.get(Feature::Lane) - (1.0 + (-0.14f64 * 16.0).exp())).abs() < 1e-15);
}

fn arb_weights() -> impl Strategy<Value = RewardWeights> {
    prop::array::uniform4(-50.0..50.0f64).prop_map(RewardWeights::from_array)
}

proptest! {
    #[test]
    fn traj_reward_is_linear_in_weights(seed in any::<u64>(), a in arb_weights(), b in arb_weights(), s in -3.0..3.0f64, t in -3.0..3.0f64) {
        let f = random_fixture(&mut ChaCha8Rng::seed_from_u64(seed));
        let u = flatten_actions(&f.actions);
        let combo = RewardWeights::from_array(std::array::from_fn(|i| s * a.to_array()[i] + t * b.to_array()[i]));
        let lhs = value(&f, &combo, &u);
        let rhs = s * value(&f, &a, &u) + t * value(&f, &b, &u);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn features_stay_in_range(seed in any::<u64>(), y in -20.0..30.0f64, vx in 0.0..50.0f64) {
        let f = random_fixture(&mut ChaCha8Rng::seed_from_u64(seed));
        let phi = features(f.state0.x, y, vx, &f.scene(), START).unwrap();
        prop_assert!(phi.get(Feature::Velocity) >= 0.0);
        prop_assert!(phi.get(Feature::Lane) >= 0.0 && phi.get(Feature::Lane) <= f.layout.num_lanes() as f64);
        prop_assert!(phi.get(Feature::Bounds) >= 0.0 && phi.get(Feature::Bounds) <= 2.0);
        prop_assert!(phi.get(Feature::Collision) >= 0.0);
    }

    #[test]
    fn collision_is_translation_invariant(ox in prop::collection::vec((-40.0..40.0f64, -8.0..8.0f64), 1..5),
                                           dx in -1e3..1e3f64, dy in -20.0..20.0f64, x in -10.0..10.0f64, y in -5.0..5.0f64) {
        let layout = build_layout(&[0.0, 3.5, 7.0]).unwrap();
        let pos: Vec<[f64; 2]> = ox.iter().map(|&(a, b)| [a, b]).collect();
        let shifted: Vec<[f64; 2]> = pos.iter().map(|p| [p[0] + dx, p[1] + dy]).collect();
        let f0 = NeighborFutures::from_positions(0, vec![pos]);
        let f1 = NeighborFutures::from_positions(0, vec![shifted]);
        let scene = |n| SceneContext { layout: &layout, neighbors: n, desired_velocity: 30.0, constants: FeatureConstants::default() };
        let a = features(x, y, 0.0, &scene(&f0), 0).unwrap().get(Feature::Collision);
        let b = features(x + dx, y + dy, 0.0, &scene(&f1), 0).unwrap().get(Feature::Collision);
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300) + 1e-18);
    }

    #[test]
    fn symmetric_neighbors_cancel_lateral_collision_gradient(off in 0.5..5.0f64, dx in -30.0..30.0f64) {
        let layout = build_layout(&[0.0, 3.5, 7.0]).unwrap();
        let y = 3.5;
        let futures = NeighborFutures::from_positions(0, vec![vec![[dx, y - off], [dx, y + off]]; 2]);
        let scene = SceneContext { layout: &layout, neighbors: &futures, desired_velocity: 30.0, constants: FeatureConstants::default() };
        let state0 = KinematicState { x: -0.04 * 25.0, y, vx: 25.0, vy: 0.0 };
        let g = traj_reward_grad(&unit(3), &state0, &[[25.0, 0.0]], &scene, 0, Dynamics::VelocityControl { dt: 0.04 }).unwrap();
        prop_assert!(g[1].abs() < 1e-15);
    }
}
