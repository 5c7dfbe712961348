//! Built-in grippers, a 4-DOF arm, paths and benchmark scenarios.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DVector, Vector3};

use crate::dynamics::{KinematicChain, ObjectModel, RevoluteJoint};
use crate::gripper::{GripperModel, StiffnessWeights, SuctionCup};
use crate::se3::RigidTransform;
use crate::spline::PathSpec;
use crate::totp::{KinematicLimits, SolverOptions, TotpProblem};

/// Suction force per cup of the 6-cup testbed, in newtons.
pub const TESTBED_SUCTION_N: f64 = 118.6;
pub const TESTBED_PULL_OFF_N: f64 = 155.0;
pub const TESTBED_PAD_RADIUS_M: f64 = 0.03;
pub const TESTBED_FRICTION: f64 = 0.7;

fn grid_gripper(xs: &[f64], ys: &[f64], skip: &[(usize, usize)], radius: f64, psi: f64, pull_off: f64, mu: f64) -> GripperModel {
    let mut cups = Vec::new();
    for (j, y) in ys.iter().enumerate() {
        for (i, x) in xs.iter().enumerate() {
            if skip.contains(&(i, j)) {
                continue;
            }
            let cup = SuctionCup::from_position_normal(Vector3::new(*x, *y, 0.0), Vector3::z(), radius, psi)
                .expect("preset cup is valid")
                .with_pull_off_force(Some(pull_off));
            cups.push(cup);
        }
    }
    GripperModel::new(cups, mu, StiffnessWeights::fitted()).expect("preset gripper is valid")
}

/// 3×2 grid of 60 mm pads at 100 mm pitch.
pub fn six_cup_testbed() -> GripperModel {
    grid_gripper(
        &[-0.1, 0.0, 0.1],
        &[-0.05, 0.05],
        &[],
        TESTBED_PAD_RADIUS_M,
        TESTBED_SUCTION_N,
        TESTBED_PULL_OFF_N,
        TESTBED_FRICTION,
    )
}

/// Testbed with the `+x, +y` corner cup removed.
pub fn five_cup_testbed() -> GripperModel {
    grid_gripper(
        &[-0.1, 0.0, 0.1],
        &[-0.05, 0.05],
        &[(2, 1)],
        TESTBED_PAD_RADIUS_M,
        TESTBED_SUCTION_N,
        TESTBED_PULL_OFF_N,
        TESTBED_FRICTION,
    )
}

/// Testbed with the two middle cups removed.
pub fn four_cup_testbed() -> GripperModel {
    grid_gripper(
        &[-0.1, 0.0, 0.1],
        &[-0.05, 0.05],
        &[(1, 0), (1, 1)],
        TESTBED_PAD_RADIUS_M,
        TESTBED_SUCTION_N,
        TESTBED_PULL_OFF_N,
        TESTBED_FRICTION,
    )
}

/// 4×2 grid for box handling on an industrial arm.
pub fn eight_cup_robot() -> GripperModel {
    grid_gripper(
        &[-0.18, -0.06, 0.06, 0.18],
        &[-0.06, 0.06],
        &[],
        TESTBED_PAD_RADIUS_M,
        TESTBED_SUCTION_N,
        TESTBED_PULL_OFF_N,
        TESTBED_FRICTION,
    )
}

/// Testbed layout with the two cup rows tilted 0.35 rad toward each other.
/// Tilting couples normal and tangential loads, which makes every weight
/// observable from wrench data. Flat layouts only fix the ratio of the z
/// weights.
pub fn tilted_six_cup_testbed() -> GripperModel {
    let mut cups = Vec::new();
    for y in [-0.05, 0.05] {
        for x in [-0.1, 0.0, 0.1] {
            let tilt: f64 = if y < 0.0 { 0.35 } else { -0.35 };
            let normal = Vector3::new(0.0, tilt.sin(), tilt.cos());
            let cup = SuctionCup::from_position_normal(Vector3::new(x, y, 0.0), normal, TESTBED_PAD_RADIUS_M, TESTBED_SUCTION_N)
                .expect("preset cup is valid")
                .with_pull_off_force(Some(TESTBED_PULL_OFF_N));
            cups.push(cup);
        }
    }
    GripperModel::new(cups, TESTBED_FRICTION, StiffnessWeights::fitted()).expect("preset gripper is valid")
}

/// Yaw base and three pitch joints. The tool z axis points down at `q = 0`
/// and stays down while the pitch angles sum to zero.
pub fn arm4_chain() -> KinematicChain {
    let joint = |axis: Vector3<f64>, offset: Vector3<f64>| {
        RevoluteJoint::new(axis, Vector3::zeros(), RigidTransform::from_translation(offset)).expect("preset joint")
    };
    KinematicChain::new(
        vec![
            joint(Vector3::z(), Vector3::zeros()),
            joint(Vector3::y(), Vector3::new(0.0, 0.0, 0.4)),
            joint(Vector3::y(), Vector3::new(0.45, 0.0, 0.0)),
            joint(Vector3::y(), Vector3::new(0.4, 0.0, 0.0)),
        ],
        RigidTransform::from_axis_angle(&Vector3::x(), PI, Vector3::new(0.12, 0.0, 0.0)),
    )
    .expect("preset chain")
}

const YAW: [f64; 5] = [-0.8, -0.35, 0.1, 0.55, 0.9];
const SHOULDER: [f64; 5] = [0.3, 0.15, 0.0, -0.1, 0.2];
const ELBOW: [f64; 5] = [0.9, 1.1, 1.3, 1.0, 0.7];

fn arm4_path(pitch_sum: f64) -> PathSpec {
    let knots = (0..5)
        .map(|i| DVector::from_vec(vec![YAW[i], SHOULDER[i], ELBOW[i], pitch_sum - SHOULDER[i] - ELBOW[i]]))
        .collect();
    PathSpec::uniform(knots).expect("preset path")
}

/// Swing with the tool z axis pointing down throughout.
pub fn top_down_path() -> PathSpec {
    arm4_path(0.0)
}

/// Same swing with the tool z axis horizontal, so gravity is tangential to
/// the pads.
pub fn sideways_path() -> PathSpec {
    arm4_path(FRAC_PI_2)
}

/// Uniform box hanging below the pads, center of mass at half its height.
pub fn box_object(mass: f64, dims: [f64; 3]) -> ObjectModel {
    ObjectModel::uniform_box(mass, Vector3::from(dims), Vector3::new(0.0, 0.0, 0.5 * dims[2])).expect("preset object")
}

/// Joint limits used by the benchmark scenarios.
pub fn arm4_limits() -> KinematicLimits {
    KinematicLimits::uniform(4, Some(4.0), Some(30.0), None)
}

/// Parameters of one benchmark scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkSpec {
    pub name: &'static str,
    pub sideways: bool,
    pub mass_kg: f64,
    pub dims_m: [f64; 3],
}

/// Light and heavy boxes carried top-down and sideways by the 6-cup testbed.
pub const BENCHMARKS: [BenchmarkSpec; 6] = [
    BenchmarkSpec { name: "top-down-light", sideways: false, mass_kg: 2.0, dims_m: [0.3, 0.2, 0.15] },
    BenchmarkSpec { name: "top-down-medium", sideways: false, mass_kg: 20.0, dims_m: [0.4, 0.3, 0.25] },
    BenchmarkSpec { name: "top-down-heavy", sideways: false, mass_kg: 45.0, dims_m: [0.4, 0.3, 0.3] },
    BenchmarkSpec { name: "sideways-light", sideways: true, mass_kg: 2.0, dims_m: [0.3, 0.2, 0.15] },
    BenchmarkSpec { name: "sideways-medium", sideways: true, mass_kg: 10.0, dims_m: [0.4, 0.3, 0.25] },
    BenchmarkSpec { name: "sideways-heavy", sideways: true, mass_kg: 20.0, dims_m: [0.4, 0.3, 0.3] },
];

/// A named benchmark planning problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: &'static str,
    pub sideways: bool,
    pub problem: TotpProblem,
}

pub fn benchmark_scenarios() -> Vec<Scenario> {
    BENCHMARKS
        .iter()
        .map(|b| Scenario {
            name: b.name,
            sideways: b.sideways,
            problem: TotpProblem::new(
                if b.sideways { sideways_path() } else { top_down_path() },
                arm4_chain(),
                box_object(b.mass_kg, b.dims_m),
                six_cup_testbed(),
                arm4_limits(),
                SolverOptions::default(),
            )
            .expect("preset scenario"),
        })
        .collect()
}

/// One vertical-axis joint swinging the tool on a 0.5 m arm, pads facing down.
pub fn single_joint_chain() -> KinematicChain {
    let joint = RevoluteJoint::new(Vector3::z(), Vector3::zeros(), RigidTransform::identity()).expect("preset joint");
    KinematicChain::new(vec![joint], RigidTransform::from_axis_angle(&Vector3::x(), PI, Vector3::new(0.5, 0.0, 0.0)))
        .expect("preset chain")
}

/// Straight joint-space move from 0 to `length` radians.
pub fn single_joint_line(length: f64) -> PathSpec {
    PathSpec::uniform(vec![DVector::from_element(1, 0.0), DVector::from_element(1, length)]).expect("preset path")
}

pub const BANG_BANG_ACC: f64 = 2.0;
pub const BANG_BANG_KNOTS: usize = 1000;

/// Rest-to-rest 1 rad move under an acceleration limit of 2 rad/s², with
/// grasp rows off. The analytic optimum is √2 s.
pub fn bang_bang_scenario() -> TotpProblem {
    TotpProblem::new(
        single_joint_line(1.0),
        single_joint_chain(),
        box_object(0.5, [0.1, 0.1, 0.1]),
        six_cup_testbed(),
        KinematicLimits::uniform(1, None, Some(BANG_BANG_ACC), None),
        SolverOptions {
            n_knots: BANG_BANG_KNOTS,
            grasp_enabled: false,
            ..SolverOptions::default()
        },
    )
    .expect("preset scenario")
}
