//! Multi-cup gripper geometry and constant failure-constraint matrices.
//!
//! Per-cup wrenches `F_i` are the wrench applied by cup `i` to the object,
//! expressed in the cup frame whose z axis points from the gripper into the
//! object. A positive `f_z` presses the cup onto the object and a negative
//! one pulls it away.

use nalgebra::{DMatrix, DVector, Matrix6, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::{skew, RigidTransform, Wrench};

/// Angle beyond which a cup normal no longer counts as parallel to tool z.
pub const PLANAR_TOL_RAD: f64 = 1e-6;

pub type RingMap = SMatrix<f64, 6, 12>;
pub type SlippageMatrix = SMatrix<f64, 12, 6>;

/// One suction cup, modeled as four point contacts on its pad rim.
#[derive(Debug, Clone, PartialEq)]
pub struct SuctionCup {
    pose_in_tool: RigidTransform,
    pad_radius: f64,
    suction_force: f64,
    pull_off_force: Option<f64>,
}

impl SuctionCup {
    pub fn new(pose_in_tool: RigidTransform, pad_radius: f64, suction_force: f64) -> Result<Self> {
        if !(pad_radius > 0.0 && pad_radius.is_finite()) {
            return Err(Error::InvalidInput(format!("pad radius must be positive, got {pad_radius}")));
        }
        if !(suction_force >= 0.0 && suction_force.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "suction force must be non-negative, got {suction_force}"
            )));
        }
        Ok(Self {
            pose_in_tool,
            pad_radius,
            suction_force,
            pull_off_force: None,
        })
    }

    /// Places a cup at `position` with its normal along `z_axis`. The cup x
    /// axis is tool x projected off the normal (tool y if they are parallel).
    pub fn from_position_normal(
        position: Vector3<f64>,
        z_axis: Vector3<f64>,
        pad_radius: f64,
        suction_force: f64,
    ) -> Result<Self> {
        let n = z_axis.norm();
        if !(n > 1e-12 && n.is_finite()) {
            return Err(Error::InvalidInput("cup z_axis must be a non-zero vector".into()));
        }
        let z = z_axis / n;
        let mut x = Vector3::x() - z * z.x;
        if x.norm() < 1e-6 {
            x = Vector3::y() - z * z.y;
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let rotation = nalgebra::Matrix3::from_columns(&[x, y, z]);
        Self::new(RigidTransform::new(rotation, position)?, pad_radius, suction_force)
    }

    pub fn with_pull_off_force(mut self, force: Option<f64>) -> Self {
        self.pull_off_force = force;
        self
    }

    pub fn pose_in_tool(&self) -> &RigidTransform {
        &self.pose_in_tool
    }

    pub fn pad_radius(&self) -> f64 {
        self.pad_radius
    }

    pub fn suction_force(&self) -> f64 {
        self.suction_force
    }

    pub fn pull_off_force(&self) -> Option<f64> {
        self.pull_off_force
    }

    pub fn position(&self) -> Vector3<f64> {
        *self.pose_in_tool.translation()
    }

    /// Rim points at 0°, 90°, 180° and 270° in the cup frame.
    pub fn ring_points(&self) -> [Vector3<f64>; 4] {
        let r = self.pad_radius;
        [
            Vector3::new(r, 0.0, 0.0),
            Vector3::new(0.0, r, 0.0),
            Vector3::new(-r, 0.0, 0.0),
            Vector3::new(0.0, -r, 0.0),
        ]
    }

    /// Maps the four stacked ring forces to the cup wrench.
    pub fn ring_map(&self) -> RingMap {
        let mut a = RingMap::zeros();
        for (j, p) in self.ring_points().iter().enumerate() {
            a.fixed_view_mut::<3, 3>(0, 3 * j).copy_from(&skew(p));
            a.fixed_view_mut::<3, 3>(3, 3 * j).copy_from(&nalgebra::Matrix3::identity());
        }
        a
    }

    /// Transport of a cup-frame wrench to the tool frame, `Ad(T_i^t)^T`.
    pub fn wrench_transport(&self) -> Matrix6<f64> {
        self.pose_in_tool.inverse().adjoint().transpose()
    }

    /// Per-cup suction-loss rows `U_s` (5×6) for this pad radius.
    pub fn suction_loss_matrix(&self) -> SMatrix<f64, 5, 6> {
        let r = self.pad_radius;
        SMatrix::<f64, 5, 6>::from_row_slice(&[
            0.0, 0.0, 0.0, 0.0, 0.0, -1.0, //
            1.0, 1.0, 0.0, 0.0, 0.0, -r, //
            1.0, -1.0, 0.0, 0.0, 0.0, -r, //
            -1.0, 1.0, 0.0, 0.0, 0.0, -r, //
            -1.0, -1.0, 0.0, 0.0, 0.0, -r,
        ])
    }

    /// Right-hand side `u_s`, the suction offset folded in.
    pub fn suction_loss_rhs(&self) -> SVector<f64, 5> {
        let psi = self.suction_force;
        let rp = self.pad_radius * psi;
        SVector::<f64, 5>::new(psi, rp, rp, rp, rp)
    }

    fn normal_deviation(&self) -> f64 {
        let z = self.pose_in_tool.rotation().column(2).into_owned();
        z.dot(&Vector3::z()).clamp(-1.0, 1.0).acos()
    }
}

/// Which side of the threshold counts as compressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdDirection {
    GreaterThan,
    #[default]
    LessThan,
}

/// Diagonal stiffness weights for the normal and compressed cup phases.
///
/// The threshold is compared against the sensor-style normal force
/// `s = -f_z`, which is negative when the cup is pressed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StiffnessWeights {
    pub normal: Vector3<f64>,
    pub compressed: Vector3<f64>,
    pub compression_threshold: f64,
    pub threshold_direction: ThresholdDirection,
}

impl StiffnessWeights {
    pub fn new(
        normal: Vector3<f64>,
        compressed: Vector3<f64>,
        compression_threshold: f64,
        threshold_direction: ThresholdDirection,
    ) -> Result<Self> {
        if normal.iter().chain(compressed.iter()).any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput("stiffness weights must be positive".into()));
        }
        if !compression_threshold.is_finite() {
            return Err(Error::InvalidInput("compression threshold must be finite".into()));
        }
        Ok(Self {
            normal,
            compressed,
            compression_threshold,
            threshold_direction,
        })
    }

    /// Fitted testbed weights.
    pub fn fitted() -> Self {
        Self {
            normal: Vector3::new(1.0, 1.0, 2.3682),
            compressed: Vector3::new(0.8369, 0.8369, 0.1321),
            compression_threshold: -47.19,
            threshold_direction: ThresholdDirection::LessThan,
        }
    }

    /// Uniform weights that never flag a cup.
    pub fn uniform() -> Self {
        Self {
            normal: Vector3::repeat(1.0),
            compressed: Vector3::repeat(1.0),
            compression_threshold: f64::NEG_INFINITY,
            threshold_direction: ThresholdDirection::LessThan,
        }
    }

    pub fn is_compressed(&self, cup_wrench: &Wrench) -> bool {
        let s = -cup_wrench.force.z;
        match self.threshold_direction {
            ThresholdDirection::GreaterThan => s > self.compression_threshold,
            ThresholdDirection::LessThan => s < self.compression_threshold,
        }
    }
}

impl Default for StiffnessWeights {
    fn default() -> Self {
        Self::fitted()
    }
}

/// Stacked constant matrices of the ring-force model.
#[derive(Debug, Clone)]
pub struct DistributionMatrices {
    /// Block-diagonal ring maps, 6N×12N.
    pub a_s: DMatrix<f64>,
    /// Stacked cup-to-tool wrench transports, 6×6N.
    pub a_g: DMatrix<f64>,
    /// `a_g * a_s`, 6×12N.
    pub a: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GripperModel {
    cups: Vec<SuctionCup>,
    friction: f64,
    weights: StiffnessWeights,
    polygon_extent_x: f64,
    polygon_extent_y: f64,
}

impl GripperModel {
    pub fn new(cups: Vec<SuctionCup>, friction: f64, weights: StiffnessWeights) -> Result<Self> {
        if cups.is_empty() {
            return Err(Error::InvalidInput("gripper needs at least one cup".into()));
        }
        if !(friction > 0.0 && friction.is_finite()) {
            return Err(Error::InvalidInput(format!("friction must be positive, got {friction}")));
        }
        let polygon_extent_x = cups.iter().map(|c| c.position().x.abs()).fold(0.0, f64::max);
        let polygon_extent_y = cups.iter().map(|c| c.position().y.abs()).fold(0.0, f64::max);
        Ok(Self {
            cups,
            friction,
            weights,
            polygon_extent_x,
            polygon_extent_y,
        })
    }

    pub fn cups(&self) -> &[SuctionCup] {
        &self.cups
    }

    pub fn num_cups(&self) -> usize {
        self.cups.len()
    }

    pub fn friction(&self) -> f64 {
        self.friction
    }

    pub fn weights(&self) -> &StiffnessWeights {
        &self.weights
    }

    pub fn with_weights(&self, weights: StiffnessWeights) -> Self {
        Self {
            weights,
            ..self.clone()
        }
    }

    pub fn polygon_extent_x(&self) -> f64 {
        self.polygon_extent_x
    }

    pub fn polygon_extent_y(&self) -> f64 {
        self.polygon_extent_y
    }

    /// Returns a copy with every cup's suction force replaced.
    pub fn with_suction_force(&self, psi: f64) -> Result<Self> {
        let cups = self
            .cups
            .iter()
            .map(|c| {
                SuctionCup::new(c.pose_in_tool, c.pad_radius, psi).map(|n| n.with_pull_off_force(c.pull_off_force))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(cups, self.friction, self.weights)
    }

    pub fn is_planar(&self) -> bool {
        self.cups.iter().all(|c| c.normal_deviation() <= PLANAR_TOL_RAD)
    }

    pub fn distribution_matrices(&self) -> Result<DistributionMatrices> {
        let n = self.cups.len();
        let mut a_s = DMatrix::zeros(6 * n, 12 * n);
        let mut a_g = DMatrix::zeros(6, 6 * n);
        for (i, cup) in self.cups.iter().enumerate() {
            a_s.view_mut((6 * i, 12 * i), (6, 12)).copy_from(&cup.ring_map());
            a_g.view_mut((0, 6 * i), (6, 6)).copy_from(&cup.wrench_transport());
        }
        let a = &a_g * &a_s;
        let rank = a.clone().svd(false, false).rank(1e-9 * a.amax().max(1.0));
        if rank < 6 {
            return Err(Error::DegenerateGripper { rank });
        }
        Ok(DistributionMatrices { a_s, a_g, a })
    }

    /// Stacked suction-loss test `U_bar * F_bar <= u_bar`.
    pub fn suction_loss_blocks(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.cups.len();
        let mut u = DMatrix::zeros(5 * n, 6 * n);
        let mut rhs = DVector::zeros(5 * n);
        for (i, cup) in self.cups.iter().enumerate() {
            u.view_mut((5 * i, 6 * i), (5, 6)).copy_from(&cup.suction_loss_matrix());
            rhs.rows_mut(5 * i, 5).copy_from(&cup.suction_loss_rhs());
        }
        (u, rhs)
    }

    /// Gripper-level slippage test `U_t * F_t <= u_t`. Only defined when all
    /// cup normals are parallel to tool z.
    pub fn slippage_block(&self) -> Result<(SlippageMatrix, SVector<f64, 12>)> {
        for (cup, c) in self.cups.iter().enumerate() {
            let angle_rad = c.normal_deviation();
            if angle_rad > PLANAR_TOL_RAD {
                return Err(Error::NonPlanarGripper { cup, angle_rad });
            }
        }
        let mu = self.friction;
        let (x, y) = (self.polygon_extent_x, self.polygon_extent_y);
        let t = -mu * (x + y);
        #[rustfmt::skip]
        let u = SlippageMatrix::from_row_slice(&[
            0.0, 0.0, 0.0, 1.0, 1.0, -mu,
            0.0, 0.0, 0.0, 1.0, -1.0, -mu,
            0.0, 0.0, 0.0, -1.0, 1.0, -mu,
            0.0, 0.0, 0.0, -1.0, -1.0, -mu,
            mu, mu, -1.0, -y, -x, t,
            mu, -mu, -1.0, -y, x, t,
            -mu, mu, -1.0, y, -x, t,
            -mu, -mu, -1.0, y, x, t,
            mu, mu, -1.0, y, x, t,
            mu, -mu, -1.0, y, -x, t,
            -mu, mu, -1.0, -y, x, t,
            -mu, -mu, -1.0, -y, -x, t,
        ]);
        let rhs = -(u * self.total_suction_wrench().to_vector());
        Ok((u, rhs))
    }

    /// Sum of the per-cup suction wrenches in the tool frame.
    pub fn total_suction_wrench(&self) -> Wrench {
        let mut total = Wrench::zero();
        for cup in &self.cups {
            let w = Wrench::new(Vector3::zeros(), Vector3::new(0.0, 0.0, cup.suction_force));
            let t = w.expressed_in_parent(&cup.pose_in_tool);
            total.moment += t.moment;
            total.force += t.force;
        }
        total
    }

    /// Tool-frame wrench produced by per-cup wrenches.
    pub fn total_wrench(&self, per_cup: &[Wrench]) -> Wrench {
        let mut total = Wrench::zero();
        for (cup, w) in self.cups.iter().zip(per_cup) {
            let t = w.expressed_in_parent(&cup.pose_in_tool);
            total.moment += t.moment;
            total.force += t.force;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_gripper(psi: &[f64]) -> GripperModel {
        let xs = [-0.1, 0.0, 0.1];
        let ys = [0.05, -0.05];
        let mut cups = Vec::new();
        for (row, y) in ys.iter().enumerate() {
            for (col, x) in xs.iter().enumerate() {
                let p = Vector3::new(*x, *y, 0.0);
                cups.push(SuctionCup::from_position_normal(p, Vector3::z(), 0.03, psi[row * 3 + col]).unwrap());
            }
        }
        GripperModel::new(cups, 0.7, StiffnessWeights::fitted()).unwrap()
    }

    fn random_wrench(rng: &mut ChaCha8Rng, scale: f64) -> Wrench {
        let mut v = [0.0; 6];
        for e in v.iter_mut() {
            *e = rng.gen_range(-scale..scale);
        }
        Wrench::from_slice(&v).unwrap()
    }

    #[test]
    fn symmetric_ring_cancels_moments() {
        let cup = SuctionCup::new(RigidTransform::identity(), 0.03, 100.0).unwrap();
        let f = [1.5, -2.0, 7.0];
        let rings: Vec<f64> = (0..4).flat_map(|_| f).collect();
        let w = cup.ring_map() * SVector::<f64, 12>::from_column_slice(&rings);
        assert!(w.fixed_rows::<3>(0).abs().max() < 1e-15);
        assert!((w[3] - 6.0).abs() < 1e-15 && (w[4] + 8.0).abs() < 1e-15 && (w[5] - 28.0).abs() < 1e-15);
    }

    #[test]
    fn single_ring_force_moment_matches_cross_product() {
        let cup = SuctionCup::new(RigidTransform::identity(), 0.03, 100.0).unwrap();
        let mut rings = SVector::<f64, 12>::zeros();
        rings[2] = 10.0;
        let w = cup.ring_map() * rings;
        let expected = Vector3::new(0.03, 0.0, 0.0).cross(&Vector3::new(0.0, 0.0, 10.0));
        assert!((w.fixed_rows::<3>(0) - expected).abs().max() < 1e-15);
        assert!((w[1] + 0.3).abs() < 1e-15);
    }

    #[test]
    fn ring_points_for_sixty_mm_pad() {
        let cup = SuctionCup::new(RigidTransform::identity(), 0.03, 118.6).unwrap();
        let pts = cup.ring_points();
        assert_eq!(pts[0], Vector3::new(0.03, 0.0, 0.0));
        assert_eq!(pts[1], Vector3::new(0.0, 0.03, 0.0));
        assert_eq!(pts[2], Vector3::new(-0.03, 0.0, 0.0));
        assert_eq!(pts[3], Vector3::new(0.0, -0.03, 0.0));
    }

    #[test]
    fn single_cup_at_origin_has_identity_transport() {
        let cup = SuctionCup::new(RigidTransform::identity(), 0.03, 100.0).unwrap();
        let g = GripperModel::new(vec![cup.clone()], 0.5, StiffnessWeights::fitted()).unwrap();
        let m = g.distribution_matrices().unwrap();
        assert_eq!(m.a_g, DMatrix::<f64>::identity(6, 6));
        assert!((m.a - DMatrix::from_column_slice(6, 12, cup.ring_map().as_slice())).amax() < 1e-15);
    }

    #[test]
    fn symmetric_cups_cancel_tilt_moments() {
        let cups = vec![
            SuctionCup::from_position_normal(Vector3::new(0.1, 0.0, 0.0), Vector3::z(), 0.03, 100.0).unwrap(),
            SuctionCup::from_position_normal(Vector3::new(-0.1, 0.0, 0.0), Vector3::z(), 0.03, 100.0).unwrap(),
        ];
        let g = GripperModel::new(cups, 0.5, StiffnessWeights::fitted()).unwrap();
        let m = g.distribution_matrices().unwrap();
        let f = DVector::from_fn(24, |i, _| if i % 3 == 2 { -5.0 } else { 0.0 });
        let w = &m.a * f;
        assert!(w[0].abs() < 1e-14 && w[1].abs() < 1e-14);
        assert!((w[5] + 40.0).abs() < 1e-12);
    }

    #[test]
    fn grid_matrix_matches_per_force_transport() {
        let g = grid_gripper(&[118.6; 6]);
        let m = g.distribution_matrices().unwrap();
        for (i, cup) in g.cups().iter().enumerate() {
            let pose = cup.pose_in_tool();
            for (j, p) in cup.ring_points().iter().enumerate() {
                for axis in 0..3 {
                    let mut f = Vector3::zeros();
                    f[axis] = 1.0;
                    let f_tool = pose.transform_vector(&f);
                    let point_tool = pose.transform_point(p);
                    let expected = Wrench::new(point_tool.cross(&f_tool), f_tool).to_vector();
                    let col = m.a.column(12 * i + 3 * j + axis);
                    assert!((col - expected).abs().max() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_wrench_suction_margins() {
        let cup = SuctionCup::new(RigidTransform::identity(), 0.03, 118.6).unwrap();
        let margins = cup.suction_loss_rhs() - cup.suction_loss_matrix() * Wrench::zero().to_vector();
        assert!((margins[0] - 118.6).abs() < 1e-12);
        for k in 1..5 {
            assert!((margins[k] - 3.558).abs() < 1e-12);
        }
    }

    #[test]
    fn pull_beyond_suction_violates_first_row_by_one_newton() {
        let psi = 118.6;
        let cup = SuctionCup::new(RigidTransform::identity(), 0.03, psi).unwrap();
        let pull = Wrench::new(Vector3::zeros(), Vector3::new(0.0, 0.0, -(psi + 1.0)));
        let slack = cup.suction_loss_rhs()[0] - (cup.suction_loss_matrix() * pull.to_vector())[0];
        assert!((slack + 1.0).abs() < 1e-12);
    }

    #[test]
    fn stacked_suction_test_matches_printed_form() {
        let g = grid_gripper(&[118.6, 100.0, 90.0, 118.6, 80.0, 120.0]);
        let (u, rhs) = g.suction_loss_blocks();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let cups: Vec<Wrench> = (0..6).map(|_| random_wrench(&mut rng, 50.0)).collect();
            let stacked = DVector::from_iterator(36, cups.iter().flat_map(|w| w.to_vector().iter().copied().collect::<Vec<_>>()));
            let block = &u * &stacked - &rhs;
            for (i, (w, cup)) in cups.iter().zip(g.cups()).enumerate() {
                let r = cup.pad_radius();
                let (mx, my, fz) = (w.moment.x, w.moment.y, w.force.z + cup.suction_force());
                let direct = [
                    -fz,
                    mx + my - r * fz,
                    mx - my - r * fz,
                    -mx + my - r * fz,
                    -mx - my - r * fz,
                ];
                for k in 0..5 {
                    assert!((block[5 * i + k] - direct[k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn slippage_margins_at_rest() {
        let g = grid_gripper(&[145.0; 6]);
        let (u, rhs) = g.slippage_block().unwrap();
        let margins = rhs - u * Wrench::zero().to_vector();
        for k in 0..4 {
            assert!((margins[k] - 0.7 * 6.0 * 145.0).abs() < 1e-9);
        }
    }

    #[test]
    fn tangential_force_at_cone_boundary_is_active() {
        let g = grid_gripper(&[145.0; 6]);
        let (u, rhs) = g.slippage_block().unwrap();
        let limit = 0.7 * 6.0 * 145.0;
        let w = Wrench::new(Vector3::zeros(), Vector3::new(limit, 0.0, 0.0));
        let margins = rhs - u * w.to_vector();
        assert!(margins[0].abs() < 1e-9 && margins[1].abs() < 1e-9);
    }

    #[test]
    fn slippage_block_matches_direct_rows() {
        let g = grid_gripper(&[145.0, 120.0, 110.0, 145.0, 100.0, 90.0]);
        let (u, rhs) = g.slippage_block().unwrap();
        let psi = g.total_suction_wrench();
        let (mu, x, y) = (0.7, g.polygon_extent_x(), g.polygon_extent_y());
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let w = random_wrench(&mut rng, 100.0);
            let v = w.to_vector() + psi.to_vector();
            let (mx, my, mz, fx, fy, fz) = (v[0], v[1], v[2], v[3], v[4], v[5]);
            let t = mu * (x + y) * fz;
            let direct = [
                fx + fy - mu * fz,
                fx - fy - mu * fz,
                -fx + fy - mu * fz,
                -fx - fy - mu * fz,
                mu * mx + mu * my - mz - y * fx - x * fy - t,
                mu * mx - mu * my - mz - y * fx + x * fy - t,
                -mu * mx + mu * my - mz + y * fx - x * fy - t,
                -mu * mx - mu * my - mz + y * fx + x * fy - t,
                mu * mx + mu * my - mz + y * fx + x * fy - t,
                mu * mx - mu * my - mz + y * fx - x * fy - t,
                -mu * mx + mu * my - mz - y * fx + x * fy - t,
                -mu * mx - mu * my - mz - y * fx - x * fy - t,
            ];
            let block = u * w.to_vector() - rhs;
            for k in 0..12 {
                assert!((block[k] - direct[k]).abs() < 1e-12 * (1.0 + direct[k].abs()));
            }
        }
    }

    #[test]
    fn tilted_cup_is_rejected_for_slippage() {
        let cups = vec![
            SuctionCup::from_position_normal(Vector3::zeros(), Vector3::z(), 0.03, 100.0).unwrap(),
            SuctionCup::from_position_normal(Vector3::x(), Vector3::new(0.0, 0.01, 1.0), 0.03, 100.0).unwrap(),
        ];
        let g = GripperModel::new(cups, 0.5, StiffnessWeights::fitted()).unwrap();
        assert!(!g.is_planar());
        assert!(matches!(g.slippage_block(), Err(Error::NonPlanarGripper { cup: 1, .. })));
    }

    #[test]
    fn total_suction_wrench_cases() {
        let single = GripperModel::new(
            vec![SuctionCup::new(RigidTransform::identity(), 0.03, 100.0).unwrap()],
            0.5,
            StiffnessWeights::fitted(),
        )
        .unwrap();
        assert_eq!(single.total_suction_wrench().to_vector(), Wrench::new(Vector3::zeros(), Vector3::new(0.0, 0.0, 100.0)).to_vector());

        let pair = GripperModel::new(
            vec![
                SuctionCup::from_position_normal(Vector3::new(0.2, 0.0, 0.0), Vector3::z(), 0.03, 80.0).unwrap(),
                SuctionCup::from_position_normal(Vector3::new(-0.2, 0.0, 0.0), Vector3::z(), 0.03, 80.0).unwrap(),
            ],
            0.5,
            StiffnessWeights::fitted(),
        )
        .unwrap();
        assert!(pair.total_suction_wrench().moment.abs().max() < 1e-15);

        let psi = [118.6, 100.0, 90.0, 118.6, 80.0, 120.0];
        let g = grid_gripper(&psi);
        let mut expected = Vector3::zeros();
        let mut force = 0.0;
        for (cup, p) in g.cups().iter().zip(psi) {
            let w = cup.wrench_transport() * Wrench::new(Vector3::zeros(), Vector3::new(0.0, 0.0, p)).to_vector();
            expected += w.fixed_rows::<3>(0);
            force += w[5];
        }
        let total = g.total_suction_wrench();
        assert!((total.moment - expected).abs().max() < 1e-12);
        assert!((total.force.z - force).abs() < 1e-12);
        assert!((total.force.z - psi.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn extents_track_cup_centers() {
        let g = grid_gripper(&[100.0; 6]);
        assert!((g.polygon_extent_x() - 0.1).abs() < 1e-15);
        assert!((g.polygon_extent_y() - 0.05).abs() < 1e-15);
        let mut cups = g.cups().to_vec();
        cups.push(SuctionCup::from_position_normal(Vector3::new(0.2, 0.0, 0.0), Vector3::z(), 0.03, 100.0).unwrap());
        let bigger = GripperModel::new(cups, 0.7, StiffnessWeights::fitted()).unwrap();
        assert!(bigger.polygon_extent_x() >= g.polygon_extent_x());
        assert!(bigger.polygon_extent_y() >= g.polygon_extent_y());
    }

    #[test]
    fn quarter_turn_layout_keeps_friction_rows() {
        let g = grid_gripper(&[100.0; 6]);
        let turned: Vec<SuctionCup> = g
            .cups()
            .iter()
            .map(|c| {
                let p = c.position();
                SuctionCup::from_position_normal(Vector3::new(-p.y, p.x, p.z), Vector3::z(), 0.03, 100.0).unwrap()
            })
            .collect();
        let h = GripperModel::new(turned, 0.7, StiffnessWeights::fitted()).unwrap();
        let (ug, rg) = g.slippage_block().unwrap();
        let (uh, rh) = h.slippage_block().unwrap();
        assert_eq!(ug.rows(0, 4), uh.rows(0, 4));
        assert!((rg.rows(0, 4) - rh.rows(0, 4)).abs().max() < 1e-12);
    }

    #[test]
    fn every_single_cup_gripper_has_full_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let n = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let cup = SuctionCup::from_position_normal(Vector3::new(0.1, -0.2, 0.05), n, rng.gen_range(0.005..0.05), 50.0).unwrap();
            let g = GripperModel::new(vec![cup], 0.5, StiffnessWeights::fitted()).unwrap();
            assert!(g.distribution_matrices().is_ok());
        }
    }

    #[test]
    fn compression_test_follows_direction() {
        let w = StiffnessWeights::fitted();
        let pressing = Wrench::new(Vector3::zeros(), Vector3::new(0.0, 0.0, 60.0));
        let light = Wrench::new(Vector3::zeros(), Vector3::new(0.0, 0.0, 20.0));
        assert!(w.is_compressed(&pressing));
        assert!(!w.is_compressed(&light));
        let literal = StiffnessWeights {
            threshold_direction: ThresholdDirection::GreaterThan,
            ..w
        };
        assert!(!literal.is_compressed(&pressing));
        assert!(literal.is_compressed(&light));
    }
}
