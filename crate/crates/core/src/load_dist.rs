//! Minimum spring-energy load distribution across suction cups.
//!
//! Each cup's wrench is carried by four rim point forces. Among all ring
//! force vectors `f` that reproduce the tool wrench (`A f = F_t`) the model
//! picks the one minimising `f^T W f`, whose closed form is
//! `f = W^-1 A^T (A W^-1 A^T)^-1 F_t`.
//!
//! The 6×6 system is assembled cup by cup instead of through the full
//! `6 × 12N` matrix: with `A_c` the ring map and `T_c` the wrench transport of
//! cup `c`, `A W^-1 A^T = sum_c T_c H_c T_c^T` where `H_c = A_c W_c^-1 A_c^T`.

use nalgebra::{DMatrix, DVector, Matrix6, SymmetricEigen, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::gripper::{GripperModel, RingMap};
use crate::lp::{solve_lp, LinearProgram, LpStatus};
use crate::se3::Wrench;

/// Largest admissible condition number of `A W^-1 A^T`.
pub const MAX_CONDITION: f64 = 1e12;

/// Per-cup diagonal weights, repeated over the cup's four ring points.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub per_cup: Vec<Vector3<f64>>,
}

impl WeightMatrix {
    pub fn uniform(num_cups: usize, w: Vector3<f64>) -> Self {
        Self { per_cup: vec![w; num_cups] }
    }

    pub fn validate(&self, num_cups: usize) -> Result<()> {
        if self.per_cup.len() != num_cups {
            return Err(Error::DimensionMismatch {
                expected: num_cups,
                actual: self.per_cup.len(),
            });
        }
        if self.per_cup.iter().flat_map(|w| w.iter()).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput("weights must be positive and finite".into()));
        }
        Ok(())
    }

    /// Diagonal of the full `12N × 12N` weight matrix.
    pub fn diagonal(&self) -> DVector<f64> {
        DVector::from_iterator(
            12 * self.per_cup.len(),
            self.per_cup.iter().flat_map(|w| (0..4).flat_map(move |_| [w.x, w.y, w.z])),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadDistribution {
    pub per_cup_wrench: Vec<Wrench>,
    pub ring_forces: DVector<f64>,
    pub weights_used: WeightMatrix,
    pub compressed_flags: Vec<bool>,
}

impl LoadDistribution {
    /// `f^T W f` with the weights the distribution was solved with.
    pub fn energy(&self) -> f64 {
        weighted_energy(&self.ring_forces, &self.weights_used)
    }

    pub fn l1_norm(&self) -> f64 {
        self.ring_forces.iter().map(|v| v.abs()).sum()
    }

    /// Number of ring-force components above `fraction` of the largest one.
    pub fn support_size(&self, fraction: f64) -> usize {
        support_size(&self.ring_forces, fraction)
    }
}

pub fn weighted_energy(f: &DVector<f64>, w: &WeightMatrix) -> f64 {
    f.iter().zip(w.diagonal().iter()).map(|(f, w)| w * f * f).sum()
}

pub fn support_size(f: &DVector<f64>, fraction: f64) -> usize {
    let max = f.amax();
    if max == 0.0 {
        return 0;
    }
    f.iter().filter(|v| v.abs() > fraction * max).count()
}

/// Cached per-cup geometry for repeated distribution solves on one gripper.
#[derive(Debug, Clone)]
pub struct Distributor {
    ring_maps: Vec<RingMap>,
    transports: Vec<Matrix6<f64>>,
    /// `A_c P_axis A_c^T` for the x, y and z ring-force components.
    axis_grams: Vec<[Matrix6<f64>; 3]>,
}

/// Linear map from tool wrench to per-cup wrenches for fixed weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionOperator {
    /// `F_c = cup_maps[c] * F_t`.
    pub cup_maps: Vec<Matrix6<f64>>,
    /// `(A W^-1 A^T)^-1`.
    pub lambda_map: Matrix6<f64>,
    pub weights: WeightMatrix,
}

impl DistributionOperator {
    pub fn apply(&self, f_t: &Wrench) -> Vec<Wrench> {
        let v = f_t.to_vector();
        self.cup_maps.iter().map(|m| Wrench::from_vector(&(m * v))).collect()
    }

    /// Stacked `6N × 6` matrix.
    pub fn stacked(&self) -> DMatrix<f64> {
        let n = self.cup_maps.len();
        let mut out = DMatrix::zeros(6 * n, 6);
        for (c, m) in self.cup_maps.iter().enumerate() {
            out.view_mut((6 * c, 0), (6, 6)).copy_from(m);
        }
        out
    }
}

impl Distributor {
    pub fn new(gripper: &GripperModel) -> Result<Self> {
        gripper.distribution_matrices()?;
        let mut ring_maps = Vec::new();
        let mut transports = Vec::new();
        let mut axis_grams = Vec::new();
        for cup in gripper.cups() {
            let a = cup.ring_map();
            let mut grams = [Matrix6::zeros(); 3];
            for (axis, g) in grams.iter_mut().enumerate() {
                for j in 0..4 {
                    let col = a.column(3 * j + axis);
                    *g += col * col.transpose();
                }
            }
            ring_maps.push(a);
            transports.push(cup.wrench_transport());
            axis_grams.push(grams);
        }
        Ok(Self {
            ring_maps,
            transports,
            axis_grams,
        })
    }

    pub fn num_cups(&self) -> usize {
        self.ring_maps.len()
    }

    fn cup_gram(&self, c: usize, w: &Vector3<f64>) -> Matrix6<f64> {
        let g = &self.axis_grams[c];
        g[0] / w.x + g[1] / w.y + g[2] / w.z
    }

    /// Cholesky factor of `A W^-1 A^T` after a conditioning check.
    fn factor(&self, weights: &WeightMatrix) -> Result<(Vec<Matrix6<f64>>, nalgebra::Cholesky<f64, nalgebra::U6>)> {
        weights.validate(self.num_cups())?;
        let grams: Vec<Matrix6<f64>> =
            (0..self.num_cups()).map(|c| self.cup_gram(c, &weights.per_cup[c])).collect();
        let mut m = Matrix6::zeros();
        for (t, h) in self.transports.iter().zip(&grams) {
            m += t * h * t.transpose();
        }
        let eig = SymmetricEigen::new(m).eigenvalues;
        let (lo, hi) = (eig.min(), eig.max());
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::SingularSystem { condition });
        }
        let chol = m.cholesky().ok_or(Error::SingularSystem { condition })?;
        Ok((grams, chol))
    }

    pub fn operator(&self, weights: &WeightMatrix) -> Result<DistributionOperator> {
        let (grams, chol) = self.factor(weights)?;
        let lambda_map = chol.inverse();
        let cup_maps = grams
            .iter()
            .zip(&self.transports)
            .map(|(h, t)| h * t.transpose() * lambda_map)
            .collect();
        Ok(DistributionOperator {
            cup_maps,
            lambda_map,
            weights: weights.clone(),
        })
    }

    pub fn solve(&self, f_t: &Wrench, weights: &WeightMatrix) -> Result<LoadDistribution> {
        let (_, chol) = self.factor(weights)?;
        let lambda = chol.solve(&f_t.to_vector());
        let n = self.num_cups();
        let mut ring_forces = DVector::zeros(12 * n);
        let mut per_cup_wrench = Vec::with_capacity(n);
        for c in 0..n {
            let w = &weights.per_cup[c];
            let mu: Vector6<f64> = self.transports[c].transpose() * lambda;
            let f = self.ring_maps[c].transpose() * mu;
            let mut fc = f;
            for j in 0..4 {
                fc[3 * j] /= w.x;
                fc[3 * j + 1] /= w.y;
                fc[3 * j + 2] /= w.z;
            }
            ring_forces.rows_mut(12 * c, 12).copy_from(&fc);
            per_cup_wrench.push(Wrench::from_vector(&(self.ring_maps[c] * fc)));
        }
        Ok(LoadDistribution {
            per_cup_wrench,
            ring_forces,
            weights_used: weights.clone(),
            compressed_flags: vec![false; n],
        })
    }
}

/// Minimum-energy distribution of `f_t` for explicit weights.
pub fn solve_distribution(f_t: &Wrench, gripper: &GripperModel, weights: &WeightMatrix) -> Result<LoadDistribution> {
    Distributor::new(gripper)?.solve(f_t, weights)
}

/// Weights for a given set of compression flags.
pub fn flagged_weights(gripper: &GripperModel, flags: &[bool]) -> WeightMatrix {
    let w = gripper.weights();
    WeightMatrix {
        per_cup: flags.iter().map(|&f| if f { w.compressed } else { w.normal }).collect(),
    }
}

/// Solves with normal weights, switches cups past the compression threshold
/// to compressed weights and solves once more.
pub fn distribute_with_adjustment(f_t: &Wrench, gripper: &GripperModel) -> Result<LoadDistribution> {
    adjust_with(&Distributor::new(gripper)?, f_t, gripper)
}

pub(crate) fn adjust_with(d: &Distributor, f_t: &Wrench, gripper: &GripperModel) -> Result<LoadDistribution> {
    let n = gripper.num_cups();
    let normal = WeightMatrix::uniform(n, gripper.weights().normal);
    let first = d.solve(f_t, &normal)?;
    let flags: Vec<bool> = first.per_cup_wrench.iter().map(|w| gripper.weights().is_compressed(w)).collect();
    if !flags.iter().any(|f| *f) {
        return Ok(first);
    }
    let mut second = d.solve(f_t, &flagged_weights(gripper, &flags))?;
    second.compressed_flags = flags;
    Ok(second)
}

/// Minimum L1 ring-force distribution, solved as a linear program over
/// `[f, s]` with `A f = F_t` and `|f| <= s`.
pub fn solve_lp_distribution(f_t: &Wrench, gripper: &GripperModel) -> Result<LoadDistribution> {
    let mats = gripper.distribution_matrices()?;
    let k = mats.a.ncols();
    let mut c = DVector::zeros(2 * k);
    c.rows_mut(k, k).fill(1.0);
    let mut eq = DMatrix::zeros(6, 2 * k);
    eq.view_mut((0, 0), (6, k)).copy_from(&mats.a);
    let mut ineq = DMatrix::zeros(2 * k, 2 * k);
    for i in 0..k {
        ineq[(i, i)] = -1.0;
        ineq[(i, k + i)] = -1.0;
        ineq[(k + i, i)] = 1.0;
        ineq[(k + i, k + i)] = -1.0;
    }
    let mut bounds = vec![(None, None); k];
    bounds.extend(std::iter::repeat_n((Some(0.0), None), k));
    let lp = LinearProgram::new(c)
        .with_inequalities(ineq, DVector::zeros(2 * k))
        .with_equalities(eq, f_t.to_vector().as_slice().to_vec().into())
        .with_bounds(bounds);
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(Error::LpInfeasible {
                context: Some("L1 distribution".into()),
            })
        }
        LpStatus::Unbounded => return Err(Error::LpUnbounded),
    }
    let ring_forces = sol.x.rows(0, k).into_owned();
    let stacked = &mats.a_s * &ring_forces;
    let n = gripper.num_cups();
    let per_cup_wrench = (0..n)
        .map(|c| Wrench::from_vector(&Vector6::from_iterator(stacked.rows(6 * c, 6).iter().copied())))
        .collect();
    Ok(LoadDistribution {
        per_cup_wrench,
        ring_forces,
        weights_used: WeightMatrix::uniform(n, Vector3::repeat(1.0)),
        compressed_flags: vec![false; n],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gripper::{StiffnessWeights, SuctionCup};
    use crate::se3::RigidTransform;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> GripperModel {
        let mut cups = Vec::new();
        for y in [0.05, -0.05] {
            for x in [-0.1, 0.0, 0.1] {
                cups.push(SuctionCup::from_position_normal(Vector3::new(x, y, 0.0), Vector3::z(), 0.03, 118.6).unwrap());
            }
        }
        GripperModel::new(cups, 0.7, StiffnessWeights::fitted()).unwrap()
    }

    fn random_wrench(rng: &mut ChaCha8Rng) -> Wrench {
        let v: Vec<f64> = (0..6).map(|i| rng.gen_range(-1.0..1.0) * if i < 3 { 10.0 } else { 100.0 }).collect();
        Wrench::from_slice(&v).unwrap()
    }

    fn kkt_solution(g: &GripperModel, w: &WeightMatrix, f_t: &Wrench) -> DVector<f64> {
        let a = g.distribution_matrices().unwrap().a;
        let k = a.ncols();
        let mut kkt = DMatrix::zeros(k + 6, k + 6);
        kkt.view_mut((0, 0), (k, k)).copy_from(&DMatrix::from_diagonal(&w.diagonal()));
        kkt.view_mut((0, k), (k, 6)).copy_from(&a.transpose());
        kkt.view_mut((k, 0), (6, k)).copy_from(&a);
        let mut rhs = DVector::zeros(k + 6);
        rhs.rows_mut(k, 6).copy_from(&f_t.to_vector());
        kkt.lu().solve(&rhs).unwrap().rows(0, k).into_owned()
    }

    #[test]
    fn single_cup_takes_the_whole_wrench() {
        let cup = SuctionCup::new(RigidTransform::identity(), 0.03, 100.0).unwrap();
        let g = GripperModel::new(vec![cup], 0.5, StiffnessWeights::fitted()).unwrap();
        let f = Wrench::from_slice(&[0.0, 0.0, 0.3, 4.0, -2.0, -50.0]).unwrap();
        let d = solve_distribution(&f, &g, &WeightMatrix::uniform(1, Vector3::new(1.0, 1.0, 2.0))).unwrap();
        assert!((d.per_cup_wrench[0].to_vector() - f.to_vector()).amax() < 1e-12);
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        let cups = vec![
            SuctionCup::from_position_normal(Vector3::new(0.1, 0.0, 0.0), Vector3::z(), 0.03, 100.0).unwrap(),
            SuctionCup::from_position_normal(Vector3::new(-0.1, 0.0, 0.0), Vector3::z(), 0.03, 100.0).unwrap(),
        ];
        let g = GripperModel::new(cups, 0.5, StiffnessWeights::fitted()).unwrap();
        let f = Wrench::from_slice(&[0.0, 0.0, 0.0, 0.0, 0.0, -100.0]).unwrap();
        let d = solve_distribution(&f, &g, &WeightMatrix::uniform(2, Vector3::repeat(1.0))).unwrap();
        for w in &d.per_cup_wrench {
            assert!((w.force.z + 50.0).abs() < 1e-10);
            assert!(w.force.x.abs() < 1e-12 && w.force.y.abs() < 1e-12);
        }
    }

    #[test]
    fn grid_matches_kkt_oracle() {
        let g = grid();
        let w = WeightMatrix::uniform(6, StiffnessWeights::fitted().normal);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let f = random_wrench(&mut rng);
            let d = solve_distribution(&f, &g, &w).unwrap();
            let oracle = kkt_solution(&g, &w, &f);
            assert!((&d.ring_forces - &oracle).norm() <= 1e-9 * oracle.norm());
        }
    }

    #[test]
    fn ring_forces_reproduce_wrenches() {
        let g = grid();
        let mats = g.distribution_matrices().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let f = random_wrench(&mut rng);
        let w = WeightMatrix { per_cup: (0..6).map(|i| Vector3::new(1.0, 1.0 + i as f64, 0.5)).collect() };
        let d = solve_distribution(&f, &g, &w).unwrap();
        let stacked = &mats.a_s * &d.ring_forces;
        for (c, wc) in d.per_cup_wrench.iter().enumerate() {
            assert!((stacked.rows(6 * c, 6) - wc.to_vector()).amax() < 1e-10);
        }
        assert!((&mats.a * &d.ring_forces - f.to_vector()).norm() < 1e-9 * (1.0 + f.to_vector().norm()));
    }

    #[test]
    fn operator_matches_direct_solve() {
        let g = grid();
        let dist = Distributor::new(&g).unwrap();
        let w = WeightMatrix::uniform(6, StiffnessWeights::fitted().normal);
        let op = dist.operator(&w).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..10 {
            let f = random_wrench(&mut rng);
            let direct = dist.solve(&f, &w).unwrap();
            for (a, b) in op.apply(&f).iter().zip(&direct.per_cup_wrench) {
                assert!((a.to_vector() - b.to_vector()).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn extreme_weights_are_singular() {
        let g = grid();
        let mut per_cup = vec![Vector3::repeat(1.0); 6];
        for w in per_cup.iter_mut() {
            w.x = 1e14;
            w.y = 1e14;
        }
        let err = solve_distribution(&Wrench::zero(), &g, &WeightMatrix { per_cup }).unwrap_err();
        assert!(matches!(err, Error::SingularSystem { .. }));
    }

    #[test]
    fn light_load_is_not_adjusted() {
        let g = grid();
        let f = Wrench::from_slice(&[0.0, 0.0, 0.0, 0.0, 0.0, -20.0]).unwrap();
        let adjusted = distribute_with_adjustment(&f, &g).unwrap();
        let plain = solve_distribution(&f, &g, &WeightMatrix::uniform(6, g.weights().normal)).unwrap();
        assert_eq!(adjusted, plain);
        assert!(adjusted.compressed_flags.iter().all(|f| !f));
    }

    #[test]
    fn pressing_load_shifts_toward_flagged_cups() {
        let g = grid();
        // Press hard with a tilt so the +x column bottoms out first.
        let f = Wrench::from_slice(&[0.0, -40.0, 0.0, 0.0, 0.0, 450.0]).unwrap();
        let plain = solve_distribution(&f, &g, &WeightMatrix::uniform(6, g.weights().normal)).unwrap();
        let adjusted = distribute_with_adjustment(&f, &g).unwrap();
        let flagged: Vec<usize> = (0..6).filter(|&c| adjusted.compressed_flags[c]).collect();
        assert!(!flagged.is_empty() && flagged.len() < 6);
        for c in 0..6 {
            let expected = if adjusted.compressed_flags[c] { g.weights().compressed } else { g.weights().normal };
            assert_eq!(adjusted.weights_used.per_cup[c], expected);
        }
        assert!(flagged.iter().any(|&c| {
            adjusted.per_cup_wrench[c].force.z.abs() > plain.per_cup_wrench[c].force.z.abs()
        }));
    }

    #[test]
    fn all_flagged_equals_uniform_compressed() {
        let g = grid();
        let f = Wrench::from_slice(&[0.0, 0.0, 0.0, 0.0, 0.0, 900.0]).unwrap();
        let adjusted = distribute_with_adjustment(&f, &g).unwrap();
        assert!(adjusted.compressed_flags.iter().all(|f| *f));
        let uniform = solve_distribution(&f, &g, &WeightMatrix::uniform(6, g.weights().compressed)).unwrap();
        assert!((adjusted.ring_forces - uniform.ring_forces).amax() < 1e-12);
    }

    #[test]
    fn lp_single_cup_agrees_with_qp_wrench() {
        let cup = SuctionCup::new(RigidTransform::identity(), 0.03, 100.0).unwrap();
        let g = GripperModel::new(vec![cup], 0.5, StiffnessWeights::fitted()).unwrap();
        let f = Wrench::from_slice(&[0.1, -0.2, 0.0, 3.0, 1.0, -40.0]).unwrap();
        let lp = solve_lp_distribution(&f, &g).unwrap();
        assert!((lp.per_cup_wrench[0].to_vector() - f.to_vector()).amax() < 1e-8);
    }

    #[test]
    fn lp_symmetric_pair_objective_is_forced() {
        let cups = vec![
            SuctionCup::from_position_normal(Vector3::new(0.1, 0.0, 0.0), Vector3::z(), 0.03, 100.0).unwrap(),
            SuctionCup::from_position_normal(Vector3::new(-0.1, 0.0, 0.0), Vector3::z(), 0.03, 100.0).unwrap(),
        ];
        let g = GripperModel::new(cups, 0.5, StiffnessWeights::fitted()).unwrap();
        let f = Wrench::from_slice(&[0.0, 0.0, 0.0, 0.0, 0.0, -100.0]).unwrap();
        let lp = solve_lp_distribution(&f, &g).unwrap();
        assert!((lp.l1_norm() - 100.0).abs() < 1e-8);
        let mats = g.distribution_matrices().unwrap();
        assert!((&mats.a * &lp.ring_forces - f.to_vector()).amax() < 1e-8);
    }

    #[test]
    fn lp_concentrates_and_qp_spreads() {
        let g = grid();
        let f = Wrench::from_slice(&[3.0, -2.0, 0.5, 10.0, 5.0, -120.0]).unwrap();
        let w = WeightMatrix::uniform(6, Vector3::repeat(1.0));
        let qp = solve_distribution(&f, &g, &w).unwrap();
        let lp = solve_lp_distribution(&f, &g).unwrap();
        assert!(lp.support_size(0.01) <= qp.support_size(0.01));
        assert!(lp.l1_norm() <= qp.l1_norm() + 1e-9);
        assert!(qp.energy() <= weighted_energy(&lp.ring_forces, &w) + 1e-9);
    }
}
