//! Grasp-failure rows as affine functions of `(s̈, ṡ²)` and their
//! discretized form in consecutive `x_k = ṡ_k²` variables.

use std::collections::HashMap;
use std::fmt;

use nalgebra::{DMatrix, DVector, SMatrix, SVector, Vector6};
use serde::{Deserialize, Serialize};

use crate::dynamics::WrenchAffineForm;
use crate::error::{Error, Result};
use crate::gripper::{GripperModel, SlippageMatrix, StiffnessWeights, ThresholdDirection};
use crate::load_dist::{flagged_weights, Distributor, WeightMatrix};
use crate::par::{try_map_range, Execution};
use crate::se3::Wrench;

/// Stacked `6N × 6` linear map from tool wrench to per-cup wrenches.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionMap {
    pub matrix: DMatrix<f64>,
    pub weights_used: WeightMatrix,
}

impl DistributionMap {
    pub fn num_cups(&self) -> usize {
        self.matrix.nrows() / 6
    }

    pub fn apply(&self, f_t: &Wrench) -> Vec<Wrench> {
        let v = &self.matrix * DVector::from_column_slice(f_t.to_vector().as_slice());
        (0..self.num_cups()).map(|c| Wrench::from_vector(&Vector6::from_column_slice(&v.as_slice()[6 * c..6 * c + 6]))).collect()
    }

    fn block(&self, c: usize) -> SMatrix<f64, 6, 6> {
        self.matrix.fixed_view::<6, 6>(6 * c, 0).into_owned()
    }
}

pub fn distribution_map(g: &GripperModel, weights: &WeightMatrix) -> Result<DistributionMap> {
    map_from(&Distributor::new(g)?, weights)
}

fn map_from(d: &Distributor, weights: &WeightMatrix) -> Result<DistributionMap> {
    let op = d.operator(weights)?;
    Ok(DistributionMap {
        matrix: op.stacked(),
        weights_used: op.weights,
    })
}

/// Which failure test a grasp row comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GraspRow {
    SuctionLoss { cup: usize, row: usize },
    Slippage { row: usize },
}

impl fmt::Display for GraspRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraspRow::SuctionLoss { cup, row } => write!(f, "suction-loss(cup={cup},row={row})"),
            GraspRow::Slippage { row } => write!(f, "slippage(row={row})"),
        }
    }
}

/// Grasp rows `ζ″ s̈ + ζ′ ṡ² + ζ ≤ 0` at one path point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub zeta_ddot: DVector<f64>,
    pub zeta_dot: DVector<f64>,
    pub zeta_const: DVector<f64>,
    pub row_labels: Vec<GraspRow>,
}

impl ConstraintSet {
    pub fn num_rows(&self) -> usize {
        self.row_labels.len()
    }

    /// Row values; a point is feasible when every entry is `<= 0`.
    pub fn evaluate(&self, sdot_sq: f64, sddot: f64) -> DVector<f64> {
        &self.zeta_ddot * sddot + &self.zeta_dot * sdot_sq + &self.zeta_const
    }
}

/// Constant constraint blocks of one gripper, reused across path points.
#[derive(Debug, Clone)]
pub struct GraspRowAssembler {
    suction: Vec<(SMatrix<f64, 5, 6>, SVector<f64, 5>)>,
    slip: SlippageMatrix,
    slip_rhs: SVector<f64, 12>,
    labels: Vec<GraspRow>,
}

impl GraspRowAssembler {
    pub fn new(g: &GripperModel) -> Result<Self> {
        let (slip, slip_rhs) = g.slippage_block()?;
        let suction = g.cups().iter().map(|c| (c.suction_loss_matrix(), c.suction_loss_rhs())).collect();
        let mut labels: Vec<GraspRow> = (0..g.num_cups())
            .flat_map(|cup| (0..5).map(move |row| GraspRow::SuctionLoss { cup, row }))
            .collect();
        labels.extend((0..12).map(|row| GraspRow::Slippage { row }));
        Ok(Self {
            suction,
            slip,
            slip_rhs,
            labels,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[GraspRow] {
        &self.labels
    }

    pub fn assemble(&self, form: &WrenchAffineForm, map: &DistributionMap) -> Result<ConstraintSet> {
        if map.num_cups() != self.suction.len() {
            return Err(Error::DimensionMismatch {
                expected: 6 * self.suction.len(),
                actual: map.matrix.nrows(),
            });
        }
        let m = self.num_rows();
        let mut out = [DVector::zeros(m), DVector::zeros(m), DVector::zeros(m)];
        let bs = [form.b_ddot, form.b_dot, form.b_const];
        for (c, (u, rhs)) in self.suction.iter().enumerate() {
            let um = u * map.block(c);
            for (dst, b) in out.iter_mut().zip(&bs) {
                dst.rows_mut(5 * c, 5).copy_from(&(um * b));
            }
            let mut z = out[2].rows_mut(5 * c, 5);
            z -= rhs;
        }
        let off = 5 * self.suction.len();
        for (dst, b) in out.iter_mut().zip(&bs) {
            dst.rows_mut(off, 12).copy_from(&(self.slip * b));
        }
        let mut z = out[2].rows_mut(off, 12);
        z -= &self.slip_rhs;
        let [zeta_ddot, zeta_dot, zeta_const] = out;
        Ok(ConstraintSet {
            zeta_ddot,
            zeta_dot,
            zeta_const,
            row_labels: self.labels.clone(),
        })
    }
}

pub fn grasp_constraint_coeffs(form: &WrenchAffineForm, g: &GripperModel, map: &DistributionMap) -> Result<ConstraintSet> {
    GraspRowAssembler::new(g)?.assemble(form, map)
}

/// `coef_xk x_k + coef_xk1 x_{k+1} <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteRows {
    pub coef_xk: DVector<f64>,
    pub coef_xk1: DVector<f64>,
    pub rhs: DVector<f64>,
}

/// Substitutes `ṡ² = x_k` and `s̈ = (x_{k+1} - x_k) / (2Δ)`.
pub fn discretize_constraints(cs: &ConstraintSet, delta: f64) -> Result<DiscreteRows> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidInput(format!("grid spacing must be positive, got {delta}")));
    }
    let coef_xk1 = &cs.zeta_ddot / (2.0 * delta);
    Ok(DiscreteRows {
        coef_xk: &cs.zeta_dot - &coef_xk1,
        coef_xk1,
        rhs: -&cs.zeta_const,
    })
}

/// Path acceleration at knot `k` implied by `x`: the forward cell for
/// `k < N`, the last cell at `k = N`.
pub fn knot_sddot(x: &[f64], grid: &[f64], k: usize) -> f64 {
    let (a, b) = if k + 1 < x.len() { (k, k + 1) } else { (k - 1, k) };
    (x[b] - x[a]) / (2.0 * (grid[b] - grid[a]))
}

/// Per-knot distribution maps with compression-adjusted weights.
///
/// Each knot's tool wrench at the nominal `x̄` is distributed with normal
/// weights, and cups past the compression threshold switch to compressed
/// weights for that knot.
pub fn nominal_weight_adjustment(
    forms: &[WrenchAffineForm],
    g: &GripperModel,
    grid: &[f64],
    x_nominal: &[f64],
) -> Result<Vec<DistributionMap>> {
    WeightAdjuster::new(g)?.maps(Execution::default(), forms, grid, x_nominal)
}

/// Caches the normal-weight map for repeated per-knot adjustment.
#[derive(Debug, Clone)]
pub struct WeightAdjuster {
    gripper: GripperModel,
    distributor: Distributor,
    normal: DistributionMap,
}

impl WeightAdjuster {
    pub fn new(g: &GripperModel) -> Result<Self> {
        let distributor = Distributor::new(g)?;
        let normal = map_from(&distributor, &WeightMatrix::uniform(g.num_cups(), g.weights().normal))?;
        Ok(Self {
            gripper: g.clone(),
            distributor,
            normal,
        })
    }

    pub fn normal_map(&self) -> &DistributionMap {
        &self.normal
    }

    /// Compression flags of the normal-weight distribution of `f_t`.
    pub fn flags(&self, f_t: &Wrench) -> Vec<bool> {
        let w = self.gripper.weights();
        self.normal.apply(f_t).iter().map(|c| w.is_compressed(c)).collect()
    }

    /// Per-knot compression flags at nominal `x̄`.
    pub fn knot_flags(&self, forms: &[WrenchAffineForm], grid: &[f64], x_nominal: &[f64]) -> Result<Vec<Vec<bool>>> {
        let n = forms.len();
        if grid.len() != n || x_nominal.len() != n || n < 2 {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: x_nominal.len().min(grid.len()),
            });
        }
        if x_nominal.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::InvalidInput("nominal x must be non-negative".into()));
        }
        Ok((0..n)
            .map(|k| self.flags(&forms[k].evaluate(x_nominal[k], knot_sddot(x_nominal, grid, k))))
            .collect())
    }

    /// One map per knot for the given flags. Each distinct flag pattern is
    /// solved once; knots without flags share the normal map.
    pub fn maps_for(&self, exec: Execution, flags: &[Vec<bool>]) -> Result<Vec<DistributionMap>> {
        let mut patterns: Vec<&Vec<bool>> = flags.iter().filter(|f| f.iter().any(|b| *b)).collect();
        patterns.sort();
        patterns.dedup();
        let solved = try_map_range(exec, patterns.len(), |i| {
            map_from(&self.distributor, &flagged_weights(&self.gripper, patterns[i]))
        })?;
        let lookup: HashMap<&Vec<bool>, &DistributionMap> = patterns.into_iter().zip(&solved).collect();
        Ok(flags
            .iter()
            .map(|f| lookup.get(f).map_or_else(|| self.normal.clone(), |m| (*m).clone()))
            .collect())
    }

    pub fn maps(
        &self,
        exec: Execution,
        forms: &[WrenchAffineForm],
        grid: &[f64],
        x_nominal: &[f64],
    ) -> Result<Vec<DistributionMap>> {
        self.maps_for(exec, &self.knot_flags(forms, grid, x_nominal)?)
    }

    /// Signed distance of each cup's normal-weight force past the
    /// compression threshold; positive means flagged.
    pub fn compression_excess(&self, f_t: &Wrench) -> Vec<f64> {
        let w = self.gripper.weights();
        self.normal
            .apply(f_t)
            .iter()
            .map(|c| threshold_sign(w) * (-c.force.z - w.compression_threshold))
            .collect()
    }

    /// Rows `ζ″ s̈ + ζ′ ṡ² + ζ ≤ 0` keeping every cup on its side of the
    /// compression threshold with slack `margin`, so the flags stay `flags`.
    pub fn mode_lock(&self, form: &WrenchAffineForm, flags: &[bool], margin: f64) -> ModeLock {
        let w = self.gripper.weights();
        let sigma = threshold_sign(w);
        let m = flags.len();
        let mut lock = ModeLock {
            zeta_ddot: DVector::zeros(m),
            zeta_dot: DVector::zeros(m),
            zeta_const: DVector::zeros(m),
        };
        for (i, flagged) in flags.iter().enumerate() {
            // excess = sigma * (s - threshold) with s = -row · f_t.
            let row = self.normal.matrix.row(6 * i + 5);
            let rho = if *flagged { -sigma } else { sigma };
            lock.zeta_ddot[i] = -rho * row.dot(&form.b_ddot.transpose());
            lock.zeta_dot[i] = -rho * row.dot(&form.b_dot.transpose());
            lock.zeta_const[i] = -rho * (row.dot(&form.b_const.transpose()) + w.compression_threshold) + margin;
        }
        lock
    }
}

fn threshold_sign(w: &StiffnessWeights) -> f64 {
    match w.threshold_direction {
        ThresholdDirection::GreaterThan => 1.0,
        ThresholdDirection::LessThan => -1.0,
    }
}

/// Per-cup rows that pin the compression flags, in the same affine form as
/// [`ConstraintSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModeLock {
    pub zeta_ddot: DVector<f64>,
    pub zeta_dot: DVector<f64>,
    pub zeta_const: DVector<f64>,
}
