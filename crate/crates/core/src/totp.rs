//! Time-optimal path parameterization with kinematic and grasp-failure
//! limits, solved by sequential linear programming over `x_k = ṡ_k²`.
//!
//! The path is cut into `N` cells on a uniform grid `s_0 < … < s_N`. The
//! planner rests at both ends (`x_0 = x_N = 0`), so those two variables are
//! substituted out and each LP works on the `N - 1` interior knots. Every
//! row is stored over the full `x` vector; the substitution only happens
//! when rows are handed to the LP.
//!
//! Each SLP iteration linearizes the travel time at the current nominal
//! `x̄`, rebuilds the rows that depend on it (jerk rows and the
//! compression-adjusted grasp rows) and solves one LP inside a per-variable
//! trust box.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constraints::{knot_sddot, DistributionMap, GraspRow, GraspRowAssembler, WeightAdjuster};
use crate::dynamics::{path_derivative_step, KinematicChain, MotionCoefficients, ObjectModel, WrenchAffineForm};
use crate::error::{Error, Result};
use crate::gripper::GripperModel;
use crate::lp::sparse::BoxedLp;
use crate::lp::{solve_lp, LinearProgram, LpStatus};
use crate::par::{map_range, try_map_range, Execution};
use crate::spline::{PathPoint, PathSpec};

/// Smallest nominal `x` used when linearizing the travel time.
pub const X_FLOOR: f64 = 1e-6;
/// Rows with margin below `-FEASIBILITY_TOL` count as violated.
pub const FEASIBILITY_TOL: f64 = 1e-6;
/// Mass resolution of the max-load bisection.
pub const MASS_RESOLUTION_KG: f64 = 1e-5;

const SHRINK: f64 = 0.5;
const POOR_RATIO: f64 = 0.25;
const STATIC_TOL: f64 = 1e-9;
/// Slack kept between a cup's force and the compression threshold while its
/// flag is locked.
const LOCK_MARGIN_N: f64 = 1e-6;
/// Cups this close to the threshold may switch flags between iterations.
const FLIP_BAND_N: f64 = 1e-4;
/// Flag-switch LPs tried per SLP iteration.
const MAX_MODE_SWITCHES: usize = 25;

/// Per-joint limits. Every present list has one entry per joint.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KinematicLimits {
    #[serde(rename = "vel_max_rad_s", default, skip_serializing_if = "Option::is_none")]
    pub vel_max: Option<Vec<f64>>,
    #[serde(rename = "acc_max_rad_s2", default, skip_serializing_if = "Option::is_none")]
    pub acc_max: Option<Vec<f64>>,
    #[serde(rename = "jerk_max_rad_s3", default, skip_serializing_if = "Option::is_none")]
    pub jerk_max: Option<Vec<f64>>,
}

impl KinematicLimits {
    /// Same limits on every joint.
    pub fn uniform(dof: usize, vel: Option<f64>, acc: Option<f64>, jerk: Option<f64>) -> Self {
        Self {
            vel_max: vel.map(|v| vec![v; dof]),
            acc_max: acc.map(|v| vec![v; dof]),
            jerk_max: jerk.map(|v| vec![v; dof]),
        }
    }

    /// Checks list lengths and that every limit is finite and non-negative.
    /// A zero limit pins the corresponding motion to rest.
    pub fn validate(&self, dof: usize) -> Result<()> {
        for (name, list) in [("vel_max_rad_s", &self.vel_max), ("acc_max_rad_s2", &self.acc_max), ("jerk_max_rad_s3", &self.jerk_max)] {
            let Some(list) = list else { continue };
            if list.len() != dof {
                return Err(Error::InvalidInput(format!("{name} has {} entries for {dof} joints", list.len())));
            }
            if let Some(v) = list.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return Err(Error::InvalidInput(format!("{name} entries must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// SLP and discretization settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Number of grid cells `N`.
    pub n_knots: usize,
    /// Convergence threshold on `‖x - x̄‖∞`.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Initial trust box half-width relative to `max(x̄_k, X_FLOOR)`.
    pub trust_radius: f64,
    pub grasp_enabled: bool,
    pub weight_adjustment_enabled: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            n_knots: 100,
            epsilon: 1e-6,
            max_iters: 50,
            trust_radius: 0.5,
            grasp_enabled: true,
            weight_adjustment_enabled: true,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TotpProblem {
    pub path: PathSpec,
    pub chain: KinematicChain,
    pub object: ObjectModel,
    pub gripper: GripperModel,
    pub limits: KinematicLimits,
    pub options: SolverOptions,
}

impl TotpProblem {
    pub fn new(
        path: PathSpec,
        chain: KinematicChain,
        object: ObjectModel,
        gripper: GripperModel,
        limits: KinematicLimits,
        options: SolverOptions,
    ) -> Result<Self> {
        let p = Self {
            path,
            chain,
            object,
            gripper,
            limits,
            options,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let o = &self.options;
        if o.n_knots < 2 {
            return Err(Error::InvalidInput(format!("n_knots must be at least 2, got {}", o.n_knots)));
        }
        if !(o.epsilon > 0.0) || !(o.trust_radius > 0.0 && o.trust_radius.is_finite()) {
            return Err(Error::InvalidInput("epsilon and trust_radius must be positive".into()));
        }
        if self.path.dof() != self.chain.dof() {
            return Err(Error::DimensionMismatch {
                expected: self.chain.dof(),
                actual: self.path.dof(),
            });
        }
        self.limits.validate(self.chain.dof())
    }

    /// Uniform grid `s_0..=s_N` over the path domain.
    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(&self.path, self.options.n_knots)
    }

    pub fn with_options(&self, options: SolverOptions) -> Self {
        Self { options, ..self.clone() }
    }
}

pub fn uniform_grid(path: &PathSpec, n: usize) -> Vec<f64> {
    let (a, b) = (path.start(), path.end());
    (0..=n).map(|k| if k == n { b } else { a + (b - a) * k as f64 / n as f64 }).collect()
}

/// Origin of a stacked row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowLabel {
    Velocity { joint: usize },
    Acceleration { joint: usize, upper: bool },
    Jerk { joint: usize, upper: bool },
    Grasp(GraspRow),
    /// Keeps a cup on the current side of the compression threshold. Only
    /// used inside SLP steps, never reported as a margin.
    CompressionLock { cup: usize },
}

impl RowLabel {
    pub fn is_grasp(&self) -> bool {
        matches!(self, RowLabel::Grasp(_))
    }
}

impl fmt::Display for RowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = |upper: bool| if upper { "max" } else { "min" };
        match self {
            RowLabel::Velocity { joint } => write!(f, "velocity(joint={joint})"),
            RowLabel::Acceleration { joint, upper } => write!(f, "acceleration(joint={joint},{})", side(*upper)),
            RowLabel::Jerk { joint, upper } => write!(f, "jerk(joint={joint},{})", side(*upper)),
            RowLabel::Grasp(g) => g.fmt(f),
            RowLabel::CompressionLock { cup } => write!(f, "compression-lock(cup={cup})"),
        }
    }
}

/// `Σ coef · x[index] <= rhs` over the full `x_0..=x_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedRow {
    pub knot: usize,
    pub label: RowLabel,
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl StackedRow {
    fn new(knot: usize, label: RowLabel, rhs: f64) -> Self {
        Self {
            knot,
            label,
            terms: Vec::with_capacity(3),
            rhs,
        }
    }

    fn add(&mut self, index: usize, coef: f64) {
        if coef == 0.0 {
            return;
        }
        match self.terms.iter_mut().find(|(i, _)| *i == index) {
            Some(t) => t.1 += coef,
            None => self.terms.push((index, coef)),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(i, c)| c * x[*i]).sum()
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        self.rhs - self.value(x)
    }
}

/// Slack of one row at a solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowMargin {
    pub knot: usize,
    pub label: RowLabel,
    pub margin: f64,
}

fn cell(grid: &[f64], k: usize) -> (usize, usize, f64) {
    let (a, b) = if k + 1 < grid.len() { (k, k + 1) } else { (k - 1, k) };
    (a, b, grid[b] - grid[a])
}

/// Velocity rows `(q′_j)² x_k <= v_j²` at knot `k`.
pub fn first_order_rows(path: &PathSpec, limits: &KinematicLimits, grid: &[f64], k: usize) -> Vec<StackedRow> {
    first_order_at(&path.sample(grid[k]), limits, k)
}

fn first_order_at(pt: &PathPoint, limits: &KinematicLimits, k: usize) -> Vec<StackedRow> {
    let Some(vel) = &limits.vel_max else { return Vec::new() };
    vel.iter()
        .enumerate()
        .map(|(j, v)| {
            let mut row = StackedRow::new(k, RowLabel::Velocity { joint: j }, v * v);
            row.add(k, pt.dq[j] * pt.dq[j]);
            row
        })
        .collect()
}

/// Acceleration rows `±(q″ x_k + q′ s̈) <= a_j`, with `s̈` taken over the
/// forward cell (the backward one at the last knot).
pub fn second_order_rows(path: &PathSpec, limits: &KinematicLimits, grid: &[f64], k: usize) -> Vec<StackedRow> {
    second_order_at(&path.sample(grid[k]), limits, grid, k)
}

fn second_order_at(pt: &PathPoint, limits: &KinematicLimits, grid: &[f64], k: usize) -> Vec<StackedRow> {
    let Some(acc) = &limits.acc_max else { return Vec::new() };
    let (a, b, delta) = cell(grid, k);
    let mut rows = Vec::with_capacity(2 * acc.len());
    for (j, lim) in acc.iter().enumerate() {
        for (upper, sign) in [(true, 1.0), (false, -1.0)] {
            let mut row = StackedRow::new(k, RowLabel::Acceleration { joint: j, upper }, *lim);
            let d = sign * pt.dq[j] / (2.0 * delta);
            row.add(k, sign * pt.ddq[j]);
            row.add(b, d);
            row.add(a, -d);
            rows.push(row);
        }
    }
    rows
}

/// Jerk rows over `(x_k, x_{k+1}, x_{k+2})` for `k <= N - 2`.
///
/// `ṡ` factors are frozen at `√x̄`, and the time derivative of `s̈` is the
/// difference of the two cell accelerations over the nominal cell time
/// `2Δ_k / (√x̄_k + √x̄_{k+1})`.
pub fn third_order_rows(
    path: &PathSpec,
    limits: &KinematicLimits,
    grid: &[f64],
    k: usize,
    x_nominal: &[f64],
) -> Vec<StackedRow> {
    third_order_at(&path.sample(grid[k]), limits, grid, k, x_nominal)
}

fn third_order_at(pt: &PathPoint, limits: &KinematicLimits, grid: &[f64], k: usize, xbar: &[f64]) -> Vec<StackedRow> {
    let Some(jerk) = &limits.jerk_max else { return Vec::new() };
    if k + 2 >= grid.len() {
        return Vec::new();
    }
    let (d0, d1) = (grid[k + 1] - grid[k], grid[k + 2] - grid[k + 1]);
    let (r0, r1) = (xbar[k].max(0.0).sqrt(), xbar[k + 1].max(0.0).sqrt());
    let inv_dt = (r0 + r1) / (2.0 * d0);
    let mut rows = Vec::with_capacity(2 * jerk.len());
    for (j, lim) in jerk.iter().enumerate() {
        // jerk = q‴ ṡ x_k + 3 q″ ṡ s̈_k + q′ (s̈_{k+1} - s̈_k) / Δt
        let s0 = 3.0 * pt.ddq[j] * r0 - pt.dq[j] * inv_dt;
        let s1 = pt.dq[j] * inv_dt;
        for (upper, sign) in [(true, 1.0), (false, -1.0)] {
            let mut row = StackedRow::new(k, RowLabel::Jerk { joint: j, upper }, *lim);
            row.add(k, sign * (pt.dddq[j] * r0 - s0 / (2.0 * d0)));
            row.add(k + 1, sign * (s0 / (2.0 * d0) - s1 / (2.0 * d1)));
            row.add(k + 2, sign * s1 / (2.0 * d1));
            rows.push(row);
        }
    }
    rows
}

/// `f(x) = Σ Δ_k / (√x_k + √x_{k+1})`, half the travel time.
pub fn time_cost(x: &[f64], grid: &[f64]) -> f64 {
    (0..x.len() - 1)
        .map(|k| {
            let den = x[k].max(0.0).sqrt() + x[k + 1].max(0.0).sqrt();
            if den > 0.0 {
                (grid[k + 1] - grid[k]) / den
            } else {
                f64::INFINITY
            }
        })
        .sum()
}

/// Gradient of [`time_cost`] at `x̄`, interior entries floored at
/// [`X_FLOOR`]. The two end entries are zero since those variables are fixed.
pub fn linearized_cost(x_nominal: &[f64], grid: &[f64]) -> DVector<f64> {
    let n = x_nominal.len() - 1;
    let root = |k: usize| {
        if k == 0 || k == n {
            x_nominal[k].max(0.0).sqrt()
        } else {
            x_nominal[k].max(X_FLOOR).sqrt()
        }
    };
    let mut c = DVector::zeros(n + 1);
    for k in 1..n {
        let (rm, r, rp) = (root(k - 1), root(k), root(k + 1));
        let left = (grid[k] - grid[k - 1]) / (2.0 * r * (rm + r).powi(2));
        let right = (grid[k + 1] - grid[k]) / (2.0 * r * (r + rp).powi(2));
        c[k] = -left - right;
    }
    c
}

/// Knot times from `t_{k+1} = t_k + 2Δ_k / (√x_k + √x_{k+1})`.
pub fn timestamps(x: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut t = vec![0.0; x.len()];
    for k in 0..x.len() - 1 {
        let den = x[k].max(0.0).sqrt() + x[k + 1].max(0.0).sqrt();
        let dt = if den > 0.0 { 2.0 * (grid[k + 1] - grid[k]) / den } else { f64::INFINITY };
        t[k + 1] = t[k] + dt;
    }
    t
}

/// Record of one SLP iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// `‖x_LP - x̄‖∞`.
    pub step: f64,
    /// Travel time of the LP solution.
    pub total_time: f64,
    /// Largest row violation of the LP solution against that LP's rows,
    /// computed by direct multiplication.
    pub max_violation: f64,
    /// Trust-box scale the LP was solved with.
    pub trust_scale: f64,
    /// `max_k |x_k - x̄_k| / ρ_k` for the box radii `ρ` of this step; at
    /// most 1 unless `relaxed`.
    pub box_usage: f64,
    pub accepted: bool,
    /// The trust box's lower side was dropped to recover feasibility.
    pub relaxed: bool,
    pub lp_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TotpSolution {
    pub grid: Vec<f64>,
    /// `x_k = ṡ_k²` with `x_0 = x_N = 0`.
    pub x: Vec<f64>,
    pub timestamps: Vec<f64>,
    pub total_time: f64,
    /// Every stacked row's slack at `x`, rows rebuilt with `x̄ = x`.
    pub margins: Vec<RowMargin>,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<IterationRecord>,
}

impl TotpSolution {
    pub fn min_margin(&self) -> f64 {
        self.margins.iter().map(|m| m.margin).fold(f64::INFINITY, f64::min)
    }

    /// Tightest row at each knot.
    pub fn knot_min_margins(&self) -> Vec<Option<RowMargin>> {
        let mut out: Vec<Option<RowMargin>> = vec![None; self.x.len()];
        for m in &self.margins {
            let slot = &mut out[m.knot];
            if slot.is_none_or(|s| m.margin < s.margin) {
                *slot = Some(*m);
            }
        }
        out
    }

    /// `ṡ_k`.
    pub fn sdot(&self) -> Vec<f64> {
        self.x.iter().map(|x| x.max(0.0).sqrt()).collect()
    }

    /// `s̈` per knot, forward cell except at the end.
    pub fn sddot(&self) -> Vec<f64> {
        (0..self.x.len()).map(|k| knot_sddot(&self.x, &self.grid, k)).collect()
    }
}

/// Precomputed per-knot data for one problem.
#[derive(Debug, Clone)]
pub struct Planner {
    problem: TotpProblem,
    grid: Vec<f64>,
    points: Vec<PathPoint>,
    grasp: Option<GraspData>,
}

#[derive(Debug, Clone)]
struct GraspData {
    assembler: GraspRowAssembler,
    adjuster: WeightAdjuster,
    forms: Vec<WrenchAffineForm>,
}

impl Planner {
    pub fn new(problem: &TotpProblem) -> Result<Self> {
        problem.validate()?;
        let grid = problem.grid();
        let exec = problem.options.execution;
        let points = map_range(exec, grid.len(), |k| problem.path.sample(grid[k]));
        let grasp = if problem.options.grasp_enabled {
            Some(GraspData::new(problem, &grid)?)
        } else {
            None
        };
        Ok(Self {
            problem: problem.clone(),
            grid,
            points,
            grasp,
        })
    }

    pub fn problem(&self) -> &TotpProblem {
        &self.problem
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn num_cells(&self) -> usize {
        self.grid.len() - 1
    }

    fn exec(&self) -> Execution {
        self.problem.options.execution
    }

    /// First-, second- and third-order rows at every knot.
    pub fn kinematic_rows(&self, x_nominal: &[f64]) -> Vec<StackedRow> {
        let lim = &self.problem.limits;
        map_range(self.exec(), self.grid.len(), |k| {
            let pt = &self.points[k];
            let mut rows = first_order_at(pt, lim, k);
            rows.extend(second_order_at(pt, lim, &self.grid, k));
            rows.extend(third_order_at(pt, lim, &self.grid, k, x_nominal));
            rows
        })
        .into_iter()
        .flatten()
        .collect()
    }

    /// Per-knot distribution maps for nominal `x̄`: compression-adjusted
    /// when enabled, the normal-weight map otherwise.
    pub fn grasp_maps(&self, x_nominal: &[f64]) -> Result<Vec<DistributionMap>> {
        self.grasp_maps_scaled(x_nominal, 1.0)
    }

    fn grasp_maps_scaled(&self, x_nominal: &[f64], mass_scale: f64) -> Result<Vec<DistributionMap>> {
        let g = self.grasp_data()?;
        if !self.problem.options.weight_adjustment_enabled {
            return Ok(vec![g.adjuster.normal_map().clone(); self.grid.len()]);
        }
        let forms: Vec<WrenchAffineForm> = g.forms.iter().map(|f| f.scaled(mass_scale)).collect();
        g.adjuster.maps(self.exec(), &forms, &self.grid, x_nominal)
    }

    fn grasp_data(&self) -> Result<&GraspData> {
        self.grasp
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("grasp constraints are disabled for this problem".into()))
    }

    /// Grasp rows at every knot for the given maps.
    pub fn grasp_rows(&self, maps: &[DistributionMap]) -> Result<Vec<StackedRow>> {
        self.grasp_rows_scaled(maps, 1.0)
    }

    fn grasp_rows_scaled(&self, maps: &[DistributionMap], mass_scale: f64) -> Result<Vec<StackedRow>> {
        let per_knot = try_map_range(self.exec(), self.grid.len(), |k| self.knot_grasp_rows(k, &maps[k], mass_scale))?;
        Ok(per_knot.into_iter().flatten().collect())
    }

    fn knot_grasp_rows(&self, k: usize, map: &DistributionMap, mass_scale: f64) -> Result<Vec<StackedRow>> {
        let g = self.grasp_data()?;
        let cs = g.assembler.assemble(&g.forms[k].scaled(mass_scale), map)?;
        Ok(self.affine_rows(k, &cs.zeta_ddot, &cs.zeta_dot, &cs.zeta_const, |i| RowLabel::Grasp(cs.row_labels[i])))
    }

    /// Discretizes `ζ″ s̈ + ζ′ ṡ² + ζ ≤ 0` at knot `k`.
    fn affine_rows(
        &self,
        k: usize,
        zeta_ddot: &DVector<f64>,
        zeta_dot: &DVector<f64>,
        zeta_const: &DVector<f64>,
        label: impl Fn(usize) -> RowLabel,
    ) -> Vec<StackedRow> {
        let (a, b, delta) = cell(&self.grid, k);
        (0..zeta_const.len())
            .map(|i| {
                let mut row = StackedRow::new(k, label(i), -zeta_const[i]);
                let d = zeta_ddot[i] / (2.0 * delta);
                row.add(k, zeta_dot[i]);
                row.add(b, d);
                row.add(a, -d);
                row
            })
            .collect()
    }

    /// Grasp rows for fixed per-knot compression flags, plus the rows that
    /// keep those flags unchanged.
    fn locked_grasp_rows(&self, flags: &[Vec<bool>]) -> Result<Vec<StackedRow>> {
        let g = self.grasp_data()?;
        let maps = g.adjuster.maps_for(self.exec(), flags)?;
        let per_knot = try_map_range(self.exec(), self.grid.len(), |k| {
            let mut rows = self.knot_grasp_rows(k, &maps[k], 1.0)?;
            let lock = g.adjuster.mode_lock(&g.forms[k], &flags[k], LOCK_MARGIN_N);
            rows.extend(self.affine_rows(k, &lock.zeta_ddot, &lock.zeta_dot, &lock.zeta_const, |cup| {
                RowLabel::CompressionLock { cup }
            }));
            Ok::<_, Error>(rows)
        })?;
        Ok(per_knot.into_iter().flatten().collect())
    }

    /// Flags at `x̄`, or `None` when no weight adjustment takes place.
    fn nominal_flags(&self, x_nominal: &[f64]) -> Result<Option<Vec<Vec<bool>>>> {
        match &self.grasp {
            Some(g) if self.problem.options.weight_adjustment_enabled => {
                Ok(Some(g.adjuster.knot_flags(&g.forms, &self.grid, x_nominal)?))
            }
            _ => Ok(None),
        }
    }

    /// `flags` with cups that sit within `FLIP_BAND_N` of the threshold at
    /// `x̄` toggled, where the grasp rows under the toggled map still hold
    /// at `x̄`. A knot tries all such cups together first, then one at a
    /// time. `None` if nothing changes.
    fn flipped_flags(&self, flags: &[Vec<bool>], x_nominal: &[f64]) -> Result<Option<Vec<Vec<bool>>>> {
        let g = self.grasp_data()?;
        let per_knot = try_map_range(self.exec(), self.grid.len(), |k| {
            let f_t = g.forms[k].evaluate(x_nominal[k], knot_sddot(x_nominal, &self.grid, k));
            let near: Vec<usize> = g
                .adjuster
                .compression_excess(&f_t)
                .iter()
                .enumerate()
                .filter(|(_, e)| e.abs() <= FLIP_BAND_N)
                .map(|(i, _)| i)
                .collect();
            let holds = |cups: &[usize]| -> Result<Option<Vec<bool>>> {
                let mut f = flags[k].clone();
                for &i in cups {
                    f[i] = !f[i];
                }
                let map = g.adjuster.maps_for(Execution::Sequential, std::slice::from_ref(&f))?.remove(0);
                let ok = self.knot_grasp_rows(k, &map, 1.0)?.iter().all(|r| within_tol(r, x_nominal));
                Ok(ok.then_some(f))
            };
            if near.is_empty() {
                return Ok::<_, Error>(None);
            }
            if let Some(f) = holds(&near)? {
                return Ok(Some(f));
            }
            if near.len() > 1 {
                for &i in &near {
                    if let Some(f) = holds(&[i])? {
                        return Ok(Some(f));
                    }
                }
            }
            Ok(None)
        })?;
        if per_knot.iter().all(Option::is_none) {
            return Ok(None);
        }
        Ok(Some(
            per_knot
                .into_iter()
                .zip(flags)
                .map(|(alt, f)| alt.unwrap_or_else(|| f.clone()))
                .collect(),
        ))
    }

    /// All rows with `x̄` as the linearization point.
    pub fn stacked_rows(&self, x_nominal: &[f64]) -> Result<Vec<StackedRow>> {
        let mut rows = self.kinematic_rows(x_nominal);
        if self.grasp.is_some() {
            rows.extend(self.grasp_rows(&self.grasp_maps(x_nominal)?)?);
        }
        Ok(rows)
    }

    /// Row slacks at `x`, rebuilding the rows with `x̄ = x`.
    pub fn margins(&self, x: &[f64]) -> Result<Vec<RowMargin>> {
        Ok(self
            .stacked_rows(x)?
            .iter()
            .map(|r| RowMargin {
                knot: r.knot,
                label: r.label,
                margin: r.margin(x),
            })
            .collect())
    }

    /// Fails when some knot cannot hold the object at rest.
    pub fn check_statics(&self) -> Result<()> {
        if self.grasp.is_none() {
            return Ok(());
        }
        let zeros = vec![0.0; self.grid.len()];
        let rows = self.grasp_rows(&self.grasp_maps(&zeros)?)?;
        let worst = rows
            .iter()
            .filter(|r| r.rhs < -STATIC_TOL * (1.0 + r.rhs.abs()))
            .min_by_key(|r| r.knot);
        match worst {
            Some(first) => {
                let row = rows
                    .iter()
                    .filter(|r| r.knot == first.knot)
                    .min_by(|a, b| a.rhs.total_cmp(&b.rhs))
                    .expect("knot has rows");
                Err(Error::StaticallyInfeasible {
                    knot: row.knot,
                    row: row.label.to_string(),
                })
            }
            None => Ok(()),
        }
    }

    /// Greedy nominal from the first- and second-order rows.
    ///
    /// A backward pass computes, per knot, the largest `x_k` from which the
    /// rest of the path can still stop at `x_N = 0`. A forward pass then
    /// picks the largest admissible `x_{k+1}` at each cell, staying inside
    /// those controllable bounds, so no knot is pushed to zero unless the
    /// limits force it.
    pub fn greedy_nominal(&self) -> Vec<f64> {
        let n = self.num_cells();
        let local = KinematicLimits {
            jerk_max: None,
            ..self.problem.limits.clone()
        };
        let mut single = vec![f64::INFINITY; n + 1];
        let mut pair: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new(); n];
        for k in 0..=n {
            let mut rows = first_order_at(&self.points[k], &local, k);
            rows.extend(second_order_at(&self.points[k], &local, &self.grid, k));
            for r in &rows {
                let Some(c) = r.terms.iter().map(|t| t.0).min() else { continue };
                let coef = |i: usize| r.terms.iter().filter(|t| t.0 == i).map(|t| t.1).sum::<f64>();
                if r.terms.iter().all(|t| t.0 == c) {
                    let a = coef(c);
                    if a > 0.0 {
                        single[c] = single[c].min((r.rhs / a).max(0.0));
                    }
                } else if c < n {
                    pair[c].push((coef(c), coef(c + 1), r.rhs));
                }
            }
        }
        single[0] = 0.0;
        single[n] = 0.0;

        let mut reach = single.clone();
        for c in (0..n).rev() {
            reach[c] = controllable_max(&pair[c], single[c], reach[c + 1]);
        }
        let mut x = vec![0.0; n + 1];
        for c in 0..n {
            let (mut lo, mut hi) = (0.0_f64, reach[c + 1]);
            for &(a, b, rhs) in &pair[c] {
                let r = rhs - a * x[c];
                if b > 0.0 {
                    hi = hi.min(r / b);
                } else if b < 0.0 {
                    lo = lo.max(r / b);
                }
            }
            x[c + 1] = hi.max(lo.min(reach[c + 1])).max(0.0);
        }
        // Unlimited motion leaves infinities; cap them at a large finite speed.
        let cap = x.iter().filter(|v| v.is_finite()).fold(1.0_f64, |m, v| m.max(*v)) * 1e3;
        for (t, v) in x.iter_mut().enumerate() {
            if t != 0 && t != n {
                *v = v.min(cap).max(X_FLOOR);
            }
        }
        x
    }

    /// Runs the SLP from the greedy nominal.
    ///
    /// The distribution map at a knot switches discretely with the nominal,
    /// so each LP keeps the compression flags of `x̄` fixed through extra
    /// rows; its solution then also satisfies the rows rebuilt at itself.
    /// Cups that end up on a threshold are offered the other flag in a
    /// second LP, which is taken when it is faster.
    pub fn solve(&self) -> Result<TotpSolution> {
        self.check_statics()?;
        let opts = self.problem.options;
        let n = self.num_cells();
        let mut xbar = self.greedy_nominal();
        let mut current_time = f64::INFINITY;
        let mut have_iterate = false;
        let mut scale = opts.trust_radius;
        let mut history = Vec::new();
        let mut converged = false;

        for _ in 0..opts.max_iters {
            let c = linearized_cost(&xbar, &self.grid);
            let radius: Vec<f64> = xbar.iter().map(|v| scale * v.max(X_FLOOR)).collect();
            let flags = self.nominal_flags(&xbar)?;
            let mut step = self.solve_step(&xbar, &c, &radius, flags.as_deref())?;
            let mut new_time = 2.0 * time_cost(&step.x, &self.grid);
            let mut flipped = false;
            if have_iterate && flags.is_some() {
                // Mode refinement at a fixed linearization and trust box.
                for _ in 0..MAX_MODE_SWITCHES {
                    let Some(base) = self.nominal_flags(&step.x)? else { break };
                    let Some(alt_flags) = self.flipped_flags(&base, &step.x)? else { break };
                    let rows = self.step_rows(&xbar, Some(&alt_flags))?;
                    let Some((x, lp_iterations)) = self.boxed_lp(&rows, &c, &xbar, &radius, false)? else { break };
                    let t = 2.0 * time_cost(&x, &self.grid);
                    if !(t < new_time * (1.0 - 1e-12) && t < current_time) {
                        break;
                    }
                    step = Step {
                        rows,
                        x,
                        lp_iterations: step.lp_iterations + lp_iterations,
                        relaxed: false,
                    };
                    new_time = t;
                    flipped = true;
                }
            }
            let x_new = step.x;
            let rows = step.rows;
            let max_violation = rows.iter().map(|r| -r.margin(&x_new)).fold(0.0, f64::max);
            let step_len = (1..n).map(|k| (x_new[k] - xbar[k]).abs()).fold(0.0, f64::max);
            let xbar_feasible = have_iterate && rows.iter().all(|r| within_tol(r, &xbar));
            let box_usage = (1..n).map(|k| (x_new[k] - xbar[k]).abs() / radius[k]).fold(0.0, f64::max);
            let step_scale = scale;

            let accepted = if flipped || !xbar_feasible {
                true
            } else {
                let predicted: f64 = (1..n).map(|k| c[k] * (xbar[k] - x_new[k])).sum();
                let actual = 0.5 * (current_time - new_time);
                if new_time.is_infinite() && current_time.is_infinite() {
                    true
                } else if !(actual >= 0.0) {
                    scale *= SHRINK;
                    false
                } else {
                    if predicted > 0.0 && actual / predicted < POOR_RATIO {
                        scale *= SHRINK;
                    }
                    true
                }
            };
            history.push(IterationRecord {
                step: step_len,
                total_time: new_time,
                max_violation,
                trust_scale: step_scale,
                box_usage,
                accepted,
                relaxed: step.relaxed,
                lp_iterations: step.lp_iterations,
            });
            if accepted {
                xbar = x_new;
                current_time = new_time;
                have_iterate = true;
            }
            if have_iterate && step_len < opts.epsilon && self.stacked_rows(&xbar)?.iter().all(|r| within_tol(r, &xbar)) {
                converged = current_time.is_finite();
                break;
            }
        }
        if !have_iterate {
            return Err(Error::NumericalFailure("no SLP iterate was accepted".into()));
        }
        let margins = self.margins(&xbar)?;
        let timestamps = timestamps(&xbar, &self.grid);
        Ok(TotpSolution {
            grid: self.grid.clone(),
            total_time: timestamps[n],
            timestamps,
            x: xbar,
            margins,
            iterations: history.len(),
            converged,
            history,
        })
    }

    /// Kinematic rows at `x̄` plus grasp rows, locked to `flags` when given.
    fn step_rows(&self, xbar: &[f64], flags: Option<&[Vec<bool>]>) -> Result<Vec<StackedRow>> {
        let mut rows = self.kinematic_rows(xbar);
        match flags {
            Some(f) => rows.extend(self.locked_grasp_rows(f)?),
            None if self.grasp.is_some() => rows.extend(self.grasp_rows(&self.grasp_maps(xbar)?)?),
            None => {}
        }
        Ok(rows)
    }

    /// Solves the interior LP inside the trust box, or with only its upper
    /// side when `drop_lower` is set. `None` when infeasible.
    fn boxed_lp(
        &self,
        rows: &[StackedRow],
        c: &DVector<f64>,
        xbar: &[f64],
        radius: &[f64],
        drop_lower: bool,
    ) -> Result<Option<(Vec<f64>, usize)>> {
        let n = self.num_cells();
        let lo: Vec<f64> = (1..n)
            .map(|k| if drop_lower { 0.0 } else { (xbar[k] - radius[k]).max(0.0) })
            .collect();
        let hi: Vec<f64> = (1..n).map(|k| xbar[k] + radius[k]).collect();
        let Some(lp) = interior_lp(rows, c, &lo, hi, n) else { return Ok(None) };
        let sol = lp.solve()?;
        match sol.status {
            LpStatus::Optimal => {
                let mut x = vec![0.0; n + 1];
                x[1..n].copy_from_slice(&sol.x);
                Ok(Some((x, sol.iterations)))
            }
            LpStatus::Infeasible => Ok(None),
            LpStatus::Unbounded => Err(Error::LpUnbounded),
        }
    }

    /// One LP inside the trust box. If it is infeasible the box's lower
    /// side is dropped, and if that still fails the flags are reset to the
    /// at-rest ones, for which `x = 0` is feasible.
    fn solve_step(&self, xbar: &[f64], c: &DVector<f64>, radius: &[f64], flags: Option<&[Vec<bool>]>) -> Result<Step> {
        let n = self.num_cells();
        let rows = self.step_rows(xbar, flags)?;
        for drop_lower in [false, true] {
            if let Some((x, lp_iterations)) = self.boxed_lp(&rows, c, xbar, radius, drop_lower)? {
                return Ok(Step { rows, x, lp_iterations, relaxed: drop_lower });
            }
        }
        let zeros = vec![0.0; n + 1];
        if let Some(at_rest) = self.nominal_flags(&zeros)? {
            let rest_rows = self.step_rows(xbar, Some(&at_rest))?;
            if let Some((x, lp_iterations)) = self.boxed_lp(&rest_rows, c, xbar, radius, true)? {
                return Ok(Step { rows: rest_rows, x, lp_iterations, relaxed: true });
            }
        }
        let worst = rows
            .iter()
            .filter(|r| r.margin(&zeros) < 0.0)
            .min_by(|a, b| a.margin(&zeros).total_cmp(&b.margin(&zeros)));
        Err(Error::LpInfeasible {
            context: Some(match worst {
                Some(r) => format!("knot {}, row {}", r.knot, r.label),
                None => "trust region".into(),
            }),
        })
    }
}

/// Outcome of one SLP step: the rows it used, the full `x`, the simplex
/// iteration count and whether a fallback ran.
struct Step {
    rows: Vec<StackedRow>,
    x: Vec<f64>,
    lp_iterations: usize,
    relaxed: bool,
}

fn within_tol(r: &StackedRow, x: &[f64]) -> bool {
    r.margin(x) >= -FEASIBILITY_TOL * (1.0 + r.rhs.abs())
}

/// Largest `u <= u_max` such that some `v` in `[0, v_max]` satisfies
/// `a u + b v <= rhs` for every row. Infinite when nothing bounds `u`.
fn controllable_max(rows: &[(f64, f64, f64)], u_max: f64, v_max: f64) -> f64 {
    let m = rows.len();
    let mut a = DMatrix::zeros(m, 2);
    let mut rhs = DVector::zeros(m);
    for (i, &(au, bv, r)) in rows.iter().enumerate() {
        a[(i, 0)] = au;
        a[(i, 1)] = bv;
        rhs[i] = r;
    }
    let cap = |v: f64| v.is_finite().then_some(v);
    let lp = LinearProgram::new(DVector::from_vec(vec![-1.0, 0.0]))
        .with_inequalities(a, rhs)
        .with_bounds(vec![(Some(0.0), cap(u_max)), (Some(0.0), cap(v_max))]);
    match solve_lp(&lp) {
        Ok(sol) if sol.status == LpStatus::Optimal => sol.x[0].max(0.0),
        Ok(sol) if sol.status == LpStatus::Unbounded => f64::INFINITY,
        _ => 0.0,
    }
}

/// Builds the interior LP with `x_0 = x_N = 0` substituted. Single-term rows
/// with a positive coefficient become upper bounds. Returns `None` when a
/// row without free terms is already violated.
fn interior_lp(rows: &[StackedRow], c: &DVector<f64>, lo: &[f64], mut hi: Vec<f64>, n: usize) -> Option<BoxedLp> {
    let mut kept: Vec<(Vec<(usize, f64)>, f64)> = Vec::with_capacity(rows.len());
    for r in rows {
        let free: Vec<(usize, f64)> = r.terms.iter().filter(|(i, _)| *i >= 1 && *i < n).map(|(i, v)| (i - 1, *v)).collect();
        if free.is_empty() {
            if r.rhs < -STATIC_TOL * (1.0 + r.rhs.abs()) {
                return None;
            }
            continue;
        }
        if let [(j, v)] = free[..] {
            if v > 0.0 && r.rhs / v >= lo[j] {
                hi[j] = hi[j].min(r.rhs / v);
                continue;
            }
        }
        kept.push((free, r.rhs));
    }
    let mut lp = BoxedLp::new(c.as_slice()[1..n].to_vec(), lo.to_vec(), hi);
    for (terms, rhs) in &kept {
        lp.add_row(terms, *rhs);
    }
    Some(lp)
}

impl GraspData {
    fn new(problem: &TotpProblem, grid: &[f64]) -> Result<Self> {
        let g = &problem.gripper;
        let assembler = GraspRowAssembler::new(g)?;
        let adjuster = WeightAdjuster::new(g)?;
        let h = path_derivative_step(grid[1] - grid[0]);
        let motion = try_map_range(problem.options.execution, grid.len(), |k| {
            MotionCoefficients::at(&problem.chain, &problem.path, grid[k], h)
        })?;
        let forms = motion.iter().map(|m| m.wrench_form(&problem.object)).collect();
        Ok(Self {
            assembler,
            adjuster,
            forms,
        })
    }
}

pub fn solve_totp(problem: &TotpProblem) -> Result<TotpSolution> {
    Planner::new(problem)?.solve()
}

/// Result of the max-load search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxLoad {
    pub mass_kg: f64,
    /// Tightest grasp row at `mass_kg`.
    pub active_row: Option<RowMargin>,
}

/// Largest object mass whose grasp rows all hold along `fixed_x`, with the
/// inertia scaled alike and the center of mass fixed.
pub fn max_load_search(problem: &TotpProblem, fixed_x: &[f64]) -> Result<MaxLoad> {
    let mut opts = problem.options;
    opts.grasp_enabled = true;
    let planner = Planner::new(&problem.with_options(opts))?;
    let n = planner.num_cells();
    if fixed_x.len() != n + 1 {
        return Err(Error::DimensionMismatch {
            expected: n + 1,
            actual: fixed_x.len(),
        });
    }
    if fixed_x.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput("trajectory x must be finite and non-negative".into()));
    }
    let m0 = problem.object.mass();
    let tightest = |mass: f64| -> Result<Option<RowMargin>> {
        let scale = mass / m0;
        let maps = planner.grasp_maps_scaled(fixed_x, scale)?;
        let rows = planner.grasp_rows_scaled(&maps, scale)?;
        Ok(rows
            .iter()
            .map(|r| RowMargin {
                knot: r.knot,
                label: r.label,
                margin: r.margin(fixed_x),
            })
            .min_by(|a, b| a.margin.total_cmp(&b.margin)))
    };
    let holds = |m: &Option<RowMargin>| m.is_none_or(|r| r.margin >= -STATIC_TOL);

    let first = tightest(MASS_RESOLUTION_KG)?;
    if !holds(&first) {
        return Ok(MaxLoad {
            mass_kg: 0.0,
            active_row: first,
        });
    }
    let (mut lo, mut lo_row) = (MASS_RESOLUTION_KG, first);
    let mut hi = 1.0;
    loop {
        let r = tightest(hi)?;
        if !holds(&r) {
            break;
        }
        (lo, lo_row) = (hi, r);
        hi *= 2.0;
        if hi > 1e7 {
            return Ok(MaxLoad {
                mass_kg: lo,
                active_row: lo_row,
            });
        }
    }
    while hi - lo > MASS_RESOLUTION_KG {
        let mid = 0.5 * (lo + hi);
        let r = tightest(mid)?;
        if holds(&r) {
            (lo, lo_row) = (mid, r);
        } else {
            hi = mid;
        }
    }
    Ok(MaxLoad {
        mass_kg: lo,
        active_row: lo_row,
    })
}
