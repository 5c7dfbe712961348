//! Linear programming.
//!
//! [`solve_lp`] is a general dense two-phase tableau simplex. The
//! trajectory optimizer uses [`sparse::BoxedLp`], a primal active-set simplex
//! specialised to box-bounded problems with many sparse inequality rows.

mod dense;
pub mod sparse;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use dense::solve_lp;

/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-8;
/// Reduced-cost optimality tolerance.
pub const OPT_TOL: f64 = 1e-9;
/// Smallest admissible pivot magnitude.
pub const PIVOT_TOL: f64 = 1e-10;

/// `min c^T x` subject to `A x <= b`, `E x = d` and per-variable bounds.
///
/// A `None` bound leaves that side unbounded, so the default is a free
/// variable.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub bounds: Vec<(Option<f64>, Option<f64>)>,
}

impl LinearProgram {
    pub fn new(objective: DVector<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            ineq_matrix: DMatrix::zeros(0, n),
            ineq_rhs: DVector::zeros(0),
            eq_matrix: DMatrix::zeros(0, n),
            eq_rhs: DVector::zeros(0),
            bounds: vec![(None, None); n],
        }
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.ineq_matrix = a;
        self.ineq_rhs = b;
        self
    }

    pub fn with_equalities(mut self, e: DMatrix<f64>, d: DVector<f64>) -> Self {
        self.eq_matrix = e;
        self.eq_rhs = d;
        self
    }

    pub fn with_bounds(mut self, bounds: Vec<(Option<f64>, Option<f64>)>) -> Self {
        self.bounds = bounds;
        self
    }

    /// All variables in `[0, inf)`.
    pub fn nonnegative(mut self) -> Self {
        self.bounds = vec![(Some(0.0), None); self.num_vars()];
        self
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let dims = [
            (self.ineq_matrix.ncols(), n),
            (self.ineq_rhs.len(), self.ineq_matrix.nrows()),
            (self.eq_matrix.ncols(), n),
            (self.eq_rhs.len(), self.eq_matrix.nrows()),
            (self.bounds.len(), n),
        ];
        for (actual, expected) in dims {
            if actual != expected {
                return Err(Error::DimensionMismatch { expected, actual });
            }
        }
        let finite = self
            .objective
            .iter()
            .chain(self.ineq_matrix.iter())
            .chain(self.ineq_rhs.iter())
            .chain(self.eq_matrix.iter())
            .chain(self.eq_rhs.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("non-finite LP coefficient".into()));
        }
        for (j, (lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_some_and(|l| l.is_nan()) || hi.is_some_and(|h| h.is_nan()) {
                return Err(Error::InvalidInput(format!("NaN bound on variable {j}")));
            }
            if let (Some(l), Some(h)) = (lo, hi) {
                if l > h {
                    return Err(Error::InvalidInput(format!("variable {j} has lo {l} > hi {h}")));
                }
            }
        }
        Ok(())
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        if self.ineq_matrix.nrows() > 0 {
            let r = &self.ineq_matrix * x - &self.ineq_rhs;
            worst = worst.max(r.max());
        }
        if self.eq_matrix.nrows() > 0 {
            let r = &self.eq_matrix * x - &self.eq_rhs;
            worst = worst.max(r.amax());
        }
        for (v, (lo, hi)) in x.iter().zip(&self.bounds) {
            if let Some(l) = lo {
                worst = worst.max(l - v);
            }
            if let Some(h) = hi {
                worst = worst.max(v - h);
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Result of [`solve_lp`].
///
/// When optimal, `ineq_duals` are the nonnegative multipliers of the
/// inequality rows and `eq_duals` those of the equalities, signed so that
/// `c + A^T ineq_duals + E^T eq_duals` vanishes on variables strictly inside
/// their bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub objective_value: f64,
    pub status: LpStatus,
    pub ineq_duals: DVector<f64>,
    pub eq_duals: DVector<f64>,
}

impl LpSolution {
    fn non_optimal(n: usize, status: LpStatus) -> Self {
        Self {
            x: DVector::zeros(n),
            objective_value: match status {
                LpStatus::Unbounded => f64::NEG_INFINITY,
                _ => f64::INFINITY,
            },
            status,
            ineq_duals: DVector::zeros(0),
            eq_duals: DVector::zeros(0),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}
