//! Primal active-set simplex for box-bounded LPs with sparse rows.
//!
//! Solves `min c^T x` subject to `A x <= b` and `lo <= x <= hi`, all bounds
//! finite. A vertex is described by `n` active constraints drawn from the
//! rows and the bounds, so the basis stays `n × n` however many rows there
//! are. The basis inverse is kept dense and updated by rank-one corrections.
//!
//! Constraint ids: `0..m` are the rows, `m + j` is `x_j <= hi_j` and
//! `m + n + j` is `-x_j <= -lo_j`.

use super::{LpStatus, FEAS_TOL, OPT_TOL, PIVOT_TOL};
use crate::error::{Error, Result};

/// Harris ratio-test relaxation.
const HARRIS_DELTA: f64 = 1e-9;
/// Direction residual that triggers a fresh factorization.
const REFACTOR_TOL: f64 = 1e-9;
/// Primal values are recomputed from the basis this often.
const RECOMPUTE_EVERY: usize = 25;

/// A box-bounded LP with rows stored in compressed sparse form.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxedLp {
    objective: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    rhs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxedSolution {
    pub x: Vec<f64>,
    pub objective_value: f64,
    pub status: LpStatus,
    pub iterations: usize,
}

impl BoxedLp {
    pub fn new(objective: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>) -> Self {
        Self {
            objective,
            lo,
            hi,
            row_ptr: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
            rhs: Vec::new(),
        }
    }

    /// Appends `sum(entries) <= rhs`. Repeated columns are summed.
    pub fn add_row(&mut self, entries: &[(usize, f64)], rhs: f64) {
        let start = self.cols.len();
        for &(j, v) in entries {
            if let Some(k) = self.cols[start..].iter().position(|&c| c == j) {
                self.vals[start + k] += v;
            } else {
                self.cols.push(j);
                self.vals.push(v);
            }
        }
        self.row_ptr.push(self.cols.len());
        self.rhs.push(rhs);
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64], f64) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b], self.rhs[i])
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    /// `rhs_i - a_i x` for row `i`.
    pub fn row_slack(&self, i: usize, x: &[f64]) -> f64 {
        let (cols, vals, rhs) = self.row(i);
        rhs - cols.iter().zip(vals).map(|(j, v)| v * x[*j]).sum::<f64>()
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.num_rows() {
            worst = worst.max(-self.row_slack(i, x));
        }
        for j in 0..self.num_vars() {
            worst = worst.max(self.lo[j] - x[j]).max(x[j] - self.hi[j]);
        }
        worst
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        for (len, what) in [(self.lo.len(), "lo"), (self.hi.len(), "hi")] {
            if len != n {
                return Err(Error::InvalidInput(format!("{what} has length {len}, expected {n}")));
            }
        }
        for j in 0..n {
            let (l, h) = (self.lo[j], self.hi[j]);
            if !(l.is_finite() && h.is_finite()) || l > h {
                return Err(Error::InvalidInput(format!("variable {j} has invalid box [{l}, {h}]")));
            }
            if !self.objective[j].is_finite() {
                return Err(Error::InvalidInput(format!("non-finite cost on variable {j}")));
            }
        }
        if self.cols.iter().any(|&j| j >= n) {
            return Err(Error::InvalidInput("row references an unknown variable".into()));
        }
        if self.vals.iter().chain(&self.rhs).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite row coefficient".into()));
        }
        Ok(())
    }

    pub fn solve(&self) -> Result<BoxedSolution> {
        self.validate()?;
        let n0 = self.num_vars();

        // Eliminate fixed variables.
        let mut work_index = vec![usize::MAX; n0];
        let mut free_vars = Vec::new();
        for j in 0..n0 {
            if self.hi[j] - self.lo[j] > 1e-14 * (1.0 + self.lo[j].abs()) {
                work_index[j] = free_vars.len();
                free_vars.push(j);
            }
        }
        let n = free_vars.len();
        let mut rows = Rows::default();
        for i in 0..self.num_rows() {
            let (cols, vals, rhs) = self.row(i);
            let mut b = rhs;
            let mut entries = Vec::with_capacity(cols.len());
            for (&j, &v) in cols.iter().zip(vals) {
                if work_index[j] == usize::MAX {
                    b -= v * self.lo[j];
                } else if v != 0.0 {
                    entries.push((work_index[j], v));
                }
            }
            let scale = entries.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
            if scale == 0.0 {
                if b < -FEAS_TOL * (1.0 + rhs.abs()) {
                    return Ok(self.fail(LpStatus::Infeasible, 0));
                }
                continue;
            }
            rows.push(entries.iter().map(|&(j, v)| (j, v / scale)), b / scale);
        }

        let mut x_full = self.lo.clone();
        if n > 0 {
            let lo: Vec<f64> = free_vars.iter().map(|&j| self.lo[j]).collect();
            let hi: Vec<f64> = free_vars.iter().map(|&j| self.hi[j]).collect();
            let c: Vec<f64> = free_vars.iter().map(|&j| self.objective[j]).collect();
            let c_scale = c.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let c: Vec<f64> = if c_scale > 0.0 { c.iter().map(|v| v / c_scale).collect() } else { c };

            let outcome = solve_working(rows, lo, hi, c)?;
            match outcome {
                Working::Solved { x, iterations } => {
                    for (k, &j) in free_vars.iter().enumerate() {
                        x_full[j] = x[k].clamp(self.lo[j], self.hi[j]);
                    }
                    return Ok(self.finish(x_full, iterations));
                }
                Working::Failed { status, iterations } => return Ok(self.fail(status, iterations)),
            }
        }
        Ok(self.finish(x_full, 0))
    }

    fn finish(&self, x: Vec<f64>, iterations: usize) -> BoxedSolution {
        let objective_value = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        BoxedSolution {
            x,
            objective_value,
            status: LpStatus::Optimal,
            iterations,
        }
    }

    fn fail(&self, status: LpStatus, iterations: usize) -> BoxedSolution {
        BoxedSolution {
            x: self.lo.clone(),
            objective_value: f64::NAN,
            status,
            iterations,
        }
    }
}

#[derive(Default)]
struct Rows {
    ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    rhs: Vec<f64>,
}

impl Rows {
    fn push(&mut self, entries: impl Iterator<Item = (usize, f64)>, rhs: f64) {
        if self.ptr.is_empty() {
            self.ptr.push(0);
        }
        for (j, v) in entries {
            self.cols.push(j);
            self.vals.push(v);
        }
        self.ptr.push(self.cols.len());
        self.rhs.push(rhs);
    }

    fn len(&self) -> usize {
        self.rhs.len()
    }

    fn entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.ptr[i], self.ptr[i + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }
}

enum Working {
    Solved { x: Vec<f64>, iterations: usize },
    Failed { status: LpStatus, iterations: usize },
}

enum Outcome {
    Optimal,
    Unbounded,
    Stopped,
}

struct Engine<'a> {
    n: usize,
    rows: &'a Rows,
    /// Extra coefficient every row carries on the last variable (phase 1).
    tail: Option<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    c: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    /// `binv[k * n + p]`: variable `k`, basis position `p`.
    binv: Vec<f64>,
    x: Vec<f64>,
    iterations: usize,
    bland_after: usize,
    cap: usize,
}

impl Engine<'_> {
    fn m(&self) -> usize {
        self.rows.len()
    }

    fn for_each_entry(&self, id: usize, mut f: impl FnMut(usize, f64)) {
        let (m, n) = (self.m(), self.n);
        if id < m {
            for (j, v) in self.rows.entries(id) {
                f(j, v);
            }
            if let Some(t) = self.tail {
                f(n - 1, t);
            }
        } else if id < m + n {
            f(id - m, 1.0);
        } else {
            f(id - m - n, -1.0);
        }
    }

    fn dot(&self, id: usize, v: &[f64]) -> f64 {
        let mut s = 0.0;
        self.for_each_entry(id, |j, a| s += a * v[j]);
        s
    }

    fn rhs(&self, id: usize) -> f64 {
        let (m, n) = (self.m(), self.n);
        if id < m {
            self.rows.rhs[id]
        } else if id < m + n {
            self.hi[id - m]
        } else {
            -self.lo[id - m - n]
        }
    }

    fn total_constraints(&self) -> usize {
        self.m() + 2 * self.n
    }

    fn recompute_x(&mut self) {
        let n = self.n;
        let b: Vec<f64> = self.basis.iter().map(|&id| self.rhs(id)).collect();
        for k in 0..n {
            self.x[k] = self.binv[k * n..(k + 1) * n].iter().zip(&b).map(|(a, b)| a * b).sum();
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let n = self.n;
        let mut b = nalgebra::DMatrix::<f64>::zeros(n, n);
        for (p, &id) in self.basis.iter().enumerate() {
            self.for_each_entry(id, |j, a| b[(p, j)] += a);
        }
        let inv = b
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::NumericalFailure("singular active-set basis".into()))?;
        for k in 0..n {
            for p in 0..n {
                self.binv[k * n + p] = inv[(k, p)];
            }
        }
        self.recompute_x();
        Ok(())
    }

    /// Replaces the constraint at basis position `p` by constraint `q`.
    fn replace(&mut self, p: usize, q: usize, d: &[f64], alpha: f64) {
        let n = self.n;
        let mut v = vec![0.0; n];
        let binv = &self.binv;
        self.for_each_entry(q, |k, a| {
            for (vp, b) in v.iter_mut().zip(&binv[k * n..(k + 1) * n]) {
                *vp += a * b;
            }
        });
        v[p] -= 1.0;
        for k in 0..n {
            let f = d[k] / alpha;
            if f != 0.0 {
                for (b, vp) in self.binv[k * n..(k + 1) * n].iter_mut().zip(&v) {
                    *b -= f * vp;
                }
            }
        }
        self.in_basis[self.basis[p]] = false;
        self.in_basis[q] = true;
        self.basis[p] = q;
    }

    fn multipliers(&self) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; n];
        for k in 0..n {
            let ck = self.c[k];
            if ck != 0.0 {
                for (yp, b) in y.iter_mut().zip(&self.binv[k * n..(k + 1) * n]) {
                    *yp -= ck * b;
                }
            }
        }
        y
    }

    fn direction(&self, p: usize) -> Vec<f64> {
        let n = self.n;
        (0..n).map(|k| -self.binv[k * n + p]).collect()
    }

    fn direction_residual(&self, d: &[f64], p: usize) -> f64 {
        self.basis
            .iter()
            .enumerate()
            .map(|(pp, &id)| {
                let target = if pp == p { -1.0 } else { 0.0 };
                (self.dot(id, d) - target).abs()
            })
            .fold(0.0, f64::max)
    }

    fn run(&mut self, stop_on_enter: Option<usize>) -> Result<Outcome> {
        let total = self.total_constraints();
        let mut fresh = false;
        loop {
            let bland = self.iterations >= self.bland_after;
            let y = self.multipliers();
            let mut leave = None;
            let mut best = -OPT_TOL;
            for (p, &yp) in y.iter().enumerate() {
                if yp < -OPT_TOL {
                    let better = if bland {
                        leave.is_none_or(|lp: usize| self.basis[p] < self.basis[lp])
                    } else {
                        yp < best
                    };
                    if better {
                        leave = Some(p);
                        best = yp;
                    }
                }
            }
            let Some(p) = leave else {
                return Ok(Outcome::Optimal);
            };

            let d = self.direction(p);
            if !fresh && self.direction_residual(&d, p) > REFACTOR_TOL {
                self.refactor()?;
                fresh = true;
                continue;
            }
            fresh = false;

            let mut candidates = Vec::new();
            let mut t_max = f64::INFINITY;
            for id in 0..total {
                if self.in_basis[id] {
                    continue;
                }
                let ad = self.dot(id, &d);
                if ad <= PIVOT_TOL {
                    continue;
                }
                let slack = (self.rhs(id) - self.dot(id, &self.x)).max(0.0);
                t_max = t_max.min((slack + HARRIS_DELTA) / ad);
                candidates.push((id, ad, slack));
            }
            if candidates.is_empty() {
                return Ok(Outcome::Unbounded);
            }
            let mut enter: Option<(usize, f64, f64)> = None;
            if bland {
                for &(id, ad, slack) in &candidates {
                    let ratio = slack / ad;
                    let better = match enter {
                        None => true,
                        Some((eid, ead, es)) => {
                            let er = es / ead;
                            ratio < er - 1e-15 || (ratio <= er + 1e-15 && id < eid)
                        }
                    };
                    if better {
                        enter = Some((id, ad, slack));
                    }
                }
            } else {
                for &(id, ad, slack) in &candidates {
                    if slack / ad <= t_max && enter.is_none_or(|(_, ead, _)| ad > ead) {
                        enter = Some((id, ad, slack));
                    }
                }
            }
            let (q, alpha, slack) = enter.expect("candidate set is non-empty");
            let step = slack / alpha;
            for (xk, dk) in self.x.iter_mut().zip(&d) {
                *xk += step * dk;
            }
            self.replace(p, q, &d, alpha);
            self.iterations += 1;
            if self.iterations % RECOMPUTE_EVERY == 0 {
                self.recompute_x();
            }
            if self.iterations > self.cap {
                return Err(Error::NumericalFailure(format!(
                    "active-set simplex exceeded {} iterations",
                    self.cap
                )));
            }
            if Some(q) == stop_on_enter {
                return Ok(Outcome::Stopped);
            }
        }
    }
}

fn solve_working(rows: Rows, lo: Vec<f64>, hi: Vec<f64>, c: Vec<f64>) -> Result<Working> {
    let n = lo.len();
    let m = rows.len();
    let size = m + n;
    let bland_after = 10 * size;
    let cap = 50 * size;

    // Start from the box corner the objective prefers.
    let at_upper: Vec<bool> = c.iter().map(|v| *v < 0.0).collect();
    let x0: Vec<f64> = (0..n).map(|j| if at_upper[j] { hi[j] } else { lo[j] }).collect();
    let violation = (0..m)
        .map(|i| rows.entries(i).map(|(j, v)| v * x0[j]).sum::<f64>() - rows.rhs[i])
        .fold(0.0, f64::max);

    let corner = |n_ext: usize| -> (Vec<usize>, Vec<f64>) {
        let mut basis = Vec::with_capacity(n_ext);
        let mut binv = vec![0.0; n_ext * n_ext];
        for j in 0..n {
            if at_upper[j] {
                basis.push(m + j);
                binv[j * n_ext + j] = 1.0;
            } else {
                basis.push(m + n_ext + j);
                binv[j * n_ext + j] = -1.0;
            }
        }
        (basis, binv)
    };

    let (basis, binv, x, iterations) = if violation <= FEAS_TOL {
        (corner(n).0, corner(n).1, x0, 0)
    } else {
        // Phase 1: a single artificial t relaxes every row, starting at t = v.
        let n1 = n + 1;
        let (mut basis, mut binv) = corner(n1);
        basis.push(m + n);
        binv[n * n1 + n] = 1.0;
        let mut lo1 = lo.clone();
        lo1.push(0.0);
        let mut hi1 = hi.clone();
        hi1.push(violation);
        let mut c1 = vec![0.0; n1];
        c1[n] = 1.0;
        let mut x1 = x0.clone();
        x1.push(violation);
        let mut in_basis = vec![false; m + 2 * n1];
        for &id in &basis {
            in_basis[id] = true;
        }
        let t_lower = m + n1 + n;
        let mut e = Engine {
            n: n1,
            rows: &rows,
            tail: Some(-1.0),
            lo: lo1,
            hi: hi1,
            c: c1,
            basis,
            in_basis,
            binv,
            x: x1,
            iterations: 0,
            bland_after,
            cap,
        };
        let outcome = e.run(Some(t_lower))?;
        if let Outcome::Optimal = outcome {
            e.recompute_x();
            if e.x[n] > FEAS_TOL {
                return Ok(Working::Failed { status: LpStatus::Infeasible, iterations: e.iterations });
            }
        }
        if !e.in_basis[t_lower] {
            // t is zero but not yet pinned by its bound: swap the bound in.
            let mut best: Option<(usize, f64)> = None;
            for p in 0..n1 {
                let a = e.binv[n * n1 + p].abs();
                if a > PIVOT_TOL && best.is_none_or(|(_, b)| a > b) {
                    best = Some((p, a));
                }
            }
            let (p, _) = best.ok_or_else(|| Error::NumericalFailure("cannot pin phase-one artificial".into()))?;
            let d = e.direction(p);
            let alpha = -d[n];
            e.replace(p, t_lower, &d, alpha);
        }
        let pt = e.basis.iter().position(|&id| id == t_lower).expect("artificial bound is basic");
        let mut basis = Vec::with_capacity(n);
        for (p, &id) in e.basis.iter().enumerate() {
            if p == pt {
                continue;
            }
            let mapped = if id < m + n1 {
                id
            } else {
                id - 1
            };
            basis.push(mapped);
        }
        let mut binv = vec![0.0; n * n];
        for k in 0..n {
            let mut col = 0;
            for p in 0..n1 {
                if p == pt {
                    continue;
                }
                binv[k * n + col] = e.binv[k * n1 + p];
                col += 1;
            }
        }
        let mut x = e.x;
        x.truncate(n);
        (basis, binv, x, e.iterations)
    };

    let mut in_basis = vec![false; m + 2 * n];
    for &id in &basis {
        in_basis[id] = true;
    }
    let mut e = Engine {
        n,
        rows: &rows,
        tail: None,
        lo,
        hi,
        c,
        basis,
        in_basis,
        binv,
        x,
        iterations,
        bland_after,
        cap,
    };
    e.recompute_x();
    match e.run(None)? {
        Outcome::Unbounded => Ok(Working::Failed { status: LpStatus::Unbounded, iterations: e.iterations }),
        _ => {
            e.recompute_x();
            Ok(Working::Solved { x: e.x, iterations: e.iterations })
        }
    }
}
