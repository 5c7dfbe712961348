//! Dense two-phase tableau simplex.

use nalgebra::DVector;

use super::{LinearProgram, LpSolution, LpStatus, FEAS_TOL, OPT_TOL, PIVOT_TOL};
use crate::error::{Error, Result};

/// How an original variable is rebuilt from nonnegative tableau columns.
enum VarMap {
    Shift { col: usize, lo: f64 },
    Reflect { col: usize, hi: f64 },
    Split { pos: usize, neg: usize },
}

enum Origin {
    Ineq(usize),
    Eq(usize),
    Bound,
}

struct Row {
    coef: Vec<f64>,
    rhs: f64,
    equality: bool,
    origin: Origin,
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// Row-major `rows × (cols + 1)`, rhs in the last column.
    data: Vec<f64>,
    /// Phase-2 and phase-1 reduced-cost rows, objective in the last slot.
    cost: [Vec<f64>; 2],
    basis: Vec<usize>,
}

impl Tableau {
    fn width(&self) -> usize {
        self.cols + 1
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width() + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = self.width();
        let p = self.data[r * w + q];
        for v in &mut self.data[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.data[r * w..(r + 1) * w].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.data[i * w + q];
            if f != 0.0 {
                for (v, pr) in self.data[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                self.data[i * w + q] = 0.0;
            }
        }
        for cost in &mut self.cost {
            let f = cost[q];
            if f != 0.0 {
                for (v, pr) in cost.iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                cost[q] = 0.0;
            }
        }
        self.basis[r] = q;
    }
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
}

struct Driver {
    iterations: usize,
    bland_after: usize,
    cap: usize,
}

impl Driver {
    fn run(&mut self, t: &mut Tableau, phase: usize, allowed: usize) -> Result<PhaseOutcome> {
        loop {
            let bland = self.iterations >= self.bland_after;
            let cost = &t.cost[phase];
            let mut entering = None;
            let mut best = -OPT_TOL;
            for (j, &d) in cost.iter().enumerate().take(allowed) {
                if d < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(q) = entering else {
                return Ok(PhaseOutcome::Optimal);
            };

            let mut leave: Option<(usize, f64, f64)> = None;
            for r in 0..t.rows {
                let a = t.at(r, q);
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = t.rhs(r).max(0.0) / a;
                leave = match leave {
                    None => Some((r, ratio, a)),
                    Some((br, bratio, ba)) => {
                        let tie = (ratio - bratio).abs() <= 1e-12 * (1.0 + bratio.abs());
                        let better = if tie {
                            if bland {
                                t.basis[r] < t.basis[br]
                            } else {
                                a > ba
                            }
                        } else {
                            ratio < bratio
                        };
                        if better {
                            Some((r, ratio, a))
                        } else {
                            Some((br, bratio, ba))
                        }
                    }
                };
            }
            let Some((r, _, _)) = leave else {
                return Ok(PhaseOutcome::Unbounded);
            };
            t.pivot(r, q);
            self.iterations += 1;
            if self.iterations > self.cap {
                return Err(Error::NumericalFailure(format!(
                    "simplex exceeded {} iterations",
                    self.cap
                )));
            }
        }
    }
}

/// Solves a general linear program with the two-phase tableau method.
///
/// Finite upper bounds on bounded variables are carried as extra rows.
/// Deterministic: pricing is Dantzig's rule, switching to Bland's rule after
/// `10 (m + n)` pivots.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.num_vars();

    let mut maps = Vec::with_capacity(n);
    let mut ny = 0;
    let mut bound_rows = Vec::new();
    for (lo, hi) in &lp.bounds {
        match (lo, hi) {
            (Some(l), h) => {
                maps.push(VarMap::Shift { col: ny, lo: *l });
                if let Some(h) = h {
                    bound_rows.push((ny, h - l));
                }
                ny += 1;
            }
            (None, Some(h)) => {
                maps.push(VarMap::Reflect { col: ny, hi: *h });
                ny += 1;
            }
            (None, None) => {
                maps.push(VarMap::Split { pos: ny, neg: ny + 1 });
                ny += 2;
            }
        }
    }

    let transform = |a: &[f64], rhs: f64| -> (Vec<f64>, f64) {
        let mut coef = vec![0.0; ny];
        let mut rhs = rhs;
        for (j, m) in maps.iter().enumerate() {
            let v = a[j];
            match *m {
                VarMap::Shift { col, lo } => {
                    coef[col] += v;
                    rhs -= v * lo;
                }
                VarMap::Reflect { col, hi } => {
                    coef[col] -= v;
                    rhs -= v * hi;
                }
                VarMap::Split { pos, neg } => {
                    coef[pos] += v;
                    coef[neg] -= v;
                }
            }
        }
        (coef, rhs)
    };

    let mut rows = Vec::new();
    for i in 0..lp.ineq_matrix.nrows() {
        let a: Vec<f64> = lp.ineq_matrix.row(i).iter().copied().collect();
        let (coef, rhs) = transform(&a, lp.ineq_rhs[i]);
        rows.push(Row { coef, rhs, equality: false, origin: Origin::Ineq(i) });
    }
    for i in 0..lp.eq_matrix.nrows() {
        let a: Vec<f64> = lp.eq_matrix.row(i).iter().copied().collect();
        let (coef, rhs) = transform(&a, lp.eq_rhs[i]);
        rows.push(Row { coef, rhs, equality: true, origin: Origin::Eq(i) });
    }
    for (col, width) in bound_rows {
        let mut coef = vec![0.0; ny];
        coef[col] = 1.0;
        rows.push(Row { coef, rhs: width, equality: false, origin: Origin::Bound });
    }

    let mut cost_y = vec![0.0; ny];
    for (j, m) in maps.iter().enumerate() {
        let c = lp.objective[j];
        match *m {
            VarMap::Shift { col, .. } => cost_y[col] += c,
            VarMap::Reflect { col, .. } => cost_y[col] -= c,
            VarMap::Split { pos, neg } => {
                cost_y[pos] += c;
                cost_y[neg] -= c;
            }
        }
    }

    // Column layout: structural, slack/surplus, artificial.
    let m = rows.len();
    let n_slack = rows.iter().filter(|r| !r.equality).count();
    let sign: Vec<f64> = rows.iter().map(|r| if r.rhs < 0.0 { -1.0 } else { 1.0 }).collect();
    let needs_art: Vec<bool> = rows.iter().zip(&sign).map(|(r, s)| r.equality || *s < 0.0).collect();
    let n_art = needs_art.iter().filter(|b| **b).count();
    let cols = ny + n_slack + n_art;
    let art_start = ny + n_slack;
    let w = cols + 1;

    let mut data = vec![0.0; m * w];
    let mut basis = vec![0; m];
    let mut plus_col = vec![0; m];
    let (mut next_slack, mut next_art) = (ny, art_start);
    for (r, row) in rows.iter().enumerate() {
        let s = sign[r];
        for (j, v) in row.coef.iter().enumerate() {
            data[r * w + j] = s * v;
        }
        data[r * w + cols] = s * row.rhs;
        if !row.equality {
            data[r * w + next_slack] = s;
            if s > 0.0 {
                basis[r] = next_slack;
                plus_col[r] = next_slack;
            }
            next_slack += 1;
        }
        if needs_art[r] {
            data[r * w + next_art] = 1.0;
            basis[r] = next_art;
            plus_col[r] = next_art;
            next_art += 1;
        }
    }

    let mut cost2 = vec![0.0; w];
    cost2[..ny].copy_from_slice(&cost_y);
    let mut cost1 = vec![0.0; w];
    for c in &mut cost1[art_start..cols] {
        *c = 1.0;
    }
    for r in 0..m {
        if basis[r] >= art_start {
            for j in 0..w {
                cost1[j] -= data[r * w + j];
            }
        }
    }

    let mut t = Tableau { rows: m, cols, data, cost: [cost2, cost1], basis };
    let size = m + cols;
    let mut driver = Driver { iterations: 0, bland_after: 10 * size, cap: 50 * size.max(1) };

    if n_art > 0 {
        driver.run(&mut t, 1, cols)?;
        let infeasibility = -t.cost[1][cols];
        let scale = rows.iter().map(|r| r.rhs.abs()).fold(1.0, f64::max);
        if infeasibility > FEAS_TOL * scale {
            return Ok(LpSolution::non_optimal(n, LpStatus::Infeasible));
        }
        for r in 0..m {
            if t.basis[r] < art_start {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..art_start {
                let a = t.at(r, j).abs();
                if a > PIVOT_TOL && best.is_none_or(|(_, b)| a > b) {
                    best = Some((j, a));
                }
            }
            if let Some((j, _)) = best {
                t.pivot(r, j);
            }
        }
    }

    if let PhaseOutcome::Unbounded = driver.run(&mut t, 0, art_start)? {
        return Ok(LpSolution::non_optimal(n, LpStatus::Unbounded));
    }

    let mut y = vec![0.0; cols];
    for r in 0..m {
        y[t.basis[r]] = t.rhs(r);
    }
    let x = DVector::from_iterator(
        n,
        maps.iter().map(|m| match *m {
            VarMap::Shift { col, lo } => lo + y[col],
            VarMap::Reflect { col, hi } => hi - y[col],
            VarMap::Split { pos, neg } => y[pos] - y[neg],
        }),
    );

    let mut ineq_duals = DVector::zeros(lp.ineq_matrix.nrows());
    let mut eq_duals = DVector::zeros(lp.eq_matrix.nrows());
    for (r, row) in rows.iter().enumerate() {
        let dual = sign[r] * t.cost[0][plus_col[r]];
        match row.origin {
            Origin::Ineq(i) => ineq_duals[i] = dual,
            Origin::Eq(i) => eq_duals[i] = dual,
            Origin::Bound => {}
        }
    }

    Ok(LpSolution {
        objective_value: lp.objective.dot(&x),
        x,
        status: LpStatus::Optimal,
        ineq_duals,
        eq_duals,
    })
}
