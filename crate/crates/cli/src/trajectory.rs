//! Trajectory tables: one row per knot with path state, joint state, and
//! the tightest constraint at that knot.

use std::io::{Read, Write};

use grasp_totp::constraints::knot_sddot;
use grasp_totp::totp::{timestamps, Planner, RowMargin};

use crate::exit::CliError;
use crate::format::fmt_num;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub k: usize,
    pub s: f64,
    pub x: f64,
    pub sdot: f64,
    pub sddot: f64,
    pub t: f64,
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub qdd: Vec<f64>,
    /// `None` when no row constrains the knot.
    pub min_margin: Option<f64>,
    pub active_row_label: String,
}

pub fn header(dof: usize) -> Vec<String> {
    let mut h: Vec<String> = ["k", "s", "x", "sdot", "sddot", "t"].iter().map(|s| s.to_string()).collect();
    for j in 0..dof {
        h.extend([format!("q_{j}"), format!("qd_{j}"), format!("qdd_{j}")]);
    }
    h.extend(["min_margin".to_string(), "active_row_label".to_string()]);
    h
}

/// Builds the table for `x` on the planner's grid, with margins from rows
/// rebuilt at `x`. Also returns the tightest row overall.
pub fn build_rows(planner: &Planner, x: &[f64]) -> grasp_totp::Result<(Vec<TrajectoryRow>, Option<RowMargin>)> {
    let grid = planner.grid();
    let margins = planner.margins(x)?;
    let mut tight: Vec<Option<RowMargin>> = vec![None; x.len()];
    for m in &margins {
        let slot = &mut tight[m.knot];
        if slot.is_none_or(|s| m.margin < s.margin) {
            *slot = Some(*m);
        }
    }
    let overall = margins.iter().copied().min_by(|a, b| a.margin.total_cmp(&b.margin));
    let t = timestamps(x, grid);
    let path = &planner.problem().path;
    let rows = (0..x.len())
        .map(|k| {
            let p = path.sample(grid[k]);
            let sdot = x[k].max(0.0).sqrt();
            let sddot = knot_sddot(x, grid, k);
            TrajectoryRow {
                k,
                s: grid[k],
                x: x[k],
                sdot,
                sddot,
                t: t[k],
                q: p.q.iter().copied().collect(),
                qd: (&p.dq * sdot).iter().copied().collect(),
                qdd: (&p.dq * sddot + &p.ddq * x[k]).iter().copied().collect(),
                min_margin: tight[k].map(|m| m.margin),
                active_row_label: tight[k].map(|m| m.label.to_string()).unwrap_or_default(),
            }
        })
        .collect();
    Ok((rows, overall))
}

pub fn write_csv<W: Write>(w: W, dof: usize, rows: &[TrajectoryRow]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(header(dof))?;
    for r in rows {
        let mut rec = vec![r.k.to_string()];
        rec.extend([r.s, r.x, r.sdot, r.sddot, r.t].map(fmt_num));
        for j in 0..dof {
            rec.extend([r.q[j], r.qd[j], r.qdd[j]].map(fmt_num));
        }
        rec.push(r.min_margin.map(fmt_num).unwrap_or_default());
        rec.push(r.active_row_label.clone());
        wtr.write_record(rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parses a table written by [`write_csv`]. The header must match exactly.
pub fn read_csv<R: Read>(r: R) -> Result<Vec<TrajectoryRow>, CliError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(r);
    let err = |line: u64, msg: String| CliError::parse(format!("line {line}: {msg}"));
    let head: Vec<String> = rdr.headers().map_err(|e| err(1, e.to_string()))?.iter().map(str::to_string).collect();
    if head.len() < 11 || (head.len() - 8) % 3 != 0 {
        return Err(err(1, format!("unexpected column count {}", head.len())));
    }
    let dof = (head.len() - 8) / 3;
    if head != header(dof) {
        return Err(err(1, format!("expected header `{}`", header(dof).join(","))));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64, CliError> {
            rec[i].trim().parse::<f64>().map_err(|e| err(line, format!("column `{}`: `{}`: {e}", head[i], &rec[i])))
        };
        let k: usize = rec[0].trim().parse().map_err(|e| err(line, format!("column `k`: `{}`: {e}", &rec[0])))?;
        if k != rows.len() {
            return Err(err(line, format!("expected k = {}, got {k}", rows.len())));
        }
        let joint = |offset: usize| (0..dof).map(|j| num(6 + 3 * j + offset)).collect::<Result<Vec<_>, _>>();
        let margin_col = 6 + 3 * dof;
        rows.push(TrajectoryRow {
            k,
            s: num(1)?,
            x: num(2)?,
            sdot: num(3)?,
            sddot: num(4)?,
            t: num(5)?,
            q: joint(0)?,
            qd: joint(1)?,
            qdd: joint(2)?,
            min_margin: if rec[margin_col].trim().is_empty() { None } else { Some(num(margin_col)?) },
            active_row_label: rec[margin_col + 1].to_string(),
        });
    }
    if rows.len() < 2 {
        return Err(err(1, "a trajectory needs at least two knots".into()));
    }
    Ok(rows)
}

/// Checks that `rows` sit on `grid` and have admissible `x`, and returns `x`.
pub fn x_on_grid(rows: &[TrajectoryRow], grid: &[f64]) -> Result<Vec<f64>, CliError> {
    if rows.len() != grid.len() {
        return Err(CliError::parse(format!(
            "trajectory has {} knots, scenario grid has {}",
            rows.len(),
            grid.len()
        )));
    }
    for (r, s) in rows.iter().zip(grid) {
        if (r.s - s).abs() > 1e-9 * (1.0 + s.abs()) {
            return Err(CliError::parse(format!("knot {}: s = {} is off the scenario grid ({s})", r.k, r.s)));
        }
        if !(r.x >= 0.0 && r.x.is_finite()) {
            return Err(CliError::parse(format!("knot {}: x must be finite and non-negative, got {}", r.k, r.x)));
        }
    }
    Ok(rows.iter().map(|r| r.x).collect())
}
