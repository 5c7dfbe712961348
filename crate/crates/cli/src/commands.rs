use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use grasp_totp::calib::{self, FitOptions};
use grasp_totp::config::{self, WeightsDoc};
use grasp_totp::load_dist::{self, LoadDistribution, WeightMatrix};
use grasp_totp::par::Execution;
use grasp_totp::totp::{max_load_search, Planner, TotpProblem, FEASIBILITY_TOL};
use grasp_totp::{Error, Wrench};
use serde::Serialize;

use crate::cli::{CheckArgs, Cli, Command, DistributeArgs, ExportArgs, FitArgs, MaxloadArgs, PlanArgs, SynthArgs};
use crate::exit::{CliError, ExitStatus};
use crate::format::{fmt_num, json_num, round_sig};
use crate::trajectory;

/// Ring components below this fraction of the largest count as unused.
pub const SUPPORT_FRACTION: f64 = 0.01;

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<ExitStatus, CliError> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match cli.command {
        Command::Distribute(a) => distribute(a, out),
        Command::Plan(a) => plan(a, exec, out),
        Command::Check(a) => check(a, exec, out),
        Command::Maxload(a) => maxload(a, exec, out),
        Command::Fitweights(a) => fitweights(a, exec, out),
        Command::SynthSamples(a) => synth_samples(a, out),
        Command::ExportPresets(a) => export_presets(a, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::new(ExitStatus::Failure, format!("stdout: {e}")))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output serializes");
    s.push('\n');
    s
}

/// Writes through a temporary sibling so readers never see half a file.
fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    fill(tmp.as_file_mut()).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

fn distribution_table(title: &str, d: &LoadDistribution) -> String {
    let mut s = format!("{title}\n");
    let _ = writeln!(
        s,
        "{:>4} {:>14} {:>14} {:>14} {:>14} {:>14} {:>14}  compressed",
        "cup", "m_x", "m_y", "m_z", "f_x", "f_y", "f_z"
    );
    for (i, w) in d.per_cup_wrench.iter().enumerate() {
        let v = w.to_vector();
        let _ = write!(s, "{i:>4}");
        for c in v.iter() {
            let _ = write!(s, " {:>14}", fmt_num(*c));
        }
        let _ = writeln!(s, "  {}", d.compressed_flags[i]);
    }
    let per_cup = d.ring_forces.len() / d.per_cup_wrench.len();
    let _ = writeln!(s, "ring forces (N), {} points x (f_x, f_y, f_z) per cup:", per_cup / 3);
    for i in 0..d.per_cup_wrench.len() {
        let vals: Vec<String> = d.ring_forces.rows(i * per_cup, per_cup).iter().map(|v| fmt_num(*v)).collect();
        let _ = writeln!(s, "{i:>4} {}", vals.join(" "));
    }
    s
}

fn write_distribution_csv(path: &Path, tables: &[(&str, &LoadDistribution)]) -> Result<(), CliError> {
    write_atomic(path, |w| {
        let mut wtr = csv::Writer::from_writer(w);
        let per_cup = tables[0].1.ring_forces.len() / tables[0].1.per_cup_wrench.len();
        let mut head: Vec<String> = ["method", "cup", "m_x", "m_y", "m_z", "f_x", "f_y", "f_z", "compressed"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        head.extend((0..per_cup).map(|j| format!("ring_{}_{}", j / 3, ["f_x", "f_y", "f_z"][j % 3])));
        wtr.write_record(&head).map_err(csv_io)?;
        for (name, d) in tables {
            for (i, cup) in d.per_cup_wrench.iter().enumerate() {
                let mut rec = vec![name.to_string(), i.to_string()];
                rec.extend(cup.to_vector().iter().map(|v| fmt_num(*v)));
                rec.push(d.compressed_flags[i].to_string());
                rec.extend(d.ring_forces.rows(i * per_cup, per_cup).iter().map(|v| fmt_num(*v)));
                wtr.write_record(&rec).map_err(csv_io)?;
            }
        }
        wtr.flush()
    })
}

fn distribute(a: DistributeArgs, out: &mut dyn Write) -> Result<ExitStatus, CliError> {
    if a.wrench.len() != 6 {
        return Err(CliError::parse(format!("--wrench needs 6 values, got {}", a.wrench.len())));
    }
    let g = config::load_gripper(&a.gripper)?;
    let f_t = Wrench::from_slice(&a.wrench)?;
    let normal = WeightMatrix::uniform(g.num_cups(), g.weights().normal);
    let m = a.method;
    let mut tables: Vec<(&str, LoadDistribution)> = Vec::new();
    if m.compare {
        tables.push(("qp", load_dist::solve_distribution(&f_t, &g, &normal)?));
        tables.push(("lp", load_dist::solve_lp_distribution(&f_t, &g)?));
    } else if m.lp {
        tables.push(("lp", load_dist::solve_lp_distribution(&f_t, &g)?));
    } else if m.adjusted {
        tables.push(("adjusted", load_dist::distribute_with_adjustment(&f_t, &g)?));
    } else {
        tables.push(("qp", load_dist::solve_distribution(&f_t, &g, &normal)?));
    }
    let mut text = String::new();
    for (name, d) in &tables {
        text += &distribution_table(&format!("method: {name}"), d);
        let _ = writeln!(
            text,
            "total: l1 = {}, support = {} of {}\n",
            fmt_num(d.l1_norm()),
            d.support_size(SUPPORT_FRACTION),
            d.ring_forces.len()
        );
    }
    if m.compare {
        let (qp, lp) = (&tables[0].1, &tables[1].1);
        let _ = writeln!(text, "comparison (support counts components above {SUPPORT_FRACTION} of the largest):");
        let _ = writeln!(text, "  qp: support {:>3}, l1 {}", qp.support_size(SUPPORT_FRACTION), fmt_num(qp.l1_norm()));
        let _ = writeln!(text, "  lp: support {:>3}, l1 {}", lp.support_size(SUPPORT_FRACTION), fmt_num(lp.l1_norm()));
        let _ = writeln!(
            text,
            "  weighted energy with normal weights: qp {}, lp {}",
            fmt_num(qp.energy()),
            fmt_num(load_dist::weighted_energy(&lp.ring_forces, &normal))
        );
    }
    emit(out, &text)?;
    if let Some(path) = &a.csv {
        let refs: Vec<(&str, &LoadDistribution)> = tables.iter().map(|(n, d)| (*n, d)).collect();
        write_distribution_csv(path, &refs)?;
    }
    Ok(ExitStatus::Ok)
}

fn load_problem(path: &Path, grasp: bool, no_grasp: bool, exec: Execution) -> Result<TotpProblem, CliError> {
    let mut p = config::load_scenario(path)?;
    if grasp {
        p.options.grasp_enabled = true;
    }
    if no_grasp {
        p.options.grasp_enabled = false;
    }
    p.options.execution = exec;
    Ok(p)
}

/// Keys fixed for downstream scripts.
#[derive(Debug, Serialize)]
pub struct PlanSummary {
    /// `null` when the trajectory never arrives.
    pub total_time_s: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub min_margin: Option<f64>,
    pub statically_infeasible: bool,
}

fn plan(a: PlanArgs, exec: Execution, out: &mut dyn Write) -> Result<ExitStatus, CliError> {
    let problem = load_problem(&a.scenario, a.grasp, a.no_grasp, exec)?;
    let planner = Planner::new(&problem)?;
    let report = |s: &PlanSummary, out: &mut dyn Write| -> Result<(), CliError> {
        let text = to_json(s);
        if let Some(path) = &a.summary {
            write_atomic(path, |w| w.write_all(text.as_bytes()))?;
        }
        emit(out, &text)
    };
    let sol = match planner.solve() {
        Ok(sol) => sol,
        Err(e @ Error::StaticallyInfeasible { .. }) => {
            let s = PlanSummary {
                total_time_s: None,
                iterations: 0,
                converged: false,
                min_margin: None,
                statically_infeasible: true,
            };
            report(&s, out)?;
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    // Margins come from the values as written, so re-checking the CSV
    // reproduces them.
    let x: Vec<f64> = sol.x.iter().map(|v| round_sig(*v)).collect();
    let (rows, tightest) = trajectory::build_rows(&planner, &x)?;
    if let Some(path) = &a.csv {
        write_atomic(path, |w| trajectory::write_csv(w, problem.chain.dof(), &rows).map_err(csv_io))?;
    }
    let total_time = grasp_totp::totp::timestamps(&x, planner.grid()).last().copied().unwrap_or(0.0);
    let arrives = total_time.is_finite();
    let s = PlanSummary {
        total_time_s: json_num(total_time),
        iterations: sol.iterations,
        converged: sol.converged && arrives,
        min_margin: tightest.and_then(|m| json_num(m.margin)),
        statically_infeasible: false,
    };
    report(&s, out)?;
    if s.converged {
        Ok(ExitStatus::Ok)
    } else {
        let why = if arrives {
            format!("no convergence within {} iterations", problem.options.max_iters)
        } else {
            "the limits admit no motion along the path".to_string()
        };
        eprintln!("warning: {why}");
        Ok(ExitStatus::NotConverged)
    }
}

fn read_trajectory(path: &Path, planner: &Planner) -> Result<Vec<f64>, CliError> {
    let file = File::open(path).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    let rows = trajectory::read_csv(BufReader::new(file)).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    let dof = rows[0].q.len();
    if dof != planner.problem().chain.dof() {
        return Err(CliError::parse(format!(
            "{}: trajectory has {dof} joints, scenario chain has {}",
            path.display(),
            planner.problem().chain.dof()
        )));
    }
    trajectory::x_on_grid(&rows, planner.grid()).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize)]
struct CheckReport {
    min_margin: Option<f64>,
    knot: Option<usize>,
    active_row_label: Option<String>,
    violated_rows: usize,
    tolerance: f64,
}

fn check(a: CheckArgs, exec: Execution, out: &mut dyn Write) -> Result<ExitStatus, CliError> {
    let problem = load_problem(&a.scenario, a.grasp, a.no_grasp, exec)?;
    let planner = Planner::new(&problem)?;
    let x = read_trajectory(&a.trajectory, &planner)?;
    let margins = planner.margins(&x)?;
    let tightest = margins.iter().min_by(|a, b| a.margin.total_cmp(&b.margin));
    let r = CheckReport {
        min_margin: tightest.and_then(|m| json_num(m.margin)),
        knot: tightest.map(|m| m.knot),
        active_row_label: tightest.map(|m| m.label.to_string()),
        violated_rows: margins.iter().filter(|m| m.margin < -FEASIBILITY_TOL).count(),
        tolerance: FEASIBILITY_TOL,
    };
    emit(out, &to_json(&r))?;
    Ok(ExitStatus::Ok)
}

#[derive(Debug, Serialize)]
struct MaxloadReport {
    max_load_kg: f64,
    active_row_label: Option<String>,
}

fn maxload(a: MaxloadArgs, exec: Execution, out: &mut dyn Write) -> Result<ExitStatus, CliError> {
    let problem = load_problem(&a.scenario, true, false, exec)?;
    let x = match &a.trajectory {
        Some(path) => read_trajectory(path, &Planner::new(&problem)?)?,
        None => vec![0.0; problem.options.n_knots + 1],
    };
    let m = max_load_search(&problem, &x)?;
    let r = MaxloadReport {
        max_load_kg: round_sig(m.mass_kg),
        active_row_label: m.active_row.map(|r| r.label.to_string()),
    };
    emit(out, &to_json(&r))?;
    Ok(ExitStatus::Ok)
}

#[derive(Debug, Serialize)]
struct FitOutput {
    weights: WeightsDoc,
    objective: f64,
    baseline_objective: f64,
    degenerate: bool,
    samples: usize,
    seed: u64,
    starts: usize,
    full_wrench: bool,
}

fn fitweights(a: FitArgs, exec: Execution, out: &mut dyn Write) -> Result<ExitStatus, CliError> {
    let g = config::load_gripper(&a.gripper)?;
    let file = File::open(&a.dataset).map_err(|e| CliError::parse(format!("{}: {e}", a.dataset.display())))?;
    let (cups, samples) = calib::read_samples(BufReader::new(file))
        .map_err(|e| CliError::parse(format!("{}: {e}", a.dataset.display())))?;
    if cups != g.num_cups() {
        return Err(CliError::parse(format!(
            "{}: dataset has {cups} cups, gripper has {}",
            a.dataset.display(),
            g.num_cups()
        )));
    }
    let opts = FitOptions {
        starts: a.starts,
        seed: a.seed,
        full_wrench: a.full_wrench,
        execution: exec,
        ..FitOptions::default()
    };
    let fit = calib::fit_weights(&samples, &g, &opts)?;
    let mut w = WeightsDoc::from_model(&fit.weights);
    w.normal = w.normal.map(round_sig);
    w.compressed = w.compressed.map(round_sig);
    w.fz_threshold_n = round_sig(w.fz_threshold_n);
    let result = FitOutput {
        weights: w,
        objective: round_sig(fit.objective),
        baseline_objective: round_sig(fit.baseline_objective),
        degenerate: fit.degenerate,
        samples: samples.len(),
        seed: a.seed,
        starts: a.starts,
        full_wrench: a.full_wrench,
    };
    let text = to_json(&result);
    if let Some(path) = &a.output {
        write_atomic(path, |w| w.write_all(text.as_bytes()))?;
    }
    if let Some(path) = &a.residuals {
        let res = calib::sample_residuals(&samples, &g, &fit.weights, a.full_wrench)?;
        write_atomic(path, |w| {
            let mut wtr = csv::Writer::from_writer(w);
            wtr.write_record(["sample", "residual"]).map_err(csv_io)?;
            for (i, r) in res.iter().enumerate() {
                wtr.write_record([i.to_string(), fmt_num(*r)]).map_err(csv_io)?;
            }
            wtr.flush()
        })?;
    }
    if fit.degenerate {
        eprintln!("warning: the objective is flat in some direction; the fitted weights are not unique");
    }
    emit(out, &text)?;
    Ok(ExitStatus::Ok)
}

fn synth_samples(a: SynthArgs, out: &mut dyn Write) -> Result<ExitStatus, CliError> {
    let g = config::load_gripper(&a.gripper)?;
    let weights = match &a.weights {
        Some(p) => config::read_doc::<WeightsDoc>(p)?.to_model().map_err(|e| CliError::parse(format!("{}: {e}", p.display())))?,
        None => *g.weights(),
    };
    if !(a.noise >= 0.0 && a.noise.is_finite()) {
        return Err(CliError::parse("--noise must be finite and non-negative"));
    }
    let samples = calib::synthesize_samples(&g, &weights, &calib::random_excitation(a.count, a.seed), a.noise, a.seed)?;
    let mut buf = Vec::new();
    calib::write_samples(&mut buf, &samples)?;
    write_atomic(&a.output, |w| w.write_all(&buf))?;
    emit(out, &format!("wrote {} samples to {}\n", samples.len(), a.output.display()))?;
    Ok(ExitStatus::Ok)
}

fn export_presets(a: ExportArgs, out: &mut dyn Write) -> Result<ExitStatus, CliError> {
    let written = config::export_presets(&a.dir).map_err(|e| CliError::new(ExitStatus::Failure, e.to_string()))?;
    let mut text = String::new();
    for p in written {
        let _ = writeln!(text, "{}", p.display());
    }
    emit(out, &text)?;
    Ok(ExitStatus::Ok)
}
