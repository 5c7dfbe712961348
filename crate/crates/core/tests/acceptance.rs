//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use grasp_totp::calib::{self, FitOptions};
use grasp_totp::dynamics::{parameterize_wrench, path_derivative_step, KinematicChain, ObjectModel, RevoluteJoint};
use grasp_totp::load_dist::{self, LoadDistribution, WeightMatrix};
use grasp_totp::lp::sparse::BoxedLp;
use grasp_totp::lp::{solve_lp, LinearProgram, LpStatus};
use grasp_totp::par::Execution;
use grasp_totp::presets;
use grasp_totp::spline::PathSpec;
use grasp_totp::totp::{max_load_search, solve_totp, Planner, TotpProblem, FEASIBILITY_TOL};
use grasp_totp::{RigidTransform, StiffnessWeights, ThresholdDirection, Wrench};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_wrench(rng: &mut ChaCha8Rng, moment: f64, force: f64) -> Wrench {
    Wrench::new(
        Vector3::from_fn(|_, _| rng.gen_range(-moment..moment)),
        Vector3::from_fn(|_, _| rng.gen_range(-force..force)),
    )
}

/// Orthonormal basis of the null space of `a`, from its SVD.
fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    let svd = a.transpose().svd(true, false);
    let u = svd.u.unwrap();
    assert_eq!(u.shape(), (n, m.min(n)));
    // Complete the column space of Aᵀ to the full space.
    let proj = DMatrix::identity(n, n) - &u * u.transpose();
    let svd = proj.svd(true, false);
    let vals = svd.singular_values;
    let basis = svd.u.unwrap();
    let cols: Vec<DVector<f64>> = (0..n).filter(|&i| vals[i] > 0.5).map(|i| basis.column(i).into_owned()).collect();
    DMatrix::from_columns(&cols)
}

fn qp_optimality() -> Outcome {
    let start = Instant::now();
    let g = presets::six_cup_testbed();
    let a = g.distribution_matrices().map_err(|e| e.to_string())?.a;
    let weights = WeightMatrix::uniform(g.num_cups(), g.weights().normal);
    let w = weights.diagonal();
    let null = null_space(&a);
    ensure(null.ncols() == a.ncols() - 6, || format!("null space has {} columns", null.ncols()))?;
    let dist = load_dist::Distributor::new(&g).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut eq_worst, mut kkt_worst, mut dominated) = (0.0f64, 0.0f64, 0usize);
    let energy = |f: &DVector<f64>| f.iter().zip(w.iter()).map(|(f, w)| w * f * f).sum::<f64>();
    for _ in 0..1000 {
        let f_t = random_wrench(&mut rng, 30.0, 300.0);
        let sol = dist.solve(&f_t, &weights).map_err(|e| e.to_string())?;
        let f = &sol.ring_forces;
        let target = f_t.to_vector();
        let ft = DVector::from_column_slice(target.as_slice());
        let eq = (&a * f - &ft).norm() / (1.0 + ft.norm());
        // Stationarity: 2Wf must lie in the row space of A.
        let grad = DVector::from_iterator(f.len(), f.iter().zip(w.iter()).map(|(f, w)| 2.0 * w * f));
        let kkt = (null.transpose() * &grad).norm();
        eq_worst = eq_worst.max(eq);
        kkt_worst = kkt_worst.max(kkt);
        let e0 = energy(f);
        for _ in 0..100 {
            let z = DVector::from_fn(null.ncols(), |_, _| rng.gen_range(-1.0..1.0));
            let scale = rng.gen_range(1e-3..10.0);
            if energy(&(f + &null * z * scale)) >= e0 {
                dominated += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(eq_worst <= 1e-9, || format!("equality residual {eq_worst:.3e}"))?;
    ensure(kkt_worst <= 1e-8, || format!("stationarity residual {kkt_worst:.3e}"))?;
    ensure(dominated == 100_000, || format!("{} perturbations beat the solution", 100_000 - dominated))?;
    ensure(secs < 5.0, || format!("took {secs:.2} s"))?;
    Ok(format!(
        "1000 wrenches, relative equality residual {eq_worst:.1e}, stationarity {kkt_worst:.1e}, 100000/100000 perturbations dominated, {secs:.2} s"
    ))
}

fn skew_vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]) * 0.5
}

/// Wrench on the object from finite differences of forward kinematics in
/// time and the rigid-body equations at the center of mass.
fn direct_wrench(chain: &KinematicChain, path: &PathSpec, obj: &ObjectModel, s: f64, sdot: f64, sddot: f64) -> Wrench {
    let h = 2.5e-4;
    let pose = |t: f64| chain.forward_kinematics(&path.q(s + sdot * t + 0.5 * sddot * t * t)).unwrap();
    let samples: Vec<_> = [-2.0, -1.0, 0.0, 1.0, 2.0].iter().map(|k| pose(k * h)).collect();
    let d1 = |f: &dyn Fn(&RigidTransform) -> Matrix3<f64>| {
        (-f(&samples[4]) + f(&samples[3]) * 8.0 - f(&samples[1]) * 8.0 + f(&samples[0])) / (12.0 * h)
    };
    let d2 = |f: &dyn Fn(&RigidTransform) -> Matrix3<f64>| {
        (-f(&samples[4]) + f(&samples[3]) * 16.0 - f(&samples[2]) * 30.0 + f(&samples[1]) * 16.0 - f(&samples[0]))
            / (12.0 * h * h)
    };
    let rot = |t: &RigidTransform| *t.rotation();
    let pos = |t: &RigidTransform| Matrix3::from_columns(&[*t.translation(), Vector3::zeros(), Vector3::zeros()]);
    let r0 = rot(&samples[2]);
    let omega_w = skew_vee(&(d1(&rot) * r0.transpose()));
    let alpha_w = skew_vee(&(d2(&rot) * r0.transpose()));
    let acc_w = d2(&pos).column(0).into_owned();

    let w = r0.transpose() * omega_w;
    let alpha = r0.transpose() * alpha_w;
    let acc = r0.transpose() * acc_w;
    let g = r0.transpose() * chain.gravity();
    let p = *obj.com_offset();
    let i = *obj.inertia();
    let m = obj.mass();
    let a_com = acc + alpha.cross(&p) + w.cross(&w.cross(&p));
    let force = (a_com - g) * m;
    let moment = i * alpha + w.cross(&(i * w)) + p.cross(&force);
    Wrench::new(moment, force)
}

fn affine_exactness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let unit = |rng: &mut ChaCha8Rng| Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0_f64)).normalize();
    let joints: Vec<RevoluteJoint> = (0..3)
        .map(|_| {
            let axis = unit(&mut rng);
            let origin = Vector3::from_fn(|_, _| rng.gen_range(-0.05..0.05));
            let rot_axis = unit(&mut rng);
            let offset = RigidTransform::from_axis_angle(
                &rot_axis,
                rng.gen_range(-1.0..1.0),
                Vector3::from_fn(|_, _| rng.gen_range(-0.4..0.4)),
            );
            RevoluteJoint::new(axis, origin, offset).unwrap()
        })
        .collect();
    let tool_axis = unit(&mut rng);
    let chain = KinematicChain::new(joints, RigidTransform::from_axis_angle(&tool_axis, 0.7, Vector3::new(0.1, -0.05, 0.2))).unwrap();
    let knots = (0..6).map(|_| DVector::from_fn(3, |_, _| rng.gen_range(-1.5..1.5))).collect();
    let path = PathSpec::uniform(knots).unwrap();
    let l = Matrix3::from_fn(|_, _| rng.gen_range(-0.2..0.2));
    let obj = ObjectModel::new(3.7, l * l.transpose() + Matrix3::identity() * 0.02, Vector3::new(0.02, -0.01, 0.08)).unwrap();
    let h = path_derivative_step(0.2);

    let mut worst = 0.0f64;
    let mut count = 0;
    while count < 50 {
        let s: f64 = rng.gen_range(0.03..0.97);
        if (s * 5.0 - (s * 5.0).round()).abs() < 0.1 {
            continue;
        }
        let (sdot, sddot) = (rng.gen_range(0.0..2.0), rng.gen_range(-3.0..3.0));
        let form = parameterize_wrench(&chain, &path, &obj, s, h).map_err(|e| e.to_string())?;
        let affine = form.evaluate(sdot * sdot, sddot).to_vector();
        let direct = direct_wrench(&chain, &path, &obj, s, sdot, sddot).to_vector();
        worst = worst.max((affine - direct).norm() / (1.0 + direct.norm()));
        count += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-6, || format!("relative deviation {worst:.3e}"))?;
    ensure(secs < 2.0, || format!("took {secs:.2} s"))?;
    Ok(format!("50 samples on a random 3-joint chain, worst relative deviation {worst:.1e}, {secs:.2} s"))
}

fn support(d: &LoadDistribution) -> usize {
    let max = d.ring_forces.amax();
    d.ring_forces.iter().filter(|v| v.abs() > 1e-9 * max).count()
}

fn lp_vs_qp() -> Outcome {
    let g = presets::six_cup_testbed();
    let weights = WeightMatrix::uniform(g.num_cups(), g.weights().normal);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut lines = Vec::new();
    for i in 0..12 {
        let f_t = Wrench::new(
            Vector3::new(rng.gen_range(-12.0..12.0), rng.gen_range(-12.0..12.0), rng.gen_range(-2.0..2.0)),
            Vector3::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(-250.0..-50.0)),
        );
        let qp = load_dist::solve_distribution(&f_t, &g, &weights).map_err(|e| e.to_string())?;
        let lp = load_dist::solve_lp_distribution(&f_t, &g).map_err(|e| e.to_string())?;
        let l1 = |d: &LoadDistribution| d.ring_forces.iter().map(|v| v.abs()).sum::<f64>();
        let energy = |d: &LoadDistribution| load_dist::weighted_energy(&d.ring_forces, &weights);
        ensure(support(&lp) <= support(&qp), || format!("wrench {i}: support {} > {}", support(&lp), support(&qp)))?;
        ensure(l1(&lp) <= l1(&qp) + 1e-9, || format!("wrench {i}: l1 {} > {}", l1(&lp), l1(&qp)))?;
        ensure(energy(&qp) <= energy(&lp) + 1e-9, || format!("wrench {i}: energy {} > {}", energy(&qp), energy(&lp)))?;
        lines.push((support(&lp), support(&qp)));
    }
    let lp_max = lines.iter().map(|l| l.0).max().unwrap();
    let qp_min = lines.iter().map(|l| l.1).min().unwrap();
    Ok(format!("12 off-center wrenches, LP support ≤ {lp_max}, QP support ≥ {qp_min}, norm and energy orderings hold"))
}

fn bang_bang() -> Outcome {
    let start = Instant::now();
    let p = presets::bang_bang_scenario();
    let planner = Planner::new(&p).map_err(|e| e.to_string())?;
    let sol = planner.solve().map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let rows = planner.stacked_rows(&sol.x).map_err(|e| e.to_string())?;
    let min = rows
        .iter()
        .map(|r| r.rhs - r.terms.iter().map(|(i, c)| c * sol.x[*i]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let exact = 2f64.sqrt();
    let rel = (sol.total_time - exact).abs() / exact;
    ensure(rel < 0.01, || format!("time {} vs {exact}", sol.total_time))?;
    ensure(min >= -1e-6, || format!("margin {min:.3e}"))?;
    ensure(secs < 30.0, || format!("took {secs:.2} s"))?;
    Ok(format!("T = {:.6} s (√2 to {:.1e}), min margin {min:.1e}, {secs:.2} s", sol.total_time, rel))
}

fn with_grasp(p: &TotpProblem, on: bool) -> TotpProblem {
    let mut o = p.options;
    o.grasp_enabled = on;
    p.with_options(o)
}

fn monotonicity() -> Outcome {
    let mut parts = Vec::new();
    for sc in presets::benchmark_scenarios() {
        let with = solve_totp(&with_grasp(&sc.problem, true)).map_err(|e| format!("{}: {e}", sc.name))?;
        let without = solve_totp(&with_grasp(&sc.problem, false)).map_err(|e| format!("{}: {e}", sc.name))?;
        ensure(with.total_time >= without.total_time - 1e-9, || {
            format!("{}: {} < {}", sc.name, with.total_time, without.total_time)
        })?;
        let ext = 100.0 * (with.total_time / without.total_time - 1.0);
        if sc.name == "sideways-heavy" {
            ensure(ext > 0.0, || format!("{}: no extension", sc.name))?;
        }
        parts.push(format!("{} {ext:+.2}%", sc.name));
    }
    Ok(format!("time extension: {}", parts.join(", ")))
}

fn flagged(w: &Wrench, weights: &StiffnessWeights) -> bool {
    let s = -w.force.z;
    match weights.threshold_direction {
        ThresholdDirection::LessThan => s < weights.compression_threshold,
        ThresholdDirection::GreaterThan => s > weights.compression_threshold,
    }
}

fn compression_adjustment() -> Outcome {
    let g = presets::six_cup_testbed();
    let w = *g.weights();
    let expected = [1.0, 1.0, 2.3682, 0.8369, 0.8369, 0.1321, -47.19];
    let got = [w.normal.x, w.normal.y, w.normal.z, w.compressed.x, w.compressed.y, w.compressed.z, w.compression_threshold];
    ensure(got == expected, || format!("preset weights {got:?}"))?;
    let normal = WeightMatrix::uniform(g.num_cups(), w.normal);

    let pressing = Wrench::new(Vector3::new(0.0, 6.0, 0.0), Vector3::new(0.0, 0.0, 240.0));
    let plain = load_dist::solve_distribution(&pressing, &g, &normal).map_err(|e| e.to_string())?;
    let flags: Vec<bool> = plain.per_cup_wrench.iter().map(|c| flagged(c, &w)).collect();
    let n_flagged = flags.iter().filter(|f| **f).count();
    ensure(n_flagged > 0 && n_flagged < g.num_cups(), || format!("{n_flagged} cups flagged"))?;
    let adjusted = load_dist::distribute_with_adjustment(&pressing, &g).map_err(|e| e.to_string())?;
    for (i, f) in flags.iter().enumerate() {
        let want = if *f { w.compressed } else { w.normal };
        ensure(adjusted.weights_used.per_cup[i] == want, || format!("cup {i} weights {:?}", adjusted.weights_used.per_cup[i]))?;
    }
    let grew = (0..g.num_cups())
        .filter(|&i| flags[i] && adjusted.per_cup_wrench[i].force.z.abs() > plain.per_cup_wrench[i].force.z.abs())
        .count();
    ensure(grew > 0, || "no flagged cup took more normal load".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..200 {
        let f_t = Wrench::new(
            Vector3::from_fn(|_, _| rng.gen_range(-3.0..3.0)),
            Vector3::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(-300.0..-20.0)),
        );
        let plain = load_dist::solve_distribution(&f_t, &g, &normal).map_err(|e| e.to_string())?;
        if plain.per_cup_wrench.iter().any(|c| flagged(c, &w)) {
            return Err(format!("pulling wrench {i} flagged a cup"));
        }
        let adjusted = load_dist::distribute_with_adjustment(&f_t, &g).map_err(|e| e.to_string())?;
        ensure(adjusted == plain, || format!("pulling wrench {i}: adjusted output differs"))?;
    }
    Ok(format!(
        "pressing wrench flags {n_flagged}/6 cups, only their weights change, {grew} of them carry more normal force; 200 unflagged wrenches bit-identical"
    ))
}

fn max_load() -> Outcome {
    let sc = &presets::benchmark_scenarios()[0];
    let p = &sc.problem;
    let sol = solve_totp(p).map_err(|e| e.to_string())?;
    let twice: Vec<f64> = sol.x.iter().map(|v| 4.0 * v).collect();
    let at = |x: &[f64]| max_load_search(p, x).map(|m| m.mass_kg).map_err(|e| e.to_string());
    let (fast, slow, rest) = (at(&twice)?, at(&sol.x)?, at(&vec![0.0; sol.x.len()])?);
    let oracle = p.gripper.cups().iter().map(|c| c.suction_force()).sum::<f64>() / p.chain.gravity().norm();
    ensure(fast <= slow && slow <= rest, || format!("{fast} / {slow} / {rest}"))?;
    ensure((rest - oracle).abs() <= 1e-3, || format!("statics {rest} vs {oracle}"))?;
    Ok(format!(
        "{}: 2x speed {fast:.3} kg ≤ 1x {slow:.3} kg ≤ rest {rest:.3} kg; oracle Σψ/g = {oracle:.4} kg",
        sc.name
    ))
}

fn slp_convergence() -> Outcome {
    let mut parts = Vec::new();
    for sc in presets::benchmark_scenarios() {
        let planner = Planner::new(&sc.problem).map_err(|e| e.to_string())?;
        let sol = planner.solve().map_err(|e| format!("{}: {e}", sc.name))?;
        let last = sol.history.last().ok_or("no iterations")?;
        ensure(sol.converged && last.step < 1e-6 && sol.iterations <= 50, || {
            format!("{}: converged {} after {} iterations, last step {:.2e}", sc.name, sol.converged, sol.iterations, last.step)
        })?;
        let worst_lp = sol.history.iter().map(|h| h.max_violation).fold(0.0, f64::max);
        ensure(worst_lp <= FEASIBILITY_TOL, || format!("{}: LP iterate violates its rows by {worst_lp:.2e}", sc.name))?;
        // Rows rebuilt at the solution and multiplied out by hand.
        let rows = planner.stacked_rows(&sol.x).map_err(|e| e.to_string())?;
        let mut min = f64::INFINITY;
        for r in &rows {
            let mut lhs = 0.0;
            for (i, c) in &r.terms {
                lhs += c * sol.x[*i];
            }
            min = min.min((r.rhs - lhs) / (1.0 + r.rhs.abs()));
        }
        ensure(min >= -1e-6, || format!("{}: final margin {min:.2e}", sc.name))?;
        // Joint limits straight from the path derivatives.
        let grid = planner.grid();
        let limits = &sc.problem.limits;
        for k in 0..grid.len() {
            let pt = sc.problem.path.sample(grid[k]);
            let (a, b) = if k + 1 < grid.len() { (k, k + 1) } else { (k - 1, k) };
            let sddot = (sol.x[b] - sol.x[a]) / (2.0 * (grid[b] - grid[a]));
            let qd = &pt.dq * sol.x[k].sqrt();
            let qdd = &pt.dq * sddot + &pt.ddq * sol.x[k];
            for j in 0..qd.len() {
                let v = limits.vel_max.as_ref().map_or(f64::INFINITY, |l| l[j]);
                let acc = limits.acc_max.as_ref().map_or(f64::INFINITY, |l| l[j]);
                ensure(qd[j].abs() <= v * (1.0 + 1e-6) && qdd[j].abs() <= acc * (1.0 + 1e-6) + 1e-6, || {
                    format!("{}: knot {k} joint {j} q̇ {} q̈ {}", sc.name, qd[j], qdd[j])
                })?;
            }
        }
        parts.push(format!("{} {}", sc.name, sol.iterations));
    }
    Ok(format!("iterations: {}", parts.join(", ")))
}

fn calibration() -> Outcome {
    let truth = presets::tilted_six_cup_testbed();
    let samples = calib::synthesize_samples(&truth, truth.weights(), &calib::random_excitation(150, 9), 0.0, 0)
        .map_err(|e| e.to_string())?;
    let neutral = calib::params_to_weights(&[1.0, 1.0, 1.0, 0.0], truth.weights());
    let start = truth.with_weights(neutral);
    let opts = FitOptions::default();
    let fit = calib::fit_weights(&samples, &start, &opts).map_err(|e| e.to_string())?;
    let got = calib::weights_to_params(&fit.weights);
    let want = calib::weights_to_params(truth.weights());
    for i in 0..4 {
        ensure((got[i] - want[i]).abs() <= 0.05 * want[i].abs(), || format!("parameters {got:?} vs {want:?}"))?;
    }
    let again = calib::fit_weights(&samples, &start, &opts).map_err(|e| e.to_string())?;
    let seq = calib::fit_weights(&samples, &start, &FitOptions { execution: Execution::Sequential, ..opts })
        .map_err(|e| e.to_string())?;
    ensure(again == fit && seq == fit, || "fit differs between runs".into())?;
    let worst = (0..4).map(|i| (got[i] - want[i]).abs() / want[i].abs()).fold(0.0, f64::max);
    Ok(format!("recovered {got:.4?} from neutral start, worst relative error {worst:.1e}, deterministic"))
}

/// Minimum of `cᵀx` over `{A x ≤ b, lo ≤ x ≤ hi}` by enumerating vertices.
fn vertex_oracle(c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>, lo: &[f64], hi: &[f64]) -> Option<f64> {
    let n = c.len();
    let mut rows: Vec<(DVector<f64>, f64)> = (0..a.nrows()).map(|i| (a.row(i).transpose(), b[i])).collect();
    for j in 0..n {
        let e = DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 });
        rows.push((-e.clone(), -lo[j]));
        rows.push((e, hi[j]));
    }
    let m = rows.len();
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let mat = DMatrix::from_fn(n, n, |r, col| rows[idx[r]].0[col]);
        let rhs = DVector::from_fn(n, |r, _| rows[idx[r]].1);
        if let Some(x) = mat.lu().solve(&rhs) {
            if rows.iter().all(|(g, h)| g.dot(&x) <= h + 1e-9) {
                let v = c.dot(&x);
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
        // Next combination in lexicographic order.
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < m - n + i {
                idx[i] += 1;
                for k in i + 1..n {
                    idx[k] = idx[k - 1] + 1;
                }
                break;
            }
        }
    }
}

fn simplex() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    for t in 0..50 {
        // Enumeration cost grows as C(m + 2n, n), so wide problems get fewer rows.
        let n = rng.gen_range(2..=8);
        let m = rng.gen_range(2..=(26 - 2 * n).min(20));
        let c = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        let b = DVector::from_fn(m, |_, _| rng.gen_range(0.2..2.0));
        let lo: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..0.0)).collect();
        let hi: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..3.0)).collect();
        let oracle = vertex_oracle(&c, &a, &b, &lo, &hi).ok_or(format!("LP {t}: oracle found no vertex"))?;

        let bounds = lo.iter().zip(&hi).map(|(l, h)| (Some(*l), Some(*h))).collect();
        let dense = solve_lp(&LinearProgram::new(c.clone()).with_inequalities(a.clone(), b.clone()).with_bounds(bounds))
            .map_err(|e| format!("LP {t}: {e}"))?;
        ensure(dense.status == LpStatus::Optimal, || format!("LP {t}: dense status {:?}", dense.status))?;
        let mut sparse = BoxedLp::new(c.iter().copied().collect(), lo.clone(), hi.clone());
        for i in 0..m {
            let entries: Vec<(usize, f64)> = (0..n).map(|j| (j, a[(i, j)])).collect();
            sparse.add_row(&entries, b[i]);
        }
        let sparse = sparse.solve().map_err(|e| format!("LP {t}: {e}"))?;
        ensure(sparse.status == LpStatus::Optimal, || format!("LP {t}: sparse status {:?}", sparse.status))?;
        for (v, x) in [(dense.objective_value, dense.x.clone()), (sparse.objective_value, DVector::from_vec(sparse.x.clone()))] {
            worst = worst.max((v - oracle).abs());
            let slack = (&a * &x - &b).max().max((0..n).map(|j| (lo[j] - x[j]).max(x[j] - hi[j])).fold(f64::MIN, f64::max));
            ensure(slack <= 1e-8, || format!("LP {t}: solution violates a constraint by {slack:.2e}"))?;
        }
    }
    ensure(worst <= 1e-7, || format!("objective deviation {worst:.3e}"))?;

    // x ≥ 0 with x_0 + x_1 ≤ -1 has no solution.
    let infeasible = LinearProgram::new(DVector::from_vec(vec![1.0, 1.0]))
        .with_inequalities(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_vec(vec![-1.0]))
        .nonnegative();
    let r = solve_lp(&infeasible).map_err(|e| e.to_string())?;
    ensure(r.status == LpStatus::Infeasible, || format!("infeasible case gave {:?}", r.status))?;
    // Contradictory pair of rows on free variables.
    let contradictory = LinearProgram::new(DVector::from_vec(vec![0.0, 1.0]))
        .with_inequalities(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, -2.0]), DVector::from_vec(vec![1.0, -3.0]))
        .with_bounds(vec![(None, None); 2]);
    let r = solve_lp(&contradictory).map_err(|e| e.to_string())?;
    ensure(r.status == LpStatus::Infeasible, || format!("contradictory case gave {:?}", r.status))?;
    // Maximizing x_0 with x_0 only bounded below.
    let unbounded = LinearProgram::new(DVector::from_vec(vec![-1.0, 0.5]))
        .with_inequalities(DMatrix::from_row_slice(1, 2, &[-1.0, 1.0]), DVector::from_vec(vec![2.0]))
        .nonnegative();
    let r = solve_lp(&unbounded).map_err(|e| e.to_string())?;
    ensure(r.status == LpStatus::Unbounded, || format!("unbounded case gave {:?}", r.status))?;
    let mut boxed = BoxedLp::new(vec![1.0, 1.0], vec![0.0, 0.0], vec![1.0, 1.0]);
    boxed.add_row(&[(0, 1.0), (1, 1.0)], -0.5);
    let r = boxed.solve().map_err(|e| e.to_string())?;
    ensure(r.status == LpStatus::Infeasible, || format!("sparse infeasible case gave {:?}", r.status))?;
    Ok(format!("50 random LPs within {worst:.1e} of vertex enumeration (dense and sparse), infeasible and unbounded cases classified"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("QP analytic optimality", qp_optimality),
        ("affine wrench parameterization exactness", affine_exactness),
        ("LP vs QP contrast", lp_vs_qp),
        ("bang-bang TOTP", bang_bang),
        ("constraint-addition monotonicity", monotonicity),
        ("compression weight adjustment", compression_adjustment),
        ("max-load monotonicity", max_load),
        ("SLP convergence", slp_convergence),
        ("calibration recovery", calibration),
        ("simplex correctness", simplex),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
