//! Fitting stiffness weights to synchronized tool and per-cup wrench data.
//!
//! The free parameters are `[w_normal_z, w_compressed_xy, w_compressed_z,
//! threshold]`; `w_normal_xy` stays at 1 because the distribution is
//! invariant to a common weight scale. Each candidate is scored by running
//! the compression-adjusted distribution on every sample's tool wrench and
//! summing the per-cup errors.

use std::io::{Read, Write};

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::WeightAdjuster;
use crate::error::{Error, Result};
use crate::gripper::{GripperModel, StiffnessWeights};
use crate::par::{try_map_range, Execution};
use crate::se3::Wrench;

pub const MIN_SAMPLES: usize = 10;
pub const WEIGHT_BOUNDS: (f64, f64) = (1e-3, 1e3);
pub const THRESHOLD_BOUNDS_N: (f64, f64) = (-500.0, 500.0);

/// Relative parameter change that must move the objective for a fit to
/// count as determined.
const PROBE_STEP: f64 = 0.05;

/// One synchronized snapshot of the tool and cup sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct WrenchSample {
    pub tool_wrench: Wrench,
    pub cup_wrenches: Vec<Wrench>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub starts: usize,
    pub seed: u64,
    pub max_iters: u64,
    /// Compare all six wrench components instead of forces only.
    pub full_wrench: bool,
    pub execution: Execution,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: 16,
            seed: 0x5eed,
            max_iters: 600,
            full_wrench: false,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub weights: StiffnessWeights,
    pub objective: f64,
    /// Objective of the gripper's current weights on the same data.
    pub baseline_objective: f64,
    /// Set when moving some parameter by 5% leaves the objective unchanged,
    /// so the data cannot pin that parameter down.
    pub degenerate: bool,
}

/// `[w_normal_z, w_compressed_xy, w_compressed_z, threshold]`.
pub fn weights_to_params(w: &StiffnessWeights) -> [f64; 4] {
    [w.normal.z, w.compressed.x, w.compressed.z, w.compression_threshold]
}

pub fn params_to_weights(p: &[f64; 4], template: &StiffnessWeights) -> StiffnessWeights {
    StiffnessWeights {
        normal: Vector3::new(1.0, 1.0, p[0]),
        compressed: Vector3::new(p[1], p[1], p[2]),
        compression_threshold: p[3],
        threshold_direction: template.threshold_direction,
    }
}

/// Summed per-cup error norm of the adjusted distribution over `samples`.
pub fn fit_objective(samples: &[WrenchSample], g: &GripperModel, weights: &StiffnessWeights, full_wrench: bool) -> Result<f64> {
    Ok(sample_residuals(samples, g, weights, full_wrench)?.iter().sum())
}

/// Per-sample contribution to [`fit_objective`].
pub fn sample_residuals(
    samples: &[WrenchSample],
    g: &GripperModel,
    weights: &StiffnessWeights,
    full_wrench: bool,
) -> Result<Vec<f64>> {
    let adjuster = WeightAdjuster::new(&g.with_weights(*weights))?;
    let flags: Vec<Vec<bool>> = samples.iter().map(|s| adjuster.flags(&s.tool_wrench)).collect();
    let maps = adjuster.maps_for(Execution::Sequential, &flags)?;
    Ok(samples
        .iter()
        .zip(&maps)
        .map(|(s, map)| {
            map.apply(&s.tool_wrench)
                .iter()
                .zip(&s.cup_wrenches)
                .map(|(pred, meas)| {
                    let d = pred.to_vector() - meas.to_vector();
                    if full_wrench {
                        d.norm()
                    } else {
                        d.fixed_rows::<3>(3).norm()
                    }
                })
                .sum()
        })
        .collect())
}

struct Objective<'a> {
    samples: &'a [WrenchSample],
    gripper: &'a GripperModel,
    full_wrench: bool,
}

/// Search coordinates: log weights and the raw threshold, clamped to bounds.
fn decode(z: &[f64], template: &StiffnessWeights) -> StiffnessWeights {
    let (lo, hi) = (WEIGHT_BOUNDS.0.ln(), WEIGHT_BOUNDS.1.ln());
    let w = |v: f64| v.clamp(lo, hi).exp();
    let p = [w(z[0]), w(z[1]), w(z[2]), z[3].clamp(THRESHOLD_BOUNDS_N.0, THRESHOLD_BOUNDS_N.1)];
    params_to_weights(&p, template)
}

fn encode(w: &StiffnessWeights) -> Vec<f64> {
    let p = weights_to_params(w);
    vec![p[0].ln(), p[1].ln(), p[2].ln(), p[3]]
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, z: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let w = decode(z, self.gripper.weights());
        fit_objective(self.samples, self.gripper, &w, self.full_wrench).map_err(|e| argmin::core::Error::msg(e.to_string()))
    }
}

fn descend(obj: &Objective<'_>, start: Vec<f64>, max_iters: u64) -> Result<(Vec<f64>, f64)> {
    let steps = [0.4, 0.4, 0.4, 15.0];
    let mut simplex = vec![start.clone()];
    for (i, h) in steps.iter().enumerate() {
        let mut v = start.clone();
        v[i] += h;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(1e-12)
        .map_err(|e| Error::NumericalFailure(e.to_string()))?;
    let res = Executor::new(
        Objective {
            samples: obj.samples,
            gripper: obj.gripper,
            full_wrench: obj.full_wrench,
        },
        solver,
    )
    .configure(|s| s.max_iters(max_iters))
    .run()
    .map_err(|e| Error::NumericalFailure(e.to_string()))?;
    let state = res.state();
    let best = state.get_best_param().cloned().unwrap_or(start);
    Ok((best, state.get_best_cost()))
}

/// Multi-start Nelder-Mead fit of the four free weight parameters.
///
/// The gripper's current weights are always one of the starts, so the fit
/// is never worse than them on the given data.
pub fn fit_weights(samples: &[WrenchSample], g: &GripperModel, opts: &FitOptions) -> Result<FitReport> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} samples, at least {MIN_SAMPLES} needed",
            samples.len()
        )));
    }
    for (i, s) in samples.iter().enumerate() {
        if s.cup_wrenches.len() != g.num_cups() {
            return Err(Error::InsufficientData(format!(
                "sample {i} has {} cup wrenches for {} cups",
                s.cup_wrenches.len(),
                g.num_cups()
            )));
        }
    }
    let template = *g.weights();
    let obj = Objective {
        samples,
        gripper: g,
        full_wrench: opts.full_wrench,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (lo, hi) = (WEIGHT_BOUNDS.0.ln(), WEIGHT_BOUNDS.1.ln());
    let mut starts = vec![encode(&template)];
    while starts.len() < opts.starts.max(1) {
        // Random starts cover the central part of the box, where weights
        // of a physical pad plausibly lie.
        starts.push(vec![
            rng.gen_range(0.5 * lo..0.5 * hi),
            rng.gen_range(0.5 * lo..0.5 * hi),
            rng.gen_range(0.5 * lo..0.5 * hi),
            rng.gen_range(0.4 * THRESHOLD_BOUNDS_N.0..0.4 * THRESHOLD_BOUNDS_N.1),
        ]);
    }
    let results = try_map_range(opts.execution, starts.len(), |i| descend(&obj, starts[i].clone(), opts.max_iters))?;
    let baseline_objective = fit_objective(samples, g, &template, opts.full_wrench)?;
    let (best_z, _) = results
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one start");
    let mut weights = decode(&best_z, &template);
    let mut objective = fit_objective(samples, g, &weights, opts.full_wrench)?;
    if baseline_objective <= objective {
        weights = template;
        objective = baseline_objective;
    }
    let degenerate = is_flat(samples, g, &weights, objective, opts.full_wrench)?;
    Ok(FitReport {
        weights,
        objective,
        baseline_objective,
        degenerate,
    })
}

/// Probes single parameters and pairs moving together or against each
/// other, in log space for the weights. On a planar gripper, for example,
/// scaling both z weights together leaves every prediction unchanged.
fn is_flat(samples: &[WrenchSample], g: &GripperModel, w: &StiffnessWeights, f: f64, full: bool) -> Result<bool> {
    let z = encode(w);
    let tol = 1e-9 * (1.0 + f.abs());
    let step = [PROBE_STEP, PROBE_STEP, PROBE_STEP, PROBE_STEP * w.compression_threshold.abs().max(1.0)];
    let mut directions: Vec<[f64; 4]> = (0..4).map(|i| unit(i, 1.0)).collect();
    for i in 0..4 {
        for j in i + 1..4 {
            for sign in [1.0, -1.0] {
                let mut d = unit(i, 1.0);
                d[j] = sign;
                directions.push(d);
            }
        }
    }
    for d in directions {
        let mut moved = false;
        for sign in [1.0, -1.0] {
            let probe: Vec<f64> = (0..4).map(|i| z[i] + sign * d[i] * step[i]).collect();
            if (fit_objective(samples, g, &decode(&probe, w), full)? - f).abs() > tol {
                moved = true;
                break;
            }
        }
        if !moved {
            return Ok(true);
        }
    }
    Ok(false)
}

fn unit(i: usize, v: f64) -> [f64; 4] {
    let mut d = [0.0; 4];
    d[i] = v;
    d
}

/// Reads the sample table: a `cups,<N>` header row, then one row per
/// sample with the tool wrench followed by each cup's wrench, each as
/// `m_x, m_y, m_z, f_x, f_y, f_z`.
pub fn read_samples<R: Read>(reader: R) -> Result<(usize, Vec<WrenchSample>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let parse_err = |line: u64, msg: String| Error::InvalidInput(format!("line {line}: {msg}"));
    let header = records
        .next()
        .ok_or_else(|| Error::InvalidInput("empty sample file".into()))?
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let cups = match (header.get(0), header.get(1)) {
        (Some("cups"), Some(n)) => n.parse::<usize>().map_err(|e| parse_err(1, e.to_string()))?,
        _ => return Err(parse_err(1, "expected header `cups,<N>`".into())),
    };
    if cups == 0 {
        return Err(parse_err(1, "cup count must be positive".into()));
    }
    let width = 6 * (cups + 1);
    let mut samples = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| Error::InvalidInput(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rec.len() != width {
            return Err(parse_err(line, format!("expected {width} columns, got {}", rec.len())));
        }
        let vals = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| parse_err(line, format!("`{f}`: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        let w = |i: usize| Wrench::from_vector(&Vector6::from_column_slice(&vals[6 * i..6 * i + 6]));
        samples.push(WrenchSample {
            tool_wrench: w(0),
            cup_wrenches: (1..=cups).map(w).collect(),
        });
    }
    Ok((cups, samples))
}

pub fn write_samples<W: Write>(writer: W, samples: &[WrenchSample]) -> Result<()> {
    let cups = samples.first().map_or(0, |s| s.cup_wrenches.len());
    let io = |e: csv::Error| Error::InvalidInput(e.to_string());
    let mut wtr = csv::WriterBuilder::new().flexible(true).from_writer(writer);
    wtr.write_record(["cups".to_string(), cups.to_string()]).map_err(io)?;
    for s in samples {
        if s.cup_wrenches.len() != cups {
            return Err(Error::DimensionMismatch {
                expected: cups,
                actual: s.cup_wrenches.len(),
            });
        }
        let row: Vec<String> = std::iter::once(&s.tool_wrench)
            .chain(&s.cup_wrenches)
            .flat_map(|w| w.to_vector().iter().map(|v| format!("{v:e}")).collect::<Vec<_>>())
            .collect();
        wtr.write_record(&row).map_err(io)?;
    }
    wtr.flush().map_err(|e| Error::InvalidInput(e.to_string()))
}

/// Samples whose cup wrenches are the model's own prediction for `weights`,
/// plus optional Gaussian noise on the cup forces with standard deviation
/// `noise_fraction` times each force's norm.
pub fn synthesize_samples(
    g: &GripperModel,
    weights: &StiffnessWeights,
    tool_wrenches: &[Wrench],
    noise_fraction: f64,
    seed: u64,
) -> Result<Vec<WrenchSample>> {
    let adjuster = WeightAdjuster::new(&g.with_weights(*weights))?;
    let flags: Vec<Vec<bool>> = tool_wrenches.iter().map(|w| adjuster.flags(w)).collect();
    let maps = adjuster.maps_for(Execution::Sequential, &flags)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::Normal::new(0.0, 1.0).expect("unit normal");
    Ok(tool_wrenches
        .iter()
        .zip(&maps)
        .map(|(f_t, map)| {
            let cup_wrenches = map
                .apply(f_t)
                .into_iter()
                .map(|mut w| {
                    if noise_fraction > 0.0 {
                        let sd = noise_fraction * w.force.norm();
                        w.force += Vector3::from_fn(|_, _| sd * rng.sample::<f64, _>(normal));
                    }
                    w
                })
                .collect();
            WrenchSample {
                tool_wrench: *f_t,
                cup_wrenches,
            }
        })
        .collect())
}

/// Random tool wrenches spanning light pulls to hard presses, for
/// synthetic calibration runs.
pub fn random_excitation(n: usize, seed: u64) -> Vec<Wrench> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            Wrench::new(
                Vector3::new(rng.gen_range(-15.0..15.0), rng.gen_range(-25.0..25.0), rng.gen_range(-3.0..3.0)),
                Vector3::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(-100.0..500.0)),
            )
        })
        .collect()
}
