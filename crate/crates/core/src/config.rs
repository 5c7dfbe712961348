//! JSON documents for grippers, objects, chains, paths, limits and
//! scenarios, plus conversion to and from the model types.
//!
//! Every document rejects unknown keys. A scenario refers to the other
//! documents by path, resolved relative to the scenario file.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DVector, Matrix3, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calib;
use crate::dynamics::{KinematicChain, ObjectModel, RevoluteJoint};
use crate::error::Error;
use crate::gripper::{GripperModel, StiffnessWeights, SuctionCup, ThresholdDirection};
use crate::presets;
use crate::se3::RigidTransform;
use crate::spline::PathSpec;
use crate::totp::{KinematicLimits, SolverOptions, TotpProblem};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },

    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        /// Dotted location of the offending value, empty at the top level.
        key: String,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Invalid {
        path: PathBuf,
        #[source]
        source: Error,
    },
}

impl ConfigError {
    fn invalid(path: &Path, source: Error) -> Self {
        ConfigError::Invalid {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn at(key: impl std::fmt::Display) -> impl FnOnce(Error) -> Error {
    move |e| match e {
        Error::InvalidInput(m) => Error::InvalidInput(format!("{key}: {m}")),
        Error::InvalidTransform(m) => Error::InvalidTransform(format!("{key}: {m}")),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CupDoc {
    pub position_m: [f64; 3],
    pub z_axis: [f64; 3],
    pub pad_radius_m: f64,
    #[serde(rename = "suction_force_N")]
    pub suction_force_n: f64,
    /// Informational only.
    #[serde(rename = "pull_off_force_N", default, skip_serializing_if = "Option::is_none")]
    pub pull_off_force_n: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsDoc {
    pub normal: [f64; 3],
    pub compressed: [f64; 3],
    #[serde(rename = "fz_threshold_N")]
    pub fz_threshold_n: f64,
    pub threshold_direction: ThresholdDirection,
}

impl WeightsDoc {
    pub fn to_model(&self) -> crate::Result<StiffnessWeights> {
        StiffnessWeights::new(self.normal.into(), self.compressed.into(), self.fz_threshold_n, self.threshold_direction)
    }

    pub fn from_model(w: &StiffnessWeights) -> Self {
        Self {
            normal: w.normal.into(),
            compressed: w.compressed.into(),
            fz_threshold_n: w.compression_threshold,
            threshold_direction: w.threshold_direction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GripperDoc {
    pub cups: Vec<CupDoc>,
    pub friction_mu: f64,
    pub weights: WeightsDoc,
}

impl GripperDoc {
    pub fn to_model(&self) -> crate::Result<GripperModel> {
        let cups = self
            .cups
            .iter()
            .enumerate()
            .map(|(i, c)| {
                SuctionCup::from_position_normal(c.position_m.into(), c.z_axis.into(), c.pad_radius_m, c.suction_force_n)
                    .map(|cup| cup.with_pull_off_force(c.pull_off_force_n))
                    .map_err(at(format!("cups[{i}]")))
            })
            .collect::<crate::Result<Vec<_>>>()?;
        let weights = self.weights.to_model().map_err(at("weights"))?;
        GripperModel::new(cups, self.friction_mu, weights)
    }

    pub fn from_model(g: &GripperModel) -> Self {
        Self {
            cups: g
                .cups()
                .iter()
                .map(|c| CupDoc {
                    position_m: c.position().into(),
                    z_axis: c.pose_in_tool().rotation().column(2).into_owned().into(),
                    pad_radius_m: c.pad_radius(),
                    suction_force_n: c.suction_force(),
                    pull_off_force_n: c.pull_off_force(),
                })
                .collect(),
            friction_mu: g.friction(),
            weights: WeightsDoc::from_model(g.weights()),
        }
    }
}

/// Either `dims_m` (uniform box) or `inertia` (about the center of mass, in
/// the tool frame) must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectDoc {
    pub mass_kg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims_m: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia: Option<[[f64; 3]; 3]>,
    #[serde(default)]
    pub com_offset_m: [f64; 3],
}

impl ObjectDoc {
    pub fn uniform_box(mass_kg: f64, dims_m: [f64; 3], com_offset_m: [f64; 3]) -> Self {
        Self {
            mass_kg,
            dims_m: Some(dims_m),
            inertia: None,
            com_offset_m,
        }
    }

    pub fn to_model(&self) -> crate::Result<ObjectModel> {
        let com = Vector3::from(self.com_offset_m);
        match (self.dims_m, self.inertia) {
            (Some(d), None) => ObjectModel::uniform_box(self.mass_kg, d.into(), com),
            (None, Some(rows)) => ObjectModel::new(self.mass_kg, rows_to_matrix(&rows), com),
            _ => Err(Error::InvalidInput("exactly one of `dims_m` and `inertia` is required".into())),
        }
    }

    pub fn from_model(o: &ObjectModel) -> Self {
        Self {
            mass_kg: o.mass(),
            dims_m: None,
            inertia: Some(matrix_to_rows(o.inertia())),
            com_offset_m: (*o.com_offset()).into(),
        }
    }
}

fn rows_to_matrix(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| rows[i][j])
}

fn matrix_to_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

fn identity_rows() -> [[f64; 3]; 3] {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

/// Rotation rows and translation; both default to identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformDoc {
    #[serde(default)]
    pub translation_m: [f64; 3],
    #[serde(default = "identity_rows")]
    pub rotation: [[f64; 3]; 3],
}

impl Default for TransformDoc {
    fn default() -> Self {
        Self {
            translation_m: [0.0; 3],
            rotation: identity_rows(),
        }
    }
}

impl TransformDoc {
    pub fn to_model(&self) -> crate::Result<RigidTransform> {
        RigidTransform::new(rows_to_matrix(&self.rotation), self.translation_m.into())
    }

    pub fn from_model(t: &RigidTransform) -> Self {
        Self {
            translation_m: (*t.translation()).into(),
            rotation: matrix_to_rows(t.rotation()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointDoc {
    pub axis: [f64; 3],
    #[serde(default)]
    pub origin_m: [f64; 3],
    #[serde(default)]
    pub parent_offset: TransformDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainDoc {
    pub joints: Vec<JointDoc>,
    #[serde(default)]
    pub tool_offset: TransformDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gravity_m_s2: Option<[f64; 3]>,
}

impl ChainDoc {
    pub fn to_model(&self) -> crate::Result<KinematicChain> {
        let joints = self
            .joints
            .iter()
            .enumerate()
            .map(|(i, j)| {
                let offset = j.parent_offset.to_model().map_err(at(format!("joints[{i}].parent_offset")))?;
                RevoluteJoint::new(j.axis.into(), j.origin_m.into(), offset).map_err(at(format!("joints[{i}]")))
            })
            .collect::<crate::Result<Vec<_>>>()?;
        let tool = self.tool_offset.to_model().map_err(at("tool_offset"))?;
        let chain = KinematicChain::new(joints, tool)?;
        Ok(match self.gravity_m_s2 {
            Some(g) => chain.with_gravity(g.into()),
            None => chain,
        })
    }

    pub fn from_model(c: &KinematicChain) -> Self {
        Self {
            joints: c
                .joints()
                .iter()
                .map(|j| JointDoc {
                    axis: j.axis.into(),
                    origin_m: j.origin.into(),
                    parent_offset: TransformDoc::from_model(&j.parent_offset),
                })
                .collect(),
            tool_offset: TransformDoc::from_model(c.tool_offset()),
            gravity_m_s2: Some((*c.gravity()).into()),
        }
    }
}

/// Joint configurations in path order. Without `s_grid` the rows sit on a
/// uniform grid over `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_grid: Option<Vec<f64>>,
    pub configurations_rad: Vec<Vec<f64>>,
}

impl PathDoc {
    pub fn to_model(&self) -> crate::Result<PathSpec> {
        let knots: Vec<DVector<f64>> = self.configurations_rad.iter().map(|q| DVector::from_column_slice(q)).collect();
        match &self.s_grid {
            Some(grid) => PathSpec::new(grid.clone(), knots, None, None),
            None => PathSpec::uniform(knots),
        }
    }

    pub fn from_model(p: &PathSpec) -> Self {
        Self {
            s_grid: Some(p.grid().to_vec()),
            configurations_rad: p.knots().iter().map(|q| q.iter().copied().collect()).collect(),
        }
    }
}

/// A planning run: document paths and solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub gripper: PathBuf,
    pub object: PathBuf,
    pub chain: PathBuf,
    pub path: PathBuf,
    pub limits: PathBuf,
    #[serde(default)]
    pub solver: SolverOptions,
}

/// Parses `text` as a `T`, attributing failures to `path`.
pub fn parse_doc<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let doc = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let key = e.path().to_string();
        parse_error(path, if key == "." { String::new() } else { key }, e.into_inner())
    })?;
    de.end().map_err(|e| parse_error(path, String::new(), e))?;
    Ok(doc)
}

fn parse_error(path: &Path, key: String, inner: serde_json::Error) -> ConfigError {
    let (line, column) = (inner.line(), inner.column());
    let mut message = inner.to_string();
    if let Some(stripped) = message.strip_suffix(&format!(" at line {line} column {column}")) {
        message = stripped.to_string();
    }
    if !key.is_empty() {
        message = format!("`{key}`: {message}");
    }
    ConfigError::Parse {
        path: path.to_path_buf(),
        line,
        column,
        key,
        message,
    }
}

pub fn read_doc<T: DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_doc(&text, path)
}

pub fn to_json<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents serialize");
    s.push('\n');
    s
}

/// Writes `contents`, creating parent directories.
pub fn write_text(path: &Path, contents: &str) -> Result<(), ConfigError> {
    let io = |e: std::io::Error| ConfigError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, contents).map_err(io)
}

pub fn load_gripper(path: &Path) -> Result<GripperModel, ConfigError> {
    read_doc::<GripperDoc>(path)?.to_model().map_err(|e| ConfigError::invalid(path, e))
}

pub fn load_object(path: &Path) -> Result<ObjectModel, ConfigError> {
    read_doc::<ObjectDoc>(path)?.to_model().map_err(|e| ConfigError::invalid(path, e))
}

pub fn load_chain(path: &Path) -> Result<KinematicChain, ConfigError> {
    read_doc::<ChainDoc>(path)?.to_model().map_err(|e| ConfigError::invalid(path, e))
}

pub fn load_path(path: &Path) -> Result<PathSpec, ConfigError> {
    read_doc::<PathDoc>(path)?.to_model().map_err(|e| ConfigError::invalid(path, e))
}

pub fn load_limits(path: &Path) -> Result<KinematicLimits, ConfigError> {
    read_doc(path)
}

/// Loads a scenario and every document it references.
pub fn load_scenario(path: &Path) -> Result<TotpProblem, ConfigError> {
    let doc: ScenarioDoc = read_doc(path)?;
    let dir = path.parent().unwrap_or(Path::new(""));
    let problem = TotpProblem::new(
        load_path(&dir.join(&doc.path))?,
        load_chain(&dir.join(&doc.chain))?,
        load_object(&dir.join(&doc.object))?,
        load_gripper(&dir.join(&doc.gripper))?,
        load_limits(&dir.join(&doc.limits))?,
        doc.solver,
    );
    problem.map_err(|e| ConfigError::invalid(path, e))
}

/// Samples in the synthetic calibration dataset shipped with the presets.
pub const PRESET_DATASET_SAMPLES: usize = 150;

/// Every shipped preset as `(relative path, contents)`.
pub fn preset_documents() -> Vec<(PathBuf, String)> {
    let mut out = Vec::new();
    let mut add = |rel: &str, contents: String| out.push((PathBuf::from(rel), contents));

    for (name, g) in [
        ("testbed-6cup", presets::six_cup_testbed()),
        ("testbed-5cup", presets::five_cup_testbed()),
        ("testbed-4cup", presets::four_cup_testbed()),
        ("robot-8cup", presets::eight_cup_robot()),
        ("tilted-6cup", presets::tilted_six_cup_testbed()),
    ] {
        add(&format!("grippers/{name}.json"), to_json(&GripperDoc::from_model(&g)));
    }
    add("weights/fitted.json", to_json(&WeightsDoc::from_model(&StiffnessWeights::fitted())));
    add("chains/arm4.json", to_json(&ChainDoc::from_model(&presets::arm4_chain())));
    add("chains/single-joint.json", to_json(&ChainDoc::from_model(&presets::single_joint_chain())));
    add("paths/top-down.json", to_json(&PathDoc::from_model(&presets::top_down_path())));
    add("paths/sideways.json", to_json(&PathDoc::from_model(&presets::sideways_path())));
    add("paths/line-1rad.json", to_json(&PathDoc::from_model(&presets::single_joint_line(1.0))));
    add("limits/arm4.json", to_json(&presets::arm4_limits()));
    add(
        "limits/bang-bang.json",
        to_json(&KinematicLimits::uniform(1, None, Some(presets::BANG_BANG_ACC), None)),
    );
    add("limits/frozen.json", to_json(&KinematicLimits::uniform(1, None, Some(0.0), None)));

    let scenario = |gripper: &str, object: &str, chain: &str, path: &str, limits: &str, solver: SolverOptions| {
        to_json(&ScenarioDoc {
            gripper: format!("../grippers/{gripper}.json").into(),
            object: format!("../objects/{object}.json").into(),
            chain: format!("../chains/{chain}.json").into(),
            path: format!("../paths/{path}.json").into(),
            limits: format!("../limits/{limits}.json").into(),
            solver,
        })
    };
    for b in &presets::BENCHMARKS {
        let com = [0.0, 0.0, 0.5 * b.dims_m[2]];
        add(&format!("objects/{}.json", b.name), to_json(&ObjectDoc::uniform_box(b.mass_kg, b.dims_m, com)));
        let path = if b.sideways { "sideways" } else { "top-down" };
        add(
            &format!("scenarios/{}.json", b.name),
            scenario("testbed-6cup", b.name, "arm4", path, "arm4", SolverOptions::default()),
        );
    }
    add("objects/small-box.json", to_json(&ObjectDoc::uniform_box(0.5, [0.1; 3], [0.0, 0.0, 0.05])));
    let bang_bang = presets::bang_bang_scenario().options;
    add(
        "scenarios/bang-bang.json",
        scenario("testbed-6cup", "small-box", "single-joint", "line-1rad", "bang-bang", bang_bang),
    );
    add(
        "scenarios/frozen.json",
        scenario(
            "testbed-6cup",
            "small-box",
            "single-joint",
            "line-1rad",
            "frozen",
            SolverOptions {
                n_knots: 50,
                ..bang_bang
            },
        ),
    );

    let g = presets::tilted_six_cup_testbed();
    let samples = calib::synthesize_samples(
        &g,
        g.weights(),
        &calib::random_excitation(PRESET_DATASET_SAMPLES, 2024),
        0.0,
        0,
    )
    .expect("preset dataset");
    let mut csv = Vec::new();
    calib::write_samples(&mut csv, &samples).expect("preset dataset");
    add("datasets/tilted-6cup-synthetic.csv", String::from_utf8(csv).expect("ascii"));
    out
}

/// Writes every preset under `dir` and returns the written paths.
pub fn export_presets(dir: &Path) -> Result<Vec<PathBuf>, ConfigError> {
    preset_documents()
        .into_iter()
        .map(|(rel, contents)| {
            let path = dir.join(rel);
            write_text(&path, &contents)?;
            Ok(path)
        })
        .collect()
}
