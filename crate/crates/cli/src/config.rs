//! JSON config documents, one per command. Missing fields take defaults;
//! command-line flags override whatever the document says.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use mipdmn::inelastic::{MaterialLaw, SolverConfig};
use mipdmn::oracle::TeacherSpec;
use mipdmn::parametric::MicroParams;
use mipdmn::tensor::EngineeringConstants;
use mipdmn::training::sampling::MaterialRanges;
use mipdmn::training::{ConstraintTargets, IdentifyConfig, PhaseGuess, TrainConfig};

use crate::CliError;

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataConfig {
    /// Base seed: the teacher uses `seed`, materials `seed + 1`, the
    /// train/validation split `seed + 2` and label noise `seed + 3`.
    pub seed: u64,
    pub teacher: TeacherSpec,
    /// Label with an existing model instead of generating a teacher.
    pub teacher_model: Option<PathBuf>,
    /// Parameter points split into train and validation.
    pub points: Vec<MicroParams>,
    /// Parameter points whose samples all go to the test split.
    pub test_points: Vec<MicroParams>,
    pub n_materials: usize,
    pub materials: MaterialRanges,
    pub train_frac: f64,
    /// Standard deviation of log-normal label noise.
    pub noise: Option<f64>,
    pub format: DataFormat,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        GenDataConfig {
            seed: 0,
            teacher: TeacherSpec::default(),
            teacher_model: None,
            points: [0.2, 0.5, 0.8].iter().map(|&v| MicroParams::new(v, vec![])).collect(),
            test_points: Vec::new(),
            n_materials: 500,
            materials: MaterialRanges::default(),
            train_frac: 0.8,
            noise: None,
            format: DataFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCmdConfig {
    pub data: Option<PathBuf>,
    pub train: TrainConfig,
    pub targets: ConstraintTargets,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub model: Option<PathBuf>,
    pub vf: Vec<f64>,
    /// Morphological parameters held fixed over the sweep, in physical units.
    pub q: Vec<f64>,
    pub phases: [EngineeringConstants; 2],
    /// Isotropic conductivities of the two phases.
    pub conductivity: [f64; 2],
    /// Isotropic thermal expansion coefficients of the two phases.
    pub cte: [f64; 2],
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            model: None,
            vf: (0..=10).map(|i| i as f64 / 10.0).collect(),
            q: Vec::new(),
            phases: [
                EngineeringConstants::Isotropic { e: 3300.0, nu: 0.41 },
                EngineeringConstants::Isotropic { e: 72000.0, nu: 0.22 },
            ],
            conductivity: [0.2, 1.0],
            cte: [6.0e-5, 5.0e-6],
        }
    }
}

/// Node behaviour given through engineering constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LawSpec {
    Elastic {
        constants: EngineeringConstants,
    },
    J2 {
        e: f64,
        nu: f64,
        #[serde(default = "default_sigma0")]
        sigma0: f64,
        #[serde(default = "default_k")]
        k: f64,
        #[serde(default = "default_n")]
        n: f64,
        #[serde(default = "default_eps_reg")]
        eps_reg: f64,
    },
}

fn default_sigma0() -> f64 {
    30.0
}
fn default_k() -> f64 {
    293.0
}
fn default_n() -> f64 {
    0.34
}
fn default_eps_reg() -> f64 {
    1e-6
}

impl LawSpec {
    pub fn to_law(&self) -> mipdmn::Result<MaterialLaw> {
        let law = match *self {
            LawSpec::Elastic { constants } => MaterialLaw::Elastic {
                stiffness: constants.stiffness()?,
            },
            LawSpec::J2 { e, nu, sigma0, k, n, eps_reg } => MaterialLaw::J2 { e, nu, sigma0, k, n, eps_reg },
        };
        law.validate()?;
        Ok(law)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathSpec {
    /// Load, unload, reverse and unload along a fixed multiaxial direction.
    Cyclic { steps: usize },
    /// Load path CSV with columns `t, e11, e22, e12, e33, e13, e23` (Mandel).
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: Option<PathBuf>,
    pub vf: f64,
    pub q: Vec<f64>,
    pub laws: [LawSpec; 2],
    pub solver: SolverConfig,
    pub path: PathSpec,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            model: None,
            vf: 0.5,
            q: Vec::new(),
            laws: [
                LawSpec::J2 {
                    e: 3300.0,
                    nu: 0.41,
                    sigma0: default_sigma0(),
                    k: default_k(),
                    n: default_n(),
                    eps_reg: default_eps_reg(),
                },
                LawSpec::Elastic {
                    constants: EngineeringConstants::Isotropic { e: 72000.0, nu: 0.22 },
                },
            ],
            solver: SolverConfig::default(),
            path: PathSpec::Cyclic { steps: 25 },
        }
    }
}

/// Effective stiffness to calibrate against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    /// Generated by the model itself from known phases and vf.
    Synthetic { phases: [EngineeringConstants; 2], vf: f64 },
    /// Mandel matrix, row by row.
    Matrix { c: [[f64; 6]; 6] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentifyCmdConfig {
    pub model: Option<PathBuf>,
    pub q: Vec<f64>,
    pub target: TargetSpec,
    pub init: PhaseGuess,
    pub identify: IdentifyConfig,
}

impl Default for IdentifyCmdConfig {
    fn default() -> Self {
        IdentifyCmdConfig {
            model: None,
            q: Vec::new(),
            target: TargetSpec::Synthetic {
                phases: [
                    EngineeringConstants::Isotropic { e: 3300.0, nu: 0.35 },
                    EngineeringConstants::TransverselyIsotropic {
                        e1: 72000.0,
                        e2: 30000.0,
                        nu12: 0.22,
                        nu23: 0.3,
                        g12: 20000.0,
                    },
                ],
                vf: 0.45,
            },
            init: PhaseGuess {
                phases: [
                    EngineeringConstants::Isotropic { e: 4000.0, nu: 0.3 },
                    EngineeringConstants::TransverselyIsotropic {
                        e1: 60000.0,
                        e2: 25000.0,
                        nu12: 0.25,
                        nu23: 0.35,
                        g12: 17000.0,
                    },
                ],
                vf: 0.5,
            },
            identify: IdentifyConfig::default(),
        }
    }
}
