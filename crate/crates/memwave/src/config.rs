//! JSON experiment configuration and validation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::RegionSpec;
use crate::kernel::KernelKind;
use crate::{MemwaveError, Result};

pub const EXPERIMENTS: &[&str] = &[
    "simulate",
    "adjoint",
    "control",
    "mgcc-check",
    "kernel-check",
    "sharpness",
    "ode-demo",
    "compare",
    "sweep",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub x_min: f64,
    #[serde(default = "default_one")]
    pub x_max: f64,
}

fn default_n() -> usize {
    50
}
fn default_one() -> f64 {
    1.0
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { n: default_n(), x_min: 0.0, x_max: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshSpec {
    pub t_end: f64,
    pub n_t: usize,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
}

fn default_cfl() -> f64 {
    0.5
}

/// Sparse modal expansion: list of (mode index j >= 1, coefficient).
pub type Modes = Vec<(usize, f64)>;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InitialSpec {
    #[serde(default)]
    pub y0_modes: Modes,
    #[serde(default)]
    pub y1_modes: Modes,
    #[serde(default)]
    pub z0_modes: Modes,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FinalSpec {
    #[serde(default)]
    pub p0_modes: Modes,
    #[serde(default)]
    pub p1_modes: Modes,
    #[serde(default)]
    pub q0_modes: Modes,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CgSpec {
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol_rel")]
    pub tol_rel: f64,
    #[serde(default)]
    pub tikhonov_eps: f64,
    #[serde(default = "default_j_max")]
    pub j_max: usize,
}

fn default_max_iter() -> usize {
    300
}
fn default_tol_rel() -> f64 {
    1e-10
}
fn default_j_max() -> usize {
    16
}

impl Default for CgSpec {
    fn default() -> Self {
        CgSpec {
            max_iter: default_max_iter(),
            tol_rel: default_tol_rel(),
            tikhonov_eps: 0.0,
            j_max: default_j_max(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub kernel: Option<KernelKind>,
    #[serde(default)]
    pub grid: GridSpec,
    pub mesh: Option<MeshSpec>,
    pub region: Option<RegionSpec>,
    pub eps0: Option<f64>,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub final_data: FinalSpec,
    #[serde(default)]
    pub cg: CgSpec,
    /// "indicator" or "weight_rho" (default).
    pub observation: Option<String>,
    /// "coupled" (default) or "scalar_memory".
    pub adjoint_variant: Option<String>,
    pub s_list: Option<Vec<f64>>,
    pub j_list: Option<Vec<usize>>,
    /// Moment count for ode-demo.
    pub k_count: Option<usize>,
    /// "pass" or "fail": turns the experiment's headline boolean into a
    /// verdict.
    pub expect: Option<String>,
    /// Named tolerances; every verdict cites one of these.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    /// Second region for the compare experiment.
    pub compare_region: Option<RegionSpec>,
    /// Child configurations for the sweep experiment.
    pub sweep: Option<Vec<ExperimentConfig>>,
    pub seed: Option<u64>,
    /// Compute the observability-constant estimate in control reports.
    #[serde(default)]
    pub with_obs_constant: bool,
}

impl ExperimentConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            return Err(MemwaveError::config(
                path,
                format!(
                    "unknown experiment {:?}; valid names: {}",
                    self.experiment,
                    EXPERIMENTS.join(", ")
                ),
            ));
        }
        let need = |cond: bool, field: &str| -> Result<()> {
            if cond {
                Ok(())
            } else {
                Err(MemwaveError::config(
                    path,
                    format!("missing field {:?} for experiment {:?}", field, self.experiment),
                ))
            }
        };
        match self.experiment.as_str() {
            "kernel-check" => need(self.kernel.is_some(), "kernel")?,
            "mgcc-check" => {
                need(self.region.is_some(), "region")?;
                need(self.mesh.is_some(), "mesh")?;
            }
            "sharpness" => need(self.mesh.is_some(), "mesh")?,
            "ode-demo" => {
                need(self.kernel.is_some(), "kernel")?;
                need(self.mesh.is_some(), "mesh")?;
            }
            "simulate" | "adjoint" | "control" => {
                need(self.kernel.is_some(), "kernel")?;
                need(self.mesh.is_some(), "mesh")?;
                need(self.region.is_some(), "region")?;
            }
            "compare" => {
                need(self.kernel.is_some(), "kernel")?;
                need(self.mesh.is_some(), "mesh")?;
                need(self.region.is_some(), "region")?;
                need(self.compare_region.is_some(), "compare_region")?;
            }
            "sweep" => need(self.sweep.is_some(), "sweep")?,
            _ => unreachable!(),
        }
        if let Some(children) = &self.sweep {
            for (i, child) in children.iter().enumerate() {
                child.validate(&format!("{path}#sweep[{i}]"))?;
            }
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| MemwaveError::io(path.display().to_string(), e))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| MemwaveError::config(path.display().to_string(), e.to_string()))?;
    cfg.validate(&path.display().to_string())?;
    Ok(cfg)
}
