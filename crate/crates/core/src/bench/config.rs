//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::convergence::{Mode, StudyOptions};
use crate::error::{Error, Result};
use crate::estimators::{BoundParams, MarkBy, DEFAULT_CB};
use crate::mesh::{build_structured, Rect, TriMesh};
use crate::ocp::{ControlBounds, OcpOptions};
use crate::solvers::NewtonOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub nu: f64,
    pub bounds: BoundsConfig,
    pub mesh: MeshConfig,
    pub ladder: LadderConfig,
    pub solver: SolverConfig,
    pub ocp: OcpConfig,
    pub estimator: EstimatorConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshKind {
    Square,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(rename = "type")]
    pub kind: MeshKind,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeConfig {
    Uniform,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderConfig {
    pub levels: usize,
    pub mode: ModeConfig,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub newton_tol: f64,
    pub newton_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcpConfig {
    pub gap_tol: f64,
    pub max_outer: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarkConfig {
    Adjoint,
    State,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub t_prime: f64,
    pub p: f64,
    pub gamma: f64,
    pub c_b: f64,
    pub mark_by: MarkConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub csv: PathBuf,
    pub vtk: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            nu: 1.0,
            bounds: BoundsConfig::default(),
            mesh: MeshConfig::default(),
            ladder: LadderConfig::default(),
            solver: SolverConfig::default(),
            ocp: OcpConfig::default(),
            estimator: EstimatorConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            a: [-1.0, -1.0],
            b: [1.0, 1.0],
        }
    }
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            kind: MeshKind::Square,
            n: 8,
        }
    }
}

impl Default for LadderConfig {
    fn default() -> Self {
        LadderConfig {
            levels: 4,
            mode: ModeConfig::Uniform,
            theta: 0.5,
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = NewtonOptions::default();
        SolverConfig {
            newton_tol: d.tol,
            newton_max: d.max_iter,
        }
    }
}

impl Default for OcpConfig {
    fn default() -> Self {
        let d = OcpOptions::default();
        OcpConfig {
            gap_tol: d.gap_tol,
            max_outer: d.max_outer,
        }
    }
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        let d = BoundParams::default();
        EstimatorConfig {
            t_prime: 2.0,
            p: d.p,
            gamma: d.gamma,
            c_b: DEFAULT_CB,
            mark_by: MarkConfig::Adjoint,
        }
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            csv: PathBuf::from("results.csv"),
            vtk: None,
        }
    }
}

fn invalid(msg: String) -> Error {
    Error::Config(msg)
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Config = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(invalid(format!("nu must be positive, got {}", self.nu)));
        }
        self.control_bounds()?;
        if self.mesh.n == 0 {
            return Err(invalid("mesh.n must be at least 1".into()));
        }
        if self.ladder.levels == 0 {
            return Err(invalid("ladder.levels must be at least 1".into()));
        }
        if !(self.ladder.theta > 0.0 && self.ladder.theta <= 1.0) {
            return Err(invalid(format!("ladder.theta must lie in (0, 1], got {}", self.ladder.theta)));
        }
        if !(self.solver.newton_tol > 0.0) || self.solver.newton_max == 0 {
            return Err(invalid("solver tolerances must be positive".into()));
        }
        if !(self.ocp.gap_tol > 0.0) || self.ocp.max_outer == 0 {
            return Err(invalid("ocp tolerances must be positive".into()));
        }
        let e = &self.estimator;
        if !(2.0..=4.0).contains(&e.t_prime) {
            return Err(invalid(format!("estimator.t_prime must lie in [2, 4], got {}", e.t_prime)));
        }
        if !(e.p <= 4.0) {
            return Err(invalid(format!("estimator.p must lie in (2, 4], got {}", e.p)));
        }
        self.bound_params().validate().map_err(|e| invalid(e.to_string()))?;
        if !(e.c_b > 0.0) {
            return Err(invalid(format!("estimator.c_b must be positive, got {}", e.c_b)));
        }
        Ok(())
    }

    pub fn control_bounds(&self) -> Result<ControlBounds> {
        ControlBounds::new(self.bounds.a, self.bounds.b).map_err(|e| invalid(e.to_string()))
    }

    pub fn initial_mesh(&self) -> TriMesh {
        match self.mesh.kind {
            MeshKind::Square => build_structured(self.mesh.n, self.mesh.n, Rect::UNIT),
        }
    }

    pub fn newton(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.solver.newton_tol,
            max_iter: self.solver.newton_max,
        }
    }

    pub fn bound_params(&self) -> BoundParams {
        BoundParams {
            dim: 2.0,
            p: self.estimator.p,
            gamma: self.estimator.gamma,
        }
    }

    pub fn study(&self) -> StudyOptions {
        StudyOptions {
            levels: self.ladder.levels,
            mode: match self.ladder.mode {
                ModeConfig::Uniform => Mode::Uniform,
                ModeConfig::Adaptive => Mode::Adaptive,
            },
            theta: self.ladder.theta,
            mark_by: match self.estimator.mark_by {
                MarkConfig::Adjoint => MarkBy::Adjoint,
                MarkConfig::State => MarkBy::State,
            },
            newton: self.newton(),
            ocp: OcpOptions {
                gap_tol: self.ocp.gap_tol,
                max_outer: self.ocp.max_outer,
            },
            bound: self.bound_params(),
        }
    }
}
