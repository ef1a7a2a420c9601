//! Run configuration: a strict JSON document (unknown keys are errors)
//! validated into a ready-to-run setup.

use crate::constitutive::{ConstitutiveError, MaterialParams};
use crate::driver::{
    CertMode, CertificationPolicy, OutputSettings, RunSetup, Scenario, Schedule, SolverSettings,
};
use crate::mesh::{Mesh, MeshError, LABEL_CLAMPED};
use crate::solver::SolveMethod;
use crate::tensor::Vec2;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config is not valid JSON for this schema: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("mesh error: {0}")]
    Mesh(#[from] MeshError),
    #[error("material error: {0}")]
    Material(#[from] ConstitutiveError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub s1: f64,
    pub s2: f64,
    pub beta: f64,
    pub rho0: f64,
    /// Initial pressure; defaults to s1 + s2, the stress-free choice.
    #[serde(default)]
    pub p0_initial: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub nx: usize,
    pub ny: usize,
    pub width: f64,
    pub height: f64,
    /// Boundary labels for bottom, right, top, left.
    pub labels: [u8; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum MeshConfig {
    Path(PathBuf),
    Generator(GeneratorConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub total_steps: usize,
    pub scenario: Scenario,
    /// Final shear (pure_shear) or final traction magnitude (patch).
    #[serde(default)]
    pub amplitude: f64,
    /// Optional cumulative load fractions, one per step, ending at 1.
    #[serde(default)]
    pub ramp: Option<Vec<f64>>,
    #[serde(default)]
    pub gravity_on: bool,
    /// Reject steps whose gradient exceeds this infinity norm.
    #[serde(default)]
    pub h_guard: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    /// Data for the traction boundary (label 1).
    #[serde(default, rename = "1")]
    pub traction: Option<TractionConfig>,
    /// The slip boundary (label 2) carries no data.
    #[serde(default, rename = "2")]
    pub slip: Option<SlipConfig>,
    /// Data for the clamped boundary (label 3).
    #[serde(default, rename = "3")]
    pub clamped: Option<ClampedConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TractionConfig {
    pub kind: String,
    /// Final uniform traction vector for the generic scenario.
    #[serde(default)]
    pub data: Option<Vec2>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlipConfig {
    pub kind: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClampedConfig {
    pub kind: String,
    /// Coordinates of extra nodes to clamp (slip-corner overrides); each is
    /// matched to the nearest mesh node.
    #[serde(default)]
    pub extra_points: Vec<Vec2>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub method: SolveMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: 1e-10, max_iter: 2000, method: SolveMethod::Lu }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificationConfig {
    pub mode: CertMode,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub k: Option<f64>,
    #[serde(default = "default_beta_max")]
    pub beta_max: f64,
}

fn default_beta_max() -> f64 {
    1e9
}

impl Default for CertificationConfig {
    fn default() -> Self {
        CertificationConfig { mode: CertMode::Warn, alpha: None, k: None, beta_max: default_beta_max() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub vtk_every: usize,
    #[serde(default)]
    pub csv_every: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub material: MaterialConfig,
    #[serde(default)]
    pub gravity: Vec2,
    pub mesh: MeshConfig,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub certification: CertificationConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Permit meshes without a clamped boundary (the problem then relies on
    /// slip walls and clamp overrides for uniqueness).
    #[serde(default)]
    pub allow_empty_clamped: bool,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Validate a parsed config into a runnable setup. Warnings (mesh
/// orientation fixes) are returned alongside.
pub fn build_setup(
    cfg: &RunConfig,
    allow_empty_clamped_flag: bool,
) -> Result<(RunSetup, Vec<String>), ConfigError> {
    let params = MaterialParams::new(
        cfg.material.s1,
        cfg.material.s2,
        cfg.material.beta,
        cfg.material.rho0,
        cfg.gravity,
    )?;
    let p0_initial = cfg.material.p0_initial.unwrap_or(cfg.material.s1 + cfg.material.s2);

    if cfg.schedule.total_steps < 1 {
        return Err(ConfigError::Invalid("schedule.total_steps must be at least 1".into()));
    }
    if !(cfg.solver.tol > 0.0 && cfg.solver.tol < 1.0) {
        return Err(ConfigError::Invalid(format!(
            "solver.tol must lie in (0, 1), got {}",
            cfg.solver.tol
        )));
    }
    if !cfg.schedule.amplitude.is_finite() {
        return Err(ConfigError::Invalid("schedule.amplitude must be finite".into()));
    }
    if let Some(ramp) = &cfg.schedule.ramp {
        if ramp.len() != cfg.schedule.total_steps {
            return Err(ConfigError::Invalid(format!(
                "schedule.ramp must list one fraction per step ({} expected, {} given)",
                cfg.schedule.total_steps,
                ramp.len()
            )));
        }
        let mut prev = 0.0;
        for (i, &r) in ramp.iter().enumerate() {
            if !r.is_finite() || r < prev {
                return Err(ConfigError::Invalid(format!(
                    "schedule.ramp must be nondecreasing and finite (entry {i} = {r})"
                )));
            }
            prev = r;
        }
        if (prev - 1.0).abs() > 1e-12 {
            return Err(ConfigError::Invalid(format!(
                "schedule.ramp must end at 1, got {prev}"
            )));
        }
    }
    if !(cfg.certification.beta_max > 0.0) {
        return Err(ConfigError::Invalid("certification.beta_max must be positive".into()));
    }

    for (label, kind) in [
        ("1", cfg.boundary.traction.as_ref().map(|t| t.kind.as_str())),
        ("2", cfg.boundary.slip.as_ref().map(|s| s.kind.as_str())),
        ("3", cfg.boundary.clamped.as_ref().map(|c| c.kind.as_str())),
    ] {
        let expected = match label {
            "1" => "traction",
            "2" => "slip",
            _ => "clamped",
        };
        if let Some(kind) = kind {
            if kind != expected {
                return Err(ConfigError::Invalid(format!(
                    "boundary label {label} must have kind `{expected}`, got `{kind}`"
                )));
            }
        }
    }

    let (mesh, warnings) = match &cfg.mesh {
        MeshConfig::Path(path) => Mesh::load(path, true)?,
        MeshConfig::Generator(g) => {
            if !(g.width > 0.0 && g.height > 0.0) {
                return Err(ConfigError::Invalid("mesh generator extents must be positive".into()));
            }
            if g.nx < 1 || g.ny < 1 {
                return Err(ConfigError::Invalid("mesh generator needs nx, ny >= 1".into()));
            }
            (Mesh::rectangle(g.nx, g.ny, g.width, g.height, g.labels), Vec::new())
        }
    };
    let allow_empty = allow_empty_clamped_flag || cfg.allow_empty_clamped;
    if !allow_empty && !mesh.boundary_edges.iter().any(|e| e.label == LABEL_CLAMPED) {
        return Err(ConfigError::Mesh(MeshError::EmptyClampedBoundary));
    }

    let mut clamp_overrides = Vec::new();
    if let Some(clamped) = &cfg.boundary.clamped {
        let diameter = mesh_diameter(&mesh);
        for point in &clamped.extra_points {
            let (node, dist) = nearest_node(&mesh, *point);
            if dist > 1e-6 * diameter {
                return Err(ConfigError::Invalid(format!(
                    "boundary.3.extra_points entry ({}, {}) is {dist:e} away from the nearest \
                     node; expected a mesh node",
                    point[0], point[1]
                )));
            }
            clamp_overrides.push(node);
        }
    }

    let traction = cfg
        .boundary
        .traction
        .as_ref()
        .and_then(|t| t.data)
        .unwrap_or([0.0, 0.0]);

    let setup = RunSetup {
        mesh,
        params,
        p0_initial,
        schedule: Schedule {
            total_steps: cfg.schedule.total_steps,
            ramp: cfg.schedule.ramp.clone(),
            scenario: cfg.schedule.scenario,
            amplitude: cfg.schedule.amplitude,
            gravity_on: cfg.schedule.gravity_on,
        },
        traction,
        clamp_overrides,
        certification: CertificationPolicy {
            mode: cfg.certification.mode,
            alpha: cfg.certification.alpha,
            k: cfg.certification.k,
            beta_max: cfg.certification.beta_max,
        },
        solver: SolverSettings {
            tol: cfg.solver.tol,
            max_iter: cfg.solver.max_iter,
            method: cfg.solver.method,
        },
        output: OutputSettings {
            dir: cfg.output.dir.clone(),
            vtk_every: cfg.output.vtk_every,
            csv_every: cfg.output.csv_every,
        },
        h_guard: cfg.schedule.h_guard.unwrap_or(0.2),
    };
    Ok((setup, warnings))
}

fn mesh_diameter(mesh: &Mesh) -> f64 {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &mesh.nodes {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (hi[0] - lo[0]).hypot(hi[1] - lo[1]).max(1e-300)
}

fn nearest_node(mesh: &Mesh, point: Vec2) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, p) in mesh.nodes.iter().enumerate() {
        let d = (p[0] - point[0]).hypot(p[1] - point[1]);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shear_json() -> String {
        r#"{
            "material": {"s1": 1.0, "s2": -0.3, "beta": 10000.0, "rho0": 1.0},
            "gravity": [0.0, 0.0],
            "mesh": {"generator": {"nx": 4, "ny": 4, "width": 1.0, "height": 1.0, "labels": [3, 1, 3, 1]}},
            "schedule": {"total_steps": 10, "scenario": "pure_shear", "amplitude": 0.1},
            "solver": {"tol": 1e-10, "max_iter": 500, "method": "lu"},
            "certification": {"mode": "off"}
        }"#
        .to_string()
    }

    #[test]
    fn parses_and_builds_shear_config() {
        let cfg: RunConfig = serde_json::from_str(&shear_json()).unwrap();
        let (setup, warnings) = build_setup(&cfg, false).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(setup.schedule.total_steps, 10);
        assert_eq!(setup.p0_initial, 0.7);
        assert_eq!(setup.h_guard, 0.2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = shear_json().replace("\"gravity\"", "\"gravities\"");
        assert!(serde_json::from_str::<RunConfig>(&text).is_err());
    }

    #[test]
    fn invalid_moduli_are_rejected() {
        let text = shear_json().replace("\"s2\": -0.3", "\"s2\": 2.0");
        let cfg: RunConfig = serde_json::from_str(&text).unwrap();
        match build_setup(&cfg, false) {
            Err(ConfigError::Material(e)) => {
                assert!(e.to_string().contains("s1 > 0 and s2 < s1"));
            }
            other => panic!("expected material error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_boundary_kind_is_rejected() {
        let text = shear_json().replace(
            "\"certification\": {\"mode\": \"off\"}",
            "\"certification\": {\"mode\": \"off\"}, \"boundary\": {\"2\": {\"kind\": \"traction\"}}",
        );
        let cfg: RunConfig = serde_json::from_str(&text).unwrap();
        assert!(matches!(build_setup(&cfg, false), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn bad_ramp_is_rejected() {
        let text = shear_json().replace(
            "\"amplitude\": 0.1",
            "\"amplitude\": 0.1, \"ramp\": [0.5, 0.4]",
        );
        let cfg: RunConfig = serde_json::from_str(&text).unwrap();
        assert!(build_setup(&cfg, false).is_err());
    }

    #[test]
    fn clamp_override_snaps_to_node() {
        let text = shear_json().replace(
            "\"schedule\"",
            "\"boundary\": {\"3\": {\"kind\": \"clamped\", \"extra_points\": [[0.0, 0.0]]}}, \"schedule\"",
        );
        let cfg: RunConfig = serde_json::from_str(&text).unwrap();
        let (setup, _) = build_setup(&cfg, false).unwrap();
        assert_eq!(setup.clamp_overrides, vec![0]);
    }
}
