//! The successive-linear-approximation step loop: solve the linearized
//! problem on the current configuration, read off the per-element relative
//! displacement gradient, advance the mechanical state, then move the
//! nodes. Boundary data ramps across the schedule so each increment stays
//! small.

use crate::assembly::{assemble, element_gradient, AssemblyError, BoundaryData};
use crate::coercivity::{
    auto_alpha, certify, default_k, spectral_of, CoercivityError, CoercivityReport, SpectralState,
};
use crate::constitutive::{update_state, ConstitutiveError, MaterialParams, QuadPointState};
use crate::mesh::{csv_snapshot, write_vtk, Mesh, MeshError, LABEL_TRACTION};
use crate::solver::{solve, SolveError, SolveMethod};
use crate::tensor::{dot, Tensor2, Vec2};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(
        "step {step}: increment gradient |H| = {norm:e} exceeds the guard {guard}; \
         raise total_steps or relax the guard"
    )]
    StepTooLarge { step: usize, norm: f64, guard: f64 },
    #[error("step {step}: {source}")]
    Solver { step: usize, source: SolveError },
    #[error("step {step}: certification failed in strict mode: {violation}")]
    Certification { step: usize, violation: String },
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Coercivity(#[from] CoercivityError),
    #[error(transparent)]
    Constitutive(#[from] ConstitutiveError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
}

/// Canned boundary drivings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Uniform ramped traction on every label-1 edge; clamped data zero.
    Generic,
    /// Simple-shear tracking benchmark: clamped bottom, clamped top driven
    /// horizontally to amplitude x height, and every traction edge loaded
    /// with the stress of the analytic shear state at the current ramp
    /// level. The exact solution is homogeneous simple shear, so the
    /// computed field can be compared against it everywhere.
    PureShear,
    /// Ramped uniaxial traction on the +x side, the other loaded edges free.
    Patch,
}

/// Ramped loading program.
#[derive(Debug, Clone)]
pub struct Schedule {
    pub total_steps: usize,
    /// Cumulative load fractions per step; linear when absent. Must be
    /// `total_steps` long and end at 1.
    pub ramp: Option<Vec<f64>>,
    pub scenario: Scenario,
    /// Final shear (pure_shear) or final traction magnitude (patch).
    pub amplitude: f64,
    pub gravity_on: bool,
}

impl Schedule {
    pub fn fraction(&self, step: usize) -> f64 {
        match &self.ramp {
            Some(table) => table[step - 1],
            None => step as f64 / self.total_steps as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CertMode {
    Off,
    Warn,
    Strict,
}

#[derive(Debug, Clone)]
pub struct CertificationPolicy {
    pub mode: CertMode,
    /// Coercivity constant; automatic (90% of the admissible bound) when absent.
    pub alpha: Option<f64>,
    /// Lower bound on det B0; the regime default when absent.
    pub k: Option<f64>,
    pub beta_max: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub method: SolveMethod,
}

#[derive(Debug, Clone, Default)]
pub struct OutputSettings {
    pub dir: Option<PathBuf>,
    /// Write VTK snapshots every this many steps; 0 disables.
    pub vtk_every: usize,
    /// Write CSV snapshots every this many steps; 0 disables.
    pub csv_every: usize,
}

/// Everything a run needs, already validated.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub mesh: Mesh,
    pub params: MaterialParams,
    pub p0_initial: f64,
    pub schedule: Schedule,
    /// Final uniform traction for the generic scenario.
    pub traction: Vec2,
    /// Nodes clamped on top of the labeled edges (slip-corner overrides).
    pub clamp_overrides: Vec<usize>,
    pub certification: CertificationPolicy,
    pub solver: SolverSettings,
    pub output: OutputSettings,
    /// Reject a step whose gradient exceeds this infinity norm.
    pub h_guard: f64,
}

/// Evolving state owned by the step loop.
#[derive(Debug, Clone)]
pub struct RunState {
    pub mesh: Mesh,
    pub states: Vec<QuadPointState>,
    pub step: usize,
    /// Per-element gradient of the last completed step.
    pub last_h: Vec<Tensor2>,
    pub last_residual: f64,
    pub last_report: Option<CoercivityReport>,
}

/// Scalar monitors of one completed step.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    /// max over elements of the increment gradient infinity norm.
    pub max_h_inf: f64,
    /// mean over elements of |rho det F / rho0 - 1|, the accumulated
    /// second-order drift between density and volume change.
    pub mean_density_drift: f64,
    /// Smallest hypothesis margin of the certification, when it ran.
    pub min_cert_margin: Option<f64>,
    pub solver_residual: f64,
    /// Whether certification found the state admissible (when it ran).
    pub certified: Option<bool>,
    pub beta0: Option<f64>,
}

/// Diagnostics of the last completed step.
pub fn step_diagnostics(state: &RunState, params: &MaterialParams) -> DiagnosticsRecord {
    let max_h_inf = state.last_h.iter().map(Tensor2::norm_inf).fold(0.0, f64::max);
    let mean_density_drift = if state.states.is_empty() {
        0.0
    } else {
        state
            .states
            .iter()
            .map(|s| (s.rho * s.f.det() / params.rho0() - 1.0).abs())
            .sum::<f64>()
            / state.states.len() as f64
    };
    let (min_cert_margin, certified, beta0) = match &state.last_report {
        Some(r) => {
            let min_gap = r
                .gap_lo
                .iter()
                .chain(r.gap_hi.iter())
                .fold(f64::INFINITY, |m, &v| m.min(v));
            (Some(min_gap), Some(r.admissible), r.beta0)
        }
        None => (None, None, None),
    };
    DiagnosticsRecord {
        step: state.step,
        max_h_inf,
        mean_density_drift,
        min_cert_margin,
        solver_residual: state.last_residual,
        certified,
        beta0,
    }
}

/// Result of a completed run.
#[derive(Debug)]
pub struct RunResult {
    pub state: RunState,
    pub diagnostics: Vec<DiagnosticsRecord>,
    pub reports: Vec<Option<CoercivityReport>>,
    /// Per-step, per-element increment gradients.
    pub h_log: Vec<Vec<Tensor2>>,
    /// Warnings accumulated across the run (certification in warn mode).
    pub warnings: Vec<String>,
}

impl RunResult {
    pub fn mean_stress(&self) -> Tensor2 {
        let n = self.state.states.len().max(1) as f64;
        self.state
            .states
            .iter()
            .fold(Tensor2::ZERO, |acc, s| acc + s.t0)
            * (1.0 / n)
    }

    pub fn max_abs_det_drift(&self) -> f64 {
        self.state
            .states
            .iter()
            .map(|s| (s.f.det() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Node set driven by the pure-shear scenario: the clamped nodes on the
/// initial top line.
fn shear_driving(mesh: &Mesh) -> (Vec<usize>, f64) {
    let clamped: Vec<usize> = {
        let mut set = std::collections::BTreeSet::new();
        for e in &mesh.boundary_edges {
            if e.label == crate::mesh::LABEL_CLAMPED {
                set.insert(e.a);
                set.insert(e.b);
            }
        }
        set.into_iter().collect()
    };
    let y_max = mesh.nodes.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
    let y_min = mesh.nodes.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let height = y_max - y_min;
    let top: Vec<usize> = clamped
        .into_iter()
        .filter(|&n| (mesh.nodes[n][1] - y_max).abs() <= 1e-9 * height.max(1.0))
        .collect();
    (top, height)
}

/// Execute the step loop.
pub fn run(setup: &RunSetup) -> Result<RunResult, DriverError> {
    let params = &setup.params;
    let n_steps = setup.schedule.total_steps;
    assert!(n_steps >= 1, "schedule must have at least one step");
    if let Some(ramp) = &setup.schedule.ramp {
        assert_eq!(ramp.len(), n_steps, "ramp table must have one fraction per step");
    }

    let mut state = RunState {
        states: vec![QuadPointState::initial(setup.p0_initial, params)?; setup.mesh.triangles.len()],
        mesh: setup.mesh.clone(),
        step: 0,
        last_h: vec![Tensor2::ZERO; setup.mesh.triangles.len()],
        last_residual: 0.0,
        last_report: None,
    };
    let (shear_top, shear_height) = match setup.schedule.scenario {
        Scenario::PureShear => shear_driving(&state.mesh),
        _ => (Vec::new(), 0.0),
    };

    if let Some(dir) = &setup.output.dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut diagnostics = Vec::with_capacity(n_steps);
    let mut reports = Vec::with_capacity(n_steps);
    let mut h_log = Vec::with_capacity(n_steps);
    let mut warnings = Vec::new();

    let mut prev_fraction = 0.0;
    for step in 1..=n_steps {
        let fraction = setup.schedule.fraction(step);
        let delta = fraction - prev_fraction;
        prev_fraction = fraction;

        // Certification gate on the state entering this step.
        state.last_report = match setup.certification.mode {
            CertMode::Off => None,
            _ => {
                let points: Vec<SpectralState> = state
                    .states
                    .iter()
                    .map(|s| spectral_of(&s.b0, s.p0, params))
                    .collect::<Result<_, _>>()?;
                let k = setup.certification.k.unwrap_or_else(|| default_k(params));
                let alpha = setup
                    .certification
                    .alpha
                    .unwrap_or_else(|| auto_alpha(&points, k, params));
                let report = certify(&points, alpha, k, setup.certification.beta_max, params)?;
                let beta_ok =
                    report.admissible && report.beta0.map(|b| params.beta() >= b).unwrap_or(false);
                if !beta_ok {
                    let violation = report
                        .violation
                        .clone()
                        .unwrap_or_else(|| {
                            format!(
                                "run beta = {} is below the certified beta0 = {:?}",
                                params.beta(),
                                report.beta0
                            )
                        });
                    match setup.certification.mode {
                        CertMode::Strict => {
                            return Err(DriverError::Certification { step, violation })
                        }
                        _ => warnings.push(format!("step {step}: certification: {violation}")),
                    }
                }
                Some(report)
            }
        };

        // Boundary data for this step.
        let mut bc = BoundaryData::zero(&state.mesh);
        bc.clamp_overrides = setup.clamp_overrides.clone();
        match setup.schedule.scenario {
            Scenario::Generic => {
                for (idx, e) in state.mesh.boundary_edges.iter().enumerate() {
                    if e.label == LABEL_TRACTION {
                        bc.tractions[idx] =
                            [fraction * setup.traction[0], fraction * setup.traction[1]];
                    }
                }
            }
            Scenario::Patch => {
                for (idx, e) in state.mesh.boundary_edges.iter().enumerate() {
                    if e.label == LABEL_TRACTION {
                        let n = state.mesh.edge_normal(idx)?;
                        if dot(n, [1.0, 0.0]) > std::f64::consts::FRAC_1_SQRT_2 {
                            bc.tractions[idx] = [fraction * setup.schedule.amplitude, 0.0];
                        }
                    }
                }
            }
            Scenario::PureShear => {
                // Side tractions consistent with the analytic shear state at
                // this ramp level; the pressure stays at its initial value
                // because the homogeneous field is volume preserving.
                let kappa = fraction * setup.schedule.amplitude;
                let shear = crate::oracles::pure_shear_oracle(kappa, params);
                let t_exact = crate::constitutive::cauchy_stress(&shear.b, setup.p0_initial, params)?;
                for (idx, e) in state.mesh.boundary_edges.iter().enumerate() {
                    if e.label == LABEL_TRACTION {
                        let n = state.mesh.edge_normal(idx)?;
                        bc.tractions[idx] = t_exact.apply(n);
                    }
                }
                let pull = delta * setup.schedule.amplitude * shear_height;
                let mut prescribed = BTreeMap::new();
                for &node in &shear_top {
                    prescribed.insert(node, [pull, 0.0]);
                }
                bc.prescribed = prescribed;
            }
        }

        let system = assemble(
            &state.mesh,
            &state.states,
            params.beta(),
            params,
            &bc,
            setup.schedule.gravity_on,
        )?;
        let (dofs, stats) = solve(&system, setup.solver.tol, setup.solver.max_iter, setup.solver.method)
            .map_err(|source| DriverError::Solver { step, source })?;
        state.last_residual = stats.residual;
        let u = system.expand(&dofs);

        // Per-element increment gradient on the configuration just solved.
        let mut h_step = Vec::with_capacity(state.mesh.triangles.len());
        let mut max_h = 0.0_f64;
        for e in 0..state.mesh.triangles.len() {
            let h = element_gradient(&state.mesh, e, &u);
            max_h = max_h.max(h.norm_inf());
            h_step.push(h);
        }
        if max_h > setup.h_guard {
            return Err(DriverError::StepTooLarge { step, norm: max_h, guard: setup.h_guard });
        }

        // Advance states before moving nodes so B0 stays tied to the
        // configuration the gradient was measured on.
        for (s, h) in state.states.iter_mut().zip(&h_step) {
            *s = update_state(s, h, params.beta(), params)?;
        }
        for (p, du) in state.mesh.nodes.iter_mut().zip(&u) {
            p[0] += du[0];
            p[1] += du[1];
        }
        state.step = step;
        state.last_h = h_step.clone();
        h_log.push(h_step);

        if let Some(dir) = &setup.output.dir {
            if setup.output.csv_every > 0 && step % setup.output.csv_every == 0 {
                let path = dir.join(format!("step_{step:04}.csv"));
                std::fs::write(path, csv_snapshot(&state.mesh, &u))?;
            }
            if setup.output.vtk_every > 0 && step % setup.output.vtk_every == 0 {
                let path = dir.join(format!("step_{step:04}.vtk"));
                let f: Vec<Tensor2> = state.states.iter().map(|s| s.f).collect();
                let t: Vec<Tensor2> = state.states.iter().map(|s| s.t0).collect();
                write_vtk(
                    &state.mesh,
                    &[("displacement", &u)],
                    &[("deformation_gradient", &f), ("cauchy_stress", &t)],
                    &path,
                )?;
            }
        }

        diagnostics.push(step_diagnostics(&state, params));
        reports.push(state.last_report.clone());
    }

    Ok(RunResult { state, diagnostics, reports, h_log, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_setup(mesh: Mesh, params: MaterialParams, scenario: Scenario, steps: usize) -> RunSetup {
        RunSetup {
            mesh,
            p0_initial: params.s1() + params.s2(),
            params,
            schedule: Schedule {
                total_steps: steps,
                ramp: None,
                scenario,
                amplitude: 0.0,
                gravity_on: false,
            },
            traction: [0.0, 0.0],
            clamp_overrides: Vec::new(),
            certification: CertificationPolicy {
                mode: CertMode::Off,
                alpha: None,
                k: None,
                beta_max: 1e9,
            },
            solver: SolverSettings { tol: 1e-10, max_iter: 2000, method: SolveMethod::Lu },
            output: OutputSettings::default(),
            h_guard: 0.2,
        }
    }

    fn params(beta: f64) -> MaterialParams {
        MaterialParams::new(1.0, -0.3, beta, 1.0, [0.0, 0.0]).unwrap()
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        // s1 + s2 representable exactly, so the initial stress is exactly zero.
        let pars = MaterialParams::new(1.0, -0.5, 100.0, 1.0, [0.0, 0.0]).unwrap();
        let mesh = Mesh::rectangle(3, 3, 1.0, 1.0, [3, 1, 3, 1]);
        let setup = base_setup(mesh.clone(), pars, Scenario::Generic, 5);
        let result = run(&setup).unwrap();
        for (p, q) in mesh.nodes.iter().zip(&result.state.mesh.nodes) {
            assert_eq!(p, q, "equilibrium run must not move the mesh");
        }
        for d in &result.diagnostics {
            assert_eq!(d.max_h_inf, 0.0);
            assert_eq!(d.mean_density_drift, 0.0);
            assert_eq!(d.solver_residual, 0.0);
        }
    }

    #[test]
    fn shear_run_tracks_the_analytic_solution() {
        let pars = params(1e4);
        let mesh = Mesh::rectangle(6, 6, 1.0, 1.0, [3, 1, 3, 1]);
        let mut setup = base_setup(mesh, pars, Scenario::PureShear, 10);
        setup.schedule.amplitude = 0.1;
        let result = run(&setup).unwrap();

        let oracle = crate::oracles::pure_shear_oracle(0.1, &pars);
        let mean = result.mean_stress();
        assert!(
            (mean.xy - oracle.t12).abs() <= 0.05 * oracle.t12.abs(),
            "mean T12 = {} vs analytic {}",
            mean.xy,
            oracle.t12
        );
        assert!(result.max_abs_det_drift() < 0.01);

        // The mean deformation gradient approaches simple shear.
        let n = result.state.states.len() as f64;
        let mean_f = result
            .state
            .states
            .iter()
            .fold(Tensor2::ZERO, |acc, s| acc + s.f)
            * (1.0 / n);
        assert!((mean_f.xy - 0.1).abs() < 5e-3, "mean F12 = {}", mean_f.xy);
        assert!((mean_f.xx - 1.0).abs() < 5e-3);
        assert!(mean_f.yx.abs() < 5e-3);
    }

    #[test]
    fn composition_of_increments_reproduces_f() {
        let pars = params(1e3);
        let mesh = Mesh::rectangle(4, 4, 1.0, 1.0, [3, 1, 3, 1]);
        let mut setup = base_setup(mesh, pars, Scenario::PureShear, 6);
        setup.schedule.amplitude = 0.06;
        let result = run(&setup).unwrap();

        for e in 0..result.state.states.len() {
            let mut f = Tensor2::IDENTITY;
            for step_h in &result.h_log {
                f = (Tensor2::IDENTITY + step_h[e]) * f;
            }
            let actual = result.state.states[e].f;
            assert!(
                (f - actual).norm_inf() <= 1e-10 * actual.norm_inf().max(1.0),
                "element {e}: recomposed {f:?} vs stored {actual:?}"
            );
        }
    }

    #[test]
    fn too_large_increment_is_rejected() {
        let pars = params(1e3);
        let mesh = Mesh::rectangle(2, 2, 1.0, 1.0, [3, 1, 3, 1]);
        let mut setup = base_setup(mesh, pars, Scenario::PureShear, 1);
        setup.schedule.amplitude = 0.5; // one giant step
        match run(&setup) {
            Err(DriverError::StepTooLarge { step: 1, .. }) => {}
            other => panic!("expected step-too-large, got {other:?}"),
        }
    }

    #[test]
    fn strict_certification_rejects_uncertifiable_state() {
        let pars = params(1e3);
        let mesh = Mesh::rectangle(2, 2, 1.0, 1.0, [3, 1, 3, 1]);
        // Stress-free start: tr T0 = 0 fails the block-2 condition for any
        // alpha > 0, so strict mode must abort.
        let mut setup = base_setup(mesh, pars, Scenario::Generic, 2);
        setup.certification.mode = CertMode::Strict;
        match run(&setup) {
            Err(DriverError::Certification { step: 1, .. }) => {}
            other => panic!("expected certification failure, got {other:?}"),
        }
    }

    #[test]
    fn warn_mode_records_and_continues() {
        let pars = params(1e3);
        let mesh = Mesh::rectangle(2, 2, 1.0, 1.0, [3, 1, 3, 1]);
        let mut setup = base_setup(mesh, pars, Scenario::Generic, 2);
        setup.certification.mode = CertMode::Warn;
        let result = run(&setup).unwrap();
        assert_eq!(result.diagnostics.len(), 2);
        assert!(!result.warnings.is_empty());
        assert_eq!(result.diagnostics[0].certified, Some(false));
    }
}
