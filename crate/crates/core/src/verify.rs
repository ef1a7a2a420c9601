//! Self-contained verification suites behind the `verify` subcommand.
//! The same functions back the acceptance tests, so passing `verify all`
//! reproduces the automated checks without external tooling.

use crate::assembly::{assemble, element_gradient, BoundaryData};
use crate::coercivity::{build_a, check_psd, SpectralState};
use crate::constitutive::{MaterialParams, QuadPointState};
use crate::driver::{self, CertMode, CertificationPolicy, RunSetup, Scenario, Schedule, SolverSettings};
use crate::mesh::Mesh;
use crate::oracles::{
    gradient_components, min_eigenvalue_shifted, psd_eigen_oracle, pure_shear_oracle,
    quadform_matrix, quadform_trace_oracle, traction_residual, uniaxial_patch_oracle,
};
use crate::solver::{solve, SolveMethod};
use crate::tensor::{dot, Tensor2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub details: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, details: String) -> CheckResult {
        CheckResult { name: name.into(), passed, details }
    }
}

fn sample_params(rng: &mut ChaCha8Rng) -> MaterialParams {
    let s1 = rng.gen_range(0.05..=5.0);
    let s2 = rng.gen_range(-5.0..s1);
    MaterialParams::new(s1, s2, 1.0, 1.0, [0.0, 0.0]).expect("sampled parameters are valid")
}

fn sample_spectral(rng: &mut ChaCha8Rng, params: &MaterialParams) -> SpectralState {
    let a: f64 = rng.gen_range(0.1..=10.0);
    let b: f64 = rng.gen_range(0.1..=10.0);
    let p0 = rng.gen_range(-5.0..=5.0);
    SpectralState::from_eigenvalues(a.max(b), a.min(b), p0, params).expect("positive eigenvalues")
}

fn sample_gradient(rng: &mut ChaCha8Rng) -> Tensor2 {
    Tensor2::new(
        rng.gen_range(-1.0..=1.0),
        rng.gen_range(-1.0..=1.0),
        rng.gen_range(-1.0..=1.0),
        rng.gen_range(-1.0..=1.0),
    )
}

/// Pairwise agreement of the three routes to the step quadratic form:
/// the trace of `K[H] H^T`, the closed block formulas, and `x^T A x`.
pub fn suite_quadform(seed: u64, trials: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_gap = 0.0_f64;
    for trial in 0..trials {
        let params = sample_params(&mut rng);
        let s = sample_spectral(&mut rng, &params);
        let beta = rng.gen_range(0.0..=100.0);
        let h = sample_gradient(&mut rng);

        // The trace and block routes are compared inside the oracle.
        let v = match quadform_trace_oracle(&h, s.gamma1, s.gamma2, s.p0, beta, &params) {
            Ok(v) => v,
            Err(e) => {
                return CheckResult::new("quadform", false, format!("trial {trial}: {e}"));
            }
        };
        let x = quadform_matrix(&build_a(&s, beta, &params), gradient_components(&h));
        let scale = v.abs().max(x.abs()).max(1.0);
        let gap = (v - x).abs() / scale;
        max_gap = max_gap.max(gap);
        if gap > 1e-12 {
            return CheckResult::new(
                "quadform",
                false,
                format!("trial {trial}: trace form {v} vs matrix form {x} (gap {gap:e})"),
            );
        }
    }
    CheckResult::new(
        "quadform",
        true,
        format!("{trials} random states agree pairwise; worst relative gap {max_gap:e}"),
    )
}

/// Agreement of the Sylvester block test with the actual spectrum of the
/// 4x4 matrix, with a 1e-10 tie band at the semidefiniteness boundary.
pub fn suite_psd(seed: u64, trials: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut borderline = 0usize;
    for trial in 0..trials {
        let params = sample_params(&mut rng);
        let s = sample_spectral(&mut rng, &params);
        let beta = rng.gen_range(0.0..=100.0);
        let alpha = rng.gen_range(0.0..=3.0);
        let a = build_a(&s, beta, &params);
        let sylvester = check_psd(&a, alpha);
        let eigen = psd_eigen_oracle(&a, alpha);
        if sylvester != eigen {
            let min_eig = min_eigenvalue_shifted(&a, alpha);
            let scale = [a.a11, a.a22, a.a12, a.a33, a.a44, a.a34]
                .iter()
                .fold(1.0_f64, |m, v| m.max(v.abs()));
            if min_eig.abs() <= 1e-10 * scale {
                borderline += 1;
                continue;
            }
            return CheckResult::new(
                "psd",
                false,
                format!(
                    "trial {trial}: sylvester says {sylvester}, spectrum says {eigen} \
                     (min eigenvalue {min_eig:e})"
                ),
            );
        }
    }
    CheckResult::new(
        "psd",
        true,
        format!("{trials} random matrices agree ({borderline} borderline ties)"),
    )
}

/// Outcome of the one-step uniaxial patch problem.
#[derive(Debug, Clone)]
pub struct PatchOutcome {
    /// Largest variance of a gradient component over the elements.
    pub gradient_variance: f64,
    /// Relative gap between the mean gradient and the closed form.
    pub oracle_gap: f64,
    pub traction_residual: f64,
    pub mean_gradient: Tensor2,
    pub oracle_gradient: Tensor2,
}

/// Solve the uniaxial traction patch on an n x n square: slip walls on the
/// left and bottom (corner clamped), traction t on the right edge, free
/// top. The exact solution has a constant gradient.
pub fn patch_case(n: usize, t: f64, beta: f64) -> PatchOutcome {
    let params = MaterialParams::new(1.0, -0.3, beta, 1.0, [0.0, 0.0]).unwrap();
    let mesh = Mesh::rectangle(n, n, 1.0, 1.0, [2, 1, 1, 2]);
    let states =
        vec![QuadPointState::initial(params.s1() + params.s2(), &params).unwrap(); mesh.triangles.len()];

    let mut bc = BoundaryData::zero(&mesh);
    bc.clamp_overrides = vec![0]; // the (0,0) slip-wall corner
    for (idx, e) in mesh.boundary_edges.iter().enumerate() {
        if e.label == crate::mesh::LABEL_TRACTION {
            let normal = mesh.edge_normal(idx).unwrap();
            if dot(normal, [1.0, 0.0]) > std::f64::consts::FRAC_1_SQRT_2 {
                bc.tractions[idx] = [t, 0.0];
            }
        }
    }

    let system = assemble(&mesh, &states, beta, &params, &bc, false).unwrap();
    let (dofs, _) = solve(&system, 1e-12, 10_000, SolveMethod::Lu).unwrap();
    let u = system.expand(&dofs);

    let m = mesh.triangles.len() as f64;
    let grads: Vec<Tensor2> = (0..mesh.triangles.len())
        .map(|e| element_gradient(&mesh, e, &u))
        .collect();
    let mean = grads.iter().fold(Tensor2::ZERO, |acc, h| acc + *h) * (1.0 / m);
    let variance = |f: fn(&Tensor2) -> f64| {
        grads.iter().map(|h| (f(h) - f(&mean)).powi(2)).sum::<f64>() / m
    };
    let gradient_variance = variance(|h| h.xx)
        .max(variance(|h| h.xy))
        .max(variance(|h| h.yx))
        .max(variance(|h| h.yy));

    let oracle = uniaxial_patch_oracle(t, beta, &params);
    let oracle_gap = (mean - oracle).norm_inf() / oracle.norm_inf();
    let residual =
        traction_residual(&mesh, &states, &u, &bc.tractions, beta, &params).unwrap();

    PatchOutcome {
        gradient_variance,
        oracle_gap,
        traction_residual: residual,
        mean_gradient: mean,
        oracle_gradient: oracle,
    }
}

pub fn suite_patch() -> CheckResult {
    let outcome = patch_case(8, 0.02, 100.0);
    let passed = outcome.gradient_variance <= 1e-9
        && outcome.oracle_gap <= 1e-8
        && outcome.traction_residual <= 1e-12;
    CheckResult::new(
        "patch",
        passed,
        format!(
            "gradient variance {:e}, closed-form gap {:e}, traction residual {:e}",
            outcome.gradient_variance, outcome.oracle_gap, outcome.traction_residual
        ),
    )
}

/// Outcome of a full shear run against the analytic solution.
#[derive(Debug)]
pub struct ShearOutcome {
    pub mean_t12: f64,
    pub exact_t12: f64,
    /// |mean T12 - exact| / |exact|.
    pub t12_relative_error: f64,
    pub max_abs_det_drift: f64,
    pub result: driver::RunResult,
}

/// Drive a unit square in simple shear: clamped bottom, clamped top pulled
/// horizontally to kappa x height, free vertical sides.
pub fn pure_shear_case(
    n: usize,
    steps: usize,
    kappa: f64,
    beta: f64,
    out_dir: Option<std::path::PathBuf>,
) -> Result<ShearOutcome, driver::DriverError> {
    let params = MaterialParams::new(1.0, -0.3, beta, 1.0, [0.0, 0.0]).unwrap();
    let setup = RunSetup {
        mesh: Mesh::rectangle(n, n, 1.0, 1.0, [3, 1, 3, 1]),
        p0_initial: params.s1() + params.s2(),
        params,
        schedule: Schedule {
            total_steps: steps,
            ramp: None,
            scenario: Scenario::PureShear,
            amplitude: kappa,
            gravity_on: false,
        },
        traction: [0.0, 0.0],
        clamp_overrides: Vec::new(),
        certification: CertificationPolicy { mode: CertMode::Off, alpha: None, k: None, beta_max: 1e9 },
        solver: SolverSettings { tol: 1e-10, max_iter: 5000, method: SolveMethod::Lu },
        output: crate::driver::OutputSettings { dir: out_dir, vtk_every: 0, csv_every: 1 },
        h_guard: 0.2,
    };
    let result = driver::run(&setup)?;
    let exact = pure_shear_oracle(kappa, &params).t12;
    let mean_t12 = result.mean_stress().xy;
    Ok(ShearOutcome {
        mean_t12,
        exact_t12: exact,
        t12_relative_error: (mean_t12 - exact).abs() / exact.abs(),
        max_abs_det_drift: result.max_abs_det_drift(),
        result,
    })
}

pub fn suite_pure_shear() -> CheckResult {
    match pure_shear_case(16, 40, 0.2, 1e4, None) {
        Ok(o) => {
            let passed = o.t12_relative_error <= 0.02 && o.max_abs_det_drift <= 0.01;
            CheckResult::new(
                "pure-shear",
                passed,
                format!(
                    "mean T12 = {:.6} vs analytic {:.6} (relative error {:.4}), \
                     max |det F - 1| = {:e}",
                    o.mean_t12, o.exact_t12, o.t12_relative_error, o.max_abs_det_drift
                ),
            )
        }
        Err(e) => CheckResult::new("pure-shear", false, format!("run failed: {e}")),
    }
}

/// Run the named suite; `all` runs everything.
pub fn run_suites(name: &str, seed: u64) -> Option<Vec<CheckResult>> {
    match name {
        "quadform" => Some(vec![suite_quadform(seed, 10_000)]),
        "psd" => Some(vec![suite_psd(seed, 10_000)]),
        "patch" => Some(vec![suite_patch()]),
        "pure-shear" => Some(vec![suite_pure_shear()]),
        "all" => Some(vec![
            suite_quadform(seed, 10_000),
            suite_psd(seed, 10_000),
            suite_patch(),
            suite_pure_shear(),
        ]),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadform_suite_passes_quickly() {
        let r = suite_quadform(42, 500);
        assert!(r.passed, "{}", r.details);
    }

    #[test]
    fn psd_suite_passes_quickly() {
        let r = suite_psd(42, 500);
        assert!(r.passed, "{}", r.details);
    }

    #[test]
    fn patch_suite_passes() {
        let r = suite_patch();
        assert!(r.passed, "{}", r.details);
    }

    #[test]
    fn unknown_suite_is_none() {
        assert!(run_suites("nope", 42).is_none());
    }
}


