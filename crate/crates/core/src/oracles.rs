//! Independent reference computations used by the test suite and the
//! `verify` subcommand: the analytic simple-shear solution, the quadratic
//! form evaluated through two algebraically different routes, a Jacobi
//! eigenvalue check of the Sylvester criterion, the closed-form uniaxial
//! patch gradient, the exact (un-linearized) stress update, and the
//! boundary-traction residual of a solved step.

use crate::coercivity::{g_gamma, CoercivityMatrix};
use crate::constitutive::{cauchy_stress, tangent_k, ConstitutiveError, MaterialParams, QuadPointState};
use crate::mesh::{Mesh, LABEL_TRACTION};
use crate::tensor::{Tensor2, Vec2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(
        "quadratic-form routes disagree: trace form {trace} vs block form {blocks} \
         (relative gap {gap:e}); this signals an implementation bug"
    )]
    RouteMismatch { trace: f64, blocks: f64, gap: f64 },
    #[error(transparent)]
    Constitutive(#[from] ConstitutiveError),
}

/// The homogeneous simple-shear solution of the Mooney-Rivlin law.
#[derive(Debug, Clone, Copy)]
pub struct ShearSolution {
    pub kappa: f64,
    pub f: Tensor2,
    pub b: Tensor2,
    pub b_inv: Tensor2,
    /// Shear stress (s1 - s2) kappa, independent of pressure.
    pub t12: f64,
    /// Pressure making the lateral normal stress T22 vanish.
    pub p_free: f64,
}

/// Closed-form state for simple shear x -> x + kappa y. Both determinants
/// are exactly one (volume preserving).
pub fn pure_shear_oracle(kappa: f64, params: &MaterialParams) -> ShearSolution {
    let f = Tensor2::new(1.0, kappa, 0.0, 1.0);
    let b = Tensor2::new(1.0 + kappa * kappa, kappa, kappa, 1.0);
    let b_inv = Tensor2::new(1.0, -kappa, -kappa, 1.0 + kappa * kappa);
    ShearSolution {
        kappa,
        f,
        b,
        b_inv,
        t12: (params.s1() - params.s2()) * kappa,
        p_free: params.s1() + params.s2() * (1.0 + kappa * kappa),
    }
}

/// Evaluate the step quadratic form at a point with diagonal strain
/// diag(gamma1, gamma2) twice: once as `tr(K[H] H^T)` through the tangent,
/// once through the closed block formulas in the symmetric/skew gradient
/// components. The two routes must agree to 1e-12 relative; their mismatch
/// is an internal error, never a data error.
pub fn quadform_trace_oracle(
    h: &Tensor2,
    gamma1: f64,
    gamma2: f64,
    p0: f64,
    beta: f64,
    params: &MaterialParams,
) -> Result<f64, OracleError> {
    let s1 = params.s1();
    let s2 = params.s2();
    let b0 = Tensor2::diag(gamma1, gamma2);
    // Diagonal stress entries follow the law itself: t_i = -p0 + s1 gamma_i + s2 / gamma_i.
    let t1 = -p0 + g_gamma(gamma1, params);
    let t2 = -p0 + g_gamma(gamma2, params);
    let t0 = Tensor2::diag(t1, t2);

    let kh = tangent_k(h, &b0, &t0, beta, params)?;
    let trace_route = kh.inner(h);

    let a = h.xx;
    let c = h.yy;
    let b = 0.5 * (h.xy + h.yx);
    let d = 0.5 * (h.xy - h.yx);
    let a1 = (a + c) * (a * t1 + c * t2) + beta * (a + c) * (a + c);
    let a2 = -t1 * (a * a + b * b - d * d) - t2 * (b * b + c * c - d * d);
    let a3 = 2.0
        * s1
        * (gamma1 * a * a + gamma2 * c * c + (gamma1 + gamma2) * b * b + (gamma2 - gamma1) * b * d);
    let a4 = -2.0
        * s2
        * (a * a / gamma1
            + c * c / gamma2
            + (1.0 / gamma1 + 1.0 / gamma2) * b * b
            + (1.0 / gamma1 - 1.0 / gamma2) * b * d);
    let block_route = a1 + a2 + a3 + a4;

    // Relative to the magnitude of the contributing terms: the sum itself
    // may cancel to zero.
    let scale = trace_route
        .abs()
        .max(block_route.abs())
        .max(a1.abs() + a2.abs() + a3.abs() + a4.abs())
        .max(1.0);
    let gap = (trace_route - block_route).abs() / scale;
    if gap > 1e-12 {
        return Err(OracleError::RouteMismatch { trace: trace_route, blocks: block_route, gap });
    }
    Ok(trace_route)
}

/// Gradient components (a, c, b, d) entering the 4x4 coercivity matrix:
/// H = [[a, b + d], [b - d, c]].
pub fn gradient_components(h: &Tensor2) -> [f64; 4] {
    [h.xx, h.yy, 0.5 * (h.xy + h.yx), 0.5 * (h.xy - h.yx)]
}

/// x^T A x for the block 4x4 coercivity matrix.
pub fn quadform_matrix(a: &CoercivityMatrix, x: [f64; 4]) -> f64 {
    a.a11 * x[0] * x[0]
        + a.a22 * x[1] * x[1]
        + 2.0 * a.a12 * x[0] * x[1]
        + a.a33 * x[2] * x[2]
        + a.a44 * x[3] * x[3]
        + 2.0 * a.a34 * x[2] * x[3]
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, iterated
/// until the off-diagonal norm drops below `off_tol`.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>, off_tol: f64) -> Vec<f64> {
    let n = a.len();
    const MAX_SWEEPS: usize = 100;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += 2.0 * a[p][q] * a[p][q];
            }
        }
        if off.sqrt() <= off_tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                let (app, aqq, apq) = (a[p][p], a[q][q], a[p][q]);
                a[p][p] = app - t * apq;
                a[q][q] = aqq + t * apq;
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for r in 0..n {
                    if r != p && r != q {
                        let (arp, arq) = (a[r][p], a[r][q]);
                        a[r][p] = c * arp - s * arq;
                        a[r][q] = s * arp + c * arq;
                        a[p][r] = a[r][p];
                        a[q][r] = a[r][q];
                    }
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

/// Tolerance on the smallest eigenvalue when deciding semidefiniteness.
pub const PSD_EIGEN_TIE: f64 = 1e-10;

/// Independent semidefiniteness check of A - alpha I through the actual
/// spectrum, with a small tie band at zero.
pub fn psd_eigen_oracle(a: &CoercivityMatrix, alpha: f64) -> bool {
    let mut m: Vec<Vec<f64>> = a.to_matrix().iter().map(|row| row.to_vec()).collect();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] -= alpha;
    }
    let eigs = jacobi_eigenvalues(m, 1e-14);
    eigs.into_iter().fold(f64::INFINITY, f64::min) >= -PSD_EIGEN_TIE
}

/// Smallest eigenvalue of A - alpha I, for tie-band comparisons.
pub fn min_eigenvalue_shifted(a: &CoercivityMatrix, alpha: f64) -> f64 {
    let mut m: Vec<Vec<f64>> = a.to_matrix().iter().map(|row| row.to_vec()).collect();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] -= alpha;
    }
    jacobi_eigenvalues(m, 1e-14).into_iter().fold(f64::INFINITY, f64::min)
}

/// Closed-form gradient of the uniaxial traction patch at the stress-free
/// isotropic state: both off-diagonal components vanish (pinned by the two
/// slip walls), and the diagonal solves
///   beta (H11 + H22) + 2 (s1 - s2) H11 = t,
///   beta (H11 + H22) + 2 (s1 - s2) H22 = 0
/// by direct elimination.
pub fn uniaxial_patch_oracle(traction: f64, beta: f64, params: &MaterialParams) -> Tensor2 {
    let q = params.s1() - params.s2();
    let trace = traction / (2.0 * (beta + q));
    let h22 = -beta * trace / (2.0 * q);
    let h11 = trace - h22;
    debug_assert!((beta * trace + 2.0 * q * h11 - traction).abs() <= 1e-12 * traction.abs().max(1.0));
    Tensor2::diag(h11, h22)
}

/// Exact one-step update of the relative first Piola-Kirchhoff stress:
/// push the state through the full nonlinear law with the logarithmic
/// pressure law p = p0 - beta ln det(I + H) (constant incompressibility
/// modulus) and transform back with the exact area/normal factors. The
/// linearized update must match this to second order in H.
pub fn exact_piola_update(
    b0: &Tensor2,
    p0: f64,
    h: &Tensor2,
    beta: f64,
    params: &MaterialParams,
) -> Result<Tensor2, ConstitutiveError> {
    let f_rel = Tensor2::IDENTITY + *h;
    let det = f_rel.det();
    if det <= 0.0 {
        return Err(ConstitutiveError::StepTooLarge { det });
    }
    let b_new = f_rel * *b0 * f_rel.transpose();
    let p_new = p0 - beta * det.ln();
    let t_new = cauchy_stress(&b_new, p_new, params)?;
    let f_inv_t = f_rel.inverse().ok_or(ConstitutiveError::StepTooLarge { det })?.transpose();
    Ok(det * t_new * f_inv_t)
}

/// L2 mismatch of the discrete traction on the loaded boundary:
/// sum over traction edges of |T_kappa n - f|^2 times edge length, with
/// T_kappa = T0 + K[grad u] constant on the owning element. Small values
/// corroborate that the discrete solution is a weak solution.
pub fn traction_residual(
    mesh: &Mesh,
    states: &[QuadPointState],
    u: &[Vec2],
    tractions: &[Vec2],
    beta: f64,
    params: &MaterialParams,
) -> Result<f64, OracleError> {
    let mut total = 0.0;
    for (idx, edge) in mesh.boundary_edges.iter().enumerate() {
        if edge.label != LABEL_TRACTION {
            continue;
        }
        let owner = mesh.triangle_owning_edge(idx);
        let state = &states[owner];
        let h = crate::assembly::element_gradient(mesh, owner, u);
        let t_kappa = state.t0 + tangent_k(&h, &state.b0, &state.t0, beta, params)?;
        let n = mesh.edge_normal(idx).expect("validated edge");
        let tn = t_kappa.apply(n);
        let f = tractions[idx];
        let dx = tn[0] - f[0];
        let dy = tn[1] - f[1];
        total += (dx * dx + dy * dy) * mesh.edge_length(idx);
    }
    Ok(total)
}
