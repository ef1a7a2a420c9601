//! Coercivity certification for the linearized step problem.
//!
//! The bilinear form of one step is coercive whenever the pointwise 4x4
//! matrix A(x), built from the eigenvalues of B0, the pressure and the
//! incompressibility modulus beta, satisfies A(x) - alpha I >= 0 uniformly.
//! This module builds A(x), checks positive semidefiniteness through the
//! block Sylvester conditions, verifies the sufficient hypotheses (a lower
//! bound on det B0, an upper bound on alpha, and a two-sided gap condition
//! on the pressure), and computes the smallest sufficient beta0.

use crate::constitutive::MaterialParams;
use crate::tensor::Tensor2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoercivityError {
    #[error("invalid certification arguments: {0}")]
    InvalidArguments(String),
    #[error("alpha = {alpha} too large: root discriminant {discriminant:e} is negative; reduce alpha below the admissible bound")]
    AlphaTooLarge { alpha: f64, discriminant: f64 },
    #[error("strain tensor is not symmetric positive definite: {0}")]
    InvalidStrain(String),
}

/// f(gamma) = s1 gamma - s2 / gamma.
pub fn f_gamma(gamma: f64, params: &MaterialParams) -> f64 {
    params.s1() * gamma - params.s2() / gamma
}

/// g(gamma) = s1 gamma + s2 / gamma.
pub fn g_gamma(gamma: f64, params: &MaterialParams) -> f64 {
    params.s1() * gamma + params.s2() / gamma
}

/// Pointwise state reduced to the spectral data the certification needs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpectralState {
    /// Larger eigenvalue of B0.
    pub gamma1: f64,
    /// Smaller eigenvalue of B0.
    pub gamma2: f64,
    pub p0: f64,
    pub det_b0: f64,
    pub tr_b0: f64,
    pub tr_b0_inv: f64,
    pub tr_t0: f64,
}

impl SpectralState {
    /// Build directly from eigenvalues (already-diagonal strain).
    pub fn from_eigenvalues(
        gamma1: f64,
        gamma2: f64,
        p0: f64,
        params: &MaterialParams,
    ) -> Result<Self, CoercivityError> {
        if !(gamma2 > 0.0) || !(gamma1 >= gamma2) {
            return Err(CoercivityError::InvalidStrain(format!(
                "eigenvalues must satisfy gamma1 >= gamma2 > 0, got ({gamma1}, {gamma2})"
            )));
        }
        let det_b0 = gamma1 * gamma2;
        let tr_b0 = gamma1 + gamma2;
        let tr_b0_inv = tr_b0 / det_b0;
        Ok(SpectralState {
            gamma1,
            gamma2,
            p0,
            det_b0,
            tr_b0,
            tr_b0_inv,
            tr_t0: -2.0 * p0 + params.s1() * tr_b0 + params.s2() * tr_b0_inv,
        })
    }

    /// Ratio tr B0 / sqrt(det B0) entering the alpha bound.
    pub fn d_ratio(&self) -> f64 {
        self.tr_b0 / self.det_b0.sqrt()
    }
}

/// Spectral reduction of a full strain tensor. Trace and determinant are
/// taken from the raw entries, not from the rounded eigenvalues.
pub fn spectral_of(
    b0: &Tensor2,
    p0: f64,
    params: &MaterialParams,
) -> Result<SpectralState, CoercivityError> {
    if !b0.is_symmetric(1e-10) {
        return Err(CoercivityError::InvalidStrain(format!("B0 is not symmetric: {b0:?}")));
    }
    let det_b0 = b0.det();
    let (gamma1, gamma2) = b0.sym_eigenvalues();
    if !(gamma2 > 0.0) || !(det_b0 > 0.0) {
        return Err(CoercivityError::InvalidStrain(format!(
            "B0 is not positive definite (eigenvalues {gamma1}, {gamma2})"
        )));
    }
    let tr_b0 = b0.trace();
    let tr_b0_inv = tr_b0 / det_b0;
    Ok(SpectralState {
        gamma1,
        gamma2,
        p0,
        det_b0,
        tr_b0,
        tr_b0_inv,
        tr_t0: -2.0 * p0 + params.s1() * tr_b0 + params.s2() * tr_b0_inv,
    })
}

/// The six independent entries of the block-diagonal symmetric 4x4 matrix
/// A(x) in the (a, c, b, d) gradient coordinates. Off-blocks vanish
/// identically.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoercivityMatrix {
    pub a11: f64,
    pub a22: f64,
    pub a12: f64,
    pub a33: f64,
    pub a44: f64,
    pub a34: f64,
    pub beta: f64,
}

impl CoercivityMatrix {
    /// Materialize the full symmetric 4x4 matrix.
    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        [
            [self.a11, self.a12, 0.0, 0.0],
            [self.a12, self.a22, 0.0, 0.0],
            [0.0, 0.0, self.a33, self.a34],
            [0.0, 0.0, self.a34, self.a44],
        ]
    }
}

/// Assemble A(x) from the spectral state:
///   A11 = beta + 2 f(gamma1)        A33 = 2 s1 tr B0 - 2 s2 tr B0^{-1} - tr T0
///   A22 = beta + 2 f(gamma2)        A44 = tr T0
///   A12 = beta + tr T0 / 2          A34 = s1 (gamma2 - gamma1) - s2 (1/gamma1 - 1/gamma2)
pub fn build_a(s: &SpectralState, beta: f64, params: &MaterialParams) -> CoercivityMatrix {
    let s1 = params.s1();
    let s2 = params.s2();
    CoercivityMatrix {
        a11: beta + 2.0 * f_gamma(s.gamma1, params),
        a22: beta + 2.0 * f_gamma(s.gamma2, params),
        a12: beta + 0.5 * s.tr_t0,
        a33: 2.0 * s1 * s.tr_b0 - 2.0 * s2 * s.tr_b0_inv - s.tr_t0,
        a44: s.tr_t0,
        a34: s1 * (s.gamma2 - s.gamma1) - s2 * (1.0 / s.gamma1 - 1.0 / s.gamma2),
        beta,
    }
}

/// Block Sylvester test: A - alpha I is positive semidefinite iff
/// min{ A11 - alpha, (A11 - alpha)(A22 - alpha) - A12^2,
///      A33 - alpha, (A33 - alpha)(A44 - alpha) - A34^2 } >= 0.
/// Ties at exactly zero count as semidefinite.
pub fn check_psd(a: &CoercivityMatrix, alpha: f64) -> bool {
    sylvester_min(a, alpha) >= 0.0
}

/// The smallest of the four Sylvester quantities; its sign decides semidefiniteness.
pub fn sylvester_min(a: &CoercivityMatrix, alpha: f64) -> f64 {
    let q1 = a.a11 - alpha;
    let q2 = (a.a11 - alpha) * (a.a22 - alpha) - a.a12 * a.a12;
    let q3 = a.a33 - alpha;
    let q4 = (a.a33 - alpha) * (a.a44 - alpha) - a.a34 * a.a34;
    q1.min(q2).min(q3).min(q4)
}

/// The interval bounds controlling the second diagonal block.
#[derive(Debug, Clone, Copy)]
pub struct PressureBounds {
    /// Roots of the quadratic in -2 p0 at the given alpha.
    pub a_alpha: f64,
    pub b_alpha: f64,
    /// The alpha = 0 interval.
    pub a0: f64,
    pub b0: f64,
    /// Trace-based outer bounds.
    pub a_star: f64,
    pub b_star: f64,
}

/// Compute the admissible-pressure interval data at one point.
///
/// With C = f(sqrt(det B0)) and the discriminant
/// C^2 - (alpha/2)(s1 tr B0 - s2 tr B0^{-1}) + alpha^2/4, the second block
/// is semidefinite exactly when a_alpha <= -2 p0 <= b_alpha.
pub fn roots_a_b(
    s: &SpectralState,
    alpha: f64,
    params: &MaterialParams,
) -> Result<PressureBounds, CoercivityError> {
    let s1 = params.s1();
    let s2 = params.s2();
    let c = f_gamma(s.det_b0.sqrt(), params);
    let disc = c * c - 0.5 * alpha * (s1 * s.tr_b0 - s2 * s.tr_b0_inv) + 0.25 * alpha * alpha;
    if disc < 0.0 {
        return Err(CoercivityError::AlphaTooLarge { alpha, discriminant: disc });
    }
    let base = -2.0 * s2 * s.tr_b0_inv;
    let r = disc.sqrt();
    Ok(PressureBounds {
        a_alpha: base - 2.0 * r,
        b_alpha: base + 2.0 * r,
        a0: base - 2.0 * c,
        b0: base + 2.0 * c,
        a_star: -s1 * s.tr_b0 - s2 * s.tr_b0_inv,
        b_star: s1 * s.tr_b0 - 3.0 * s2 * s.tr_b0_inv,
    })
}

/// Absolute tolerance of the bisection locating beta0.
pub const BETA0_BISECTION_TOL: f64 = 1e-9;

/// Outcome of the certification over a collection of sample points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoercivityReport {
    pub k: f64,
    pub epsilon: f64,
    pub dbar: f64,
    pub alpha: f64,
    pub alpha_max: f64,
    /// Per-point margin of -2 p0 above a0 + alpha dbar.
    pub gap_lo: Vec<f64>,
    /// Per-point margin of b0 - alpha dbar above -2 p0.
    pub gap_hi: Vec<f64>,
    /// Smallest sufficient incompressibility modulus over all points;
    /// `None` when the search failed or the hypotheses do not hold.
    pub beta0: Option<f64>,
    pub admissible: bool,
    /// Index of the sample point with the smallest margin.
    pub worst_point: usize,
    /// Description of the first failed condition, when not admissible.
    pub violation: Option<String>,
}

/// Largest alpha admitted by the hypothesis bound, given dbar.
fn admissible_alpha_bound(k: f64, dbar: f64, params: &MaterialParams) -> f64 {
    let s1 = params.s1();
    let s2 = params.s2();
    let bound = if s2 < 0.0 {
        2.0 * (-s1 * s2).sqrt()
    } else {
        2.0 * (s1 - s2 / k) * k.sqrt()
    };
    bound / dbar
}

/// Default choice of the lower bound k on det B0: barely above the required
/// s2/s1 when s2 > 0, else a small positive floor.
pub fn default_k(params: &MaterialParams) -> f64 {
    if params.s2() > 0.0 {
        (1.01 * params.s2() / params.s1()).max(1e-3)
    } else {
        1e-3
    }
}

/// Automatic alpha: 90% of the largest value the hypothesis bound admits.
pub fn auto_alpha(points: &[SpectralState], k: f64, params: &MaterialParams) -> f64 {
    let dbar = points.iter().map(SpectralState::d_ratio).fold(2.0, f64::max);
    0.9 * admissible_alpha_bound(k, dbar, params)
}

/// Check the sufficient conditions for uniform semidefiniteness of
/// A(x) - alpha I over the sample points and compute the smallest
/// sufficient beta0.
///
/// The hypotheses checked per point are det B0 >= k, the alpha bound
/// alpha dbar < 2 sqrt(-s1 s2) (or 2 eps sqrt(k) for s2 >= 0), the
/// two-sided pressure gap a0 + alpha dbar < -2 p0 < b0 - alpha dbar, and
/// the trace condition -2 p0 < -2 alpha + s1 tr B0 - 3 s2 tr B0^{-1}.
/// beta0 is located per point by upward doubling then bisection, and the
/// found value is re-verified directly.
pub fn certify(
    points: &[SpectralState],
    alpha: f64,
    k: f64,
    beta_max: f64,
    params: &MaterialParams,
) -> Result<CoercivityReport, CoercivityError> {
    let s1 = params.s1();
    let s2 = params.s2();
    if points.is_empty() {
        return Err(CoercivityError::InvalidArguments("no sample points supplied".into()));
    }
    if !(k > (s2 / s1).max(0.0)) {
        return Err(CoercivityError::InvalidArguments(format!(
            "k = {k} must exceed max(0, s2/s1) = {}",
            (s2 / s1).max(0.0)
        )));
    }
    if !(alpha > 0.0) {
        return Err(CoercivityError::InvalidArguments(format!("alpha = {alpha} must be positive")));
    }
    if !(beta_max > 0.0) {
        return Err(CoercivityError::InvalidArguments(format!(
            "beta_max = {beta_max} must be positive"
        )));
    }

    let epsilon = s1 - s2 / k;
    let dbar = points.iter().map(SpectralState::d_ratio).fold(f64::NEG_INFINITY, f64::max);
    let alpha_max = admissible_alpha_bound(k, dbar, params);

    let mut report = CoercivityReport {
        k,
        epsilon,
        dbar,
        alpha,
        alpha_max,
        gap_lo: Vec::with_capacity(points.len()),
        gap_hi: Vec::with_capacity(points.len()),
        beta0: None,
        admissible: false,
        worst_point: 0,
        violation: None,
    };

    let mut violation: Option<String> = None;
    let mut worst_margin = f64::INFINITY;
    let note_violation = |v: String, current: &mut Option<String>| {
        if current.is_none() {
            *current = Some(v);
        }
    };

    if !(alpha < alpha_max) {
        note_violation(
            format!("alpha bound violated: alpha = {alpha} is not below alpha_max = {alpha_max}"),
            &mut violation,
        );
    }

    for (i, pt) in points.iter().enumerate() {
        let det_margin = pt.det_b0 - k;
        if det_margin < 0.0 {
            note_violation(
                format!(
                    "strain determinant bound violated at point {i}: det B0 = {} < k = {k}",
                    pt.det_b0
                ),
                &mut violation,
            );
        }

        // Gap margins are reported even when some other hypothesis failed.
        let bounds = roots_a_b(pt, 0.0, params).expect("alpha = 0 discriminant is a square");
        let target = -2.0 * pt.p0;
        let lo = target - (bounds.a0 + alpha * dbar);
        let hi = (bounds.b0 - alpha * dbar) - target;
        report.gap_lo.push(lo);
        report.gap_hi.push(hi);
        if !(lo > 0.0 && hi > 0.0) {
            note_violation(
                format!(
                    "pressure gap condition violated at point {i}: -2 p0 = {target} not inside \
                     ({}, {})",
                    bounds.a0 + alpha * dbar,
                    bounds.b0 - alpha * dbar
                ),
                &mut violation,
            );
        }

        let trace_rhs = -2.0 * alpha + s1 * pt.tr_b0 - 3.0 * s2 * pt.tr_b0_inv;
        let trace_margin = trace_rhs - target;
        if !(trace_margin > 0.0) {
            note_violation(
                format!(
                    "trace condition violated at point {i}: -2 p0 = {target} must stay below {trace_rhs}"
                ),
                &mut violation,
            );
        }

        let margin = det_margin.min(lo).min(hi).min(trace_margin);
        if margin < worst_margin {
            worst_margin = margin;
            report.worst_point = i;
        }
    }

    if let Some(v) = violation {
        report.violation = Some(v);
        return Ok(report);
    }

    // Hypotheses hold; locate the smallest sufficient beta over all points.
    let mut beta0 = 0.0_f64;
    for (i, pt) in points.iter().enumerate() {
        match minimal_beta(pt, alpha, beta_max, params) {
            Some(b) => beta0 = beta0.max(b),
            None => {
                report.violation = Some(format!(
                    "beta exceeds maximum at point {i}: no beta <= {beta_max} makes A - alpha I \
                     semidefinite"
                ));
                return Ok(report);
            }
        }
    }

    // Paranoia: the located beta0 must pass the direct check everywhere.
    for (i, pt) in points.iter().enumerate() {
        if !check_psd(&build_a(pt, beta0, params), alpha) {
            report.violation = Some(format!(
                "internal error: located beta0 = {beta0} fails the semidefiniteness check at point {i}"
            ));
            return Ok(report);
        }
    }

    report.beta0 = Some(beta0);
    report.admissible = true;
    Ok(report)
}

/// Smallest beta in [0, beta_max] making A - alpha I semidefinite at one
/// point: upward doubling to bracket, then bisection to 1e-9.
fn minimal_beta(
    s: &SpectralState,
    alpha: f64,
    beta_max: f64,
    params: &MaterialParams,
) -> Option<f64> {
    let psd = |beta: f64| check_psd(&build_a(s, beta, params), alpha);
    if psd(0.0) {
        return Some(0.0);
    }
    let mut lo = 0.0;
    let mut hi = alpha.max(1e-6).min(beta_max);
    while !psd(hi) {
        if hi >= beta_max {
            return None;
        }
        lo = hi;
        hi = (2.0 * hi).min(beta_max);
    }
    while hi - lo > BETA0_BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if psd(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}
