//! Mooney-Rivlin constitutive law, its linearization about the current
//! configuration, and the per-step state update rules of the successive
//! linear approximation scheme.
//!
//! The material law is T = -p I + s1 B + s2 B^{-1} with B = F F^T. Each
//! step linearizes about the present state (B0, T0, p0) in the relative
//! displacement gradient H and advances F, B0, T0, p, rho by the
//! first-order update, dropping quadratic remainders.

use crate::tensor::{Tensor2, Vec2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstitutiveError {
    #[error("material parameters must satisfy s1 > 0 and s2 < s1 (got s1 = {s1}, s2 = {s2})")]
    InvalidShearModuli { s1: f64, s2: f64 },
    #[error("incompressibility modulus beta must be positive (got {0})")]
    NonPositiveBeta(f64),
    #[error("reference density rho0 must be positive (got {0})")]
    NonPositiveDensity(f64),
    #[error("strain tensor is numerically singular (|det B| = {det:e})")]
    SingularStrain { det: f64 },
    #[error("increment too large: det(I + H) = {det:e} signals the step violated the small-gradient assumption")]
    StepTooLarge { det: f64 },
}

/// Sign regime of the second Mooney-Rivlin modulus. The classical
/// E-inequalities take s2 <= 0; the thermodynamic stability analysis also
/// admits 0 < s2 < s1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShearRegime {
    /// s2 <= 0 < s1
    EInequalities,
    /// 0 < s2 < s1
    PositiveS2,
}

/// Material constants for a nearly incompressible Mooney-Rivlin solid.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MaterialParams {
    s1: f64,
    s2: f64,
    beta: f64,
    rho0: f64,
    gravity: Vec2,
}

impl MaterialParams {
    pub fn new(s1: f64, s2: f64, beta: f64, rho0: f64, gravity: Vec2) -> Result<Self, ConstitutiveError> {
        if !(s1 > 0.0 && s2 < s1) || !s1.is_finite() || !s2.is_finite() {
            return Err(ConstitutiveError::InvalidShearModuli { s1, s2 });
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(ConstitutiveError::NonPositiveBeta(beta));
        }
        if !(rho0 > 0.0) || !rho0.is_finite() {
            return Err(ConstitutiveError::NonPositiveDensity(rho0));
        }
        Ok(MaterialParams { s1, s2, beta, rho0, gravity })
    }

    pub fn s1(&self) -> f64 {
        self.s1
    }

    pub fn s2(&self) -> f64 {
        self.s2
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn rho0(&self) -> f64 {
        self.rho0
    }

    pub fn gravity(&self) -> Vec2 {
        self.gravity
    }

    pub fn regime(&self) -> ShearRegime {
        if self.s2 <= 0.0 {
            ShearRegime::EInequalities
        } else {
            ShearRegime::PositiveS2
        }
    }
}

/// Mechanical state carried at one quadrature point (one state per P1
/// element): deformation gradient relative to the preferred configuration,
/// left Cauchy-Green strain, Cauchy stress, pressure and current density.
#[derive(Debug, Clone, Copy)]
pub struct QuadPointState {
    pub f: Tensor2,
    pub b0: Tensor2,
    pub t0: Tensor2,
    pub p0: f64,
    pub rho: f64,
}

impl QuadPointState {
    /// State at the preferred configuration: F = I, B0 = I, rho = rho0,
    /// stress from the constitutive law at the given pressure. The
    /// equilibrium choice p0 = s1 + s2 makes T0 = 0.
    pub fn initial(p0: f64, params: &MaterialParams) -> Result<Self, ConstitutiveError> {
        let t0 = cauchy_stress(&Tensor2::IDENTITY, p0, params)?;
        Ok(QuadPointState {
            f: Tensor2::IDENTITY,
            b0: Tensor2::IDENTITY,
            t0,
            p0,
            rho: params.rho0(),
        })
    }
}

fn invert_strain(b: &Tensor2) -> Result<Tensor2, ConstitutiveError> {
    b.inverse().ok_or(ConstitutiveError::SingularStrain { det: b.det() })
}

/// Cauchy stress T = -p I + s1 B + s2 B^{-1}.
pub fn cauchy_stress(b: &Tensor2, p: f64, params: &MaterialParams) -> Result<Tensor2, ConstitutiveError> {
    let binv = invert_strain(b)?;
    Ok(-p * Tensor2::IDENTITY + params.s1() * *b + params.s2() * binv)
}

/// Differential of the elastic part of the stress in the relative
/// description: `s1 (H B + B H^T) - s2 (B^-1 H + H^T B^-1)`.
pub fn df_tilde(h: &Tensor2, b: &Tensor2, params: &MaterialParams) -> Result<Tensor2, ConstitutiveError> {
    let binv = invert_strain(b)?;
    let ht = h.transpose();
    Ok(params.s1() * (*h * *b + *b * ht) - params.s2() * (binv * *h + ht * binv))
}

/// Elasticity tensor of the pressure-coupled law applied to H:
/// `L(F)[H] = beta (tr H) I + s1 (H B + B H^T) - s2 (B^-1 H + H^T B^-1)`.
pub fn elasticity_l(
    h: &Tensor2,
    b0: &Tensor2,
    beta: f64,
    params: &MaterialParams,
) -> Result<Tensor2, ConstitutiveError> {
    Ok(beta * h.trace() * Tensor2::IDENTITY + df_tilde(h, b0, params)?)
}

/// Tangent of the relative first Piola-Kirchhoff stress:
/// `K[H] = (tr H)(T0 + beta I) - T0 H^T + s1 (H B0 + B0 H^T) - s2 (B0^-1 H + H^T B0^-1)`.
pub fn tangent_k(
    h: &Tensor2,
    b0: &Tensor2,
    t0: &Tensor2,
    beta: f64,
    params: &MaterialParams,
) -> Result<Tensor2, ConstitutiveError> {
    let trh = h.trace();
    Ok(trh * (*t0 + beta * Tensor2::IDENTITY) - *t0 * h.transpose() + df_tilde(h, b0, params)?)
}

/// First Piola-Kirchhoff stress relative to the current configuration, to
/// first order in H: `T0 + K[H]`.
pub fn piola_kirchhoff_linearized(
    t0: &Tensor2,
    h: &Tensor2,
    b0: &Tensor2,
    beta: f64,
    params: &MaterialParams,
) -> Result<Tensor2, ConstitutiveError> {
    Ok(*t0 + tangent_k(h, b0, t0, beta, params)?)
}

/// Determinants of I + H below this mark a rejected update.
pub const MIN_STEP_DET: f64 = 1e-8;

/// Advance the state across one step with relative displacement gradient H:
/// ```text
///   F+   = (I + H) F
///   B0+  = F+ F+^T
///   T0+  = T0 + L(F)[H]
///   p+   = p - beta tr H
///   rho+ = rho (1 - tr H)
/// ```
pub fn update_state(
    state: &QuadPointState,
    h: &Tensor2,
    beta: f64,
    params: &MaterialParams,
) -> Result<QuadPointState, ConstitutiveError> {
    let step = Tensor2::IDENTITY + *h;
    let det = step.det();
    if det <= MIN_STEP_DET {
        return Err(ConstitutiveError::StepTooLarge { det });
    }
    let f = step * state.f;
    let b0 = f * f.transpose();
    let t0 = state.t0 + elasticity_l(h, &state.b0, beta, params)?;
    let trh = h.trace();
    Ok(QuadPointState {
        f,
        b0,
        t0,
        p0: state.p0 - beta * trh,
        rho: state.rho * (1.0 - trh),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(s1: f64, s2: f64) -> MaterialParams {
        MaterialParams::new(s1, s2, 100.0, 1.0, [0.0, 0.0]).unwrap()
    }

    #[test]
    fn rejects_invalid_moduli() {
        assert!(MaterialParams::new(0.0, -1.0, 1.0, 1.0, [0.0, 0.0]).is_err());
        assert!(MaterialParams::new(1.0, 1.0, 1.0, 1.0, [0.0, 0.0]).is_err());
        assert!(MaterialParams::new(1.0, 2.0, 1.0, 1.0, [0.0, 0.0]).is_err());
        assert!(MaterialParams::new(1.0, -1.0, 0.0, 1.0, [0.0, 0.0]).is_err());
        assert!(MaterialParams::new(1.0, -1.0, 1.0, -2.0, [0.0, 0.0]).is_err());
        assert!(MaterialParams::new(1.0, 0.5, 1.0, 1.0, [0.0, 0.0]).is_ok());
    }

    #[test]
    fn stress_free_at_equilibrium_pressure() {
        // Exact when s1 + s2 is representable.
        let p = params(1.0, -0.5);
        let t = cauchy_stress(&Tensor2::IDENTITY, p.s1() + p.s2(), &p).unwrap();
        assert_eq!(t.norm_inf(), 0.0);

        let p = params(1.0, -0.3);
        let t = cauchy_stress(&Tensor2::IDENTITY, p.s1() + p.s2(), &p).unwrap();
        assert!(t.norm_inf() < 1e-15);
    }

    #[test]
    fn stress_of_simple_shear_strain() {
        // B for simple shear kappa = 0.5; T12 = (s1 - s2) kappa.
        let p = params(1.0, -0.3);
        let b = Tensor2::new(1.25, 0.5, 0.5, 1.0);
        let t = cauchy_stress(&b, 0.0, &p).unwrap();
        assert!((t.xy - 0.65).abs() < 1e-15);
        assert!((t.xy - t.yx).abs() < 1e-15);
    }

    #[test]
    fn stress_reduces_to_s1_b_when_s2_zero() {
        let p = params(1.0, 0.0);
        let b = Tensor2::diag(4.0, 0.25);
        let t = cauchy_stress(&b, 0.0, &p).unwrap();
        assert!((t - b).norm_inf() < 1e-15);
    }

    #[test]
    fn singular_strain_rejected() {
        let p = params(1.0, -0.3);
        let b = Tensor2::new(1.0, 1.0, 1.0, 1.0);
        assert!(matches!(
            cauchy_stress(&b, 0.0, &p),
            Err(ConstitutiveError::SingularStrain { .. })
        ));
    }

    #[test]
    fn df_tilde_zero_and_hand_case() {
        let p = params(1.0, -0.5);
        let b = Tensor2::IDENTITY;
        let zero = df_tilde(&Tensor2::ZERO, &b, &p).unwrap();
        assert_eq!(zero.norm_inf(), 0.0);

        // H = e1 (x) e2 with B = I gives (s1 - s2)(H + H^T).
        let h = Tensor2::new(0.0, 1.0, 0.0, 0.0);
        let d = df_tilde(&h, &b, &p).unwrap();
        let expect = Tensor2::new(0.0, 1.5, 1.5, 0.0);
        assert!((d - expect).norm_inf() < 1e-15);
    }

    #[test]
    fn df_tilde_is_homogeneous_in_h() {
        let p = params(2.0, 0.5);
        let b = Tensor2::new(1.25, 0.5, 0.5, 1.0);
        let h = Tensor2::new(0.3, -0.2, 0.7, 0.1);
        let twice = df_tilde(&(2.0 * h), &b, &p).unwrap();
        let one = df_tilde(&h, &b, &p).unwrap();
        assert!((twice - 2.0 * one).norm_inf() < 1e-13);
    }

    #[test]
    fn tangent_k_hand_cases() {
        let p = params(1.0, -0.5);
        let beta = 5.0;
        let zero = tangent_k(&Tensor2::ZERO, &Tensor2::IDENTITY, &Tensor2::ZERO, beta, &p).unwrap();
        assert_eq!(zero.norm_inf(), 0.0);

        // H = I, B0 = I, T0 = 0: (2 beta + 2 s1 - 2 s2) I.
        let k = tangent_k(&Tensor2::IDENTITY, &Tensor2::IDENTITY, &Tensor2::ZERO, beta, &p).unwrap();
        let expect = (2.0 * beta + 2.0 * p.s1() - 2.0 * p.s2()) * Tensor2::IDENTITY;
        assert!((k - expect).norm_inf() < 1e-13);

        // Traceless H kills the beta term and reduces to df_tilde.
        let h = Tensor2::new(0.0, 1.0, 0.0, 0.0);
        let k = tangent_k(&h, &Tensor2::IDENTITY, &Tensor2::ZERO, beta, &p).unwrap();
        assert!((k - Tensor2::new(0.0, 1.5, 1.5, 0.0)).norm_inf() < 1e-15);
    }

    #[test]
    fn piola_matches_tangent_paths() {
        let p = params(1.3, 0.4);
        let beta = 7.0;
        let h = Tensor2::new(0.01, -0.02, 0.03, 0.015);
        let b0 = Tensor2::new(1.5, 0.2, 0.2, 0.9);

        // H = 0 returns T0 unchanged.
        let t0 = Tensor2::new(0.3, 0.1, 0.1, -0.2);
        let pk = piola_kirchhoff_linearized(&t0, &Tensor2::ZERO, &b0, beta, &p).unwrap();
        assert_eq!((pk - t0).norm_inf(), 0.0);

        // T0 = 0 reduces to the tangent itself.
        let pk = piola_kirchhoff_linearized(&Tensor2::ZERO, &h, &b0, beta, &p).unwrap();
        let k = tangent_k(&h, &b0, &Tensor2::ZERO, beta, &p).unwrap();
        assert_eq!((pk - k).norm_inf(), 0.0);
    }

    #[test]
    fn update_state_identity_and_dilation() {
        let p = params(1.0, -0.3);
        let state = QuadPointState::initial(p.s1() + p.s2(), &p).unwrap();

        let same = update_state(&state, &Tensor2::ZERO, 100.0, &p).unwrap();
        assert_eq!((same.f - state.f).norm_inf(), 0.0);
        assert_eq!(same.p0, state.p0);
        assert_eq!(same.rho, state.rho);

        // H = 0.01 I: F -> 1.01 I, p drops by 2, rho shrinks by 2%.
        let h = 0.01 * Tensor2::IDENTITY;
        let next = update_state(&state, &h, 100.0, &p).unwrap();
        assert!((next.f - 1.01 * Tensor2::IDENTITY).norm_inf() < 1e-15);
        assert!((next.p0 - (state.p0 - 2.0)).abs() < 1e-12);
        assert!((next.rho - 0.98 * state.rho).abs() < 1e-15);
    }

    #[test]
    fn update_state_composes_gradients() {
        let p = params(1.0, -0.3);
        let state = QuadPointState::initial(p.s1() + p.s2(), &p).unwrap();
        let h1 = Tensor2::new(0.02, 0.01, -0.005, 0.03);
        let h2 = Tensor2::new(-0.01, 0.04, 0.02, 0.01);
        let s1 = update_state(&state, &h1, 10.0, &p).unwrap();
        let s2 = update_state(&s1, &h2, 10.0, &p).unwrap();
        let expect = (Tensor2::IDENTITY + h2) * (Tensor2::IDENTITY + h1);
        assert!((s2.f - expect).norm_inf() < 1e-15);
        // B0 stays consistent with F.
        let bf = s2.f * s2.f.transpose();
        assert!((s2.b0 - bf).norm_inf() <= 1e-10 * bf.norm_inf());
    }

    #[test]
    fn update_state_rejects_collapsing_step() {
        let p = params(1.0, -0.3);
        let state = QuadPointState::initial(0.0, &p).unwrap();
        let h = Tensor2::new(-1.0, 0.0, 0.0, -1.0);
        assert!(matches!(
            update_state(&state, &h, 1.0, &p),
            Err(ConstitutiveError::StepTooLarge { .. })
        ));
    }
}
