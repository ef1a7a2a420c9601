//! Small fixed-size linear algebra for the plane problem: 2-vectors and
//! 2x2 second-order tensors.

use std::ops::{Add, Mul, Neg, Sub};

/// Determinants below this magnitude are treated as singular.
pub const SINGULAR_DET: f64 = 1e-14;

/// A 2-vector (point, displacement, normal, ...).
pub type Vec2 = [f64; 2];

pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

/// z-component of the cross product of two plane vectors.
pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// A 2x2 real tensor, entries in row-major order.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Tensor2 {
    pub xx: f64,
    pub xy: f64,
    pub yx: f64,
    pub yy: f64,
}

impl Tensor2 {
    pub const ZERO: Tensor2 = Tensor2::new(0.0, 0.0, 0.0, 0.0);
    pub const IDENTITY: Tensor2 = Tensor2::new(1.0, 0.0, 0.0, 1.0);

    pub const fn new(xx: f64, xy: f64, yx: f64, yy: f64) -> Self {
        Tensor2 { xx, xy, yx, yy }
    }

    pub const fn diag(a: f64, b: f64) -> Self {
        Tensor2::new(a, 0.0, 0.0, b)
    }

    /// Dyadic product a (x) b, entries a_i b_j.
    pub fn outer(a: Vec2, b: Vec2) -> Self {
        Tensor2::new(a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.yx
    }

    pub fn transpose(&self) -> Self {
        Tensor2::new(self.xx, self.yx, self.xy, self.yy)
    }

    /// Closed-form inverse via the adjugate. `None` when |det| < `SINGULAR_DET`.
    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d.abs() < SINGULAR_DET {
            return None;
        }
        Some(Tensor2::new(self.yy / d, -self.xy / d, -self.yx / d, self.xx / d))
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: Vec2) -> Vec2 {
        [self.xx * v[0] + self.xy * v[1], self.yx * v[0] + self.yy * v[1]]
    }

    /// Frobenius inner product tr(A B^T) = sum_ij A_ij B_ij.
    pub fn inner(&self, other: &Tensor2) -> f64 {
        self.xx * other.xx + self.xy * other.xy + self.yx * other.yx + self.yy * other.yy
    }

    /// Largest entry magnitude.
    pub fn norm_inf(&self) -> f64 {
        self.xx
            .abs()
            .max(self.xy.abs())
            .max(self.yx.abs())
            .max(self.yy.abs())
    }

    pub fn norm_fro(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yx.is_finite() && self.yy.is_finite()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.xy - self.yx).abs() <= tol * self.norm_inf().max(1.0)
    }

    /// Symmetric part (A + A^T)/2.
    pub fn sym(&self) -> Self {
        let m = 0.5 * (self.xy + self.yx);
        Tensor2::new(self.xx, m, m, self.yy)
    }

    /// Eigenvalues of a symmetric tensor, largest first.
    pub fn sym_eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.xx + self.yy);
        let off = 0.5 * (self.xy + self.yx);
        let r = (0.5 * (self.xx - self.yy)).hypot(off);
        (mean + r, mean - r)
    }
}

impl Add for Tensor2 {
    type Output = Tensor2;
    fn add(self, o: Tensor2) -> Tensor2 {
        Tensor2::new(self.xx + o.xx, self.xy + o.xy, self.yx + o.yx, self.yy + o.yy)
    }
}

impl Sub for Tensor2 {
    type Output = Tensor2;
    fn sub(self, o: Tensor2) -> Tensor2 {
        Tensor2::new(self.xx - o.xx, self.xy - o.xy, self.yx - o.yx, self.yy - o.yy)
    }
}

impl Mul for Tensor2 {
    type Output = Tensor2;
    fn mul(self, o: Tensor2) -> Tensor2 {
        Tensor2::new(
            self.xx * o.xx + self.xy * o.yx,
            self.xx * o.xy + self.xy * o.yy,
            self.yx * o.xx + self.yy * o.yx,
            self.yx * o.xy + self.yy * o.yy,
        )
    }
}

impl Mul<f64> for Tensor2 {
    type Output = Tensor2;
    fn mul(self, s: f64) -> Tensor2 {
        Tensor2::new(self.xx * s, self.xy * s, self.yx * s, self.yy * s)
    }
}

impl Mul<Tensor2> for f64 {
    type Output = Tensor2;
    fn mul(self, t: Tensor2) -> Tensor2 {
        t * self
    }
}

impl Neg for Tensor2 {
    type Output = Tensor2;
    fn neg(self) -> Tensor2 {
        self * -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_spd() {
        let b = Tensor2::new(1.25, 0.5, 0.5, 1.0);
        let binv = b.inverse().unwrap();
        let prod = b * binv;
        assert!((prod - Tensor2::IDENTITY).norm_inf() < 1e-15);
    }

    #[test]
    fn singular_inverse_rejected() {
        let b = Tensor2::new(1.0, 2.0, 0.5, 1.0);
        assert!(b.det().abs() < SINGULAR_DET);
        assert!(b.inverse().is_none());
    }

    #[test]
    fn eigenvalues_of_diagonal() {
        let (g1, g2) = Tensor2::diag(0.25, 4.0).sym_eigenvalues();
        assert_eq!(g1, 4.0);
        assert_eq!(g2, 0.25);
    }

    #[test]
    fn eigenvalues_of_shear_strain() {
        // B for simple shear kappa = 0.5: eigenvalue product 1, sum 2.25.
        let b = Tensor2::new(1.25, 0.5, 0.5, 1.0);
        let (g1, g2) = b.sym_eigenvalues();
        assert!((g1 * g2 - 1.0).abs() < 1e-14);
        assert!((g1 + g2 - 2.25).abs() < 1e-14);
    }

    #[test]
    fn outer_product_entries() {
        let t = Tensor2::outer([2.0, 3.0], [5.0, 7.0]);
        assert_eq!(t, Tensor2::new(10.0, 14.0, 15.0, 21.0));
    }
}
