//! Quaternion arithmetic in the layout used throughout the crate.
//!
//! A quaternion is stored as four contiguous reals `[z0, z1, z2, z3]` for
//! `z0 + z1 i + z2 j + z3 k`. Pure quaternions are identified with `R^3`
//! through `x1 i + x2 j + x3 k <-> (x1, x2, x3)`.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, MulAssign, Neg, Sub, SubAssign};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Absolute tolerance on the real part when checking purity.
pub const PURE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Quaternion(pub [f64; 4]);

/// A quaternion with vanishing real part, held as its imaginary triple.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PureQuaternion(pub Vec3);

impl Quaternion {
    pub const ZERO: Quaternion = Quaternion([0.0; 4]);
    pub const ONE: Quaternion = Quaternion([1.0, 0.0, 0.0, 0.0]);
    pub const I: Quaternion = Quaternion([0.0, 1.0, 0.0, 0.0]);
    pub const J: Quaternion = Quaternion([0.0, 0.0, 1.0, 0.0]);
    pub const K: Quaternion = Quaternion([0.0, 0.0, 0.0, 1.0]);

    pub const fn new(z0: f64, z1: f64, z2: f64, z3: f64) -> Self {
        Quaternion([z0, z1, z2, z3])
    }

    pub fn from_parts(re: f64, im: Vec3) -> Self {
        Quaternion([re, im.x, im.y, im.z])
    }

    pub fn pure(v: Vec3) -> Self {
        Self::from_parts(0.0, v)
    }

    /// `cos(theta) + i sin(theta)`, the unit of the Kustaanheimo-Stiefel fiber.
    pub fn exp_i(theta: f64) -> Self {
        Quaternion([theta.cos(), theta.sin(), 0.0, 0.0])
    }

    /// `cos(theta) + u sin(theta)` for a pure unit direction `u`.
    pub fn exp_pure(u: Vec3, theta: f64) -> Self {
        Self::from_parts(theta.cos(), u * theta.sin())
    }

    pub fn re(&self) -> f64 {
        self.0[0]
    }

    pub fn im(&self) -> Vec3 {
        Vec3::new(self.0[1], self.0[2], self.0[3])
    }

    pub fn conj(&self) -> Self {
        let [a, b, c, d] = self.0;
        Quaternion([a, -b, -c, -d])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Real inner product `Re(conj(self) * other)`, the Euclidean product on `R^4`.
    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn inverse(&self) -> Result<Self> {
        let n2 = self.norm_sqr();
        if n2 == 0.0 || !n2.is_finite() {
            return Err(Error::Domain("inverse of zero quaternion".into()));
        }
        Ok(self.conj() * (1.0 / n2))
    }

    pub fn is_pure(&self) -> bool {
        self.0[0].abs() <= PURE_TOL * self.norm().max(1.0)
    }

    pub fn to_pure(&self) -> Result<PureQuaternion> {
        if !self.is_pure() {
            return Err(Error::NotPure(self.0[0]));
        }
        Ok(PureQuaternion(self.im()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Left multiplication by `i`.
    pub fn mul_i(&self) -> Self {
        let [a, b, c, d] = self.0;
        Quaternion([-b, a, -d, c])
    }

    /// Real 4x4 matrix of `x -> self * x`.
    pub fn left_matrix(&self) -> [[f64; 4]; 4] {
        let [a, b, c, d] = self.0;
        [[a, -b, -c, -d], [b, a, -d, c], [c, d, a, -b], [d, -c, b, a]]
    }
}

impl PureQuaternion {
    pub fn new(x1: f64, x2: f64, x3: f64) -> Self {
        PureQuaternion(Vec3::new(x1, x2, x3))
    }

    pub fn vec(&self) -> Vec3 {
        self.0
    }

    pub fn quat(&self) -> Quaternion {
        Quaternion::pure(self.0)
    }
}

impl From<PureQuaternion> for Quaternion {
    fn from(p: PureQuaternion) -> Self {
        p.quat()
    }
}

impl From<Vec3> for Quaternion {
    fn from(v: Vec3) -> Self {
        Quaternion::pure(v)
    }
}

impl Index<usize> for Quaternion {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Quaternion {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for Quaternion {
    type Output = Quaternion;
    fn add(self, o: Quaternion) -> Quaternion {
        let mut r = self.0;
        for (x, y) in r.iter_mut().zip(o.0) {
            *x += y;
        }
        Quaternion(r)
    }
}

impl AddAssign for Quaternion {
    fn add_assign(&mut self, o: Quaternion) {
        *self = *self + o;
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;
    fn sub(self, o: Quaternion) -> Quaternion {
        self + (-o)
    }
}

impl SubAssign for Quaternion {
    fn sub_assign(&mut self, o: Quaternion) {
        *self = *self - o;
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        Quaternion(self.0.map(|x| -x))
    }
}

impl Mul<f64> for Quaternion {
    type Output = Quaternion;
    fn mul(self, s: f64) -> Quaternion {
        Quaternion(self.0.map(|x| x * s))
    }
}

impl Mul<Quaternion> for f64 {
    type Output = Quaternion;
    fn mul(self, q: Quaternion) -> Quaternion {
        q * self
    }
}

impl MulAssign<f64> for Quaternion {
    fn mul_assign(&mut self, s: f64) {
        *self = *self * s;
    }
}

/// Hamilton product.
impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, o: Quaternion) -> Quaternion {
        let [a1, b1, c1, d1] = self.0;
        let [a2, b2, c2, d2] = o.0;
        Quaternion([
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        ])
    }
}

impl std::iter::Sum for Quaternion {
    fn sum<I: Iterator<Item = Quaternion>>(iter: I) -> Self {
        iter.fold(Quaternion::ZERO, |a, b| a + b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_table() {
        let (i, j, k) = (Quaternion::I, Quaternion::J, Quaternion::K);
        assert_eq!(i * j, k);
        assert_eq!(j * k, i);
        assert_eq!(k * i, j);
        assert_eq!(j * i, -k);
        assert_eq!(i * i, -Quaternion::ONE);
        assert_eq!(i * j * k, -Quaternion::ONE);
    }

    #[test]
    fn conj_of_product_reverses() {
        let x = Quaternion::new(1.0, 2.0, -0.5, 3.0);
        let y = Quaternion::new(-0.3, 0.7, 1.1, 0.2);
        let lhs = (x * y).conj();
        let rhs = y.conj() * x.conj();
        for c in 0..4 {
            assert!((lhs[c] - rhs[c]).abs() < 1e-14);
        }
        assert!(((x * y).norm() - x.norm() * y.norm()).abs() < 1e-13);
    }

    #[test]
    fn mul_i_matches_product() {
        let x = Quaternion::new(0.3, -1.2, 2.5, 0.8);
        assert_eq!(x.mul_i(), Quaternion::I * x);
        let m = x.left_matrix();
        let y = Quaternion::new(1.0, 2.0, 3.0, 4.0);
        let p = x * y;
        for r in 0..4 {
            let v: f64 = (0..4).map(|c| m[r][c] * y[c]).sum();
            assert!((v - p[r]).abs() < 1e-13);
        }
    }

    #[test]
    fn purity_and_inverse() {
        assert!(Quaternion::new(1e-12, 1.0, 0.0, 0.0).is_pure());
        assert!(Quaternion::new(1e-8, 1e3, 0.0, 0.0).is_pure());
        assert!(!Quaternion::new(1e-6, 1.0, 0.0, 0.0).is_pure());
        assert!(matches!(
            Quaternion::new(0.1, 0.0, 0.0, 0.0).to_pure(),
            Err(Error::NotPure(_))
        ));
        assert!(Quaternion::ZERO.inverse().is_err());
        let x = Quaternion::new(0.5, -1.0, 2.0, 0.25);
        let e = x * x.inverse().unwrap();
        assert!((e - Quaternion::ONE).norm() < 1e-14);
    }
}
