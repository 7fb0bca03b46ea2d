//! Kustaanheimo-Stiefel geometry: the map `z -> conj(z) i z`, its
//! differential, the symplectic lift to `T*R^3` and the bilinear constraint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quat::{PureQuaternion, Quaternion, Vec3};

/// Relative tolerance for `BL(z, w) = 0`.
pub const BL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub q: Vec3,
    pub p: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsPhasePoint {
    pub z: Quaternion,
    pub w: Quaternion,
}

impl PhasePoint {
    pub fn new(q: Vec3, p: Vec3) -> Self {
        PhasePoint { q, p }
    }
}

/// `Phi(z) = conj(z) i z`.
pub fn ks_map(z: &Quaternion) -> PureQuaternion {
    PureQuaternion(ks_map_vec(z))
}

pub fn ks_map_vec(z: &Quaternion) -> Vec3 {
    let [a, b, c, d] = z.0;
    Vec3::new(
        a * a + b * b - c * c - d * d,
        2.0 * (b * c - a * d),
        2.0 * (a * c + b * d),
    )
}

/// `dPhi(z) v = conj(v) i z + conj(z) i v`, symmetric in `z` and `v`.
pub fn ks_diff(z: &Quaternion, v: &Quaternion) -> PureQuaternion {
    PureQuaternion(ks_diff_vec(z, v))
}

pub fn ks_diff_vec(z: &Quaternion, v: &Quaternion) -> Vec3 {
    let [a, b, c, d] = z.0;
    let [e, f, g, h] = v.0;
    Vec3::new(
        2.0 * (a * e + b * f - c * g - d * h),
        2.0 * (b * g + c * f - a * h - d * e),
        2.0 * (a * g + c * e + b * h + d * f),
    )
}

/// Transpose of `dPhi(z)` applied to a pure quaternion `v`: `i z conj(v) - i z v`.
pub fn ks_diff_transpose(z: &Quaternion, v: &Quaternion) -> Result<Quaternion> {
    let v = v.to_pure()?;
    Ok(ks_diff_transpose_vec(z, &v.0))
}

/// `dPhi(z)^T v = -2 i z v` for `v` in `R^3`.
pub fn ks_diff_transpose_vec(z: &Quaternion, v: &Vec3) -> Quaternion {
    (z.mul_i() * Quaternion::pure(*v)) * -2.0
}

/// The bilinear constraint `BL(z, w) = Re(conj(z) i w)`.
pub fn bl(z: &Quaternion, w: &Quaternion) -> f64 {
    -z.mul_i().dot(w)
}

pub fn bl_tolerance(z: &Quaternion, w: &Quaternion) -> f64 {
    BL_TOL * (z.norm() * w.norm()).max(1.0)
}

pub fn is_physical(z: &Quaternion, w: &Quaternion) -> bool {
    bl(z, w).abs() <= bl_tolerance(z, w)
}

/// Orthogonal projection of `w` onto `{BL(z, .) = 0}`.
pub fn project_bl(z: &Quaternion, w: &Quaternion) -> Quaternion {
    let iz = z.mul_i();
    let n2 = z.norm_sqr();
    if n2 == 0.0 {
        return *w;
    }
    *w - iz * (iz.dot(w) / n2)
}

/// `(z, w) -> (conj(z) i z, conj(z) i w / (2|z|^2))` on `BL = 0`, `z != 0`.
pub fn ks_lift(z: &Quaternion, w: &Quaternion) -> Result<PhasePoint> {
    let n2 = z.norm_sqr();
    if n2 == 0.0 || !n2.is_finite() {
        return Err(Error::Domain("KS lift at z = 0".into()));
    }
    let b = bl(z, w);
    if b.abs() > bl_tolerance(z, w) {
        return Err(Error::NotPhysical(b));
    }
    let p = (z.conj() * Quaternion::I * *w).im() / (2.0 * n2);
    Ok(PhasePoint {
        q: ks_map_vec(z),
        p,
    })
}

/// Left action of the fiber circle, `z -> e^{i theta} z`.
pub fn fiber_rotate(z: &Quaternion, theta: f64) -> Quaternion {
    Quaternion::exp_i(theta) * *z
}

/// Fiber angle `theta` maximising `<e^{i theta} z, target>`.
pub fn fiber_align_angle(z: &Quaternion, target: &Quaternion) -> f64 {
    z.mul_i().dot(target).atan2(z.dot(target))
}

/// Rotate within the fiber so that `(z0, z1)` is a nonnegative real, or
/// `(z2, z3)` when the first pair vanishes.
pub fn normalize_phase(z: &Quaternion) -> Quaternion {
    let scale = z.norm();
    if scale == 0.0 {
        return *z;
    }
    let first = z[0].hypot(z[1]);
    let theta = if first > 1e-12 * scale {
        -z[1].atan2(z[0])
    } else {
        -z[3].atan2(z[2])
    };
    let mut r = fiber_rotate(z, theta);
    if first > 1e-12 * scale {
        r[1] = 0.0;
    } else {
        r[3] = 0.0;
    }
    r
}

/// A point of `Phi^{-1}(q)`, normalised by [`normalize_phase`].
pub fn ks_section(q: &Vec3) -> Result<Quaternion> {
    if !q.iter().all(|x| x.is_finite()) {
        return Err(Error::Domain("non-finite point".into()));
    }
    let r = q.norm();
    if r == 0.0 {
        return Err(Error::Domain("KS section at the origin".into()));
    }
    let b = q / r;
    // rotation v with v i conj(v) = b; then u = conj(v) has conj(u) i u = b
    // 1 + b1 without cancellation near b = -i
    let c = if b.x >= 0.0 {
        1.0 + b.x
    } else {
        (b.y * b.y + b.z * b.z) / (1.0 - b.x)
    };
    let v = Quaternion::new(c, 0.0, -b.z, b.y);
    let nv = v.norm();
    let v = if nv < 1e-150 {
        Quaternion::J
    } else {
        v * (1.0 / nv)
    };
    Ok(normalize_phase(&(v.conj() * r.sqrt())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Vec3, b: &Vec3, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.norm())
    }

    #[test]
    fn map_matches_product() {
        let z = Quaternion::new(0.3, -1.1, 0.7, 2.0);
        let q = (z.conj() * Quaternion::I * z).im();
        assert!(close(&ks_map_vec(&z), &q, 1e-14));
        let e = Quaternion::new(1.0, 1.0, 0.0, 0.0) * (0.5f64).sqrt();
        assert!(close(&ks_map_vec(&e), &Vec3::new(1.0, 0.0, 0.0), 1e-15));
        assert!(close(
            &ks_map_vec(&Quaternion::J),
            &Vec3::new(-1.0, 0.0, 0.0),
            0.0
        ));
    }

    #[test]
    fn diff_matches_product_and_transpose() {
        let z = Quaternion::new(0.3, -1.1, 0.7, 2.0);
        let v = Quaternion::new(-0.4, 0.2, 1.3, 0.9);
        let d = v.conj() * Quaternion::I * z + z.conj() * Quaternion::I * v;
        assert!(d.re().abs() < 1e-14);
        assert!(close(&ks_diff_vec(&z, &v), &d.im(), 1e-14));
        let y = Vec3::new(0.5, -2.0, 0.25);
        let t = ks_diff_transpose_vec(&z, &y);
        assert!((ks_diff_vec(&z, &v).dot(&y) - t.dot(&v)).abs() < 1e-13);
        let t2 = ks_diff_transpose(&z, &Quaternion::pure(y)).unwrap();
        assert!((t - t2).norm() < 1e-14);
        assert!(ks_diff_transpose(&z, &Quaternion::new(1.0, 0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn lift_example() {
        let pp = ks_lift(&Quaternion::ONE, &Quaternion::J).unwrap();
        assert!(close(&pp.q, &Vec3::new(1.0, 0.0, 0.0), 0.0));
        assert!(close(&pp.p, &Vec3::new(0.0, 0.0, 0.5), 1e-15));
        assert!(matches!(
            ks_lift(&Quaternion::ONE, &Quaternion::I),
            Err(Error::NotPhysical(_))
        ));
        assert!(ks_lift(&Quaternion::ZERO, &Quaternion::J).is_err());
    }

    #[test]
    fn section_hits_fiber() {
        for q in [
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(-1.0, 1e-9, 0.0),
            Vec3::new(0.0, 2.0, -3.0),
        ] {
            let z = ks_section(&q).unwrap();
            assert!(
                close(&ks_map_vec(&z), &q, 1e-14),
                "{q:?} {:?}",
                ks_map_vec(&z)
            );
            assert!(z[1].abs() < 1e-15 && z[0] >= 0.0 || z[0] == 0.0 && z[1] == 0.0);
        }
        assert_eq!(
            ks_section(&Vec3::new(1.0, 0.0, 0.0)).unwrap(),
            Quaternion::ONE
        );
        assert!(ks_section(&Vec3::zeros()).is_err());
    }

    #[test]
    fn fiber_invariance() {
        let z = Quaternion::new(0.3, -1.1, 0.7, 2.0);
        for th in [0.1, 1.0, 2.5, -3.0] {
            assert!(close(
                &ks_map_vec(&fiber_rotate(&z, th)),
                &ks_map_vec(&z),
                1e-14
            ));
        }
        let zr = fiber_rotate(&z, 0.77);
        assert!((fiber_align_angle(&z, &zr) - 0.77).abs() < 1e-14);
    }
}
