//! Stark-Zeeman systems: a Coulomb center at the origin, a time-independent
//! magnetic one-form `A` and a time-periodic electric potential `E_t`.
//!
//! Sign conventions: `B_ij = d_i A_j - d_j A_i`, `(B v)_i = sum_j B_ij v_j`,
//! `V_t(q) = -kappa/|q| + E_t(q)` and `q'' = B(q) q' - grad V_t(q)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ksgeom::PhasePoint;
use crate::quat::Vec3;

pub type Mat3 = Matrix3<f64>;

fn fd_step(x: f64) -> f64 {
    1e-5 * x.abs().max(1.0)
}

/// A Stark-Zeeman system. Only `electric` and `vector_potential` are
/// required; derivatives fall back to Richardson-extrapolated differences.
pub trait StarkZeeman: Send + Sync {
    fn name(&self) -> &str;

    /// Strength `kappa` of the Coulomb term `-kappa/|q|`.
    fn coulomb(&self) -> f64 {
        1.0
    }

    fn electric(&self, t: f64, q: &Vec3) -> f64;

    fn vector_potential(&self, q: &Vec3) -> Vec3;

    fn is_time_dependent(&self) -> bool {
        false
    }

    /// Membership in the regular domain (the origin is always excluded).
    fn in_domain(&self, q: &Vec3) -> bool {
        q.norm() > 0.0
    }

    fn electric_grad(&self, t: f64, q: &Vec3) -> Vec3 {
        let mut g = Vec3::zeros();
        for i in 0..3 {
            let h = fd_step(q[i]);
            let d = |h: f64| {
                let mut a = *q;
                let mut b = *q;
                a[i] += h;
                b[i] -= h;
                (self.electric(t, &a) - self.electric(t, &b)) / (2.0 * h)
            };
            g[i] = (4.0 * d(h / 2.0) - d(h)) / 3.0;
        }
        g
    }

    fn electric_tdot(&self, t: f64, q: &Vec3) -> f64 {
        if !self.is_time_dependent() {
            return 0.0;
        }
        let d = |h: f64| (self.electric(t + h, q) - self.electric(t - h, q)) / (2.0 * h);
        (4.0 * d(5e-6) - d(1e-5)) / 3.0
    }

    /// `J_ij = d A_i / d q_j`.
    fn vector_potential_jacobian(&self, q: &Vec3) -> Mat3 {
        let mut m = Mat3::zeros();
        for j in 0..3 {
            let h = fd_step(q[j]);
            let d = |h: f64| {
                let mut a = *q;
                let mut b = *q;
                a[j] += h;
                b[j] -= h;
                (self.vector_potential(&a) - self.vector_potential(&b)) / (2.0 * h)
            };
            m.set_column(j, &((4.0 * d(h / 2.0) - d(h)) / 3.0));
        }
        m
    }

    fn magnetic(&self, q: &Vec3) -> Mat3 {
        let j = self.vector_potential_jacobian(q);
        j.transpose() - j
    }

    fn potential(&self, t: f64, q: &Vec3) -> f64 {
        -self.coulomb() / q.norm() + self.electric(t, q)
    }

    fn potential_grad(&self, t: f64, q: &Vec3) -> Vec3 {
        let r = q.norm();
        q * (self.coulomb() / (r * r * r)) + self.electric_grad(t, q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gauge {
    /// `H = |p|^2/2 + V` with the magnetic term in the symplectic form.
    Twisted,
    /// `H_A = |p - A(q)|^2/2 + V` with the standard symplectic form.
    Coupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kepler;

impl StarkZeeman for Kepler {
    fn name(&self) -> &str {
        "kepler"
    }
    fn electric(&self, _: f64, _: &Vec3) -> f64 {
        0.0
    }
    fn electric_grad(&self, _: f64, _: &Vec3) -> Vec3 {
        Vec3::zeros()
    }
    fn vector_potential(&self, _: &Vec3) -> Vec3 {
        Vec3::zeros()
    }
    fn vector_potential_jacobian(&self, _: &Vec3) -> Mat3 {
        Mat3::zeros()
    }
}

/// Kepler problem in a frame rotating with unit angular velocity about `e_z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotatingKepler;

fn rotation_jacobian(w: f64) -> Mat3 {
    Mat3::new(0.0, -w, 0.0, w, 0.0, 0.0, 0.0, 0.0, 0.0)
}

impl StarkZeeman for RotatingKepler {
    fn name(&self) -> &str {
        "rkp"
    }
    fn electric(&self, _: f64, q: &Vec3) -> f64 {
        -0.5 * (q.x * q.x + q.y * q.y)
    }
    fn electric_grad(&self, _: f64, q: &Vec3) -> Vec3 {
        Vec3::new(-q.x, -q.y, 0.0)
    }
    fn vector_potential(&self, q: &Vec3) -> Vec3 {
        Vec3::new(-q.y, q.x, 0.0)
    }
    fn vector_potential_jacobian(&self, _: &Vec3) -> Mat3 {
        rotation_jacobian(1.0)
    }
}

/// Circular restricted three-body problem centred at the body of mass `mu`;
/// the body of mass `1 - mu` sits at `-e_x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cr3bp {
    pub mu: f64,
    /// Radius of the ball used as the regular domain.
    pub radius: f64,
}

impl Cr3bp {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu < 1.0) {
            return Err(Error::Config(format!("cr3bp needs mu in (0, 1), got {mu}")));
        }
        Ok(Cr3bp {
            mu,
            radius: l1_distance(mu),
        })
    }

    fn a1(&self) -> f64 {
        1.0 - self.mu
    }
}

/// Distance from the body of mass `mu` to the collinear point between the primaries.
pub fn l1_distance(mu: f64) -> f64 {
    // d/dx of V along the axis, x = -r in (-1, 0)
    let a1 = 1.0 - mu;
    let f = |r: f64| {
        let x = -r;
        mu / (r * r) - (x + a1) + (1.0 - mu) / ((1.0 - r) * (1.0 - r))
    };
    let (mut lo, mut hi) = (1e-12, 1.0 - 1e-12);
    // f > 0 near the small body only if the outward pull dominates, so bracket on sign change
    let flo = f(lo).signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == flo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl StarkZeeman for Cr3bp {
    fn name(&self) -> &str {
        "cr3bp"
    }
    fn coulomb(&self) -> f64 {
        self.mu
    }
    fn electric(&self, _: f64, q: &Vec3) -> f64 {
        let x = q.x + self.a1();
        let b = q + Vec3::new(1.0, 0.0, 0.0);
        -0.5 * (x * x + q.y * q.y) - (1.0 - self.mu) / b.norm()
    }
    fn electric_grad(&self, _: f64, q: &Vec3) -> Vec3 {
        let b = q + Vec3::new(1.0, 0.0, 0.0);
        let rb = b.norm();
        Vec3::new(-(q.x + self.a1()), -q.y, 0.0) + b * ((1.0 - self.mu) / (rb * rb * rb))
    }
    fn vector_potential(&self, q: &Vec3) -> Vec3 {
        Vec3::new(-q.y, q.x + self.a1(), 0.0)
    }
    fn vector_potential_jacobian(&self, _: &Vec3) -> Mat3 {
        rotation_jacobian(1.0)
    }
    fn in_domain(&self, q: &Vec3) -> bool {
        let r = q.norm();
        r > 0.0 && r < self.radius
    }
}

/// Bicircular restricted four-body problem around the body of mass `mu`,
/// in the time-independent gauge `A = (-(w+1) x2, (w+1) x1 + a1, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bcr4bp {
    pub mu: f64,
    pub m_s: f64,
    /// Angular velocity of the second barycenter.
    pub omega: f64,
    /// Angular velocity of the third body in the rotating frame.
    pub omega_r: f64,
    pub nu: f64,
    pub l: f64,
    pub alpha: f64,
    pub radius: f64,
}

impl Bcr4bp {
    fn a1(&self) -> f64 {
        1.0 - self.mu
    }

    fn theta(&self, t: f64) -> f64 {
        self.omega_r * t + self.alpha
    }

    /// Time-dependent potential from the original rotating-frame Hamiltonian.
    pub fn rotating_potential(&self, t: f64, q: &Vec3) -> Vec3 {
        let w = self.omega + 1.0;
        let (s, c) = self.theta(t).sin_cos();
        let on = self.omega * self.nu;
        Vec3::new(-w * q.y + on * s, w * (q.x + self.a1()) - on * c, 0.0)
    }

    /// Velocity of the gauge shift `rotating_potential - vector_potential`.
    fn shift_rate(&self, t: f64) -> Vec3 {
        let (s, c) = self.theta(t).sin_cos();
        Vec3::new(c, s, 0.0) * (self.omega * self.nu * self.omega_r)
    }

    fn sun(&self, t: f64) -> Vec3 {
        let (s, c) = self.theta(t).sin_cos();
        Vec3::new(c, s, 0.0) * self.l
    }

    fn sun_offset(&self, t: f64, q: &Vec3) -> Vec3 {
        q + Vec3::new(self.a1(), 0.0, 0.0) - self.sun(t)
    }

    /// Gravity of the second primary and the third body.
    fn gravity(&self, t: f64, q: &Vec3) -> f64 {
        let b = q + Vec3::new(1.0, 0.0, 0.0);
        let mut g = -(1.0 - self.mu) / b.norm();
        if self.m_s != 0.0 {
            g -= self.m_s / self.sun_offset(t, q).norm();
        }
        g
    }

    fn gravity_grad(&self, t: f64, q: &Vec3) -> Vec3 {
        let b = q + Vec3::new(1.0, 0.0, 0.0);
        let rb = b.norm();
        let mut g = b * ((1.0 - self.mu) / (rb * rb * rb));
        if self.m_s != 0.0 {
            let y = self.sun_offset(t, q);
            let ry = y.norm();
            g += y * (self.m_s / (ry * ry * ry));
        }
        g
    }

    /// The same dynamics written with the time-dependent potential.
    pub fn rotating_gauge(&self) -> RotatingGauge<'_> {
        RotatingGauge { sys: self }
    }
}

impl StarkZeeman for Bcr4bp {
    fn name(&self) -> &str {
        "bcr4bp"
    }
    fn coulomb(&self) -> f64 {
        self.mu
    }
    fn is_time_dependent(&self) -> bool {
        self.m_s != 0.0 || self.omega != 0.0
    }
    fn electric(&self, t: f64, q: &Vec3) -> f64 {
        let at = self.rotating_potential(t, q);
        -0.5 * at.norm_squared() + self.shift_rate(t).dot(q) + self.gravity(t, q)
    }
    fn electric_grad(&self, t: f64, q: &Vec3) -> Vec3 {
        let w = self.omega + 1.0;
        let at = self.rotating_potential(t, q);
        Vec3::new(-w * at.y, w * at.x, 0.0) + self.shift_rate(t) + self.gravity_grad(t, q)
    }
    fn electric_tdot(&self, t: f64, q: &Vec3) -> f64 {
        let at = self.rotating_potential(t, q);
        let d = self.shift_rate(t);
        let (s, c) = self.theta(t).sin_cos();
        let dd = Vec3::new(-s, c, 0.0) * (self.omega * self.nu * self.omega_r * self.omega_r);
        let mut v = -at.dot(&d) + dd.dot(q);
        if self.m_s != 0.0 {
            let y = self.sun_offset(t, q);
            let ry = y.norm();
            let sdot = Vec3::new(-s, c, 0.0) * (self.l * self.omega_r);
            v -= self.m_s * y.dot(&sdot) / (ry * ry * ry);
        }
        v
    }
    fn vector_potential(&self, q: &Vec3) -> Vec3 {
        let w = self.omega + 1.0;
        Vec3::new(-w * q.y, w * q.x + self.a1(), 0.0)
    }
    fn vector_potential_jacobian(&self, _: &Vec3) -> Mat3 {
        rotation_jacobian(self.omega + 1.0)
    }
    fn in_domain(&self, q: &Vec3) -> bool {
        let r = q.norm();
        r > 0.0 && r < self.radius
    }
}

/// A Hamiltonian `|p - A_t(q)|^2/2 + U_t(q)` with the standard symplectic form.
pub trait CoupledField: Sync {
    fn potential(&self, t: f64, q: &Vec3) -> Vec3;
    /// `J_ij = d A_i / d q_j`.
    fn potential_jacobian(&self, t: f64, q: &Vec3) -> Mat3;
    fn scalar(&self, t: f64, q: &Vec3) -> f64;
    fn scalar_grad(&self, t: f64, q: &Vec3) -> Vec3;
}

/// The coupled-gauge form of a Stark-Zeeman system.
pub struct SystemGauge<'a, S: ?Sized>(pub &'a S);

impl<S: StarkZeeman + ?Sized> CoupledField for SystemGauge<'_, S> {
    fn potential(&self, _: f64, q: &Vec3) -> Vec3 {
        self.0.vector_potential(q)
    }
    fn potential_jacobian(&self, _: f64, q: &Vec3) -> Mat3 {
        self.0.vector_potential_jacobian(q)
    }
    fn scalar(&self, t: f64, q: &Vec3) -> f64 {
        self.0.potential(t, q)
    }
    fn scalar_grad(&self, t: f64, q: &Vec3) -> Vec3 {
        self.0.potential_grad(t, q)
    }
}

/// BCR4BP with its time-dependent rotating-frame potential and
/// `U_t = -|A_t|^2/2 - mu/|q| + gravity`.
pub struct RotatingGauge<'a> {
    sys: &'a Bcr4bp,
}

impl CoupledField for RotatingGauge<'_> {
    fn potential(&self, t: f64, q: &Vec3) -> Vec3 {
        self.sys.rotating_potential(t, q)
    }
    fn potential_jacobian(&self, _: f64, _: &Vec3) -> Mat3 {
        rotation_jacobian(self.sys.omega + 1.0)
    }
    fn scalar(&self, t: f64, q: &Vec3) -> f64 {
        -0.5 * self.sys.rotating_potential(t, q).norm_squared() - self.sys.mu / q.norm()
            + self.sys.gravity(t, q)
    }
    fn scalar_grad(&self, t: f64, q: &Vec3) -> Vec3 {
        let w = self.sys.omega + 1.0;
        let at = self.sys.rotating_potential(t, q);
        let r = q.norm();
        Vec3::new(-w * at.y, w * at.x, 0.0)
            + q * (self.sys.mu / (r * r * r))
            + self.sys.gravity_grad(t, q)
    }
}

/// The builtin systems behind one type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum System {
    Kepler(Kepler),
    Rkp(RotatingKepler),
    Cr3bp(Cr3bp),
    Bcr4bp(Bcr4bp),
}

macro_rules! dispatch {
    ($self:ident, $s:ident => $e:expr) => {
        match $self {
            System::Kepler($s) => $e,
            System::Rkp($s) => $e,
            System::Cr3bp($s) => $e,
            System::Bcr4bp($s) => $e,
        }
    };
}

impl StarkZeeman for System {
    fn name(&self) -> &str {
        dispatch!(self, s => s.name())
    }
    fn coulomb(&self) -> f64 {
        dispatch!(self, s => s.coulomb())
    }
    fn electric(&self, t: f64, q: &Vec3) -> f64 {
        dispatch!(self, s => s.electric(t, q))
    }
    fn vector_potential(&self, q: &Vec3) -> Vec3 {
        dispatch!(self, s => s.vector_potential(q))
    }
    fn is_time_dependent(&self) -> bool {
        dispatch!(self, s => s.is_time_dependent())
    }
    fn in_domain(&self, q: &Vec3) -> bool {
        dispatch!(self, s => s.in_domain(q))
    }
    fn electric_grad(&self, t: f64, q: &Vec3) -> Vec3 {
        dispatch!(self, s => s.electric_grad(t, q))
    }
    fn electric_tdot(&self, t: f64, q: &Vec3) -> f64 {
        dispatch!(self, s => s.electric_tdot(t, q))
    }
    fn vector_potential_jacobian(&self, q: &Vec3) -> Mat3 {
        dispatch!(self, s => s.vector_potential_jacobian(q))
    }
}

/// `{"name": ..., "params": {...}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl SystemConfig {
    pub fn new(name: &str) -> Self {
        SystemConfig {
            name: name.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, v: f64) -> Self {
        self.params.insert(key.into(), v);
        self
    }

    pub fn build(&self) -> Result<System> {
        builtin_system(&self.name, &self.params)
    }
}

fn take(params: &BTreeMap<String, f64>, allowed: &[&str]) -> Result<()> {
    for k in params.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::Config(format!(
                "unknown parameter `{k}`; expected one of {allowed:?}"
            )));
        }
    }
    for (k, v) in params {
        if !v.is_finite() {
            return Err(Error::Config(format!("parameter `{k}` is not finite")));
        }
    }
    Ok(())
}

/// Construct `kepler`, `rkp`, `cr3bp` or `bcr4bp`.
///
/// bcr4bp defaults: `mu = 0.01`, `m_s = 1e-3`, `omega = 0.1`,
/// `omega_r = 2 pi` (so `E_t` is 1-periodic), `l = 3`, `alpha = 0`,
/// `nu = l m_s / (1 + m_s)`.
pub fn builtin_system(name: &str, params: &BTreeMap<String, f64>) -> Result<System> {
    let get = |k: &str, d: f64| params.get(k).copied().unwrap_or(d);
    match name {
        "kepler" => {
            take(params, &[])?;
            Ok(System::Kepler(Kepler))
        }
        "rkp" => {
            take(params, &[])?;
            Ok(System::Rkp(RotatingKepler))
        }
        "cr3bp" => {
            take(params, &["mu", "radius"])?;
            let mut s = Cr3bp::new(get("mu", 0.01))?;
            s.radius = get("radius", s.radius);
            if !(s.radius > 0.0) {
                return Err(Error::Config("radius must be positive".into()));
            }
            Ok(System::Cr3bp(s))
        }
        "bcr4bp" => {
            take(
                params,
                &[
                    "mu", "m_s", "omega", "omega_r", "nu", "l", "alpha", "radius",
                ],
            )?;
            let mu = get("mu", 0.01);
            if !(mu > 0.0 && mu < 1.0) {
                return Err(Error::Config(format!(
                    "bcr4bp needs mu in (0, 1), got {mu}"
                )));
            }
            let m_s = get("m_s", 1e-3);
            let l = get("l", 3.0);
            if m_s < 0.0 || !(l > 1.0) {
                return Err(Error::Config("bcr4bp needs m_s >= 0 and l > 1".into()));
            }
            let s = Bcr4bp {
                mu,
                m_s,
                omega: get("omega", 0.1),
                omega_r: get("omega_r", 2.0 * PI),
                nu: get("nu", l * m_s / (1.0 + m_s)),
                l,
                alpha: get("alpha", 0.0),
                radius: get("radius", l1_distance(mu)),
            };
            if !(s.radius > 0.0) {
                return Err(Error::Config("radius must be positive".into()));
            }
            Ok(System::Bcr4bp(s))
        }
        other => Err(Error::Config(format!(
            "unknown system `{other}`; expected kepler, rkp, cr3bp or bcr4bp"
        ))),
    }
}

pub fn magnetic_matrix<S: StarkZeeman + ?Sized>(sys: &S, q: &Vec3) -> Result<Mat3> {
    if !sys.in_domain(q) {
        return Err(Error::Domain(format!(
            "q = {:?} outside the domain",
            q.as_slice()
        )));
    }
    Ok(sys.magnetic(q))
}

pub fn hamiltonian<S: StarkZeeman + ?Sized>(
    sys: &S,
    t: f64,
    x: &PhasePoint,
    gauge: Gauge,
) -> Result<f64> {
    if x.q.norm() == 0.0 {
        return Err(Error::Domain("Hamiltonian at the collision q = 0".into()));
    }
    let kin = match gauge {
        Gauge::Twisted => x.p,
        Gauge::Coupled => x.p - sys.vector_potential(&x.q),
    };
    Ok(0.5 * kin.norm_squared() + sys.potential(t, &x.q))
}

pub fn hill_membership<S: StarkZeeman + ?Sized>(sys: &S, c: f64, q: &Vec3) -> Result<bool> {
    if sys.is_time_dependent() {
        return Err(Error::Config(
            "Hill regions need a time-independent system".into(),
        ));
    }
    if q.norm() == 0.0 {
        return Err(Error::Domain("Hill membership at q = 0".into()));
    }
    Ok(sys.potential(0.0, q) <= c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalEnergy {
    /// Smallest critical value of `V`; `+inf` when there is none.
    pub value: f64,
    pub location: Option<Vec3>,
}

/// Smallest critical value of `V` in the plane `q3 = 0`, by damped Newton
/// (Levenberg-Marquardt) iterations from a polar grid of starts.
pub fn critical_energy<S: StarkZeeman + ?Sized>(sys: &S) -> Result<CriticalEnergy> {
    if sys.is_time_dependent() {
        return Err(Error::Config(
            "critical energy needs a time-independent system".into(),
        ));
    }
    let grad = |x: &Vector2<f64>| -> Vector2<f64> {
        let g = sys.potential_grad(0.0, &Vec3::new(x.x, x.y, 0.0));
        Vector2::new(g.x, g.y)
    };
    let hess = |x: &Vector2<f64>| -> Matrix2<f64> {
        let mut h = Matrix2::zeros();
        for j in 0..2 {
            let e = 1e-6 * x.norm().max(1e-3);
            let mut a = *x;
            let mut b = *x;
            a[j] += e;
            b[j] -= e;
            h.set_column(j, &((grad(&a) - grad(&b)) / (2.0 * e)));
        }
        0.5 * (h + h.transpose())
    };
    let mut best: Option<(f64, Vec3)> = None;
    let mut attempts = 0;
    let mut worst_residual: f64 = 0.0;
    for ir in 0..14 {
        let r = 0.05 * 1.35f64.powi(ir);
        for ia in 0..16 {
            let a = 2.0 * PI * (ia as f64 + 0.5 * (ir % 2) as f64) / 16.0;
            let mut x = Vector2::new(r * a.cos(), r * a.sin());
            let mut lambda = 1e-3;
            attempts += 1;
            let mut g = grad(&x);
            for _ in 0..200 {
                if g.norm() < 1e-13 * (1.0 + 1.0 / x.norm_squared()) || !g.norm().is_finite() {
                    break;
                }
                let h = hess(&x);
                let m = h.transpose() * h
                    + Matrix2::identity() * (lambda * (h.transpose() * h).trace().max(1e-12));
                let Some(step) = m.lu().solve(&(-(h.transpose() * g))) else {
                    break;
                };
                let xn = x + step;
                let gn = grad(&xn);
                if gn.norm().is_finite() && gn.norm() < g.norm() {
                    x = xn;
                    g = gn;
                    lambda = (lambda * 0.3).max(1e-12);
                } else {
                    lambda *= 10.0;
                    if lambda > 1e8 {
                        break;
                    }
                }
            }
            let q = Vec3::new(x.x, x.y, 0.0);
            let scale = sys.coulomb() / q.norm_squared() + 1.0;
            if g.norm() < 1e-9 * scale && q.norm() > 1e-6 && x.norm() < 50.0 {
                let v = sys.potential(0.0, &q);
                if best.map_or(true, |(b, _)| v < b) {
                    best = Some((v, q));
                }
            } else if g.norm().is_finite() {
                worst_residual = worst_residual.max(g.norm() / scale);
            }
        }
    }
    match best {
        Some((value, q)) => Ok(CriticalEnergy {
            value,
            location: Some(q),
        }),
        None if sys.name() == "kepler" => Ok(CriticalEnergy {
            value: f64::INFINITY,
            location: None,
        }),
        None => {
            // no critical point found: either there is none or every start failed
            let any_field = (0..8).any(|k| {
                let q = Vec3::new(0.7 * (k as f64).cos(), 0.7 * (k as f64).sin(), 0.0);
                sys.electric_grad(0.0, &q).norm() > 0.0
            });
            if any_field {
                Err(Error::Numerical(format!(
                    "no critical point found from {attempts} starts (smallest relative residual {worst_residual:.3e})"
                )))
            } else {
                Ok(CriticalEnergy {
                    value: f64::INFINITY,
                    location: None,
                })
            }
        }
    }
}
