//! Kustaanheimo-Stiefel regularization of time-independent systems.
//!
//! `K_c(z, w) = |w|^2/8 + |z|^2 G(q) - <conj(z) i w, A(q)>/2 - kappa` with
//! `q = conj(z) i z` and `G = E - c + |A|^2/2`. On `BL = 0` it equals
//! `|q| (H_A - c)` pulled back by the KS lift, and it is smooth at `z = 0`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowOptions, TrajectoryStats};
use crate::ksgeom::{
    bl, bl_tolerance, fiber_rotate, ks_lift, ks_map_vec, KsPhasePoint, PhasePoint,
};
use crate::ode::{integrate, OdeOptions, OdeSolution, OdeSystem};
use crate::quat::Quaternion;
use crate::systems::StarkZeeman;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsRegConfig {
    /// Energy `c`.
    pub energy: f64,
    pub bl_tolerance: f64,
}

impl KsRegConfig {
    pub fn new(energy: f64) -> Self {
        KsRegConfig {
            energy,
            bl_tolerance: 1e-9,
        }
    }
}

fn check_static<S: StarkZeeman + ?Sized>(sys: &S) -> Result<()> {
    if sys.is_time_dependent() {
        return Err(Error::Config(
            "KS regularization needs a time-independent system".into(),
        ));
    }
    Ok(())
}

pub fn ks_hamiltonian<S: StarkZeeman + ?Sized>(
    sys: &S,
    cfg: &KsRegConfig,
    z: &Quaternion,
    w: &Quaternion,
) -> f64 {
    let q = ks_map_vec(z);
    let a = sys.vector_potential(&q);
    let g = sys.electric(0.0, &q) - cfg.energy + 0.5 * a.norm_squared();
    let ziw = z.conj() * Quaternion::I * *w;
    0.125 * w.norm_sqr() + z.norm_sqr() * g - 0.5 * ziw.im().dot(&a) - sys.coulomb()
}

/// `(dK/dz, dK/dw)`.
pub fn ks_gradient<S: StarkZeeman + ?Sized>(
    sys: &S,
    cfg: &KsRegConfig,
    z: &Quaternion,
    w: &Quaternion,
) -> (Quaternion, Quaternion) {
    let q = ks_map_vec(z);
    let a = sys.vector_potential(&q);
    let ja = sys.vector_potential_jacobian(&q).transpose();
    let g = sys.electric(0.0, &q) - cfg.energy + 0.5 * a.norm_squared();
    let grad_g = ja * a + sys.electric_grad(0.0, &q);
    let iz = z.mul_i();
    let iw = w.mul_i();
    let y = (z.conj() * iw).im();
    let aq = Quaternion::pure(a);
    let dz = *z * (2.0 * g) - iz * Quaternion::pure(grad_g) * (2.0 * z.norm_sqr())
        + iw * aq * 0.5
        + iz * Quaternion::pure(ja * y);
    let dw = *w * 0.25 + iz * aq * 0.5;
    (dz, dw)
}

struct KsRhs<'a, S: ?Sized> {
    sys: &'a S,
    cfg: KsRegConfig,
}

impl<S: StarkZeeman + ?Sized> OdeSystem<9> for KsRhs<'_, S> {
    fn rhs(&self, _: f64, y: &[f64; 9]) -> [f64; 9] {
        let z = Quaternion([y[0], y[1], y[2], y[3]]);
        let w = Quaternion([y[4], y[5], y[6], y[7]]);
        let (dz, dw) = ks_gradient(self.sys, &self.cfg, &z, &w);
        [
            dw[0],
            dw[1],
            dw[2],
            dw[3],
            -dz[0],
            -dz[1],
            -dz[2],
            -dz[3],
            z.norm_sqr(),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct KsTrajectory {
    pub tau: Vec<f64>,
    pub states: Vec<KsPhasePoint>,
    /// Physical states where `|z| > 1e-6 max|z|`.
    pub physical: Vec<Option<PhasePoint>>,
    pub t_phys: Vec<f64>,
    pub k_c: Vec<f64>,
    pub bl: Vec<f64>,
    pub stats: TrajectoryStats,
    solution: OdeSolution<9>,
}

impl KsTrajectory {
    pub fn k_drift(&self) -> f64 {
        let k0 = self.k_c[0];
        self.k_c.iter().map(|k| (k - k0).abs()).fold(0.0, f64::max)
    }

    pub fn bl_drift(&self) -> f64 {
        let b0 = self.bl[0];
        self.bl.iter().map(|b| (b - b0).abs()).fold(0.0, f64::max)
    }

    pub fn interpolate(&self, tau: f64) -> Option<(KsPhasePoint, f64)> {
        self.solution.sample(tau).map(|y| {
            (
                KsPhasePoint {
                    z: Quaternion([y[0], y[1], y[2], y[3]]),
                    w: Quaternion([y[4], y[5], y[6], y[7]]),
                },
                y[8],
            )
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "tau", "z0", "z1", "z2", "z3", "w0", "w1", "w2", "w3", "Kc", "BL", "t_phys", "q1",
            "q2", "q3", "p1", "p2", "p3",
        ])?;
        for k in 0..self.tau.len() {
            let s = &self.states[k];
            let mut row: Vec<String> = [self.tau[k]]
                .iter()
                .chain(&s.z.0)
                .chain(&s.w.0)
                .chain(&[self.k_c[k], self.bl[k], self.t_phys[k]])
                .map(|v| format!("{v:.17e}"))
                .collect();
            match &self.physical[k] {
                Some(x) => row.extend(
                    [x.q.x, x.q.y, x.q.z, x.p.x, x.p.y, x.p.z]
                        .iter()
                        .map(|v| format!("{v:.17e}")),
                ),
                None => row.extend(std::iter::repeat(String::new()).take(6)),
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct S<'a> {
            tau_end: f64,
            t_phys_end: f64,
            samples: usize,
            k_drift: f64,
            bl_drift: f64,
            stats: &'a TrajectoryStats,
        }
        Ok(serde_json::to_string_pretty(&S {
            tau_end: *self.tau.last().unwrap_or(&0.0),
            t_phys_end: *self.t_phys.last().unwrap_or(&0.0),
            samples: self.tau.len(),
            k_drift: self.k_drift(),
            bl_drift: self.bl_drift(),
            stats: &self.stats,
        })?)
    }
}

/// Canonical flow of `K_c` on `R^8`, with `dt_phys = |z|^2 dtau`.
pub fn integrate_ks<S: StarkZeeman + ?Sized>(
    sys: &S,
    cfg: &KsRegConfig,
    z0: Quaternion,
    w0: Quaternion,
    span: (f64, f64),
    o: &FlowOptions,
) -> Result<KsTrajectory> {
    check_static(sys)?;
    let k0 = ks_hamiltonian(sys, cfg, &z0, &w0);
    if k0.abs() > 1e-8 {
        return Err(Error::Domain(format!(
            "initial state is off the zero level: K_c = {k0:.3e}"
        )));
    }
    let b0 = bl(&z0, &w0);
    if b0.abs() > cfg.bl_tolerance * (z0.norm() * w0.norm()).max(1.0) {
        return Err(Error::NotPhysical(b0));
    }
    let rhs = KsRhs { sys, cfg: *cfg };
    let mut y0 = [0.0; 9];
    y0[..4].copy_from_slice(&z0.0);
    y0[4..8].copy_from_slice(&w0.0);
    let ode = OdeOptions {
        max_steps: o.max_steps,
        ..OdeOptions::with_tol(o.tol)
    };
    let sol = integrate(&rhs, span.0, y0, span.1, &ode)?;
    let states: Vec<KsPhasePoint> = sol
        .y
        .iter()
        .map(|y| KsPhasePoint {
            z: Quaternion([y[0], y[1], y[2], y[3]]),
            w: Quaternion([y[4], y[5], y[6], y[7]]),
        })
        .collect();
    let bls: Vec<f64> = states.iter().map(|s| bl(&s.z, &s.w)).collect();
    for (k, (b, s)) in bls.iter().zip(&states).enumerate() {
        if b.abs() > 100.0 * cfg.bl_tolerance * (s.z.norm() * s.w.norm()).max(1.0) {
            return Err(Error::Integration {
                t: sol.t[k],
                reason: format!(
                    "left the physical sector: BL = {b:.3e} at z = {:?}, w = {:?}",
                    s.z.0, s.w.0
                ),
            });
        }
    }
    let zmax = states.iter().map(|s| s.z.norm()).fold(0.0, f64::max);
    let eps = 1e-6 * zmax;
    let physical = states
        .iter()
        .map(|s| project_physical_eps(&s.z, &s.w, eps).ok())
        .collect();
    Ok(KsTrajectory {
        tau: sol.t.clone(),
        k_c: states
            .iter()
            .map(|s| ks_hamiltonian(sys, cfg, &s.z, &s.w))
            .collect(),
        bl: bls,
        physical,
        t_phys: sol.y.iter().map(|y| y[8]).collect(),
        states,
        stats: TrajectoryStats::new(sol.stats, o, false),
        solution: sol,
    })
}

fn project_physical_eps(z: &Quaternion, w: &Quaternion, eps: f64) -> Result<PhasePoint> {
    if z.norm() <= eps {
        return Err(Error::Domain(
            "at collision: no physical state for z = 0".into(),
        ));
    }
    ks_lift(z, w)
}

/// Physical state of a KS phase point on `BL = 0`.
pub fn project_physical(z: &Quaternion, w: &Quaternion) -> Result<PhasePoint> {
    project_physical_eps(z, w, 1e-12 * w.norm().max(1.0))
}

/// KS phase point over `x`, with `w = dPhi(z)^T p` and the section of [`crate::ksgeom::ks_section`].
pub fn ks_encode(x: &PhasePoint) -> Result<KsPhasePoint> {
    let z = crate::ksgeom::ks_section(&x.q)?;
    let w = crate::ksgeom::ks_diff_transpose_vec(&z, &x.p);
    Ok(KsPhasePoint { z, w })
}

/// Rotate both components by the fiber action.
pub fn ks_fiber_rotate(x: &KsPhasePoint, theta: f64) -> KsPhasePoint {
    KsPhasePoint {
        z: fiber_rotate(&x.z, theta),
        w: fiber_rotate(&x.w, theta),
    }
}

/// `|BL|` relative to its tolerance, convenient for diagnostics.
pub fn bl_ratio(z: &Quaternion, w: &Quaternion) -> f64 {
    bl(z, w).abs() / bl_tolerance(z, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quat::Vec3;
    use crate::systems::{hamiltonian, Cr3bp, Gauge, Kepler, RotatingKepler};

    #[test]
    fn kepler_values() {
        let cfg = KsRegConfig::new(-0.5);
        let w = Quaternion::new(0.3, -1.0, 2.0, 0.5);
        assert!(
            (ks_hamiltonian(&Kepler, &cfg, &Quaternion::ZERO, &w) - (w.norm_sqr() / 8.0 - 1.0))
                .abs()
                < 1e-15
        );
        let z = Quaternion::new(1.0, 1.0, 0.0, 0.0);
        assert!(ks_hamiltonian(&Kepler, &cfg, &z, &Quaternion::ZERO).abs() < 1e-15);
    }

    #[test]
    fn pullback_identity() {
        let sys = Cr3bp::new(0.01).unwrap();
        let x = PhasePoint::new(Vec3::new(0.04, -0.03, 0.02), Vec3::new(0.5, -0.2, 0.1));
        let ks = ks_encode(&x).unwrap();
        let back = ks_lift(&ks.z, &ks.w).unwrap();
        assert!((back.p - x.p).norm() < 1e-13);
        let c = -1.7;
        let lhs = ks_hamiltonian(&sys, &KsRegConfig::new(c), &ks.z, &ks.w);
        let rhs = x.q.norm() * (hamiltonian(&sys, 0.0, &x, Gauge::Coupled).unwrap() - c);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_differences() {
        let sys = RotatingKepler;
        let cfg = KsRegConfig::new(-1.2);
        let z = Quaternion::new(0.4, -0.3, 0.2, 0.7);
        let w = Quaternion::new(-0.5, 0.1, 0.9, 0.3);
        let (dz, dw) = ks_gradient(&sys, &cfg, &z, &w);
        let h = 1e-6;
        for i in 0..8 {
            let (mut za, mut wa, mut zb, mut wb) = (z, w, z, w);
            if i < 4 {
                za[i] += h;
                zb[i] -= h;
            } else {
                wa[i - 4] += h;
                wb[i - 4] -= h;
            }
            let fd = (ks_hamiltonian(&sys, &cfg, &za, &wa) - ks_hamiltonian(&sys, &cfg, &zb, &wb))
                / (2.0 * h);
            let an = if i < 4 { dz[i] } else { dw[i - 4] };
            assert!((fd - an).abs() < 1e-8, "{i}: {fd} vs {an}");
        }
    }

    #[test]
    fn projection_examples() {
        let x = project_physical(&Quaternion::ONE, &(Quaternion::J * 2.0)).unwrap();
        assert!((x.q - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        assert!((x.p - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
        let r = ks_fiber_rotate(
            &KsPhasePoint {
                z: Quaternion::ONE,
                w: Quaternion::J * 2.0,
            },
            0.9,
        );
        let y = project_physical(&r.z, &r.w).unwrap();
        assert!((y.q - x.q).norm() < 1e-15 && (y.p - x.p).norm() < 1e-15);
        assert!(matches!(
            project_physical(&Quaternion::ONE, &Quaternion::I),
            Err(Error::NotPhysical(_))
        ));
        assert!(project_physical(&Quaternion::ZERO, &Quaternion::J).is_err());
    }
}
