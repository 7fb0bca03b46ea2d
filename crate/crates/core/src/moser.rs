//! Moser regularization of time-independent Stark-Zeeman systems.
//!
//! After the switch map `(q, p) -> (x, y) = (-p, q)` the momentum becomes a
//! base point, which the inverse stereographic projection sends to `S^3`.
//! Collisions (`|p| -> inf`) land on the north pole. The flow of
//! `H_M = |q| (H_A - c)` runs in the ambient `R^4 x R^4` chart and is
//! projected back to `T*S^3` after every step.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowOptions, TrajectoryStats};
use crate::ksgeom::PhasePoint;
use crate::ode::{integrate, OdeOptions, OdeSolution, OdeSystem};
use crate::quat::Vec3;
use crate::systems::StarkZeeman;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoserState {
    /// Point of `S^3`.
    pub base: [f64; 4],
    /// Covector tangent to `S^3` at `base`.
    pub cofiber: [f64; 4],
}

fn dot4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    (0..4).map(|i| a[i] * b[i]).sum()
}

impl MoserState {
    /// `| |base| - 1 |` and `|<base, cofiber>|`.
    pub fn constraint_defect(&self) -> (f64, f64) {
        (
            (dot4(&self.base, &self.base).sqrt() - 1.0).abs(),
            dot4(&self.base, &self.cofiber).abs(),
        )
    }

    pub fn project(&mut self) {
        let n = dot4(&self.base, &self.base).sqrt();
        self.base.iter_mut().for_each(|x| *x /= n);
        let d = dot4(&self.base, &self.cofiber);
        for i in 0..4 {
            self.cofiber[i] -= d * self.base[i];
        }
    }

    fn to_array(self) -> [f64; 8] {
        let mut y = [0.0; 8];
        y[..4].copy_from_slice(&self.base);
        y[4..].copy_from_slice(&self.cofiber);
        y
    }

    fn from_slice(y: &[f64]) -> Self {
        MoserState {
            base: [y[0], y[1], y[2], y[3]],
            cofiber: [y[4], y[5], y[6], y[7]],
        }
    }
}

/// Encode a physical state (canonical momentum of the coupled gauge).
pub fn moser_encode(x: &PhasePoint) -> MoserState {
    let b = -x.p;
    let y = x.q;
    let s = 1.0 + b.norm_squared();
    let base = [
        2.0 * b.x / s,
        2.0 * b.y / s,
        2.0 * b.z / s,
        (b.norm_squared() - 1.0) / s,
    ];
    // 1 - xi4 = 2/s
    let m = 2.0 / s;
    let xv = Vec3::new(base[0], base[1], base[2]);
    let mut eta = [y.x / m, y.y / m, y.z / m, y.dot(&xv) / (m * m)];
    let d = dot4(&base, &eta);
    for i in 0..4 {
        eta[i] -= d * base[i];
    }
    MoserState { base, cofiber: eta }
}

pub fn moser_decode(s: &MoserState) -> Result<PhasePoint> {
    let m = 1.0 - s.base[3];
    if m <= 1e-300 {
        return Err(Error::Domain(
            "north pole of S^3 is a collision state".into(),
        ));
    }
    let xv = Vec3::new(s.base[0], s.base[1], s.base[2]);
    let ev = Vec3::new(s.cofiber[0], s.cofiber[1], s.cofiber[2]);
    Ok(PhasePoint::new(ev * m + xv * s.cofiber[3], -xv / m))
}

/// Position `q = (1 - xi4) eta_v + eta4 xi_v`, defined on all of `T*S^3`.
fn position(s: &MoserState) -> Vec3 {
    let xv = Vec3::new(s.base[0], s.base[1], s.base[2]);
    let ev = Vec3::new(s.cofiber[0], s.cofiber[1], s.cofiber[2]);
    ev * (1.0 - s.base[3]) + xv * s.cofiber[3]
}

struct Parts {
    r: f64,
    f: f64,
    a: Vec3,
    g: f64,
    grad_f: Vec3,
}

fn parts<S: StarkZeeman + ?Sized>(sys: &S, c: f64, s: &MoserState) -> Parts {
    let q = position(s);
    let xv = Vec3::new(s.base[0], s.base[1], s.base[2]);
    let m = 1.0 - s.base[3];
    let a = sys.vector_potential(&q);
    let ja = sys.vector_potential_jacobian(&q).transpose();
    let g = 0.5 * a.norm_squared() + sys.electric(0.0, &q) - c;
    let grad_g = ja * a + sys.electric_grad(0.0, &q);
    let f = 0.5 * (1.0 + s.base[3]) + xv.dot(&a) + m * g;
    let grad_f = ja * xv + grad_g * m;
    Parts {
        r: dot4(&s.cofiber, &s.cofiber).sqrt(),
        f,
        a,
        g,
        grad_f,
    }
}

fn check_static<S: StarkZeeman + ?Sized>(sys: &S) -> Result<()> {
    if sys.is_time_dependent() {
        return Err(Error::Config(
            "Moser regularization needs a time-independent system".into(),
        ));
    }
    Ok(())
}

/// `H_M = |eta| F(xi, eta) - kappa`, equal to `|q| (H_A(q, p) - c)`.
pub fn moser_hamiltonian<S: StarkZeeman + ?Sized>(sys: &S, c: f64, s: &MoserState) -> Result<f64> {
    check_static(sys)?;
    let p = parts(sys, c, s);
    Ok(p.r * p.f - sys.coulomb())
}

/// Ambient gradient `(d/dxi, d/deta)` of `H_M`.
pub fn moser_gradient<S: StarkZeeman + ?Sized>(
    sys: &S,
    c: f64,
    s: &MoserState,
) -> ([f64; 4], [f64; 4]) {
    let p = parts(sys, c, s);
    let (r, f, gf) = (p.r, p.f, p.grad_f);
    let xv = Vec3::new(s.base[0], s.base[1], s.base[2]);
    let ev = Vec3::new(s.cofiber[0], s.cofiber[1], s.cofiber[2]);
    let m = 1.0 - s.base[3];
    let dxv = (p.a + gf * s.cofiber[3]) * r;
    let dx4 = r * (0.5 - p.g - ev.dot(&gf));
    let (fr, rr) = if r > 0.0 { (f / r, r) } else { (0.0, 0.0) };
    let dev = ev * fr + gf * (rr * m);
    let de4 = fr * s.cofiber[3] + rr * xv.dot(&gf);
    ([dxv.x, dxv.y, dxv.z, dx4], [dev.x, dev.y, dev.z, de4])
}

struct MoserRhs<'a, S: ?Sized> {
    sys: &'a S,
    c: f64,
}

impl<S: StarkZeeman + ?Sized> OdeSystem<9> for MoserRhs<'_, S> {
    fn rhs(&self, _: f64, y: &[f64; 9]) -> [f64; 9] {
        let s = MoserState::from_slice(y);
        let (gx, ge) = moser_gradient(self.sys, self.c, &s);
        let xi = &s.base;
        let eta = &s.cofiber;
        let l2 = -dot4(xi, &ge);
        let l1 = dot4(&ge, eta) - dot4(xi, &gx);
        let mut out = [0.0; 9];
        for i in 0..4 {
            out[i] = ge[i] + l2 * xi[i];
            out[4 + i] = -gx[i] - l1 * xi[i] - l2 * eta[i];
        }
        out[8] = position(&s).norm();
        out
    }

    fn project(&self, y: &mut [f64; 9]) {
        let mut s = MoserState::from_slice(&y[..8]);
        s.project();
        y[..8].copy_from_slice(&s.to_array());
    }
}

#[derive(Debug, Clone)]
pub struct MoserTrajectory {
    pub tau: Vec<f64>,
    pub states: Vec<MoserState>,
    /// Decoded physical states; `None` at the north pole.
    pub physical: Vec<Option<PhasePoint>>,
    pub t_phys: Vec<f64>,
    pub h_m: Vec<f64>,
    pub stats: TrajectoryStats,
    solution: OdeSolution<9>,
}

impl MoserTrajectory {
    pub fn h_m_drift(&self) -> f64 {
        let h0 = self.h_m[0];
        self.h_m.iter().map(|h| (h - h0).abs()).fold(0.0, f64::max)
    }

    /// Interpolated `(state, t_phys)` at regularized time `tau`.
    pub fn interpolate(&self, tau: f64) -> Option<(MoserState, f64)> {
        self.solution.sample(tau).map(|y| {
            let mut s = MoserState::from_slice(&y[..8]);
            s.project();
            (s, y[8])
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "t", "q1", "q2", "q3", "p1", "p2", "p3", "energy", "tau", "xi1", "xi2", "xi3", "xi4",
            "eta1", "eta2", "eta3", "eta4",
        ])?;
        for k in 0..self.tau.len() {
            let s = &self.states[k];
            let mut row = vec![format!("{:.17e}", self.t_phys[k])];
            match &self.physical[k] {
                Some(x) => row.extend(
                    [x.q.x, x.q.y, x.q.z, x.p.x, x.p.y, x.p.z]
                        .iter()
                        .map(|v| format!("{v:.17e}")),
                ),
                None => row.extend(std::iter::repeat(String::new()).take(6)),
            }
            row.push(format!("{:.17e}", self.h_m[k]));
            row.push(format!("{:.17e}", self.tau[k]));
            row.extend(s.base.iter().chain(&s.cofiber).map(|v| format!("{v:.17e}")));
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
            h_m_drift: f64,
            stats: &'a TrajectoryStats,
        }
        Ok(serde_json::to_string_pretty(&S {
            tau_end: *self.tau.last().unwrap_or(&0.0),
            t_phys_end: *self.t_phys.last().unwrap_or(&0.0),
            samples: self.tau.len(),
            h_m_drift: self.h_m_drift(),
            stats: &self.stats,
        })?)
    }
}

/// Flow `H_M` over regularized time `span`, tracking `t_phys` with `dt = |q| dtau`.
pub fn integrate_moser<S: StarkZeeman + ?Sized>(
    sys: &S,
    c: f64,
    s0: MoserState,
    span: (f64, f64),
    o: &FlowOptions,
) -> Result<MoserTrajectory> {
    check_static(sys)?;
    let h0 = moser_hamiltonian(sys, c, &s0)?;
    if h0.abs() > 1e-8 {
        return Err(Error::Domain(format!(
            "initial state is off the zero level: H_M = {h0:.3e}"
        )));
    }
    let mut s0 = s0;
    s0.project();
    let mut y0 = [0.0; 9];
    y0[..8].copy_from_slice(&s0.to_array());
    let rhs = MoserRhs { sys, c };
    let ode = OdeOptions {
        max_steps: o.max_steps,
        ..OdeOptions::with_tol(o.tol)
    };
    let sol = integrate(&rhs, span.0, y0, span.1, &ode)?;
    let states: Vec<MoserState> = sol
        .y
        .iter()
        .map(|y| MoserState::from_slice(&y[..8]))
        .collect();
    let h_m = states
        .iter()
        .map(|s| moser_hamiltonian(sys, c, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(MoserTrajectory {
        tau: sol.t.clone(),
        physical: states.iter().map(|s| moser_decode(s).ok()).collect(),
        t_phys: sol.y.iter().map(|y| y[8]).collect(),
        states,
        h_m,
        stats: TrajectoryStats::new(sol.stats, o, false),
        solution: sol,
    })
}
