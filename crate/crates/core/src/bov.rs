//! The regularized action functional on loops of quaternions, its gradient,
//! a critical point solver, a verifier for generalized periodic solutions, and
//! the non-local Legendre transform.
//!
//! A loop `z` is sampled at `tau_k = k / N`. With `n = ||z||^2 = mean |z|^2`
//! the physical time is `t_z(tau) = (1/n) int_0^tau |z|^2` and the physical loop
//! is `q = Phi(z)`. The functional is `B = K + M - P` with
//!
//! * `K = 2 n ||z'||^2`,
//! * `M = mean <A(q), dPhi(z) z'>`,
//! * `P = -kappa / n + Ebar`, `Ebar = mean(E(t_z, q) |z|^2) / n`.
//!
//! All means are over the samples and the gradient is taken in the matching
//! discrete `L^2` product, so it is exact for the discrete functional.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{generalized_energy, EnergySamples};
use crate::ksgeom::{ks_diff_transpose_vec, ks_diff_vec, ks_map_vec};
use crate::loops::{axpy, inner, mean, norm_sqr, scale, QuatLoop, VecLoop};
use crate::quat::{Quaternion, Vec3};
use crate::reparam::reconstruct_q;
use crate::spectral::{self, Boundary};
use crate::systems::{Mat3, StarkZeeman};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub value: f64,
    pub kinetic: f64,
    pub magnetic: f64,
    pub potential: f64,
    pub e_bar: f64,
    pub e_one: f64,
    /// `||z||^2`.
    pub norm_sqr: f64,
    #[serde(skip)]
    pub gradient: Option<QuatLoop>,
    pub gradient_norm: Option<f64>,
    /// Gradient norm divided by the largest norm among the gradients of the
    /// kinetic, magnetic and potential parts. Small only when the parts cancel.
    pub relative_gradient: Option<f64>,
    /// Relative defect of the delay equation, `||z'' - rhs|| / ||z''||`.
    pub residual_norm: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct GradientTerms {
    pub eps1: QuatLoop,
    pub eps2: QuatLoop,
    pub eps3: QuatLoop,
    /// `dPhi(z)^T B(Phi(z)) dPhi(z)` at every sample.
    pub n_matrix: Vec<[[f64; 4]; 4]>,
}

/// Everything sampled along `Phi(z)` that the functional needs.
struct Pullback {
    n: f64,
    zp: QuatLoop,
    rho: Vec<f64>,
    t: Vec<f64>,
    q: Vec<Vec3>,
    a: Vec<Vec3>,
    e: Vec<f64>,
    edot: Vec<f64>,
    /// `dPhi(z) z'`, the velocity of `q` in `tau`.
    dq: Vec<Vec3>,
    kappa: f64,
}

fn pullback<S: StarkZeeman + ?Sized>(sys: &S, z: &QuatLoop) -> Result<Pullback> {
    if z.len() < 4 {
        return Err(Error::Config(format!(
            "loop needs at least 4 samples, got {}",
            z.len()
        )));
    }
    if !z.is_finite() {
        return Err(Error::Numerical("loop has non-finite samples".into()));
    }
    let rho: Vec<f64> = z.samples.iter().map(|s| s.norm_sqr()).collect();
    let n = mean(&rho);
    if !(n > 0.0) {
        return Err(Error::Degenerate(
            "||z|| = 0: the loop is not in the punctured loop space".into(),
        ));
    }
    let zp = z.derivative();
    let t: Vec<f64> = spectral::antiderivative(&rho)
        .iter()
        .map(|c| c / n)
        .collect();
    let q: Vec<Vec3> = z.samples.iter().map(ks_map_vec).collect();
    let a = q.iter().map(|x| sys.vector_potential(x)).collect();
    let e = t.iter().zip(&q).map(|(t, x)| sys.electric(*t, x)).collect();
    let edot = if sys.is_time_dependent() {
        t.iter()
            .zip(&q)
            .map(|(t, x)| sys.electric_tdot(*t, x))
            .collect()
    } else {
        vec![0.0; z.len()]
    };
    let dq = z
        .samples
        .iter()
        .zip(&zp.samples)
        .map(|(a, b)| ks_diff_vec(a, b))
        .collect();
    Ok(Pullback {
        n,
        zp,
        rho,
        t,
        q,
        a,
        e,
        edot,
        dq,
        kappa: sys.coulomb(),
    })
}

impl Pullback {
    fn report(&self) -> Result<FunctionalReport> {
        let n = self.n;
        let kinetic = 2.0 * n * norm_sqr(&self.zp);
        let magnetic = mean(
            &self
                .a
                .iter()
                .zip(&self.dq)
                .map(|(a, v)| a.dot(v))
                .collect::<Vec<_>>(),
        );
        let e_bar = mean(
            &self
                .e
                .iter()
                .zip(&self.rho)
                .map(|(e, r)| e * r)
                .collect::<Vec<_>>(),
        ) / n;
        let e_one = self.e_one();
        let potential = -self.kappa / n + e_bar;
        let value = kinetic + magnetic - potential;
        if !value.is_finite() {
            return Err(Error::Domain(
                "functional is not finite along Phi(z)".into(),
            ));
        }
        Ok(FunctionalReport {
            value,
            kinetic,
            magnetic,
            potential,
            e_bar,
            e_one,
            norm_sqr: n,
            gradient: None,
            gradient_norm: None,
            relative_gradient: None,
            residual_norm: None,
        })
    }

    fn weights(&self) -> Vec<f64> {
        self.edot
            .iter()
            .zip(&self.rho)
            .map(|(e, r)| e * r)
            .collect()
    }

    fn e_one(&self) -> f64 {
        mean(
            &self
                .weights()
                .iter()
                .zip(&self.t)
                .map(|(w, t)| w * t)
                .collect::<Vec<_>>(),
        ) / self.n
    }

    /// `eps1 = (C^T w) z / n`, `eps2 = -i z gradE |z|^2`, `eps3 = E z`.
    fn eps<S: StarkZeeman + ?Sized>(&self, sys: &S, z: &QuatLoop) -> [QuatLoop; 3] {
        let ct = spectral::antiderivative_adjoint(&self.weights());
        let b = z.boundary;
        let e1 = z
            .samples
            .iter()
            .zip(&ct)
            .map(|(z, c)| *z * (c / self.n))
            .collect();
        let e2 = (0..z.len())
            .map(|k| {
                let g = sys.electric_grad(self.t[k], &self.q[k]);
                z.samples[k].mul_i() * Quaternion::pure(g) * -self.rho[k]
            })
            .collect();
        let e3 = z
            .samples
            .iter()
            .zip(&self.e)
            .map(|(z, e)| *z * *e)
            .collect();
        [
            QuatLoop::new(e1, b),
            QuatLoop::new(e2, b),
            QuatLoop::new(e3, b),
        ]
    }

    /// Gradient of `Ebar` given the three eps loops.
    fn energy_gradient(
        &self,
        z: &QuatLoop,
        eps: &[QuatLoop; 3],
        e_bar: f64,
        e_one: f64,
    ) -> QuatLoop {
        let s = 2.0 / self.n;
        let c = -2.0 * (e_bar + e_one) / self.n;
        let samples = (0..z.len())
            .map(|k| {
                (eps[0].samples[k] + eps[1].samples[k] + eps[2].samples[k]) * s + z.samples[k] * c
            })
            .collect();
        QuatLoop::new(samples, z.boundary)
    }
}

fn jacobians<S: StarkZeeman + ?Sized>(sys: &S, q: &[Vec3]) -> Vec<Mat3> {
    q.iter().map(|x| sys.vector_potential_jacobian(x)).collect()
}

/// Value of the functional and its parts.
pub fn action_value<S: StarkZeeman + ?Sized>(sys: &S, z: &QuatLoop) -> Result<FunctionalReport> {
    pullback(sys, z)?.report()
}

/// Value, gradient and delay-equation residual.
pub fn action_gradient<S: StarkZeeman + ?Sized>(sys: &S, z: &QuatLoop) -> Result<FunctionalReport> {
    let pb = pullback(sys, z)?;
    let mut rep = pb.report()?;
    let n = pb.n;
    let b = z.boundary;
    let len = z.len();
    let zpp = pb.zp.derivative();
    let zp2 = norm_sqr(&pb.zp);
    let jac = jacobians(sys, &pb.q);

    let grad_k: Vec<Quaternion> = (0..len)
        .map(|k| z.samples[k] * (4.0 * zp2) - zpp.samples[k] * (4.0 * n))
        .collect();
    let pulled_a = QuatLoop::new(
        z.samples
            .iter()
            .zip(&pb.a)
            .map(|(z, a)| ks_diff_transpose_vec(z, a))
            .collect(),
        b,
    );
    let d_pulled_a = pulled_a.derivative();
    let grad_m: Vec<Quaternion> = (0..len)
        .map(|k| {
            ks_diff_transpose_vec(&z.samples[k], &(jac[k].transpose() * pb.dq[k]))
                + ks_diff_transpose_vec(&pb.zp.samples[k], &pb.a[k])
                - d_pulled_a.samples[k]
        })
        .collect();
    let eps = pb.eps(sys, z);
    let grad_e = pb.energy_gradient(z, &eps, rep.e_bar, rep.e_one);
    let kz = 2.0 * pb.kappa / (n * n);
    let grad = QuatLoop::new(
        (0..len)
            .map(|k| grad_k[k] + grad_m[k] - z.samples[k] * kz - grad_e.samples[k])
            .collect(),
        b,
    );

    let coef = zp2 / n + (rep.e_bar + rep.e_one) / (2.0 * n * n) - pb.kappa / (2.0 * n * n * n);
    let defect: Vec<Quaternion> = (0..len)
        .map(|k| {
            let bmat = jac[k].transpose() - jac[k];
            let nzp = ks_diff_transpose_vec(&z.samples[k], &(bmat * pb.dq[k]));
            let e = eps[0].samples[k] + eps[1].samples[k] + eps[2].samples[k];
            let rhs = z.samples[k] * coef + nzp * (1.0 / (4.0 * n)) - e * (1.0 / (2.0 * n * n));
            zpp.samples[k] - rhs
        })
        .collect();
    let dn = norm_sqr(&QuatLoop::new(defect, b)).sqrt();
    let zn = norm_sqr(&zpp).sqrt();
    rep.residual_norm = Some(if zn > 0.0 { dn / zn } else { dn });
    let gnorm = norm_sqr(&grad).sqrt();
    let part = |v: &[Quaternion]| norm_sqr(&QuatLoop::new(v.to_vec(), b)).sqrt();
    let grad_p: Vec<Quaternion> = (0..len)
        .map(|k| z.samples[k] * kz + grad_e.samples[k])
        .collect();
    let parts = part(&grad_k).max(part(&grad_m)).max(part(&grad_p));
    rep.gradient_norm = Some(gnorm);
    rep.relative_gradient = Some(if parts > 0.0 { gnorm / parts } else { 0.0 });
    if !grad.is_finite() {
        return Err(Error::Numerical("gradient is not finite".into()));
    }
    rep.gradient = Some(grad);
    Ok(rep)
}

/// The loop terms entering the gradient, for inspection.
pub fn gradient_terms<S: StarkZeeman + ?Sized>(sys: &S, z: &QuatLoop) -> Result<GradientTerms> {
    let pb = pullback(sys, z)?;
    let [eps1, eps2, eps3] = pb.eps(sys, z);
    let basis = [Quaternion::ONE, Quaternion::I, Quaternion::J, Quaternion::K];
    let n_matrix = z
        .samples
        .iter()
        .zip(jacobians(sys, &pb.q))
        .map(|(zk, j)| {
            let bmat = j.transpose() - j;
            let cols: Vec<Vec3> = basis.iter().map(|e| ks_diff_vec(zk, e)).collect();
            std::array::from_fn(|r| std::array::from_fn(|c| cols[r].dot(&(bmat * cols[c]))))
        })
        .collect();
    Ok(GradientTerms {
        eps1,
        eps2,
        eps3,
        n_matrix,
    })
}

/// `<z'(tau_k), i z(tau_k)>` at every sample.
pub fn constraint_series(z: &QuatLoop) -> Vec<f64> {
    let zp = z.derivative();
    z.samples
        .iter()
        .zip(&zp.samples)
        .map(|(z, v)| v.dot(&z.mul_i()))
        .collect()
}

/// Energy constant `C = 2n ||z'_perp||^2 - kappa / n + Ebar + E1`, where `z'_perp`
/// is the part of `z'` orthogonal to the fiber direction `i z`.
pub fn energy_constant<S: StarkZeeman + ?Sized>(sys: &S, z: &QuatLoop) -> Result<f64> {
    let pb = pullback(sys, z)?;
    let rep = pb.report()?;
    let perp = perp_sqr(z, &pb.zp);
    Ok(2.0 * pb.n * mean(&perp) - pb.kappa / pb.n + rep.e_bar + rep.e_one)
}

fn perp_sqr(z: &QuatLoop, zp: &QuatLoop) -> Vec<f64> {
    z.samples
        .iter()
        .zip(&zp.samples)
        .map(|(z, v)| {
            let r = z.norm_sqr();
            let c = v.dot(&z.mul_i());
            if r > 0.0 {
                v.norm_sqr() - c * c / r
            } else {
                v.norm_sqr()
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// seeds

/// Seed loops from a compact description.
///
/// * `circle:R=0.3,plane=1j` gives `R (cos(pi tau) + u sin(pi tau))` with
///   `u = j` (orbit in the `q1 q3` plane) or `u = k` (the `q1 q2` plane);
///   `sense=-1` reverses the direction.
/// * `segment:a=0.6` gives the two-zero loop `a sin(2 pi tau) j`.
/// * `constant:R=0.5` gives the constant loop `R`.
///
/// Optional `noise=0.01,seed=7` adds uniform noise of relative size `noise`.
pub fn seed_loop(spec: &str, samples: usize) -> Result<QuatLoop> {
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let mut radius = None;
    let mut plane = "1j".to_string();
    let mut sense = 1.0;
    let mut noise = 0.0;
    let mut rng_seed = 0u64;
    for kv in rest.split(',').filter(|s| !s.is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("seed parameter `{kv}` is not key=value")))?;
        let num = || {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("seed parameter {k}: bad number `{v}`")))
        };
        match k {
            "R" | "a" => radius = Some(num()?),
            "plane" => plane = v.to_string(),
            "sense" => sense = num()?.signum(),
            "noise" => noise = num()?,
            "seed" => {
                rng_seed = v
                    .parse()
                    .map_err(|_| Error::Config(format!("bad rng seed `{v}`")))?
            }
            _ => return Err(Error::Config(format!("unknown seed parameter `{k}`"))),
        }
    }
    if samples < 8 {
        return Err(Error::Config("need at least 8 samples".into()));
    }
    let r = radius.ok_or_else(|| Error::Config("seed needs a size, R=... or a=...".into()))?;
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Config(format!(
            "seed size must be positive, got {r}"
        )));
    }
    let u = match plane.as_str() {
        "1j" | "j" => Quaternion::J,
        "1k" | "k" => Quaternion::K,
        _ => {
            return Err(Error::Config(format!(
                "unknown plane `{plane}`, expected 1j or 1k"
            )))
        }
    };
    let z = match kind {
        "circle" => QuatLoop::from_fn(samples, Boundary::AntiPeriodic, |t| {
            (Quaternion::ONE * (PI * t).cos() + u * (sense * (PI * t).sin())) * r
        }),
        "segment" => QuatLoop::from_fn(samples, Boundary::Periodic, |t| {
            u * (r * (2.0 * PI * t).sin())
        }),
        "constant" => QuatLoop::from_fn(samples, Boundary::Periodic, |_| Quaternion::ONE * r),
        _ => return Err(Error::Config(format!("unknown seed kind `{kind}`"))),
    };
    Ok(if noise > 0.0 {
        perturb(&z, noise * r, rng_seed)
    } else {
        z
    })
}

/// Add independent uniform noise in `[-amp, amp]` to every component.
pub fn perturb(z: &QuatLoop, amp: f64, seed: u64) -> QuatLoop {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = z
        .samples
        .iter()
        .map(|s| {
            let mut r = *s;
            for c in 0..4 {
                r[c] += amp * rng.gen_range(-1.0..1.0);
            }
            r
        })
        .collect();
    QuatLoop::new(samples, z.boundary)
}

// ---------------------------------------------------------------------------
// solver

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Convergence threshold on the `L^2` norm of the gradient.
    pub gtol: f64,
    /// Total iteration budget over all penalty stages.
    pub max_iter: usize,
    /// Number of L-BFGS correction pairs.
    pub history: usize,
    /// Initial weight of the penalty `mean <z', iz>^2`, divided by ten per stage.
    /// Zero skips the penalty stages.
    pub penalty: f64,
    /// Finish with Newton steps when L-BFGS does not reach `gtol`.
    pub newton: bool,
    pub newton_iter: usize,
    pub method: Method,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Descent through the penalty stages, then Newton if needed. Finds minima.
    #[default]
    Descent,
    /// Newton-MINRES only. Converges to any nondegenerate critical point near
    /// the seed, saddles included.
    Newton,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gtol: 1e-8,
            max_iter: 5000,
            history: 20,
            penalty: 1.0,
            newton: true,
            newton_iter: 40,
            method: Method::Descent,
        }
    }
}

/// Bound on [`FunctionalReport::relative_gradient`] for a converged loop.
pub const RELATIVE_GRADIENT_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalPoint {
    #[serde(rename = "loop")]
    pub z: QuatLoop,
    pub report: FunctionalReport,
    /// `<z'(0), i z(0)>`.
    pub constraint_value: f64,
    /// `Phi(z)` on a uniform grid in physical time.
    pub q_loop: VecLoop,
    pub c_constant: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl CriticalPoint {
    /// Package a loop, marking it converged when its gradient norm is below
    /// `gtol` and the gradient is not merely small because every part is small
    /// (as for a constant loop drifting to infinity).
    pub fn evaluate<S: StarkZeeman + ?Sized>(sys: &S, z: &QuatLoop, gtol: f64) -> Result<Self> {
        let report = action_gradient(sys, z)?;
        let converged = report.gradient_norm.is_some_and(|g| g < gtol)
            && report
                .relative_gradient
                .is_some_and(|r| r < RELATIVE_GRADIENT_TOL);
        Ok(CriticalPoint {
            z: z.clone(),
            constraint_value: constraint_series(z)[0],
            q_loop: reconstruct_q(z)?,
            c_constant: energy_constant(sys, z)?,
            report,
            converged,
            iterations: 0,
        })
    }

    pub fn gradient_norm(&self) -> f64 {
        self.report.gradient_norm.unwrap_or(f64::NAN)
    }

    pub fn write_json(&self, path: &Path, verification: Option<&Verification>) -> Result<()> {
        #[derive(Serialize)]
        struct Out<'a> {
            #[serde(flatten)]
            cp: &'a CriticalPoint,
            verification: Option<&'a Verification>,
        }
        let s = serde_json::to_string_pretty(&Out {
            cp: self,
            verification,
        })?;
        std::fs::write(path, s)?;
        Ok(())
    }

    /// Samples of the physical loop, `t,q1,q2,q3`.
    pub fn write_q_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "q1", "q2", "q3"])?;
        for (k, q) in self.q_loop.samples.iter().enumerate() {
            let row = [self.q_loop.tau(k), q.x, q.y, q.z];
            w.write_record(row.iter().map(|v| format!("{v:.17e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Objective seen by the optimizer: the functional plus the constraint penalty.
struct Objective<'a, S: ?Sized> {
    sys: &'a S,
    mu: f64,
}

struct Eval {
    f: f64,
    g: QuatLoop,
    /// Gradient norm of the functional alone.
    gb: f64,
    n: f64,
}

impl<S: StarkZeeman + ?Sized> Objective<'_, S> {
    fn eval(&self, z: &QuatLoop) -> Result<Eval> {
        let rep = action_gradient(self.sys, z)?;
        let gb = rep.gradient_norm.unwrap_or(f64::NAN);
        let mut g = rep.gradient.expect("gradient requested");
        let mut f = rep.value;
        if self.mu > 0.0 {
            let (p, pg) = penalty(z);
            f += self.mu * p;
            g = axpy(self.mu, &pg, &g);
        }
        Ok(Eval {
            f,
            g,
            gb,
            n: rep.norm_sqr,
        })
    }
}

/// `mean c^2` with `c = <z', i z>`, and its gradient `-2 D(c i z) - 2 c i z'`.
fn penalty(z: &QuatLoop) -> (f64, QuatLoop) {
    let zp = z.derivative();
    let c: Vec<f64> = z
        .samples
        .iter()
        .zip(&zp.samples)
        .map(|(z, v)| v.dot(&z.mul_i()))
        .collect();
    let value = mean(&c.iter().map(|x| x * x).collect::<Vec<_>>());
    let ciz = QuatLoop::new(
        z.samples
            .iter()
            .zip(&c)
            .map(|(z, c)| z.mul_i() * *c)
            .collect(),
        z.boundary,
    );
    let d = ciz.derivative();
    let g = (0..z.len())
        .map(|k| (d.samples[k] + zp.samples[k].mul_i() * c[k]) * -2.0)
        .collect();
    (value, QuatLoop::new(g, z.boundary))
}

/// Inverse of the diagonal Fourier preconditioner `4n((2 pi nu)^2 + pi^2)`.
fn precondition(g: &QuatLoop, n: f64) -> QuatLoop {
    let b = g.boundary;
    let cols: Vec<Vec<f64>> = (0..4)
        .map(|c| {
            spectral::multiply(&g.component(c), b, |nu| {
                Complex64::new(1.0 / (4.0 * n * ((2.0 * PI * nu).powi(2) + PI * PI)), 0.0)
            })
        })
        .collect();
    QuatLoop::from_components(&cols, b)
}

fn rotate(z: &QuatLoop, theta: f64) -> QuatLoop {
    let u = Quaternion::exp_i(theta);
    QuatLoop::new(z.samples.iter().map(|s| u * *s).collect(), z.boundary)
}

/// Index of the sample whose fiber phase is pinned.
fn pin_index(z: &QuatLoop) -> usize {
    let max = z.samples.iter().map(|s| s.norm()).fold(0.0, f64::max);
    z.samples
        .iter()
        .position(|s| s.norm() > 1e-3 * max)
        .unwrap_or(0)
}

/// Fiber angle that puts `z` at the pinned sample into `z1 = 0, z0 >= 0`
/// (or `z3 = 0, z2 >= 0` if the first pair vanishes).
fn gauge_angle(z: &QuatLoop, pin: usize) -> f64 {
    let s = z.samples[pin];
    if s[0].hypot(s[1]) > 1e-8 * s.norm() {
        -s[1].atan2(s[0])
    } else {
        -s[3].atan2(s[2])
    }
}

struct Lbfgs {
    m: usize,
    pairs: Vec<(QuatLoop, QuatLoop, f64)>,
}

impl Lbfgs {
    fn direction(&self, g: &QuatLoop, n: f64) -> QuatLoop {
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, r) in self.pairs.iter().rev() {
            let a = r * inner(s, &q);
            q = axpy(-a, y, &q);
            alphas.push(a);
        }
        let mut h = precondition(&q, n);
        if let Some((s, y, _)) = self.pairs.last() {
            let py = precondition(y, n);
            let gamma = inner(s, y) / inner(y, &py);
            h = scale(gamma, &h);
        }
        for ((s, y, r), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = r * inner(y, &h);
            h = axpy(a - b, s, &h);
        }
        scale(-1.0, &h)
    }

    fn push(&mut self, s: QuatLoop, y: QuatLoop) {
        let sy = inner(&s, &y);
        if sy <= 1e-300 {
            return;
        }
        if self.pairs.len() == self.m {
            self.pairs.remove(0);
        }
        self.pairs.push((s, y, 1.0 / sy));
    }

    fn rotate(&mut self, theta: f64) {
        for (s, y, _) in &mut self.pairs {
            *s = rotate(s, theta);
            *y = rotate(y, theta);
        }
    }
}

struct Progress {
    z: QuatLoop,
    gb: f64,
    iterations: usize,
    n0: f64,
}

impl Progress {
    fn check_norm(&self, n: f64) -> Result<()> {
        if n < 1e-8 * self.n0 {
            return Err(Error::Degenerate(format!("||z||^2 collapsed to {n:.3e}")));
        }
        Ok(())
    }

    fn offer(&mut self, z: &QuatLoop, gb: f64) {
        if gb < self.gb {
            self.z = z.clone();
            self.gb = gb;
        }
    }
}

/// Returns true when the stage reached its tolerance.
fn lbfgs_stage<S: StarkZeeman + ?Sized>(
    obj: &Objective<S>,
    z0: &QuatLoop,
    tol: f64,
    opts: &SolverOptions,
    pin: usize,
    prog: &mut Progress,
) -> Result<(QuatLoop, bool)> {
    let mut z = rotate(z0, gauge_angle(z0, pin));
    let mut cur = obj.eval(&z)?;
    let mut mem = Lbfgs {
        m: opts.history.max(1),
        pairs: Vec::new(),
    };
    let mut failures = 0;
    while prog.iterations < opts.max_iter {
        prog.check_norm(cur.n)?;
        if obj.mu == 0.0 {
            prog.offer(&z, cur.gb);
        }
        let gn = norm_sqr(&cur.g).sqrt();
        if gn < tol {
            return Ok((z, true));
        }
        if cur.n > 1e8 * prog.n0 {
            return Ok((z, false));
        }
        prog.iterations += 1;
        let mut d = mem.direction(&cur.g, cur.n);
        let mut slope = inner(&cur.g, &d);
        if !(slope < 0.0) {
            mem.pairs.clear();
            d = scale(-1.0, &precondition(&cur.g, cur.n));
            slope = inner(&cur.g, &d);
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = axpy(alpha, &d, &z);
            match obj.eval(&trial) {
                Ok(e) if e.f.is_finite() => {
                    let armijo = e.f <= cur.f + 1e-4 * alpha * slope;
                    // near the optimum the decrease drowns in rounding
                    let flat =
                        e.f <= cur.f + 1e-12 * (1.0 + cur.f.abs()) && norm_sqr(&e.g).sqrt() < gn;
                    if armijo || flat {
                        accepted = Some((trial, e));
                        break;
                    }
                }
                Ok(_)
                | Err(Error::Numerical(_))
                | Err(Error::Domain(_))
                | Err(Error::Degenerate(_)) => {}
                Err(e) => return Err(e),
            }
            alpha *= 0.5;
        }
        let Some((znew, enew)) = accepted else {
            failures += 1;
            if failures > 2 || mem.pairs.is_empty() {
                return Ok((z, false));
            }
            mem.pairs.clear();
            continue;
        };
        failures = 0;
        let s = axpy(-1.0, &z, &znew);
        let y = axpy(-1.0, &cur.g, &enew.g);
        mem.push(s, y);
        let theta = gauge_angle(&znew, pin);
        z = rotate(&znew, theta);
        cur = Eval {
            g: rotate(&enew.g, theta),
            ..enew
        };
        mem.rotate(theta);
    }
    Ok((z, false))
}

/// Preconditioned MINRES for `H x = b` with `H` symmetric in the loop product.
fn minres(
    hess: &mut dyn FnMut(&QuatLoop) -> Result<QuatLoop>,
    b: &QuatLoop,
    prec: &dyn Fn(&QuatLoop) -> QuatLoop,
    rtol: f64,
    max_iter: usize,
) -> Result<QuatLoop> {
    let mut x = scale(0.0, b);
    let mut r1 = b.clone();
    let mut y = prec(&r1);
    let beta1 = inner(&r1, &y).sqrt();
    if !(beta1 > 0.0) {
        return Ok(x);
    }
    let mut r2 = r1.clone();
    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0, 0.0);
    let mut w = scale(0.0, b);
    let mut w2 = w.clone();
    for it in 0..max_iter {
        let v = scale(1.0 / beta, &y);
        y = hess(&v)?;
        if it > 0 {
            y = axpy(-beta / oldb, &r1, &y);
        }
        let alfa = inner(&v, &y);
        y = axpy(-alfa / beta, &r2, &y);
        r1 = std::mem::replace(&mut r2, y.clone());
        y = prec(&r2);
        oldb = beta;
        let b2 = inner(&r2, &y);
        if b2 < 0.0 {
            return Err(Error::Numerical("preconditioner is not positive".into()));
        }
        beta = b2.sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let w1 = std::mem::replace(&mut w2, w.clone());
        w = scale(1.0 / gamma, &axpy(-delta, &w2, &axpy(-oldeps, &w1, &v)));
        x = axpy(phi, &w, &x);
        if phibar < rtol * beta1 || beta == 0.0 {
            break;
        }
    }
    Ok(x)
}

fn newton_polish<S: StarkZeeman + ?Sized>(
    sys: &S,
    z0: &QuatLoop,
    opts: &SolverOptions,
    pin: usize,
    prog: &mut Progress,
) -> Result<bool> {
    let obj = Objective { sys, mu: 0.0 };
    let mut z = z0.clone();
    let mut cur = obj.eval(&z)?;
    for _ in 0..opts.newton_iter {
        prog.check_norm(cur.n)?;
        prog.offer(&z, cur.gb);
        if cur.gb < opts.gtol {
            return Ok(true);
        }
        prog.iterations += 1;
        let zn = norm_sqr(&z).sqrt();
        let n = cur.n;
        let zc = z.clone();
        let mut hess = |v: &QuatLoop| -> Result<QuatLoop> {
            let vn = norm_sqr(v).sqrt();
            if vn == 0.0 {
                return Ok(v.clone());
            }
            let h = 1e-5 * zn / vn;
            let gp = obj.eval(&axpy(h, v, &zc))?.g;
            let gm = obj.eval(&axpy(-h, v, &zc))?.g;
            Ok(scale(0.5 / h, &axpy(-1.0, &gm, &gp)))
        };
        let prec = |r: &QuatLoop| precondition(r, n);
        let step = minres(&mut hess, &scale(-1.0, &cur.g), &prec, 1e-9, 400)?;
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..12 {
            let trial = axpy(alpha, &step, &z);
            if let Ok(e) = obj.eval(&trial) {
                if e.gb < cur.gb {
                    let theta = gauge_angle(&trial, pin);
                    z = rotate(&trial, theta);
                    cur = Eval {
                        g: rotate(&e.g, theta),
                        ..e
                    };
                    moved = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
    }
    prog.offer(&z, cur.gb);
    Ok(cur.gb < opts.gtol)
}

/// Search for a critical point of the functional near `seed`.
///
/// Runs preconditioned L-BFGS through the penalty stages `mu, mu/10, mu/100, 0`,
/// then Newton-MINRES from the iterate with the smallest gradient if the
/// tolerance was not met. Saddle points are only found by the Newton phase.
/// Exhausting the budget returns the best loop with `converged = false`.
pub fn find_critical_point<S: StarkZeeman + ?Sized>(
    sys: &S,
    seed: &QuatLoop,
    opts: &SolverOptions,
) -> Result<CriticalPoint> {
    if !(opts.gtol > 0.0) {
        return Err(Error::Config("gtol must be positive".into()));
    }
    let first = action_gradient(sys, seed)?;
    let pin = pin_index(seed);
    let mut prog = Progress {
        z: seed.clone(),
        gb: first.gradient_norm.unwrap_or(f64::INFINITY),
        iterations: 0,
        n0: first.norm_sqr,
    };
    let mut mus: Vec<f64> = if opts.method == Method::Newton {
        Vec::new()
    } else if opts.penalty > 0.0 {
        vec![opts.penalty, opts.penalty / 10.0, opts.penalty / 100.0]
    } else {
        Vec::new()
    };
    if opts.method == Method::Descent {
        mus.push(0.0);
    }
    let mut z = seed.clone();
    let mut converged = false;
    for mu in mus {
        let tol = if mu > 0.0 {
            opts.gtol.max(1e-6)
        } else {
            opts.gtol
        };
        let (znew, ok) = lbfgs_stage(&Objective { sys, mu }, &z, tol, opts, pin, &mut prog)?;
        z = znew;
        converged = ok && mu == 0.0;
    }
    if !converged && (opts.newton || opts.method == Method::Newton) {
        let start = prog.z.clone();
        converged = newton_polish(sys, &start, opts, pin, &mut prog)?;
    }
    let best = if converged || prog.gb.is_finite() {
        prog.z.clone()
    } else {
        z
    };
    let mut cp = CriticalPoint::evaluate(sys, &best, opts.gtol)?;
    cp.iterations = prog.iterations;
    Ok(cp)
}

// ---------------------------------------------------------------------------
// verification of generalized solutions

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verification {
    pub checks: Vec<Check>,
    /// Parameters `tau` of the zeros of `z`.
    pub zeros: Vec<f64>,
    pub c_constant: f64,
    pub passed: bool,
}

impl Verification {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name.starts_with(name))
    }
}

fn check(name: &str, value: f64, tolerance: f64, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        value,
        tolerance,
        passed: passed && value.is_finite(),
        detail,
    }
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Zeros of `z` located through the trigonometric interpolant.
pub fn loop_zeros(z: &QuatLoop) -> Vec<f64> {
    let len = z.len();
    let rho: Vec<f64> = z.samples.iter().map(|s| s.norm_sqr()).collect();
    let rmax = rho.iter().cloned().fold(0.0, f64::max);
    let it = z.interpolant();
    let h = 1.0 / len as f64;
    let mut zeros = Vec::new();
    for k in 0..len {
        let (prev, next) = (rho[(k + len - 1) % len], rho[(k + 1) % len]);
        if rho[k] > 1e-2 * rmax || rho[k] > prev || rho[k] >= next {
            continue;
        }
        let t = k as f64 * h;
        let tau = golden_min(|s| it.eval(s).norm_sqr(), t - h, t + h);
        if it.eval(tau).norm() < 1e-7 * rmax.sqrt() {
            zeros.push(tau.rem_euclid(1.0));
        }
    }
    zeros
}

/// Checks that `Phi(z)` is a generalized periodic solution.
///
/// The checks are (a) isolated transverse zeros, (b) constancy of `<z', iz>`,
/// (c) Newton's equation away from collisions, (d) the energy defect
/// `|z|^2 (C - energy)` vanishing pointwise, (e) constancy of the generalized
/// energy, and (f) the zero mean of the defect in time. `tol` applies to the
/// relative residuals of (b) to (f).
pub fn verify_generalized_solution<S: StarkZeeman + ?Sized>(
    sys: &S,
    cp: &CriticalPoint,
    tol: f64,
) -> Result<Verification> {
    let z = &cp.z;
    let pb = pullback(sys, z)?;
    let rep = pb.report()?;
    let len = z.len();
    let n = pb.n;
    let kappa = pb.kappa;
    let zp = &pb.zp;
    let zpp = zp.derivative();
    let mut checks = Vec::new();

    let zeros = loop_zeros(z);
    let it = z.interpolant();
    let zp_max = zp.samples.iter().map(|s| s.norm()).fold(0.0, f64::max);
    let transverse = zeros
        .iter()
        .map(|t| it.eval_derivative(*t).norm() / zp_max)
        .fold(f64::INFINITY, f64::min);
    let value = if zeros.is_empty() { 1.0 } else { transverse };
    checks.push(check(
        "a_zeros_transverse",
        value,
        1e-3,
        value > 1e-3,
        format!(
            "{} zero(s); min |z'| at a zero relative to max |z'|",
            zeros.len()
        ),
    ));

    let c = constraint_series(z);
    let cscale = (norm_sqr(zp) * n).sqrt().max(f64::MIN_POSITIVE);
    let spread = c.iter().map(|x| (x - c[0]).abs()).fold(0.0, f64::max) / cscale;
    let at0 = c[0].abs() / cscale;
    checks.push(check(
        "b_constraint_constant",
        spread.max(at0),
        tol,
        spread < tol && at0 < tol,
        format!(
            "<z', iz> at tau = 0 is {:.3e}, spread {:.3e} (relative)",
            c[0], spread
        ),
    ));

    let rmax = pb.q.iter().map(|q| q.norm()).fold(0.0, f64::max);
    let mut qdot = Vec::with_capacity(len);
    let mut worst = 0.0f64;
    let mut acc_scale = 0.0f64;
    let mut used = 0;
    for k in 0..len {
        let r = pb.rho[k];
        let zk = &z.samples[k];
        let v = pb.dq[k] * (n / r);
        qdot.push(v);
        if pb.q[k].norm() < 1e-2 * rmax {
            continue;
        }
        used += 1;
        let acc = (ks_diff_vec(&zp.samples[k], &zp.samples[k]) + ks_diff_vec(zk, &zpp.samples[k]))
            * (n * n / (r * r))
            - pb.dq[k] * (2.0 * n * n * zk.dot(&zp.samples[k]) / (r * r * r));
        let res = acc - sys.magnetic(&pb.q[k]) * v + sys.potential_grad(pb.t[k], &pb.q[k]);
        worst = worst.max(res.norm());
        acc_scale = acc_scale
            .max(acc.norm())
            .max(kappa.abs() / pb.q[k].norm_squared());
    }
    let newton = worst / acc_scale.max(f64::MIN_POSITIVE);
    checks.push(check(
        "c_newton_residual",
        newton,
        tol,
        newton < tol,
        format!("max |q'' - B q' + grad V| / max |q''| over {used} samples with |q| >= 0.01 max |q|, floored by the Coulomb force"),
    ));

    let c_const = 2.0 * n * mean(&perp_sqr(z, zp)) - kappa / n + rep.e_bar + rep.e_one;
    let w = pb.weights();
    let cum = spectral::antiderivative(&w);
    let total = mean(&w);
    let perp = perp_sqr(z, zp);
    let psi: Vec<f64> = (0..len)
        .map(|k| {
            let tail = (total - cum[k]) / n;
            pb.rho[k] * (c_const - tail - pb.e[k]) - 2.0 * n * n * perp[k] + kappa
        })
        .collect();
    let psi_scale = kappa.abs() + 2.0 * n * n * zp_max * zp_max;
    let psi_max = psi.iter().map(|x| x.abs()).fold(0.0, f64::max) / psi_scale;
    let rho_max = pb.rho.iter().cloned().fold(0.0, f64::max);
    let phi_max = (0..len)
        .filter(|&k| pb.rho[k] > 1e-2 * rho_max)
        .map(|k| (psi[k] / pb.rho[k]).abs())
        .fold(0.0, f64::max);
    checks.push(check(
        "d_energy_defect",
        psi_max,
        tol,
        psi_max < tol,
        format!("max |defect| away from zeros is {phi_max:.3e}; C = {c_const:.12}"),
    ));

    let mut samples = EnergySamples {
        t: Vec::new(),
        q: Vec::new(),
        qdot: Vec::new(),
    };
    for k in 0..len {
        if pb.rho[k] <= 0.0 || samples.t.last().is_some_and(|t| pb.t[k] <= *t) {
            continue;
        }
        samples.t.push(pb.t[k]);
        samples.q.push(pb.q[k]);
        samples.qdot.push(qdot[k]);
    }
    let (energy_dev, detail) = match generalized_energy(sys, &samples, 1.0) {
        Ok(series) => {
            let good: Vec<f64> = series
                .values
                .iter()
                .zip(&series.low_confidence)
                .filter(|(v, low)| !**low && v.is_finite())
                .map(|(v, _)| *v)
                .collect();
            let m = if good.is_empty() {
                f64::NAN
            } else {
                mean(&good)
            };
            let dev = good.iter().map(|v| (v - m).abs()).fold(0.0, f64::max) / m.abs().max(1.0);
            (
                dev,
                format!("mean energy {m:.12} over {} samples", good.len()),
            )
        }
        Err(e) => (f64::NAN, e.to_string()),
    };
    checks.push(check(
        "e_energy_constant",
        energy_dev,
        tol,
        energy_dev < tol,
        detail,
    ));

    let integral = mean(&psi) / n;
    let fval = integral.abs() / psi_scale * n;
    checks.push(check(
        "f_defect_mean_zero",
        fval,
        tol,
        fval < tol,
        format!("time integral of the defect is {integral:.3e}"),
    ));

    let passed = checks.iter().all(|c| c.passed);
    Ok(Verification {
        checks,
        zeros,
        c_constant: c_const,
        passed,
    })
}

// ---------------------------------------------------------------------------
// Legendre transform

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LegendreReport {
    pub w: QuatLoop,
    pub hamiltonian: f64,
    /// `mean <w, z'> - H(z, w)`.
    pub action: f64,
    /// Norm of the defect of Hamilton's equations at `(z, w)`.
    pub residual: f64,
    /// `action - B(z)`.
    pub identity_gap: f64,
}

/// `u = w + 2 i z A(Phi(z))`.
fn shifted_momentum(z: &QuatLoop, w: &QuatLoop, a: &[Vec3]) -> QuatLoop {
    let s = (0..z.len())
        .map(|k| w.samples[k] - ks_diff_transpose_vec(&z.samples[k], &a[k]))
        .collect();
    QuatLoop::new(s, z.boundary)
}

/// Fiber derivative `w = 4 ||z||^2 z' - 2 i z A(Phi(z))` and the Hamiltonian data at `(z, w)`.
pub fn legendre_transform<S: StarkZeeman + ?Sized>(
    sys: &S,
    z: &QuatLoop,
) -> Result<LegendreReport> {
    let pb = pullback(sys, z)?;
    let w = QuatLoop::new(
        (0..z.len())
            .map(|k| {
                pb.zp.samples[k] * (4.0 * pb.n) + ks_diff_transpose_vec(&z.samples[k], &pb.a[k])
            })
            .collect(),
        z.boundary,
    );
    hamiltonian_action(sys, z, &w)
}

/// Non-local Hamiltonian `H = ||w + 2izA||^2 / (8 ||z||^2) - kappa / ||z||^2 + Ebar`,
/// its action and the defect of `z' = dH/dw`, `w' = -dH/dz`.
pub fn hamiltonian_action<S: StarkZeeman + ?Sized>(
    sys: &S,
    z: &QuatLoop,
    w: &QuatLoop,
) -> Result<LegendreReport> {
    if w.len() != z.len() || w.boundary != z.boundary {
        return Err(Error::Config(
            "z and w must share length and boundary".into(),
        ));
    }
    let pb = pullback(sys, z)?;
    let rep = pb.report()?;
    let n = pb.n;
    let u = shifted_momentum(z, w, &pb.a);
    let uu = norm_sqr(&u);
    let hamiltonian = uu / (8.0 * n) + rep.potential;
    let action = inner(w, &pb.zp) - hamiltonian;

    let jac = jacobians(sys, &pb.q);
    let eps = pb.eps(sys, z);
    let grad_e = pb.energy_gradient(z, &eps, rep.e_bar, rep.e_one);
    let grad_z: Vec<Quaternion> = (0..z.len())
        .map(|k| {
            let zk = z.samples[k];
            let uk = u.samples[k];
            let y = (zk.conj() * Quaternion::I * uk).im() * -1.0;
            let coupling = uk.mul_i() * Quaternion::pure(pb.a[k])
                + ks_diff_transpose_vec(&zk, &(jac[k].transpose() * y));
            zk * (-uu / (4.0 * n * n))
                + coupling * (1.0 / (2.0 * n))
                + zk * (2.0 * pb.kappa / (n * n))
                + grad_e.samples[k]
        })
        .collect();
    let wp = w.derivative();
    let d1 = axpy(-1.0 / (4.0 * n), &u, &pb.zp);
    let d2 = QuatLoop::new(
        (0..z.len()).map(|k| wp.samples[k] + grad_z[k]).collect(),
        z.boundary,
    );
    let residual = (norm_sqr(&d1) + norm_sqr(&d2)).sqrt();
    Ok(LegendreReport {
        w: w.clone(),
        hamiltonian,
        action,
        residual,
        identity_gap: action - rep.value,
    })
}

/// Closed form of `action - B(z)` for arbitrary `w`: `-||w + 2izA - 4 ||z||^2 z'||^2 / (8 ||z||^2)`.
pub fn action_gap<S: StarkZeeman + ?Sized>(sys: &S, z: &QuatLoop, w: &QuatLoop) -> Result<f64> {
    let zp = z.derivative();
    let n = norm_sqr(z);
    if !(n > 0.0) {
        return Err(Error::Degenerate("||z|| = 0".into()));
    }
    let d: Vec<Quaternion> = (0..z.len())
        .map(|k| {
            let zk = z.samples[k];
            let a = sys.vector_potential(&ks_map_vec(&zk));
            w.samples[k] + Quaternion::I * zk * Quaternion::pure(a) * 2.0
                - zp.samples[k] * (4.0 * n)
        })
        .collect();
    Ok(-norm_sqr(&QuatLoop::new(d, z.boundary)) / (8.0 * n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{Kepler, RotatingKepler, SystemConfig};

    fn circle(r: f64, n: usize) -> QuatLoop {
        seed_loop(&format!("circle:R={r},plane=1j"), n).unwrap()
    }

    fn r_star() -> f64 {
        (4.0 * PI * PI).powf(-1.0 / 6.0)
    }

    #[test]
    fn kepler_circle_closed_form() {
        let rep = action_value(&Kepler, &circle(1.0, 64)).unwrap();
        assert!((rep.value - (2.0 * PI * PI + 1.0)).abs() < 1e-10);
        assert!((rep.kinetic - 2.0 * PI * PI).abs() < 1e-10);
        assert!(rep.magnetic.abs() < 1e-14);
        assert!((rep.potential + 1.0).abs() < 1e-12);
        for r in [0.5, 1.7] {
            let v = action_value(&Kepler, &circle(r, 32)).unwrap().value;
            assert!((v - (2.0 * PI * PI * r.powi(4) + 1.0 / (r * r))).abs() < 1e-9 * v);
        }
    }

    #[test]
    fn constant_loop_has_no_kinetic_or_magnetic_part() {
        let z = seed_loop("constant:R=0.7", 32).unwrap();
        let rep = action_value(&RotatingKepler, &z).unwrap();
        assert_eq!(rep.kinetic, 0.0);
        assert!(rep.magnetic.abs() < 1e-15);
    }

    #[test]
    fn zero_loop_is_rejected() {
        let z = QuatLoop::periodic(vec![Quaternion::ZERO; 16]);
        assert!(matches!(
            action_value(&Kepler, &z),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn gradient_vanishes_at_critical_circle() {
        let rep = action_gradient(&Kepler, &circle(r_star(), 64)).unwrap();
        assert!(
            rep.gradient_norm.unwrap() < 1e-10,
            "{:?}",
            rep.gradient_norm
        );
        assert!(rep.residual_norm.unwrap() < 1e-12);
        let off = action_gradient(&Kepler, &circle(0.8, 64)).unwrap();
        let g = off.gradient.unwrap();
        let z = circle(0.8, 64);
        // radial: parallel to z
        let c = inner(&g, &z) / norm_sqr(&z);
        assert!(norm_sqr(&axpy(-c, &z, &g)).sqrt() < 1e-9 * norm_sqr(&g).sqrt());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let base = perturb(&circle(0.5, 32), 0.05, 3);
        let xi = perturb(&scale(0.0, &base), 1.0, 4);
        let bc = SystemConfig::new("bcr4bp").build().unwrap();
        let systems: [&dyn StarkZeeman; 3] = [&Kepler, &RotatingKepler, &bc];
        for sys in systems {
            let g = action_gradient(sys, &base).unwrap().gradient.unwrap();
            let h = 1e-6;
            let fd = (action_value(sys, &axpy(h, &xi, &base)).unwrap().value
                - action_value(sys, &axpy(-h, &xi, &base)).unwrap().value)
                / (2.0 * h);
            let an = inner(&g, &xi);
            assert!(
                (fd - an).abs() < 1e-6 * an.abs().max(1.0),
                "{}: {fd} vs {an}",
                sys.name()
            );
        }
    }

    #[test]
    fn gradient_terms_eps2_pointwise() {
        let bc = SystemConfig::new("bcr4bp").build().unwrap();
        let z = perturb(&circle(0.3, 16), 0.02, 1);
        let terms = gradient_terms(&bc, &z).unwrap();
        let pb = pullback(&bc, &z).unwrap();
        for k in 0..z.len() {
            let g = bc.electric_grad(pb.t[k], &pb.q[k]);
            let e = Quaternion::I * z.samples[k] * Quaternion::pure(g) * -pb.rho[k];
            for c in 0..4 {
                assert!((e[c] - terms.eps2.samples[k][c]).abs() < 1e-14);
            }
        }
        // N is symmetric for an antisymmetric B
        let m = terms.n_matrix[3];
        for r in 0..4 {
            for c in 0..4 {
                assert!((m[r][c] + m[c][r]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let z = perturb(&circle(0.5, 32), 0.1, 9);
        let xi = perturb(&scale(0.0, &z), 1.0, 10);
        let (_, g) = penalty(&z);
        let h = 1e-6;
        let fd = (penalty(&axpy(h, &xi, &z)).0 - penalty(&axpy(-h, &xi, &z)).0) / (2.0 * h);
        assert!((fd - inner(&g, &xi)).abs() < 1e-7 * fd.abs().max(1.0));
    }

    #[test]
    fn kepler_minimization() {
        let seed = perturb(&circle(1.2 * r_star(), 64), 0.01 * 1.2 * r_star(), 5);
        let cp = find_critical_point(&Kepler, &seed, &SolverOptions::default()).unwrap();
        assert!(cp.converged, "gradient {}", cp.gradient_norm());
        let a = (4.0 * PI * PI).powf(-1.0 / 3.0);
        assert!((cp.report.norm_sqr - a).abs() < 1e-6);
        assert!((cp.report.value - 1.5 * (4.0 * PI * PI).powf(1.0 / 3.0)).abs() < 1e-6);
    }

    #[test]
    fn segment_passes_verification() {
        let a = (2.0 * (16.0 * PI * PI).powf(-1.0 / 3.0)).sqrt();
        let z = seed_loop(&format!("segment:a={a}"), 128).unwrap();
        let cp = CriticalPoint::evaluate(&Kepler, &z, 1e-8).unwrap();
        assert!(cp.converged, "{}", cp.gradient_norm());
        let v = verify_generalized_solution(&Kepler, &cp, 1e-4).unwrap();
        assert_eq!(v.zeros.len(), 2);
        assert!(v.passed, "{:#?}", v.checks);
    }

    #[test]
    fn legendre_at_critical_circle() {
        let z = circle(r_star(), 64);
        let l = legendre_transform(&Kepler, &z).unwrap();
        assert!(l.residual < 1e-9, "{}", l.residual);
        assert!(l.identity_gap.abs() < 1e-12);
        let n = norm_sqr(&z);
        let zp = z.derivative();
        for k in 0..z.len() {
            for c in 0..4 {
                assert!((l.w.samples[k][c] - 4.0 * n * zp.samples[k][c]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn legendre_gap_matches_correction() {
        let z = perturb(&circle(0.4, 32), 0.05, 2);
        let w = perturb(&z, 0.3, 8);
        let h = hamiltonian_action(&RotatingKepler, &z, &w).unwrap();
        let c = action_gap(&RotatingKepler, &z, &w).unwrap();
        assert!(
            (h.identity_gap - c).abs() < 1e-10,
            "{} vs {c}",
            h.identity_gap
        );
    }

    #[test]
    fn seed_parsing() {
        assert!(seed_loop("circle:R=0.3,plane=1j", 16).is_ok());
        assert!(matches!(
            seed_loop("circle:plane=1j", 16),
            Err(Error::Config(_))
        ));
        assert!(matches!(seed_loop("spiral:R=1", 16), Err(Error::Config(_))));
        let z = seed_loop("circle:R=1,plane=1k", 8).unwrap();
        let q = ks_map_vec(&z.samples[1]);
        // e^{k pi tau} winds clockwise in the q1 q2 plane
        assert!(q.y < 0.0 && q.z.abs() < 1e-15);
    }
}
