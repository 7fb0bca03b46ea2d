//! Time reparametrizations between KS loops `z(tau)` and physical loops `q(t)`.
//!
//! `t_z(tau) = (1/||z||^2) int_0^tau |z|^2` turns a `z`-loop into a physical
//! loop, and `tau_q(t)` (proportional to `int_0^t 1/|q|`) goes back.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ksgeom::{fiber_align_angle, fiber_rotate, ks_map_vec, ks_section};
use crate::loops::{mean, QuatLoop, VecLoop};
use crate::quat::{Quaternion, Vec3};
use crate::spectral::{self, Boundary, Interpolant};

/// Increasing homeomorphism of `[0, 1]` sampled at `k / N`, `k = 0..=N`.
#[derive(Debug, Clone)]
pub struct MonotoneCircleMap {
    values: Vec<f64>,
    slopes: Vec<f64>,
    /// Periodic part `f(tau) - tau` when the map is known spectrally.
    periodic: Option<Interpolant>,
}

impl MonotoneCircleMap {
    /// Build from node values; they must start at 0, end at 1 and not decrease.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Degenerate("need at least two nodes".into()));
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Numerical("map is not monotone".into()));
        }
        let slopes = fritsch_carlson(&values);
        Ok(MonotoneCircleMap {
            values,
            slopes,
            periodic: None,
        })
    }

    fn with_periodic(values: Vec<f64>, periodic: Interpolant) -> Result<Self> {
        let mut m = Self::from_values(values)?;
        m.periodic = Some(periodic);
        Ok(m)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nodes(&self) -> usize {
        self.values.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        if let Some(p) = &self.periodic {
            return x + p.eval(x);
        }
        let (k, s) = self.locate(x);
        let h = 1.0 / self.nodes() as f64;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * m1
    }

    pub fn eval_derivative(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        if let Some(p) = &self.periodic {
            return 1.0 + p.eval_derivative(x);
        }
        let (k, s) = self.locate(x);
        let h = 1.0 / self.nodes() as f64;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let s2 = s * s;
        ((6.0 * s2 - 6.0 * s) * y0
            + (3.0 * s2 - 4.0 * s + 1.0) * m0
            + (-6.0 * s2 + 6.0 * s) * y1
            + (3.0 * s2 - 2.0 * s) * m1)
            / h
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.nodes();
        let k = ((x * n as f64).floor() as usize).min(n - 1);
        (k, x * n as f64 - k as f64)
    }

    /// Solve `f(x) = y` by safeguarded Newton iteration inside a bracketing cell.
    pub fn inverse(&self, y: f64) -> f64 {
        let y = y.clamp(0.0, 1.0);
        let n = self.nodes();
        let k = self.values.partition_point(|v| *v <= y).clamp(1, n) - 1;
        let (mut lo, mut hi) = (k as f64 / n as f64, (k + 1) as f64 / n as f64);
        // the spectral form is only approximately equal to the node values
        if self.periodic.is_some() {
            lo = (lo - 1.0 / n as f64).max(0.0);
            hi = (hi + 1.0 / n as f64).min(1.0);
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..100 {
            let r = self.eval(x) - y;
            if r.abs() <= 1e-15 {
                break;
            }
            if r > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.eval_derivative(x);
            let step = if d > 0.0 { x - r / d } else { f64::NAN };
            x = if step > lo && step < hi {
                step
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < 1e-16 {
                break;
            }
        }
        x
    }

    /// Node values of the inverse map on an `n`-cell grid.
    pub fn inverse_map(&self, n: usize) -> Result<MonotoneCircleMap> {
        let mut v: Vec<f64> = (0..=n).map(|k| self.inverse(k as f64 / n as f64)).collect();
        v[0] = 0.0;
        v[n] = 1.0;
        MonotoneCircleMap::from_values(v)
    }
}

fn fritsch_carlson(y: &[f64]) -> Vec<f64> {
    let n = y.len() - 1;
    let h = 1.0 / n as f64;
    let d: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    let mut m = vec![0.0; n + 1];
    m[0] = d[0];
    m[n] = d[n - 1];
    for k in 1..n {
        m[k] = if d[k - 1] * d[k] <= 0.0 {
            0.0
        } else {
            0.5 * (d[k - 1] + d[k])
        };
    }
    for k in 0..n {
        if d[k] == 0.0 {
            m[k] = 0.0;
            m[k + 1] = 0.0;
            continue;
        }
        let a = m[k] / d[k];
        let b = m[k + 1] / d[k];
        let s = a * a + b * b;
        if s > 9.0 {
            let t = 3.0 / s.sqrt();
            m[k] = t * a * d[k];
            m[k + 1] = t * b * d[k];
        }
    }
    m
}

/// `t_z`, computed with a spectral antiderivative of `|z|^2 / ||z||^2`.
pub fn time_from_param(z: &QuatLoop) -> Result<MonotoneCircleMap> {
    let rho: Vec<f64> = z.samples.iter().map(|s| s.norm_sqr()).collect();
    let nrm = mean(&rho);
    if !(nrm > 0.0) || !nrm.is_finite() {
        return Err(Error::Degenerate("loop has zero L2 norm".into()));
    }
    let cum = spectral::antiderivative(&rho);
    let n = z.len();
    let g: Vec<f64> = cum
        .iter()
        .enumerate()
        .map(|(k, c)| c / nrm - k as f64 / n as f64)
        .collect();
    let mut values: Vec<f64> = g
        .iter()
        .enumerate()
        .map(|(k, v)| k as f64 / n as f64 + v)
        .collect();
    values.push(1.0);
    values[0] = 0.0;
    // spectral ringing can make tiny negative steps near zeros of z
    for k in 1..values.len() {
        if values[k] < values[k - 1] {
            values[k] = values[k - 1];
        }
    }
    MonotoneCircleMap::with_periodic(values, Interpolant::new(&g, Boundary::Periodic))
}

/// `tau_q`, normalised so that `tau_q(1) = 1`.
///
/// A smooth loop bounded away from the origin is integrated spectrally.
/// Otherwise each cell uses the rule exact for `|q| ~ |t - t*|^{2/3}`, the
/// collision asymptotics.
pub fn param_from_time(q: &VecLoop) -> Result<MonotoneCircleMap> {
    let r: Vec<f64> = q.samples.iter().map(|v| v.norm()).collect();
    let rmax = r.iter().cloned().fold(0.0, f64::max);
    if !(rmax > 0.0) || !rmax.is_finite() {
        return Err(Error::Degenerate("loop sits at the origin".into()));
    }
    let n = q.len();
    let rmin = r.iter().cloned().fold(f64::INFINITY, f64::min);
    if rmin > 1e-3 * rmax {
        let dens: Vec<f64> = r.iter().map(|x| 1.0 / x).collect();
        let tot = mean(&dens);
        let cum = spectral::antiderivative(&dens);
        let g: Vec<f64> = cum
            .iter()
            .enumerate()
            .map(|(k, c)| c / tot - k as f64 / n as f64)
            .collect();
        let mut values: Vec<f64> = g
            .iter()
            .enumerate()
            .map(|(k, v)| k as f64 / n as f64 + v)
            .collect();
        values.push(1.0);
        values[0] = 0.0;
        return MonotoneCircleMap::with_periodic(values, Interpolant::new(&g, Boundary::Periodic));
    }
    let h = 1.0 / n as f64;
    let tiny = 1e-14 * rmax;
    let mut cells = Vec::with_capacity(n);
    for k in 0..n {
        let (a, b) = (r[k], r[(k + 1) % n]);
        if a <= tiny && b <= tiny {
            return Err(Error::Domain(format!(
                "1/|q| is not integrable: q vanishes on [{}, {}]",
                k as f64 * h,
                (k + 1) as f64 * h
            )));
        }
        let (sa, sb) = (a.powf(1.5), b.powf(1.5));
        let c = if (sb - sa).abs() <= 1e-12 * sa.max(sb) {
            h / (0.5 * (a + b))
        } else {
            3.0 * h * (sb.cbrt() - sa.cbrt()) / (sb - sa)
        };
        cells.push(c);
    }
    let total: f64 = cells.iter().sum();
    let mut values = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    values.push(0.0);
    for c in &cells {
        acc += c;
        values.push(acc / total);
    }
    values[n] = 1.0;
    MonotoneCircleMap::from_values(values)
}

/// Physical loop `q_z(t) = Phi(z(tau_z(t)))` on the uniform `t` grid.
pub fn reconstruct_q(z: &QuatLoop) -> Result<VecLoop> {
    let tz = time_from_param(z)?;
    let it = z.interpolant();
    Ok(VecLoop::from_fn(z.len(), Boundary::Periodic, |t| {
        ks_map_vec(&it.eval(tz.inverse(t)))
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiftedLoop {
    pub z: QuatLoop,
    /// Fiber angle accumulated around the loop before the boundary fix.
    pub holonomy: f64,
    /// Sample indices right after a zero where the phase jumped by more than 0.1 rad.
    pub phase_jumps: Vec<usize>,
}

/// Lift a physical loop to a KS loop with `t_z = t_q`.
///
/// Fiber phases are transported sample to sample and the closing holonomy
/// decides between a periodic and an anti-periodic lift.
pub fn lift_loop(q: &VecLoop) -> Result<LiftedLoop> {
    let n = q.len();
    if n < 4 {
        return Err(Error::Degenerate("need at least 4 samples".into()));
    }
    let tq = param_from_time(q)?;
    let qi = q.interpolant();
    let rmax = q.samples.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let tiny = 1e-14 * rmax;
    let raw: Vec<Vec3> = (0..=n)
        .map(|k| qi.eval(tq.inverse(k as f64 / n as f64)))
        .collect();

    let mut z: Vec<Quaternion> = Vec::with_capacity(n + 1);
    let mut jumps = Vec::new();
    let zscale = rmax.sqrt();
    for (k, qk) in raw.iter().enumerate() {
        if qk.norm() <= tiny {
            z.push(Quaternion::ZERO);
            continue;
        }
        let s = ks_section(qk)?;
        if k == 0 {
            z.push(s);
            continue;
        }
        let prev = z[k - 1];
        let pred = if k >= 2 { prev * 2.0 - z[k - 2] } else { prev };
        let after_zero = prev.norm() <= 1e-8 * zscale;
        let anchor = if after_zero { pred } else { prev };
        let mut c = fiber_rotate(&s, fiber_align_angle(&s, &anchor));
        let flipped = c.dot(&pred) < 0.0;
        if flipped {
            c = -c;
        }
        if after_zero || flipped {
            let cos = c.dot(&pred) / (c.norm() * pred.norm()).max(f64::MIN_POSITIVE);
            if cos.clamp(-1.0, 1.0).acos() > 0.1 {
                jumps.push(k);
            }
        }
        z.push(c);
    }
    let (z0, zn) = (z[0], z[n]);
    let phi = fiber_align_angle(&z0, &zn);
    let (boundary, alpha) = if phi.abs() > std::f64::consts::FRAC_PI_2 {
        let a = phi - std::f64::consts::PI * phi.signum();
        (Boundary::AntiPeriodic, a)
    } else {
        (Boundary::Periodic, phi)
    };
    z.truncate(n);
    let samples = z
        .iter()
        .enumerate()
        .map(|(k, s)| fiber_rotate(s, -alpha * k as f64 / n as f64))
        .collect();
    Ok(LiftedLoop {
        z: QuatLoop::new(samples, boundary),
        holonomy: phi,
        phase_jumps: jumps,
    })
}

/// Samples of `Phi(z(tau_k))` on the `tau` grid (not uniform in time).
pub fn q_in_param(z: &QuatLoop) -> VecLoop {
    z.map(Boundary::Periodic, ks_map_vec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn time_map_of_one_minus_cos() {
        // |z|^2 = 1 - cos(2 pi tau) with z = sqrt(2) sin(pi tau)
        let z = QuatLoop::from_fn(64, Boundary::AntiPeriodic, |t| {
            Quaternion::ONE * (2f64.sqrt() * (PI * t).sin())
        });
        let tz = time_from_param(&z).unwrap();
        for x in [0.0, 0.1, 0.25, 0.5, 0.93, 1.0] {
            let e = x - (2.0 * PI * x).sin() / (2.0 * PI);
            assert!((tz.eval(x) - e).abs() < 1e-13, "{x}");
        }
        let t = tz.eval(0.3);
        assert!((tz.inverse(t) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn monotone_cubic_inverse() {
        let n = 64;
        let v: Vec<f64> = (0..=n)
            .map(|k| {
                let x = k as f64 / n as f64;
                x - (2.0 * PI * x).sin() / (4.0 * PI)
            })
            .collect();
        let m = MonotoneCircleMap::from_values(v).unwrap();
        for x in [0.05, 0.5, 0.77] {
            let y = m.eval(x);
            assert!((m.inverse(y) - x).abs() < 1e-12);
            let e = x - (2.0 * PI * x).sin() / (4.0 * PI);
            assert!((y - e).abs() < 10.0 / (n * n) as f64);
        }
        assert!(MonotoneCircleMap::from_values(vec![0.0, 0.6, 0.5, 1.0]).is_err());
    }

    #[test]
    fn non_integrable_rejected() {
        let q = VecLoop::from_fn(16, Boundary::Periodic, |t| {
            if t < 0.3 {
                Vec3::zeros()
            } else {
                Vec3::new(1.0, 0.0, 0.0)
            }
        });
        assert!(matches!(param_from_time(&q), Err(Error::Domain(_))));
    }
}
