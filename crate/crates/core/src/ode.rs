//! Dormand-Prince 5(4) with its fourth-order continuous extension.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N]) -> [f64; N];

    /// Called on every accepted state, e.g. to return to a constraint set.
    fn project(&self, _y: &mut [f64; N]) {}

    /// Stop after an accepted step when this returns true.
    fn stop(&self, _t: f64, _y: &[f64; N]) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    pub h_max: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-10,
            max_steps: 2_000_000,
            h0: None,
            h_max: f64::INFINITY,
        }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions {
            rtol: tol,
            atol: tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct DenseSegment<const N: usize> {
    t0: f64,
    h: f64,
    r: [[f64; N]; 5],
}

impl<const N: usize> DenseSegment<N> {
    pub fn eval(&self, t: f64) -> [f64; N] {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let r = &self.r;
        std::array::from_fn(|i| {
            r[0][i] + s * (r[1][i] + s1 * (r[2][i] + s * (r[3][i] + s1 * r[4][i])))
        })
    }

    fn contains(&self, t: f64) -> bool {
        let s = (t - self.t0) / self.h;
        (-1e-12..=1.0 + 1e-12).contains(&s)
    }
}

#[derive(Debug, Clone)]
pub struct OdeSolution<const N: usize> {
    pub t: Vec<f64>,
    pub y: Vec<[f64; N]>,
    pub stats: OdeStats,
    /// True when [`OdeSystem::stop`] ended the integration early.
    pub stopped: bool,
    pub dense: Vec<DenseSegment<N>>,
}

impl<const N: usize> OdeSolution<N> {
    /// Interpolated state; `None` outside the integrated interval.
    pub fn sample(&self, t: f64) -> Option<[f64; N]> {
        if self.dense.is_empty() {
            return (self.t.first() == Some(&t)).then(|| self.y[0]);
        }
        let forward = self.dense[0].h > 0.0;
        let k = self.dense.partition_point(|d| {
            if forward {
                d.t0 + d.h < t
            } else {
                d.t0 + d.h > t
            }
        });
        let k = k.min(self.dense.len() - 1);
        let seg = &self.dense[k];
        seg.contains(t).then(|| seg.eval(t))
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

fn err_norm<const N: usize>(y0: &[f64; N], y1: &[f64; N], e: &[f64; N], o: &OdeOptions) -> f64 {
    let s: f64 = (0..N)
        .map(|i| {
            let sc = o.atol + o.rtol * y0[i].abs().max(y1[i].abs());
            (e[i] / sc).powi(2)
        })
        .sum();
    (s / N as f64).sqrt()
}

fn initial_step<const N: usize, S: OdeSystem<N>>(
    sys: &S,
    t0: f64,
    y0: &[f64; N],
    f0: &[f64; N],
    dir: f64,
    o: &OdeOptions,
) -> f64 {
    let sc: [f64; N] = std::array::from_fn(|i| o.atol + o.rtol * y0[i].abs());
    let rms =
        |v: &[f64; N]| ((0..N).map(|i| (v[i] / sc[i]).powi(2)).sum::<f64>() / N as f64).sqrt();
    let d0 = rms(y0);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let y1: [f64; N] = std::array::from_fn(|i| y0[i] + dir * h0 * f0[i]);
    let f1 = sys.rhs(t0 + dir * h0, &y1);
    let df: [f64; N] = std::array::from_fn(|i| f1[i] - f0[i]);
    let d2 = rms(&df) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(o.h_max)
}

/// Integrate from `t0` to `t1` (either direction).
pub fn integrate<const N: usize, S: OdeSystem<N>>(
    sys: &S,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    o: &OdeOptions,
) -> Result<OdeSolution<N>> {
    if !(o.rtol > 0.0 && o.atol > 0.0) {
        return Err(Error::Config("tolerances must be positive".into()));
    }
    let mut sol = OdeSolution {
        t: vec![t0],
        y: vec![y0],
        stats: OdeStats::default(),
        stopped: false,
        dense: Vec::new(),
    };
    if t1 == t0 {
        return Ok(sol);
    }
    let dir = (t1 - t0).signum();
    let mut t = t0;
    let mut y = y0;
    let mut k0 = sys.rhs(t, &y);
    sol.stats.evaluations += 1;
    let mut h = match o.h0 {
        Some(h) => h.abs(),
        None => {
            sol.stats.evaluations += 1;
            initial_step(sys, t, &y, &k0, dir, o)
        }
    };
    let mut k = [[0.0; N]; 7];
    let mut last_rejected = false;
    while dir * (t1 - t) > 0.0 {
        if sol.stats.accepted + sol.stats.rejected >= o.max_steps {
            return Err(Error::Integration {
                t,
                reason: format!("step limit {} reached; state {:?}", o.max_steps, y),
            });
        }
        let mut last = false;
        if h >= (t1 - t).abs() {
            h = (t1 - t).abs();
            last = true;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::Integration {
                t,
                reason: format!("step size underflow (h = {h:.3e}); state {:?}", y),
            });
        }
        let hs = dir * h;
        k[0] = k0;
        for s in 1..7 {
            let ys: [f64; N] =
                std::array::from_fn(|i| y[i] + hs * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>());
            k[s] = sys.rhs(t + C[s] * hs, &ys);
        }
        sol.stats.evaluations += 6;
        let y1: [f64; N] =
            std::array::from_fn(|i| y[i] + hs * (0..6).map(|j| A[6][j] * k[j][i]).sum::<f64>());
        let e: [f64; N] = std::array::from_fn(|i| hs * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>());
        let err = err_norm(&y, &y1, &e, o);
        if !err.is_finite() {
            sol.stats.rejected += 1;
            h *= 0.2;
            last_rejected = true;
            continue;
        }
        if err <= 1.0 {
            let ydiff: [f64; N] = std::array::from_fn(|i| y1[i] - y[i]);
            let bspl: [f64; N] = std::array::from_fn(|i| hs * k[0][i] - ydiff[i]);
            let r = [
                y,
                ydiff,
                bspl,
                std::array::from_fn(|i| ydiff[i] - hs * k[6][i] - bspl[i]),
                std::array::from_fn(|i| hs * (0..7).map(|j| D[j] * k[j][i]).sum::<f64>()),
            ];
            sol.dense.push(DenseSegment { t0: t, h: hs, r });
            t = if last { t1 } else { t + hs };
            y = y1;
            k0 = k[6];
            let before = y;
            sys.project(&mut y);
            if before != y {
                k0 = sys.rhs(t, &y);
                sol.stats.evaluations += 1;
            }
            sol.stats.accepted += 1;
            sol.t.push(t);
            sol.y.push(y);
            if sys.stop(t, &y) {
                sol.stopped = true;
                return Ok(sol);
            }
            let mut fac = 0.9 * err.max(1e-10).powf(-0.2);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h = (h * fac.clamp(0.2, 10.0)).min(o.h_max);
            last_rejected = false;
        } else {
            sol.stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).max(0.2);
            last_rejected = true;
        }
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Osc;
    impl OdeSystem<2> for Osc {
        fn rhs(&self, _: f64, y: &[f64; 2]) -> [f64; 2] {
            [y[1], -y[0]]
        }
    }

    #[test]
    fn harmonic_oscillator() {
        let o = OdeOptions::with_tol(1e-12);
        let s = integrate(&Osc, 0.0, [1.0, 0.0], 10.0, &o).unwrap();
        let y = s.y.last().unwrap();
        assert!((y[0] - 10f64.cos()).abs() < 1e-9);
        for t in [0.3, 4.4, 9.99] {
            let v = s.sample(t).unwrap();
            assert!((v[0] - t.cos()).abs() < 1e-9, "{t}");
        }
        assert!(s.sample(11.0).is_none());
        let b = integrate(&Osc, 10.0, *y, 0.0, &o).unwrap();
        assert!((b.y.last().unwrap()[0] - 1.0).abs() < 1e-9);
        assert!(b.sample(5.0).is_some());
    }

    #[test]
    fn fifth_order_convergence() {
        let err = |tol: f64| {
            let s = integrate(&Osc, 0.0, [1.0, 0.0], 5.0, &OdeOptions::with_tol(tol)).unwrap();
            (
                (s.y.last().unwrap()[0] - 5f64.cos()).abs(),
                s.stats.accepted,
            )
        };
        let (e1, n1) = err(1e-6);
        let (e2, n2) = err(1e-10);
        assert!(e2 < e1 && n2 > n1);
    }
}
