//! Fourier operators on uniformly sampled real series over one period.
//!
//! Periodic series use integer wavenumbers. Anti-periodic series
//! (`f(t + 1) = -f(t)`) use half-integer ones, so their spectrum has no
//! Nyquist bin. All operators act on samples at `tau_k = k / N`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    #[default]
    Periodic,
    AntiPeriodic,
}

impl Boundary {
    /// Sign picked up after one period.
    pub fn sign(self) -> f64 {
        match self {
            Boundary::Periodic => 1.0,
            Boundary::AntiPeriodic => -1.0,
        }
    }

    fn shift(self) -> f64 {
        match self {
            Boundary::Periodic => 0.0,
            Boundary::AntiPeriodic => 0.5,
        }
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n), p.plan_fft_inverse(n))
    })
}

/// Signed wavenumber of FFT bin `m`, before the boundary shift.
fn wavenumber(m: usize, n: usize) -> f64 {
    if 2 * m < n {
        m as f64
    } else {
        m as f64 - n as f64
    }
}

fn is_nyquist(m: usize, n: usize, boundary: Boundary) -> bool {
    boundary == Boundary::Periodic && n % 2 == 0 && 2 * m == n
}

/// Fourier coefficients `c_m` with `f(tau_k) = sum_m c_m e^{2 pi i nu_m tau_k}`,
/// `nu_m = wavenumber(m) + shift`.
pub fn coefficients(f: &[f64], boundary: Boundary) -> Vec<Complex64> {
    let n = f.len();
    let (fwd, _) = plans(n);
    let s = boundary.shift();
    let mut buf: Vec<Complex64> = f
        .iter()
        .enumerate()
        .map(|(k, &x)| Complex64::from_polar(x, -2.0 * PI * s * k as f64 / n as f64))
        .collect();
    fwd.process(&mut buf);
    let inv_n = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= inv_n);
    buf
}

/// Apply the Fourier multiplier `mult(nu)` and return the real samples.
///
/// At the Nyquist bin of an even periodic series only the real part of the
/// multiplier is kept, which zeroes odd operators there.
pub fn multiply<F: Fn(f64) -> Complex64>(f: &[f64], boundary: Boundary, mult: F) -> Vec<f64> {
    let n = f.len();
    if n == 0 {
        return Vec::new();
    }
    let (_, inv) = plans(n);
    let s = boundary.shift();
    let mut c = coefficients(f, boundary);
    for (m, cm) in c.iter_mut().enumerate() {
        let nu = wavenumber(m, n) + s;
        let mut k = mult(nu);
        if is_nyquist(m, n, boundary) {
            k = Complex64::new(k.re, 0.0);
        }
        *cm *= k;
    }
    inv.process(&mut c);
    c.iter()
        .enumerate()
        .map(|(k, v)| (v * Complex64::from_polar(1.0, 2.0 * PI * s * k as f64 / n as f64)).re)
        .collect()
}

pub fn derivative(f: &[f64], boundary: Boundary) -> Vec<f64> {
    multiply(f, boundary, |nu| Complex64::new(0.0, 2.0 * PI * nu))
}

/// Square of [`derivative`]; it annihilates the Nyquist mode.
pub fn second_derivative(f: &[f64], boundary: Boundary) -> Vec<f64> {
    derivative(&derivative(f, boundary), boundary)
}

/// The periodic part `Q` of the antiderivative, antisymmetric as a matrix.
fn periodic_primitive(f: &[f64]) -> Vec<f64> {
    multiply(f, Boundary::Periodic, |nu| {
        if nu == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, -1.0 / (2.0 * PI * nu))
        }
    })
}

/// `F(tau_k) = int_0^{tau_k} f` for a periodic integrand.
pub fn antiderivative(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = f.iter().sum::<f64>() / n as f64;
    let q = periodic_primitive(f);
    let q0 = q[0];
    q.iter()
        .enumerate()
        .map(|(k, v)| mean * k as f64 / n as f64 + v - q0)
        .collect()
}

/// Transpose of the matrix of [`antiderivative`].
pub fn antiderivative_adjoint(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    if n == 0 {
        return Vec::new();
    }
    let tau_y: f64 = y.iter().enumerate().map(|(k, v)| k as f64 * v).sum::<f64>() / (n * n) as f64;
    let total: f64 = y.iter().sum();
    let mut r = y.to_vec();
    r[0] -= total;
    periodic_primitive(&r).iter().map(|v| tau_y - v).collect()
}

/// Trigonometric interpolant of a real series.
#[derive(Debug, Clone)]
pub struct Interpolant {
    coeffs: Vec<Complex64>,
    boundary: Boundary,
}

impl Interpolant {
    pub fn new(f: &[f64], boundary: Boundary) -> Self {
        Interpolant {
            coeffs: coefficients(f, boundary),
            boundary,
        }
    }

    fn sum(&self, tau: f64, order: u32) -> f64 {
        let n = self.coeffs.len();
        let s = self.boundary.shift();
        let mut acc = 0.0;
        for (m, c) in self.coeffs.iter().enumerate() {
            let nu = wavenumber(m, n) + s;
            let w = 2.0 * PI * nu;
            let e = Complex64::from_polar(1.0, w * tau);
            let d = Complex64::new(0.0, w).powu(order);
            let mut term = (c * d * e).re;
            if is_nyquist(m, n, self.boundary) {
                // split the Nyquist bin as a real cosine
                term = if order % 2 == 0 {
                    c.re * d.re * (w * tau).cos()
                } else {
                    0.0
                };
            }
            acc += term;
        }
        acc
    }

    pub fn eval(&self, tau: f64) -> f64 {
        self.sum(tau, 0)
    }

    pub fn eval_derivative(&self, tau: f64) -> f64 {
        self.sum(tau, 1)
    }
}
