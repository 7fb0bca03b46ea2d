//! Uniformly sampled loops `tau_k = k / N` on the unit circle.

use serde::{Deserialize, Serialize};

use crate::quat::{Quaternion, Vec3};
use crate::spectral::{self, Boundary, Interpolant};

/// Values a loop can carry, viewed as `DIM` real components.
pub trait Sample: Copy + Default {
    const DIM: usize;
    fn get(&self, c: usize) -> f64;
    fn set(&mut self, c: usize, v: f64);
}

impl Sample for f64 {
    const DIM: usize = 1;
    fn get(&self, _: usize) -> f64 {
        *self
    }
    fn set(&mut self, _: usize, v: f64) {
        *self = v;
    }
}

impl Sample for Quaternion {
    const DIM: usize = 4;
    fn get(&self, c: usize) -> f64 {
        self.0[c]
    }
    fn set(&mut self, c: usize, v: f64) {
        self.0[c] = v;
    }
}

impl Sample for Vec3 {
    const DIM: usize = 3;
    fn get(&self, c: usize) -> f64 {
        self[c]
    }
    fn set(&mut self, c: usize, v: f64) {
        self[c] = v;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loop<T> {
    pub samples: Vec<T>,
    pub boundary: Boundary,
}

pub type QuatLoop = Loop<Quaternion>;
pub type VecLoop = Loop<Vec3>;

impl<T: Sample> Loop<T> {
    pub fn new(samples: Vec<T>, boundary: Boundary) -> Self {
        Loop { samples, boundary }
    }

    pub fn periodic(samples: Vec<T>) -> Self {
        Self::new(samples, Boundary::Periodic)
    }

    pub fn from_fn(n: usize, boundary: Boundary, mut f: impl FnMut(f64) -> T) -> Self {
        Self::new((0..n).map(|k| f(k as f64 / n as f64)).collect(), boundary)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn tau(&self, k: usize) -> f64 {
        k as f64 / self.len() as f64
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.get(c)).collect()
    }

    pub fn from_components(cols: &[Vec<f64>], boundary: Boundary) -> Self {
        let n = cols.first().map_or(0, |c| c.len());
        let mut samples = vec![T::default(); n];
        for (c, col) in cols.iter().enumerate() {
            for (s, v) in samples.iter_mut().zip(col) {
                s.set(c, *v);
            }
        }
        Self::new(samples, boundary)
    }

    fn map_components(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let cols: Vec<Vec<f64>> = (0..T::DIM).map(|c| f(&self.component(c))).collect();
        Self::from_components(&cols, self.boundary)
    }

    pub fn derivative(&self) -> Self {
        let b = self.boundary;
        self.map_components(|f| spectral::derivative(f, b))
    }

    pub fn second_derivative(&self) -> Self {
        let b = self.boundary;
        self.map_components(|f| spectral::second_derivative(f, b))
    }

    pub fn map<U: Sample>(&self, boundary: Boundary, f: impl Fn(&T) -> U) -> Loop<U> {
        Loop::new(self.samples.iter().map(f).collect(), boundary)
    }

    pub fn interpolant(&self) -> LoopInterpolant<T> {
        LoopInterpolant {
            parts: (0..T::DIM)
                .map(|c| Interpolant::new(&self.component(c), self.boundary))
                .collect(),
            _marker: std::marker::PhantomData,
        }
    }

    /// Resample on a finer or coarser uniform grid through the interpolant.
    pub fn resample(&self, n: usize) -> Self {
        let it = self.interpolant();
        Self::from_fn(n, self.boundary, |t| it.eval(t))
    }

    pub fn is_finite(&self) -> bool {
        self.samples
            .iter()
            .all(|s| (0..T::DIM).all(|c| s.get(c).is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.samples
            .iter()
            .flat_map(|s| (0..T::DIM).map(move |c| s.get(c).abs()))
            .fold(0.0, f64::max)
    }
}

/// Trapezoid mean of a periodic scalar series, i.e. its integral over one period.
pub fn mean(f: &[f64]) -> f64 {
    f.iter().sum::<f64>() / f.len() as f64
}

/// Discrete `L^2` product `(1/N) sum_k <a_k, b_k>`.
pub fn inner<T: Sample>(a: &Loop<T>, b: &Loop<T>) -> f64 {
    let s: f64 = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(x, y)| (0..T::DIM).map(|c| x.get(c) * y.get(c)).sum::<f64>())
        .sum();
    s / a.len() as f64
}

pub fn norm_sqr<T: Sample>(a: &Loop<T>) -> f64 {
    inner(a, a)
}

pub fn axpy<T: Sample>(alpha: f64, x: &Loop<T>, y: &Loop<T>) -> Loop<T> {
    let samples = x
        .samples
        .iter()
        .zip(&y.samples)
        .map(|(a, b)| {
            let mut r = T::default();
            for c in 0..T::DIM {
                r.set(c, alpha * a.get(c) + b.get(c));
            }
            r
        })
        .collect();
    Loop::new(samples, y.boundary)
}

pub fn scale<T: Sample>(alpha: f64, x: &Loop<T>) -> Loop<T> {
    let samples = x
        .samples
        .iter()
        .map(|a| {
            let mut r = T::default();
            for c in 0..T::DIM {
                r.set(c, alpha * a.get(c));
            }
            r
        })
        .collect();
    Loop::new(samples, x.boundary)
}

#[derive(Debug, Clone)]
pub struct LoopInterpolant<T> {
    parts: Vec<Interpolant>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Sample> LoopInterpolant<T> {
    pub fn eval(&self, tau: f64) -> T {
        let mut r = T::default();
        for (c, p) in self.parts.iter().enumerate() {
            r.set(c, p.eval(tau));
        }
        r
    }

    pub fn eval_derivative(&self, tau: f64) -> T {
        let mut r = T::default();
        for (c, p) in self.parts.iter().enumerate() {
            r.set(c, p.eval_derivative(tau));
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn kepler_circle_derivatives() {
        let r = 0.5;
        let z = QuatLoop::from_fn(16, Boundary::AntiPeriodic, |t| {
            Quaternion::exp_pure(Vec3::new(0.0, 1.0, 0.0), PI * t) * r
        });
        let zpp = z.second_derivative();
        for (a, b) in zpp.samples.iter().zip(&z.samples) {
            assert!((*a + *b * (PI * PI)).norm() < 1e-11);
        }
        assert!((norm_sqr(&z) - r * r).abs() < 1e-15);
        assert!((norm_sqr(&z.derivative()) - PI * PI * r * r).abs() < 1e-12);
    }

    #[test]
    fn resample_roundtrip() {
        let z = VecLoop::from_fn(12, Boundary::Periodic, |t| {
            Vec3::new((2.0 * PI * t).cos(), (2.0 * PI * t).sin(), 0.1)
        });
        let up = z.resample(48).resample(12);
        for (a, b) in up.samples.iter().zip(&z.samples) {
            assert!((a - b).norm() < 1e-13);
        }
    }
}
