//! Unregularized integration of Stark-Zeeman systems and the energy of
//! generalized solutions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ksgeom::PhasePoint;
use crate::ode::{integrate, OdeOptions, OdeSolution, OdeStats, OdeSystem};
use crate::quat::Vec3;
use crate::systems::{CoupledField, Gauge, StarkZeeman, SystemGauge};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    pub tol: f64,
    /// Stop with a collision flag once `|q| < r_stop`.
    pub r_stop: f64,
    pub max_steps: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            tol: 1e-10,
            r_stop: 1e-4,
            max_steps: 2_000_000,
        }
    }
}

impl FlowOptions {
    pub fn with_tol(tol: f64) -> Self {
        FlowOptions {
            tol,
            ..Default::default()
        }
    }

    fn ode(&self) -> OdeOptions {
        OdeOptions {
            max_steps: self.max_steps,
            ..OdeOptions::with_tol(self.tol)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStats {
    pub steps: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub tol: f64,
    pub collision: bool,
    pub r_stop: f64,
}

impl TrajectoryStats {
    pub(crate) fn new(s: OdeStats, o: &FlowOptions, collision: bool) -> Self {
        TrajectoryStats {
            steps: s.accepted,
            rejected: s.rejected,
            evaluations: s.evaluations,
            tol: o.tol,
            collision,
            r_stop: o.r_stop,
        }
    }
}

/// Integrated orbit. `p` is the velocity in the twisted gauge and the
/// canonical momentum in the coupled one.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhasePoint>,
    /// Hamiltonian value in the gauge of the integration.
    pub energies: Vec<f64>,
    pub gauge: Gauge,
    pub stats: TrajectoryStats,
    solution: OdeSolution<7>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergySeries {
    pub t: Vec<f64>,
    pub values: Vec<f64>,
    pub low_confidence: Vec<bool>,
    pub mean: f64,
    /// Standard deviation over the confident samples.
    pub std: f64,
}

impl EnergySeries {
    fn from_values(t: Vec<f64>, values: Vec<f64>, low_confidence: Vec<bool>) -> Self {
        let good: Vec<f64> = values
            .iter()
            .zip(&low_confidence)
            .filter(|(_, l)| !**l)
            .map(|(v, _)| *v)
            .collect();
        let n = good.len().max(1) as f64;
        let mean = good.iter().sum::<f64>() / n;
        let var = good.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        EnergySeries {
            t,
            values,
            low_confidence,
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    gauge: Gauge,
    t_start: f64,
    t_end: f64,
    samples: usize,
    energy_drift: f64,
    stats: &'a TrajectoryStats,
}

impl Trajectory {
    fn from_solution(
        sol: OdeSolution<7>,
        gauge: Gauge,
        o: &FlowOptions,
        energy: impl Fn(f64, &[f64; 7]) -> f64,
    ) -> Self {
        let states = sol
            .y
            .iter()
            .map(|y| PhasePoint::new(Vec3::new(y[0], y[1], y[2]), Vec3::new(y[3], y[4], y[5])))
            .collect();
        let energies = sol
            .t
            .iter()
            .zip(&sol.y)
            .map(|(t, y)| energy(*t, y))
            .collect();
        Trajectory {
            times: sol.t.clone(),
            states,
            energies,
            gauge,
            stats: TrajectoryStats::new(sol.stats, o, sol.stopped),
            solution: sol,
        }
    }

    pub fn last(&self) -> &PhasePoint {
        self.states
            .last()
            .expect("trajectory has at least the initial state")
    }

    /// Dense-output state at `t`; `None` outside the integrated interval.
    pub fn interpolate(&self, t: f64) -> Option<PhasePoint> {
        self.solution
            .sample(t)
            .map(|y| PhasePoint::new(Vec3::new(y[0], y[1], y[2]), Vec3::new(y[3], y[4], y[5])))
    }

    /// `max |H(t) - H(t0)|`.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energies[0];
        self.energies
            .iter()
            .map(|e| (e - e0).abs())
            .fold(0.0, f64::max)
    }

    /// `E(t) = H(t) + int_t^T dE_s/ds ds`, with the integral carried along
    /// as an extra ODE component. Samples within `10 r_stop` of the origin
    /// are flagged as low confidence.
    pub fn generalized_energy(&self) -> EnergySeries {
        let tail = self.solution.y.last().map_or(0.0, |y| y[6]);
        let values = self
            .energies
            .iter()
            .zip(&self.solution.y)
            .map(|(h, y)| h + tail - y[6])
            .collect();
        let low = self
            .states
            .iter()
            .map(|s| s.q.norm() < 10.0 * self.stats.r_stop)
            .collect();
        EnergySeries::from_values(self.times.clone(), values, low)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "q1", "q2", "q3", "p1", "p2", "p3", "energy"])?;
        for ((t, s), e) in self.times.iter().zip(&self.states).zip(&self.energies) {
            let row = [*t, s.q.x, s.q.y, s.q.z, s.p.x, s.p.y, s.p.z, *e];
            w.write_record(row.iter().map(|v| format!("{v:.17e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        let s = Summary {
            gauge: self.gauge,
            t_start: self.times[0],
            t_end: *self.times.last().unwrap_or(&self.times[0]),
            samples: self.times.len(),
            energy_drift: self.energy_drift(),
            stats: &self.stats,
        };
        Ok(serde_json::to_string_pretty(&s)?)
    }
}

struct Newton<'a, S: ?Sized> {
    sys: &'a S,
    r_stop: f64,
}

impl<S: StarkZeeman + ?Sized> OdeSystem<7> for Newton<'_, S> {
    fn rhs(&self, t: f64, y: &[f64; 7]) -> [f64; 7] {
        let q = Vec3::new(y[0], y[1], y[2]);
        let v = Vec3::new(y[3], y[4], y[5]);
        let a = self.sys.magnetic(&q) * v - self.sys.potential_grad(t, &q);
        [v.x, v.y, v.z, a.x, a.y, a.z, self.sys.electric_tdot(t, &q)]
    }
    fn stop(&self, _: f64, y: &[f64; 7]) -> bool {
        Vec3::new(y[0], y[1], y[2]).norm() < self.r_stop
    }
}

struct Coupled<'a, F: ?Sized> {
    field: &'a F,
    edot: Option<&'a (dyn Fn(f64, &Vec3) -> f64 + Sync)>,
    r_stop: f64,
}

impl<F: CoupledField + ?Sized> OdeSystem<7> for Coupled<'_, F> {
    fn rhs(&self, t: f64, y: &[f64; 7]) -> [f64; 7] {
        let q = Vec3::new(y[0], y[1], y[2]);
        let p = Vec3::new(y[3], y[4], y[5]);
        let k = p - self.field.potential(t, &q);
        let pd =
            self.field.potential_jacobian(t, &q).transpose() * k - self.field.scalar_grad(t, &q);
        let e = self.edot.map_or(0.0, |f| f(t, &q));
        [k.x, k.y, k.z, pd.x, pd.y, pd.z, e]
    }
    fn stop(&self, _: f64, y: &[f64; 7]) -> bool {
        Vec3::new(y[0], y[1], y[2]).norm() < self.r_stop
    }
}

fn check_start<S: StarkZeeman + ?Sized>(sys: &S, q0: &Vec3, o: &FlowOptions) -> Result<()> {
    if !(o.tol > 0.0) {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    if !sys.in_domain(q0) {
        return Err(Error::Domain(format!(
            "initial position {:?} outside the domain",
            q0.as_slice()
        )));
    }
    Ok(())
}

/// `q'' = B(q) q' - grad V_t(q)`; states carry `p = q'`.
pub fn integrate_newton<S: StarkZeeman + ?Sized>(
    sys: &S,
    q0: Vec3,
    v0: Vec3,
    t_span: (f64, f64),
    o: &FlowOptions,
) -> Result<Trajectory> {
    check_start(sys, &q0, o)?;
    let rhs = Newton {
        sys,
        r_stop: o.r_stop,
    };
    let y0 = [q0.x, q0.y, q0.z, v0.x, v0.y, v0.z, 0.0];
    let sol = integrate(&rhs, t_span.0, y0, t_span.1, &o.ode())?;
    Ok(Trajectory::from_solution(sol, Gauge::Twisted, o, |t, y| {
        let q = Vec3::new(y[0], y[1], y[2]);
        0.5 * (y[3] * y[3] + y[4] * y[4] + y[5] * y[5]) + sys.potential(t, &q)
    }))
}

/// Hamiltonian flow in either gauge. Twisted momenta are velocities, so that
/// case coincides with [`integrate_newton`].
pub fn integrate_hamiltonian<S: StarkZeeman + ?Sized>(
    sys: &S,
    x0: PhasePoint,
    gauge: Gauge,
    t_span: (f64, f64),
    o: &FlowOptions,
) -> Result<Trajectory> {
    match gauge {
        Gauge::Twisted => integrate_newton(sys, x0.q, x0.p, t_span, o),
        Gauge::Coupled => {
            check_start(sys, &x0.q, o)?;
            let edot = |t: f64, q: &Vec3| sys.electric_tdot(t, q);
            integrate_field(&SystemGauge(sys), Some(&edot), x0, t_span, o)
        }
    }
}

/// Flow of `|p - A_t(q)|^2/2 + U_t(q)` for an arbitrary coupled field.
pub fn integrate_coupled<F: CoupledField + ?Sized>(
    field: &F,
    x0: PhasePoint,
    t_span: (f64, f64),
    o: &FlowOptions,
) -> Result<Trajectory> {
    if x0.q.norm() == 0.0 {
        return Err(Error::Domain("initial position at the origin".into()));
    }
    integrate_field(field, None, x0, t_span, o)
}

fn integrate_field<F: CoupledField + ?Sized>(
    field: &F,
    edot: Option<&(dyn Fn(f64, &Vec3) -> f64 + Sync)>,
    x0: PhasePoint,
    t_span: (f64, f64),
    o: &FlowOptions,
) -> Result<Trajectory> {
    let rhs = Coupled {
        field,
        edot,
        r_stop: o.r_stop,
    };
    let y0 = [x0.q.x, x0.q.y, x0.q.z, x0.p.x, x0.p.y, x0.p.z, 0.0];
    let sol = integrate(&rhs, t_span.0, y0, t_span.1, &o.ode())?;
    Ok(Trajectory::from_solution(sol, Gauge::Coupled, o, |t, y| {
        let q = Vec3::new(y[0], y[1], y[2]);
        let p = Vec3::new(y[3], y[4], y[5]);
        0.5 * (p - field.potential(t, &q)).norm_squared() + field.scalar(t, &q)
    }))
}

/// Sampled positions and velocities of a candidate solution over one period.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EnergySamples {
    pub t: Vec<f64>,
    pub q: Vec<Vec3>,
    pub qdot: Vec<Vec3>,
}

/// `E(t) = |q'|^2/2 - kappa/|q| + int_t^{t0+period} dE_s/ds ds + E_t(q(t))`.
///
/// The remaining-period integral uses the trapezoid rule over the samples,
/// closed with the first sample at `t0 + period`. Samples with
/// `|q| < 1e-3 max|q|` are flagged instead of trusted.
pub fn generalized_energy<S: StarkZeeman + ?Sized>(
    sys: &S,
    s: &EnergySamples,
    period: f64,
) -> Result<EnergySeries> {
    let n = s.t.len();
    if n < 2 || s.q.len() != n || s.qdot.len() != n {
        return Err(Error::Config(
            "energy samples need matching t, q, qdot of length >= 2".into(),
        ));
    }
    if s.t.windows(2).any(|w| w[1] <= w[0]) || s.t[n - 1] >= s.t[0] + period {
        return Err(Error::Config(
            "sample times must increase within one period".into(),
        ));
    }
    let edot: Vec<f64> = (0..n).map(|k| sys.electric_tdot(s.t[k], &s.q[k])).collect();
    let mut tail = vec![0.0; n];
    let t_end = s.t[0] + period;
    let e_end = sys.electric_tdot(t_end, &s.q[0]);
    tail[n - 1] = 0.5 * (edot[n - 1] + e_end) * (t_end - s.t[n - 1]);
    for k in (0..n - 1).rev() {
        tail[k] = tail[k + 1] + 0.5 * (edot[k] + edot[k + 1]) * (s.t[k + 1] - s.t[k]);
    }
    let rmax = s.q.iter().map(|q| q.norm()).fold(0.0, f64::max);
    let mut values = Vec::with_capacity(n);
    let mut low = Vec::with_capacity(n);
    for k in 0..n {
        let r = s.q[k].norm();
        let flag = r < 1e-3 * rmax || !s.qdot[k].norm().is_finite();
        let v = if r > 0.0 {
            0.5 * s.qdot[k].norm_squared() - sys.coulomb() / r
                + tail[k]
                + sys.electric(s.t[k], &s.q[k])
        } else {
            f64::NAN
        };
        values.push(v);
        low.push(flag || !v.is_finite());
    }
    Ok(EnergySeries::from_values(s.t.clone(), values, low))
}
