//! Command-line front end. The `stark-zeeman` binary is a thin wrapper around
//! [`main_with_args`].
//!
//! Every subcommand takes the same [`RunConfig`] flags; options that do not
//! apply are ignored. A `--config file.json` supplies defaults that explicit
//! flags override. Exit codes: 0 success, 2 numerical failure or failed
//! checks, 3 configuration error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bov::{self, Method, SolverOptions};
use crate::error::{Error, Result};
use crate::flow::{integrate_hamiltonian, FlowOptions};
use crate::ksgeom::{self, PhasePoint};
use crate::ksham::{self, KsRegConfig};
use crate::loops::{inner, norm_sqr, QuatLoop};
use crate::moser;
use crate::quat::{Quaternion, Vec3};
use crate::reparam;
use crate::spectral::Boundary;
use crate::systems::{hamiltonian, Gauge, StarkZeeman, System, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Moser,
    Ks,
    FindOrbit,
    Verify,
    CheckInvariants,
}

/// Options shared by all subcommands. Unset fields fall back to the config
/// file and then to the documented defaults.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// System name followed by `key=value` parameters, e.g. `--system cr3bp mu=0.01`.
    #[arg(long, num_args = 1.., value_name = "NAME [K=V]...")]
    pub system: Option<Vec<String>>,
    /// Integration tolerance (default 1e-10).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Loop samples for find-orbit (default 128).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Time span for simulate, regularized time span for moser and ks (default 0 1).
    #[arg(long, num_args = 2, allow_negative_numbers = true)]
    pub tspan: Option<Vec<f64>>,
    /// Seed for randomized checks (default 0).
    #[arg(long)]
    pub rng_seed: Option<u64>,
    #[arg(long, num_args = 3, allow_negative_numbers = true)]
    pub q0: Option<Vec<f64>>,
    /// Initial velocity (default 0 0 0).
    #[arg(long, num_args = 3, allow_negative_numbers = true)]
    pub v0: Option<Vec<f64>>,
    /// `twisted` or `coupled` (simulate only, default twisted).
    #[arg(long)]
    pub gauge: Option<String>,
    /// Seed loop for find-orbit, e.g. `circle:R=0.3,plane=1j`.
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub gtol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// `descent` (default) or `newton`.
    #[arg(long)]
    pub method: Option<String>,
    /// Initial constraint penalty (default 1, 0 disables).
    #[arg(long)]
    pub penalty: Option<f64>,
    /// Orbit JSON written by find-orbit (verify only).
    #[arg(long)]
    pub orbit: Option<PathBuf>,
    /// Module for check-invariants: quat, ksgeom, reparam, systems, flow, moser, ksham, bov or all.
    #[arg(long)]
    pub module: Option<String>,
    /// Main artifact: CSV for trajectories, JSON for orbits and reports.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Companion CSV of the physical loop (find-orbit).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Tolerance of verify checks (default 1e-4).
    #[arg(long)]
    pub verify_tol: Option<f64>,
    /// JSON file with defaults for any of these options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

macro_rules! merge_fields {
    ($a:ident, $b:ident; $($f:ident),*) => {
        RunConfig { $($f: $a.$f.or($b.$f),)* config: None }
    };
}

impl RunConfig {
    /// Fill unset fields from `other`.
    pub fn or(self, other: RunConfig) -> RunConfig {
        let a = self;
        let b = other;
        merge_fields!(a, b; system, tol, samples, tspan, rng_seed, q0, v0, gauge, seed, gtol,
            max_iter, method, penalty, orbit, module, out, csv, verify_tol)
    }

    /// Merge the `--config` file, if any, under the explicit flags.
    pub fn resolve(self) -> Result<RunConfig> {
        match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    Error::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                let file: RunConfig = serde_json::from_str(&text)?;
                Ok(self.or(file))
            }
            None => Ok(self),
        }
    }

    pub fn system_config(&self) -> Result<SystemConfig> {
        let spec = self
            .system
            .as_ref()
            .ok_or_else(|| Error::Config("--system is required".into()))?;
        parse_system(spec)
    }

    fn tol(&self) -> Result<f64> {
        positive("tol", self.tol.unwrap_or(1e-10))
    }

    fn span(&self) -> Result<(f64, f64)> {
        match self.tspan.as_deref() {
            None => Ok((0.0, 1.0)),
            Some([a, b]) if a.is_finite() && b.is_finite() => Ok((*a, *b)),
            Some(v) => Err(Error::Config(format!(
                "--tspan needs two finite numbers, got {v:?}"
            ))),
        }
    }

    fn vec3(v: &Option<Vec<f64>>, name: &str, default: Option<Vec3>) -> Result<Vec3> {
        match v.as_deref() {
            None => default.ok_or_else(|| Error::Config(format!("--{name} is required"))),
            Some([x, y, z]) if [x, y, z].iter().all(|c| c.is_finite()) => Ok(Vec3::new(*x, *y, *z)),
            Some(v) => Err(Error::Config(format!(
                "--{name} needs three finite numbers, got {v:?}"
            ))),
        }
    }

    fn initial_state(&self) -> Result<(Vec3, Vec3)> {
        Ok((
            Self::vec3(&self.q0, "q0", None)?,
            Self::vec3(&self.v0, "v0", Some(Vec3::zeros()))?,
        ))
    }

    fn solver(&self) -> Result<SolverOptions> {
        let d = SolverOptions::default();
        let method = match self.method.as_deref() {
            None | Some("descent") => Method::Descent,
            Some("newton") => Method::Newton,
            Some(m) => {
                return Err(Error::Config(format!(
                    "unknown method `{m}`, expected descent or newton"
                )))
            }
        };
        let penalty = self.penalty.unwrap_or(d.penalty);
        if !(penalty >= 0.0) {
            return Err(Error::Config("penalty must be nonnegative".into()));
        }
        Ok(SolverOptions {
            gtol: positive("gtol", self.gtol.unwrap_or(d.gtol))?,
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            penalty,
            method,
            ..d
        })
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

/// `["cr3bp", "mu=0.01"]` to a [`SystemConfig`].
pub fn parse_system(spec: &[String]) -> Result<SystemConfig> {
    let (name, rest) = spec
        .split_first()
        .ok_or_else(|| Error::Config("empty system spec".into()))?;
    let mut params = BTreeMap::new();
    for kv in rest {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("system parameter `{kv}` is not key=value")))?;
        let v: f64 = v
            .parse()
            .map_err(|_| Error::Config(format!("parameter {k}: bad number `{v}`")))?;
        params.insert(k.to_string(), v);
    }
    let cfg = SystemConfig {
        name: name.clone(),
        params,
    };
    cfg.build()?;
    Ok(cfg)
}

#[derive(Debug, Parser)]
#[command(
    name = "stark-zeeman",
    version,
    about = "Stark-Zeeman flows, regularizations and periodic orbit search"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Integrate Newton's equation and write `t,q1,q2,q3,p1,p2,p3,energy`.
    Simulate(RunConfig),
    /// Integrate the Moser regularized flow on the energy level of the initial state.
    Moser(RunConfig),
    /// Integrate the KS regularized flow on the energy level of the initial state.
    Ks(RunConfig),
    /// Search for a critical loop of the regularized action.
    FindOrbit(RunConfig),
    /// Check that an orbit JSON is a generalized periodic solution.
    Verify(RunConfig),
    /// Run randomized identity checks for one module or all of them.
    CheckInvariants(RunConfig),
    /// Run a JSON list of jobs concurrently (`STARKZEEMAN_THREADS` caps workers).
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// JSON array of jobs, each a run config plus `"command"`.
    #[arg(long)]
    jobs: PathBuf,
    /// Aggregated JSON report (printed when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// One entry of a sweep file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Job {
    pub command: Command,
    #[serde(flatten)]
    pub config: RunConfig,
}

/// Result of a run: a JSON summary and the exit code it maps to.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub summary: Value,
    pub exit: i32,
}

impl Outcome {
    fn ok(summary: Value) -> Self {
        Outcome { summary, exit: 0 }
    }

    /// Exit 0 when `passed`, 2 otherwise.
    fn checked(summary: Value, passed: bool) -> Self {
        Outcome {
            summary,
            exit: if passed { 0 } else { 2 },
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.exit
    }
}

/// Parse arguments, run, print, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Cmd::Sweep(a) => sweep_file(&a.jobs, a.out.as_deref()),
        Cmd::Simulate(c) => run_resolved(Command::Simulate, c),
        Cmd::Moser(c) => run_resolved(Command::Moser, c),
        Cmd::Ks(c) => run_resolved(Command::Ks, c),
        Cmd::FindOrbit(c) => run_resolved(Command::FindOrbit, c),
        Cmd::Verify(c) => run_resolved(Command::Verify, c),
        Cmd::CheckInvariants(c) => run_resolved(Command::CheckInvariants, c),
    };
    match result {
        Ok(o) => {
            // a closed pipe downstream is not an error of the run
            let _ = writeln!(
                std::io::stdout().lock(),
                "{}",
                serde_json::to_string_pretty(&o.summary).unwrap_or_default()
            );
            o.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run_resolved(cmd: Command, c: RunConfig) -> Result<Outcome> {
    run(cmd, &c.resolve()?)
}

/// Execute one command.
pub fn run(cmd: Command, c: &RunConfig) -> Result<Outcome> {
    match cmd {
        Command::Simulate => simulate(c),
        Command::Moser => run_moser(c),
        Command::Ks => run_ks(c),
        Command::FindOrbit => find_orbit(c),
        Command::Verify => verify(c),
        Command::CheckInvariants => check_invariants(c),
    }
}

fn flow_options(c: &RunConfig) -> Result<FlowOptions> {
    Ok(FlowOptions::with_tol(c.tol()?))
}

fn simulate(c: &RunConfig) -> Result<Outcome> {
    let sys = c.system_config()?.build()?;
    let (q0, v0) = c.initial_state()?;
    let gauge = match c.gauge.as_deref() {
        None | Some("twisted") => Gauge::Twisted,
        Some("coupled") => Gauge::Coupled,
        Some(g) => {
            return Err(Error::Config(format!(
                "unknown gauge `{g}`, expected twisted or coupled"
            )))
        }
    };
    let p0 = match gauge {
        Gauge::Twisted => v0,
        Gauge::Coupled => v0 + sys.vector_potential(&q0),
    };
    let traj = integrate_hamiltonian(
        &sys,
        PhasePoint::new(q0, p0),
        gauge,
        c.span()?,
        &flow_options(c)?,
    )?;
    if let Some(p) = &c.out {
        traj.write_csv(p)?;
    }
    Ok(Outcome::ok(serde_json::from_str(&traj.summary_json()?)?))
}

/// Coupled-gauge state and its energy.
fn coupled_start(sys: &System, c: &RunConfig) -> Result<(PhasePoint, f64)> {
    let (q0, v0) = c.initial_state()?;
    let x = PhasePoint::new(q0, v0 + sys.vector_potential(&q0));
    let h = hamiltonian(sys, c.span()?.0, &x, Gauge::Coupled)?;
    Ok((x, h))
}

fn run_moser(c: &RunConfig) -> Result<Outcome> {
    let sys = c.system_config()?.build()?;
    let (x, energy) = coupled_start(&sys, c)?;
    let traj = moser::integrate_moser(
        &sys,
        energy,
        moser::moser_encode(&x),
        c.span()?,
        &flow_options(c)?,
    )?;
    if let Some(p) = &c.out {
        traj.write_csv(p)?;
    }
    let mut s: Value = serde_json::from_str(&traj.summary_json()?)?;
    s["energy"] = json!(energy);
    Ok(Outcome::ok(s))
}

fn run_ks(c: &RunConfig) -> Result<Outcome> {
    let sys = c.system_config()?.build()?;
    let (x, energy) = coupled_start(&sys, c)?;
    let k = ksham::ks_encode(&x)?;
    let traj = ksham::integrate_ks(
        &sys,
        &KsRegConfig::new(energy),
        k.z,
        k.w,
        c.span()?,
        &flow_options(c)?,
    )?;
    if let Some(p) = &c.out {
        traj.write_csv(p)?;
    }
    let mut s: Value = serde_json::from_str(&traj.summary_json()?)?;
    s["energy"] = json!(energy);
    Ok(Outcome::ok(s))
}

fn orbit_summary(cp: &bov::CriticalPoint, v: &bov::Verification) -> Value {
    let r: Vec<f64> = cp.q_loop.samples.iter().map(|q| q.norm()).collect();
    json!({
        "converged": cp.converged,
        "iterations": cp.iterations,
        "value": cp.report.value,
        "norm_sqr": cp.report.norm_sqr,
        "gradient_norm": cp.report.gradient_norm,
        "residual_norm": cp.report.residual_norm,
        "constraint_value": cp.constraint_value,
        "c_constant": cp.c_constant,
        "q_min": r.iter().cloned().fold(f64::INFINITY, f64::min),
        "q_max": r.iter().cloned().fold(0.0, f64::max),
        "zeros": v.zeros,
        "verified": v.passed,
    })
}

fn find_orbit(c: &RunConfig) -> Result<Outcome> {
    let sys = c.system_config()?.build()?;
    let spec = c
        .seed
        .as_deref()
        .ok_or_else(|| Error::Config("--seed is required".into()))?;
    let samples = c.samples.unwrap_or(128);
    let mut seed = bov::seed_loop(spec, samples)?;
    if let Some(s) = c.rng_seed {
        // an explicit rng seed reseeds noise given in the spec
        if spec.contains("noise=") && !spec.contains("seed=") {
            seed = bov::seed_loop(&format!("{spec},seed={s}"), samples)?;
        }
    }
    let cp = bov::find_critical_point(&sys, &seed, &c.solver()?)?;
    let v = bov::verify_generalized_solution(&sys, &cp, c.verify_tol.unwrap_or(1e-4))?;
    if let Some(p) = &c.out {
        cp.write_json(p, Some(&v))?;
    }
    if let Some(p) = &c.csv {
        cp.write_q_csv(p)?;
    }
    Ok(Outcome::checked(orbit_summary(&cp, &v), cp.converged))
}

#[derive(Deserialize)]
struct OrbitFile {
    #[serde(rename = "loop")]
    z: QuatLoop,
}

fn verify(c: &RunConfig) -> Result<Outcome> {
    let sys = c.system_config()?.build()?;
    let path = c
        .orbit
        .as_ref()
        .ok_or_else(|| Error::Config("--orbit is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read orbit {}: {e}", path.display())))?;
    let orbit: OrbitFile = serde_json::from_str(&text)?;
    let cp = bov::CriticalPoint::evaluate(&sys, &orbit.z, c.gtol.unwrap_or(1e-8))?;
    let v = bov::verify_generalized_solution(&sys, &cp, c.verify_tol.unwrap_or(1e-4))?;
    if let Some(p) = &c.out {
        std::fs::write(p, serde_json::to_string_pretty(&v)?)?;
    }
    let mut s = orbit_summary(&cp, &v);
    s["checks"] = serde_json::to_value(&v.checks)?;
    Ok(Outcome::checked(s, v.passed))
}

// ---------------------------------------------------------------------------
// invariant suites

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub module: String,
    pub passed: usize,
    pub total: usize,
}

struct Tally {
    passed: usize,
    total: usize,
}

impl Tally {
    fn new() -> Self {
        Tally {
            passed: 0,
            total: 0,
        }
    }

    fn add(&mut self, ok: bool) {
        self.total += 1;
        self.passed += ok as usize;
    }
}

fn rand_quat(rng: &mut ChaCha8Rng) -> Quaternion {
    Quaternion::new(
        rng.gen_range(-2.0..2.0),
        rng.gen_range(-2.0..2.0),
        rng.gen_range(-2.0..2.0),
        rng.gen_range(-2.0..2.0),
    )
}

fn rand_vec(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    )
}

fn rel(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-12 * scale.max(1.0)
}

pub const MODULES: [&str; 8] = [
    "quat", "ksgeom", "reparam", "systems", "flow", "moser", "ksham", "bov",
];

/// Randomized identity checks for one module.
pub fn invariant_suite(module: &str, rng_seed: u64) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut t = Tally::new();
    match module {
        "quat" => {
            for _ in 0..1000 {
                let (a, b, c) = (
                    rand_quat(&mut rng),
                    rand_quat(&mut rng),
                    rand_quat(&mut rng),
                );
                let s = a.norm() * b.norm() * c.norm();
                let d = (a * b) * c - a * (b * c);
                t.add(d.norm() <= 1e-13 * s.max(1.0));
                t.add(rel(
                    (a * b).norm(),
                    a.norm() * b.norm(),
                    a.norm() * b.norm(),
                ));
                t.add(((a * b).conj() - b.conj() * a.conj()).norm() <= 1e-13 * s.max(1.0));
            }
        }
        "ksgeom" => {
            for _ in 0..10_000 {
                let z = rand_quat(&mut rng);
                let v = rand_vec(&mut rng);
                let n2 = z.norm_sqr();
                let q = ksgeom::ks_map_vec(&z);
                t.add(rel(q.norm(), n2, n2));
                t.add((z.conj() * Quaternion::I * z).re().abs() <= 1e-12 * n2.max(1.0));
                let th = rng.gen_range(0.0..std::f64::consts::TAU);
                t.add(
                    (ksgeom::ks_map_vec(&ksgeom::fiber_rotate(&z, th)) - q).norm()
                        <= 1e-12 * n2.max(1.0),
                );
                let lhs = ksgeom::ks_diff_transpose_vec(&z, &v);
                let rhs = Quaternion::I * z * Quaternion::pure(v) * -2.0;
                t.add((lhs - rhs).norm() <= 1e-12 * (z.norm() * v.norm()).max(1.0));
            }
        }
        "reparam" => {
            for k in 0..20 {
                // coarse noise, resampled, gives a smooth random loop
                let n = 512;
                let z = bov::perturb(
                    &bov::seed_loop("circle:R=0.6,plane=1k", 16)?,
                    0.1,
                    rng_seed + k,
                )
                .resample(n);
                let nrm = norm_sqr(&z);
                let q = reparam::reconstruct_q(&z)?;
                let inv: f64 = q.samples.iter().map(|x| 1.0 / x.norm()).sum::<f64>() / n as f64;
                t.add((inv - 1.0 / nrm).abs() <= 1e-6 / nrm);
                let tz = reparam::time_from_param(&z)?;
                let x: f64 = rng.gen_range(0.0..1.0);
                t.add((tz.inverse(tz.eval(x)) - x).abs() <= 1e-10);
            }
        }
        "systems" => {
            for name in ["kepler", "rkp", "cr3bp", "bcr4bp"] {
                let sys = SystemConfig::new(name).build()?;
                for _ in 0..100 {
                    let q = rand_vec(&mut rng) * 0.3 + Vec3::new(0.0, 0.0, 0.05);
                    let b = sys.magnetic(&q);
                    t.add((b + b.transpose()).norm() <= 1e-12);
                    let tt = rng.gen_range(0.0..1.0);
                    let g = sys.potential_grad(tt, &q);
                    let h = 1e-6;
                    let fd = Vec3::from_fn(|i, _| {
                        let mut e = Vec3::zeros();
                        e[i] = h;
                        (sys.potential(tt, &(q + e)) - sys.potential(tt, &(q - e))) / (2.0 * h)
                    });
                    t.add((fd - g).norm() <= 1e-6 * g.norm().max(1.0));
                }
            }
        }
        "flow" => {
            let sys = SystemConfig::new("kepler").build()?;
            for _ in 0..20 {
                let q = Vec3::new(1.0, 0.0, 0.0) + rand_vec(&mut rng) * 0.2;
                let v = Vec3::new(0.0, 1.0, 0.2) + rand_vec(&mut rng) * 0.1;
                let tr = integrate_hamiltonian(
                    &sys,
                    PhasePoint::new(q, v),
                    Gauge::Twisted,
                    (0.0, 3.0),
                    &FlowOptions::with_tol(1e-11),
                )?;
                t.add(tr.energy_drift() < 1e-8);
            }
        }
        "moser" => {
            for _ in 0..1000 {
                let x = PhasePoint::new(rand_vec(&mut rng), rand_vec(&mut rng) * 2.0);
                if x.q.norm() < 1e-3 {
                    continue;
                }
                let back = moser::moser_decode(&moser::moser_encode(&x))?;
                t.add(
                    (back.q - x.q).norm() + (back.p - x.p).norm()
                        <= 1e-10 * (1.0 + x.p.norm_squared()),
                );
            }
        }
        "ksham" => {
            for _ in 0..1000 {
                let x = PhasePoint::new(rand_vec(&mut rng), rand_vec(&mut rng));
                if x.q.norm() < 1e-3 {
                    continue;
                }
                let k = ksham::ks_encode(&x)?;
                t.add(ksgeom::is_physical(&k.z, &k.w));
                let back = ksham::project_physical(&k.z, &k.w)?;
                t.add((back.q - x.q).norm() + (back.p - x.p).norm() <= 1e-10 * (1.0 + x.p.norm()));
            }
        }
        "bov" => {
            for name in ["kepler", "rkp", "bcr4bp"] {
                let sys = SystemConfig::new(name).build()?;
                for k in 0..5 {
                    let z = bov::perturb(
                        &bov::seed_loop("circle:R=0.5,plane=1j", 32)?,
                        0.05,
                        rng_seed + k,
                    );
                    let xi = bov::perturb(
                        &bov::seed_loop("constant:R=1e-300", 32)?,
                        1.0,
                        rng_seed + 100 + k,
                    );
                    let xi = QuatLoop::new(xi.samples, Boundary::AntiPeriodic);
                    let g = bov::action_gradient(&sys, &z)?.gradient.expect("gradient");
                    let h = 1e-6;
                    let f = |s: f64| {
                        bov::action_value(&sys, &crate::loops::axpy(s, &xi, &z)).map(|r| r.value)
                    };
                    let fd = (f(h)? - f(-h)?) / (2.0 * h);
                    let an = inner(&g, &xi);
                    t.add((fd - an).abs() <= 1e-6 * an.abs().max(1.0));
                    let th = rng.gen_range(0.0..std::f64::consts::TAU);
                    let u = Quaternion::exp_i(th);
                    let zr = QuatLoop::new(z.samples.iter().map(|s| u * *s).collect(), z.boundary);
                    let gr = bov::action_gradient(&sys, &zr)?.gradient.expect("gradient");
                    let err = gr
                        .samples
                        .iter()
                        .zip(&g.samples)
                        .map(|(a, b)| (*a - u * *b).norm())
                        .fold(0.0, f64::max);
                    t.add(err <= 1e-12 * g.max_abs().max(1.0));
                }
            }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown module `{other}`; expected one of {MODULES:?} or all"
            )));
        }
    }
    Ok(SuiteResult {
        module: module.to_string(),
        passed: t.passed,
        total: t.total,
    })
}

fn check_invariants(c: &RunConfig) -> Result<Outcome> {
    let module = c.module.as_deref().unwrap_or("all");
    let seed = c.rng_seed.unwrap_or(0);
    let modules: Vec<&str> = if module == "all" {
        MODULES.to_vec()
    } else {
        vec![module]
    };
    let results = modules
        .iter()
        .map(|m| invariant_suite(m, seed))
        .collect::<Result<Vec<_>>>()?;
    for r in &results {
        eprintln!("{:<8} {}/{} passed", r.module, r.passed, r.total);
    }
    let ok = results.iter().all(|r| r.passed == r.total);
    Ok(Outcome::checked(serde_json::to_value(&results)?, ok))
}

// ---------------------------------------------------------------------------
// sweeps

/// Worker count from `STARKZEEMAN_THREADS`, or rayon's default.
pub fn worker_count() -> usize {
    std::env::var("STARKZEEMAN_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

/// Run jobs concurrently. One failing job does not stop the others; the
/// aggregate exit code is the worst one.
pub fn sweep(jobs: &[Job]) -> Result<(Value, i32)> {
    if jobs.is_empty() {
        return Err(Error::Config("sweep needs at least one job".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<(Value, i32)> = pool.install(|| {
        jobs.par_iter()
            .enumerate()
            .map(|(i, job)| match job.config.clone().resolve().and_then(|c| run(job.command, &c)) {
                Ok(o) => (json!({"job": i, "command": job.command, "exit": o.exit_code(), "summary": o.summary}), o.exit_code()),
                Err(e) => (json!({"job": i, "command": job.command, "exit": e.exit_code(), "error": e.to_string()}), e.exit_code()),
            })
            .collect()
    });
    let worst = results.iter().map(|r| r.1).max().unwrap_or(0);
    let report = json!({
        "jobs": results.iter().map(|r| r.0.clone()).collect::<Vec<_>>(),
        "exit": worst,
    });
    Ok((report, worst))
}

fn sweep_file(path: &Path, out: Option<&Path>) -> Result<Outcome> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read jobs {}: {e}", path.display())))?;
    let jobs: Vec<Job> = serde_json::from_str(&text)?;
    let (report, worst) = sweep(&jobs)?;
    if let Some(p) = out {
        std::fs::write(p, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(Outcome {
        summary: report,
        exit: worst,
    })
}
