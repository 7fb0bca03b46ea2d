//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any of them fails.

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stark_zeeman::bov::{
    action_gap, action_gradient, action_value, find_critical_point, hamiltonian_action,
    legendre_transform, perturb, seed_loop, verify_generalized_solution, CriticalPoint,
    SolverOptions,
};
use stark_zeeman::flow::{integrate_coupled, integrate_hamiltonian, FlowOptions};
use stark_zeeman::ksgeom::{
    fiber_rotate, ks_diff_transpose_vec, ks_lift, ks_map, project_bl, PhasePoint,
};
use stark_zeeman::ksham::{integrate_ks, ks_encode, KsRegConfig};
use stark_zeeman::loops::{axpy, inner, mean, QuatLoop, VecLoop};
use stark_zeeman::moser::{integrate_moser, moser_decode, moser_encode};
use stark_zeeman::spectral::Boundary;
use stark_zeeman::systems::{
    critical_energy, hamiltonian, Gauge, Kepler, StarkZeeman, System, SystemConfig,
};
use stark_zeeman::{Quaternion, Vec3};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn rand_quat(rng: &mut ChaCha8Rng) -> Quaternion {
    Quaternion::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    )
}

fn rand_vec(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    )
}

fn ks_identities() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let z = rand_quat(&mut rng);
        let n2 = z.norm_sqr();
        let q = z.conj() * Quaternion::I * z;
        worst = worst.max((q.norm() - n2).abs() / n2);
        worst = worst.max(q.re().abs() / n2);
        let r = fiber_rotate(&z, rng.gen_range(0.0..TAU));
        worst = worst.max((ks_map(&r).vec() - ks_map(&z).vec()).norm() / n2);
        let v = rand_vec(&mut rng);
        let expected = Quaternion::I * z * Quaternion::pure(v) * -2.0;
        worst = worst
            .max((ks_diff_transpose_vec(&z, &v) - expected).norm() / (2.0 * z.norm() * v.norm()));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-12 && secs < 1.0,
        format!("max rel err {worst:.2e}, {secs:.3} s"),
    )
}

fn lift_pullback() -> Outcome {
    let n = 512;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let offset = rand_quat(&mut rng) * 0.5 + Quaternion::ONE * 2.0;
        let coeffs: Vec<[Quaternion; 4]> = (0..4)
            .map(|_| [0; 4].map(|_| rand_quat(&mut rng) * 0.4))
            .collect();
        let curve = |s: f64, k: usize| -> Quaternion {
            let mut x = Quaternion::ZERO;
            for m in 1..3 {
                let a = TAU * m as f64 * s;
                x += coeffs[m][k] * a.cos() + coeffs[m][k + 1] * a.sin();
            }
            x
        };
        let z = QuatLoop::from_fn(n, Boundary::Periodic, |s| offset + curve(s, 0));
        let w = QuatLoop::new(
            z.samples
                .iter()
                .enumerate()
                .map(|(k, zk)| project_bl(zk, &(curve(z.tau(k), 2) + coeffs[0][0])))
                .collect(),
            Boundary::Periodic,
        );
        let x: Vec<PhasePoint> = z
            .samples
            .iter()
            .zip(&w.samples)
            .map(|(a, b)| ks_lift(a, b).unwrap())
            .collect();
        let q = VecLoop::periodic(x.iter().map(|x| x.q).collect());
        let dq = q.derivative();
        let p_dq = mean(
            &x.iter()
                .zip(&dq.samples)
                .map(|(x, d)| x.p.dot(d))
                .collect::<Vec<_>>(),
        );
        let (dz, dw) = (z.derivative(), w.derivative());
        let half = 0.5
            * mean(
                &(0..n)
                    .map(|k| w.samples[k].dot(&dz.samples[k]) - z.samples[k].dot(&dw.samples[k]))
                    .collect::<Vec<_>>(),
            );
        worst = worst.max((p_dq - half).abs());
    }
    outcome(
        worst < 1e-8,
        format!("max |p dq - (w dz - z dw)/2| {worst:.2e} at N = 512"),
    )
}

fn gradient_fd() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_ratio = f64::INFINITY;
    for (i, name) in ["kepler", "rkp", "bcr4bp"].iter().enumerate() {
        let sys = SystemConfig::new(name).build().unwrap();
        for k in 0..3u64 {
            let z = perturb(
                &seed_loop("circle:R=0.55,plane=1j", 64).unwrap(),
                0.05,
                10 * i as u64 + k,
            );
            let xi = QuatLoop::new(
                perturb(&seed_loop("constant:R=1e-300", 64).unwrap(), 1.0, 100 + k).samples,
                Boundary::AntiPeriodic,
            );
            let an = inner(&action_gradient(&sys, &z).unwrap().gradient.unwrap(), &xi);
            let fd = |h: f64| {
                let f = |s: f64| action_value(&sys, &axpy(s, &xi, &z)).unwrap().value;
                (f(h) - f(-h)) / (2.0 * h)
            };
            worst = worst.max((fd(1e-5) - an).abs() / an.abs().max(1.0));
            // halving h should cut the truncation error by four
            let ratio = (fd(2e-2) - an).abs() / (fd(1e-2) - an).abs();
            worst_ratio = worst_ratio.min(ratio.min(8.0 - ratio));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = worst < 1e-6 && worst_ratio > 3.0 && secs < 10.0;
    outcome(
        ok,
        format!(
            "max rel err {worst:.2e}, error ratios within {:.2} of 4, {secs:.2} s",
            4.0 - worst_ratio
        ),
    )
}

fn kepler_critical_point() -> Outcome {
    let start = Instant::now();
    let r = (4.0 * PI * PI).powf(-1.0 / 3.0);
    let radius = r.sqrt();
    let seed = perturb(
        &seed_loop(&format!("circle:R={radius}"), 128).unwrap(),
        0.01 * radius,
        4,
    );
    let cp = find_critical_point(&Kepler, &seed, &SolverOptions::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let dn = (cp.report.norm_sqr - r).abs();
    let db = (cp.report.value - 1.5 / r).abs();
    let ok = cp.converged && dn < 1e-6 && db < 1e-6 && secs < 30.0;
    outcome(
        ok,
        format!(
            "|z|^2 err {dn:.1e}, B err {db:.1e}, {} iterations, {secs:.2} s",
            cp.iterations
        ),
    )
}

fn collision_orbit() -> Outcome {
    let a = (2.0 * (16.0 * PI * PI).powf(-1.0 / 3.0)).sqrt();
    let z = seed_loop(&format!("segment:a={a}"), 256).unwrap();
    let cp = CriticalPoint::evaluate(&Kepler, &z, 1e-8).unwrap();
    let v = verify_generalized_solution(&Kepler, &cp, 1e-4).unwrap();
    let worst = v
        .checks
        .iter()
        .filter(|c| c.name != "a_zeros_transverse")
        .map(|c| c.value)
        .fold(0.0, f64::max);
    let ok = v.passed && v.zeros.len() == 2 && worst < 1e-4;
    outcome(
        ok,
        format!(
            "{} zeros, six checks {}, worst residual {worst:.1e}",
            v.zeros.len(),
            if v.passed { "pass" } else { "fail" }
        ),
    )
}

fn regularized_flows() -> Outcome {
    // Moser: released from rest near the small primary of the CR3BP
    let sys = SystemConfig::new("cr3bp").with("mu", 0.01).build().unwrap();
    let crit = critical_energy(&sys).unwrap().value;
    let q0 = Vec3::new(0.1, 0.0, 0.0);
    let x0 = PhasePoint::new(q0, sys.vector_potential(&q0));
    let c = hamiltonian(&sys, 0.0, &x0, Gauge::Coupled).unwrap();
    let opts = FlowOptions::with_tol(1e-12);
    let reg = integrate_moser(&sys, c, moser_encode(&x0), (0.0, 30.0), &opts).unwrap();
    let direct = integrate_hamiltonian(
        &sys,
        x0,
        Gauge::Coupled,
        (0.0, *reg.t_phys.last().unwrap()),
        &opts,
    )
    .unwrap();
    let mut moser_err = 0.0f64;
    let mut closest = f64::INFINITY;
    for (s, t) in reg.states.iter().zip(&reg.t_phys) {
        let x = moser_decode(s).unwrap();
        closest = closest.min(x.q.norm());
        if x.q.norm() >= 0.05 {
            moser_err = moser_err.max((direct.interpolate(*t).unwrap().q - x.q).norm());
        }
    }

    // KS: an eccentric Kepler ellipse
    let x0 = PhasePoint::new(Vec3::new(1.0, 0.0, 0.2), Vec3::new(0.0, 0.35, 0.05));
    let c_ks = hamiltonian(&Kepler, 0.0, &x0, Gauge::Coupled).unwrap();
    let k = ks_encode(&x0).unwrap();
    let ks = integrate_ks(
        &Kepler,
        &KsRegConfig::new(c_ks),
        k.z,
        k.w,
        (0.0, 10.0),
        &opts,
    )
    .unwrap();
    let direct = integrate_hamiltonian(
        &Kepler,
        x0,
        Gauge::Coupled,
        (0.0, *ks.t_phys.last().unwrap()),
        &opts,
    )
    .unwrap();
    let ks_err = ks
        .physical
        .iter()
        .zip(&ks.t_phys)
        .filter_map(|(x, t)| Some((x.as_ref()?.q - direct.interpolate(*t)?.q).norm()))
        .fold(0.0, f64::max);

    let loose = integrate_ks(
        &Kepler,
        &KsRegConfig::new(c_ks),
        k.z,
        k.w,
        (0.0, 10.0),
        &FlowOptions::with_tol(1e-10),
    )
    .unwrap();
    let (dk, db) = (loose.k_drift(), loose.bl_drift());
    let ok =
        c < crit && closest < 0.05 && moser_err < 1e-5 && ks_err < 1e-6 && dk < 1e-9 && db < 1e-9;
    outcome(
        ok,
        format!("moser {moser_err:.1e} (closest {closest:.1e}), ks {ks_err:.1e}, K_c drift {dk:.1e}, BL drift {db:.1e}"),
    )
}

fn gauge_equivalences() -> Outcome {
    let opts = FlowOptions::with_tol(1e-12);
    let max_gap =
        |a: &stark_zeeman::flow::Trajectory, b: &stark_zeeman::flow::Trajectory, t1: f64| {
            (0..=300)
                .filter_map(|k| {
                    let t = t1 * k as f64 / 300.0;
                    Some((a.interpolate(t)?.q - b.interpolate(t)?.q).norm())
                })
                .fold(0.0, f64::max)
        };

    let cr3bp = SystemConfig::new("cr3bp").with("mu", 0.01).build().unwrap();
    let (q0, v0) = (Vec3::new(0.08, 0.0, 0.01), Vec3::new(0.0, 0.2, 0.0));
    let tw = integrate_hamiltonian(
        &cr3bp,
        PhasePoint::new(q0, v0),
        Gauge::Twisted,
        (0.0, 2.0),
        &opts,
    )
    .unwrap();
    let p0 = v0 + cr3bp.vector_potential(&q0);
    let co = integrate_hamiltonian(
        &cr3bp,
        PhasePoint::new(q0, p0),
        Gauge::Coupled,
        (0.0, 2.0),
        &opts,
    )
    .unwrap();
    let twist_gap = max_gap(&tw, &co, 2.0);

    let System::Bcr4bp(b) = SystemConfig::new("bcr4bp").build().unwrap() else {
        unreachable!()
    };
    let (q0, v0) = (Vec3::new(0.1, 0.05, 0.02), Vec3::new(-0.1, 0.3, 0.0));
    let fixed = integrate_hamiltonian(
        &b,
        PhasePoint::new(q0, v0 + b.vector_potential(&q0)),
        Gauge::Coupled,
        (0.0, 3.0),
        &opts,
    )
    .unwrap();
    let rot = integrate_coupled(
        &b.rotating_gauge(),
        PhasePoint::new(q0, v0 + b.rotating_potential(0.0, &q0)),
        (0.0, 3.0),
        &opts,
    )
    .unwrap();
    let bcr_gap = max_gap(&fixed, &rot, 3.0);

    let reduced = SystemConfig::new("bcr4bp")
        .with("m_s", 0.0)
        .with("omega", 0.0)
        .build()
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut field_gap = 0.0f64;
    for _ in 0..1000 {
        let q = rand_vec(&mut rng) * 0.5;
        let t = rng.gen_range(0.0..10.0);
        field_gap = field_gap
            .max((reduced.vector_potential(&q) - cr3bp.vector_potential(&q)).norm())
            .max((reduced.electric(t, &q) - cr3bp.electric(t, &q)).abs())
            .max((reduced.magnetic(&q) - cr3bp.magnetic(&q)).norm())
            .max((reduced.potential(t, &q) - cr3bp.potential(t, &q)).abs());
    }
    let ok = twist_gap < 1e-8 && bcr_gap < 1e-6 && field_gap < 1e-12;
    outcome(ok, format!("twisted/coupled {twist_gap:.1e}, bcr4bp gauges {bcr_gap:.1e}, reduced fields {field_gap:.1e}"))
}

fn legendre_identities() -> Outcome {
    let mut residual = 0.0f64;
    let mut gap = 0.0f64;
    let mut converged = true;
    for (name, spec) in [
        ("kepler", "circle:R=0.6,noise=0.01"),
        ("rkp", "circle:R=0.6,plane=1k,noise=0.01"),
    ] {
        let sys = SystemConfig::new(name).build().unwrap();
        let cp = find_critical_point(
            &sys,
            &seed_loop(spec, 64).unwrap(),
            &SolverOptions::default(),
        )
        .unwrap();
        converged &= cp.converged;
        let l = legendre_transform(&sys, &cp.z).unwrap();
        residual = residual.max(l.residual);
        gap = gap.max(l.identity_gap.abs());
    }
    let mut correction = 0.0f64;
    for (k, name) in ["kepler", "rkp", "bcr4bp"].iter().enumerate() {
        let sys = SystemConfig::new(name).build().unwrap();
        let z = perturb(&seed_loop("circle:R=0.5", 64).unwrap(), 0.05, k as u64);
        let w = perturb(&legendre_transform(&sys, &z).unwrap().w, 0.3, 10 + k as u64);
        let h = hamiltonian_action(&sys, &z, &w).unwrap();
        correction = correction.max((h.identity_gap - action_gap(&sys, &z, &w).unwrap()).abs());
    }
    let ok = converged && residual < 1e-6 && gap < 1e-8 && correction < 1e-10;
    outcome(
        ok,
        format!("residual {residual:.1e}, gap {gap:.1e}, correction mismatch {correction:.1e}"),
    )
}

fn circle_symmetry() -> Outcome {
    let mut equi = 0.0f64;
    for (k, name) in ["kepler", "rkp", "bcr4bp"].iter().enumerate() {
        let sys = SystemConfig::new(name).build().unwrap();
        let z = perturb(
            &seed_loop("circle:R=0.5,plane=1j", 64).unwrap(),
            0.05,
            30 + k as u64,
        );
        let r = action_gradient(&sys, &z).unwrap();
        let g = r.gradient.unwrap();
        for th in [0.3, 1.7, 4.0] {
            let u = Quaternion::exp_i(th);
            let zr = QuatLoop::new(z.samples.iter().map(|s| u * *s).collect(), z.boundary);
            let rr = action_gradient(&sys, &zr).unwrap();
            let gr = rr.gradient.unwrap();
            equi = equi.max((rr.value - r.value).abs() / r.value.abs().max(1.0));
            let ge = gr
                .samples
                .iter()
                .zip(&g.samples)
                .map(|(a, b)| (*a - u * *b).norm())
                .fold(0.0, f64::max);
            equi = equi.max(ge / g.max_abs().max(1.0));
        }
    }

    let sys = SystemConfig::new("rkp").build().unwrap();
    let seed = seed_loop("circle:R=0.6,plane=1k,noise=0.02,seed=9", 64).unwrap();
    let base = find_critical_point(&sys, &seed, &SolverOptions::default()).unwrap();
    let mut q_gap = 0.0f64;
    let mut converged = base.converged;
    for th in [0.9, 2.5] {
        let u = Quaternion::exp_i(th);
        let rotated = QuatLoop::new(seed.samples.iter().map(|s| u * *s).collect(), seed.boundary);
        let cp = find_critical_point(&sys, &rotated, &SolverOptions::default()).unwrap();
        converged &= cp.converged;
        let d = cp
            .q_loop
            .samples
            .iter()
            .zip(&base.q_loop.samples)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        q_gap = q_gap.max(d);
    }
    let ok = equi < 1e-12 && converged && q_gap < 1e-6;
    outcome(
        ok,
        format!("equivariance {equi:.1e}, q-loops from rotated seeds differ by {q_gap:.1e}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("KS identities", ks_identities),
        ("lift pullback", lift_pullback),
        ("gradient vs finite differences", gradient_fd),
        ("Kepler critical point", kepler_critical_point),
        ("collision orbit verification", collision_orbit),
        ("regularized vs direct flows", regularized_flows),
        ("gauge and formulation equivalences", gauge_equivalences),
        ("Legendre identities", legendre_identities),
        ("circle symmetry", circle_symmetry),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.passed);
        println!(
            "{} {}. {name}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            k + 1,
            o.detail
        );
    }
    if failed > 0 {
        println!("{failed} of 9 criteria failed");
        std::process::exit(1);
    }
}
