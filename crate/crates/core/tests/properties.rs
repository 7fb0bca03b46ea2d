use std::f64::consts::TAU;

use proptest::prelude::*;
use stark_zeeman::bov::{
    action_gradient, action_value, constraint_series, find_critical_point, perturb, seed_loop,
    SolverOptions,
};
use stark_zeeman::ksgeom::{
    bl, fiber_rotate, ks_diff_transpose_vec, ks_diff_vec, ks_lift, ks_map_vec, project_bl,
};
use stark_zeeman::ksham::{ks_encode, ks_fiber_rotate, project_physical};
use stark_zeeman::loops::{axpy, inner, mean, norm_sqr, QuatLoop};
use stark_zeeman::moser::{moser_decode, moser_encode};
use stark_zeeman::reparam::reconstruct_q;
use stark_zeeman::spectral::Boundary;
use stark_zeeman::systems::SystemConfig;
use stark_zeeman::{ksgeom::PhasePoint, Quaternion, Vec3};

fn quat() -> impl Strategy<Value = Quaternion> {
    prop::array::uniform4(-2.0..2.0f64)
        .prop_filter("away from zero", |a| {
            a.iter().map(|x| x * x).sum::<f64>() > 1e-4
        })
        .prop_map(Quaternion)
}

fn vec3() -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-2.0..2.0f64).prop_map(|a| Vec3::new(a[0], a[1], a[2]))
}

proptest! {
    #[test]
    fn ks_map_squares_norms(z in quat(), th in 0.0..TAU) {
        let n2 = z.norm_sqr();
        let q = ks_map_vec(&z);
        prop_assert!((q.norm() - n2).abs() <= 1e-12 * n2);
        prop_assert!((ks_map_vec(&fiber_rotate(&z, th)) - q).norm() <= 1e-12 * n2);
    }

    #[test]
    fn differential_transpose_is_adjoint(z in quat(), u in quat(), v in vec3()) {
        let lhs = ks_diff_vec(&z, &u).dot(&v);
        let rhs = u.dot(&ks_diff_transpose_vec(&z, &v));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + z.norm() * u.norm() * v.norm()));
    }

    #[test]
    fn lift_is_fiber_invariant(z in quat(), w in quat(), th in 0.0..TAU) {
        let w = project_bl(&z, &w);
        prop_assert!(bl(&z, &w).abs() <= 1e-12 * (1.0 + z.norm() * w.norm()));
        let a = ks_lift(&z, &w).unwrap();
        let b = ks_lift(&fiber_rotate(&z, th), &fiber_rotate(&w, th)).unwrap();
        prop_assert!((a.q - b.q).norm() + (a.p - b.p).norm() <= 1e-11 * (1.0 + a.p.norm() + a.q.norm()));
    }

    #[test]
    fn ks_encoding_round_trips(q in vec3(), p in vec3(), th in 0.0..TAU) {
        prop_assume!(q.norm() > 1e-3);
        let k = ks_fiber_rotate(&ks_encode(&PhasePoint::new(q, p)).unwrap(), th);
        let back = project_physical(&k.z, &k.w).unwrap();
        prop_assert!((back.q - q).norm() + (back.p - p).norm() <= 1e-10 * (1.0 + p.norm()));
    }

    #[test]
    fn moser_encoding_round_trips(q in vec3(), p in vec3()) {
        prop_assume!(q.norm() > 1e-3);
        let back = moser_decode(&moser_encode(&PhasePoint::new(q, p))).unwrap();
        prop_assert!((back.q - q).norm() + (back.p - p).norm() <= 1e-10 * (1.0 + p.norm_squared()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn inverse_radius_averages_to_inverse_norm(seed in 0u64..1000, r in 0.4..1.2f64) {
        // a smooth loop that stays away from the origin
        let z = perturb(&seed_loop(&format!("circle:R={r}"), 16).unwrap(), 0.05 * r, seed).resample(128);
        let q = reconstruct_q(&z).unwrap();
        let avg = mean(&q.samples.iter().map(|v| 1.0 / v.norm()).collect::<Vec<_>>());
        prop_assert!((avg * norm_sqr(&z) - 1.0).abs() < 1e-8, "{}", avg * norm_sqr(&z));
    }

    #[test]
    fn action_is_circle_invariant(seed in 0u64..1000, th in 0.0..TAU, which in 0usize..3) {
        let sys = SystemConfig::new(["kepler", "rkp", "bcr4bp"][which]).build().unwrap();
        let z = perturb(&seed_loop("circle:R=0.5,plane=1j", 32).unwrap(), 0.05, seed);
        let u = Quaternion::exp_i(th);
        let zr = QuatLoop::new(z.samples.iter().map(|s| u * *s).collect(), z.boundary);
        let (a, b) = (action_gradient(&sys, &z).unwrap(), action_gradient(&sys, &zr).unwrap());
        prop_assert!((a.value - b.value).abs() <= 1e-12 * a.value.abs().max(1.0));
        let (ga, gb) = (a.gradient.unwrap(), b.gradient.unwrap());
        for (x, y) in ga.samples.iter().zip(&gb.samples) {
            prop_assert!((u * *x - *y).norm() <= 1e-12 * ga.max_abs().max(1.0));
        }
    }

    #[test]
    fn gradient_error_is_second_order(seed in 0u64..1000, which in 0usize..3) {
        let sys = SystemConfig::new(["kepler", "rkp", "bcr4bp"][which]).build().unwrap();
        let z = perturb(&seed_loop("circle:R=0.55,plane=1j", 32).unwrap(), 0.05, seed);
        let xi = QuatLoop::new(perturb(&seed_loop("constant:R=1e-300", 32).unwrap(), 1.0, seed + 1).samples, Boundary::AntiPeriodic);
        let an = inner(&action_gradient(&sys, &z).unwrap().gradient.unwrap(), &xi);
        let fd = |h: f64| {
            let f = |s: f64| action_value(&sys, &axpy(s, &xi, &z)).unwrap().value;
            (f(h) - f(-h)) / (2.0 * h)
        };
        let errs: Vec<f64> = [4e-2, 2e-2, 1e-2].iter().map(|h| (fd(*h) - an).abs()).collect();
        prop_assert!((errs[0] / errs[1] - 4.0).abs() < 0.5 && (errs[1] / errs[2] - 4.0).abs() < 0.5, "{errs:?}");
        prop_assert!((fd(1e-5) - an).abs() < 1e-6 * an.abs().max(1.0));
    }
}

#[test]
fn constraint_is_constant_at_critical_points() {
    for (name, spec) in [
        ("kepler", "circle:R=0.5,noise=0.02"),
        ("rkp", "circle:R=0.6,plane=1k,noise=0.02"),
    ] {
        let sys = SystemConfig::new(name).build().unwrap();
        let cp = find_critical_point(
            &sys,
            &seed_loop(spec, 64).unwrap(),
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(cp.converged);
        let c = constraint_series(&cp.z);
        let spread = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - c.iter().cloned().fold(f64::INFINITY, f64::min);
        let scale = (norm_sqr(&cp.z.derivative()) * cp.report.norm_sqr).sqrt();
        assert!(spread < 1e-6 * scale, "{name}: spread {spread:.2e}");
    }
}
