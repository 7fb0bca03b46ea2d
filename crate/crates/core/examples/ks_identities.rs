//! The KS map on random quaternions: norm squaring, purity, fiber invariance,
//! and the transpose formula for its differential.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stark_zeeman::ksgeom::{
    fiber_rotate, ks_diff_transpose_vec, ks_diff_vec, ks_lift, ks_map_vec, ks_section,
};
use stark_zeeman::{Quaternion, Vec3};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = [0.0f64; 4];
    for _ in 0..10_000 {
        let z = Quaternion::new(rng.gen(), rng.gen(), rng.gen(), rng.gen()) * 2.0
            - Quaternion::new(1.0, 1.0, 1.0, 1.0);
        let v = Vec3::new(rng.gen(), rng.gen(), rng.gen());
        let n2 = z.norm_sqr();
        let q = ks_map_vec(&z);
        worst[0] = worst[0].max((q.norm() - n2).abs() / n2);
        worst[1] = worst[1].max((z.conj() * Quaternion::I * z).re().abs() / n2);
        let th = rng.gen_range(0.0..std::f64::consts::TAU);
        worst[2] = worst[2].max((ks_map_vec(&fiber_rotate(&z, th)) - q).norm() / n2);
        // <dPhi(z) u, v> = <u, dPhi(z)^T v> for every u
        let u = Quaternion::new(rng.gen(), rng.gen(), rng.gen(), rng.gen());
        let lhs = ks_diff_vec(&z, &u).dot(&v);
        let rhs = u.dot(&ks_diff_transpose_vec(&z, &v));
        worst[3] = worst[3].max((lhs - rhs).abs() / (z.norm() * u.norm() * v.norm()));
    }
    println!("|Phi(z)| = |z|^2        max rel err {:.2e}", worst[0]);
    println!("Re conj(z) i z = 0      max rel err {:.2e}", worst[1]);
    println!("Phi(e^(i t) z) = Phi(z) max rel err {:.2e}", worst[2]);
    println!("dPhi^T v = -2 i z v     max rel err {:.2e}", worst[3]);

    // a phase point and its lift back
    let q = Vec3::new(0.3, -0.4, 1.2);
    let p = Vec3::new(0.1, 0.7, -0.2);
    let z = ks_section(&q).unwrap();
    let w = ks_diff_transpose_vec(&z, &p);
    let back = ks_lift(&z, &w).unwrap();
    println!("section z = {:?}", z.0);
    println!(
        "lift error |q| {:.1e}, |p| {:.1e}",
        (back.q - q).norm(),
        (back.p - p).norm()
    );
}
