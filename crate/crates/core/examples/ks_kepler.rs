//! Kepler flow regularized in KS coordinates, projected back to physical
//! space and compared with the direct flow.

use stark_zeeman::flow::{integrate_hamiltonian, FlowOptions};
use stark_zeeman::ksgeom::PhasePoint;
use stark_zeeman::ksham::{integrate_ks, ks_encode, KsRegConfig};
use stark_zeeman::systems::{hamiltonian, Gauge, Kepler};
use stark_zeeman::Vec3;

fn main() -> stark_zeeman::Result<()> {
    // an eccentric ellipse with a tight pericenter
    let x0 = PhasePoint::new(Vec3::new(1.0, 0.0, 0.2), Vec3::new(0.0, 0.35, 0.05));
    let c = hamiltonian(&Kepler, 0.0, &x0, Gauge::Coupled)?;
    let k = ks_encode(&x0)?;
    let opts = FlowOptions::with_tol(1e-12);
    let reg = integrate_ks(&Kepler, &KsRegConfig::new(c), k.z, k.w, (0.0, 10.0), &opts)?;
    let t_end = *reg.t_phys.last().unwrap();
    println!("energy {c:.6}, physical time reached {t_end:.4}");
    println!(
        "K_c drift {:.2e}, BL drift {:.2e}",
        reg.k_drift(),
        reg.bl_drift()
    );

    let direct = integrate_hamiltonian(&Kepler, x0, Gauge::Coupled, (0.0, t_end), &opts)?;
    let mut worst = 0.0f64;
    let mut rmin = f64::INFINITY;
    for (x, t) in reg.physical.iter().zip(&reg.t_phys) {
        let (Some(x), Some(d)) = (x, direct.interpolate(*t)) else {
            continue;
        };
        rmin = rmin.min(x.q.norm());
        worst = worst.max((x.q - d.q).norm());
    }
    println!("pericenter {rmin:.4e}, max |q_ks - q_direct| {worst:.2e}");
    Ok(())
}
