//! Moser regularized flow of the restricted three-body problem through a
//! close approach, compared with direct integration away from the primary.

use stark_zeeman::flow::{integrate_hamiltonian, FlowOptions};
use stark_zeeman::ksgeom::PhasePoint;
use stark_zeeman::moser::{integrate_moser, moser_decode, moser_encode};
use stark_zeeman::systems::{critical_energy, hamiltonian, Gauge, StarkZeeman, SystemConfig};
use stark_zeeman::Vec3;

fn main() -> stark_zeeman::Result<()> {
    let sys = SystemConfig::new("cr3bp").with("mu", 0.01).build()?;
    let crit = critical_energy(&sys)?.value;
    // released from rest, the particle falls almost straight onto the primary
    let q0 = Vec3::new(0.1, 0.0, 0.0);
    let x0 = PhasePoint::new(q0, sys.vector_potential(&q0));
    let c = hamiltonian(&sys, 0.0, &x0, Gauge::Coupled)?;
    println!("c = {c:.8}, first critical energy {crit:.8}");

    let opts = FlowOptions::with_tol(1e-12);
    let reg = integrate_moser(&sys, c, moser_encode(&x0), (0.0, 30.0), &opts)?;
    println!(
        "H_M drift {:.2e}, physical time covered {:.4}",
        reg.h_m_drift(),
        reg.t_phys.last().unwrap()
    );
    let t_end = *reg.t_phys.last().unwrap();

    let direct = integrate_hamiltonian(
        &sys,
        x0,
        Gauge::Coupled,
        (0.0, t_end),
        &FlowOptions {
            r_stop: 1e-9,
            ..opts
        },
    )?;
    let mut worst = 0.0f64;
    let mut closest = f64::INFINITY;
    for (s, t) in reg.states.iter().zip(&reg.t_phys) {
        let x = moser_decode(s)?;
        closest = closest.min(x.q.norm());
        if x.q.norm() < 0.05 {
            continue;
        }
        if let Some(d) = direct.interpolate(*t) {
            worst = worst.max((d.q - x.q).norm());
        }
    }
    println!("closest approach {closest:.3e}; max |q_moser - q_direct| away from the primary {worst:.2e}");
    println!(
        "direct integration stopped early: {}",
        direct.stats.collision
    );
    Ok(())
}
