//! The bicircular four-body problem integrated with its rotating-frame
//! potential and with the time-independent magnetic gauge.

use stark_zeeman::flow::{integrate_coupled, integrate_hamiltonian, FlowOptions};
use stark_zeeman::ksgeom::PhasePoint;
use stark_zeeman::systems::{Gauge, StarkZeeman, System, SystemConfig};
use stark_zeeman::Vec3;

fn main() -> stark_zeeman::Result<()> {
    let System::Bcr4bp(sys) = SystemConfig::new("bcr4bp").build()? else {
        unreachable!()
    };
    println!("{sys:?}");
    let q0 = Vec3::new(0.1, 0.05, 0.02);
    let v0 = Vec3::new(-0.1, 0.3, 0.0);
    let span = (0.0, 3.0);
    let opts = FlowOptions::with_tol(1e-12);

    let fixed = integrate_hamiltonian(
        &sys,
        PhasePoint::new(q0, v0 + sys.vector_potential(&q0)),
        Gauge::Coupled,
        span,
        &opts,
    )?;
    let rotating = integrate_coupled(
        &sys.rotating_gauge(),
        PhasePoint::new(q0, v0 + sys.rotating_potential(0.0, &q0)),
        span,
        &opts,
    )?;
    let mut gap = 0.0f64;
    for k in 0..=300 {
        let t = span.1 * k as f64 / 300.0;
        if let (Some(a), Some(b)) = (fixed.interpolate(t), rotating.interpolate(t)) {
            gap = gap.max((a.q - b.q).norm());
        }
    }
    println!("max |q_fixed - q_rotating| over [0, 3]: {gap:.2e}");

    // without the third body and the second barycenter the fields are those of the CR3BP
    let reduced = SystemConfig::new("bcr4bp")
        .with("m_s", 0.0)
        .with("omega", 0.0)
        .build()?;
    let cr3bp = SystemConfig::new("cr3bp").with("mu", sys.mu).build()?;
    let q = Vec3::new(0.2, -0.1, 0.05);
    println!(
        "reduced vs cr3bp: |dA| {:.1e}, |dE| {:.1e}",
        (reduced.vector_potential(&q) - cr3bp.vector_potential(&q)).norm(),
        (reduced.electric(0.7, &q) - cr3bp.electric(0.7, &q)).abs()
    );
    Ok(())
}
