//! A collision orbit of the Kepler problem: a periodic KS loop with two zeros
//! whose projection bounces along a segment through the origin.

use std::f64::consts::PI;

use stark_zeeman::bov::{seed_loop, verify_generalized_solution, CriticalPoint};
use stark_zeeman::systems::Kepler;

fn main() -> stark_zeeman::Result<()> {
    let a = (2.0 * (16.0 * PI * PI).powf(-1.0 / 3.0)).sqrt();
    let z = seed_loop(&format!("segment:a={a}"), 256)?;
    let cp = CriticalPoint::evaluate(&Kepler, &z, 1e-8)?;
    println!(
        "B = {:.10}, gradient {:.2e}, converged {}",
        cp.report.value,
        cp.gradient_norm(),
        cp.converged
    );
    let v = verify_generalized_solution(&Kepler, &cp, 1e-4)?;
    println!("zeros at tau = {:?}", v.zeros);
    for c in &v.checks {
        println!(
            "  {:<24} {:>10.3e}  {}",
            c.name,
            c.value,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    let r = cp
        .q_loop
        .samples
        .iter()
        .map(|q| q.norm())
        .fold(0.0, f64::max);
    println!("apocenter {r:.8}, energy constant {:.8}", v.c_constant);

    let path = std::env::temp_dir().join("collision_orbit.json");
    cp.write_json(&path, Some(&v))?;
    println!("wrote {}", path.display());
    Ok(())
}
