//! Critical points of the regularized action: the Kepler circle, and the
//! retrograde minimum and prograde saddle of the rotating Kepler problem.

use std::f64::consts::PI;

use stark_zeeman::bov::{
    find_critical_point, perturb, seed_loop, verify_generalized_solution, Method, SolverOptions,
};
use stark_zeeman::systems::SystemConfig;

fn main() -> stark_zeeman::Result<()> {
    let kepler = SystemConfig::new("kepler").build()?;
    let r = (4.0 * PI * PI).powf(-1.0 / 3.0);
    let seed = perturb(
        &seed_loop(&format!("circle:R={}", (1.2 * r).sqrt()), 128)?,
        0.01,
        3,
    );
    let cp = find_critical_point(&kepler, &seed, &SolverOptions::default())?;
    println!(
        "kepler: |z|^2 = {:.10} (expected {r:.10}), B = {:.10} (expected {:.10})",
        cp.report.norm_sqr,
        cp.report.value,
        1.5 / r
    );
    println!(
        "        {} iterations, gradient {:.1e}",
        cp.iterations,
        cp.gradient_norm()
    );

    let rkp = SystemConfig::new("rkp").build()?;
    // descent from a retrograde circle, Newton from a prograde one
    for (spec, method) in [
        ("circle:R=0.6,plane=1k", Method::Descent),
        ("circle:R=0.52,plane=1k,sense=-1", Method::Newton),
    ] {
        let seed = seed_loop(spec, 128)?;
        let cp = find_critical_point(
            &rkp,
            &seed,
            &SolverOptions {
                method,
                ..Default::default()
            },
        )?;
        let v = verify_generalized_solution(&rkp, &cp, 1e-4)?;
        println!(
            "rkp {method:?}: converged {}, |z|^2 = {:.7}, B = {:.4}, verified {}",
            cp.converged, cp.report.norm_sqr, cp.report.value, v.passed
        );
    }
    Ok(())
}
