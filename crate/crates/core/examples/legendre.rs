//! The non-local Legendre transform: at a critical loop the Hamiltonian
//! action agrees with the regularized action, away from it the gap is explicit.

use stark_zeeman::bov::{
    action_gap, find_critical_point, hamiltonian_action, legendre_transform, perturb, seed_loop,
    SolverOptions,
};
use stark_zeeman::systems::SystemConfig;

fn main() -> stark_zeeman::Result<()> {
    let sys = SystemConfig::new("rkp").build()?;
    let cp = find_critical_point(
        &sys,
        &seed_loop("circle:R=0.6,noise=0.01", 64)?,
        &SolverOptions::default(),
    )?;
    let l = legendre_transform(&sys, &cp.z)?;
    println!(
        "critical loop: B = {:.10}, A_H = {:.10}",
        cp.report.value, l.action
    );
    println!(
        "  Hamilton residual {:.2e}, gap {:.2e}",
        l.residual, l.identity_gap
    );

    let z = perturb(&cp.z, 0.05, 1);
    let w = perturb(&legendre_transform(&sys, &z)?.w, 0.2, 2);
    let h = hamiltonian_action(&sys, &z, &w)?;
    let c = action_gap(&sys, &z, &w)?;
    println!(
        "off-critical: gap {:.12}, correction {:.12}, difference {:.1e}",
        h.identity_gap,
        c,
        (h.identity_gap - c).abs()
    );
    Ok(())
}
