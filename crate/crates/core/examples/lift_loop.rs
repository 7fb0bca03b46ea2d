//! Lifting physical loops to KS loops: a loop around the origin lifts to an
//! anti-periodic loop, one that does not encircle it lifts periodically.

use std::f64::consts::TAU;

use stark_zeeman::loops::VecLoop;
use stark_zeeman::reparam::{lift_loop, reconstruct_q};
use stark_zeeman::spectral::Boundary;
use stark_zeeman::Vec3;

fn main() -> stark_zeeman::Result<()> {
    let around = VecLoop::from_fn(256, Boundary::Periodic, |t| {
        Vec3::new(
            (TAU * t).cos(),
            (TAU * t).sin(),
            0.3 * (2.0 * TAU * t).sin(),
        )
    });
    let beside = VecLoop::from_fn(256, Boundary::Periodic, |t| {
        Vec3::new(2.0 + 0.5 * (TAU * t).cos(), 0.5 * (TAU * t).sin(), 0.1)
    });
    for (name, q) in [("around the origin", around), ("beside the origin", beside)] {
        let lifted = lift_loop(&q)?;
        let back = reconstruct_q(&lifted.z)?;
        let err = back
            .samples
            .iter()
            .zip(&q.samples)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        println!(
            "{name}: {:?} lift, holonomy {:.4}, round trip error {err:.2e}",
            lifted.z.boundary, lifted.holonomy
        );
    }
    Ok(())
}
