//! Rotation number of the planar orbit as the perturbation is switched on,
//! compared with the first-order prediction.
//!
//! Usage: `cargo run --example rotation -- [omega] [h]`

use kepler_kit::criteria::evaluate;
use kepler_kit::model::SystemSpec;
use kepler_kit::orbits::{planar_orbit, rotation_number};

fn main() -> kepler_kit::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let omega = args.first().copied().unwrap_or(1.0);
    let h = args.get(1).copied().unwrap_or(-0.375);
    let system = SystemSpec::Ellipsoid;
    let slope = evaluate(&system.params(omega, h, 0.0)?)?.rot_derivative;
    println!("first-order slope dRot/deps = {slope:.8}");
    println!("{:>8} {:>18} {:>18} {:>12} {:>10}", "eps", "Rot", "1 + slope*eps", "period", "stability");
    for eps in [0.0, 1e-4, 1e-3, 1e-2, 5e-2] {
        let params = system.params(omega, h, eps)?;
        let rot = rotation_number(&params, 8)?;
        let orbit = planar_orbit(&params)?;
        println!(
            "{eps:>8.0e} {:>18.12} {:>18.12} {:>12.6} {:>10}",
            rot.rot,
            1.0 + slope * eps,
            orbit.period,
            format!("{:?}", rot.stability)
        );
    }
    Ok(())
}
