//! Shoot the symmetric brake orbit, continue it in eps and check that it
//! links the planar orbit once.
//!
//! Usage: `cargo run --example brake_orbit -- [omega] [h] [n]`
//! (`n` selects the pyramidal perturbation; omit it for the ellipsoid)

use kepler_kit::model::SystemSpec;
use kepler_kit::orbits::{hopf_link_check, planar_orbit, shoot_brake_orbit};

fn main() -> kepler_kit::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let omega: f64 = args.first().map(|a| a.parse().expect("numeric omega")).unwrap_or(1.0);
    let h: f64 = args.get(1).map(|a| a.parse().expect("numeric h")).unwrap_or(-0.375);
    let system = match args.get(2) {
        Some(n) => SystemSpec::Pyramid(n.parse().expect("integer n")),
        None => SystemSpec::Ellipsoid,
    };
    println!("{system}: brake orbits at omega = {omega}, h = {h}");
    println!("{:>8} {:>18} {:>14} {:>10} {:>10} {:>5}", "eps", "r0", "period", "symmetry", "closure", "link");
    for eps in [0.0, 1e-3, 5e-3, 1e-2] {
        let params = system.params(omega, h, eps)?;
        let brake = shoot_brake_orbit(&params)?;
        let link = hopf_link_check(&brake, &planar_orbit(&params)?)?;
        println!(
            "{eps:>8.0e} {:>18.14} {:>14.8} {:>10.1e} {:>10.1e} {link:>5}",
            brake.r0, brake.period, brake.symmetry_residual, brake.closure_residual
        );
    }
    Ok(())
}
