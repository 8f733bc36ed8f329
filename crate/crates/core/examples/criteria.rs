//! Evaluate the existence criteria for the built-in perturbations and print
//! the verdicts with their margins.
//!
//! Usage: `cargo run --example criteria -- [omega] [h]`

use kepler_kit::criteria::evaluate;
use kepler_kit::model::SystemSpec;

fn main() -> kepler_kit::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let omega = args.first().copied().unwrap_or(1.0);
    let h = args.get(1).copied().unwrap_or(-0.375);
    let systems = [SystemSpec::Ellipsoid, SystemSpec::Pyramid(2), SystemSpec::Pyramid(3), SystemSpec::Pyramid(10), SystemSpec::Pyramid(472)];
    println!("{:>10} {:>14} {:>14} {:>12} {:>22} {:>10}", "system", "lhs", "rhs", "dRot/deps", "verdict", "stability");
    for system in systems {
        let r = evaluate(&system.params(omega, h, 0.0)?)?;
        println!(
            "{:>10} {:>14.6e} {:>14.6e} {:>12.6} {:>22} {:>10}",
            system.to_string(),
            r.lhs,
            r.rhs,
            r.rot_derivative,
            r.verdict.to_string(),
            format!("{:?}", r.stability)
        );
    }
    Ok(())
}
