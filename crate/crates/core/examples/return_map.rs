//! Iterate the first-return map on the section disk and measure how well it
//! preserves area.
//!
//! Usage: `cargo run --example return_map -- [omega] [h] [eps]`

use kepler_kit::model::SystemSpec;
use kepler_kit::retmap::{area_preservation_test, first_return, SectionDisk, SectionGrid};

fn main() -> kepler_kit::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let omega = args.first().copied().unwrap_or(1.0);
    let h = args.get(1).copied().unwrap_or(-0.375);
    let eps = args.get(2).copied().unwrap_or(1e-2);
    let params = SystemSpec::Ellipsoid.params(omega, h, eps)?;
    let disk = SectionDisk::of(&params)?;
    println!("section disk r in [{:.6}, {:.6}]", disk.r1, disk.r2);

    // one orbit of the map, printed as (r, p_r, return time)
    let mut x = disk.point(&params, 0.5, 0.0);
    for i in 0..8 {
        let ret = first_return(&x, &params)?;
        println!("{i:>3} r = {:.10} p_r = {:+.10} time = {:.6}", x.r, x.p_r, ret.return_time);
        x = ret.image;
    }

    let area = area_preservation_test(&params, &SectionGrid::default())?;
    println!(
        "{} grid points: max |det J - 1| = {:.2e}, max displacement = {:.3e}",
        area.points_tested, area.max_det_deviation, area.max_displacement
    );
    Ok(())
}
