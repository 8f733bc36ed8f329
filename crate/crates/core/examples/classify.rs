//! Classify energy surfaces across `h` and print the Kepler scalars of the
//! compact ones.
//!
//! Usage: `cargo run --example classify -- [omega]`

use kepler_kit::kepler::kepler_scalars;
use kepler_kit::model::{classify_kepler_surface, classify_pyramidal_surface, EnergySurfaceClass};

fn main() -> kepler_kit::Result<()> {
    let omega: f64 = std::env::args().nth(1).map(|a| a.parse().expect("numeric omega")).unwrap_or(1.0);
    println!("{:>8} {:>12} {:>12} {:>10} {:>10} {:>10}", "h", "kepler", "pyramid:3", "e", "A", "Vol");
    for i in 0..=12 {
        let h = -0.6 + 0.05 * i as f64;
        let class = classify_kepler_surface(omega, h);
        let pyr = classify_pyramidal_surface(omega, h, 0.01, 3)?;
        print!("{h:>8.3} {:>12} {:>12}", format!("{class:?}"), format!("{pyr:?}"));
        if class == EnergySurfaceClass::CompactS3 {
            let ks = kepler_scalars(omega, h)?;
            print!(" {:>10.6} {:>10.6} {:>10.6}", ks.e, ks.action, ks.volume);
        }
        println!();
    }
    Ok(())
}
