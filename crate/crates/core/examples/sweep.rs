//! Sweep the criteria over eccentricity for one system and write the CSV
//! table to stdout.
//!
//! Usage: `cargo run --example sweep -- [system]` (e.g. `ellipsoid`, `pyramid:10`)

use kepler_kit::criteria::{eccentricity_grid, sweep, write_sweep_csv};
use kepler_kit::model::SystemSpec;
use kepler_kit::quad::QuadConfig;

fn main() -> kepler_kit::Result<()> {
    let system: SystemSpec = std::env::args().nth(1).as_deref().unwrap_or("ellipsoid").parse()?;
    let es: Vec<f64> = (1..20).map(|i| 0.05 * i as f64).collect();
    let rows = sweep(&system, &eccentricity_grid(1.0, &es), &QuadConfig::default())?;
    write_sweep_csv(&rows, std::io::stdout().lock()).expect("write to stdout");
    Ok(())
}
