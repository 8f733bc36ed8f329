//! Search the first-return map of the ellipsoid problem for periodic points.
//!
//! Usage: `cargo run --example periodic_points -- [omega] [h] [eps] [k_max]`

use std::sync::Arc;
use std::time::Instant;

use kepler_kit::model::{make_ellipsoid_perturbation, SystemParams};
use kepler_kit::retmap::{find_periodic_points, write_catalog, SearchConfig};

fn main() -> kepler_kit::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let omega = args.first().copied().unwrap_or(1.0);
    let h = args.get(1).copied().unwrap_or(-0.375);
    let eps = args.get(2).copied().unwrap_or(1e-2);
    let k_max = args.get(3).map(|k| *k as usize).unwrap_or(5);
    let params = SystemParams::new(omega, h, eps, Arc::new(make_ellipsoid_perturbation()))?;
    let cfg = SearchConfig { k_max, ..SearchConfig::default() };
    let t0 = Instant::now();
    let points = find_periodic_points(&params, &cfg)?;
    println!("{} distinct periodic orbits with k <= {k_max} ({:.1?})", points.len(), t0.elapsed());
    write_catalog(&points, std::io::stdout()).expect("write to stdout");
    Ok(())
}
