//! Contact volume, action and the first-order functionals of a perturbation,
//! next to their closed forms.
//!
//! Usage: `cargo run --example functionals -- [omega] [h] [n]`
//! (`n` selects the pyramidal perturbation; omit it for the ellipsoid)

use kepler_kit::criteria::{ellipsoid_closed_forms, pyramidal_closed_forms};
use kepler_kit::model::SystemSpec;
use kepler_kit::quad::perturbation_functionals;

fn main() -> kepler_kit::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let omega: f64 = args.first().map(|a| a.parse().expect("numeric omega")).unwrap_or(1.0);
    let h: f64 = args.get(1).map(|a| a.parse().expect("numeric h")).unwrap_or(-0.375);
    let system = match args.get(2) {
        Some(n) => SystemSpec::Pyramid(n.parse().expect("integer n")),
        None => SystemSpec::Ellipsoid,
    };
    let numeric = perturbation_functionals(&system.params(omega, h, 0.0)?)?;
    let closed = match system {
        SystemSpec::Pyramid(n) => pyramidal_closed_forms(omega, h, n)?,
        _ => ellipsoid_closed_forms(omega, h)?,
    };
    println!("{system} at omega = {omega}, h = {h}");
    println!("{:>8} {:>22} {:>22}", "", "quadrature", "closed form");
    let rows = [
        ("Vol", numeric.vol, closed.vol),
        ("A", numeric.action, closed.action),
        ("T", numeric.period, closed.period),
        ("V~", numeric.v_tilde, closed.v_tilde),
        ("A~", numeric.a_tilde, closed.a_tilde),
        ("T~", numeric.t_tilde, closed.t_tilde),
        ("E", numeric.e_f, closed.e_f),
        ("D", numeric.d_f, closed.d_f),
    ];
    for (name, q, c) in rows {
        println!("{name:>8} {q:>22.15e} {c:>22.15e}");
    }
    if matches!(system, SystemSpec::Pyramid(_)) {
        println!("(V~ has no closed form for the pyramids; the closed-form column shows 0)");
    }
    Ok(())
}
