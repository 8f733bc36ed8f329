//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use kepler_kit::criteria::{self, CrossCheckConfig, Verdict};
use kepler_kit::flow::EigenKind;
use kepler_kit::kepler::{self, brake_pr_oracle, kepler_scalars};
use kepler_kit::model::{make_ellipsoid_perturbation, make_pyramidal_perturbation, Perturbation, SystemParams, SystemSpec};
use kepler_kit::orbits;
use kepler_kit::quad::{self, QuadConfig};
use kepler_kit::retmap::{self, SearchConfig, SectionGrid, SectionPoint};
use kepler_kit::Result;

type Outcome = Result<(bool, String)>;

const E_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

fn h_of(omega: f64, e: f64) -> f64 {
    (e * e - 1.0) / (2.0 * omega * omega)
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn ellipsoid() -> Arc<dyn Perturbation> {
    Arc::new(make_ellipsoid_perturbation())
}

fn pyramid(n: u32) -> Arc<dyn Perturbation> {
    Arc::new(make_pyramidal_perturbation(n).expect("n >= 2"))
}

fn kepler_identity() -> Outcome {
    let (mut worst_vol, mut worst_a): (f64, f64) = (0.0, 0.0);
    for omega in [0.5, 1.0, 2.0] {
        for e in E_GRID {
            let p = SystemParams::kepler(omega, h_of(omega, e))?;
            let a = kepler::kepler_action(omega, p.h);
            let vol = quad::contact_volume(&p)?.value;
            let aq = quad::action_and_period(&p)?.action.value;
            worst_vol = worst_vol.max(rel(vol, a * a));
            worst_a = worst_a.max(rel(aq, a));
        }
    }
    Ok((worst_vol <= 1e-6 && worst_a <= 1e-8, format!("Vol vs A^2 {worst_vol:.1e}, A {worst_a:.1e}")))
}

fn quadrature_oracles() -> Outcome {
    let report = quad::integral_selftests();
    let relevant: Vec<_> = report
        .cases
        .iter()
        .filter(|c| ["a=0.1", "a=0.5", "a=0.9", "e=0.1", "e=0.5", "e=0.9"].iter().any(|k| c.name.ends_with(k)))
        .collect();
    let worst = relevant.iter().map(|c| c.abs_err).fold(0.0, f64::max);
    Ok((relevant.len() == 18 && worst <= 1e-10, format!("{} cases, worst abs err {worst:.1e}", relevant.len())))
}

fn derivative_formulas() -> Outcome {
    let eps = 1e-4;
    let cfg = QuadConfig { tol_1d: 1e-12, tol_2d: 1e-10 };
    let mut worst: f64 = 0.0;
    let mut where_ = String::new();
    for (name, f) in [("ellipsoid", ellipsoid()), ("pyramid:2", pyramid(2)), ("pyramid:3", pyramid(3))] {
        for h in [-0.375, -0.18] {
            let p = SystemParams::new(1.0, h, 0.0, f.clone())?;
            let plus = p.with_signed_eps(eps)?;
            let minus = p.with_signed_eps(-eps)?;
            let fo = quad::first_order_functionals(&p, &cfg)?;
            let dvol = (quad::contact_volume_with(&plus, &cfg)?.value - quad::contact_volume_with(&minus, &cfg)?.value) / (2.0 * eps);
            let (ap, am) = (quad::action_and_period_with(&plus, &cfg)?, quad::action_and_period_with(&minus, &cfg)?);
            let da = (ap.action.value - am.action.value) / (2.0 * eps);
            let dt = (ap.period.value - am.period.value) / (2.0 * eps);
            // T̃ vanishes for the pyramids; compare on the scale of the period
            let checks = [
                ("Vol", dvol, -4.0 * PI * fo.v_tilde.value, 0.0),
                ("A", da, -2.0 * fo.a_tilde.value, 0.0),
                ("T", dt, fo.t_tilde.value, 2.0 * PI),
            ];
            for (what, fd, want, scale) in checks {
                let err = (fd - want).abs() / want.abs().max(scale);
                if err > worst {
                    worst = err;
                    where_ = format!("{name} h={h} {what}");
                }
            }
        }
    }
    Ok((worst <= 1e-3, format!("worst rel err {worst:.1e} ({where_})")))
}

fn rotation_number() -> Outcome {
    let rot0 = orbits::rotation_number(&SystemParams::kepler(1.0, -0.375)?, 8)?.rot;
    let p = SystemParams::new(1.0, -0.375, 0.0, ellipsoid())?;
    let d = orbits::rotation_derivative(&p, 1e-3, 8)?;
    let d_err = rel(d, 6.0);
    let mut stable = true;
    for f in [ellipsoid(), pyramid(2), pyramid(3)] {
        let r = criteria::evaluate(&SystemParams::new(1.0, -0.375, 0.0, f)?)?;
        stable &= r.stability == EigenKind::Elliptic;
    }
    let ok = (rot0 - 1.0).abs() <= 1e-6 && d_err <= 1e-2 && stable;
    Ok((ok, format!("Rot0-1 = {:.1e}, dRot/deps = {d:.6} (rel {d_err:.1e}), elliptic {stable}", rot0 - 1.0)))
}

fn brake_shooting() -> Outcome {
    let (omega, h) = (1.0, -0.375);
    let p = SystemParams::kepler(omega, h)?;
    let ks = kepler_scalars(omega, h)?;
    let mut worst: f64 = 0.0;
    for i in 1..=20 {
        let r = ks.r_min + (ks.r_max - ks.r_min) * i as f64 / 21.0;
        let f2 = orbits::brake_shooting_function(&p, r)?;
        worst = worst.max((f2 - brake_pr_oracle(r, omega, h)?).abs());
    }
    let root = orbits::shoot_brake_orbit(&p)?.r0;
    let root_err = (root - omega / (-2.0 * h).sqrt()).abs();
    let mut detail = format!("f2 {worst:.1e}, root {root_err:.1e}");
    let mut ok = worst <= 1e-7 && root_err <= 1e-8;
    for (name, f) in [("ellipsoid", ellipsoid()), ("pyramid:2", pyramid(2))] {
        let q = SystemParams::new(omega, h, 1e-2, f)?;
        let b = orbits::shoot_brake_orbit(&q)?;
        let planar = orbits::planar_orbit(&q)?;
        let link = orbits::hopf_link_check(&b, &planar)?;
        ok &= b.eps_reached == 1e-2 && b.symmetry_residual <= 1e-7 && link == 1;
        detail.push_str(&format!(", {name}: sym {:.1e} link {link}", b.symmetry_residual));
    }
    Ok((ok, detail))
}

fn return_map() -> Outcome {
    let p0 = SystemParams::kepler(1.0, -0.375)?;
    let grid = SectionGrid { n: 10, extent: 0.9 };
    let disk = retmap::SectionDisk::of(&p0)?;
    let mut ident: f64 = 0.0;
    for x in grid.points(&p0, &disk) {
        ident = ident.max(retmap::first_return(&x, &p0)?.image.distance(&x));
    }
    let p = SystemParams::new(1.0, -0.375, 1e-3, ellipsoid())?;
    let area = retmap::area_preservation_test(&p, &grid)?;
    let b = orbits::shoot_brake_orbit(&p)?;
    let x = SectionPoint::new(b.crossing.state.r, b.crossing.state.p_r);
    let fixed = retmap::first_return(&x, &p)?.image.distance(&x);
    let ok = ident <= 1e-7 && area.max_det_deviation <= 1e-5 && fixed <= 1e-6;
    Ok((ok, format!("identity {ident:.1e}, |det-1| {:.1e}, brake fixed {fixed:.1e}", area.max_det_deviation)))
}

fn criteria_verdicts() -> Outcome {
    let grid = criteria::eccentricity_grid(1.0, &E_GRID);
    let cfg = QuadConfig::default();
    let xcfg = CrossCheckConfig { rotation: false, ..CrossCheckConfig::default() };
    let mut bad = Vec::new();
    let mut worst: f64 = 0.0;
    let systems = [
        SystemSpec::Ellipsoid,
        SystemSpec::Pyramid(2),
        SystemSpec::Pyramid(3),
        SystemSpec::Pyramid(10),
        SystemSpec::Pyramid(100),
        SystemSpec::Pyramid(472),
    ];
    for sys in &systems {
        for row in criteria::sweep(sys, &grid, &cfg)? {
            if row.report.verdict != Verdict::InfinitelyManyViaIi {
                bad.push(format!("{sys} e={:.1}: {}", row.report.e, row.report.verdict));
            }
        }
        for &(omega, h) in &grid {
            let x = criteria::crosscheck(sys, omega, h, &xcfg)?;
            worst = x.entries.iter().filter(|e| e.tolerance > 0.0).map(|e| e.rel_err).fold(worst, f64::max);
            for f in x.failures() {
                bad.push(format!("{sys} h={h}: {} rel {:.1e}", f.name, f.rel_err));
            }
        }
    }
    let detail = if bad.is_empty() {
        format!("{} points via (ii), closed forms worst rel err {worst:.1e}", systems.len() * grid.len())
    } else {
        bad.join("; ")
    };
    Ok((bad.is_empty(), detail))
}

fn m_bound() -> Outcome {
    let mut ok = true;
    for n in 2..=472 {
        ok &= 2.0 * n as f64 > kepler::m_of_n(n)?;
    }
    let m473 = kepler::m_of_n(473)?;
    ok &= 2.0 * 473.0 <= m473;
    Ok((ok, format!("2n - M(n) = {:.4} at 472, {:.4} at 473", 944.0 - kepler::m_of_n(472)?, 946.0 - m473)))
}

fn periodic_search() -> Outcome {
    let p = SystemParams::new(1.0, -0.095, 1e-2, ellipsoid())?;
    let points = retmap::find_periodic_points(&p, &SearchConfig { k_max: 5, ..SearchConfig::default() })?;
    let periods: Vec<usize> = points.iter().map(|q| q.k).collect();
    Ok((points.len() >= 2, format!("{} distinct orbits, periods {periods:?}", points.len())))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("Kepler identity Vol = A^2", kepler_identity),
        ("quadrature oracles", quadrature_oracles),
        ("derivative formulas", derivative_formulas),
        ("rotation number", rotation_number),
        ("brake-orbit shooting", brake_shooting),
        ("return map", return_map),
        ("criteria verdicts", criteria_verdicts),
        ("M(n) bound", m_bound),
        ("periodic-point search", periodic_search),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let (ok, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!ok);
        println!("{} {}. {name}: {detail} [{:.1?}]", if ok { "PASS" } else { "FAIL" }, i + 1, t0.elapsed());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
