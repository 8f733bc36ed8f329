//! Property tests of the structural invariants across modules.

use std::sync::Arc;

use proptest::prelude::*;

use kepler_kit::criteria::{self, CriteriaReport};
use kepler_kit::flow::integrate;
use kepler_kit::kepler::{self, kepler_action};
use kepler_kit::model::{
    classify_kepler_surface, hamiltonian, make_ellipsoid_perturbation, make_pyramidal_perturbation, EnergySurfaceClass,
    Perturbation, PhaseState, SystemParams,
};
use kepler_kit::quad;
use kepler_kit::retmap::{first_return, SectionDisk};

fn rank(c: EnergySurfaceClass) -> usize {
    match c {
        EnergySurfaceClass::Empty => 0,
        EnergySurfaceClass::Point => 1,
        EnergySurfaceClass::CompactS3 => 2,
        EnergySurfaceClass::Unbounded => 3,
    }
}

fn perturbation(n: u32) -> Arc<dyn Perturbation> {
    if n < 2 {
        Arc::new(make_ellipsoid_perturbation())
    } else {
        Arc::new(make_pyramidal_perturbation(n).expect("n >= 2"))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn classification_is_monotone_in_energy(omega in 0.2f64..3.0, h1 in -2.0f64..1.0, dh in 0.0f64..1.0) {
        let a = classify_kepler_surface(omega, h1);
        let b = classify_kepler_surface(omega, h1 + dh);
        prop_assert!(rank(a) <= rank(b), "{a:?} at {h1} then {b:?} at {}", h1 + dh);
    }

    #[test]
    fn perturbations_are_even_in_z(n in 0u32..12, r in 0.05f64..5.0, z in -5.0f64..5.0) {
        let f = perturbation(n);
        let (a, b) = (f.value(r, z, 0.0), f.value(r, -z, 0.0));
        prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
        prop_assert!((f.df_dz(r, z, 0.0) + f.df_dz(r, -z, 0.0)).abs() <= 1e-10 * f.df_dz(r, z, 0.0).abs().max(1.0));
    }

    #[test]
    fn m_of_n_is_increasing(n in 2u32..2000) {
        prop_assert!(kepler::m_of_n(n + 1).unwrap() > kepler::m_of_n(n).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn kepler_volume_is_the_squared_action(omega in 0.3f64..3.0, e in 0.05f64..0.95) {
        let h = (e * e - 1.0) / (2.0 * omega * omega);
        let p = SystemParams::kepler(omega, h).unwrap();
        let vol = quad::contact_volume(&p).unwrap().value;
        let a = kepler_action(omega, h);
        prop_assert!((vol - a * a).abs() <= 1e-6 * a * a);
    }

    #[test]
    fn flow_conserves_energy(n in 0u32..5, eps in 0.0f64..0.05, r in 0.8f64..1.5, z in -0.3f64..0.3, p_r in -0.2f64..0.2) {
        let params = SystemParams::new(1.0, -0.3, eps, perturbation(n)).unwrap();
        let mut start = PhaseState::new(p_r, 0.0, r, z);
        let q = 2.0 * (params.h - params.potential(r, z)) - p_r * p_r;
        prop_assume!(q > 1e-3);
        start.p_z = q.sqrt();
        let tr = integrate(start, &params, 30.0, 1e-12).unwrap();
        for s in &tr.samples {
            prop_assert!((hamiltonian(&s.state, &params).unwrap() - params.h).abs() <= 1e-9);
        }
    }

    #[test]
    fn first_order_data_flips_sign_with_the_perturbation(n in 0u32..6, e in 0.1f64..0.9) {
        let h = (e * e - 1.0) / 2.0;
        let p = SystemParams::new(1.0, h, 0.0, perturbation(n)).unwrap();
        let cfg = quad::QuadConfig::default();
        let plus = quad::first_order_functionals(&p, &cfg).unwrap();
        let minus = quad::first_order_functionals(&p.negated(), &cfg).unwrap();
        for (a, b) in [(plus.v_tilde, minus.v_tilde), (plus.a_tilde, minus.a_tilde), (plus.e_f, minus.e_f)] {
            prop_assert!((a.value + b.value).abs() <= 1e-12 * a.value.abs().max(1.0));
        }
        prop_assert!((plus.d_f.value - minus.d_f.value).abs() <= 1e-10 * plus.d_f.value.abs().max(1.0));
    }

    #[test]
    fn unperturbed_return_map_is_the_identity(x in -0.9f64..0.9, y in -0.9f64..0.9) {
        let p = SystemParams::kepler(1.0, -0.375).unwrap();
        let pt = SectionDisk::of(&p).unwrap().point(&p, x, y);
        let img = first_return(&pt, &p).unwrap().image;
        prop_assert!(img.distance(&pt) <= 1e-7);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn criteria_reports_round_trip_through_json(n in 0u32..5, e in 0.1f64..0.9) {
        let h = (e * e - 1.0) / 2.0;
        let report = criteria::evaluate(&SystemParams::new(1.0, h, 0.0, perturbation(n)).unwrap()).unwrap();
        let text = kepler_kit::report::to_json(&report).unwrap();
        let back: CriteriaReport = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.verdict, report.verdict);
        prop_assert_eq!(back.lhs.to_bits(), report.lhs.to_bits());
        prop_assert_eq!(back.rhs.to_bits(), report.rhs.to_bits());
        prop_assert_eq!(back.margin.to_bits(), report.margin.to_bits());
    }
}

#[test]
fn verdicts_are_stable_under_tighter_quadrature() {
    for n in [0u32, 2, 3, 10] {
        for e in [0.2, 0.5, 0.8] {
            let h = (e * e - 1.0) / 2.0;
            let p = SystemParams::new(1.0, h, 0.0, perturbation(n)).unwrap();
            let loose = criteria::evaluate_with(&p, &quad::QuadConfig::default()).unwrap();
            let tight = criteria::evaluate_with(&p, &quad::QuadConfig { tol_1d: 1e-11, tol_2d: 1e-9 }).unwrap();
            assert_eq!(loose.verdict, tight.verdict, "n = {n}, e = {e}");
            assert!((loose.margin - tight.margin).abs() <= loose.margin_err.max(1e-9), "n = {n}, e = {e}");
        }
    }
}
