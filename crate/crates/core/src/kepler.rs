//! Closed forms of the unperturbed reduced Kepler problem.
//!
//! Each quantity is its own function so that tests elsewhere can use any one
//! of them as an independent oracle. `ω` enters only through `|ω|`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalars of a compact Kepler energy surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeplerScalars {
    pub e: f64,
    pub a: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub action: f64,
    pub volume: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub circular_brake_r: f64,
    pub period: f64,
}

fn check_window(omega: f64, h: f64) -> Result<()> {
    let x = 2.0 * h * omega * omega;
    if omega == 0.0 || !(x > -1.0 && x < 0.0) {
        return Err(Error::domain(format!("2hω² = {x} outside (−1, 0)")));
    }
    Ok(())
}

/// `e = √(1 + 2hω²)`, clamped at zero.
pub fn eccentricity(omega: f64, h: f64) -> f64 {
    f64::max(0.0, 1.0 + 2.0 * h * omega * omega).sqrt()
}

/// `C(e) = 1/√(1 − e²) − 1`.
pub fn c_of_e(e: f64) -> f64 {
    1.0 / (1.0 - e * e).sqrt() - 1.0
}

/// Action of the planar orbit, `2π|ω| C(e)`.
pub fn kepler_action(omega: f64, h: f64) -> f64 {
    2.0 * PI * omega.abs() * c_of_e(eccentricity(omega, h))
}

/// Kepler's third law, `2π a^{3/2}` with `a = ω²/(1 − e²) = −1/(2h)`.
pub fn kepler_period(omega: f64, h: f64) -> f64 {
    let e = eccentricity(omega, h);
    let a = omega * omega / (1.0 - e * e);
    2.0 * PI * a.powf(1.5)
}

pub fn kepler_scalars(omega: f64, h: f64) -> Result<KeplerScalars> {
    check_window(omega, h)?;
    let w2 = omega * omega;
    let e = eccentricity(omega, h);
    let action = kepler_action(omega, h);
    Ok(KeplerScalars {
        e,
        a: w2 / (1.0 - e * e),
        r_min: w2 / (1.0 + e),
        r_max: w2 / (1.0 - e),
        action,
        volume: action * action,
        c: c_of_e(e),
        circular_brake_r: omega.abs() / (-2.0 * h).sqrt(),
        period: kepler_period(omega, h),
    })
}

/// Planar orbit radius as a function of the true anomaly, `ω²/(1 + e cos θ)`.
pub fn orbit_radius(theta: f64, omega: f64, h: f64) -> f64 {
    omega * omega / (1.0 + eccentricity(omega, h) * theta.cos())
}

/// Spherical radii `ρ±(φ)` bounding the Kepler Hill region at latitude `φ`,
/// or `None` beyond the latitude where the region closes.
pub fn hill_rho_bounds(phi: f64, omega: f64, h: f64) -> Option<(f64, f64)> {
    let c2 = phi.cos().powi(2);
    let disc = 1.0 + 2.0 * h * omega * omega / c2;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some(((1.0 - s) / (-2.0 * h), (1.0 + s) / (-2.0 * h)))
}

/// Upper Hill boundary height `z(r) ≥ 0` of the Kepler region, for `r` in
/// `[r_min, r_max]`.
pub fn hill_boundary_z(r: f64, omega: f64, h: f64) -> f64 {
    let k = omega * omega / (2.0 * r * r) - h;
    let rho = 1.0 / k;
    f64::max(0.0, rho * rho - r * r).sqrt()
}

/// Radial momentum at the first descending crossing of `z = 0` for the brake
/// orbit released from rest on the upper Hill boundary at radius `r0`.
pub fn brake_pr_oracle(r0: f64, omega: f64, h: f64) -> Result<f64> {
    if r0 <= 0.0 {
        return Err(Error::domain("r0 must be positive"));
    }
    let w = omega.abs();
    Ok((w * w + 2.0 * h * r0 * r0) / (2.0 * w * r0))
}

/// `M(n) = ½ Σ_{i=1}^{n−1} csc(iπ/n)`, summed in symmetric pairs.
pub fn m_of_n(n: u32) -> Result<f64> {
    if n < 2 {
        return Err(Error::domain(format!("n = {n} must be at least 2")));
    }
    let nf = n as f64;
    let mut sum = 0.0;
    // csc(iπ/n) = csc((n−i)π/n); accumulate from the smallest terms up.
    for i in (1..=(n - 1) / 2).rev() {
        sum += 2.0 / (i as f64 * PI / nf).sin();
    }
    if n % 2 == 0 {
        sum += 1.0;
    }
    Ok(0.5 * sum)
}

/// `G(e) = √(1 − q⁴)` with `q = −e/(1 + √(1 − e²))`.
pub fn g_of_e(e: f64) -> f64 {
    let q = -e / (1.0 + (1.0 - e * e).sqrt());
    (1.0 - q.powi(4)).sqrt()
}

/// `∫₀^π cos(nt)/(1 + e cos t) dt = (π/√(1 − e²)) qⁿ`.
pub fn cosine_series_integral(n: u32, e: f64) -> f64 {
    let s = (1.0 - e * e).sqrt();
    let q = -e / (1.0 + s);
    PI / s * q.powi(n as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalars_at_reference_point() {
        let k = kepler_scalars(1.0, -0.375).unwrap();
        assert!((k.e - 0.5).abs() < 1e-15);
        assert!((k.r_min - 2.0 / 3.0).abs() < 1e-15);
        assert!((k.r_max - 2.0).abs() < 1e-15);
        let a = 2.0 * PI * (2.0 / 3f64.sqrt() - 1.0);
        assert!((k.action - a).abs() < 1e-15);
        assert!((k.action - 0.972012).abs() < 1e-6);
        assert!((k.volume - 0.944808).abs() < 1e-6);
        assert!((k.circular_brake_r - 1.154701).abs() < 1e-6);
        assert!((k.period - 9.67359).abs() < 1e-5);
        assert!(kepler_scalars(1.0, -0.6).is_err());
        assert!(kepler_scalars(1.0, 0.0).is_err());
    }

    #[test]
    fn radius_examples() {
        assert!((orbit_radius(0.0, 1.0, -0.375) - 2.0 / 3.0).abs() < 1e-15);
        assert!((orbit_radius(PI, 1.0, -0.375) - 2.0).abs() < 1e-14);
        assert!((orbit_radius(PI / 2.0, 1.0, -0.375) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn brake_oracle_examples() {
        let r1 = 1.0 / 0.75f64.sqrt();
        assert!(brake_pr_oracle(r1, 1.0, -0.375).unwrap().abs() < 1e-15);
        assert!((brake_pr_oracle(2.0 / 3.0, 1.0, -0.375).unwrap() - 0.5).abs() < 1e-15);
        assert!((brake_pr_oracle(2.0, 1.0, -0.375).unwrap() + 0.5).abs() < 1e-15);
        assert!(brake_pr_oracle(0.0, 1.0, -0.375).is_err());
    }

    #[test]
    fn brake_oracle_has_single_root() {
        for (w, h) in [(1.0, -0.375), (0.5, -0.9), (2.0, -0.05)] {
            let k = kepler_scalars(w, h).unwrap();
            let g = |r: f64| brake_pr_oracle(r, w, h).unwrap();
            let (mut lo, mut hi) = (k.r_min, k.r_max);
            assert!(g(lo) > 0.0 && g(hi) < 0.0);
            while hi - lo > 1e-13 {
                let mid = 0.5 * (lo + hi);
                if g(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            assert!((lo - k.circular_brake_r).abs() < 1e-12);
            let mut sign_changes = 0;
            let n = 1000;
            for i in 0..n {
                let a = k.r_min + (k.r_max - k.r_min) * i as f64 / n as f64;
                let b = k.r_min + (k.r_max - k.r_min) * (i + 1) as f64 / n as f64;
                if g(a).signum() != g(b).signum() {
                    sign_changes += 1;
                }
            }
            assert_eq!(sign_changes, 1);
        }
    }

    #[test]
    fn m_of_n_values() {
        assert_eq!(m_of_n(2).unwrap(), 0.5);
        assert!((m_of_n(3).unwrap() - 2.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!(m_of_n(1).is_err());
        let naive = |n: u32| 0.5 * (1..n).map(|i| 1.0 / (i as f64 * PI / n as f64).sin()).sum::<f64>();
        for n in [4, 10, 101, 472] {
            assert!((m_of_n(n).unwrap() - naive(n)).abs() < 1e-11 * naive(n));
        }
    }

    #[test]
    fn m_of_n_is_increasing_and_crosses_2n_after_472() {
        let mut prev = 0.0;
        for n in 2..=600 {
            let m = m_of_n(n).unwrap();
            assert!(m > prev);
            prev = m;
            if n <= 472 {
                assert!(2.0 * n as f64 > m, "n = {n}");
            } else {
                assert!(2.0 * n as f64 <= m, "n = {n}");
            }
        }
    }

    #[test]
    fn g_of_e_values() {
        assert_eq!(g_of_e(0.0), 1.0);
        assert!((g_of_e(0.5) - 0.997419).abs() < 1e-6);
        for e in [0.1, 0.5, 0.9] {
            assert!(g_of_e(e) / (1.0 - e * e).sqrt() > 1.0);
        }
    }

    #[test]
    fn cosine_series_values() {
        assert!((cosine_series_integral(0, 0.5) - 3.627599).abs() < 1e-6);
        assert!((cosine_series_integral(1, 0.5) + 0.972012).abs() < 1e-6);
        for n in 1..5 {
            assert!(cosine_series_integral(n, 1e-12).abs() < 1e-11);
        }
    }

    #[test]
    fn hill_radii_exceed_half_omega_squared() {
        for i in 1..50 {
            for w in [0.3, 1.0, 3.0] {
                let x = -(i as f64) / 50.0;
                let h = x / (2.0 * w * w);
                let k = kepler_scalars(w, h).unwrap();
                assert!(k.r_min > w * w / 2.0 && k.r_min <= k.r_max);
                assert!((k.volume - k.action * k.action).abs() <= 1e-15 * k.volume.max(1e-300));
            }
        }
    }

    #[test]
    fn hill_boundary_consistent_with_spherical_bounds() {
        let (w, h) = (1.0, -0.375);
        for i in 1..20 {
            let phi = 0.05 * i as f64;
            if let Some((lo, hi)) = hill_rho_bounds(phi, w, h) {
                for rho in [lo, hi] {
                    let (r, z) = (rho * phi.cos(), rho * phi.sin());
                    assert!((w * w / (2.0 * r * r) - 1.0 / rho - h).abs() < 1e-12);
                    assert!((hill_boundary_z(r, w, h) - z).abs() < 1e-9);
                }
            }
        }
    }
}
