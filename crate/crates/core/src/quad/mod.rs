//! Quadrature of the integral functionals: contact volume, action and period
//! of the planar orbit, and the first-order perturbation functionals.

pub mod gauss;
pub mod hill;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use gauss::{gauss_adaptive, Estimate};
pub use hill::{hill_region, HillRegion};

use crate::error::{Error, Result};
use crate::kepler::{cosine_series_integral, eccentricity, kepler_scalars, orbit_radius};
use crate::model::{angular_second_derivative, SystemParams};
use crate::roots::brent;

/// Tolerances for all quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    /// Absolute tolerance of 1D integrals.
    pub tol_1d: f64,
    /// Relative tolerance of 2D region integrals.
    pub tol_2d: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig { tol_1d: 1e-10, tol_2d: 1e-8 }
    }
}

/// `Q(r) = 2h − ω²/r² + 2/r − 2εf(r, 0)`, the squared radial momentum on the
/// planar orbit.
pub fn planar_radicand(params: &SystemParams, r: f64) -> f64 {
    2.0 * (params.h - params.potential(r, 0.0))
}

/// The two roots `r₁ < r₂` of `Q`, bracketed outward from the point where `Q`
/// is largest near `ω²`.
pub fn turning_points(params: &SystemParams) -> Result<(f64, f64)> {
    let w2 = params.omega * params.omega;
    let q = |r: f64| planar_radicand(params, r);
    let mut center = w2;
    if q(center) <= 0.0 {
        // golden-section search for the maximum on [ω²/2, 2ω²]
        let (mut a, mut b) = (0.5 * w2, 2.0 * w2);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if q(c) > q(d) {
                b = d;
            } else {
                a = c;
            }
        }
        center = 0.5 * (a + b);
        if q(center) <= 0.0 {
            return Err(Error::TurningPointFailure(format!("radicand has no positive interior value (max {})", q(center))));
        }
    }
    let mut lo = center;
    while q(lo) > 0.0 {
        lo *= 0.9;
        if lo < 0.25 * w2 {
            return Err(Error::TurningPointFailure("inner turning point below ω²/4".into()));
        }
    }
    let mut hi = center;
    while q(hi) > 0.0 {
        hi *= 1.1;
        if hi > 1e6 * w2.max(1.0) {
            return Err(Error::TurningPointFailure("outer turning point not found".into()));
        }
    }
    let xtol = 1e-15 * w2;
    let r1 = brent(|r| Ok(q(r)), lo, (lo / 0.9).min(center), xtol, 200)?;
    let r2 = brent(|r| Ok(q(r)), (hi / 1.1).max(center), hi, xtol, 200)?;
    Ok((r1, r2))
}

/// `(r, √Q(r), w cos u)` at `r = c + w sin u` on `[r₁, r₂]`.
///
/// `√Q / (w cos u)` extends smoothly to the endpoints, but `Q` evaluated
/// directly loses its relative precision there. Instead `Q` is expanded about
/// the nearer turning point, where it vanishes, with the offset `r − r_end`
/// taken from half-angle forms that are exact near `u = ±π/2`.
fn radicand_chart(params: &SystemParams, r1: f64, r2: f64, u: f64) -> (f64, f64, f64) {
    let w = 0.5 * (r2 - r1);
    let (end, v, sign) = if u <= 0.0 { (r1, u + 0.5 * PI, 1.0) } else { (r2, 0.5 * PI - u, -1.0) };
    let d = sign * 2.0 * w * (0.5 * v).sin().powi(2);
    let r = end + d;
    let w2 = params.omega * params.omega;
    let kepler = d * (w2 * (r + end) / (r * r * end * end) - 2.0 / (r * end));
    let f = params.perturbation.as_ref();
    // mean-value form once the difference of f would cancel
    let df = if d.abs() < 1e-5 * w {
        f.df_dr(end + 0.5 * d, 0.0, params.eps) * d
    } else {
        f.value(r, 0.0, params.eps) - f.value(end, 0.0, params.eps)
    };
    let q = (kepler - 2.0 * params.eps * df).max(0.0);
    (r, q.sqrt(), w * v.sin())
}

/// Action, `τ`-period and time period of the planar orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionPeriod {
    pub r1: f64,
    pub r2: f64,
    pub action: Estimate,
    /// Period in the rescaled time `τ` (`2π` for Kepler).
    pub period: Estimate,
    /// Period in the physical time `t`.
    pub time_period: Estimate,
}

/// `A_ε = 2∫√Q dr`, `T_ε = 2∫(|ω|/r²)Q^{−1/2} dr` and `2∫Q^{−1/2} dr` over
/// `[r₁, r₂]`, using `r = c + w sin u` so that all three integrands are smooth.
pub fn action_and_period(params: &SystemParams) -> Result<ActionPeriod> {
    action_and_period_with(params, &QuadConfig::default())
}

pub fn action_and_period_with(params: &SystemParams, cfg: &QuadConfig) -> Result<ActionPeriod> {
    let (r1, r2) = turning_points(params)?;
    let omega = params.omega.abs();
    let half = 0.5 * PI;
    let root_ratio = |u: f64| radicand_chart(params, r1, r2, u);
    let tol = cfg.tol_1d * 1e-2;
    let action = gauss_adaptive(
        |u| {
            let (_, sq, jac) = root_ratio(u);
            2.0 * sq * jac
        },
        -half,
        half,
        tol,
        0.0,
        "action",
    )?;
    let period = gauss_adaptive(
        |u| {
            let (r, sq, jac) = root_ratio(u);
            2.0 * omega / (r * r) * jac / sq
        },
        -half,
        half,
        tol,
        0.0,
        "period",
    )?;
    let time_period = gauss_adaptive(
        |u| {
            let (_, sq, jac) = root_ratio(u);
            2.0 * jac / sq
        },
        -half,
        half,
        tol * 10.0,
        0.0,
        "time period",
    )?;
    Ok(ActionPeriod { r1, r2, action, period, time_period })
}

/// `Vol_ε = 2π ∬_{H_ε} 2(h − U) dr dz`.
pub fn contact_volume(params: &SystemParams) -> Result<Estimate> {
    contact_volume_with(params, &QuadConfig::default())
}

pub fn contact_volume_with(params: &SystemParams, cfg: &QuadConfig) -> Result<Estimate> {
    let h = params.h;
    let g = |r: f64, z: f64| 2.0 * (h - params.potential(r, z));
    let est = hill::integrate_region(params, &g, 0.0, cfg.tol_2d * 1e-3, "contact volume")?;
    Ok(Estimate::new(2.0 * PI * est.value, 2.0 * PI * est.error))
}

/// Integral functionals of one system. `vol`, `action`, `period` belong to the
/// system at its own `ε`; the tilde quantities, `E` and `D` are first-order
/// data of the perturbation at `ε = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Functionals {
    pub vol: f64,
    pub action: f64,
    pub period: f64,
    pub time_period: f64,
    pub v_tilde: f64,
    pub a_tilde: f64,
    pub t_tilde: f64,
    pub e_f: f64,
    pub d_f: f64,
    /// `∫₀^π r² f_φφ cos 2θ dθ`, the second-harmonic term of `D`.
    pub second_harmonic: f64,
    pub vol_err: f64,
    pub action_err: f64,
    pub period_err: f64,
    pub time_period_err: f64,
    pub v_tilde_err: f64,
    pub a_tilde_err: f64,
    pub t_tilde_err: f64,
    pub e_f_err: f64,
    pub d_f_err: f64,
    pub second_harmonic_err: f64,
}

/// First-order perturbation data only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstOrder {
    pub v_tilde: Estimate,
    pub a_tilde: Estimate,
    pub t_tilde: Estimate,
    pub e_f: Estimate,
    pub d_f: Estimate,
    pub second_harmonic: Estimate,
}

/// `Ṽ`, `Ã`, `T̃`, `E`, `D` of the perturbation of `params` about the Kepler
/// orbit with the same `(ω, h)`.
pub fn first_order_functionals(params: &SystemParams, cfg: &QuadConfig) -> Result<FirstOrder> {
    let omega = params.omega.abs();
    let h = params.h;
    let ks = kepler_scalars(omega, h)?;
    let e = ks.e;
    let f = params.perturbation.as_ref();
    let r_of = |t: f64| orbit_radius(t, omega, h);
    let tol = cfg.tol_1d * 1e-2;

    let a_tilde = gauss::even_periodic_half(
        |t| {
            let r = r_of(t);
            r * r * f.value(r, 0.0, 0.0)
        },
        tol,
        0.0,
        "A tilde",
    )?;
    let t_raw = gauss::even_periodic_half(
        |t| {
            let r = r_of(t);
            r * r * f.df_dr(r, 0.0, 0.0) * t.cos()
        },
        tol * e,
        0.0,
        "T tilde",
    )?;
    let t_tilde = Estimate::new(2.0 / e * t_raw.value, 2.0 / e * t_raw.error);
    let fpp = |r: f64| angular_second_derivative(f, r, 0.0);
    let base = gauss::even_periodic_half(
        |t| {
            let r = r_of(t);
            r * r * fpp(r)
        },
        tol,
        0.0,
        "E",
    )?;
    let harm = gauss::even_periodic_half(
        |t| {
            let r = r_of(t);
            r * r * fpp(r) * (2.0 * t).cos()
        },
        tol,
        0.0,
        "second harmonic",
    )?;
    let w2 = omega * omega;
    let e_f = Estimate::new(base.value + w2 * t_tilde.value, base.error + w2 * t_tilde.error);
    let d_f = Estimate::new(
        e_f.value * e_f.value - harm.value * harm.value,
        2.0 * (e_f.value.abs() * e_f.error + harm.value.abs() * harm.error),
    );

    let kepler = SystemParams::kepler(omega, h)?;
    let g = |r: f64, z: f64| f.value(r, z, 0.0);
    let v_tilde = hill::integrate_region(&kepler, &g, cfg.tol_1d, cfg.tol_2d * 1e-2, "V tilde")?;
    Ok(FirstOrder { v_tilde, a_tilde, t_tilde, e_f, d_f, second_harmonic: harm })
}

/// All functionals of `params`.
pub fn perturbation_functionals(params: &SystemParams) -> Result<Functionals> {
    perturbation_functionals_with(params, &QuadConfig::default())
}

pub fn perturbation_functionals_with(params: &SystemParams, cfg: &QuadConfig) -> Result<Functionals> {
    let ap = action_and_period_with(params, cfg)?;
    let vol = contact_volume_with(params, cfg)?;
    let fo = first_order_functionals(params, cfg)?;
    Ok(Functionals {
        vol: vol.value,
        action: ap.action.value,
        period: ap.period.value,
        time_period: ap.time_period.value,
        v_tilde: fo.v_tilde.value,
        a_tilde: fo.a_tilde.value,
        t_tilde: fo.t_tilde.value,
        e_f: fo.e_f.value,
        d_f: fo.d_f.value,
        second_harmonic: fo.second_harmonic.value,
        vol_err: vol.error,
        action_err: ap.action.error,
        period_err: ap.period.error,
        time_period_err: ap.time_period.error,
        v_tilde_err: fo.v_tilde.error,
        a_tilde_err: fo.a_tilde.error,
        t_tilde_err: fo.t_tilde.error,
        e_f_err: fo.e_f.error,
        d_f_err: fo.d_f.error,
        second_harmonic_err: fo.second_harmonic.error,
    })
}

/// One closed-form check of the quadrature engine.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelfTestCase {
    pub name: String,
    pub value: f64,
    pub expected: f64,
    pub abs_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelfTestReport {
    pub tolerance: f64,
    pub cases: Vec<SelfTestCase>,
}

impl SelfTestReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&SelfTestCase> {
        self.cases.iter().filter(|c| !c.passed).collect()
    }
}

pub const SELFTEST_TOL: f64 = 1e-10;

/// Reproduce known closed-form integrals with the same rules used for the
/// functionals.
pub fn integral_selftests() -> SelfTestReport {
    let mut cases = Vec::new();
    let mut push = |name: String, value: Result<Estimate>, expected: f64| {
        let (value, abs_err) = match value {
            Ok(v) => (v.value, (v.value - expected).abs()),
            Err(_) => (f64::NAN, f64::INFINITY),
        };
        cases.push(SelfTestCase { name, value, expected, abs_err, passed: abs_err <= SELFTEST_TOL });
    };
    let half = 0.5 * PI;
    for a in [0.0, 0.1, 0.25, 0.5, 0.9] {
        let v = gauss_adaptive(
            |t: f64| {
                let c2 = t.cos().powi(2);
                c2 / (c2 + a * t.sin().powi(2))
            },
            -half,
            half,
            1e-13,
            0.0,
            "selftest",
        );
        push(format!("cos2/(cos2+a sin2), a={a}"), v, PI / (1.0 + a.sqrt()));
        let v = gauss_adaptive(|t: f64| t.cos().powi(2) / (1.0 + a * t.sin()), -half, half, 1e-13, 0.0, "selftest");
        push(format!("cos2/(1+a sin), a={a}"), v, PI / (1.0 + (1.0 - a * a).sqrt()));
    }
    for e in [0.1, 0.5, 0.9] {
        for n in [0u32, 1, 2, 4] {
            let v = gauss::even_periodic_half(|t: f64| (n as f64 * t).cos() / (1.0 + e * t.cos()), 1e-14, 0.0, "selftest");
            push(format!("cos(nt)/(1+e cos t), n={n}, e={e}"), v, cosine_series_integral(n, e));
        }
    }
    SelfTestReport { tolerance: SELFTEST_TOL, cases }
}

/// `e` of the Kepler orbit with the same `(ω, h)`.
pub fn kepler_eccentricity(params: &SystemParams) -> f64 {
    eccentricity(params.omega, params.h)
}
