//! Criteria for infinitely many periodic orbits of the perturbed system and the
//! linear stability of the perturbed planar orbit.
//!
//! With `C(e) = 1/√(1 − e²) − 1` the perturbed system has infinitely many
//! periodic orbits for small `ε` when either
//!
//! - `D < 0`, or
//! - `D ≥ 0` and `Ṽ ≠ 2C Ã + C² sign(E) √D / 2`.
//!
//! The planar orbit is elliptic for `D > 0` and hyperbolic for `D < 0`. The
//! ellipsoid and pyramidal families have closed forms for most of the
//! functionals; those serve as oracles for the quadrature.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::EigenKind;
use crate::kepler::{c_of_e, cosine_series_integral, eccentricity, g_of_e, kepler_scalars, m_of_n};
use crate::model::{classify_kepler_surface, SystemParams, SystemSpec};
use crate::quad::{perturbation_functionals_with, Functionals, QuadConfig};
use crate::report::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "InfinitelyMany_via_i")]
    InfinitelyManyViaI,
    #[serde(rename = "InfinitelyMany_via_ii")]
    InfinitelyManyViaIi,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::InfinitelyManyViaI => "InfinitelyMany_via_i",
            Verdict::InfinitelyManyViaIi => "InfinitelyMany_via_ii",
            Verdict::Inconclusive => "Inconclusive",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Multiplier applied to the quadrature error estimates before comparing.
pub const ERROR_BAR_FACTOR: f64 = 10.0;

/// Relative floor of every error bar, covering rounding in the closed-form
/// parts of the comparison.
pub const ERROR_BAR_FLOOR: f64 = 1e-12;

/// Verdict, stability and the numbers behind them for one `(ω, h)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub omega: f64,
    pub h: f64,
    pub eps: f64,
    pub perturbation: String,
    pub analytic_partials: bool,
    pub e: f64,
    pub c: f64,
    pub functionals: Functionals,
    /// `sign(E)` with `sign(0) = 0`; zero also when `|E|` is within its bar.
    pub sign_e: i32,
    pub e_err: f64,
    pub d_err: f64,
    /// `Ṽ`.
    pub lhs: f64,
    pub lhs_err: f64,
    /// `2C Ã + C² sign(E) √max(D, 0) / 2`.
    pub rhs: f64,
    pub rhs_err: f64,
    /// `lhs − rhs`.
    pub margin: f64,
    pub margin_err: f64,
    /// `dRot/dε` at `ε = 0` predicted from `D` and `E`.
    pub rot_derivative: f64,
    pub verdict: Verdict,
    pub stability: EigenKind,
    pub notes: Vec<String>,
}

/// `sign` with `sign(0) = 0`.
pub fn sign0(x: f64) -> i32 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// `dRot/dε` at `ε = 0`: `sign(E) √D / (2πω²)` for `D ≥ 0`, else `0`.
pub fn rot_derivative_formula(omega: f64, e_f: f64, d_f: f64) -> f64 {
    if d_f < 0.0 {
        0.0
    } else {
        sign0(e_f) as f64 * d_f.sqrt() / (2.0 * PI * omega * omega)
    }
}

/// Evaluate the criteria with default quadrature tolerances.
pub fn evaluate(params: &SystemParams) -> Result<CriteriaReport> {
    evaluate_with(params, &QuadConfig::default())
}

pub fn evaluate_with(params: &SystemParams, cfg: &QuadConfig) -> Result<CriteriaReport> {
    let mut notes = Vec::new();
    let params = if params.omega < 0.0 {
        notes.push(format!("omega = {} mapped to |omega| by the symmetry omega -> -omega", params.omega));
        SystemParams { omega: -params.omega, ..params.clone() }
    } else {
        params.clone()
    };
    let class = classify_kepler_surface(params.omega, params.h);
    if !class.is_compact() {
        return Err(Error::NotCompact(format!("(omega, h) = ({}, {}) gives {class} at eps = 0", params.omega, params.h)));
    }
    if !params.perturbation.analytic_partials() {
        notes.push("perturbation partials by finite differences".into());
    }
    let fun = perturbation_functionals_with(&params, cfg)?;
    Ok(judge(&params, fun, notes))
}

/// Verdict from already computed functionals.
pub fn judge(params: &SystemParams, fun: Functionals, notes: Vec<String>) -> CriteriaReport {
    let omega = params.omega.abs();
    let e = eccentricity(omega, params.h);
    let c = c_of_e(e);
    let bar = |err: f64, value: f64| ERROR_BAR_FACTOR * err + ERROR_BAR_FLOOR * value.abs().max(1e-300);
    let e_err = bar(fun.e_f_err, fun.e_f).max(ERROR_BAR_FLOOR * fun.second_harmonic.abs());
    let d_err = bar(fun.d_f_err, fun.d_f).max(ERROR_BAR_FLOOR * fun.e_f * fun.e_f);
    let e_tiny = fun.e_f.abs() <= e_err;
    let sign_e = if e_tiny { 0 } else { sign0(fun.e_f) };

    let d_pos = fun.d_f.max(0.0);
    let sqrt_d = d_pos.sqrt();
    // the square root is not Lipschitz at 0: bound its spread over D ± d_err
    let sqrt_d_err = ((d_pos + d_err).sqrt() - (fun.d_f - d_err).max(0.0).sqrt()).max(0.0);
    let lhs = fun.v_tilde;
    let lhs_err = bar(fun.v_tilde_err, lhs);
    let rhs = 2.0 * c * fun.a_tilde + 0.5 * c * c * sign_e as f64 * sqrt_d;
    let mut rhs_err = 2.0 * c * bar(fun.a_tilde_err, fun.a_tilde) + 0.5 * c * c * sqrt_d_err + ERROR_BAR_FLOOR * rhs.abs();
    if e_tiny {
        // the sign of E is unresolved: either sign of the root term is possible
        rhs_err += 0.5 * c * c * (sqrt_d + sqrt_d_err);
    }
    let margin = lhs - rhs;
    let margin_err = lhs_err + rhs_err;

    let verdict = if fun.d_f < -d_err {
        Verdict::InfinitelyManyViaI
    } else if fun.d_f >= -d_err && margin.abs() > margin_err && fun.d_f >= 0.0 {
        Verdict::InfinitelyManyViaIi
    } else {
        Verdict::Inconclusive
    };
    let stability = if fun.d_f.abs() <= d_err {
        EigenKind::Parabolic
    } else if fun.d_f > 0.0 {
        EigenKind::Elliptic
    } else {
        EigenKind::Hyperbolic
    };
    CriteriaReport {
        omega,
        h: params.h,
        eps: params.eps,
        perturbation: params.perturbation.name(),
        analytic_partials: params.perturbation.analytic_partials(),
        e,
        c,
        functionals: fun,
        sign_e,
        e_err,
        d_err,
        lhs,
        lhs_err,
        rhs,
        rhs_err,
        margin,
        margin_err,
        rot_derivative: rot_derivative_formula(omega, fun.e_f, fun.d_f),
        verdict,
        stability,
        notes,
    }
}

/// Closed-form functionals at `ε = 0`; the Kepler part (volume, action and
/// periods) is filled in as well and all error fields are zero.
fn closed_base(omega: f64, h: f64) -> Result<Functionals> {
    let ks = kepler_scalars(omega, h)?;
    Ok(Functionals {
        vol: ks.volume,
        action: ks.action,
        period: 2.0 * PI,
        time_period: ks.period,
        v_tilde: 0.0,
        a_tilde: 0.0,
        t_tilde: 0.0,
        e_f: 0.0,
        d_f: 0.0,
        second_harmonic: 0.0,
        vol_err: 0.0,
        action_err: 0.0,
        period_err: 0.0,
        time_period_err: 0.0,
        v_tilde_err: 0.0,
        a_tilde_err: 0.0,
        t_tilde_err: 0.0,
        e_f_err: 0.0,
        d_f_err: 0.0,
        second_harmonic_err: 0.0,
    })
}

/// Ellipsoid: `Ṽ = −πe²(4 − 3e²)/(4ω²)`, `Ã = −π/ω²`, `T̃ = 6π/ω⁴`,
/// `E = 12π/ω²`, `D = E²`.
pub fn ellipsoid_closed_forms(omega: f64, h: f64) -> Result<Functionals> {
    let mut f = closed_base(omega, h)?;
    let w2 = omega * omega;
    let e = eccentricity(omega, h);
    f.v_tilde = -PI * e * e * (4.0 - 3.0 * e * e) / (4.0 * w2);
    f.a_tilde = -PI / w2;
    f.t_tilde = 6.0 * PI / (w2 * w2);
    f.e_f = 12.0 * PI / w2;
    f.d_f = f.e_f * f.e_f;
    Ok(f)
}

/// Pyramidal closed forms. `Ṽ` has none; it is left at zero here and
/// [`pyramidal_v_tilde_bound`] gives the upper bound it must satisfy.
pub fn pyramidal_closed_forms(omega: f64, h: f64, n: u32) -> Result<Functionals> {
    let mut f = closed_base(omega, h)?;
    let w2 = omega * omega;
    let e = eccentricity(omega, h);
    let m = m_of_n(n)?;
    let s = (1.0 - e * e).sqrt();
    let k = n as f64 - 0.5 * m;
    f.a_tilde = -m * PI * w2 / (2.0 * s);
    f.t_tilde = 0.0;
    // ∫₀^π r dθ and ∫₀^π r cos 2θ dθ with r = ω²/(1 + e cos θ)
    f.e_f = k * w2 * cosine_series_integral(0, e);
    f.second_harmonic = k * w2 * cosine_series_integral(2, e);
    f.d_f = (2.0 * n as f64 - m).powi(2) * PI * PI * w2 * w2 * g_of_e(e).powi(2) / (4.0 * (1.0 - e * e));
    Ok(f)
}

/// Upper bound for the pyramidal `Ṽ`:
/// `Ṽ ≤ (π/4)(2n − M(n))ω²C²(e) − M(n)πω²C(e)/√(1 − e²)`.
pub fn pyramidal_v_tilde_bound(omega: f64, h: f64, n: u32) -> Result<f64> {
    let w2 = omega * omega;
    let e = eccentricity(omega, h);
    let c = c_of_e(e);
    let m = m_of_n(n)?;
    Ok(0.25 * PI * (2.0 * n as f64 - m) * w2 * c * c - m * PI * w2 * c / (1.0 - e * e).sqrt())
}

/// One numeric-versus-reference comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub numeric: f64,
    pub reference: f64,
    pub rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckEntry {
    pub fn new(name: &str, numeric: f64, reference: f64, tolerance: f64) -> Self {
        let rel_err = if reference == 0.0 { numeric.abs() } else { ((numeric - reference) / reference).abs() };
        CheckEntry { name: name.into(), numeric, reference, rel_err, tolerance, passed: rel_err <= tolerance }
    }

    /// A one-sided check `numeric ≤ reference`.
    pub fn upper_bound(name: &str, numeric: f64, bound: f64) -> Self {
        CheckEntry {
            name: name.into(),
            numeric,
            reference: bound,
            rel_err: 0.0,
            tolerance: 0.0,
            passed: numeric <= bound,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossCheck {
    pub system: String,
    pub omega: f64,
    pub h: f64,
    pub entries: Vec<CheckEntry>,
}

impl CrossCheck {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn failures(&self) -> Vec<&CheckEntry> {
        self.entries.iter().filter(|e| !e.passed).collect()
    }
}

/// Relative tolerance of the closed-form comparisons.
pub const CLOSED_FORM_TOL: f64 = 1e-6;
/// Relative tolerance of the rotation-number derivative comparison.
pub const ROT_DERIVATIVE_TOL: f64 = 1e-2;

/// Options of [`crosscheck`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CrossCheckConfig {
    pub quad: QuadConfig,
    /// Also compare a central difference of the rotation number (slower).
    pub rotation: bool,
    pub rot_eps: f64,
    pub periods: usize,
}

impl Default for CrossCheckConfig {
    fn default() -> Self {
        CrossCheckConfig { quad: QuadConfig::default(), rotation: true, rot_eps: 1e-3, periods: 8 }
    }
}

/// Compare the quadrature functionals of a built-in system with its closed
/// forms and, optionally, the finite-difference `dRot/dε` with the formula.
pub fn crosscheck(system: &SystemSpec, omega: f64, h: f64, cfg: &CrossCheckConfig) -> Result<CrossCheck> {
    let omega = omega.abs();
    let params = system.params(omega, h, 0.0)?;
    let numeric = perturbation_functionals_with(&params, &cfg.quad)?;
    let (closed, with_v) = match system {
        SystemSpec::Ellipsoid => (ellipsoid_closed_forms(omega, h)?, true),
        SystemSpec::Pyramid(n) => (pyramidal_closed_forms(omega, h, *n)?, false),
        SystemSpec::Kepler => (closed_base(omega, h)?, true),
        SystemSpec::Custom(_) => {
            return Err(Error::Usage("crosscheck needs a built-in system (kepler, ellipsoid, pyramid:N)".into()))
        }
    };
    let tol = CLOSED_FORM_TOL;
    let mut entries = vec![
        CheckEntry::new("vol", numeric.vol, closed.vol, tol),
        CheckEntry::new("action", numeric.action, closed.action, tol),
        CheckEntry::new("period", numeric.period, closed.period, tol),
        CheckEntry::new("a_tilde", numeric.a_tilde, closed.a_tilde, tol),
        CheckEntry::new("t_tilde", numeric.t_tilde, closed.t_tilde, tol),
        CheckEntry::new("e_f", numeric.e_f, closed.e_f, tol),
        CheckEntry::new("d_f", numeric.d_f, closed.d_f, tol),
    ];
    if with_v {
        entries.insert(3, CheckEntry::new("v_tilde", numeric.v_tilde, closed.v_tilde, tol));
    } else if let SystemSpec::Pyramid(n) = system {
        entries.insert(3, CheckEntry::upper_bound("v_tilde_bound", numeric.v_tilde, pyramidal_v_tilde_bound(omega, h, *n)?));
    }
    // zero references compare absolutely; scale them by the natural size
    for e in entries.iter_mut().filter(|e| e.reference == 0.0 && e.name != "v_tilde_bound") {
        e.rel_err = e.numeric.abs() / (closed.e_f.abs() + closed.a_tilde.abs()).max(1.0);
        e.passed = e.rel_err <= e.tolerance;
    }
    if cfg.rotation && !matches!(system, SystemSpec::Kepler) {
        let fd = crate::orbits::rotation_derivative(&params, cfg.rot_eps, cfg.periods)?;
        let formula = rot_derivative_formula(omega, numeric.e_f, numeric.d_f);
        entries.push(CheckEntry::new("rot_derivative", fd, formula, ROT_DERIVATIVE_TOL));
    }
    Ok(CrossCheck { system: system.to_string(), omega, h, entries })
}

/// Header of the sweep CSV.
pub const SWEEP_HEADER: &str = "omega,h,e,n,V,A,T,E,D,lhs,rhs,verdict,stability";

/// One sweep row; `n` is empty for non-pyramidal systems.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: Option<u32>,
    pub report: CriteriaReport,
}

/// Evaluate every `(ω, h)` of `grid` for `system`, in parallel, keeping input
/// order. Points outside the compact window are reported as errors per row.
pub fn sweep(system: &SystemSpec, grid: &[(f64, f64)], cfg: &QuadConfig) -> Result<Vec<SweepRow>> {
    use rayon::prelude::*;
    let perturbation = system.perturbation()?;
    let n = match system {
        SystemSpec::Pyramid(n) => Some(*n),
        _ => None,
    };
    grid.par_iter()
        .map(|&(omega, h)| {
            let params = SystemParams::new(omega, h, 0.0, Arc::clone(&perturbation))?;
            Ok(SweepRow { n, report: evaluate_with(&params, cfg)? })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for row in rows {
        let r = &row.report;
        let f = &r.functionals;
        let n = row.n.map(|n| n.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{n},{},{},{},{},{},{},{},{},{:?}",
            fmt_f64(r.omega),
            fmt_f64(r.h),
            fmt_f64(r.e),
            fmt_f64(f.v_tilde),
            fmt_f64(f.a_tilde),
            fmt_f64(f.t_tilde),
            fmt_f64(f.e_f),
            fmt_f64(f.d_f),
            fmt_f64(r.lhs),
            fmt_f64(r.rhs),
            r.verdict,
            r.stability,
        )?;
    }
    Ok(())
}

/// `(ω, h)` pairs with `h = (e² − 1)/(2ω²)` for each eccentricity.
pub fn eccentricity_grid(omega: f64, es: &[f64]) -> Vec<(f64, f64)> {
    es.iter().map(|&e| (omega, (e * e - 1.0) / (2.0 * omega * omega))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Ellipsoid, Kepler, Pyramidal};

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn ellipsoid(omega: f64, h: f64) -> SystemParams {
        SystemParams::new(omega, h, 0.0, Arc::new(Ellipsoid)).unwrap()
    }

    #[test]
    fn ellipsoid_closed_form_values() {
        let f = ellipsoid_closed_forms(1.0, -0.375).unwrap();
        assert!((f.v_tilde + 0.638136).abs() < 1e-6);
        for w in [0.5, 1.0, 2.0] {
            let f = ellipsoid_closed_forms(w, -0.1 / (w * w)).unwrap();
            assert!(rel(f.e_f * w * w, 12.0 * PI) < 1e-14);
            assert!(f.v_tilde < 0.0);
        }
    }

    #[test]
    fn pyramidal_closed_form_values() {
        let f = pyramidal_closed_forms(1.0, -0.375, 2).unwrap();
        assert!((f.a_tilde + 0.906900).abs() < 1e-6);
        assert!((f.d_f.sqrt() - 6.33192).abs() < 1e-5);
        // D = E² − (second harmonic)² holds for the closed forms too
        assert!(rel(f.e_f * f.e_f - f.second_harmonic.powi(2), f.d_f) < 1e-13);
        for n in [2, 3, 10, 100, 472] {
            let f = pyramidal_closed_forms(1.0, -0.375, n).unwrap();
            assert_eq!(f.t_tilde, 0.0);
            assert!(f.e_f > 0.0);
        }
        let f = pyramidal_closed_forms(1.0, -0.375, 473).unwrap();
        assert!(f.e_f < 0.0);
    }

    #[test]
    fn ellipsoid_report_matches_reference_numbers() {
        let r = evaluate(&ellipsoid(1.0, -0.375)).unwrap();
        assert!((r.lhs + 0.638136).abs() < 1e-6, "{}", r.lhs);
        assert!((r.rhs + 0.520900).abs() < 1e-6, "{}", r.rhs);
        let c = 2.0 / 3f64.sqrt() - 1.0;
        assert!(rel(r.rhs, 2.0 * PI * c * (3.0 * c - 1.0)) < 1e-9);
        assert_eq!(r.verdict, Verdict::InfinitelyManyViaIi);
        assert_eq!(r.stability, EigenKind::Elliptic);
        assert!(rel(r.rot_derivative, 6.0) < 1e-9);
    }

    #[test]
    fn zero_perturbation_is_inconclusive() {
        let r = evaluate(&SystemParams::kepler(1.0, -0.375).unwrap()).unwrap();
        for x in [r.functionals.v_tilde, r.functionals.a_tilde, r.functionals.t_tilde, r.functionals.e_f, r.functionals.d_f] {
            assert_eq!(x, 0.0);
        }
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.rhs, 0.0);
        assert_eq!(r.verdict, Verdict::Inconclusive);
        assert_eq!(r.stability, EigenKind::Parabolic);
        assert_eq!(r.sign_e, 0);
    }

    #[test]
    fn negative_omega_is_mapped_and_noted() {
        let a = evaluate(&ellipsoid(1.0, -0.375)).unwrap();
        let b = evaluate(&ellipsoid(-1.0, -0.375)).unwrap();
        assert_eq!(a.lhs, b.lhs);
        assert_eq!(a.verdict, b.verdict);
        assert!(a.notes.is_empty());
        assert_eq!(b.notes.len(), 1);
    }

    #[test]
    fn sign_antisymmetry() {
        let p = SystemParams::new(1.0, -0.3, 0.0, Arc::new(Pyramidal::new(3).unwrap())).unwrap();
        let a = evaluate(&p).unwrap();
        let b = evaluate(&p.negated()).unwrap();
        let f = (&a.functionals, &b.functionals);
        assert_eq!(f.0.v_tilde, -f.1.v_tilde);
        assert_eq!(f.0.a_tilde, -f.1.a_tilde);
        assert_eq!(f.0.e_f, -f.1.e_f);
        assert!(rel(f.1.d_f, f.0.d_f) < 1e-14);
    }

    #[test]
    fn synthetic_functionals_drive_the_verdict() {
        let p = SystemParams::new(1.0, -0.375, 0.0, Arc::new(Kepler)).unwrap();
        let base = closed_base(1.0, -0.375).unwrap();
        let hyper = Functionals { e_f: 1.0, second_harmonic: 2.0, d_f: -3.0, ..base };
        let r = judge(&p, hyper, vec![]);
        assert_eq!(r.verdict, Verdict::InfinitelyManyViaI);
        assert_eq!(r.stability, EigenKind::Hyperbolic);
        assert_eq!(r.rot_derivative, 0.0);
        // Ṽ placed exactly on the right-hand side is not resolved
        let c = c_of_e(0.5);
        let on_edge = Functionals { a_tilde: -1.0, e_f: 2.0, d_f: 4.0, v_tilde: -2.0 * c + c * c, ..base };
        let r = judge(&p, on_edge, vec![]);
        assert_eq!(r.verdict, Verdict::Inconclusive);
        assert_eq!(r.stability, EigenKind::Elliptic);
        // unresolved sign of E widens the bar by the whole root term
        let e_zero = Functionals { a_tilde: -1.0, e_f: 0.0, d_f: 1.0, v_tilde: -2.0 * c + 0.4 * c * c, ..base };
        let r = judge(&p, e_zero, vec![]);
        assert_eq!(r.sign_e, 0);
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn crosscheck_built_ins() {
        let cfg = CrossCheckConfig { rotation: false, ..Default::default() };
        let x = crosscheck(&SystemSpec::Ellipsoid, 1.0, -0.375, &cfg).unwrap();
        assert!(x.passed(), "{:?}", x.failures());
        let x = crosscheck(&SystemSpec::Pyramid(3), 1.0, -0.375, &cfg).unwrap();
        assert!(x.passed(), "{:?}", x.failures());
        assert!(x.entries.iter().any(|e| e.name == "v_tilde_bound"));
        assert!(crosscheck(&SystemSpec::Custom("x".into()), 1.0, -0.375, &cfg).is_err());
    }

    #[test]
    fn sweep_csv_has_one_row_per_point() {
        let grid = eccentricity_grid(1.0, &[0.2, 0.5, 0.8]);
        let rows = sweep(&SystemSpec::Pyramid(2), &grid, &QuadConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], SWEEP_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1].contains(",2,") && lines[1].ends_with("InfinitelyMany_via_ii,Elliptic"));
    }
}
