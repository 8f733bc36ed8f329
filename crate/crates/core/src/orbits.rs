//! The planar periodic orbit, its rotation number, the z-symmetric brake orbit
//! and the linking check between them.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{
    integrate_variational_subsystem2, integrate_with, EigenKind, EventKind, EventRecord, FlowConfig, Monodromy2,
    PlanarSeed, Sample, Trajectory,
};
use crate::kepler::{hill_boundary_z, kepler_scalars};
use crate::model::{angular_second_derivative, hamiltonian, PhaseState, SystemParams};
use crate::quad::{action_and_period, hill::boundary_radius};

/// Default step tolerance of the orbit integrations.
pub const ORBIT_TOL: f64 = 1e-13;

/// Largest closure error accepted for a periodic orbit.
pub const CLOSURE_TOL: f64 = 1e-8;

/// The planar periodic orbit `ξ_ε` in `z = p_z = 0`, started at its inner
/// turning point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanarOrbit {
    pub omega: f64,
    pub h: f64,
    pub eps: f64,
    pub r1: f64,
    pub r2: f64,
    /// Period in time `t`, from the second `p_r = 0` event.
    pub period: f64,
    /// Period in the rescaled time `τ`, by quadrature.
    pub tau_period: f64,
    pub closure_residual: f64,
    pub energy_residual: f64,
    pub trajectory: Trajectory,
    /// `(t, r, ω² + ε r² f_φφ(r))` along the samples.
    pub coefficient: Vec<(f64, f64, f64)>,
}

pub fn planar_orbit(params: &SystemParams) -> Result<PlanarOrbit> {
    planar_orbit_with(params, ORBIT_TOL)
}

/// [`planar_orbit`] with step tolerance `tol`.
pub fn planar_orbit_with(params: &SystemParams, tol: f64) -> Result<PlanarOrbit> {
    let ap = action_and_period(params)?;
    let start = PhaseState::new(0.0, 0.0, ap.r1, 0.0);
    let t_cap = 1.5 * ap.time_period.value;
    let cfg = FlowConfig::new(tol).detect_only(&[EventKind::PrZero]).stop_at(EventKind::PrZero, 2);
    let trajectory = integrate_with(start, params, t_cap, &cfg)?;
    let end = trajectory.end();
    let closure_residual = end.state.distance(&start);
    if closure_residual > CLOSURE_TOL {
        return Err(Error::PeriodFailure { residual: closure_residual });
    }
    let mut energy_residual: f64 = 0.0;
    let mut coefficient = Vec::with_capacity(trajectory.samples.len());
    let f = params.perturbation.as_ref();
    for s in &trajectory.samples {
        energy_residual = energy_residual.max((hamiltonian(&s.state, params)? - params.h).abs());
        let r = s.state.r;
        let k = params.omega * params.omega + params.eps * r * r * angular_second_derivative(f, r, params.eps);
        coefficient.push((s.t, r, k));
    }
    Ok(PlanarOrbit {
        omega: params.omega,
        h: params.h,
        eps: params.eps,
        r1: ap.r1,
        r2: ap.r2,
        period: end.t,
        tau_period: ap.period.value,
        closure_residual,
        energy_residual,
        trajectory,
        coefficient,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationResult {
    /// Rotation number `Rot_ε = î/2`.
    pub rot: f64,
    pub mean_index: f64,
    pub stability: EigenKind,
    pub periods_used: usize,
    pub error_estimate: f64,
    /// `Δθ/(2π·periods)` from the solution-vector winding alone.
    pub winding_rot: f64,
    pub monodromy: Monodromy2,
}

/// Rotation number of the transverse linearisation along the planar orbit.
///
/// The fractional part comes from the eigenvalue angle of the one-period
/// monodromy; the winding over `periods` periods pins the integer part. At
/// `ε = 0` the result is exactly `1`.
pub fn rotation_number(params: &SystemParams, periods: usize) -> Result<RotationResult> {
    rotation_number_with(params, periods, ORBIT_TOL)
}

/// [`rotation_number`] with step tolerance `tol`.
pub fn rotation_number_with(params: &SystemParams, periods: usize, tol: f64) -> Result<RotationResult> {
    let ap = action_and_period(params)?;
    let seed = PlanarSeed { r_turn: ap.r1, tau_period: ap.period.value };
    let res = integrate_variational_subsystem2(params, &seed, periods, tol)?;
    if res.closure > CLOSURE_TOL {
        return Err(Error::PeriodFailure { residual: res.closure });
    }
    let m = res.monodromy;
    let winding_per_period = res.winding / periods as f64;
    let half_trace = 0.5 * m.trace;
    let angle = match m.eigen_kind {
        EigenKind::Hyperbolic => {
            // the angle is a multiple of π with parity fixed by the trace sign
            let base = if m.trace > 0.0 { 0.0 } else { PI };
            base + 2.0 * PI * ((winding_per_period - base) / (2.0 * PI)).round()
        }
        _ => {
            // 1 − (tr/2)² = −bc − (a − d)²/4 for det = 1, without cancellation near ±1
            let [[a, b], [c, d]] = m.matrix;
            let s = (-b * c - 0.25 * (a - d) * (a - d)).max(0.0).sqrt();
            let frac = (c.signum() * s).atan2(half_trace.clamp(-1.0, 1.0));
            frac + 2.0 * PI * ((winding_per_period - frac) / (2.0 * PI)).round()
        }
    };
    let rot = angle / (2.0 * PI);
    let winding_rot = winding_per_period / (2.0 * PI);
    // symplecticity defect bounds the angle error of the monodromy
    let error_estimate = ((m.det - 1.0).abs() + 10.0 * tol) / (2.0 * PI);
    Ok(RotationResult {
        rot,
        mean_index: 2.0 * rot,
        stability: m.eigen_kind,
        periods_used: periods,
        error_estimate,
        winding_rot,
        monodromy: m,
    })
}

/// Central-difference `dRot/dε` at `±eps`.
pub fn rotation_derivative(params: &SystemParams, eps: f64, periods: usize) -> Result<f64> {
    let plus = rotation_number(&params.with_signed_eps(eps)?, periods)?;
    let minus = rotation_number(&params.with_signed_eps(-eps)?, periods)?;
    Ok((plus.rot - minus.rot) / (2.0 * eps))
}

/// Launch point on the upper Hill boundary for chart parameter `r`: the ray
/// from `(ω², 0)` through the Kepler boundary point `(r, z_K(r))`, cut with
/// the boundary of the system itself.
pub fn brake_launch_point(params: &SystemParams, r: f64) -> Result<(f64, f64)> {
    let w2 = params.omega * params.omega;
    let zk = hill_boundary_z(r, params.omega, params.h);
    if zk <= 0.0 {
        return Err(Error::domain(format!("r = {r} is not inside the upper Hill boundary range")));
    }
    if params.eps == 0.0 {
        return Ok((r, zk));
    }
    let alpha = zk.atan2(r - w2);
    let s = boundary_radius(params, alpha)?;
    Ok((w2 + s * alpha.cos(), s * alpha.sin()))
}

fn first_crossing_cfg(tol: f64) -> FlowConfig {
    FlowConfig {
        record_steps: false,
        ..FlowConfig::new(tol).detect_only(&[EventKind::ZCrossMinus]).stop_at(EventKind::ZCrossMinus, 1)
    }
}

/// Minimum `|p_z|` for a section crossing to count as transverse.
pub const CROSSING_TOL: f64 = 1e-8;

/// First descending `z = 0` crossing of the orbit released from rest at the
/// launch point of chart parameter `r`.
pub fn brake_first_crossing(params: &SystemParams, r: f64) -> Result<EventRecord> {
    brake_first_crossing_with(params, r, ORBIT_TOL)
}

fn brake_first_crossing_with(params: &SystemParams, r: f64, tol: f64) -> Result<EventRecord> {
    let (r_b, z_b) = brake_launch_point(params, r)?;
    let start = PhaseState::new(0.0, 0.0, r_b, z_b);
    let cap = 3.0 * crate::flow::reference_period(params);
    let tr = integrate_with(start, params, cap, &first_crossing_cfg(tol))?;
    let ev = *tr.events.last().ok_or(Error::NoReturn { t_cap: cap })?;
    if ev.state.p_z > -CROSSING_TOL {
        return Err(Error::TangentialCrossing { t: ev.t, pz: ev.state.p_z.abs() });
    }
    Ok(ev)
}

/// Shooting function `f₂(r, ε)`: `p_r` at the first descending crossing.
pub fn brake_shooting_function(params: &SystemParams, r: f64) -> Result<f64> {
    Ok(brake_first_crossing(params, r)?.state.p_r)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BrakeOrbit {
    pub omega: f64,
    pub h: f64,
    pub eps: f64,
    /// Chart parameter of the launch point.
    pub r0: f64,
    /// Launch point `(r, z)` on the upper Hill boundary.
    pub launch: (f64, f64),
    /// Largest `ε` reached by continuation (equal to `eps` on success).
    pub eps_reached: f64,
    pub period: f64,
    /// `f₂` at the root.
    pub shooting_residual: f64,
    pub closure_residual: f64,
    pub symmetry_residual: f64,
    pub rest_times: Vec<f64>,
    pub crossing: EventRecord,
    pub trajectory: Trajectory,
}

/// Residual tolerance of the z-symmetry check.
pub const SYMMETRY_TOL: f64 = 1e-7;

/// Root of `f₂(·, ε)` near `seed`, bracketed by expanding a window.
fn shoot_root(params: &SystemParams, seed: f64, r_lo: f64, r_hi: f64, tol: f64) -> Result<f64> {
    let f = |r: f64| Ok(brake_first_crossing_with(params, r, tol)?.state.p_r);
    let mut delta = 1e-3 * (r_hi - r_lo);
    loop {
        let a = (seed - delta).max(r_lo);
        let b = (seed + delta).min(r_hi);
        let (fa, fb) = (f(a)?, f(b)?);
        if fa.signum() != fb.signum() || fa == 0.0 || fb == 0.0 {
            return crate::roots::brent_with_values(f, a, fa, b, fb, 1e-14 * seed.abs().max(1.0), 200);
        }
        if a <= r_lo && b >= r_hi {
            return Err(Error::NoBracket { lo: r_lo, hi: r_hi });
        }
        delta *= 4.0;
    }
}

/// The z-symmetric brake orbit by shooting, continued in `ε` from the Kepler
/// root `ω/√(−2h)` in steps of `min(ε, 10⁻³)`.
pub fn shoot_brake_orbit(params: &SystemParams) -> Result<BrakeOrbit> {
    shoot_brake_orbit_with(params, ORBIT_TOL)
}

/// [`shoot_brake_orbit`] with step tolerance `tol`.
pub fn shoot_brake_orbit_with(params: &SystemParams, tol: f64) -> Result<BrakeOrbit> {
    let ks = kepler_scalars(params.omega, params.h)?;
    let (r_lo, r_hi) = {
        let pad = 1e-6 * (ks.r_max - ks.r_min);
        (ks.r_min + pad, ks.r_max - pad)
    };
    let mut r0 = ks.circular_brake_r;
    let eps = params.eps;
    let step = if eps > 0.0 { eps.min(1e-3) } else { 0.0 };
    let n_steps = if eps > 0.0 { (eps / step).ceil() as usize } else { 0 };
    let mut eps_reached = 0.0;
    for k in 0..=n_steps {
        let e_k = if k == n_steps { eps } else { k as f64 * step };
        let p_k = params.with_eps(e_k)?;
        r0 = shoot_root(&p_k, r0, r_lo, r_hi, tol)?;
        eps_reached = e_k;
    }
    complete_brake_orbit(params, r0, eps_reached, tol)
}

fn reflect(s: &PhaseState) -> PhaseState {
    PhaseState::new(-s.p_r, s.p_z, s.r, -s.z)
}

fn complete_brake_orbit(params: &SystemParams, r0: f64, eps_reached: f64, tol: f64) -> Result<BrakeOrbit> {
    let crossing = brake_first_crossing_with(params, r0, tol)?;
    let t1 = crossing.t;
    let period = 4.0 * t1;
    let launch = brake_launch_point(params, r0)?;
    let start = PhaseState::new(0.0, 0.0, launch.0, launch.1);

    // symmetric sample times about the crossing
    let n_sym = 64;
    let offsets: Vec<f64> = (1..=n_sym).map(|j| t1 * j as f64 / n_sym as f64).collect();
    let mut outputs: Vec<f64> = offsets.iter().flat_map(|s| [t1 - s, t1 + s]).filter(|t| *t > 0.0).collect();
    outputs.push(period);
    let cfg = FlowConfig { output_times: outputs, ..FlowConfig::new(tol) };
    let mut trajectory = integrate_with(start, params, 1.05 * period, &cfg)?;

    let find = |t: f64| -> Option<PhaseState> { trajectory.samples.iter().find(|s| s.t == t).map(|s| s.state) };
    let scale = 1.0 + launch.0.abs();
    let mut symmetry_residual: f64 = 0.0;
    for s in &offsets {
        let fwd = find(t1 + s).ok_or(Error::NoReturn { t_cap: t1 + s })?;
        let back = if (t1 - s).abs() < 1e-15 * t1 { start } else { find(t1 - s).ok_or(Error::NoReturn { t_cap: t1 - s })? };
        symmetry_residual = symmetry_residual.max(fwd.distance(&reflect(&back)) / scale);
    }
    let end = find(period).ok_or(Error::NoReturn { t_cap: period })?;
    let closure_residual = end.distance(&start);

    let t_lim = period * (1.0 + 1e-6);
    let rest_times: Vec<f64> = trajectory.events_of(EventKind::RestPoint).map(|e| e.t).filter(|t| *t <= t_lim).collect();
    trajectory.events.retain(|e| e.t <= t_lim);
    trajectory.samples.retain(|s| s.t <= period);
    if symmetry_residual > SYMMETRY_TOL {
        return Err(Error::SymmetryResidual { residual: symmetry_residual, tolerance: SYMMETRY_TOL });
    }
    Ok(BrakeOrbit {
        omega: params.omega,
        h: params.h,
        eps: params.eps,
        r0,
        launch,
        eps_reached,
        period,
        shooting_residual: crossing.state.p_r,
        closure_residual,
        symmetry_residual,
        rest_times,
        crossing,
        trajectory,
    })
}

/// Signed number of transverse passages through the open section disk
/// `{z = 0}` over the samples of `trajectory`: `+1` for each descending and
/// `−1` for each ascending passage of `Σ₋` counted on its own branch, i.e.
/// the number of `ZCross−` events. Orbits lying in the plane give `0`.
pub fn section_crossings(trajectory: &Trajectory) -> Result<i64> {
    let mut count = 0;
    for e in &trajectory.events {
        if matches!(e.kind, EventKind::ZCrossMinus | EventKind::ZCrossPlus) && e.state.p_z.abs() < CROSSING_TOL {
            return Err(Error::TangentialCrossing { t: e.t, pz: e.state.p_z.abs() });
        }
        if e.kind == EventKind::ZCrossMinus {
            count += 1;
        }
    }
    Ok(count)
}

/// Linking count of the brake orbit with the planar orbit (expected `1`).
pub fn hopf_link_check(brake: &BrakeOrbit, planar: &PlanarOrbit) -> Result<i64> {
    if brake.omega != planar.omega || brake.h != planar.h || brake.eps != planar.eps {
        return Err(Error::domain("brake and planar orbits belong to different systems"));
    }
    section_crossings(&brake.trajectory)
}

/// Scalars written next to an orbit CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrbitSidecar {
    pub kind: String,
    pub omega: f64,
    pub h: f64,
    pub eps: f64,
    pub r0: Option<f64>,
    pub period: f64,
    pub tau_period: Option<f64>,
    pub closure_residual: f64,
    pub symmetry_residual: Option<f64>,
    pub shooting_residual: Option<f64>,
    pub link_count: Option<i64>,
    pub rest_times: Vec<f64>,
}

impl PlanarOrbit {
    pub fn sidecar(&self) -> OrbitSidecar {
        OrbitSidecar {
            kind: "planar".into(),
            omega: self.omega,
            h: self.h,
            eps: self.eps,
            r0: Some(self.r1),
            period: self.period,
            tau_period: Some(self.tau_period),
            closure_residual: self.closure_residual,
            symmetry_residual: None,
            shooting_residual: None,
            link_count: Some(0),
            rest_times: Vec::new(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        self.trajectory.write_csv(w)
    }
}

impl BrakeOrbit {
    pub fn sidecar(&self, link_count: Option<i64>) -> OrbitSidecar {
        OrbitSidecar {
            kind: "brake".into(),
            omega: self.omega,
            h: self.h,
            eps: self.eps,
            r0: Some(self.r0),
            period: self.period,
            tau_period: None,
            closure_residual: self.closure_residual,
            symmetry_residual: Some(self.symmetry_residual),
            shooting_residual: Some(self.shooting_residual),
            link_count,
            rest_times: self.rest_times.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        self.trajectory.write_csv(w)
    }

    /// Section chart coordinates `(r, p_r)` of the descending crossing.
    pub fn section_point(&self) -> (f64, f64) {
        (self.crossing.state.r, self.crossing.state.p_r)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.trajectory.samples
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kepler::brake_pr_oracle;
    use crate::model::make_ellipsoid_perturbation;
    use std::sync::Arc;

    fn ellipsoid(eps: f64) -> SystemParams {
        SystemParams::new(1.0, -0.375, eps, Arc::new(make_ellipsoid_perturbation())).unwrap()
    }

    #[test]
    fn kepler_planar_orbit() {
        let p = SystemParams::kepler(1.0, -0.375).unwrap();
        let o = planar_orbit(&p).unwrap();
        assert!((o.r1 - 2.0 / 3.0).abs() < 1e-12 && (o.r2 - 2.0).abs() < 1e-12);
        assert!((o.period - 9.67359).abs() < 1e-5);
        assert!((o.tau_period - 2.0 * PI).abs() < 1e-9);
        assert!(o.energy_residual < 1e-10);
        assert!(o.trajectory.samples.iter().all(|s| s.state.z == 0.0 && s.state.p_z == 0.0));
        assert_eq!(section_crossings(&o.trajectory).unwrap(), 0);
    }

    #[test]
    fn kepler_rotation_number_is_one() {
        let p = SystemParams::kepler(1.0, -0.375).unwrap();
        let r = rotation_number(&p, 4).unwrap();
        assert!((r.rot - 1.0).abs() < 1e-9);
        assert!((r.winding_rot - 1.0).abs() < 1e-9);
        assert_eq!(r.stability, EigenKind::Parabolic);
    }

    #[test]
    fn ellipsoid_rotation_derivative() {
        let d = rotation_derivative(&ellipsoid(0.0), 1e-3, 8).unwrap();
        assert!((d - 6.0).abs() < 6e-2, "dRot/dε = {d}");
        let r = rotation_number(&ellipsoid(1e-3), 8).unwrap();
        assert_eq!(r.stability, EigenKind::Elliptic);
        assert!((r.rot - r.winding_rot).abs() < 1.0 / 8.0);
    }

    #[test]
    fn kepler_shooting_function_matches_closed_form() {
        let p = SystemParams::kepler(1.0, -0.375).unwrap();
        for r in [0.8, 1.0, 1.154, 1.5, 1.9] {
            let f2 = brake_shooting_function(&p, r).unwrap();
            assert!((f2 - brake_pr_oracle(r, 1.0, -0.375).unwrap()).abs() < 1e-7, "r = {r}");
        }
    }

    #[test]
    fn kepler_brake_orbit() {
        let p = SystemParams::kepler(1.0, -0.375).unwrap();
        let b = shoot_brake_orbit(&p).unwrap();
        assert!((b.r0 - 1.0 / 0.75f64.sqrt()).abs() < 1e-8);
        assert!(b.symmetry_residual < 1e-7);
        assert!(b.closure_residual < 1e-8);
        assert_eq!(b.rest_times.len(), 2);
        let planar = planar_orbit(&p).unwrap();
        assert_eq!(hopf_link_check(&b, &planar).unwrap(), 1);
    }

    #[test]
    fn ellipsoid_brake_orbit_continuation() {
        let p = ellipsoid(1e-3);
        let b = shoot_brake_orbit(&p).unwrap();
        assert_eq!(b.eps_reached, 1e-3);
        assert!(b.symmetry_residual < 1e-7);
        assert_eq!(hopf_link_check(&b, &planar_orbit(&p).unwrap()).unwrap(), 1);
    }
}
