//! Reduced Hamiltonian flow, its linearisations and event detection.
//!
//! The state vector is ordered `(p_r, p_z, r, z)` and evolves by
//! `ṗ_r = −U_r`, `ṗ_z = −U_z`, `ṙ = p_r`, `ż = p_z`.

pub mod integrator;
mod tableau;

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{hamiltonian, PhaseState, SystemParams};
use crate::report::fmt_f64;
use crate::roots::brent_with_values;
pub use integrator::{Integrator, OdeSystem, StepControl};

/// Default relative/absolute step tolerance.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Slack factor between the step tolerance and the accepted energy drift per
/// reference period.
pub const ENERGY_SLACK: f64 = 100.0;

/// The reduced Hamiltonian vector field on `(p_r, p_z, r, z)`.
pub struct PhaseFlow<'a> {
    params: &'a SystemParams,
    r_low: f64,
    r_cap: f64,
}

impl<'a> PhaseFlow<'a> {
    pub fn new(params: &'a SystemParams) -> Self {
        let w2 = params.omega * params.omega;
        PhaseFlow { params, r_low: 0.25 * w2, r_cap: 1e6 * w2.max(1.0) }
    }

    pub fn with_r_cap(mut self, r_cap: f64) -> Self {
        self.r_cap = r_cap;
        self
    }

    fn check_r(&self, t: f64, r: f64) -> Result<()> {
        if !(r > self.r_low && r < self.r_cap) {
            return Err(Error::RBlowup { t, r });
        }
        Ok(())
    }
}

impl OdeSystem<4> for PhaseFlow<'_> {
    fn rhs(&self, _t: f64, y: &[f64; 4], dy: &mut [f64; 4]) {
        let (ur, uz) = self.params.potential_gradient(y[2], y[3]);
        dy[0] = -ur;
        dy[1] = -uz;
        dy[2] = y[0];
        dy[3] = y[1];
    }

    fn check(&self, t: f64, y: &[f64; 4]) -> Result<()> {
        self.check_r(t, y[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "ZCross+")]
    ZCrossPlus,
    #[serde(rename = "ZCross-")]
    ZCrossMinus,
    RestPoint,
    PrZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub kind: EventKind,
    pub t: f64,
    pub state: PhaseState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub state: PhaseState,
}

/// Time-ordered samples (increasing for forward runs, decreasing for backward
/// runs) with localised events.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// Energy of the initial state.
    pub energy: f64,
    pub energy_drift: f64,
    pub energy_limit: f64,
    pub failed: bool,
    pub events: Vec<EventRecord>,
    pub steps: usize,
}

impl Trajectory {
    pub fn start(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn end(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &EventRecord> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// CSV with header `t,p_r,p_z,r,z`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,p_r,p_z,r,z")?;
        for s in &self.samples {
            let p = s.state;
            writeln!(w, "{},{},{},{},{}", fmt_f64(s.t), fmt_f64(p.p_r), fmt_f64(p.p_z), fmt_f64(p.r), fmt_f64(p.z))?;
        }
        Ok(())
    }
}

/// Events recorded by [`integrate_with`], in time order.
pub fn locate_event(trajectory: &Trajectory, kind: EventKind) -> Vec<EventRecord> {
    trajectory.events_of(kind).copied().collect()
}

/// Options for [`integrate_with`].
#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub tol: f64,
    /// A rest point is reported when `|p| ≤ rest_tol` at the kinetic-energy minimum.
    pub rest_tol: f64,
    /// Events to detect; others are ignored.
    pub detect: Vec<EventKind>,
    /// Stop at the `count`-th event of this kind (state at the event is the
    /// last sample).
    pub stop_at: Option<(EventKind, usize)>,
    /// Times at which samples must be recorded exactly.
    pub output_times: Vec<f64>,
    /// Record every accepted step as a sample.
    pub record_steps: bool,
    pub max_steps: usize,
    pub r_cap: Option<f64>,
}

impl FlowConfig {
    pub fn new(tol: f64) -> Self {
        FlowConfig {
            tol,
            rest_tol: 1e-6,
            detect: vec![EventKind::ZCrossPlus, EventKind::ZCrossMinus, EventKind::RestPoint, EventKind::PrZero],
            stop_at: None,
            output_times: Vec::new(),
            record_steps: true,
            max_steps: 2_000_000,
            r_cap: None,
        }
    }

    pub fn stop_at(mut self, kind: EventKind, count: usize) -> Self {
        self.stop_at = Some((kind, count));
        if !self.detect.contains(&kind) {
            self.detect.push(kind);
        }
        self
    }

    pub fn detect_only(mut self, kinds: &[EventKind]) -> Self {
        self.detect = kinds.to_vec();
        self
    }
}

/// Reference time scale used to normalise energy drift and bound step sizes:
/// the Kepler period when it exists, otherwise `2π`.
pub fn reference_period(params: &SystemParams) -> f64 {
    if params.h < 0.0 {
        2.0 * PI * (-1.0 / (2.0 * params.h)).powf(1.5)
    } else {
        2.0 * PI
    }
}

/// Integrate `start` to `t_end` with all events detected.
pub fn integrate(start: PhaseState, params: &SystemParams, t_end: f64, tol: f64) -> Result<Trajectory> {
    integrate_with(start, params, t_end, &FlowConfig::new(tol))
}

#[derive(Clone, Copy)]
enum Watch {
    Z,
    Pr,
    Rest,
}

fn watch_value(w: Watch, y: &[f64; 4], params: &SystemParams) -> f64 {
    match w {
        Watch::Z => y[3],
        Watch::Pr => y[0],
        Watch::Rest => {
            let (ur, uz) = params.potential_gradient(y[2], y[3]);
            -(y[0] * ur + y[1] * uz)
        }
    }
}

pub fn integrate_with(start: PhaseState, params: &SystemParams, t_end: f64, cfg: &FlowConfig) -> Result<Trajectory> {
    if start.r <= 0.0 {
        return Err(Error::domain(format!("start radius {} must be positive", start.r)));
    }
    if t_end == 0.0 || !t_end.is_finite() {
        return Err(Error::domain("integration span must be nonzero and finite"));
    }
    let mut flow = PhaseFlow::new(params);
    if let Some(cap) = cfg.r_cap {
        flow = flow.with_r_cap(cap);
    }
    flow.check_r(0.0, start.r)?;
    let dir = t_end.signum();
    let reference = reference_period(params);
    let mut ctl = StepControl::new(cfg.tol);
    ctl.max_steps = cfg.max_steps;
    ctl.max_step = reference / 16.0;

    let energy = hamiltonian(&start, params)?;
    let energy_limit = ENERGY_SLACK * cfg.tol * (1.0 + energy.abs()) * f64::max(1.0, t_end.abs() / reference);

    let mut outputs: Vec<f64> = cfg.output_times.iter().copied().filter(|t| t * dir > 0.0 && t * dir <= t_end * dir).collect();
    outputs.sort_by(|a, b| (a * dir).total_cmp(&(b * dir)));
    outputs.dedup();
    let mut next_out = 0;

    let watches: Vec<Watch> = {
        let mut v = Vec::new();
        if cfg.detect.iter().any(|k| matches!(k, EventKind::ZCrossPlus | EventKind::ZCrossMinus)) {
            v.push(Watch::Z);
        }
        if cfg.detect.contains(&EventKind::PrZero) {
            v.push(Watch::Pr);
        }
        if cfg.detect.contains(&EventKind::RestPoint) {
            v.push(Watch::Rest);
        }
        v
    };

    let mut it = Integrator::new(&flow, 0.0, start.to_array(), dir, ctl);
    let mut traj = Trajectory {
        samples: vec![Sample { t: 0.0, state: start }],
        energy,
        energy_drift: 0.0,
        energy_limit,
        failed: false,
        events: Vec::new(),
        steps: 0,
    };
    let mut counts = [0usize; 4];

    loop {
        let target = if next_out < outputs.len() { outputs[next_out] } else { t_end };
        let y0 = *it.y();
        it.step(target)?;
        let y1 = *it.y();
        let t1 = it.t();
        let t0 = it.last_step_start().map(|(t, _)| t).unwrap_or(0.0);

        // collect events in this step, in time order
        let mut found: Vec<EventRecord> = Vec::new();
        for &w in &watches {
            let g0 = watch_value(w, &y0, params);
            let g1 = watch_value(w, &y1, params);
            let crossed = g0 != 0.0 && (g1 == 0.0 || g0.signum() != g1.signum());
            if !crossed {
                continue;
            }
            // kinetic-energy minimum: dK/dt goes from negative to positive in time
            if matches!(w, Watch::Rest) && g0 * dir > 0.0 {
                continue;
            }
            let tev = localize(&it, params, w, t0, g0, t1, g1)?;
            let ystate = if tev == t1 { y1 } else { it.state_in_last_step(tev) };
            let state = PhaseState::from_array(&ystate);
            let kind = match w {
                Watch::Z => {
                    if state.p_z < 0.0 {
                        EventKind::ZCrossMinus
                    } else {
                        EventKind::ZCrossPlus
                    }
                }
                Watch::Pr => EventKind::PrZero,
                Watch::Rest => {
                    if state.p_r.hypot(state.p_z) > cfg.rest_tol {
                        continue;
                    }
                    EventKind::RestPoint
                }
            };
            if !cfg.detect.contains(&kind) {
                continue;
            }
            found.push(EventRecord { kind, t: tev, state });
        }
        found.sort_by(|a, b| (a.t * dir).total_cmp(&(b.t * dir)));

        let mut stop: Option<EventRecord> = None;
        for ev in found {
            traj.events.push(ev);
            let idx = ev.kind as usize;
            counts[idx] += 1;
            if let Some((kind, count)) = cfg.stop_at {
                if kind == ev.kind && counts[idx] == count {
                    stop = Some(ev);
                    break;
                }
            }
        }

        if let Some(ev) = stop {
            it.truncate_to(ev.t, ev.state.to_array());
            push_sample(&mut traj, ev.t, ev.state, params);
            break;
        }
        let state = PhaseState::from_array(&y1);
        let at_output = next_out < outputs.len() && t1 == outputs[next_out];
        if at_output {
            next_out += 1;
        }
        if cfg.record_steps || at_output || t1 == t_end {
            push_sample(&mut traj, t1, state, params);
        } else {
            track_energy(&mut traj, &state, params);
        }
        if t1 == t_end {
            break;
        }
    }
    traj.steps = it.steps();
    if let Some((kind, count)) = cfg.stop_at {
        if traj.events_of(kind).count() < count {
            return Err(Error::NoReturn { t_cap: t_end });
        }
    }
    traj.failed = traj.energy_drift > traj.energy_limit;
    Ok(traj)
}

fn track_energy(traj: &mut Trajectory, state: &PhaseState, params: &SystemParams) {
    if let Ok(h) = hamiltonian(state, params) {
        traj.energy_drift = traj.energy_drift.max((h - traj.energy).abs());
    }
}

fn push_sample(traj: &mut Trajectory, t: f64, state: PhaseState, params: &SystemParams) {
    track_energy(traj, &state, params);
    traj.samples.push(Sample { t, state });
}

fn localize(
    it: &Integrator<'_, PhaseFlow<'_>, 4>,
    params: &SystemParams,
    w: Watch,
    t0: f64,
    g0: f64,
    t1: f64,
    g1: f64,
) -> Result<f64> {
    if g1 == 0.0 {
        return Ok(t1);
    }
    let xtol = 4.0 * f64::EPSILON * t0.abs().max(t1.abs()).max(1.0);
    brent_with_values(|t| Ok(watch_value(w, &it.state_in_last_step(t), params)), t0, g0, t1, g1, xtol, 200)
}

/// Flow together with its 4×4 fundamental matrix (row-major, after the state).
pub struct VariationalFlow<'a> {
    flow: PhaseFlow<'a>,
}

impl OdeSystem<20> for VariationalFlow<'_> {
    fn rhs(&self, t: f64, y: &[f64; 20], dy: &mut [f64; 20]) {
        let mut s = [0.0; 4];
        s.copy_from_slice(&y[..4]);
        let mut ds = [0.0; 4];
        self.flow.rhs(t, &s, &mut ds);
        dy[..4].copy_from_slice(&ds);
        let (urr, urz, uzz) = self.flow.params.potential_hessian(y[2], y[3]);
        // rows of DF acting on the columns of Φ
        for j in 0..4 {
            let col = |i: usize| y[4 + 4 * i + j];
            dy[4 + j] = -urr * col(2) - urz * col(3);
            dy[4 + 4 + j] = -urz * col(2) - uzz * col(3);
            dy[4 + 8 + j] = col(0);
            dy[4 + 12 + j] = col(1);
        }
    }

    fn check(&self, t: f64, y: &[f64; 20]) -> Result<()> {
        self.flow.check_r(t, y[2])
    }
}

/// State and fundamental matrix of the linearised flow after time `t_end`.
pub fn integrate_variational(
    start: PhaseState,
    params: &SystemParams,
    t_end: f64,
    tol: f64,
) -> Result<(PhaseState, [[f64; 4]; 4])> {
    let sys = VariationalFlow { flow: PhaseFlow::new(params) };
    let mut y = [0.0; 20];
    y[..4].copy_from_slice(&start.to_array());
    for i in 0..4 {
        y[4 + 5 * i] = 1.0;
    }
    let mut ctl = StepControl::new(tol);
    ctl.max_step = reference_period(params) / 16.0;
    let mut it = Integrator::new(&sys, 0.0, y, t_end.signum(), ctl);
    it.advance_to(t_end)?;
    let y = it.y();
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row.copy_from_slice(&y[4 + 4 * i..8 + 4 * i]);
    }
    Ok((PhaseState::from_array(&y[..4]), m))
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn det4(m: &[[f64; 4]; 4]) -> f64 {
    let mut a = *m;
    let mut det = 1.0;
    for c in 0..4 {
        let p = (c..4).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        if a[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            a.swap(p, c);
            det = -det;
        }
        det *= a[c][c];
        for r in c + 1..4 {
            let f = a[r][c] / a[c][c];
            for k in c..4 {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    det
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EigenKind {
    Elliptic,
    Hyperbolic,
    Parabolic,
}

/// Threshold on `||tr| − 2|` below which a monodromy is reported parabolic.
pub const PARABOLIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monodromy2 {
    pub matrix: [[f64; 2]; 2],
    pub det: f64,
    pub trace: f64,
    pub eigen_kind: EigenKind,
}

impl Monodromy2 {
    pub fn from_matrix(matrix: [[f64; 2]; 2]) -> Self {
        let det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
        let trace = matrix[0][0] + matrix[1][1];
        let eigen_kind = classify_trace(trace);
        Monodromy2 { matrix, det, trace, eigen_kind }
    }
}

pub fn classify_trace(trace: f64) -> EigenKind {
    let d = trace.abs() - 2.0;
    if d.abs() <= PARABOLIC_TOL {
        EigenKind::Parabolic
    } else if d < 0.0 {
        EigenKind::Elliptic
    } else {
        EigenKind::Hyperbolic
    }
}

/// Data of the planar periodic orbit needed by the transverse linearisation:
/// the inner turning point and the period in the rescaled time `τ`.
#[derive(Debug, Clone, Copy)]
pub struct PlanarSeed {
    pub r_turn: f64,
    pub tau_period: f64,
}

/// Planar orbit in `τ` with the transverse 2×2 system and the winding angle of
/// its first column: `(p_r, r, a₁, b₁, a₂, b₂, θ, t)`.
struct TransverseFlow<'a> {
    params: &'a SystemParams,
    omega: f64,
}

impl TransverseFlow<'_> {
    fn coefficient(&self, r: f64) -> f64 {
        let p = self.params;
        self.omega * self.omega + p.eps * r * r * crate::model::angular_second_derivative(p.perturbation.as_ref(), r, p.eps)
    }
}

impl OdeSystem<8> for TransverseFlow<'_> {
    fn rhs(&self, _tau: f64, y: &[f64; 8], dy: &mut [f64; 8]) {
        let (p_r, r) = (y[0], y[1]);
        let (ur, _) = self.params.potential_gradient(r, 0.0);
        let s = r * r / self.omega;
        dy[0] = -s * ur;
        dy[1] = s * p_r;
        let k = self.coefficient(r) / self.omega;
        let w = 1.0 / self.omega;
        for c in 0..2 {
            let (a, b) = (y[2 + 2 * c], y[3 + 2 * c]);
            dy[2 + 2 * c] = -k * b;
            dy[3 + 2 * c] = w * a;
        }
        let (a, b) = (y[2], y[3]);
        dy[6] = (a * dy[3] - b * dy[2]) / (a * a + b * b);
        dy[7] = s;
    }
}

/// Result of [`integrate_variational_subsystem2`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TransverseResult {
    pub monodromy: Monodromy2,
    /// Total winding angle of the first fundamental column over all periods.
    pub winding: f64,
    pub periods: usize,
    /// Closure error of the planar orbit after one `τ`-period.
    pub closure: f64,
}

/// Transverse linearisation `η' = (1/ω) J diag(1, ω² + ε r² f_φφ) η` along the
/// planar orbit, integrated in `τ` jointly with the orbit itself.
pub fn integrate_variational_subsystem2(
    params: &SystemParams,
    orbit: &PlanarSeed,
    periods: usize,
    tol: f64,
) -> Result<TransverseResult> {
    if periods == 0 {
        return Err(Error::domain("periods must be at least 1"));
    }
    let sys = TransverseFlow { params, omega: params.omega.abs() };
    let y0 = [0.0, orbit.r_turn, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
    let mut ctl = StepControl::new(tol);
    ctl.max_step = orbit.tau_period / 16.0;
    let mut it = Integrator::new(&sys, 0.0, y0, 1.0, ctl);
    it.advance_to(orbit.tau_period)?;
    let y1 = *it.y();
    let closure = (y1[0] - y0[0]).hypot(y1[1] - y0[1]);
    let monodromy = Monodromy2::from_matrix([[y1[2], y1[4]], [y1[3], y1[5]]]);
    it.advance_to(orbit.tau_period * periods as f64)?;
    Ok(TransverseResult { monodromy, winding: it.y()[6], periods, closure })
}
