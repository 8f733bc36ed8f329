//! Adaptive explicit Runge–Kutta integration with the Dormand–Prince 8(5,3) pair.

use super::tableau::{A, B, C, E3, E5, STAGES};
use crate::error::{Error, Result};

/// An autonomous-or-not first-order system `y' = F(t, y)` on `ℝᴺ`.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N], dy: &mut [f64; N]);

    /// Called on every accepted state; an error aborts the integration.
    fn check(&self, _t: f64, _y: &[f64; N]) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub max_step: f64,
}

impl StepControl {
    pub fn new(tol: f64) -> Self {
        StepControl { rtol: tol, atol: tol, max_steps: 2_000_000, max_step: f64::INFINITY }
    }
}

/// A single trial step: new state, derivative at the new state and the scaled
/// error norm (accept when ≤ 1).
pub(crate) struct Trial<const N: usize> {
    pub y: [f64; N],
    pub f: [f64; N],
    pub err: f64,
}

pub(crate) fn dop853_step<S: OdeSystem<N>, const N: usize>(
    sys: &S,
    t: f64,
    y: &[f64; N],
    f0: &[f64; N],
    h: f64,
    ctl: &StepControl,
) -> Trial<N> {
    let mut k = [[0.0; N]; STAGES];
    k[0] = *f0;
    let mut tmp = [0.0; N];
    for s in 1..STAGES {
        for i in 0..N {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    acc += a * kj[i];
                }
            }
            tmp[i] = y[i] + h * acc;
        }
        let mut out = [0.0; N];
        sys.rhs(t + C[s] * h, &tmp, &mut out);
        k[s] = out;
    }
    let mut y_new = [0.0; N];
    for i in 0..N {
        let mut acc = 0.0;
        for (s, ks) in k.iter().enumerate() {
            if B[s] != 0.0 {
                acc += B[s] * ks[i];
            }
        }
        y_new[i] = y[i] + h * acc;
    }
    let mut f_new = [0.0; N];
    sys.rhs(t + h, &y_new, &mut f_new);

    let mut e5 = 0.0;
    let mut e3 = 0.0;
    for i in 0..N {
        let scale = ctl.atol + ctl.rtol * y[i].abs().max(y_new[i].abs());
        let mut a5 = E5[STAGES] * f_new[i];
        let mut a3 = E3[STAGES] * f_new[i];
        for (s, ks) in k.iter().enumerate() {
            a5 += E5[s] * ks[i];
            a3 += E3[s] * ks[i];
        }
        e5 += (a5 / scale).powi(2);
        e3 += (a3 / scale).powi(2);
    }
    let err = if e5 == 0.0 && e3 == 0.0 {
        0.0
    } else {
        h.abs() * e5 / ((e5 + 0.01 * e3) * N as f64).sqrt()
    };
    let finite = y_new.iter().chain(f_new.iter()).all(|v| v.is_finite());
    Trial { y: y_new, f: f_new, err: if finite && err.is_finite() { err } else { f64::INFINITY } }
}

/// Stateful adaptive integrator. Time may run in either direction.
pub struct Integrator<'a, S: OdeSystem<N>, const N: usize> {
    sys: &'a S,
    ctl: StepControl,
    t: f64,
    y: [f64; N],
    f: [f64; N],
    h: f64,
    steps: usize,
    // state before the last accepted step, kept for event re-stepping
    prev: Option<(f64, [f64; N], [f64; N])>,
}

impl<'a, S: OdeSystem<N>, const N: usize> Integrator<'a, S, N> {
    pub fn new(sys: &'a S, t0: f64, y0: [f64; N], direction: f64, ctl: StepControl) -> Self {
        let mut f = [0.0; N];
        sys.rhs(t0, &y0, &mut f);
        let h = initial_step(sys, t0, &y0, &f, direction.signum(), &ctl);
        Integrator { sys, ctl, t: t0, y: y0, f, h, steps: 0, prev: None }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    pub fn derivative(&self) -> &[f64; N] {
        &self.f
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn system(&self) -> &S {
        self.sys
    }

    pub fn control(&self) -> &StepControl {
        &self.ctl
    }

    /// Take one accepted step, never passing `t_limit`.
    pub fn step(&mut self, t_limit: f64) -> Result<()> {
        let dir = self.h.signum();
        let mut h = self.h.abs().min(self.ctl.max_step) * dir;
        let remaining = t_limit - self.t;
        if remaining * dir <= 0.0 {
            return Ok(());
        }
        let mut clipped = false;
        if h.abs() >= remaining.abs() {
            h = remaining;
            clipped = true;
        }
        let mut rejected = false;
        loop {
            if self.steps >= self.ctl.max_steps {
                return Err(Error::StepFailure { t: self.t, h });
            }
            let min_step = 10.0 * f64::EPSILON * self.t.abs().max(1.0);
            if h.abs() < min_step {
                return Err(Error::StepFailure { t: self.t, h });
            }
            let trial = dop853_step(self.sys, self.t, &self.y, &self.f, h, &self.ctl);
            self.steps += 1;
            if trial.err <= 1.0 {
                let factor = if trial.err == 0.0 { 10.0 } else { (0.9 * trial.err.powf(-1.0 / 8.0)).min(10.0) };
                let factor = if rejected { factor.min(1.0) } else { factor };
                let t_new = if clipped { t_limit } else { self.t + h };
                self.sys.check(t_new, &trial.y)?;
                self.prev = Some((self.t, self.y, self.f));
                self.t = t_new;
                self.y = trial.y;
                self.f = trial.f;
                // a clipped step says nothing about the natural step size
                if !clipped || factor < 1.0 {
                    self.h = h * factor;
                }
                return Ok(());
            }
            rejected = true;
            clipped = false;
            let factor = if trial.err.is_finite() { (0.9 * trial.err.powf(-1.0 / 8.0)).max(0.2) } else { 0.2 };
            h *= factor;
        }
    }

    /// Integrate until exactly `t_target`.
    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        while (t_target - self.t) * self.h.signum() > 0.0 {
            self.step(t_target)?;
        }
        Ok(())
    }

    /// State at a time inside the last accepted step, by re-stepping from its
    /// start. Accuracy matches the step itself.
    pub fn state_in_last_step(&self, t: f64) -> [f64; N] {
        match &self.prev {
            Some((t0, y0, f0)) => {
                if t == *t0 {
                    return *y0;
                }
                dop853_step(self.sys, *t0, y0, f0, t - t0, &self.ctl).y
            }
            None => self.y,
        }
    }

    pub fn last_step_start(&self) -> Option<(f64, &[f64; N])> {
        self.prev.as_ref().map(|(t, y, _)| (*t, y))
    }

    /// Replace the current state with one inside the last step (used to stop
    /// exactly at an event).
    pub fn truncate_to(&mut self, t: f64, y: [f64; N]) {
        let mut f = [0.0; N];
        self.sys.rhs(t, &y, &mut f);
        self.t = t;
        self.y = y;
        self.f = f;
    }
}

fn initial_step<S: OdeSystem<N>, const N: usize>(
    sys: &S,
    t0: f64,
    y0: &[f64; N],
    f0: &[f64; N],
    dir: f64,
    ctl: &StepControl,
) -> f64 {
    let dir = if dir == 0.0 { 1.0 } else { dir };
    let scale = |i: usize| ctl.atol + ctl.rtol * y0[i].abs();
    let d0 = (0..N).map(|i| (y0[i] / scale(i)).powi(2)).sum::<f64>().sqrt() / (N as f64).sqrt();
    let d1 = (0..N).map(|i| (f0[i] / scale(i)).powi(2)).sum::<f64>().sqrt() / (N as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let mut y1 = [0.0; N];
    for i in 0..N {
        y1[i] = y0[i] + dir * h0 * f0[i];
    }
    let mut f1 = [0.0; N];
    sys.rhs(t0 + dir * h0, &y1, &mut f1);
    let d2 = (0..N).map(|i| ((f1[i] - f0[i]) / scale(i)).powi(2)).sum::<f64>().sqrt() / (N as f64).sqrt() / h0;
    let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 8.0)
    };
    dir * (100.0 * h0).min(h1).min(ctl.max_step)
}
