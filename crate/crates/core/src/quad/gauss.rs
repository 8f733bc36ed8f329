//! Gauss–Legendre rules and adaptive 1D integration by order doubling.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A value with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn new(value: f64, error: f64) -> Self {
        Estimate { value, error }
    }

    pub fn exact(value: f64) -> Self {
        Estimate { value, error: 0.0 }
    }
}

/// Nodes and weights on `[−1, 1]`.
#[derive(Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// `(P_n(x), P_{n−1}(x))` by the three-term recurrence, `n ≥ 1`.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

fn compute_rule(n: usize) -> GaussRule {
    assert!(n >= 1, "Gauss rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (pn, pm) = legendre_pair(n, x);
            let dx = pn / (nf * (x * pn - pm) / (x * x - 1.0));
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (pn, pm) = legendre_pair(n, x);
        let dp = nf * (x * pn - pm) / (x * x - 1.0);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    GaussRule { nodes, weights }
}

/// Cached `n`-point Gauss–Legendre rule.
pub fn gauss_rule(n: usize) -> Arc<GaussRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("gauss rule cache poisoned");
    map.entry(n).or_insert_with(|| Arc::new(compute_rule(n))).clone()
}

/// Fixed-order Gauss–Legendre sum of `f` over `[a, b]`.
pub fn gauss_fixed<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> f64 {
    let rule = gauss_rule(n);
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mut s = 0.0;
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        s += w * f(m + h * x);
    }
    s * h
}

pub const MAX_GAUSS_ORDER: usize = 4096;

/// Gauss–Legendre with the order doubled from 16 until two successive values
/// agree to `max(abs_tol, rel_tol·|I|)`.
pub fn gauss_adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    what: &'static str,
) -> Result<Estimate> {
    let mut n = 16;
    let mut prev = gauss_fixed(&mut f, a, b, n);
    loop {
        n *= 2;
        let cur = gauss_fixed(&mut f, a, b, n);
        let err = (cur - prev).abs();
        let tol = abs_tol.max(rel_tol * cur.abs());
        if err <= tol {
            return Ok(Estimate::new(cur, err));
        }
        if n >= MAX_GAUSS_ORDER || !cur.is_finite() {
            return Err(Error::Quadrature { what, estimate: err, tolerance: tol });
        }
        prev = cur;
    }
}

/// Trapezoid rule for a smooth function that is even and `2π`-periodic about
/// `0`, integrated over `[0, π]` (spectrally accurate), doubling from 64 points.
pub fn even_periodic_half<F: FnMut(f64) -> f64>(mut f: F, abs_tol: f64, rel_tol: f64, what: &'static str) -> Result<Estimate> {
    let mut n = 32usize;
    let mut sum = 0.5 * (f(0.0) + f(PI));
    for j in 1..n {
        sum += f(PI * j as f64 / n as f64);
    }
    let mut prev = sum * PI / n as f64;
    loop {
        // new nodes are the odd multiples of π/(2n)
        for j in 0..n {
            sum += f(PI * (2 * j + 1) as f64 / (2 * n) as f64);
        }
        n *= 2;
        let cur = sum * PI / n as f64;
        let err = (cur - prev).abs();
        let tol = abs_tol.max(rel_tol * cur.abs());
        if err <= tol && n >= 64 {
            return Ok(Estimate::new(cur, err));
        }
        if n >= 1 << 20 || !cur.is_finite() {
            return Err(Error::Quadrature { what, estimate: err, tolerance: tol });
        }
        prev = cur;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_integrate_polynomials_exactly() {
        for n in [1usize, 2, 3, 7, 16, 33, 200] {
            let rule = gauss_rule(n);
            let wsum: f64 = rule.weights.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-13, "n = {n}");
            let deg = 2 * n - 1;
            let s: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((s - exact).abs() < 1e-13, "n = {n}: {s} vs {exact}");
        }
    }

    #[test]
    fn adaptive_smooth_integral() {
        let est = gauss_adaptive(|x: f64| x.exp(), 0.0, 1.0, 1e-14, 0.0, "exp").unwrap();
        assert!((est.value - (1f64.exp() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn even_periodic_trapezoid() {
        // ∫₀^π dθ/(2 + cos θ) = π/√3
        let est = even_periodic_half(|t: f64| 1.0 / (2.0 + t.cos()), 1e-14, 0.0, "t").unwrap();
        assert!((est.value - PI / 3f64.sqrt()).abs() < 1e-14);
    }
}
