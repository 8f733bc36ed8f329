//! Hill regions in the `(r, z)` half-plane and integrals over them.
//!
//! The region is parametrised by rays from the reference point `(ω², 0)`:
//! `(r, z) = (ω² + s cos α, s sin α)` with `0 ≤ s ≤ R(α)`. Angular integrals
//! use the trapezoid rule (spectral for the smooth, even, periodic integrand
//! in `α`) and radial integrals use Gauss–Legendre, since the integrands are
//! smooth up to the boundary.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gauss::{gauss_rule, Estimate};
use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::roots::brent;

/// Fraction of `ω²/2` by which the leftmost boundary point may undercut the
/// a-priori radius bound before the region is rejected.
pub const RADIUS_MARGIN: f64 = 0.1;

/// Boundary samples of a Hill region at equally spaced ray angles in `[0, π]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HillRegion {
    pub center: (f64, f64),
    /// Ray angles `α_j = jπ/N`, `j = 0..=N`.
    pub angles: Vec<f64>,
    /// Boundary distance `R(α_j)` along each ray.
    pub radii: Vec<f64>,
    pub r_range: (f64, f64),
    /// Largest sampled `|z|` on the boundary.
    pub z_extent: f64,
}

impl HillRegion {
    pub fn boundary_point(&self, j: usize) -> (f64, f64) {
        let (a, s) = (self.angles[j], self.radii[j]);
        (self.center.0 + s * a.cos(), self.center.1 + s * a.sin())
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

/// `h − U(r, z)`, positive inside the region.
fn slack(params: &SystemParams, r: f64, z: f64) -> f64 {
    params.h - params.potential(r, z)
}

/// Distance from `(ω², 0)` to the Hill boundary along direction `α`.
pub fn boundary_radius(params: &SystemParams, alpha: f64) -> Result<f64> {
    let w2 = params.omega * params.omega;
    let (c, s) = (alpha.cos(), alpha.sin());
    let g = |t: f64| slack(params, w2 + t * c, t * s);
    if g(0.0) <= 0.0 {
        return Err(Error::NotCompact(format!("reference point (ω², 0) = ({w2}, 0) lies outside the Hill region")));
    }
    // rays heading towards the axis stop before r reaches a small floor
    let t_axis = if c < 0.0 { (w2 - 1e-3 * w2) / -c } else { f64::INFINITY };
    let cap = 1e4 * w2.max(1.0);
    let mut lo = 0.0;
    let mut hi = 1e-3 * w2;
    loop {
        let hi_c = hi.min(t_axis);
        if g(hi_c) <= 0.0 {
            hi = hi_c;
            break;
        }
        if hi_c >= t_axis {
            return Err(Error::NotCompact(format!("ray at α = {alpha} reaches the axis inside the region")));
        }
        if hi > cap {
            return Err(Error::NotCompact(format!("ray at α = {alpha} exceeds radius cap {cap}")));
        }
        lo = hi_c;
        hi *= 1.5;
    }
    brent(|t| Ok(g(t)), lo, hi, 1e-15 * hi, 200)
}

pub const DEFAULT_RAYS: usize = 256;

/// Hill region sampled on the default number of rays.
pub fn hill_region(params: &SystemParams) -> Result<HillRegion> {
    hill_region_with(params, DEFAULT_RAYS)
}

pub fn hill_region_with(params: &SystemParams, n_rays: usize) -> Result<HillRegion> {
    let w2 = params.omega * params.omega;
    let angles: Vec<f64> = (0..=n_rays).map(|j| PI * j as f64 / n_rays as f64).collect();
    let radii = angles.par_iter().map(|&a| boundary_radius(params, a)).collect::<Result<Vec<_>>>()?;
    let mut region = HillRegion { center: (w2, 0.0), angles, radii, r_range: (f64::INFINITY, 0.0), z_extent: 0.0 };
    for j in 0..region.len() {
        let (r, z) = region.boundary_point(j);
        region.r_range.0 = region.r_range.0.min(r);
        region.r_range.1 = region.r_range.1.max(r);
        region.z_extent = region.z_extent.max(z.abs());
    }
    if region.r_range.0 <= 0.5 * w2 * (1.0 - RADIUS_MARGIN) {
        return Err(Error::NotCompact(format!(
            "boundary reaches r = {} below the bound ω²/2 = {}",
            region.r_range.0,
            0.5 * w2
        )));
    }
    Ok(region)
}

/// Angular integrand `∫₀^{R(α)} g(r, z) s ds` on the rays of `region`.
fn ray_integrals<G>(region: &HillRegion, g: &G, radial_order: usize) -> Vec<f64>
where
    G: Fn(f64, f64) -> f64 + Sync,
{
    let rule = gauss_rule(radial_order);
    (0..region.len())
        .into_par_iter()
        .map(|j| {
            let (a, big_r) = (region.angles[j], region.radii[j]);
            let (c, s) = (a.cos(), a.sin());
            let half = 0.5 * big_r;
            let mut acc = 0.0;
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let t = half * (x + 1.0);
                acc += w * g(region.center.0 + t * c, region.center.1 + t * s) * t;
            }
            acc * half
        })
        .collect()
}

/// `∬ g dr dz` over the whole region as twice the upper half, for integrands
/// even in `z`. Summation order is fixed, so results do not depend on the
/// worker schedule.
pub fn integrate_upper_twice<G>(region: &HillRegion, g: &G, radial_order: usize) -> f64
where
    G: Fn(f64, f64) -> f64 + Sync,
{
    let vals = ray_integrals(region, g, radial_order);
    let n = vals.len() - 1;
    let mut sum = 0.5 * (vals[0] + vals[n]);
    for v in &vals[1..n] {
        sum += v;
    }
    2.0 * sum * PI / n as f64
}

/// `∬ g dr dz` with rays over the full circle; used to check the reflection
/// shortcut of [`integrate_upper_twice`].
pub fn integrate_full_circle<G>(params: &SystemParams, g: &G, n_rays: usize, radial_order: usize) -> Result<f64>
where
    G: Fn(f64, f64) -> f64 + Sync,
{
    let w2 = params.omega * params.omega;
    let angles: Vec<f64> = (0..n_rays).map(|j| 2.0 * PI * j as f64 / n_rays as f64).collect();
    let radii = angles.par_iter().map(|&a| boundary_radius(params, a)).collect::<Result<Vec<_>>>()?;
    let region = HillRegion { center: (w2, 0.0), angles, radii, r_range: (0.0, 0.0), z_extent: 0.0 };
    let vals = ray_integrals(&region, g, radial_order);
    Ok(vals.iter().sum::<f64>() * 2.0 * PI / n_rays as f64)
}

/// Region integral refined by doubling rays and radial order together until
/// two levels agree to `max(abs_tol, rel_tol·|I|)`.
pub fn integrate_region<G>(params: &SystemParams, g: &G, abs_tol: f64, rel_tol: f64, what: &'static str) -> Result<Estimate>
where
    G: Fn(f64, f64) -> f64 + Sync,
{
    let mut n_rays = 64;
    let mut order = 24;
    let mut prev = integrate_upper_twice(&hill_region_with(params, n_rays)?, g, order);
    loop {
        n_rays *= 2;
        order = (order * 3 / 2).min(512);
        let cur = integrate_upper_twice(&hill_region_with(params, n_rays)?, g, order);
        let err = (cur - prev).abs();
        let tol = abs_tol.max(rel_tol * cur.abs());
        if err <= tol {
            return Ok(Estimate::new(cur, err));
        }
        if n_rays >= 16384 || !cur.is_finite() {
            return Err(Error::Quadrature { what, estimate: err, tolerance: tol });
        }
        prev = cur;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kepler::{hill_rho_bounds, kepler_scalars};
    use crate::model::make_ellipsoid_perturbation;
    use std::sync::Arc;

    #[test]
    fn kepler_region_extent() {
        let p = SystemParams::kepler(1.0, -0.375).unwrap();
        let reg = hill_region(&p).unwrap();
        assert!((reg.r_range.0 - 2.0 / 3.0).abs() < 1e-12);
        assert!((reg.r_range.1 - 2.0).abs() < 1e-12);
        for j in 0..reg.len() {
            let (r, z) = reg.boundary_point(j);
            assert!(slack(&p, r, z).abs() < 1e-11);
            let phi = z.atan2(r);
            let rho = r.hypot(z);
            let (lo, hi) = hill_rho_bounds(phi, 1.0, -0.375).unwrap();
            assert!((rho - lo).abs().min((rho - hi).abs()) < 1e-9);
        }
    }

    #[test]
    fn perturbed_boundary_is_close_to_kepler() {
        let eps = 1e-3;
        let p0 = SystemParams::kepler(1.0, -0.375).unwrap();
        let p = SystemParams::new(1.0, -0.375, eps, Arc::new(make_ellipsoid_perturbation())).unwrap();
        let a = hill_region(&p0).unwrap();
        let b = hill_region(&p).unwrap();
        for j in 0..a.len() {
            let (r, z) = b.boundary_point(j);
            assert!(slack(&p, r, z).abs() < 1e-11);
            assert!((a.radii[j] - b.radii[j]).abs() < 10.0 * eps);
        }
    }

    #[test]
    fn region_area_weighted_integral_matches_kepler_volume() {
        for (w, h) in [(1.0, -0.375), (0.5, -0.5), (2.0, -0.02)] {
            let p = SystemParams::kepler(w, h).unwrap();
            let k = kepler_scalars(w, h).unwrap();
            let g = |r: f64, z: f64| 2.0 * (h - p.potential(r, z));
            let v = 2.0 * PI * integrate_region(&p, &g, 0.0, 1e-12, "vol").unwrap().value;
            assert!((v - k.volume).abs() < 1e-9 * k.volume, "{v} vs {}", k.volume);
        }
    }

    #[test]
    fn reflection_shortcut_matches_full_circle() {
        let p = SystemParams::new(1.0, -0.375, 0.0, Arc::new(make_ellipsoid_perturbation())).unwrap();
        let f = make_ellipsoid_perturbation();
        use crate::model::Perturbation;
        let g = |r: f64, z: f64| f.value(r, z, 0.0);
        let half = integrate_upper_twice(&hill_region_with(&p, 512).unwrap(), &g, 64);
        let full = integrate_full_circle(&p, &g, 1024, 64).unwrap();
        assert!((half - full).abs() < 1e-10, "{half} vs {full}");
    }

    #[test]
    fn outside_window_is_not_compact() {
        let p = SystemParams::kepler(1.0, 0.1).unwrap();
        assert!(matches!(hill_region(&p), Err(Error::NotCompact(_))));
    }
}
