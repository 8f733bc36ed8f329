//! The disk-like surface of section `Σ₋ = {z = 0, p_z < 0}`, its first-return
//! map `ψ`, area preservation and the search for periodic points.
//!
//! Points are charted by `(r, p_r)`; the lifted state takes the negative root
//! `p_z = −√(2(h − U(r, 0)) − p_r²)`. The boundary of the disk, where the
//! radicand vanishes, is the planar orbit.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{integrate_with, reference_period, EventKind, FlowConfig};
use crate::model::{PhaseState, SystemParams};
use crate::orbits::{shoot_brake_orbit, ORBIT_TOL};
use crate::quad::turning_points;
use crate::report::fmt_f64;

/// Radicand below which a point counts as on the boundary.
pub const BOUNDARY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPoint {
    pub r: f64,
    pub p_r: f64,
}

impl SectionPoint {
    pub fn new(r: f64, p_r: f64) -> Self {
        SectionPoint { r, p_r }
    }

    /// `2(h − U(r, 0)) − p_r²`; positive inside the disk.
    pub fn radicand(&self, params: &SystemParams) -> f64 {
        2.0 * (params.h - params.potential(self.r, 0.0)) - self.p_r * self.p_r
    }

    pub fn lift(&self, params: &SystemParams) -> Result<PhaseState> {
        let q = self.radicand(params);
        if !(q > BOUNDARY_TOL) {
            return Err(Error::BoundaryTooClose { radicand: q });
        }
        Ok(PhaseState::new(self.p_r, -q.sqrt(), self.r, 0.0))
    }

    pub fn distance(&self, other: &SectionPoint) -> f64 {
        (self.r - other.r).hypot(self.p_r - other.p_r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnResult {
    pub image: SectionPoint,
    pub return_time: f64,
    pub jacobian: Option<[[f64; 2]; 2]>,
}

fn section_hit(point: &SectionPoint, params: &SystemParams, direction: f64) -> Result<ReturnResult> {
    let start = point.lift(params)?;
    let cap = 8.0 * reference_period(params);
    let cfg = FlowConfig {
        record_steps: false,
        ..FlowConfig::new(ORBIT_TOL).detect_only(&[EventKind::ZCrossMinus]).stop_at(EventKind::ZCrossMinus, 1)
    };
    let tr = integrate_with(start, params, direction * cap, &cfg).map_err(|e| match e {
        Error::NoReturn { .. } => Error::NoReturn { t_cap: cap },
        other => other,
    })?;
    let ev = tr.events.last().ok_or(Error::NoReturn { t_cap: cap })?;
    Ok(ReturnResult { image: SectionPoint::new(ev.state.r, ev.state.p_r), return_time: ev.t.abs(), jacobian: None })
}

/// `ψ(x)`: flow to the next descending crossing of `z = 0`.
pub fn first_return(point: &SectionPoint, params: &SystemParams) -> Result<ReturnResult> {
    section_hit(point, params, 1.0)
}

/// `ψ⁻¹(x)` by integrating backwards in time.
pub fn first_return_backward(point: &SectionPoint, params: &SystemParams) -> Result<ReturnResult> {
    section_hit(point, params, -1.0)
}

/// `ψᵏ(x)` and the accumulated return time.
pub fn iterate_return(point: &SectionPoint, params: &SystemParams, k: usize) -> Result<(SectionPoint, f64)> {
    let mut x = *point;
    let mut t = 0.0;
    for _ in 0..k {
        let res = first_return(&x, params)?;
        x = res.image;
        t += res.return_time;
    }
    Ok((x, t))
}

/// Central-difference Jacobian of `ψᵏ` with step `step`.
pub fn return_jacobian(point: &SectionPoint, params: &SystemParams, k: usize, step: f64) -> Result<[[f64; 2]; 2]> {
    let mut jac = [[0.0; 2]; 2];
    for j in 0..2 {
        let shift = |s: f64| {
            if j == 0 {
                SectionPoint::new(point.r + s, point.p_r)
            } else {
                SectionPoint::new(point.r, point.p_r + s)
            }
        };
        let (a, _) = iterate_return(&shift(step), params, k)?;
        let (b, _) = iterate_return(&shift(-step), params, k)?;
        jac[0][j] = (a.r - b.r) / (2.0 * step);
        jac[1][j] = (a.p_r - b.p_r) / (2.0 * step);
    }
    Ok(jac)
}

/// The chart disk: `r ∈ [r₁, r₂]`, `|p_r| ≤ √Q(r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionDisk {
    pub r1: f64,
    pub r2: f64,
}

impl SectionDisk {
    pub fn of(params: &SystemParams) -> Result<Self> {
        let (r1, r2) = turning_points(params)?;
        Ok(SectionDisk { r1, r2 })
    }

    pub fn diameter(&self) -> f64 {
        self.r2 - self.r1
    }

    /// Point with normalised coordinates `(x, y) ∈ (−1, 1)²`:
    /// `r = c + w x`, `p_r = y √Q(r)`.
    pub fn point(&self, params: &SystemParams, x: f64, y: f64) -> SectionPoint {
        let (c, w) = (0.5 * (self.r1 + self.r2), 0.5 * (self.r2 - self.r1));
        let r = c + w * x;
        let q = (2.0 * (params.h - params.potential(r, 0.0))).max(0.0);
        SectionPoint::new(r, y * q.sqrt())
    }
}

/// An `n × n` grid of interior points with normalised coordinates in
/// `[−extent, extent]²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionGrid {
    pub n: usize,
    pub extent: f64,
}

impl Default for SectionGrid {
    fn default() -> Self {
        SectionGrid { n: 10, extent: 0.9 }
    }
}

impl SectionGrid {
    pub fn points(&self, params: &SystemParams, disk: &SectionDisk) -> Vec<SectionPoint> {
        let coord = |i: usize| {
            if self.n == 1 {
                0.0
            } else {
                -self.extent + 2.0 * self.extent * i as f64 / (self.n - 1) as f64
            }
        };
        let mut pts = Vec::with_capacity(self.n * self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                pts.push(disk.point(params, coord(i), coord(j)));
            }
        }
        pts
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AreaReport {
    pub grid: SectionGrid,
    pub points_tested: usize,
    pub points_excluded: usize,
    pub max_det_deviation: f64,
    /// Largest `‖ψ(x) − x‖` over the grid.
    pub max_displacement: f64,
    pub min_return_time: f64,
    pub max_return_time: f64,
}

/// `|det Jψ − 1|` on a grid, with Jacobian steps adapted to the distance from
/// the disk boundary. Points closer than `10⁻³·diameter` are skipped.
pub fn area_preservation_test(params: &SystemParams, grid: &SectionGrid) -> Result<AreaReport> {
    let disk = SectionDisk::of(params)?;
    let diam = disk.diameter();
    let pts = grid.points(params, &disk);
    let results: Vec<Option<(f64, f64, f64)>> = pts
        .par_iter()
        .map(|x| -> Result<Option<(f64, f64, f64)>> {
            let dist = boundary_distance(x, params, &disk);
            if dist < 1e-3 * diam {
                return Ok(None);
            }
            let step = (1e-5 * diam).min(0.1 * dist);
            let jac = return_jacobian(x, params, 1, step)?;
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            let res = first_return(x, params)?;
            Ok(Some(((det - 1.0).abs(), res.image.distance(x), res.return_time)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rep = AreaReport {
        grid: *grid,
        points_tested: 0,
        points_excluded: 0,
        max_det_deviation: 0.0,
        max_displacement: 0.0,
        min_return_time: f64::INFINITY,
        max_return_time: 0.0,
    };
    for r in results {
        match r {
            Some((dev, disp, t)) => {
                rep.points_tested += 1;
                rep.max_det_deviation = rep.max_det_deviation.max(dev);
                rep.max_displacement = rep.max_displacement.max(disp);
                rep.min_return_time = rep.min_return_time.min(t);
                rep.max_return_time = rep.max_return_time.max(t);
            }
            None => rep.points_excluded += 1,
        }
    }
    Ok(rep)
}

/// Chart distance to the disk boundary along `p_r` and `r`, whichever is
/// smaller (a cheap lower-bound proxy).
fn boundary_distance(x: &SectionPoint, params: &SystemParams, disk: &SectionDisk) -> f64 {
    let q = (x.radicand(params) + x.p_r * x.p_r).max(0.0).sqrt();
    let dp = q - x.p_r.abs();
    let dr = (x.r - disk.r1).min(disk.r2 - x.r);
    dp.min(dr).max(0.0)
}

/// A periodic point of `ψ` with minimal period `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPoint {
    pub k: usize,
    pub point: SectionPoint,
    /// Total time of the `k` returns.
    pub return_time: f64,
    /// `‖ψᵏ(x) − x‖`.
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchConfig {
    pub k_max: usize,
    pub random_seeds: usize,
    pub rng_seed: u64,
    /// Points on the same orbit within `dedup_tol·max(1, diameter)` in the
    /// chart are merged.
    pub dedup_tol: f64,
    /// Newton stops once `‖ψᵏ(x) − x‖ ≤ newton_tol·diameter`.
    pub newton_tol: f64,
    pub max_newton_iter: usize,
    /// Include the brake-orbit crossing as a seed.
    pub brake_seed: bool,
    /// Normalised extent of the corner seeds.
    pub corner_extent: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            k_max: 5,
            random_seeds: 64,
            rng_seed: 1,
            dedup_tol: 1e-6,
            newton_tol: 1e-11,
            max_newton_iter: 40,
            brake_seed: true,
            corner_extent: 0.9,
        }
    }
}

/// Seeds in chart coordinates: brake crossing (optional), four grid corners
/// and `random_seeds` uniform points of the normalised square.
pub fn search_seeds(params: &SystemParams, cfg: &SearchConfig) -> Result<Vec<SectionPoint>> {
    let disk = SectionDisk::of(params)?;
    let mut seeds = Vec::new();
    if cfg.brake_seed {
        if let Ok(b) = shoot_brake_orbit(params) {
            let (r, p_r) = b.section_point();
            seeds.push(SectionPoint::new(r, p_r));
        }
    }
    let c = cfg.corner_extent;
    for (x, y) in [(-c, -c), (-c, c), (c, -c), (c, c)] {
        seeds.push(disk.point(params, x, y));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    for _ in 0..cfg.random_seeds {
        let x = rng.random_range(-0.95..0.95);
        let y = rng.random_range(-0.95..0.95);
        seeds.push(disk.point(params, x, y));
    }
    Ok(seeds)
}

fn newton_periodic(seed: &SectionPoint, params: &SystemParams, k: usize, disk: &SectionDisk, cfg: &SearchConfig) -> Option<PeriodicPoint> {
    let diam = disk.diameter();
    let step = 1e-6 * diam;
    let tol = cfg.newton_tol * diam;
    let residual_at = |x: &SectionPoint| -> Option<([f64; 2], f64)> {
        let (y, t) = iterate_return(x, params, k).ok()?;
        Some(([y.r - x.r, y.p_r - x.p_r], t))
    };
    let mut x = *seed;
    let (mut f, mut t) = residual_at(&x)?;
    let mut norm = f[0].hypot(f[1]);
    // once converged, keep polishing while the residual still drops: near
    // degenerate fixed points a small residual alone does not pin the point
    let mut polish = 0;
    for _ in 0..cfg.max_newton_iter {
        if norm <= tol {
            polish += 1;
            if polish > 3 {
                break;
            }
        }
        let jac = return_jacobian(&x, params, k, step).ok()?;
        // Newton on ψᵏ(x) − x: (J − I) δ = −F
        let (a, b, c, d) = (jac[0][0] - 1.0, jac[0][1], jac[1][0], jac[1][1] - 1.0);
        let det = a * d - b * c;
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let dr = (-d * f[0] + b * f[1]) / det;
        let dp = (c * f[0] - a * f[1]) / det;
        // damped step: halve until the residual decreases and the point stays inside
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let cand = SectionPoint::new(x.r + lambda * dr, x.p_r + lambda * dp);
            if cand.radicand(params) > BOUNDARY_TOL {
                if let Some((fc, tc)) = residual_at(&cand) {
                    let nc = fc[0].hypot(fc[1]);
                    if nc < norm {
                        x = cand;
                        f = fc;
                        t = tc;
                        norm = nc;
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (norm <= tol).then_some(PeriodicPoint { k, point: x, return_time: t, residual: norm })
}

/// Smallest `j` dividing `k` with `ψʲ(x) ≈ x`.
fn minimal_period(p: &PeriodicPoint, params: &SystemParams, tol: f64) -> usize {
    for j in 1..p.k {
        if p.k % j == 0 {
            if let Ok((y, _)) = iterate_return(&p.point, params, j) {
                if y.distance(&p.point) <= tol {
                    return j;
                }
            }
        }
    }
    p.k
}

/// Newton search for periodic points of period `1..=k_max` from every seed,
/// deduplicated by orbit: two points are the same orbit when one lies within
/// the merge tolerance of an iterate of the other.
pub fn find_periodic_points(params: &SystemParams, cfg: &SearchConfig) -> Result<Vec<PeriodicPoint>> {
    let seeds = search_seeds(params, cfg)?;
    find_periodic_points_from(params, cfg, &seeds)
}

pub fn find_periodic_points_from(params: &SystemParams, cfg: &SearchConfig, seeds: &[SectionPoint]) -> Result<Vec<PeriodicPoint>> {
    let disk = SectionDisk::of(params)?;
    let jobs: Vec<(usize, SectionPoint)> = (1..=cfg.k_max).flat_map(|k| seeds.iter().map(move |s| (k, *s))).collect();
    let mut found: Vec<PeriodicPoint> = jobs
        .par_iter()
        .filter_map(|(k, s)| newton_periodic(s, params, *k, &disk, cfg))
        .collect();
    // best converged representative of each orbit first
    found.sort_by(|a, b| a.k.cmp(&b.k).then(a.residual.total_cmp(&b.residual)));
    let merge_tol = cfg.dedup_tol * disk.diameter().max(1.0);

    let mut orbits: Vec<(PeriodicPoint, Vec<SectionPoint>)> = Vec::new();
    for mut p in found {
        let j = minimal_period(&p, params, merge_tol);
        if j < p.k {
            let (_, t) = iterate_return(&p.point, params, j)?;
            p.k = j;
            p.return_time = t;
        }
        if orbits.iter().any(|(_, pts)| pts.iter().any(|q| q.distance(&p.point) <= merge_tol)) {
            continue;
        }
        let mut pts = vec![p.point];
        let mut x = p.point;
        for _ in 1..p.k {
            x = first_return(&x, params)?.image;
            pts.push(x);
        }
        orbits.push((p, pts));
    }
    let mut out: Vec<PeriodicPoint> = orbits.into_iter().map(|(p, _)| p).collect();
    out.sort_by(|a, b| a.k.cmp(&b.k).then(a.point.r.total_cmp(&b.point.r)));
    Ok(out)
}

/// Catalogue CSV with header `k,r,p_r,return_time,residual`.
pub fn write_catalog<W: Write>(points: &[PeriodicPoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "k,r,p_r,return_time,residual")?;
    for p in points {
        writeln!(w, "{},{},{},{},{}", p.k, fmt_f64(p.point.r), fmt_f64(p.point.p_r), fmt_f64(p.return_time), fmt_f64(p.residual))?;
    }
    Ok(())
}
