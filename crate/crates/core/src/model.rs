//! Reduced Hamiltonian systems of the axially symmetric perturbed Kepler problem.
//!
//! Fixing the angular momentum `ω` about the symmetry axis leaves a two degree
//! of freedom system on `(p_r, p_z, r, z)` with Hamiltonian
//!
//! ```text
//! H = ½(p_r² + p_z²) + ω²/(2r²) − 1/√(r² + z²) + ε f(r, z, ε)
//! ```
//!
//! The perturbation `f` must be even in `z`. Built-in families are the
//! oblate-spheroid potential ([`Ellipsoid`]) and the n-gon of the pyramidal
//! problem ([`Pyramidal`]); both carry only the ε-independent leading term.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kepler::m_of_n;

/// Absolute tolerance used when a classification lands on a window boundary.
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-12;

/// A z-reflection symmetric perturbation `f(r, z, ε)` with its partials.
///
/// Only `value` is mandatory. Missing partials fall back to central finite
/// differences; such perturbations report `analytic_partials() == false` and
/// the flag is carried into reports.
pub trait Perturbation: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    fn value(&self, r: f64, z: f64, eps: f64) -> f64;

    fn analytic_partials(&self) -> bool {
        false
    }

    fn df_dr(&self, r: f64, z: f64, eps: f64) -> f64 {
        let h = fd_step(r);
        (self.value(r + h, z, eps) - self.value(r - h, z, eps)) / (2.0 * h)
    }

    fn df_dz(&self, r: f64, z: f64, eps: f64) -> f64 {
        let h = fd_step(r);
        (self.value(r, z + h, eps) - self.value(r, z - h, eps)) / (2.0 * h)
    }

    fn d2f_dz2(&self, r: f64, z: f64, eps: f64) -> f64 {
        let h = fd_step2(r);
        (self.value(r, z + h, eps) - 2.0 * self.value(r, z, eps) + self.value(r, z - h, eps)) / (h * h)
    }

    fn d2f_dr2(&self, r: f64, z: f64, eps: f64) -> f64 {
        let h = fd_step2(r);
        (self.value(r + h, z, eps) - 2.0 * self.value(r, z, eps) + self.value(r - h, z, eps)) / (h * h)
    }

    fn d2f_drdz(&self, r: f64, z: f64, eps: f64) -> f64 {
        let h = fd_step2(r);
        (self.value(r + h, z + h, eps) - self.value(r + h, z - h, eps) - self.value(r - h, z + h, eps)
            + self.value(r - h, z - h, eps))
            / (4.0 * h * h)
    }
}

/// First-derivative step for the finite-difference fallback.
pub fn fd_step(r: f64) -> f64 {
    f64::max(1e-6, 1e-8 * r.abs())
}

// Second differences lose two digits per halving of the step; a larger step
// balances truncation against cancellation.
fn fd_step2(r: f64) -> f64 {
    f64::max(1e-4, 1e-4 * r.abs())
}

/// `∂²f/∂φ²` at the plane `z = 0`, where `(r, z) = (ρ cos φ, ρ sin φ)`.
///
/// Chain rule with `∂f/∂z(r, 0) = 0`: `r² f_zz(r, 0) − r f_r(r, 0)`.
pub fn angular_second_derivative(f: &dyn Perturbation, r: f64, eps: f64) -> f64 {
    r * r * f.d2f_dz2(r, 0.0, eps) - r * f.df_dr(r, 0.0, eps)
}

/// The unperturbed problem, `f ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kepler;

impl Perturbation for Kepler {
    fn name(&self) -> String {
        "kepler".into()
    }
    fn value(&self, _r: f64, _z: f64, _eps: f64) -> f64 {
        0.0
    }
    fn analytic_partials(&self) -> bool {
        true
    }
    fn df_dr(&self, _r: f64, _z: f64, _eps: f64) -> f64 {
        0.0
    }
    fn df_dz(&self, _r: f64, _z: f64, _eps: f64) -> f64 {
        0.0
    }
    fn d2f_dz2(&self, _r: f64, _z: f64, _eps: f64) -> f64 {
        0.0
    }
    fn d2f_dr2(&self, _r: f64, _z: f64, _eps: f64) -> f64 {
        0.0
    }
    fn d2f_drdz(&self, _r: f64, _z: f64, _eps: f64) -> f64 {
        0.0
    }
}

/// Oblate spheroid: `f = (2z² − r²)/(r² + z²)^{5/2}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ellipsoid;

pub fn make_ellipsoid_perturbation() -> Ellipsoid {
    Ellipsoid
}

impl Perturbation for Ellipsoid {
    fn name(&self) -> String {
        "ellipsoid".into()
    }

    fn value(&self, r: f64, z: f64, _eps: f64) -> f64 {
        let s = r * r + z * z;
        (2.0 * z * z - r * r) / (s * s * s.sqrt())
    }

    fn analytic_partials(&self) -> bool {
        true
    }

    fn df_dr(&self, r: f64, z: f64, _eps: f64) -> f64 {
        let s = r * r + z * z;
        let p = 2.0 * z * z - r * r;
        let s52 = s * s * s.sqrt();
        -2.0 * r / s52 - 5.0 * r * p / (s52 * s)
    }

    fn df_dz(&self, r: f64, z: f64, _eps: f64) -> f64 {
        let s = r * r + z * z;
        let p = 2.0 * z * z - r * r;
        let s52 = s * s * s.sqrt();
        4.0 * z / s52 - 5.0 * z * p / (s52 * s)
    }

    fn d2f_dz2(&self, r: f64, z: f64, _eps: f64) -> f64 {
        let s = r * r + z * z;
        let p = 2.0 * z * z - r * r;
        let s52 = s * s * s.sqrt();
        let s72 = s52 * s;
        4.0 / s52 - (40.0 * z * z + 5.0 * p) / s72 + 35.0 * z * z * p / (s72 * s)
    }

    fn d2f_dr2(&self, r: f64, z: f64, _eps: f64) -> f64 {
        let s = r * r + z * z;
        let p = 2.0 * z * z - r * r;
        let s52 = s * s * s.sqrt();
        let s72 = s52 * s;
        -2.0 / s52 + (20.0 * r * r - 5.0 * p) / s72 + 35.0 * r * r * p / (s72 * s)
    }

    fn d2f_drdz(&self, r: f64, z: f64, _eps: f64) -> f64 {
        let s = r * r + z * z;
        let p = 2.0 * z * z - r * r;
        let s72 = s * s * s * s.sqrt();
        -10.0 * r * z / s72 + 35.0 * r * z * p / (s72 * s)
    }
}

/// Leading term of the n-pyramidal problem.
///
/// In spherical variables `f = −M(n)/(2ρ cos φ) + n sin²φ/(2ρ)`. With
/// `ρ cos φ = r` and `sin²φ/ρ = z²/ρ³` this is, in cylindrical variables,
/// `f(r, z) = −M(n)/(2r) + n z²/(2(r² + z²)^{3/2})`.
#[derive(Debug, Clone, Copy)]
pub struct Pyramidal {
    n: u32,
    m_n: f64,
}

pub fn make_pyramidal_perturbation(n: u32) -> Result<Pyramidal> {
    Pyramidal::new(n)
}

impl Pyramidal {
    pub fn new(n: u32) -> Result<Self> {
        let m_n = m_of_n(n)?;
        Ok(Pyramidal { n, m_n })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// The n-gon interaction constant `M(n)`.
    pub fn m_n(&self) -> f64 {
        self.m_n
    }

    /// The same function written in spherical variables.
    pub fn value_spherical(&self, rho: f64, phi: f64) -> f64 {
        let s = phi.sin();
        -self.m_n / (2.0 * rho * phi.cos()) + self.n as f64 * s * s / (2.0 * rho)
    }
}

impl Perturbation for Pyramidal {
    fn name(&self) -> String {
        format!("pyramid:{}", self.n)
    }

    fn value(&self, r: f64, z: f64, _eps: f64) -> f64 {
        let s = r * r + z * z;
        -self.m_n / (2.0 * r) + 0.5 * self.n as f64 * z * z / (s * s.sqrt())
    }

    fn analytic_partials(&self) -> bool {
        true
    }

    fn df_dr(&self, r: f64, z: f64, _eps: f64) -> f64 {
        let n = self.n as f64;
        let s = r * r + z * z;
        let s52 = s * s * s.sqrt();
        self.m_n / (2.0 * r * r) - 1.5 * n * r * z * z / s52
    }

    fn df_dz(&self, r: f64, z: f64, _eps: f64) -> f64 {
        let n = self.n as f64;
        let s = r * r + z * z;
        let s32 = s * s.sqrt();
        n * z / s32 - 1.5 * n * z * z * z / (s32 * s)
    }

    fn d2f_dz2(&self, r: f64, z: f64, _eps: f64) -> f64 {
        let n = self.n as f64;
        let s = r * r + z * z;
        let s32 = s * s.sqrt();
        let z2 = z * z;
        n / s32 - 7.5 * n * z2 / (s32 * s) + 7.5 * n * z2 * z2 / (s32 * s * s)
    }

    fn d2f_dr2(&self, r: f64, z: f64, _eps: f64) -> f64 {
        let n = self.n as f64;
        let s = r * r + z * z;
        let s52 = s * s * s.sqrt();
        -self.m_n / (r * r * r) - 1.5 * n * z * z * (1.0 / s52 - 5.0 * r * r / (s52 * s))
    }

    fn d2f_drdz(&self, r: f64, z: f64, _eps: f64) -> f64 {
        let n = self.n as f64;
        let s = r * r + z * z;
        let s52 = s * s * s.sqrt();
        -3.0 * n * r * z / s52 + 7.5 * n * r * z * z * z / (s52 * s)
    }
}

/// Spherically symmetric term `ρ^{−k}`.
#[derive(Debug, Clone, Copy)]
pub struct RadialPower {
    pub k: f64,
}

impl Perturbation for RadialPower {
    fn name(&self) -> String {
        format!("radial:{}", self.k)
    }

    fn value(&self, r: f64, z: f64, _eps: f64) -> f64 {
        (r * r + z * z).powf(-0.5 * self.k)
    }

    fn analytic_partials(&self) -> bool {
        true
    }

    fn df_dr(&self, r: f64, z: f64, _eps: f64) -> f64 {
        let s = r * r + z * z;
        -self.k * r * s.powf(-0.5 * self.k - 1.0)
    }

    fn df_dz(&self, r: f64, z: f64, _eps: f64) -> f64 {
        let s = r * r + z * z;
        -self.k * z * s.powf(-0.5 * self.k - 1.0)
    }

    fn d2f_dz2(&self, r: f64, z: f64, _eps: f64) -> f64 {
        let s = r * r + z * z;
        let k = self.k;
        -k * s.powf(-0.5 * k - 1.0) + k * (k + 2.0) * z * z * s.powf(-0.5 * k - 2.0)
    }

    fn d2f_dr2(&self, r: f64, z: f64, _eps: f64) -> f64 {
        let s = r * r + z * z;
        let k = self.k;
        -k * s.powf(-0.5 * k - 1.0) + k * (k + 2.0) * r * r * s.powf(-0.5 * k - 2.0)
    }

    fn d2f_drdz(&self, r: f64, z: f64, _eps: f64) -> f64 {
        let s = r * r + z * z;
        let k = self.k;
        k * (k + 2.0) * r * z * s.powf(-0.5 * k - 2.0)
    }
}

/// Weighted sum `Σ wᵢ fᵢ`. Also used to flip the sign of a perturbation.
#[derive(Debug, Clone)]
pub struct Combination {
    terms: Vec<(f64, Arc<dyn Perturbation>)>,
}

impl Combination {
    pub fn new(terms: Vec<(f64, Arc<dyn Perturbation>)>) -> Self {
        Combination { terms }
    }

    pub fn scaled(inner: Arc<dyn Perturbation>, factor: f64) -> Self {
        Combination { terms: vec![(factor, inner)] }
    }

    pub fn terms(&self) -> &[(f64, Arc<dyn Perturbation>)] {
        &self.terms
    }

    fn sum(&self, g: impl Fn(&dyn Perturbation) -> f64) -> f64 {
        self.terms.iter().map(|(w, p)| w * g(p.as_ref())).sum()
    }
}

impl Perturbation for Combination {
    fn name(&self) -> String {
        let parts: Vec<String> = self.terms.iter().map(|(w, p)| format!("{w}*{}", p.name())).collect();
        parts.join("+")
    }
    fn value(&self, r: f64, z: f64, eps: f64) -> f64 {
        self.sum(|p| p.value(r, z, eps))
    }
    fn analytic_partials(&self) -> bool {
        self.terms.iter().all(|(_, p)| p.analytic_partials())
    }
    fn df_dr(&self, r: f64, z: f64, eps: f64) -> f64 {
        self.sum(|p| p.df_dr(r, z, eps))
    }
    fn df_dz(&self, r: f64, z: f64, eps: f64) -> f64 {
        self.sum(|p| p.df_dz(r, z, eps))
    }
    fn d2f_dz2(&self, r: f64, z: f64, eps: f64) -> f64 {
        self.sum(|p| p.d2f_dz2(r, z, eps))
    }
    fn d2f_dr2(&self, r: f64, z: f64, eps: f64) -> f64 {
        self.sum(|p| p.d2f_dr2(r, z, eps))
    }
    fn d2f_drdz(&self, r: f64, z: f64, eps: f64) -> f64 {
        self.sum(|p| p.d2f_drdz(r, z, eps))
    }
}

/// One reduced Hamiltonian system: angular momentum, energy, perturbation scale
/// and family.
#[derive(Debug, Clone)]
pub struct SystemParams {
    pub omega: f64,
    pub h: f64,
    pub eps: f64,
    pub perturbation: Arc<dyn Perturbation>,
}

impl SystemParams {
    pub fn new(omega: f64, h: f64, eps: f64, perturbation: Arc<dyn Perturbation>) -> Result<Self> {
        if omega == 0.0 || !omega.is_finite() {
            return Err(Error::domain("omega must be a nonzero finite number"));
        }
        if !h.is_finite() {
            return Err(Error::domain("energy must be finite"));
        }
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::domain(format!("eps = {eps} outside [0, 1)")));
        }
        Ok(SystemParams { omega, h, eps, perturbation })
    }

    pub fn kepler(omega: f64, h: f64) -> Result<Self> {
        Self::new(omega, h, 0.0, Arc::new(Kepler))
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.omega, self.h, eps, self.perturbation.clone())
    }

    /// Same system at a signed perturbation scale. A negative scale is realised
    /// as `|ε|` with the perturbation negated, since `ε f = (−ε)(−f)` for the
    /// ε-independent leading terms carried here.
    pub fn with_signed_eps(&self, eps: f64) -> Result<Self> {
        if eps >= 0.0 {
            self.with_eps(eps)
        } else {
            let flipped: Arc<dyn Perturbation> = Arc::new(Combination::scaled(self.perturbation.clone(), -1.0));
            Self::new(self.omega, self.h, -eps, flipped)
        }
    }

    /// The system with `f` replaced by `−f`.
    pub fn negated(&self) -> Self {
        SystemParams {
            perturbation: Arc::new(Combination::scaled(self.perturbation.clone(), -1.0)),
            ..self.clone()
        }
    }

    /// `2hω²`, the quantity every classification window is stated in.
    pub fn two_h_omega_sq(&self) -> f64 {
        2.0 * self.h * self.omega * self.omega
    }

    /// Effective potential `ω²/(2r²) − 1/ρ + ε f`.
    pub fn potential(&self, r: f64, z: f64) -> f64 {
        let rho = (r * r + z * z).sqrt();
        self.omega * self.omega / (2.0 * r * r) - 1.0 / rho + self.eps * self.perturbation.value(r, z, self.eps)
    }

    /// `(∂U/∂r, ∂U/∂z)`.
    pub fn potential_gradient(&self, r: f64, z: f64) -> (f64, f64) {
        let s = r * r + z * z;
        let rho3 = s * s.sqrt();
        let w2 = self.omega * self.omega;
        let f = &self.perturbation;
        (
            -w2 / (r * r * r) + r / rho3 + self.eps * f.df_dr(r, z, self.eps),
            z / rho3 + self.eps * f.df_dz(r, z, self.eps),
        )
    }

    /// `(U_rr, U_rz, U_zz)`.
    pub fn potential_hessian(&self, r: f64, z: f64) -> (f64, f64, f64) {
        let s = r * r + z * z;
        let rho3 = s * s.sqrt();
        let rho5 = rho3 * s;
        let w2 = self.omega * self.omega;
        let f = &self.perturbation;
        let e = self.eps;
        (
            3.0 * w2 / (r * r * r * r) + 1.0 / rho3 - 3.0 * r * r / rho5 + e * f.d2f_dr2(r, z, e),
            -3.0 * r * z / rho5 + e * f.d2f_drdz(r, z, e),
            1.0 / rho3 - 3.0 * z * z / rho5 + e * f.d2f_dz2(r, z, e),
        )
    }
}

/// A point `(p_r, p_z, r, z)` of the reduced phase space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub p_r: f64,
    pub p_z: f64,
    pub r: f64,
    pub z: f64,
}

impl PhaseState {
    pub fn new(p_r: f64, p_z: f64, r: f64, z: f64) -> Self {
        PhaseState { p_r, p_z, r, z }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.p_r, self.p_z, self.r, self.z]
    }

    pub fn from_array(a: &[f64]) -> Self {
        PhaseState { p_r: a[0], p_z: a[1], r: a[2], z: a[3] }
    }

    pub fn distance(&self, other: &PhaseState) -> f64 {
        let d = [self.p_r - other.p_r, self.p_z - other.p_z, self.r - other.r, self.z - other.z];
        d.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// `H_{ω,ε}(p_r, p_z, r, z)`.
pub fn hamiltonian(state: &PhaseState, params: &SystemParams) -> Result<f64> {
    if state.r <= 0.0 || !state.r.is_finite() {
        return Err(Error::domain(format!("r = {} must be positive", state.r)));
    }
    Ok(0.5 * (state.p_r * state.p_r + state.p_z * state.p_z) + params.potential(state.r, state.z))
}

/// Topology of an energy surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnergySurfaceClass {
    Empty,
    Point,
    CompactS3,
    Unbounded,
}

impl EnergySurfaceClass {
    pub fn is_compact(self) -> bool {
        matches!(self, EnergySurfaceClass::CompactS3)
    }
}

impl fmt::Display for EnergySurfaceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EnergySurfaceClass::Empty => "Empty",
            EnergySurfaceClass::Point => "Point",
            EnergySurfaceClass::CompactS3 => "CompactS3",
            EnergySurfaceClass::Unbounded => "Unbounded",
        };
        f.write_str(s)
    }
}

fn classify_window(x: f64, lower: f64, upper: f64, tol: f64) -> EnergySurfaceClass {
    if (x - lower).abs() <= tol {
        EnergySurfaceClass::Point
    } else if x < lower {
        EnergySurfaceClass::Empty
    } else if x < upper - tol {
        EnergySurfaceClass::CompactS3
    } else {
        EnergySurfaceClass::Unbounded
    }
}

/// Energy surface of the unperturbed reduced Kepler problem.
pub fn classify_kepler_surface(omega: f64, h: f64) -> EnergySurfaceClass {
    classify_kepler_surface_tol(omega, h, DEFAULT_BOUNDARY_TOL)
}

pub fn classify_kepler_surface_tol(omega: f64, h: f64, tol: f64) -> EnergySurfaceClass {
    classify_window(2.0 * h * omega * omega, -1.0, 0.0, tol)
}

/// Energy surface of the pyramidal problem, compact for
/// `−(1 + M(n)ε/2)² < 2hω² < −(M(n)ε)²/4`.
pub fn classify_pyramidal_surface(omega: f64, h: f64, eps: f64, n: u32) -> Result<EnergySurfaceClass> {
    classify_pyramidal_surface_tol(omega, h, eps, n, DEFAULT_BOUNDARY_TOL)
}

pub fn classify_pyramidal_surface_tol(omega: f64, h: f64, eps: f64, n: u32, tol: f64) -> Result<EnergySurfaceClass> {
    if eps < 0.0 {
        return Err(Error::domain("eps must be non-negative"));
    }
    let m = m_of_n(n)? * eps;
    let lower = -(1.0 + 0.5 * m).powi(2);
    let upper = -0.25 * m * m;
    Ok(classify_window(2.0 * h * omega * omega, lower, upper, tol))
}

/// A named system family as selected on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum SystemSpec {
    Kepler,
    Ellipsoid,
    Pyramid(u32),
    /// Perturbation read from a text file, see [`parse_custom_perturbation`].
    Custom(std::path::PathBuf),
}

impl fmt::Display for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemSpec::Kepler => f.write_str("kepler"),
            SystemSpec::Ellipsoid => f.write_str("ellipsoid"),
            SystemSpec::Pyramid(n) => write!(f, "pyramid:{n}"),
            SystemSpec::Custom(p) => write!(f, "custom:{}", p.display()),
        }
    }
}

impl std::str::FromStr for SystemSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kepler" => return Ok(SystemSpec::Kepler),
            "ellipsoid" => return Ok(SystemSpec::Ellipsoid),
            _ => {}
        }
        if let Some(n) = s.strip_prefix("pyramid:") {
            let n: u32 = n.parse().map_err(|_| Error::Usage(format!("--system {s}: n must be an integer ≥ 2")))?;
            if n < 2 {
                return Err(Error::Usage(format!("--system {s}: n must be an integer ≥ 2")));
            }
            return Ok(SystemSpec::Pyramid(n));
        }
        if let Some(path) = s.strip_prefix("custom:") {
            return Ok(SystemSpec::Custom(path.into()));
        }
        Err(Error::Usage(format!("--system {s}: expected kepler, ellipsoid, pyramid:N or custom:PATH")))
    }
}

impl From<SystemSpec> for String {
    fn from(s: SystemSpec) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for SystemSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl SystemSpec {
    pub fn perturbation(&self) -> Result<Arc<dyn Perturbation>> {
        Ok(match self {
            SystemSpec::Kepler => Arc::new(Kepler),
            SystemSpec::Ellipsoid => Arc::new(Ellipsoid),
            SystemSpec::Pyramid(n) => Arc::new(Pyramidal::new(*n)?),
            SystemSpec::Custom(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.clone(), source })?;
                Arc::new(parse_custom_perturbation(&text)?)
            }
        })
    }

    pub fn params(&self, omega: f64, h: f64, eps: f64) -> Result<SystemParams> {
        SystemParams::new(omega, h, eps, self.perturbation()?)
    }

    /// Energy-surface class; the pyramidal window depends on `ε`, the others
    /// use the unperturbed Kepler window.
    pub fn classify(&self, omega: f64, h: f64, eps: f64) -> Result<EnergySurfaceClass> {
        match self {
            SystemSpec::Pyramid(n) => classify_pyramidal_surface(omega, h, eps, *n),
            _ => Ok(classify_kepler_surface(omega, h)),
        }
    }
}

/// Parses a weighted sum of built-in terms, one per line:
///
/// ```text
/// # comment
/// ellipsoid 1.0
/// pyramid 3 0.5
/// radial 3 -0.25
/// ```
///
/// `radial k w` is `w ρ^{−k}`.
pub fn parse_custom_perturbation(text: &str) -> Result<Combination> {
    let mut terms: Vec<(f64, Arc<dyn Perturbation>)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Usage(format!("custom perturbation line {}: cannot parse {line:?}", lineno + 1));
        let num = |s: &str| s.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(bad);
        let words: Vec<&str> = line.split_whitespace().collect();
        let term: (f64, Arc<dyn Perturbation>) = match words.as_slice() {
            ["ellipsoid", w] => (num(w)?, Arc::new(Ellipsoid)),
            ["kepler", w] => (num(w)?, Arc::new(Kepler)),
            ["pyramid", n, w] => {
                let n: u32 = n.parse().map_err(|_| bad())?;
                (num(w)?, Arc::new(Pyramidal::new(n)?))
            }
            ["radial", k, w] => (num(w)?, Arc::new(RadialPower { k: num(k)? })),
            _ => return Err(bad()),
        };
        terms.push(term);
    }
    if terms.is_empty() {
        return Err(Error::Usage("custom perturbation file has no terms".into()));
    }
    Ok(Combination::new(terms))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn hamiltonian_examples() {
        let p = SystemParams::kepler(1.0, -0.5).unwrap();
        let h = hamiltonian(&PhaseState::new(0.0, 0.0, 1.0, 0.0), &p).unwrap();
        assert!((h + 0.5).abs() < 1e-15);
        let h = hamiltonian(&PhaseState::new(0.5, 0.0, 1.0, 1.0), &p).unwrap();
        assert!((h - (0.125 + 0.5 - 1.0 / 2f64.sqrt())).abs() < 1e-15);
        assert!((h + 0.082107).abs() < 1e-6);
        for w in [0.5, 1.0, 2.0] {
            let p = SystemParams::kepler(w, -0.1).unwrap();
            let h = hamiltonian(&PhaseState::new(0.0, 0.0, w * w, 0.0), &p).unwrap();
            assert!(rel(h, -1.0 / (2.0 * w * w)) < 1e-14);
        }
        assert!(hamiltonian(&PhaseState::new(0.0, 0.0, 0.0, 1.0), &p).is_err());
        assert!(hamiltonian(&PhaseState::new(0.0, 0.0, -1.0, 1.0), &p).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(SystemParams::kepler(0.0, -0.1).is_err());
        assert!(SystemParams::new(1.0, -0.1, 1.0, Arc::new(Kepler)).is_err());
        assert!(SystemParams::new(1.0, -0.1, -0.1, Arc::new(Kepler)).is_err());
        let p = SystemParams::new(1.0, -0.375, 0.0, Arc::new(Ellipsoid)).unwrap();
        let m = p.with_signed_eps(-1e-3).unwrap();
        assert_eq!(m.eps, 1e-3);
        assert!((m.potential(1.2, 0.3) - p.with_eps(0.0).unwrap().potential(1.2, 0.3) + 1e-3 * Ellipsoid.value(1.2, 0.3, 0.0)).abs() < 1e-15);
    }

    #[test]
    fn ellipsoid_examples() {
        let f = make_ellipsoid_perturbation();
        assert_eq!(f.value(1.0, 0.0, 0.0), -1.0);
        assert!((f.value(1e-4, 1.0, 0.0) - 2.0).abs() < 1e-7);
        // Symbolic oracle: d²/dz² (2z² − r²)(r² + z²)^{−5/2} at (1, 0) is 4 + 5 = 9.
        assert!((f.d2f_dz2(1.0, 0.0, 0.0) - 9.0).abs() < 1e-14);
        // The angular derivative r² f_zz − r f_r is 9 − 3 = 6 at r = 1.
        assert!((angular_second_derivative(&f, 1.0, 0.0) - 6.0).abs() < 1e-14);
    }

    #[test]
    fn pyramidal_examples() {
        let f = make_pyramidal_perturbation(2).unwrap();
        assert!((f.value(1.0, 0.0, 0.0) + 0.25).abs() < 1e-15);
        let f3 = make_pyramidal_perturbation(3).unwrap();
        assert!((f3.value(2.0, 0.0, 0.0) + 2.0 / 3f64.sqrt() / 4.0).abs() < 1e-15);
        assert!((f3.value(2.0, 0.0, 0.0) + 0.288675).abs() < 1e-6);
        for i in 0..20 {
            let z = 0.1 * i as f64;
            assert_eq!(f.value(1.0, z, 0.0), f.value(1.0, -z, 0.0));
        }
        assert!(make_pyramidal_perturbation(1).is_err());
    }

    #[test]
    fn pyramidal_cylindrical_matches_spherical() {
        for n in [2, 3, 7, 50] {
            let f = make_pyramidal_perturbation(n).unwrap();
            for i in 0..20 {
                for j in 0..20 {
                    let r = 0.3 + 0.2 * i as f64;
                    let z = -2.0 + 0.2 * j as f64;
                    let rho = (r * r + z * z).sqrt();
                    let phi = z.atan2(r);
                    let a = f.value(r, z, 0.0);
                    let b = f.value_spherical(rho, phi);
                    assert!((a - b).abs() <= 1e-13 * (1.0 + a.abs()), "n={n} r={r} z={z}: {a} vs {b}");
                }
            }
        }
    }

    fn builtins() -> Vec<Arc<dyn Perturbation>> {
        vec![
            Arc::new(Ellipsoid),
            Arc::new(Pyramidal::new(2).unwrap()),
            Arc::new(Pyramidal::new(5).unwrap()),
            Arc::new(RadialPower { k: 3.0 }),
        ]
    }

    #[test]
    fn reflection_symmetry_on_grid() {
        for f in builtins() {
            for i in 0..20 {
                for j in 0..20 {
                    let r = 0.4 + 0.15 * i as f64;
                    let z = 0.1 * j as f64;
                    assert_eq!(f.value(r, z, 0.0), f.value(r, -z, 0.0), "{}", f.name());
                }
                let r = 0.4 + 0.15 * i as f64;
                assert_eq!(f.df_dz(r, 0.0, 0.0), 0.0);
            }
        }
    }

    #[derive(Debug)]
    struct ValueOnly<P: Perturbation>(P);

    impl<P: Perturbation> Perturbation for ValueOnly<P> {
        fn name(&self) -> String {
            format!("fd({})", self.0.name())
        }
        fn value(&self, r: f64, z: f64, eps: f64) -> f64 {
            self.0.value(r, z, eps)
        }
    }

    #[test]
    fn analytic_partials_match_finite_differences() {
        for f in builtins() {
            let fd = ValueOnly(Combination::scaled(f.clone(), 1.0));
            assert!(!fd.analytic_partials());
            assert!(f.analytic_partials());
            for i in 0..8 {
                for j in 0..8 {
                    let r = 0.5 + 0.3 * i as f64;
                    let z = -1.0 + 0.3 * j as f64;
                    let scale = f.value(r, z, 0.0).abs() + f.df_dr(r, z, 0.0).abs() + 1e-3;
                    let check = |a: f64, b: f64, tol: f64| {
                        assert!((a - b).abs() <= tol * (a.abs() + scale), "{} at ({r},{z}): {a} vs {b}", f.name());
                    };
                    check(f.df_dr(r, z, 0.0), fd.df_dr(r, z, 0.0), 1e-6);
                    check(f.df_dz(r, z, 0.0), fd.df_dz(r, z, 0.0), 1e-6);
                    check(f.d2f_dz2(r, z, 0.0), fd.d2f_dz2(r, z, 0.0), 1e-5);
                    check(f.d2f_dr2(r, z, 0.0), fd.d2f_dr2(r, z, 0.0), 1e-5);
                    check(f.d2f_drdz(r, z, 0.0), fd.d2f_drdz(r, z, 0.0), 1e-5);
                }
            }
        }
    }

    #[test]
    fn kepler_classification() {
        use EnergySurfaceClass::*;
        assert_eq!(classify_kepler_surface(1.0, -0.6), Empty);
        assert_eq!(classify_kepler_surface(1.0, -0.5), Point);
        assert_eq!(classify_kepler_surface(1.0, -0.375), CompactS3);
        assert_eq!(classify_kepler_surface(1.0, 0.1), Unbounded);
        assert_eq!(classify_kepler_surface(1.0, 0.0), Unbounded);
        assert_eq!(classify_kepler_surface(-2.0, -0.375 / 4.0), CompactS3);
    }

    #[test]
    fn kepler_classification_is_monotone_in_h() {
        let rank = |c: EnergySurfaceClass| c as u8;
        for w in [0.3, 1.0, 2.5] {
            let mut last = 0;
            for i in 0..400 {
                let h = -1.0 / (w * w) + i as f64 * 0.005 / (w * w);
                let c = rank(classify_kepler_surface(w, h));
                assert!(c >= last);
                last = c;
            }
        }
    }

    #[test]
    fn pyramidal_classification() {
        use EnergySurfaceClass::*;
        assert_eq!(classify_pyramidal_surface(1.0, -0.375, 0.0, 2).unwrap(), CompactS3);
        let m = 0.5 * 0.1;
        // 2h = −(Mε)²/4 is the upper edge itself; twice as deep is inside
        assert_eq!(classify_pyramidal_surface(1.0, -(m * m) / 8.0, 0.1, 2).unwrap(), Unbounded);
        assert_eq!(classify_pyramidal_surface(1.0, -(m * m) / 4.0, 0.1, 2).unwrap(), CompactS3);
        assert_eq!(classify_pyramidal_surface(1.0, 0.0, 0.1, 2).unwrap(), Unbounded);
        assert_eq!(classify_pyramidal_surface(1.0, -(m * m) / 8.0 + 1e-3, 0.1, 2).unwrap(), Unbounded);
        let lower = -(1.0 + 0.5 * m).powi(2) / 2.0;
        assert_eq!(classify_pyramidal_surface(1.0, lower, 0.1, 2).unwrap(), Point);
        assert_eq!(classify_pyramidal_surface(1.0, lower - 0.01, 0.1, 2).unwrap(), Empty);
    }

    #[test]
    fn system_spec_round_trip() {
        for s in ["kepler", "ellipsoid", "pyramid:3", "custom:some/file.txt"] {
            let spec: SystemSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("pyramid:1".parse::<SystemSpec>().is_err());
        assert!("sphere".parse::<SystemSpec>().is_err());
    }

    #[test]
    fn custom_file_matches_built_ins() {
        let c = parse_custom_perturbation("# mix\nellipsoid 2\n\npyramid 3 -1  # trailing\nradial 3 0.5\n").unwrap();
        let p = Pyramidal::new(3).unwrap();
        for (r, z) in [(1.0, 0.0), (2.0, 0.3), (0.7, -0.4)] {
            let rho = (r * r + z * z) as f64;
            let want = 2.0 * Ellipsoid.value(r, z, 0.0) - p.value(r, z, 0.0) + 0.5 * rho.powf(-1.5);
            assert!((c.value(r, z, 0.0) - want).abs() < 1e-14);
            assert!((c.d2f_dz2(r, z, 0.0) - (2.0 * Ellipsoid.d2f_dz2(r, z, 0.0) - p.d2f_dz2(r, z, 0.0) + 0.5 * RadialPower { k: 3.0 }.d2f_dz2(r, z, 0.0))).abs() < 1e-12);
        }
        assert!(c.analytic_partials());
        assert!(parse_custom_perturbation("ellipsoid").is_err());
        assert!(parse_custom_perturbation("").is_err());
    }
}
