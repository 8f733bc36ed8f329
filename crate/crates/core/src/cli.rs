//! Command-line front end.
//!
//! Every subcommand prints a short summary on stdout. With `--out DIR` the
//! full report is written as `DIR/<command>.json` and, for tabular results,
//! `DIR/<command>_<table>.csv`; `--out -` prints the report on stdout instead
//! of the summary. Settings resolve as flags, then the `--config` file, then
//! defaults. Exit codes: `0` success, `1` computation error or failed check,
//! `2` usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::criteria::{self, CrossCheck, CrossCheckConfig, CriteriaReport, Verdict};
use crate::error::{Error, Result};
use crate::kepler::{self, KeplerScalars};
use crate::model::{EnergySurfaceClass, Perturbation, SystemParams, SystemSpec};
use crate::orbits::{self, OrbitSidecar, RotationResult};
use crate::quad::{self, Functionals, QuadConfig};
use crate::report::{emit_rendered, fmt_f64, to_json, CsvTable, OutputFormat, Report};
use crate::retmap::{self, AreaReport, PeriodicPoint, SearchConfig, SectionGrid};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "KEPLER_KIT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "kepler-kit", version, about = "Perturbed spatial Kepler problem toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Energy-surface class of (omega, energy)
    Classify,
    /// Closed-form Kepler scalars
    Scalars,
    /// Action, periods, contact volume and first-order functionals
    Functionals,
    /// Criteria verdict, stability and closed-form cross-check
    Criteria,
    /// Planar periodic orbit and its rotation number
    Orbit,
    /// z-symmetric brake orbit by shooting, with the link check
    Brake,
    /// Area preservation of the return map and periodic-point search
    ReturnMap,
    /// Quadrature oracles and module invariants
    Selftest,
    /// Criteria over a grid of omega, eccentricity and n
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Scalars => "scalars",
            Command::Functionals => "functionals",
            Command::Criteria => "criteria",
            Command::Orbit => "orbit",
            Command::Brake => "brake",
            Command::ReturnMap => "return-map",
            Command::Selftest => "selftest",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Default, Args)]
struct Flags {
    /// Flat `key = value` file with defaults for any flag below
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// kepler, ellipsoid, pyramid:N or custom:PATH
    #[arg(long, global = true)]
    system: Option<String>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    omega: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    energy: Option<f64>,
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Number of ring masses of the pyramidal system
    #[arg(long, global = true)]
    n: Option<u32>,
    /// Integrator step tolerance
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Absolute tolerance of 1D quadratures (2D uses 100×)
    #[arg(long = "quad-tol", global = true)]
    quad_tol: Option<f64>,
    /// Periods used by the rotation number
    #[arg(long, global = true)]
    periods: Option<usize>,
    /// Section grid size (return-map) or eccentricity grid size (sweep)
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Random seeds of the periodic-point search
    #[arg(long, global = true)]
    seeds: Option<usize>,
    /// Generator seed of the periodic-point search
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Largest period of the periodic-point search
    #[arg(long = "k-max", global = true)]
    k_max: Option<usize>,
    /// Comma-separated omega values of a sweep
    #[arg(long, global = true)]
    omegas: Option<String>,
    /// Comma-separated n values of a pyramidal sweep
    #[arg(long, global = true)]
    ns: Option<String>,
    /// Eccentricity range of a sweep
    #[arg(long = "e-min", global = true)]
    e_min: Option<f64>,
    #[arg(long = "e-max", global = true)]
    e_max: Option<f64>,
    /// Output directory, or `-` for stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// json, csv or both
    #[arg(long, global = true)]
    format: Option<String>,
}

/// Fully resolved settings of one run. Embedded in every report, and enough
/// to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub system: SystemSpec,
    pub omega: f64,
    pub energy: f64,
    pub eps: f64,
    pub tol: f64,
    pub quad_tol: f64,
    pub periods: usize,
    pub grid: usize,
    pub seeds: usize,
    pub seed: u64,
    pub k_max: usize,
    pub omegas: Vec<f64>,
    pub ns: Vec<u32>,
    pub e_min: f64,
    pub e_max: f64,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        RunConfig {
            command,
            system: SystemSpec::Kepler,
            omega: 1.0,
            energy: -0.375,
            eps: 0.0,
            tol: orbits::ORBIT_TOL,
            quad_tol: 1e-10,
            periods: 8,
            grid: if command == Command::Sweep { 19 } else { 10 },
            seeds: 64,
            seed: 1,
            k_max: 5,
            omegas: Vec::new(),
            ns: Vec::new(),
            e_min: 0.05,
            e_max: 0.95,
            out: None,
            format: OutputFormat::Json,
        }
    }

    pub fn params(&self) -> Result<SystemParams> {
        self.system.params(self.omega, self.energy, self.eps)
    }

    pub fn quad(&self) -> QuadConfig {
        QuadConfig { tol_1d: self.quad_tol, tol_2d: 100.0 * self.quad_tol }
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig { k_max: self.k_max, random_seeds: self.seeds, rng_seed: self.seed, ..SearchConfig::default() }
    }
}

const CONFIG_KEYS: &[&str] = &[
    "system", "omega", "energy", "eps", "n", "tol", "quad-tol", "periods", "grid", "seeds", "seed", "k-max", "omegas",
    "ns", "e-min", "e-max", "out", "format",
];

/// Parses the flat `key = value` config format; `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("config line {}: expected `key = value`", i + 1)))?;
        let k = k.trim().trim_start_matches("--").to_string();
        if !CONFIG_KEYS.contains(&k.as_str()) {
            return Err(Error::Usage(format!("config line {}: unknown key {k:?}", i + 1)));
        }
        map.insert(k, v.trim().to_string());
    }
    Ok(map)
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Usage(format!("--{key} {raw}: not a valid value")))
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse_value(key, s)).collect()
}

fn pick<T: FromStr>(flag: Option<T>, file: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => file.get(key).map(|raw| parse_value(key, raw)).transpose(),
    }
}

fn pick_raw(flag: Option<String>, file: &BTreeMap<String, String>, key: &str) -> Option<String> {
    flag.or_else(|| file.get(key).cloned())
}

fn resolve(command: Command, flags: Flags) -> Result<RunConfig> {
    let file = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.clone(), source })?;
            parse_config_file(&text)?
        }
        None => BTreeMap::new(),
    };
    let mut cfg = RunConfig::defaults(command);
    if let Some(raw) = pick_raw(flags.ns, &file, "ns") {
        cfg.ns = parse_list("ns", &raw)?;
    }
    let n: Option<u32> = pick(flags.n, &file, "n")?;
    if let Some(s) = pick_raw(flags.system, &file, "system") {
        cfg.system = if s == "pyramid" {
            // a sweep over --ns needs no single n
            let n = n.or_else(|| cfg.ns.first().copied());
            SystemSpec::Pyramid(n.ok_or_else(|| Error::Usage("--system pyramid needs --n or --ns (or use pyramid:N)".into()))?)
        } else {
            s.parse()?
        };
    } else if let Some(n) = n {
        cfg.system = SystemSpec::Pyramid(n);
    }
    if let (Some(n), SystemSpec::Pyramid(m)) = (n, &cfg.system) {
        if n != *m {
            return Err(Error::Usage(format!("--n {n} conflicts with --system pyramid:{m}")));
        }
    }
    if let Some(v) = pick(flags.omega, &file, "omega")? {
        cfg.omega = v;
    }
    if let Some(v) = pick(flags.energy, &file, "energy")? {
        cfg.energy = v;
    }
    if let Some(v) = pick(flags.eps, &file, "eps")? {
        cfg.eps = v;
    }
    if let Some(v) = pick(flags.tol, &file, "tol")? {
        cfg.tol = v;
    }
    if let Some(v) = pick(flags.quad_tol, &file, "quad-tol")? {
        cfg.quad_tol = v;
    }
    if let Some(v) = pick(flags.periods, &file, "periods")? {
        cfg.periods = v;
    }
    if let Some(v) = pick(flags.grid, &file, "grid")? {
        cfg.grid = v;
    }
    if let Some(v) = pick(flags.seeds, &file, "seeds")? {
        cfg.seeds = v;
    }
    if let Some(v) = pick(flags.seed, &file, "seed")? {
        cfg.seed = v;
    }
    if let Some(v) = pick(flags.k_max, &file, "k-max")? {
        cfg.k_max = v;
    }
    if let Some(v) = pick(flags.e_min, &file, "e-min")? {
        cfg.e_min = v;
    }
    if let Some(v) = pick(flags.e_max, &file, "e-max")? {
        cfg.e_max = v;
    }
    if let Some(raw) = pick_raw(flags.omegas, &file, "omegas") {
        cfg.omegas = parse_list("omegas", &raw)?;
    }
    if let Some(raw) = pick_raw(flags.format, &file, "format") {
        cfg.format = raw.parse()?;
    }
    cfg.out = flags.out.or_else(|| file.get("out").map(PathBuf::from));
    validate(&cfg)?;
    Ok(cfg)
}

fn usage(flag: &str, value: impl std::fmt::Display, range: &str) -> Error {
    Error::Usage(format!("--{flag} {value}: must be {range}"))
}

/// Checks every setting against the preconditions of the modules the
/// command uses, before anything is computed.
pub fn validate(cfg: &RunConfig) -> Result<()> {
    if cfg.omega == 0.0 || !cfg.omega.is_finite() {
        return Err(usage("omega", cfg.omega, "a nonzero finite number"));
    }
    if !cfg.energy.is_finite() {
        return Err(usage("energy", cfg.energy, "finite"));
    }
    if !(0.0..1.0).contains(&cfg.eps) {
        return Err(usage("eps", cfg.eps, "in [0, 1)"));
    }
    if !(cfg.tol > 0.0 && cfg.tol <= 1e-3) {
        return Err(usage("tol", cfg.tol, "in (0, 1e-3]"));
    }
    if !(cfg.quad_tol > 0.0 && cfg.quad_tol <= 1e-3) {
        return Err(usage("quad-tol", cfg.quad_tol, "in (0, 1e-3]"));
    }
    if !(1..=10_000).contains(&cfg.periods) {
        return Err(usage("periods", cfg.periods, "in 1..=10000"));
    }
    if !(2..=1000).contains(&cfg.grid) {
        return Err(usage("grid", cfg.grid, "in 2..=1000"));
    }
    if cfg.seeds > 100_000 {
        return Err(usage("seeds", cfg.seeds, "at most 100000"));
    }
    if !(1..=20).contains(&cfg.k_max) {
        return Err(usage("k-max", cfg.k_max, "in 1..=20"));
    }
    if !(0.0 < cfg.e_min && cfg.e_min <= cfg.e_max && cfg.e_max < 1.0) {
        return Err(Error::Usage(format!(
            "--e-min {} --e-max {}: need 0 < e-min <= e-max < 1",
            cfg.e_min, cfg.e_max
        )));
    }
    if let Some(w) = cfg.omegas.iter().find(|w| **w == 0.0 || !w.is_finite()) {
        return Err(usage("omegas", w, "nonzero finite numbers"));
    }
    if let Some(n) = cfg.ns.iter().find(|n| **n < 2) {
        return Err(usage("ns", n, "integers >= 2"));
    }
    if let SystemSpec::Custom(path) = &cfg.system {
        // parse now so that a malformed file is a usage error
        cfg.system.perturbation().map_err(|e| match e {
            Error::Io { .. } | Error::Usage(_) => Error::Usage(format!("--system custom:{}: {e}", path.display())),
            other => other,
        })?;
    }
    let needs_compact = !matches!(cfg.command, Command::Classify | Command::Selftest | Command::Sweep);
    if needs_compact {
        let class = cfg.system.classify(cfg.omega, cfg.energy, cfg.eps)?;
        let w2 = cfg.omega * cfg.omega;
        if !class.is_compact() || !crate::model::classify_kepler_surface(cfg.omega, cfg.energy).is_compact() {
            return Err(Error::Usage(format!(
                "--energy {}: the energy surface is {class}; need -1/(2 omega^2) = {} < energy < 0{}",
                cfg.energy,
                -0.5 / w2,
                if matches!(cfg.system, SystemSpec::Pyramid(_)) { " and inside the pyramidal window" } else { "" }
            )));
        }
    }
    if cfg.command == Command::Sweep && cfg.system == SystemSpec::Kepler {
        return Err(Error::Usage("--system kepler: a sweep needs a perturbation (ellipsoid, pyramid:N or custom:PATH)".into()));
    }
    Ok(())
}

/// Result of `classify`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifyResult {
    pub system: SystemSpec,
    pub two_h_omega_sq: f64,
    pub class: EnergySurfaceClass,
    /// Open window of `2hω²` for a compact surface.
    pub window: (f64, f64),
}

pub fn classify(cfg: &RunConfig) -> Result<ClassifyResult> {
    let class = cfg.system.classify(cfg.omega, cfg.energy, cfg.eps)?;
    let window = match cfg.system {
        SystemSpec::Pyramid(n) => {
            let m = kepler::m_of_n(n)? * cfg.eps;
            (-(1.0 + 0.5 * m).powi(2), -0.25 * m * m)
        }
        _ => (-1.0, 0.0),
    };
    Ok(ClassifyResult { system: cfg.system.clone(), two_h_omega_sq: 2.0 * cfg.energy * cfg.omega * cfg.omega, class, window })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionalsResult {
    pub perturbation: String,
    pub analytic_partials: bool,
    pub e: f64,
    pub turning_points: (f64, f64),
    pub functionals: Functionals,
}

pub fn functionals(cfg: &RunConfig) -> Result<FunctionalsResult> {
    let params = cfg.params()?;
    Ok(FunctionalsResult {
        perturbation: params.perturbation.name(),
        analytic_partials: params.perturbation.analytic_partials(),
        e: kepler::eccentricity(cfg.omega, cfg.energy),
        turning_points: quad::turning_points(&params)?,
        functionals: quad::perturbation_functionals_with(&params, &cfg.quad())?,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriteriaResult {
    pub report: CriteriaReport,
    pub crosscheck: Option<CrossCheck>,
}

pub fn criteria(cfg: &RunConfig) -> Result<CriteriaResult> {
    let params = cfg.params()?;
    let report = criteria::evaluate_with(&params, &cfg.quad())?;
    let crosscheck = match cfg.system {
        SystemSpec::Ellipsoid | SystemSpec::Pyramid(_) => {
            let xcfg = CrossCheckConfig { quad: cfg.quad(), periods: cfg.periods, ..CrossCheckConfig::default() };
            Some(criteria::crosscheck(&cfg.system, cfg.omega, cfg.energy, &xcfg)?)
        }
        _ => None,
    };
    Ok(CriteriaResult { report, crosscheck })
}

#[derive(Debug, Clone, Serialize)]
pub struct OrbitResult {
    pub orbit: OrbitSidecar,
    pub time_period: f64,
    pub energy_residual: f64,
    pub rotation: RotationResult,
    #[serde(skip)]
    pub planar: orbits::PlanarOrbit,
}

pub fn orbit(cfg: &RunConfig) -> Result<OrbitResult> {
    let params = cfg.params()?;
    let planar = orbits::planar_orbit_with(&params, cfg.tol)?;
    let rotation = orbits::rotation_number_with(&params, cfg.periods, cfg.tol)?;
    Ok(OrbitResult {
        orbit: planar.sidecar(),
        time_period: planar.period,
        energy_residual: planar.energy_residual,
        rotation,
        planar,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BrakeResult {
    pub orbit: OrbitSidecar,
    /// `p_r` at the crossing predicted by the unperturbed closed form.
    pub kepler_crossing_pr: f64,
    pub link_count: i64,
    #[serde(skip)]
    pub brake: orbits::BrakeOrbit,
}

pub fn brake(cfg: &RunConfig) -> Result<BrakeResult> {
    let params = cfg.params()?;
    let brake = orbits::shoot_brake_orbit_with(&params, cfg.tol)?;
    let planar = orbits::planar_orbit_with(&params, cfg.tol)?;
    let link_count = orbits::hopf_link_check(&brake, &planar)?;
    Ok(BrakeResult {
        orbit: brake.sidecar(Some(link_count)),
        kepler_crossing_pr: kepler::brake_pr_oracle(brake.r0, cfg.omega, cfg.energy)?,
        link_count,
        brake,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReturnMapResult {
    pub area: AreaReport,
    pub search: SearchConfig,
    pub periodic_points: Vec<PeriodicPoint>,
}

pub fn return_map(cfg: &RunConfig) -> Result<ReturnMapResult> {
    let params = cfg.params()?;
    let area = retmap::area_preservation_test(&params, &SectionGrid { n: cfg.grid, ..SectionGrid::default() })?;
    let search = cfg.search();
    let periodic_points = retmap::find_periodic_points(&params, &search)?;
    Ok(ReturnMapResult { area, search, periodic_points })
}

/// One pass/fail line of `selftest`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelfCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl SelfCheck {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        SelfCheck { name: name.into(), passed, detail: detail.into() }
    }

    fn from_result(name: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((ok, detail)) => SelfCheck::new(name, ok, detail),
            Err(e) => SelfCheck::new(name, false, e.to_string()),
        }
    }
}

/// Quadrature oracles plus fast checks of the invariants of every module.
pub fn selftest() -> Vec<SelfCheck> {
    use crate::model::{Ellipsoid, Pyramidal};
    use std::sync::Arc;

    let mut out: Vec<SelfCheck> = quad::integral_selftests()
        .cases
        .into_iter()
        .map(|c| SelfCheck::new(format!("quad: {}", c.name), c.passed, format!("abs err {:.3e}", c.abs_err)))
        .collect();

    let built_ins: Vec<Arc<dyn Perturbation>> =
        vec![Arc::new(Ellipsoid), Arc::new(Pyramidal::new(2).expect("n = 2")), Arc::new(Pyramidal::new(3).expect("n = 3"))];
    for f in &built_ins {
        let mut sym: f64 = 0.0;
        let mut partial: f64 = 0.0;
        for i in 0..20 {
            for j in 0..20 {
                let r = 0.3 + 0.15 * i as f64;
                let z = -1.0 + 0.1 * j as f64;
                let v = f.value(r, z, 0.0);
                sym = sym.max((v - f.value(r, -z, 0.0)).abs() / v.abs().max(1e-300));
                let h = 1e-6;
                let fd = (f.value(r + h, z, 0.0) - f.value(r - h, z, 0.0)) / (2.0 * h);
                let an = f.df_dr(r, z, 0.0);
                partial = partial.max((fd - an).abs() / an.abs().max(1.0));
            }
        }
        out.push(SelfCheck::new(format!("model: {} reflection symmetry", f.name()), sym <= 1e-15, format!("max rel {sym:.1e}")));
        out.push(SelfCheck::new(format!("model: {} df/dr vs differences", f.name()), partial <= 1e-6, format!("max rel {partial:.1e}")));
    }

    let order = [EnergySurfaceClass::Empty, EnergySurfaceClass::Point, EnergySurfaceClass::CompactS3, EnergySurfaceClass::Unbounded];
    let rank = |c: EnergySurfaceClass| order.iter().position(|x| *x == c).unwrap_or(0);
    let hs = [-0.7, -0.5, -0.375, -0.1, 0.0, 0.2];
    let monotone = hs.windows(2).all(|w| {
        rank(crate::model::classify_kepler_surface(1.0, w[0])) <= rank(crate::model::classify_kepler_surface(1.0, w[1]))
    });
    out.push(SelfCheck::new("model: classification monotone in h", monotone, ""));

    out.push(SelfCheck::from_result(
        "kepler: 2n > M(n) exactly for n <= 472",
        (|| {
            let ok = (2..=472).all(|n| kepler::m_of_n(n).map(|m| 2.0 * n as f64 > m).unwrap_or(false));
            let m473 = kepler::m_of_n(473)?;
            Ok((ok && 2.0 * 473.0 <= m473, format!("M(473) = {m473}")))
        })(),
    ));

    out.push(SelfCheck::from_result(
        "quad: contact volume equals squared action",
        (|| {
            let p = SystemParams::kepler(1.0, -0.375)?;
            let v = quad::contact_volume(&p)?.value;
            let a = kepler::kepler_action(1.0, -0.375);
            let rel = (v - a * a).abs() / (a * a);
            Ok((rel <= 1e-6, format!("rel err {rel:.1e}")))
        })(),
    ));

    let xcfg = CrossCheckConfig { rotation: false, ..CrossCheckConfig::default() };
    for sys in [SystemSpec::Ellipsoid, SystemSpec::Pyramid(3)] {
        out.push(SelfCheck::from_result(
            &format!("criteria: {sys} closed forms"),
            criteria::crosscheck(&sys, 1.0, -0.375, &xcfg).map(|x| {
                let worst = x.entries.iter().map(|e| e.rel_err).fold(0.0, f64::max);
                (x.passed(), format!("worst rel err {worst:.1e}"))
            }),
        ));
    }
    out.push(SelfCheck::from_result(
        "criteria: ellipsoid verdict",
        (|| {
            let p = SystemParams::new(1.0, -0.375, 0.0, Arc::new(Ellipsoid))?;
            let r = criteria::evaluate(&p)?;
            Ok((r.verdict == Verdict::InfinitelyManyViaIi, r.verdict.to_string()))
        })(),
    ));

    out.push(SelfCheck::from_result(
        "orbits: unperturbed rotation number is 1",
        (|| {
            let r = orbits::rotation_number(&SystemParams::kepler(1.0, -0.375)?, 2)?;
            Ok(((r.rot - 1.0).abs() <= 1e-6, format!("Rot = {}", fmt_f64(r.rot))))
        })(),
    ));
    out.push(SelfCheck::from_result(
        "orbits: unperturbed brake root",
        (|| {
            let b = orbits::shoot_brake_orbit(&SystemParams::kepler(1.0, -0.375)?)?;
            let want = 1.0 / 0.75f64.sqrt();
            Ok(((b.r0 - want).abs() <= 1e-8, format!("r0 - omega/sqrt(-2h) = {:.1e}", b.r0 - want)))
        })(),
    ));
    out.push(SelfCheck::from_result(
        "retmap: unperturbed map is the identity",
        (|| {
            let p = SystemParams::kepler(1.0, -0.375)?;
            let disk = retmap::SectionDisk::of(&p)?;
            let x = disk.point(&p, 0.3, -0.4);
            let d = retmap::first_return(&x, &p)?.image.distance(&x);
            Ok((d <= 1e-7, format!("displacement {d:.1e}")))
        })(),
    ));
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<criteria::SweepRow>,
}

/// Grid points of a sweep: `--grid` eccentricities in `[e-min, e-max]` for
/// every omega of `--omegas` (default `--omega`).
pub fn sweep_grid(cfg: &RunConfig) -> Vec<(f64, f64)> {
    let omegas = if cfg.omegas.is_empty() { vec![cfg.omega] } else { cfg.omegas.clone() };
    let es: Vec<f64> = (0..cfg.grid)
        .map(|i| cfg.e_min + (cfg.e_max - cfg.e_min) * i as f64 / (cfg.grid - 1) as f64)
        .collect();
    omegas.iter().flat_map(|&w| criteria::eccentricity_grid(w, &es)).collect()
}

pub fn sweep(cfg: &RunConfig) -> Result<SweepResult> {
    let grid = sweep_grid(cfg);
    let systems: Vec<SystemSpec> = match (&cfg.system, cfg.ns.is_empty()) {
        (SystemSpec::Pyramid(_), false) => cfg.ns.iter().map(|n| SystemSpec::Pyramid(*n)).collect(),
        _ => vec![cfg.system.clone()],
    };
    let mut rows = Vec::new();
    for s in &systems {
        rows.extend(criteria::sweep(s, &grid, &cfg.quad())?);
    }
    Ok(SweepResult { rows })
}

/// Outcome of one command: summary lines, whether its checks passed, and the
/// rendered report with its CSV tables.
struct Outcome<'a> {
    summary: String,
    ok: bool,
    json: String,
    csv: Vec<CsvTable<'a>>,
}

fn outcome<'a, R: Serialize>(cfg: &RunConfig, summary: String, ok: bool, result: &R, csv: Vec<CsvTable<'a>>) -> Result<Outcome<'a>> {
    let json = to_json(&Report::new(cfg.command.name(), cfg, result))?;
    Ok(Outcome { summary, ok, json, csv })
}

fn csv_writer<'a, F>(name: &'a str, f: F) -> CsvTable<'a>
where
    F: Fn(&mut dyn Write) -> std::io::Result<()> + 'a,
{
    (name, Box::new(f))
}

fn functionals_csv(f: &Functionals, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "name,value,error")?;
    let rows = [
        ("vol", f.vol, f.vol_err),
        ("action", f.action, f.action_err),
        ("period", f.period, f.period_err),
        ("time_period", f.time_period, f.time_period_err),
        ("v_tilde", f.v_tilde, f.v_tilde_err),
        ("a_tilde", f.a_tilde, f.a_tilde_err),
        ("t_tilde", f.t_tilde, f.t_tilde_err),
        ("e_f", f.e_f, f.e_f_err),
        ("d_f", f.d_f, f.d_f_err),
        ("second_harmonic", f.second_harmonic, f.second_harmonic_err),
    ];
    for (name, v, e) in rows {
        writeln!(w, "{name},{},{}", fmt_f64(v), fmt_f64(e))?;
    }
    Ok(())
}

fn scalars_summary(s: &KeplerScalars) -> String {
    format!(
        "e = {}\nA = {}\nVol = {}\nC(e) = {}\nperiod = {}\nr_min = {}\nr_max = {}",
        fmt_f64(s.e),
        fmt_f64(s.action),
        fmt_f64(s.volume),
        fmt_f64(s.c),
        fmt_f64(s.period),
        fmt_f64(s.r_min),
        fmt_f64(s.r_max)
    )
}

fn init_threads() -> Result<()> {
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| Error::Usage(format!("{THREADS_ENV}={raw}: must be a positive integer")))?;
        // a pool built earlier in the same process keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs the command line `argv` (program name first) and returns the exit
/// code. Output goes to `stdout`, diagnostics to `stderr`.
pub fn run_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(stdout, "{text}") } else { write!(stderr, "{text}") };
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            match e {
                Error::Usage(_) => 2,
                _ => 1,
            }
        }
    }
}

/// [`run_with`] on the process streams.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    run_with(argv, &mut out, &mut err)
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<bool> {
    let cfg = resolve(cli.command, cli.flags)?;
    init_threads()?;
    let io = |e: std::io::Error| Error::Io { path: "<stdout>".into(), source: e };

    // results live here so the outcome can borrow them
    let classify_res;
    let scalars_res;
    let functionals_res;
    let criteria_res;
    let orbit_res;
    let brake_res;
    let retmap_res;
    let selftest_res;
    let sweep_res;

    let out: Outcome = match cfg.command {
        Command::Classify => {
            classify_res = classify(&cfg)?;
            outcome(&cfg, classify_res.class.to_string(), true, &classify_res, vec![])?
        }
        Command::Scalars => {
            scalars_res = kepler::kepler_scalars(cfg.omega, cfg.energy)?;
            outcome(&cfg, scalars_summary(&scalars_res), true, &scalars_res, vec![])?
        }
        Command::Functionals => {
            functionals_res = functionals(&cfg)?;
            let f = &functionals_res.functionals;
            let summary = format!(
                "A = {}\nT = {}\nVol = {}\nV~ = {}\nA~ = {}\nT~ = {}\nE = {}\nD = {}",
                fmt_f64(f.action),
                fmt_f64(f.period),
                fmt_f64(f.vol),
                fmt_f64(f.v_tilde),
                fmt_f64(f.a_tilde),
                fmt_f64(f.t_tilde),
                fmt_f64(f.e_f),
                fmt_f64(f.d_f)
            );
            let table = csv_writer("values", move |w| functionals_csv(f, w));
            outcome(&cfg, summary, true, &functionals_res, vec![table])?
        }
        Command::Criteria => {
            criteria_res = criteria(&cfg)?;
            let r = &criteria_res.report;
            let mut summary = format!(
                "{}\nstability = {:?}\nlhs = {} ± {:.1e}\nrhs = {} ± {:.1e}",
                r.verdict,
                r.stability,
                fmt_f64(r.lhs),
                r.lhs_err,
                fmt_f64(r.rhs),
                r.rhs_err
            );
            let mut ok = true;
            if let Some(x) = &criteria_res.crosscheck {
                ok = x.passed();
                for e in &x.entries {
                    let mark = if e.passed { "ok" } else { "MISMATCH" };
                    summary.push_str(&format!("\ncheck {} {mark} (rel err {:.1e})", e.name, e.rel_err));
                }
            }
            let row = criteria::SweepRow {
                n: match cfg.system {
                    SystemSpec::Pyramid(n) => Some(n),
                    _ => None,
                },
                report: r.clone(),
            };
            let table = csv_writer("row", move |w| criteria::write_sweep_csv(std::slice::from_ref(&row), w));
            outcome(&cfg, summary, ok, &criteria_res, vec![table])?
        }
        Command::Orbit => {
            orbit_res = orbit(&cfg)?;
            let o = &orbit_res;
            let summary = format!(
                "period = {}\ntau period = {}\nRot = {} ({:?})\nclosure = {:.1e}",
                fmt_f64(o.time_period),
                fmt_f64(o.orbit.tau_period.unwrap_or(f64::NAN)),
                fmt_f64(o.rotation.rot),
                o.rotation.stability,
                o.orbit.closure_residual
            );
            let table = csv_writer("trajectory", move |w| o.planar.write_csv(w));
            outcome(&cfg, summary, true, &orbit_res, vec![table])?
        }
        Command::Brake => {
            brake_res = brake(&cfg)?;
            let b = &brake_res;
            let summary = format!(
                "r0 = {}\nperiod = {}\nsymmetry residual = {:.1e}\nlink count = {}",
                fmt_f64(b.brake.r0),
                fmt_f64(b.brake.period),
                b.brake.symmetry_residual,
                b.link_count
            );
            let table = csv_writer("trajectory", move |w| b.brake.write_csv(w));
            outcome(&cfg, summary, b.link_count == 1, &brake_res, vec![table])?
        }
        Command::ReturnMap => {
            retmap_res = return_map(&cfg)?;
            let r = &retmap_res;
            let summary = format!(
                "max |det J - 1| = {:.3e} over {} points\nmax displacement = {:.3e}\n{} periodic orbits with k <= {}",
                r.area.max_det_deviation,
                r.area.points_tested,
                r.area.max_displacement,
                r.periodic_points.len(),
                cfg.k_max
            );
            let table = csv_writer("periodic_points", move |w| retmap::write_catalog(&r.periodic_points, w));
            outcome(&cfg, summary, true, &retmap_res, vec![table])?
        }
        Command::Selftest => {
            selftest_res = selftest();
            let ok = selftest_res.iter().all(|c| c.passed);
            let mut summary: String = selftest_res
                .iter()
                .map(|c| format!("{} {} {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
                .collect();
            let failed = selftest_res.iter().filter(|c| !c.passed).count();
            summary.push_str(&format!("{} checks, {failed} failed", selftest_res.len()));
            let checks = &selftest_res;
            let table = csv_writer("checks", move |w| {
                writeln!(w, "name,passed,detail")?;
                for c in checks {
                    writeln!(w, "\"{}\",{},\"{}\"", c.name.replace('"', "'"), c.passed, c.detail.replace('"', "'"))?;
                }
                Ok(())
            });
            outcome(&cfg, summary, ok, &selftest_res, vec![table])?
        }
        Command::Sweep => {
            sweep_res = sweep(&cfg)?;
            let rows = &sweep_res.rows;
            let mut buf = Vec::new();
            criteria::write_sweep_csv(rows, &mut buf).map_err(io)?;
            let summary = String::from_utf8(buf).expect("CSV is UTF-8").trim_end().to_string();
            let table = csv_writer("rows", move |w| criteria::write_sweep_csv(rows, w));
            outcome(&cfg, summary, true, &sweep_res, vec![table])?
        }
    };

    match &cfg.out {
        Some(p) if p.as_os_str() == "-" => {
            if cfg.format.json() {
                stdout.write_all(out.json.as_bytes()).map_err(io)?;
            }
            if cfg.format.csv() {
                for (_, table) in &out.csv {
                    table(stdout).map_err(io)?;
                }
            }
        }
        Some(dir) => {
            writeln!(stdout, "{}", out.summary).map_err(io)?;
            for path in emit_rendered(dir, cfg.command.name(), &out.json, &out.csv, cfg.format)? {
                writeln!(stdout, "wrote {}", path.display()).map_err(io)?;
            }
        }
        None => writeln!(stdout, "{}", out.summary).map_err(io)?,
    }
    Ok(out.ok)
}
