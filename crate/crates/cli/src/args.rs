//! Argument grammar and option resolution.
//!
//! Each subcommand declares only the flags it consumes, so an irrelevant flag
//! is an unknown-flag error at parse time rather than a silently ignored
//! option. Resolution merges, per field, the flag value, the `--config` TOML
//! value, and the built-in default — in that order of precedence — into one
//! [`RunConfig`].

use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand as ClapSubcommand};
use serde::Deserialize;

use pathcalc_core::derivatives::{
    DEFAULT_GRADIENT_TOL, DEFAULT_HESSIAN_TOL, DEFAULT_HORIZONTAL_TOL,
};
use pathcalc_core::follmer::Mode;
use pathcalc_core::quadratic_variation::SubdivisionScheme;
use pathcalc_core::{Error, Result};

use crate::{RunConfig, Subcommand};

/// Default seed for generated inputs.
pub(crate) const DEFAULT_SEED: u64 = 42;
/// Default grid depth (`2^14` cells on `[0, 1]`).
pub(crate) const DEFAULT_DEPTH: u32 = 14;
/// Observation horizon of generated paths.
pub(crate) const HORIZON: f64 = 1.0;

#[derive(Debug, Parser)]
#[command(
    name = "pathcalc",
    version,
    about = "Pathwise functional calculus runs: generation, quadratic variation, \
             derivatives, Föllmer sums, and change-of-variable verification, \
             all as reproducible CSV tables."
)]
pub(crate) struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, ClapSubcommand)]
enum Cmd {
    /// Generate a seeded path CSV plus a ground-truth sidecar (`.meta.csv`).
    Generate(GenerateArgs),
    /// Tabulate discrete quadratic variation across subdivision levels.
    Qv(QvArgs),
    /// Compare analytic and finite-difference derivatives of a functional.
    Derive(DeriveArgs),
    /// Tabulate Föllmer sums of a functional across subdivision levels.
    Integrate(IntegrateArgs),
    /// Check the change-of-variable identity level by level.
    Verify(VerifyArgs),
}

/// Flags describing what to generate (shared by every subcommand that can
/// synthesize its own input).
#[derive(Debug, Args)]
struct KindArgs {
    /// What to generate: brownian, compound_poisson, jump_diffusion, zero_qv,
    /// linear, step, sine or dirichlet, with optional `:k=v,...` parameters
    /// (e.g. `jump_diffusion:sigma=0.5,rate=5,lo=-0.4,hi=0.8`).
    #[arg(long, value_name = "NAME[:K=V,...]")]
    kind: Option<String>,

    /// Seed for the counter-based generator [default: 42].
    #[arg(long)]
    seed: Option<u64>,

    /// Grid depth: 2^depth cells on [0, 1] [default: 14].
    #[arg(long)]
    depth: Option<u32>,

    /// Diffusion scale; overrides the kind's `sigma` parameter.
    #[arg(long)]
    sigma: Option<f64>,

    /// Jump arrival rate; overrides the kind's `rate` parameter.
    #[arg(long)]
    rate: Option<f64>,

    /// Zero-QV Hölder exponent; overrides the kind's `alpha` parameter.
    #[arg(long)]
    alpha: Option<f64>,
}

/// Input selection: an existing path CSV or a generation request.
#[derive(Debug, Args)]
struct InputArgs {
    /// Path CSV to analyze (alternative to --kind).
    #[arg(long, value_name = "FILE")]
    path_file: Option<PathBuf>,

    #[command(flatten)]
    kind: KindArgs,
}

/// Flags shared by the functional-driven subcommands.
#[derive(Debug, Args)]
struct FunctionalArgs {
    /// Functional: cylinder:f=<expr>, running_integral:g=<expr>, running_max,
    /// quadratic_cylinder or doleans.
    #[arg(long, value_name = "NAME[:K=V,...]")]
    functional: Option<String>,

    /// Scale of the constant companion path [default: 1].
    #[arg(long)]
    v_const: Option<f64>,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// TOML file supplying defaults for any long option (flags win).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[command(flatten)]
    kind: KindArgs,

    /// Output path CSV (required).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,

    /// Ground-truth sidecar path [default: --out with extension .meta.csv].
    #[arg(long, value_name = "FILE")]
    meta_file: Option<PathBuf>,

    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct QvArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Ground-truth sidecar of --path-file, enabling the expected_total
    /// column.
    #[arg(long, value_name = "FILE")]
    meta_file: Option<PathBuf>,

    /// Inclusive level range A..B (or a single level N).
    #[arg(long, value_name = "A..B")]
    levels: Option<String>,

    /// Subdivision scheme: dyadic, jump or stopping [default: dyadic].
    #[arg(long, value_name = "SCHEME")]
    scheme: Option<String>,

    /// Output CSV [default: stdout].
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,

    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct DeriveArgs {
    #[command(flatten)]
    input: InputArgs,

    #[command(flatten)]
    functional: FunctionalArgs,

    /// Comma-separated evaluation times, snapped to the grid
    /// [default: T/4,T/2,3T/4].
    #[arg(long, value_name = "T1,T2,...")]
    at: Option<String>,

    /// Vertical-gradient tolerance on relative error [default: 1e-6].
    #[arg(long)]
    tol_gradient: Option<f64>,

    /// Hessian tolerance on relative error [default: 1e-4].
    #[arg(long)]
    tol_hessian: Option<f64>,

    /// Horizontal-derivative tolerance on relative error [default: 1e-3].
    #[arg(long)]
    tol_horizontal: Option<f64>,

    /// Output CSV [default: stdout].
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,

    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct IntegrateArgs {
    #[command(flatten)]
    input: InputArgs,

    #[command(flatten)]
    functional: FunctionalArgs,

    /// Inclusive level range A..B (or a single level N).
    #[arg(long, value_name = "A..B")]
    levels: Option<String>,

    /// Subdivision scheme: dyadic, jump or stopping [default: dyadic].
    #[arg(long, value_name = "SCHEME")]
    scheme: Option<String>,

    /// Sampling convention: continuous, cadlag or right [default: continuous].
    #[arg(long, value_name = "MODE")]
    mode: Option<String>,

    /// Use finite differences even where closed-form derivatives exist.
    #[arg(long, action = ArgAction::SetTrue)]
    use_fd: Option<bool>,

    /// Output CSV [default: stdout].
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,

    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    inner: IntegrateArgs,
}

/// The optional TOML config file: one flat table whose keys are the long
/// option names with underscores. Keys a subcommand does not consume are
/// ignored by that subcommand; unknown keys are rejected outright.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    kind: Option<String>,
    seed: Option<u64>,
    depth: Option<u32>,
    sigma: Option<f64>,
    rate: Option<f64>,
    alpha: Option<f64>,
    out: Option<PathBuf>,
    functional: Option<String>,
    path_file: Option<PathBuf>,
    meta_file: Option<PathBuf>,
    levels: Option<String>,
    scheme: Option<String>,
    mode: Option<String>,
    use_fd: Option<bool>,
    at: Option<String>,
    v_const: Option<f64>,
    tol_gradient: Option<f64>,
    tol_hessian: Option<f64>,
    tol_horizontal: Option<f64>,
}

impl FileConfig {
    fn load(path: &Option<PathBuf>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| Error::Parse(format!("config file {}: {e}", path.display())))
    }
}

/// Parses `A..B`, `A..=B` or a single `N`; both ends inclusive.
fn parse_levels(s: &str) -> Result<(u32, u32)> {
    let (lo, hi) = if let Some((a, b)) = s.split_once("..=") {
        (a, b)
    } else if let Some((a, b)) = s.split_once("..") {
        (a, b)
    } else {
        (s, s)
    };
    let parse = |part: &str| -> Result<u32> {
        part.trim().parse().map_err(|_| {
            Error::Config(format!(
                "levels must be an inclusive range A..B or a single level, got {s:?}"
            ))
        })
    };
    let (lo, hi) = (parse(lo)?, parse(hi)?);
    if lo > hi {
        return Err(Error::Config(format!(
            "levels range {s:?} is empty ({lo} > {hi})"
        )));
    }
    Ok((lo, hi))
}

/// Parses a comma-separated list of times.
fn parse_times(s: &str) -> Result<Vec<f64>> {
    let times = s
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad time {part:?} in --at {s:?}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if times.is_empty() {
        return Err(Error::Config("--at needs at least one time".into()));
    }
    Ok(times)
}

fn resolve_scheme(flag: Option<String>, file: Option<String>) -> Result<SubdivisionScheme> {
    match flag.or(file) {
        Some(s) => s.parse(),
        None => Ok(SubdivisionScheme::Dyadic),
    }
}

fn resolve_mode(flag: Option<String>, file: Option<String>) -> Result<Mode> {
    match flag.or(file) {
        Some(s) => s.parse(),
        None => Ok(Mode::Continuous),
    }
}

fn resolve_levels(flag: Option<String>, file: Option<String>) -> Result<Option<(u32, u32)>> {
    flag.or(file).as_deref().map(parse_levels).transpose()
}

fn resolve_times(flag: Option<String>, file: Option<String>) -> Result<Option<Vec<f64>>> {
    flag.or(file).as_deref().map(parse_times).transpose()
}

/// A [`RunConfig`] with every field at its built-in default.
fn defaults(subcommand: Subcommand) -> RunConfig {
    RunConfig {
        subcommand,
        kind: None,
        path_file: None,
        meta_file: None,
        out: None,
        functional: None,
        seed: DEFAULT_SEED,
        depth: DEFAULT_DEPTH,
        sigma: None,
        rate: None,
        alpha: None,
        levels: None,
        scheme: SubdivisionScheme::Dyadic,
        mode: Mode::Continuous,
        use_fd: false,
        at: None,
        v_const: 1.0,
        tol_gradient: DEFAULT_GRADIENT_TOL,
        tol_hessian: DEFAULT_HESSIAN_TOL,
        tol_horizontal: DEFAULT_HORIZONTAL_TOL,
    }
}

fn apply_kind(cfg: &mut RunConfig, a: KindArgs, f: &FileConfig) {
    cfg.kind = a.kind.or_else(|| f.kind.clone());
    cfg.seed = a.seed.or(f.seed).unwrap_or(DEFAULT_SEED);
    cfg.depth = a.depth.or(f.depth).unwrap_or(DEFAULT_DEPTH);
    cfg.sigma = a.sigma.or(f.sigma);
    cfg.rate = a.rate.or(f.rate);
    cfg.alpha = a.alpha.or(f.alpha);
}

fn apply_input(cfg: &mut RunConfig, a: InputArgs, f: &FileConfig) {
    // An input source named on the command line shadows the other source
    // coming from the config file; two sources on the same layer are left to
    // conflict at validation.
    let flag_path = a.path_file.is_some();
    let flag_kind = a.kind.kind.is_some();
    apply_kind(cfg, a.kind, f);
    cfg.path_file = a.path_file.or_else(|| f.path_file.clone());
    if flag_path && !flag_kind {
        cfg.kind = None;
    }
    if flag_kind && !flag_path {
        cfg.path_file = None;
    }
}

fn apply_functional(cfg: &mut RunConfig, a: FunctionalArgs, f: &FileConfig) {
    cfg.functional = a.functional.or_else(|| f.functional.clone());
    cfg.v_const = a.v_const.or(f.v_const).unwrap_or(1.0);
}

impl Cli {
    pub(crate) fn into_config(self) -> Result<RunConfig> {
        match self.cmd {
            Cmd::Generate(a) => {
                let f = FileConfig::load(&a.config.config)?;
                let mut cfg = defaults(Subcommand::Generate);
                apply_kind(&mut cfg, a.kind, &f);
                cfg.out = a.out.or(f.out);
                cfg.meta_file = a.meta_file.or(f.meta_file);
                Ok(cfg)
            }
            Cmd::Qv(a) => {
                let f = FileConfig::load(&a.config.config)?;
                let mut cfg = defaults(Subcommand::Qv);
                apply_input(&mut cfg, a.input, &f);
                cfg.meta_file = a.meta_file.or_else(|| f.meta_file.clone());
                cfg.levels = resolve_levels(a.levels, f.levels.clone())?;
                cfg.scheme = resolve_scheme(a.scheme, f.scheme.clone())?;
                cfg.out = a.out.or(f.out);
                Ok(cfg)
            }
            Cmd::Derive(a) => {
                let f = FileConfig::load(&a.config.config)?;
                let mut cfg = defaults(Subcommand::Derive);
                apply_input(&mut cfg, a.input, &f);
                apply_functional(&mut cfg, a.functional, &f);
                cfg.at = resolve_times(a.at, f.at.clone())?;
                cfg.tol_gradient = a
                    .tol_gradient
                    .or(f.tol_gradient)
                    .unwrap_or(DEFAULT_GRADIENT_TOL);
                cfg.tol_hessian = a
                    .tol_hessian
                    .or(f.tol_hessian)
                    .unwrap_or(DEFAULT_HESSIAN_TOL);
                cfg.tol_horizontal = a
                    .tol_horizontal
                    .or(f.tol_horizontal)
                    .unwrap_or(DEFAULT_HORIZONTAL_TOL);
                cfg.out = a.out.or(f.out);
                Ok(cfg)
            }
            Cmd::Integrate(a) => integrate_like(a, Subcommand::Integrate),
            Cmd::Verify(a) => integrate_like(a.inner, Subcommand::Verify),
        }
    }
}

fn integrate_like(a: IntegrateArgs, which: Subcommand) -> Result<RunConfig> {
    let f = FileConfig::load(&a.config.config)?;
    let mut cfg = defaults(which);
    apply_input(&mut cfg, a.input, &f);
    apply_functional(&mut cfg, a.functional, &f);
    cfg.levels = resolve_levels(a.levels, f.levels.clone())?;
    cfg.scheme = resolve_scheme(a.scheme, f.scheme.clone())?;
    cfg.mode = resolve_mode(a.mode, f.mode.clone())?;
    cfg.use_fd = a.use_fd.or(f.use_fd).unwrap_or(false);
    cfg.out = a.out.or(f.out);
    Ok(cfg)
}
