//! Command-line front end for the pathwise calculus crate: one binary, five
//! subcommands, CSV in and CSV out.
//!
//! - `generate` — seeded path generation plus a ground-truth sidecar.
//! - `qv` — discrete quadratic variation tabulated across subdivision levels.
//! - `derive` — analytic vs. finite-difference functional derivatives.
//! - `integrate` — Föllmer sums of a functional across levels.
//! - `verify` — the change-of-variable identity, term by term, with the
//!   per-level residual as the headline column.
//!
//! Every output starts with `#` comment lines echoing the fully resolved
//! configuration — defaults included — and the tool version, so a run can be
//! reproduced from its artifact alone. All reductions are single-threaded and
//! fixed-order: identical arguments and input files give byte-identical
//! output. Numeric cells carry 17 significant digits and round-trip exactly.
//!
//! Options resolve with precedence *flags > `--config` TOML file > built-in
//! defaults*; the kind and functional grammars take inline parameters
//! (`--kind jump_diffusion:rate=5`, `--functional cylinder:f=t*x^2`), with
//! the dedicated `--sigma/--rate/--alpha` flags overriding kind parameters.
//!
//! Exit codes: 0 on success; 1 when a computation fails or a `derive` check
//! exceeds its tolerance; 2 on usage errors (unknown flags, malformed specs,
//! inconsistent options).

use std::path::PathBuf;

use clap::Parser;

use pathcalc_core::follmer::Mode;
use pathcalc_core::quadratic_variation::SubdivisionScheme;
use pathcalc_core::Error;

mod args;
mod commands;
mod kinds;

/// Tool version echoed into every output header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Which operation a run performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Generate,
    Qv,
    Derive,
    Integrate,
    Verify,
}

impl Subcommand {
    pub fn as_str(self) -> &'static str {
        match self {
            Subcommand::Generate => "generate",
            Subcommand::Qv => "qv",
            Subcommand::Derive => "derive",
            Subcommand::Integrate => "integrate",
            Subcommand::Verify => "verify",
        }
    }
}

/// A fully resolved run: every option a subcommand may consult, after merging
/// flags, the optional config file, and built-in defaults.
///
/// Fields a subcommand does not use stay at their defaults and are neither
/// validated nor echoed; each handler checks its own requirements before any
/// computation and echoes exactly the fields that shaped its output.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    /// Generation request, `name` or `name:k=v,...` (see the `--kind` help).
    pub kind: Option<String>,
    /// Input path CSV; mutually exclusive with `kind`.
    pub path_file: Option<PathBuf>,
    /// Ground-truth sidecar: written by `generate`, read by `qv`.
    pub meta_file: Option<PathBuf>,
    /// Output CSV; stdout when absent (`generate` requires it).
    pub out: Option<PathBuf>,
    /// Functional selector, `name` or `name:k=v,...`.
    pub functional: Option<String>,
    pub seed: u64,
    pub depth: u32,
    /// Override for the kind's diffusion scale.
    pub sigma: Option<f64>,
    /// Override for the kind's jump arrival rate.
    pub rate: Option<f64>,
    /// Override for the kind's zero-QV Hölder exponent.
    pub alpha: Option<f64>,
    /// Inclusive subdivision level range.
    pub levels: Option<(u32, u32)>,
    pub scheme: SubdivisionScheme,
    pub mode: Mode,
    /// Route every derivative query down the finite-difference path.
    pub use_fd: bool,
    /// Evaluation times for `derive` (snapped to the grid).
    pub at: Option<Vec<f64>>,
    /// Scale of the constant companion path.
    pub v_const: f64,
    pub tol_gradient: f64,
    pub tol_hessian: f64,
    pub tol_horizontal: f64,
}

/// Parses `argv` (program name first), runs the requested subcommand, and
/// returns the process exit code. Errors print one line to stderr.
pub fn run(argv: &[String]) -> u8 {
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version land on stdout with code 0; usage errors on
            // stderr with clap's code 2.
            let code = e.exit_code().clamp(0, 255) as u8;
            let _ = e.print();
            return code;
        }
    };
    let cfg = match cli.into_config() {
        Ok(cfg) => cfg,
        Err(e) => return fail(&e),
    };
    match commands::dispatch(&cfg) {
        Ok(code) => code,
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> u8 {
    eprintln!("pathcalc: {e}");
    if e.is_usage() {
        2
    } else {
        1
    }
}
