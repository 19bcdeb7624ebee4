//! Subcommand implementations.
//!
//! Every handler follows the same shape: resolve the input path (from a CSV
//! file or a generated kind), validate the requested levels against the
//! input's grid, then stream one CSV whose `#` header echoes the resolved
//! configuration. Numeric cells are printed with 17 significant digits; rows
//! are emitted in a fixed order, so identical configurations produce
//! byte-identical files.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use pathcalc_core::derivatives::{
    horizontal_derivative, horizontal_derivative_fd, relative_error, vertical_gradient,
    vertical_gradient_fd, vertical_hessian, vertical_hessian_fd, FDScheme,
};
use pathcalc_core::follmer::{change_of_variable_report, follmer_sum};
use pathcalc_core::functionals::{builtin, BuiltinSpec, Functional, WithoutAnalytics};
use pathcalc_core::generators::{read_ground_truth_csv, write_ground_truth_csv, GroundTruth};
use pathcalc_core::path_space::{read_path_csv, write_path_csv, CadlagPath, PathPair};
use pathcalc_core::quadratic_variation::{discrete_qv, subdivision_for, SubdivisionScheme};
use pathcalc_core::{Error, Result};

use crate::kinds::resolve_kind;
use crate::{RunConfig, Subcommand, VERSION};

pub(crate) fn dispatch(cfg: &RunConfig) -> Result<u8> {
    match cfg.subcommand {
        Subcommand::Generate => cmd_generate(cfg),
        Subcommand::Qv => cmd_qv(cfg),
        Subcommand::Derive => cmd_derive(cfg),
        Subcommand::Integrate => cmd_integrate(cfg),
        Subcommand::Verify => cmd_verify(cfg),
    }
}

/// 17 significant digits: round-trips any f64 exactly.
fn cell(v: f64) -> String {
    format!("{v:.16e}")
}

fn scheme_name(s: SubdivisionScheme) -> &'static str {
    match s {
        SubdivisionScheme::Dyadic => "dyadic",
        SubdivisionScheme::JumpAugmented => "jump",
        SubdivisionScheme::StoppingTime => "stopping",
    }
}

fn prologue(cfg: &RunConfig) -> Vec<String> {
    vec![
        format!("pathcalc {VERSION}"),
        format!("subcommand = {}", cfg.subcommand.as_str()),
    ]
}

fn open_reader(p: &Path) -> Result<BufReader<File>> {
    File::open(p)
        .map(BufReader::new)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))
}

fn create_writer(p: &Path) -> Result<Box<dyn Write>> {
    File::create(p)
        .map(|f| Box::new(BufWriter::new(f)) as Box<dyn Write>)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", p.display())))
}

/// The requested output file, or stdout when none was given.
fn out_writer(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    match out {
        Some(p) => create_writer(p),
        None => Ok(Box::new(BufWriter::new(io::stdout()))),
    }
}

fn emit_header(w: &mut dyn Write, lines: &[String]) -> Result<()> {
    for line in lines {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

/// The input path with its provenance echo and, when available, its ground
/// truth (generated in-memory, or read from `--meta-file`).
struct Input {
    path: CadlagPath,
    truth: Option<GroundTruth>,
    lines: Vec<String>,
}

fn resolve_input(cfg: &RunConfig) -> Result<Input> {
    match (&cfg.path_file, &cfg.kind) {
        (Some(_), Some(_)) => Err(Error::Config(
            "pass either --path-file or --kind, not both".into(),
        )),
        (None, None) => Err(Error::Config(
            "an input path is required: pass --path-file FILE or --kind NAME".into(),
        )),
        (Some(file), None) => {
            let (path, _) = read_path_csv(open_reader(file)?)?;
            let mut lines = vec![format!("path_file = {}", file.display())];
            let truth = match &cfg.meta_file {
                Some(meta) => {
                    lines.push(format!("meta_file = {}", meta.display()));
                    Some(read_ground_truth_csv(&mut open_reader(meta)?)?)
                }
                None => None,
            };
            Ok(Input { path, truth, lines })
        }
        (None, Some(raw)) => {
            if cfg.meta_file.is_some() {
                return Err(Error::Config(
                    "--meta-file accompanies --path-file input; a generated kind carries \
                     its own ground truth"
                        .into(),
                ));
            }
            let kind = resolve_kind(raw, cfg.sigma, cfg.rate, cfg.alpha)?;
            let (path, truth) = kind.realize(cfg.seed, cfg.depth)?;
            let lines = vec![
                format!("kind = {}", kind.canonical),
                format!("seed = {}", cfg.seed),
                format!("depth = {}", cfg.depth),
                format!("horizon = {}", path.horizon()),
            ];
            Ok(Input {
                path,
                truth: Some(truth),
                lines,
            })
        }
    }
}

/// Largest level whose `2^level` equal cells land on the path's grid.
fn grid_depth(path: &CadlagPath) -> u32 {
    let m = path.last_index();
    if m == 0 {
        0
    } else {
        m.trailing_zeros()
    }
}

/// Levels are validated against the grid before any computation, so a bad
/// range is a usage error rather than a mid-table failure.
fn check_levels(levels: (u32, u32), path: &CadlagPath) -> Result<(u32, u32)> {
    let depth = grid_depth(path);
    if levels.1 > depth {
        return Err(Error::Config(format!(
            "level exceeds grid depth: requested level {} but the input grid supports \
             at most level {depth} ({} intervals)",
            levels.1,
            path.last_index()
        )));
    }
    Ok(levels)
}

fn require_levels(cfg: &RunConfig) -> Result<(u32, u32)> {
    cfg.levels.ok_or_else(|| {
        Error::Config(format!(
            "{} requires --levels A..B (inclusive)",
            cfg.subcommand.as_str()
        ))
    })
}

fn make_functional(cfg: &RunConfig) -> Result<Box<dyn Functional>> {
    let raw = cfg.functional.as_deref().ok_or_else(|| {
        Error::Config(format!(
            "{} requires --functional NAME[:k=v,...]",
            cfg.subcommand.as_str()
        ))
    })?;
    let f = builtin(&BuiltinSpec::parse(raw)?)?;
    Ok(if cfg.use_fd {
        Box::new(WithoutAnalytics(f))
    } else {
        f
    })
}

/// Header lines for the functional-driven subcommands.
fn functional_lines(cfg: &RunConfig) -> Vec<String> {
    vec![
        format!("v_const = {}", cfg.v_const),
        format!(
            "functional = {}",
            cfg.functional.as_deref().unwrap_or_default()
        ),
    ]
}

/// Prefixes an error with the subdivision level it occurred at.
fn at_level(e: Error, level: u32) -> Error {
    let ctx = format!("level {level}");
    match e {
        Error::Domain(m) => Error::Domain(format!("{ctx}: {m}")),
        Error::Precision(m) => Error::Precision(format!("{ctx}: {m}")),
        Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
        Error::Evaluation(m) => Error::Evaluation(format!("{ctx}: {m}")),
        Error::Inconsistency(m) => Error::Inconsistency(format!("{ctx}: {m}")),
        Error::Parse(m) => Error::Parse(format!("{ctx}: {m}")),
        Error::Io(e) => Error::Io(e),
    }
}

fn cmd_generate(cfg: &RunConfig) -> Result<u8> {
    let raw = cfg
        .kind
        .as_deref()
        .ok_or_else(|| Error::Config("generate requires --kind NAME[:k=v,...]".into()))?;
    let out = cfg
        .out
        .as_ref()
        .ok_or_else(|| Error::Config("generate requires --out FILE".into()))?;
    let meta = cfg
        .meta_file
        .clone()
        .unwrap_or_else(|| out.with_extension("meta.csv"));
    if meta == *out {
        return Err(Error::Config(format!(
            "--meta-file must differ from --out, both are {}",
            out.display()
        )));
    }
    let kind = resolve_kind(raw, cfg.sigma, cfg.rate, cfg.alpha)?;
    let (path, truth) = kind.realize(cfg.seed, cfg.depth)?;
    let mut header = prologue(cfg);
    header.extend([
        format!("kind = {}", kind.canonical),
        format!("seed = {}", cfg.seed),
        format!("depth = {}", cfg.depth),
        format!("horizon = {}", path.horizon()),
    ]);
    let mut w = create_writer(out)?;
    write_path_csv(&path, &header, &mut w)?;
    w.flush()?;
    let mut mw = create_writer(&meta)?;
    write_ground_truth_csv(&truth, path.step(), &header, &mut mw)?;
    mw.flush()?;
    Ok(0)
}

/// Expected level-limit of the total quadratic variation: the continuous
/// slope times the horizon plus the planted atoms. Only scalar ground truths
/// carry a slope.
fn expected_total(truth: &GroundTruth, path: &CadlagPath) -> Option<f64> {
    if path.dim() != 1 {
        return None;
    }
    truth.qv_slope.map(|slope| {
        let atoms: f64 = truth
            .jumps_planted
            .iter()
            .map(|j| j.delta[0] * j.delta[0])
            .sum();
        slope * path.horizon() + atoms
    })
}

fn cmd_qv(cfg: &RunConfig) -> Result<u8> {
    let input = resolve_input(cfg)?;
    let (lo, hi) = check_levels(require_levels(cfg)?, &input.path)?;
    let pair = PathPair::with_constant_companion(input.path.clone(), 1.0)?;
    let d = input.path.dim();
    let expected = input
        .truth
        .as_ref()
        .and_then(|t| expected_total(t, &input.path));

    let mut header = prologue(cfg);
    header.extend(input.lines.iter().cloned());
    header.push(format!("levels = {lo}..{hi}"));
    header.push(format!("scheme = {}", scheme_name(cfg.scheme)));

    let mut columns = String::from("level,intervals");
    if d == 1 {
        columns.push_str(",total,atomic_total");
    } else {
        for c in 1..=d {
            columns.push_str(&format!(",total_{c}"));
        }
        for c in 1..=d {
            columns.push_str(&format!(",atomic_total_{c}"));
        }
    }
    if expected.is_some() {
        columns.push_str(",expected_total");
    }

    let mut w = out_writer(&cfg.out)?;
    emit_header(&mut *w, &header)?;
    writeln!(w, "{columns}")?;
    for level in lo..=hi {
        let sub = subdivision_for(cfg.scheme, &pair, level).map_err(|e| at_level(e, level))?;
        let q = discrete_qv(&input.path, &sub).map_err(|e| at_level(e, level))?;
        let mut row = format!("{level},{}", sub.n_intervals());
        for c in 0..d {
            row.push(',');
            row.push_str(&cell(q.total(c)));
        }
        for c in 0..d {
            row.push(',');
            row.push_str(&cell(q.atomic_total(c)));
        }
        if let Some(e) = expected {
            row.push(',');
            row.push_str(&cell(e));
        }
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(0)
}

fn cmd_integrate(cfg: &RunConfig) -> Result<u8> {
    let input = resolve_input(cfg)?;
    let (lo, hi) = check_levels(require_levels(cfg)?, &input.path)?;
    let f = make_functional(cfg)?;
    let pair = PathPair::with_constant_companion(input.path, cfg.v_const)?;

    let mut header = prologue(cfg);
    header.extend(input.lines.iter().cloned());
    header.extend(functional_lines(cfg));
    header.push(format!("levels = {lo}..{hi}"));
    header.push(format!("scheme = {}", scheme_name(cfg.scheme)));
    header.push(format!("mode = {}", cfg.mode));
    header.push(format!("use_fd = {}", cfg.use_fd));

    let mut w = out_writer(&cfg.out)?;
    emit_header(&mut *w, &header)?;
    writeln!(w, "level,intervals,follmer_sum")?;
    for level in lo..=hi {
        let sub = subdivision_for(cfg.scheme, &pair, level).map_err(|e| at_level(e, level))?;
        let s = follmer_sum(&*f, &pair, &sub, cfg.mode, !cfg.use_fd)
            .map_err(|e| at_level(e, level))?;
        writeln!(w, "{level},{},{}", sub.n_intervals(), cell(s))?;
    }
    w.flush()?;
    Ok(0)
}

fn cmd_verify(cfg: &RunConfig) -> Result<u8> {
    let input = resolve_input(cfg)?;
    let (lo, hi) = check_levels(require_levels(cfg)?, &input.path)?;
    let f = make_functional(cfg)?;
    let pair = PathPair::with_constant_companion(input.path, cfg.v_const)?;

    let mut header = prologue(cfg);
    header.extend(input.lines.iter().cloned());
    header.extend(functional_lines(cfg));
    header.push(format!("levels = {lo}..{hi}"));
    header.push(format!("scheme = {}", scheme_name(cfg.scheme)));
    header.push(format!("mode = {}", cfg.mode));
    header.push(format!("use_fd = {}", cfg.use_fd));

    let outcomes = change_of_variable_report(&*f, &pair, lo..=hi, cfg.scheme, cfg.mode)?;
    let mut w = out_writer(&cfg.out)?;
    emit_header(&mut *w, &header)?;
    writeln!(
        w,
        "level,intervals,lhs,horizontal,trace,follmer,jumps,small_jump_bound,residual"
    )?;
    for outcome in outcomes {
        let level = outcome.level;
        let r = outcome.report.map_err(|e| at_level(e, level))?;
        let intervals = subdivision_for(cfg.scheme, &pair, level)
            .map_err(|e| at_level(e, level))?
            .n_intervals();
        writeln!(
            w,
            "{level},{intervals},{},{},{},{},{},{},{}",
            cell(r.lhs),
            cell(r.term_horizontal),
            cell(r.term_trace),
            cell(r.term_follmer),
            cell(r.term_jumps),
            cell(r.small_jump_bound),
            cell(r.residual())
        )?;
    }
    w.flush()?;
    Ok(0)
}

fn cmd_derive(cfg: &RunConfig) -> Result<u8> {
    let input = resolve_input(cfg)?;
    if input.path.dim() != 1 {
        return Err(Error::Config(format!(
            "derive works on scalar paths, got dimension {}",
            input.path.dim()
        )));
    }
    let f = make_functional(cfg)?;
    let pair = PathPair::with_constant_companion(input.path, cfg.v_const)?;
    let horizon = pair.horizon();
    let requested = cfg
        .at
        .clone()
        .unwrap_or_else(|| vec![horizon / 4.0, horizon / 2.0, 3.0 * horizon / 4.0]);
    let mut times = Vec::with_capacity(requested.len());
    for t in requested {
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::Config(format!(
                "derive time {t} lies outside [0, {horizon}]"
            )));
        }
        times.push(pair.x().grid_time((t / pair.step()).round() as usize));
    }

    let mut header = prologue(cfg);
    header.extend(input.lines.iter().cloned());
    header.extend(functional_lines(cfg));
    let echo: Vec<String> = times.iter().map(|t| t.to_string()).collect();
    header.push(format!("at = {}", echo.join(",")));
    header.push(format!("tol_gradient = {}", cfg.tol_gradient));
    header.push(format!("tol_hessian = {}", cfg.tol_hessian));
    header.push(format!("tol_horizontal = {}", cfg.tol_horizontal));

    let scheme = FDScheme::default();
    let mut w = out_writer(&cfg.out)?;
    emit_header(&mut *w, &header)?;
    writeln!(
        w,
        "time,gradient,gradient_fd,gradient_err,hessian,hessian_fd,hessian_err,\
         horizontal,horizontal_fd,horizontal_err"
    )?;
    let mut violations = 0usize;
    for &t in &times {
        let g = vertical_gradient(&*f, &pair, t, &scheme)?[0];
        let g_fd = vertical_gradient_fd(&*f, &pair, t, &scheme)?[0];
        let h = vertical_hessian(&*f, &pair, t, &scheme)?.get(0, 0);
        let h_fd = vertical_hessian_fd(&*f, &pair, t, &scheme)?.get(0, 0);
        let dt = horizontal_derivative(&*f, &pair, t, &scheme)?;
        let dt_fd = horizontal_derivative_fd(&*f, &pair, t, &scheme)?;
        let (ge, he, de) = (
            relative_error(g_fd, g),
            relative_error(h_fd, h),
            relative_error(dt_fd, dt),
        );
        violations += usize::from(ge > cfg.tol_gradient)
            + usize::from(he > cfg.tol_hessian)
            + usize::from(de > cfg.tol_horizontal);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            cell(t),
            cell(g),
            cell(g_fd),
            cell(ge),
            cell(h),
            cell(h_fd),
            cell(he),
            cell(dt),
            cell(dt_fd),
            cell(de)
        )?;
    }
    w.flush()?;
    if violations > 0 {
        eprintln!(
            "pathcalc: derive: {violations} of {} derivative checks exceed tolerance \
             (table still written)",
            3 * times.len()
        );
        return Ok(1);
    }
    Ok(0)
}
