//! The `--kind` grammar: a kind name with optional `k=v` parameters, resolved
//! against per-kind defaults and the dedicated `--sigma/--rate/--alpha`
//! overrides, then realized into a path with its ground truth.
//!
//! Kinds and their parameters (defaults in brackets):
//!
//! - `brownian` — `sigma` [1]
//! - `compound_poisson` — `rate` [5], marks `lo` [-0.4], `hi` [0.8] or a
//!   constant `value`
//! - `jump_diffusion` — `sigma` [0.5] plus the compound-Poisson parameters
//! - `zero_qv` — `alpha` [0.75], `amplitude` [0.25]
//! - `linear` — `slope` [1]
//! - `step` — `size` [0.7], `time` [0.1875]
//! - `sine` — `amplitude` [1], `cycles` [2]
//! - `dirichlet` — `sigma` [1], `alpha` [0.75], `amplitude` [0.25]: a
//!   Brownian path plus an independent zero-QV component under one seed
//!
//! The canonical echo written into output headers restates every parameter at
//! its resolved value, so a header line alone reproduces the path.

use pathcalc_core::functionals::BuiltinSpec;
use pathcalc_core::generators::{
    dirichlet_sum, generate, DetShape, GenKind, GenSpec, GroundTruth, MarkLaw,
};
use pathcalc_core::path_space::CadlagPath;
use pathcalc_core::{Error, Result};

use crate::args::HORIZON;

/// A kind with every parameter pinned, ready to realize.
#[derive(Debug)]
pub(crate) struct ResolvedKind {
    /// `name:k=v,...` with all resolved values, for header echoes.
    pub canonical: String,
    gen: Realizable,
}

#[derive(Debug)]
enum Realizable {
    Plain(GenKind),
    Dirichlet {
        sigma: f64,
        alpha: f64,
        amplitude: f64,
    },
}

impl ResolvedKind {
    /// Generates the path and its ground truth on a `2^depth` grid over
    /// `[0, 1]`.
    pub fn realize(&self, seed: u64, depth: u32) -> Result<(CadlagPath, GroundTruth)> {
        let spec = |kind| GenSpec {
            kind,
            horizon: HORIZON,
            depth,
            seed,
        };
        match self.gen {
            Realizable::Plain(kind) => generate(&spec(kind)),
            Realizable::Dirichlet {
                sigma,
                alpha,
                amplitude,
            } => {
                let (x, _) = generate(&spec(GenKind::Brownian { sigma }))?;
                let (b, _) = generate(&spec(GenKind::ZeroQv { alpha, amplitude }))?;
                dirichlet_sum(&x, &b)
            }
        }
    }
}

/// Inline `k=v` parameters with first-match lookup.
struct Params<'a> {
    kind: &'a str,
    entries: &'a [(String, String)],
}

impl Params<'_> {
    fn get(&self, key: &str) -> Result<Option<f64>> {
        match self.entries.iter().find(|(k, _)| k == key) {
            None => Ok(None),
            Some((_, v)) => v.parse().map(Some).map_err(|_| {
                Error::Config(format!(
                    "kind parameter {key}={v} for {:?} is not a number",
                    self.kind
                ))
            }),
        }
    }

    fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        for (k, _) in self.entries {
            if !known.contains(&k.as_str()) {
                return Err(Error::Config(format!(
                    "unknown parameter {k:?} for kind {:?} (expected one of {known:?})",
                    self.kind
                )));
            }
        }
        Ok(())
    }
}

/// Rejects a dedicated flag aimed at a kind that has no such parameter.
fn reject_flag(flag: &str, value: Option<f64>, kind: &str) -> Result<()> {
    if value.is_some() {
        return Err(Error::Config(format!(
            "--{flag} does not apply to kind {kind:?}"
        )));
    }
    Ok(())
}

/// Mark-law parameters: either a constant `value` or a uniform `lo`/`hi`
/// window. Returns the law and its canonical echo.
fn resolve_law(p: &Params) -> Result<(MarkLaw, String)> {
    let value = p.get("value")?;
    let (lo, hi) = (p.get("lo")?, p.get("hi")?);
    match value {
        Some(value) => {
            if lo.is_some() || hi.is_some() {
                return Err(Error::Config(format!(
                    "kind {:?} takes either value=... or lo=.../hi=..., not both",
                    p.kind
                )));
            }
            Ok((MarkLaw::Constant { value }, format!("value={value}")))
        }
        None => {
            let lo = lo.unwrap_or(-0.4);
            let hi = hi.unwrap_or(0.8);
            Ok((MarkLaw::Uniform { lo, hi }, format!("lo={lo},hi={hi}")))
        }
    }
}

/// Parses and resolves a `--kind` string. The dedicated flag values (already
/// merged with the config file) override like-named inline parameters.
pub(crate) fn resolve_kind(
    raw: &str,
    sigma: Option<f64>,
    rate: Option<f64>,
    alpha: Option<f64>,
) -> Result<ResolvedKind> {
    if raw.is_empty() || raw.starts_with(':') {
        return Err(Error::Config(format!(
            "kind must be a name optionally followed by :k=v,... parameters, got {raw:?}"
        )));
    }
    let spec = BuiltinSpec::parse(raw)?;
    let p = Params {
        kind: &spec.name,
        entries: &spec.params,
    };
    let name = spec.name.as_str();
    // Flags that name a parameter the kind does not have are mistakes, not
    // no-ops.
    if !matches!(name, "brownian" | "jump_diffusion" | "dirichlet") {
        reject_flag("sigma", sigma, name)?;
    }
    if !matches!(name, "compound_poisson" | "jump_diffusion") {
        reject_flag("rate", rate, name)?;
    }
    if !matches!(name, "zero_qv" | "dirichlet") {
        reject_flag("alpha", alpha, name)?;
    }
    let (gen, canonical) = match name {
        "brownian" => {
            p.reject_unknown(&["sigma"])?;
            let sigma = sigma.or(p.get("sigma")?).unwrap_or(1.0);
            (
                Realizable::Plain(GenKind::Brownian { sigma }),
                format!("brownian:sigma={sigma}"),
            )
        }
        "compound_poisson" => {
            p.reject_unknown(&["rate", "lo", "hi", "value"])?;
            let rate = rate.or(p.get("rate")?).unwrap_or(5.0);
            let (law, law_echo) = resolve_law(&p)?;
            (
                Realizable::Plain(GenKind::CompoundPoisson { rate, law }),
                format!("compound_poisson:rate={rate},{law_echo}"),
            )
        }
        "jump_diffusion" => {
            p.reject_unknown(&["sigma", "rate", "lo", "hi", "value"])?;
            let sigma = sigma.or(p.get("sigma")?).unwrap_or(0.5);
            let rate = rate.or(p.get("rate")?).unwrap_or(5.0);
            let (law, law_echo) = resolve_law(&p)?;
            (
                Realizable::Plain(GenKind::JumpDiffusion { sigma, rate, law }),
                format!("jump_diffusion:sigma={sigma},rate={rate},{law_echo}"),
            )
        }
        "zero_qv" => {
            p.reject_unknown(&["alpha", "amplitude"])?;
            let alpha = alpha.or(p.get("alpha")?).unwrap_or(0.75);
            let amplitude = p.get("amplitude")?.unwrap_or(0.25);
            (
                Realizable::Plain(GenKind::ZeroQv { alpha, amplitude }),
                format!("zero_qv:alpha={alpha},amplitude={amplitude}"),
            )
        }
        "linear" => {
            p.reject_unknown(&["slope"])?;
            let slope = p.get("slope")?.unwrap_or(1.0);
            (
                Realizable::Plain(GenKind::Deterministic(DetShape::Linear { slope })),
                format!("linear:slope={slope}"),
            )
        }
        "step" => {
            p.reject_unknown(&["size", "time"])?;
            let size = p.get("size")?.unwrap_or(0.7);
            let time = p.get("time")?.unwrap_or(0.1875);
            (
                Realizable::Plain(GenKind::Deterministic(DetShape::Step { size, time })),
                format!("step:size={size},time={time}"),
            )
        }
        "sine" => {
            p.reject_unknown(&["amplitude", "cycles"])?;
            let amplitude = p.get("amplitude")?.unwrap_or(1.0);
            let cycles = p.get("cycles")?.unwrap_or(2.0);
            (
                Realizable::Plain(GenKind::Deterministic(DetShape::Sine { amplitude, cycles })),
                format!("sine:amplitude={amplitude},cycles={cycles}"),
            )
        }
        "dirichlet" => {
            p.reject_unknown(&["sigma", "alpha", "amplitude"])?;
            let sigma = sigma.or(p.get("sigma")?).unwrap_or(1.0);
            let alpha = alpha.or(p.get("alpha")?).unwrap_or(0.75);
            let amplitude = p.get("amplitude")?.unwrap_or(0.25);
            (
                Realizable::Dirichlet {
                    sigma,
                    alpha,
                    amplitude,
                },
                format!("dirichlet:sigma={sigma},alpha={alpha},amplitude={amplitude}"),
            )
        }
        other => {
            return Err(Error::Config(format!(
                "unknown kind {other:?} (expected brownian, compound_poisson, jump_diffusion, \
                 zero_qv, linear, step, sine or dirichlet)"
            )));
        }
    };
    Ok(ResolvedKind { canonical, gen })
}
