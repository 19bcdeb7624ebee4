//! Non-anticipative functionals: a common evaluation trait, a family of
//! built-in functionals with exact derivative formulas, and probes for the
//! regularity properties the calculus needs (predictability in the companion,
//! one-sided continuity, boundedness preservation).
//!
//! A functional `F` maps a time `t` and a pair `(x_t, v_t)` restricted to
//! `[0, t]` to a real number, using only information up to `t`. The trait
//! method [`Functional::evaluate`] therefore insists that the pair's horizon
//! *is* `t`; the module-level [`evaluate`] is the convenience form that
//! restricts a longer pair first.
//!
//! Built-ins (see [`builtin`]):
//!
//! * `cylinder` — `F_t = f(t, x(t))` for a closed-form `f`, with symbolic
//!   time derivative, gradient and Hessian;
//! * `running_integral` — `F_t = integral of g(x(s)) ds over [0, t]`,
//!   discretized as the left-endpoint sum on the master grid;
//! * `running_max` — `F_t = max of x over [0, t]` (scalar paths);
//! * `quadratic_cylinder` — `F_t = |x(t)|^2` in any dimension;
//! * `doleans` — the stochastic exponential
//!   `exp(x(t) - 1/2 integral of v) * prod over jumps (1 + dx) exp(-dx)`
//!   (scalar paths), evaluated in log space with `ln_1p` for jump accuracy.
//!
//! The vertical derivative of the Doléans functional at a path whose endpoint
//! carries a registered jump `dx` is ambiguous in the source calculus: the
//! closed form says `F` itself, while the raw difference quotient of the
//! perturbed evaluation gives `F / (1 + dx)`, because a vertical bump `e`
//! merges into the endpoint jump and multiplies the product term. The
//! built-in returns the closed form `F`; finite differences return the other
//! value; both agree wherever the endpoint jump is zero, which covers every
//! stopped-path argument. Reports that meet the ambiguity print both.

mod expr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numeric::{norm2, CompensatedSum, SymMatrix};
use crate::path_space::{d_infty, CadlagPath, PathPair, SNAP_REL_TOL};

use expr::Expr;

/// Regularity properties a functional asserts about itself. Probes and
/// property tests use these to decide what to check; they are claims, not
/// guarantees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Claims {
    /// Unchanged when the companion `v` is stopped just before the horizon.
    pub predictable_in_v: bool,
    pub left_continuous: bool,
    pub right_continuous: bool,
    /// Maps sup-norm-bounded path families to bounded value families.
    pub boundedness_preserving: bool,
    /// Lipschitz in the horizon under horizontal extension, locally.
    pub horizontal_lipschitz: bool,
}

impl Claims {
    pub fn all() -> Self {
        Self {
            predictable_in_v: true,
            left_continuous: true,
            right_continuous: true,
            boundedness_preserving: true,
            horizontal_lipschitz: true,
        }
    }

    pub fn none() -> Self {
        Self {
            predictable_in_v: false,
            left_continuous: false,
            right_continuous: false,
            boundedness_preserving: false,
            horizontal_lipschitz: false,
        }
    }
}

/// A non-anticipative functional of `(t, x_t, v_t)`.
///
/// `evaluate` requires the pair to be restricted to `[0, t]` already. The
/// `analytic_*` methods return `None` when no closed form is known, in which
/// case callers fall back to finite differences.
pub trait Functional: Send + Sync {
    fn name(&self) -> &str;

    fn evaluate(&self, t: f64, p: &PathPair) -> Result<f64>;

    fn analytic_horizontal(&self, t: f64, p: &PathPair) -> Option<Result<f64>> {
        let _ = (t, p);
        None
    }

    fn analytic_vertical(&self, t: f64, p: &PathPair) -> Option<Result<Vec<f64>>> {
        let _ = (t, p);
        None
    }

    fn analytic_vertical2(&self, t: f64, p: &PathPair) -> Option<Result<SymMatrix>> {
        let _ = (t, p);
        None
    }

    fn claims(&self) -> Claims {
        Claims::none()
    }
}

impl<T: Functional + ?Sized> Functional for Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn evaluate(&self, t: f64, p: &PathPair) -> Result<f64> {
        (**self).evaluate(t, p)
    }

    fn analytic_horizontal(&self, t: f64, p: &PathPair) -> Option<Result<f64>> {
        (**self).analytic_horizontal(t, p)
    }

    fn analytic_vertical(&self, t: f64, p: &PathPair) -> Option<Result<Vec<f64>>> {
        (**self).analytic_vertical(t, p)
    }

    fn analytic_vertical2(&self, t: f64, p: &PathPair) -> Option<Result<SymMatrix>> {
        (**self).analytic_vertical2(t, p)
    }

    fn claims(&self) -> Claims {
        (**self).claims()
    }
}

/// Evaluates `F` at time `t` along a pair whose horizon may exceed `t`:
/// restricts to `[0, t]` first (`t` must sit on the grid, at or before the
/// horizon).
pub fn evaluate(f: &dyn Functional, t: f64, p: &PathPair) -> Result<f64> {
    let restricted = p.restrict(t)?;
    f.evaluate(t, &restricted)
}

/// Fails unless the pair's horizon is `t` (up to grid snapping).
pub(crate) fn check_horizon(name: &str, t: f64, p: &PathPair) -> Result<()> {
    let h = p.horizon();
    if (t - h).abs() > SNAP_REL_TOL * h.max(1.0) {
        return Err(Error::Domain(format!(
            "{name} evaluated at t={t} but the pair is restricted to horizon {h}; \
             restrict the pair first (or use the module-level evaluate)"
        )));
    }
    Ok(())
}

fn require_dim(name: &str, p: &PathPair, needed: usize) -> Result<()> {
    if p.dim() < needed {
        return Err(Error::Domain(format!(
            "{name} needs paths of dimension at least {needed}, got {}",
            p.dim()
        )));
    }
    Ok(())
}

fn finite_or_eval_error(name: &str, t: f64, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation(format!(
            "{name} produced a non-finite value ({v}) at t={t}"
        )))
    }
}

/// `F_t = f(t, x(t))` for a closed-form `f`, with symbolic derivatives.
pub struct Cylinder {
    source: String,
    f: Expr,
    ft: Expr,
    fx: Vec<Expr>,
    /// Packed upper-triangular second derivatives over the coordinates `f`
    /// mentions.
    fxx: Vec<Expr>,
    needed: usize,
}

impl Cylinder {
    pub fn new(source: &str) -> Result<Self> {
        let f = Expr::parse(source)?;
        let needed = f.needed_dim();
        let ft = f.diff_t();
        let fx: Vec<Expr> = (0..needed).map(|c| f.diff_x(c)).collect();
        let mut fxx = Vec::new();
        for i in 0..needed {
            for j in i..needed {
                fxx.push(fx[i].diff_x(j));
            }
        }
        Ok(Self {
            source: source.to_string(),
            f,
            ft,
            fx,
            fxx,
            needed,
        })
    }

    fn endpoint<'p>(&self, p: &'p PathPair) -> &'p [f64] {
        p.x().value_at(p.last_index())
    }
}

impl Functional for Cylinder {
    fn name(&self) -> &str {
        "cylinder"
    }

    fn evaluate(&self, t: f64, p: &PathPair) -> Result<f64> {
        check_horizon(self.name(), t, p)?;
        require_dim(self.name(), p, self.needed)?;
        let v = self.f.eval(t, self.endpoint(p));
        finite_or_eval_error(&format!("cylinder {:?}", self.source), t, v)
    }

    fn analytic_horizontal(&self, t: f64, p: &PathPair) -> Option<Result<f64>> {
        Some(
            check_horizon(self.name(), t, p)
                .and_then(|()| require_dim(self.name(), p, self.needed))
                .and_then(|()| {
                    finite_or_eval_error(
                        &format!("d/dt of cylinder {:?}", self.source),
                        t,
                        self.ft.eval(t, self.endpoint(p)),
                    )
                }),
        )
    }

    fn analytic_vertical(&self, t: f64, p: &PathPair) -> Option<Result<Vec<f64>>> {
        Some(
            check_horizon(self.name(), t, p)
                .and_then(|()| require_dim(self.name(), p, self.needed))
                .and_then(|()| {
                    let x = self.endpoint(p);
                    let mut g = vec![0.0; p.dim()];
                    for (c, e) in self.fx.iter().enumerate() {
                        g[c] = finite_or_eval_error(
                            &format!("gradient of cylinder {:?}", self.source),
                            t,
                            e.eval(t, x),
                        )?;
                    }
                    Ok(g)
                }),
        )
    }

    fn analytic_vertical2(&self, t: f64, p: &PathPair) -> Option<Result<SymMatrix>> {
        Some(
            check_horizon(self.name(), t, p)
                .and_then(|()| require_dim(self.name(), p, self.needed))
                .and_then(|()| {
                    let x = self.endpoint(p);
                    let mut h = SymMatrix::zeros(p.dim());
                    let mut k = 0;
                    for i in 0..self.needed {
                        for j in i..self.needed {
                            let v = finite_or_eval_error(
                                &format!("hessian of cylinder {:?}", self.source),
                                t,
                                self.fxx[k].eval(t, x),
                            )?;
                            h.set_sym(i, j, v);
                            k += 1;
                        }
                    }
                    Ok(h)
                }),
        )
    }

    fn claims(&self) -> Claims {
        Claims::all()
    }
}

/// `F_t = integral of g(x(s)) ds over [0, t]`, as the left-endpoint sum on
/// the master grid. The endpoint never enters the sum, so the vertical
/// derivatives vanish identically and the horizontal derivative is exactly
/// `g(x(t))`.
pub struct RunningIntegral {
    source: String,
    g: Expr,
    needed: usize,
}

impl RunningIntegral {
    pub fn new(source: &str) -> Result<Self> {
        let g = Expr::parse(source)?;
        if g.uses_t() {
            return Err(Error::Config(format!(
                "running_integral integrand must be a function of the state only, got {source:?}"
            )));
        }
        Ok(Self {
            source: source.to_string(),
            needed: g.needed_dim(),
            g,
        })
    }
}

impl Functional for RunningIntegral {
    fn name(&self) -> &str {
        "running_integral"
    }

    fn evaluate(&self, t: f64, p: &PathPair) -> Result<f64> {
        check_horizon(self.name(), t, p)?;
        require_dim(self.name(), p, self.needed)?;
        let x = p.x();
        let mut s = CompensatedSum::new();
        for j in 0..x.last_index() {
            let v = self.g.eval(0.0, x.value_at(j));
            finite_or_eval_error(&format!("running_integral {:?}", self.source), t, v)?;
            s.add(v * x.step());
        }
        Ok(s.total())
    }

    fn analytic_horizontal(&self, t: f64, p: &PathPair) -> Option<Result<f64>> {
        Some(
            check_horizon(self.name(), t, p)
                .and_then(|()| require_dim(self.name(), p, self.needed))
                .and_then(|()| {
                    finite_or_eval_error(
                        &format!("running_integral {:?}", self.source),
                        t,
                        self.g.eval(0.0, p.x().value_at(p.last_index())),
                    )
                }),
        )
    }

    fn analytic_vertical(&self, t: f64, p: &PathPair) -> Option<Result<Vec<f64>>> {
        Some(check_horizon(self.name(), t, p).map(|()| vec![0.0; p.dim()]))
    }

    fn analytic_vertical2(&self, t: f64, p: &PathPair) -> Option<Result<SymMatrix>> {
        Some(check_horizon(self.name(), t, p).map(|()| SymMatrix::zeros(p.dim())))
    }

    fn claims(&self) -> Claims {
        Claims::all()
    }
}

/// `F_t = max of x over [0, t]` for scalar paths.
///
/// At the (measure-zero) tie where the endpoint equals the prior maximum the
/// vertical derivative does not exist; the analytic value is the right
/// derivative `1`. Central differences straddle the kink and return `1/2`
/// there, so derivative comparisons keep a margin away from ties.
pub struct RunningMax;

impl RunningMax {
    pub fn new() -> Self {
        Self
    }
}

impl Default for RunningMax {
    fn default() -> Self {
        Self::new()
    }
}

impl Functional for RunningMax {
    fn name(&self) -> &str {
        "running_max"
    }

    fn evaluate(&self, t: f64, p: &PathPair) -> Result<f64> {
        check_horizon(self.name(), t, p)?;
        if p.dim() != 1 {
            return Err(Error::Domain(format!(
                "running_max is defined for scalar paths, got dimension {}",
                p.dim()
            )));
        }
        let x = p.x();
        let mut m = f64::NEG_INFINITY;
        for j in 0..x.n_points() {
            m = m.max(x.value_at(j)[0]);
        }
        Ok(m)
    }

    fn analytic_horizontal(&self, t: f64, p: &PathPair) -> Option<Result<f64>> {
        Some(check_horizon(self.name(), t, p).map(|()| 0.0))
    }

    fn analytic_vertical(&self, t: f64, p: &PathPair) -> Option<Result<Vec<f64>>> {
        Some(check_horizon(self.name(), t, p).and_then(|()| {
            if p.dim() != 1 {
                return Err(Error::Domain(
                    "running_max is defined for scalar paths".into(),
                ));
            }
            let x = p.x();
            let last = x.last_index();
            let mut prior = f64::NEG_INFINITY;
            for j in 0..last {
                prior = prior.max(x.value_at(j)[0]);
            }
            Ok(vec![if x.value_at(last)[0] >= prior { 1.0 } else { 0.0 }])
        }))
    }

    fn analytic_vertical2(&self, t: f64, p: &PathPair) -> Option<Result<SymMatrix>> {
        Some(check_horizon(self.name(), t, p).map(|()| SymMatrix::zeros(p.dim())))
    }

    fn claims(&self) -> Claims {
        Claims::all()
    }
}

/// `F_t = |x(t)|^2` in any dimension, with exact derivatives.
pub struct QuadraticCylinder;

impl QuadraticCylinder {
    pub fn new() -> Self {
        Self
    }
}

impl Default for QuadraticCylinder {
    fn default() -> Self {
        Self::new()
    }
}

impl Functional for QuadraticCylinder {
    fn name(&self) -> &str {
        "quadratic_cylinder"
    }

    fn evaluate(&self, t: f64, p: &PathPair) -> Result<f64> {
        check_horizon(self.name(), t, p)?;
        let x = p.x().value_at(p.last_index());
        Ok(x.iter().map(|v| v * v).sum())
    }

    fn analytic_horizontal(&self, t: f64, p: &PathPair) -> Option<Result<f64>> {
        Some(check_horizon(self.name(), t, p).map(|()| 0.0))
    }

    fn analytic_vertical(&self, t: f64, p: &PathPair) -> Option<Result<Vec<f64>>> {
        Some(check_horizon(self.name(), t, p).map(|()| {
            p.x()
                .value_at(p.last_index())
                .iter()
                .map(|v| 2.0 * v)
                .collect()
        }))
    }

    fn analytic_vertical2(&self, t: f64, p: &PathPair) -> Option<Result<SymMatrix>> {
        Some(check_horizon(self.name(), t, p).map(|()| SymMatrix::scaled_identity(p.dim(), 2.0)))
    }

    fn claims(&self) -> Claims {
        Claims::all()
    }
}

/// The Doléans exponential of a scalar path against its companion:
///
/// `F_t = exp( x(t) - x(0) - 1/2 integral of v over [0, t] )
///        * prod over registry times s in (0, t] of (1 + dx(s)) exp(-dx(s))`
///
/// minus the normalization: this implementation keeps `x(0)` inside the
/// exponent (callers start paths at 0 anyway). Computed in log space; the
/// integral is the left-endpoint sum on the master grid; a registered jump
/// with `1 + dx <= 0` has no defined exponential and fails evaluation.
pub struct Doleans;

impl Doleans {
    pub fn new() -> Self {
        Self
    }

    fn log_value(t: f64, p: &PathPair) -> Result<f64> {
        if p.dim() != 1 {
            return Err(Error::Domain(format!(
                "doleans is defined for scalar paths, got dimension {}",
                p.dim()
            )));
        }
        let x = p.x();
        let v = p.v();
        let last = x.last_index();
        let mut s = CompensatedSum::new();
        s.add(x.value_at(last)[0]);
        for j in 0..last {
            s.add(-0.5 * v.value_at(j)[0] * v.step());
        }
        for e in x.registry() {
            if e.index == 0 {
                continue; // the product runs over (0, t]
            }
            let dx = e.delta[0];
            if 1.0 + dx <= 0.0 {
                return Err(Error::Evaluation(format!(
                    "doleans undefined: jump {dx} at t={} drives 1 + dx to {}",
                    x.grid_time(e.index),
                    1.0 + dx
                )));
            }
            s.add(dx.ln_1p() - dx);
        }
        finite_or_eval_error("doleans log", t, s.total())
    }
}

impl Default for Doleans {
    fn default() -> Self {
        Self::new()
    }
}

impl Functional for Doleans {
    fn name(&self) -> &str {
        "doleans"
    }

    fn evaluate(&self, t: f64, p: &PathPair) -> Result<f64> {
        check_horizon(self.name(), t, p)?;
        let f = Self::log_value(t, p)?.exp();
        finite_or_eval_error("doleans", t, f)
    }

    fn analytic_horizontal(&self, t: f64, p: &PathPair) -> Option<Result<f64>> {
        Some(self.evaluate(t, p).map(|f| {
            let v_t = p.v().value_at(p.last_index())[0];
            -0.5 * v_t * f
        }))
    }

    fn analytic_vertical(&self, t: f64, p: &PathPair) -> Option<Result<Vec<f64>>> {
        // Closed form: the functional reproduces itself. See the module docs
        // for the endpoint-jump ambiguity against the difference quotient.
        Some(self.evaluate(t, p).map(|f| vec![f]))
    }

    fn analytic_vertical2(&self, t: f64, p: &PathPair) -> Option<Result<SymMatrix>> {
        Some(self.evaluate(t, p).map(|f| {
            let mut h = SymMatrix::zeros(1);
            h.set_sym(0, 0, f);
            h
        }))
    }

    fn claims(&self) -> Claims {
        Claims::all()
    }
}

/// Wraps a functional and hides its closed-form derivatives, forcing every
/// derivative query down the finite-difference path. Useful for validating
/// the FD machinery against functionals that do know their derivatives.
pub struct WithoutAnalytics<F: Functional>(pub F);

impl<F: Functional> Functional for WithoutAnalytics<F> {
    fn name(&self) -> &str {
        self.0.name()
    }

    fn evaluate(&self, t: f64, p: &PathPair) -> Result<f64> {
        self.0.evaluate(t, p)
    }

    fn claims(&self) -> Claims {
        self.0.claims()
    }
}

/// A builtin selector: a name plus `key=value` parameters, e.g. parsed from
/// `cylinder:f=t*x^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinSpec {
    pub name: String,
    pub params: Vec<(String, String)>,
}

impl BuiltinSpec {
    /// Parses `name` or `name:k=v,k=v`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, rest) = match s.split_once(':') {
            Some((n, r)) => (n, Some(r)),
            None => (s, None),
        };
        if name.is_empty() {
            return Err(Error::Parse(format!("empty functional name in {s:?}")));
        }
        let mut params = Vec::new();
        if let Some(rest) = rest {
            for part in rest.split(',') {
                let (k, v) = part.split_once('=').ok_or_else(|| {
                    Error::Parse(format!("parameter {part:?} in {s:?} is not key=value"))
                })?;
                params.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
        Ok(Self {
            name: name.to_string(),
            params,
        })
    }

    fn take(&self, key: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        for (k, _) in &self.params {
            if !known.contains(&k.as_str()) {
                return Err(Error::Config(format!(
                    "unknown parameter {k:?} for functional {:?} (expected one of {known:?})",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for BuiltinSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// Instantiates a built-in functional from its spec.
pub fn builtin(spec: &BuiltinSpec) -> Result<Box<dyn Functional>> {
    match spec.name.as_str() {
        "cylinder" => {
            spec.reject_unknown(&["f"])?;
            let f = spec
                .take("f")
                .ok_or_else(|| Error::Config("cylinder needs f=<expression>".into()))?;
            Ok(Box::new(Cylinder::new(f)?))
        }
        "running_integral" => {
            spec.reject_unknown(&["g"])?;
            let g = spec
                .take("g")
                .ok_or_else(|| Error::Config("running_integral needs g=<expression>".into()))?;
            Ok(Box::new(RunningIntegral::new(g)?))
        }
        "running_max" => {
            spec.reject_unknown(&[])?;
            Ok(Box::new(RunningMax::new()))
        }
        "quadratic_cylinder" => {
            spec.reject_unknown(&[])?;
            Ok(Box::new(QuadraticCylinder::new()))
        }
        "doleans" => {
            spec.reject_unknown(&[])?;
            Ok(Box::new(Doleans::new()))
        }
        other => Err(Error::Config(format!(
            "unknown functional {other:?} (expected cylinder, running_integral, running_max, \
             quadratic_cylinder or doleans)"
        ))),
    }
}

/// Whether `F_t` is unchanged (within `tol`, relative to `1 + |F|`) when the
/// companion is replaced by its stopped-before version — the discrete form of
/// predictability in `v`.
pub fn check_predictable_in_v(f: &dyn Functional, p: &PathPair, t: f64, tol: f64) -> Result<bool> {
    let pt = p.restrict(t)?;
    let stopped_v = pt.v().stopped_before_index(pt.last_index())?;
    let stopped = PathPair::new(pt.x().clone(), stopped_v)?;
    let a = f.evaluate(t, &pt)?;
    let b = f.evaluate(t, &stopped)?;
    Ok((a - b).abs() <= tol * (1.0 + a.abs()))
}

/// Which side of the horizon a continuity probe approaches from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeDirection {
    /// Shorter horizons: restrictions to `t - h`.
    Left,
    /// Longer horizons: horizontal extensions by `h`.
    Right,
    /// Same horizon: vertical perturbations only.
    FixedTime,
}

/// One row of a continuity modulus table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulusRow {
    pub radius: f64,
    /// Number of probe pairs that actually landed within the radius.
    pub pairs: usize,
    /// Max |F difference| over those pairs.
    pub modulus: f64,
}

/// Empirical continuity modulus of `F` at `(t, p)`: for each radius, probes a
/// deterministic family of nearby pairs on the chosen side and reports the
/// largest value difference among pairs whose metric distance stays within
/// the radius.
///
/// The probe family is a documented choice, not an exhaustive search: horizon
/// shifts by the radius and half of it (snapped to the grid), each optionally
/// combined with an endpoint bump of a quarter radius, plus pure endpoint and
/// uniform bumps for the fixed-time direction. Pairs that land beyond the
/// radius (for instance a restriction across a large jump) are discarded, so
/// a row may legitimately report zero pairs.
pub fn continuity_probe(
    f: &dyn Functional,
    p: &PathPair,
    t: f64,
    radii: &[f64],
    direction: ProbeDirection,
) -> Result<Vec<ModulusRow>> {
    let pt = p.restrict(t)?;
    let base_idx = pt.last_index();
    let base_value = f.evaluate(t, &pt)?;
    let step = pt.step();
    let d = pt.dim();
    let mut rows = Vec::with_capacity(radii.len());
    for &radius in radii {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Config(format!(
                "probe radius must be positive and finite, got {radius}"
            )));
        }
        let max_d = radius * (1.0 + 1e-9);
        let mut pairs = 0usize;
        let mut modulus: f64 = 0.0;

        let mut consider = |cand: &PathPair, cand_t: f64, dist: f64| -> Result<()> {
            if dist <= max_d {
                let v = f.evaluate(cand_t, cand)?;
                pairs += 1;
                modulus = modulus.max((v - base_value).abs());
            }
            Ok(())
        };

        match direction {
            ProbeDirection::FixedTime => {
                let mut bumps: Vec<Vec<f64>> = Vec::new();
                for sign in [1.0, -1.0] {
                    let mut e = vec![0.0; d];
                    e[0] = sign * radius;
                    bumps.push(e);
                    bumps.push(vec![sign * radius / (d as f64).sqrt(); d]);
                }
                for e in bumps {
                    let cand = pt.perturb_x(&e)?;
                    consider(&cand, t, norm2(&e))?;
                }
            }
            ProbeDirection::Left => {
                let h_units = (radius / step).floor() as usize;
                let mut shifts = vec![h_units, h_units / 2];
                shifts.retain(|&h| h >= 1 && h <= base_idx);
                shifts.dedup();
                for h in shifts {
                    let idx = base_idx - h;
                    let cand = pt.restrict_index(idx)?;
                    let cand_t = pt.x().grid_time(idx);
                    let dist = d_infty(&cand, &pt)?;
                    consider(&cand, cand_t, dist)?;
                    let mut e = vec![0.0; d];
                    e[0] = radius / 4.0;
                    for sign in [1.0, -1.0] {
                        let se: Vec<f64> = e.iter().map(|v| sign * v).collect();
                        let bumped = cand.perturb_x(&se)?;
                        let dist = d_infty(&bumped, &pt)?;
                        consider(&bumped, cand_t, dist)?;
                    }
                }
            }
            ProbeDirection::Right => {
                let h_units = (radius / step).floor() as usize;
                let mut shifts = vec![h_units, h_units / 2];
                shifts.retain(|&h| h >= 1);
                shifts.dedup();
                for h in shifts {
                    let cand = pt.extend_steps(h)?;
                    let cand_t = cand.horizon();
                    let dist = d_infty(&pt, &cand)?;
                    consider(&cand, cand_t, dist)?;
                    let mut e = vec![0.0; d];
                    e[0] = radius / 4.0;
                    for sign in [1.0, -1.0] {
                        let se: Vec<f64> = e.iter().map(|v| sign * v).collect();
                        let bumped = pt.perturb_x(&se)?.extend_steps(h)?;
                        let dist = d_infty(&pt, &bumped)?;
                        consider(&bumped, cand_t, dist)?;
                    }
                }
            }
        }
        rows.push(ModulusRow {
            radius,
            pairs,
            modulus,
        });
    }
    Ok(rows)
}

/// Stream offset for probe-generated paths, disjoint from the generator
/// streams.
const PROBE_STREAM_BASE: u64 = 100 * 256;

/// Max `|F_t|` over a seeded family of scalar paths with sup norm at most
/// `bound_x`, paired with constant companions of Frobenius norm at most
/// `bound_v`, evaluated at several horizons. An evaluation failure reports
/// the offending sample's stream.
pub fn boundedness_probe(
    f: &dyn Functional,
    bound_x: f64,
    bound_v: f64,
    sample_count: u32,
    seed: u64,
) -> Result<f64> {
    if !(bound_x > 0.0) || !(bound_v >= 0.0) {
        return Err(Error::Config(format!(
            "bounds must be positive, got ({bound_x}, {bound_v})"
        )));
    }
    let depth = 8u32;
    let n = (1usize << depth) + 1;
    let step = 1.0 / (1u64 << depth) as f64;
    let mut worst: f64 = 0.0;
    for k in 0..sample_count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(PROBE_STREAM_BASE + k as u64);
        let mut values = Vec::with_capacity(n);
        let mut acc = 0.0;
        values.push(acc);
        let scale = bound_x * step.sqrt();
        for _ in 1..n {
            let z: f64 = rng.sample(StandardNormal);
            acc += scale * z;
            values.push(acc);
        }
        let sup = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if sup > bound_x {
            let factor = bound_x / sup;
            for v in &mut values {
                *v *= factor;
            }
        }
        let lambda: f64 = rng.random::<f64>() * bound_v;
        let x = CadlagPath::new(1, step, values, Vec::new())?;
        let pair = PathPair::with_constant_companion(x, lambda)?;
        for quarter in 1..=4u32 {
            let idx = (n - 1) * quarter as usize / 4;
            let sub = pair.restrict_index(idx)?;
            let t = sub.horizon();
            let v = f.evaluate(t, &sub).map_err(|e| {
                Error::Evaluation(format!(
                    "boundedness probe sample (seed {seed}, stream offset {k}) failed: {e}"
                ))
            })?;
            worst = worst.max(v.abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path_space::JumpEntry;
    use approx::assert_abs_diff_eq;

    fn pair_from(f: impl Fn(f64) -> f64, depth: u32, v_scale: f64) -> PathPair {
        let n = (1usize << depth) + 1;
        let step = 1.0 / (1u64 << depth) as f64;
        let values: Vec<f64> = (0..n).map(|j| f(j as f64 * step)).collect();
        let x = CadlagPath::new(1, step, values, Vec::new()).unwrap();
        PathPair::with_constant_companion(x, v_scale).unwrap()
    }

    #[test]
    fn cylinder_evaluates_and_differentiates() {
        let c = Cylinder::new("t*x^2").unwrap();
        let p = pair_from(|t| 1.0 + t, 4, 0.0);
        let f = c.evaluate(1.0, &p).unwrap();
        assert_abs_diff_eq!(f, 4.0, epsilon = 1e-15);
        let dt = c.analytic_horizontal(1.0, &p).unwrap().unwrap();
        assert_abs_diff_eq!(dt, 4.0, epsilon = 1e-15); // x^2 at x=2
        let g = c.analytic_vertical(1.0, &p).unwrap().unwrap();
        assert_abs_diff_eq!(g[0], 4.0, epsilon = 1e-15); // 2tx
        let h = c.analytic_vertical2(1.0, &p).unwrap().unwrap();
        assert_abs_diff_eq!(h.get(0, 0), 2.0, epsilon = 1e-15); // 2t
    }

    #[test]
    fn trait_evaluate_requires_matching_horizon() {
        let c = Cylinder::new("x").unwrap();
        let p = pair_from(|t| t, 4, 0.0);
        assert!(matches!(c.evaluate(0.5, &p), Err(Error::Domain(_))));
        // The module-level evaluate restricts for you.
        assert_abs_diff_eq!(evaluate(&c, 0.5, &p).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn cylinder_rejects_low_dimension_and_bad_values() {
        let c = Cylinder::new("x2").unwrap();
        let p = pair_from(|t| t, 2, 0.0);
        assert!(matches!(c.evaluate(1.0, &p), Err(Error::Domain(_))));
        let lg = Cylinder::new("log(x - 2)").unwrap();
        assert!(matches!(lg.evaluate(1.0, &p), Err(Error::Evaluation(_))));
    }

    #[test]
    fn running_integral_is_exact_on_linear_paths() {
        let g = RunningIntegral::new("x").unwrap();
        let p = pair_from(|t| t, 8, 0.0);
        // Left sum of s ds over [0,1] at step h is (1-h)/2, exactly dyadic.
        let step = p.step();
        assert_eq!(g.evaluate(1.0, &p).unwrap(), (1.0 - step) / 2.0);
        assert_eq!(g.analytic_horizontal(1.0, &p).unwrap().unwrap(), 1.0);
        assert_eq!(g.analytic_vertical(1.0, &p).unwrap().unwrap(), vec![0.0]);
    }

    #[test]
    fn running_integral_rejects_time_dependence() {
        assert!(matches!(
            RunningIntegral::new("t*x"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn running_max_gradient_depends_on_who_achieves_the_max() {
        let m = RunningMax::new();
        // Rising path: endpoint is the max.
        let up = pair_from(|t| t, 4, 0.0);
        assert_eq!(m.evaluate(1.0, &up).unwrap(), 1.0);
        assert_eq!(m.analytic_vertical(1.0, &up).unwrap().unwrap(), vec![1.0]);
        // Hump: the max is interior, endpoint far below.
        let hump = pair_from(|t| t * (1.0 - t), 4, 0.0);
        assert_eq!(m.analytic_vertical(1.0, &hump).unwrap().unwrap(), vec![0.0]);
        assert_eq!(m.analytic_horizontal(1.0, &hump).unwrap().unwrap(), 0.0);
    }

    #[test]
    fn doleans_matches_closed_form_without_jumps() {
        let d = Doleans::new();
        let sigma2 = 0.49;
        let p = pair_from(|t| 0.3 * t, 6, sigma2);
        let f = d.evaluate(1.0, &p).unwrap();
        // Left-endpoint sum of a constant companion is exact.
        let expected = (0.3 - 0.5 * sigma2).exp();
        assert_abs_diff_eq!(f, expected, epsilon = 1e-14);
        let dt = d.analytic_horizontal(1.0, &p).unwrap().unwrap();
        assert_abs_diff_eq!(dt, -0.5 * sigma2 * expected, epsilon = 1e-14);
        assert_eq!(d.analytic_vertical(1.0, &p).unwrap().unwrap(), vec![f]);
    }

    #[test]
    fn doleans_jump_factor_and_failure() {
        let n = 17;
        let step = 1.0 / 16.0;
        let mk = |delta: f64| {
            let values: Vec<f64> = (0..n).map(|j| if j >= 8 { delta } else { 0.0 }).collect();
            let x = CadlagPath::new(
                1,
                step,
                values,
                vec![JumpEntry {
                    index: 8,
                    delta: vec![delta],
                }],
            )
            .unwrap();
            PathPair::with_constant_companion(x, 0.0).unwrap()
        };
        let d = Doleans::new();
        let f = d.evaluate(1.0, &mk(0.5)).unwrap();
        // exp(x(T)) * (1.5) * exp(-0.5) with x(T) = 0.5: exactly 1.5.
        assert_abs_diff_eq!(f, 1.5, epsilon = 1e-14);
        assert!(matches!(
            d.evaluate(1.0, &mk(-1.0)),
            Err(Error::Evaluation(_))
        ));
    }

    #[test]
    fn builtin_spec_parsing_and_instantiation() {
        let s = BuiltinSpec::parse("cylinder:f=t*x^2").unwrap();
        assert_eq!(s.name, "cylinder");
        let f = builtin(&s).unwrap();
        assert_eq!(f.name(), "cylinder");
        assert!(builtin(&BuiltinSpec::parse("doleans").unwrap()).is_ok());
        assert!(matches!(
            builtin(&BuiltinSpec::parse("nope").unwrap()),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            builtin(&BuiltinSpec::parse("cylinder").unwrap()),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            builtin(&BuiltinSpec::parse("running_max:f=x").unwrap()),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            BuiltinSpec::parse("cylinder:junk"),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn builtins_are_predictable_in_v() {
        // A companion with a jump at the probe time: stopping it just before
        // changes v(t), and predictable functionals must not notice.
        let n = 17;
        let step = 1.0 / 16.0;
        let xvals: Vec<f64> = (0..n).map(|j| 0.1 * j as f64 * step).collect();
        let x = CadlagPath::new(1, step, xvals, Vec::new()).unwrap();
        let vvals: Vec<f64> = (0..n).map(|j| if j >= 16 { 2.0 } else { 1.0 }).collect();
        let v = CadlagPath::new(
            1,
            step,
            vvals,
            vec![JumpEntry {
                index: 16,
                delta: vec![1.0],
            }],
        )
        .unwrap();
        let p = PathPair::new(x, v).unwrap();
        for name in [
            "cylinder:f=x^2+t",
            "running_integral:g=x",
            "running_max",
            "quadratic_cylinder",
            "doleans",
        ] {
            let f = builtin(&BuiltinSpec::parse(name).unwrap()).unwrap();
            assert!(
                check_predictable_in_v(f.as_ref(), &p, 1.0, 1e-12).unwrap(),
                "{name} should be predictable in v"
            );
        }
    }

    /// `1 for t >= cutoff, else 0`: horizontally discontinuous from the left.
    struct StepInTime {
        cutoff: f64,
    }

    impl Functional for StepInTime {
        fn name(&self) -> &str {
            "step_in_time"
        }

        fn evaluate(&self, t: f64, _p: &PathPair) -> Result<f64> {
            Ok(if t >= self.cutoff { 1.0 } else { 0.0 })
        }
    }

    #[test]
    fn continuity_probe_separates_directions() {
        let f = StepInTime { cutoff: 0.5 };
        let p = pair_from(|_| 1.0, 6, 0.0);
        let radii = [0.125, 0.25];
        let left = continuity_probe(&f, &p, 0.5, &radii, ProbeDirection::Left).unwrap();
        assert!(left.iter().all(|r| r.pairs > 0));
        assert!(left.iter().all(|r| r.modulus == 1.0));
        let right = continuity_probe(&f, &p, 0.5, &radii, ProbeDirection::Right).unwrap();
        assert!(right.iter().all(|r| r.pairs > 0 && r.modulus == 0.0));
        let fixed = continuity_probe(&f, &p, 0.5, &radii, ProbeDirection::FixedTime).unwrap();
        assert!(fixed.iter().all(|r| r.modulus == 0.0));
    }

    #[test]
    fn continuity_probe_small_moduli_for_smooth_functionals() {
        let c = Cylinder::new("x^2").unwrap();
        let p = pair_from(|t| (3.0 * t).sin(), 8, 0.5);
        for dir in [
            ProbeDirection::Left,
            ProbeDirection::Right,
            ProbeDirection::FixedTime,
        ] {
            let rows = continuity_probe(&c, &p, 0.75, &[0.01, 0.05], dir).unwrap();
            for r in rows {
                assert!(
                    r.modulus <= 8.0 * r.radius,
                    "{dir:?} modulus {} at radius {}",
                    r.modulus,
                    r.radius
                );
            }
        }
    }

    #[test]
    fn boundedness_probe_is_deterministic_and_bounded() {
        let c = Cylinder::new("exp(x)").unwrap();
        let a = boundedness_probe(&c, 2.0, 1.0, 16, 7).unwrap();
        let b = boundedness_probe(&c, 2.0, 1.0, 16, 7).unwrap();
        assert_eq!(a, b);
        assert!(a <= 2.0_f64.exp());
        assert!(a > 1.0); // some sample actually moved
    }
}
