//! Horizontal and vertical derivatives of functionals, analytic when the
//! functional knows a closed form and finite-difference otherwise.
//!
//! The two derivative directions are structurally different:
//!
//! * the **horizontal** derivative moves the horizon while freezing the path,
//!   so its difference quotients live on horizontal extensions; quotients at
//!   node offsets `j * grid_step` are combined by Richardson (Neville)
//!   extrapolation to offset zero;
//! * the **vertical** derivatives bump the endpoint value, so they reduce to
//!   ordinary central differences of the perturbed evaluation.
//!
//! The second vertical derivative is the vertical derivative *of the gradient
//! functional*. When a closed-form gradient exists, the finite-difference
//! Hessian differences that gradient; only without one does it fall back to
//! second differences of the value. The distinction matters: a functional
//! whose response to an endpoint bump `e` is affine (the Doléans exponential
//! scales by `1 + e`) has identically vanishing second value-differences,
//! while its gradient field genuinely varies from path to path.
//!
//! Every `*_fd` variant is public so formula validation can compare the two
//! routes; the unsuffixed operations prefer the analytic answer unless the
//! scheme forces finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::functionals::Functional;
use crate::numeric::{norm2, SymMatrix};
use crate::path_space::PathPair;

/// Finite-difference steps never shrink below this absolute size.
pub const FD_STEP_FLOOR: f64 = 9.094947017729282e-13; // 2^-40

/// Default tolerance for gradient validation, relative to `1 + |analytic|`.
pub const DEFAULT_GRADIENT_TOL: f64 = 1e-6;
/// Default tolerance for Hessian validation.
pub const DEFAULT_HESSIAN_TOL: f64 = 1e-4;
/// Default tolerance for horizontal-derivative validation.
pub const DEFAULT_HORIZONTAL_TOL: f64 = 1e-3;

/// Finite-difference configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FDScheme {
    /// Relative step for first vertical differences.
    pub vertical_eps: f64,
    /// Relative step for the outer difference of the Hessian.
    pub hessian_eps: f64,
    /// Number of horizontal quotient nodes fed to Richardson extrapolation.
    pub horizontal_steps: u32,
    /// Ignore closed-form derivatives even where the functional has them.
    pub force_fd: bool,
}

impl Default for FDScheme {
    fn default() -> Self {
        Self {
            vertical_eps: 1e-5,
            hessian_eps: 1e-3,
            horizontal_steps: 2,
            force_fd: false,
        }
    }
}

impl FDScheme {
    fn validate(&self) -> Result<()> {
        if !(self.vertical_eps > 0.0) || !(self.hessian_eps > 0.0) {
            return Err(Error::Config(format!(
                "finite-difference steps must be positive, got ({}, {})",
                self.vertical_eps, self.hessian_eps
            )));
        }
        if self.horizontal_steps == 0 {
            return Err(Error::Config(
                "at least one horizontal quotient node is required".into(),
            ));
        }
        Ok(())
    }
}

/// `|fd - analytic| / (1 + |analytic|)`: the relative-error convention used
/// by every derivative validation in this crate.
pub fn relative_error(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / (1.0 + analytic.abs())
}

fn vertical_step(eps: f64, p: &PathPair) -> f64 {
    let x = p.x().value_at(p.last_index());
    (eps * norm2(x).max(1.0)).max(FD_STEP_FLOOR)
}

/// Value of the polynomial through `(x_j, q_j)` at `x = 0` (Neville).
fn extrapolate_to_zero(xs: &[f64], qs: &[f64]) -> f64 {
    let mut vals = qs.to_vec();
    let n = vals.len();
    for level in 1..n {
        for i in 0..n - level {
            let (xi, xj) = (xs[i], xs[i + level]);
            vals[i] = (xj * vals[i] - xi * vals[i + 1]) / (xj - xi);
        }
    }
    vals[0]
}

/// Horizontal derivative at `(t, p)`: closed form if the functional has one
/// (and the scheme does not force FD), otherwise [`horizontal_derivative_fd`].
pub fn horizontal_derivative(
    f: &dyn Functional,
    p: &PathPair,
    t: f64,
    scheme: &FDScheme,
) -> Result<f64> {
    scheme.validate()?;
    if !scheme.force_fd {
        let pt = p.restrict(t)?;
        if let Some(r) = f.analytic_horizontal(t, &pt) {
            return r;
        }
    }
    horizontal_derivative_fd(f, p, t, scheme)
}

/// Finite-difference horizontal derivative: forward quotients on horizontal
/// extensions at offsets `j * grid_step`, `j = 1..=horizontal_steps`,
/// Richardson-extrapolated to offset zero.
///
/// All nodes must stay inside the observation window:
/// `t + horizontal_steps * grid_step <= horizon(p)`.
pub fn horizontal_derivative_fd(
    f: &dyn Functional,
    p: &PathPair,
    t: f64,
    scheme: &FDScheme,
) -> Result<f64> {
    scheme.validate()?;
    let pt = p.restrict(t)?;
    let room = p.last_index() - pt.last_index();
    let s = scheme.horizontal_steps as usize;
    if room < s {
        return Err(Error::Domain(format!(
            "horizontal finite differences need {s} grid steps beyond t={t}, but only {room} \
             remain before the horizon {}",
            p.horizon()
        )));
    }
    horizontal_quotients(f, &pt, s)
}

/// The quotient/extrapolation core, on an already-restricted pair, with the
/// node count already clamped by the caller.
pub(crate) fn horizontal_quotients(
    f: &dyn Functional,
    pt: &PathPair,
    steps: usize,
) -> Result<f64> {
    debug_assert!(steps >= 1);
    let t = pt.horizon();
    let base = f.evaluate(t, pt)?;
    let step = pt.step();
    let mut xs = Vec::with_capacity(steps);
    let mut qs = Vec::with_capacity(steps);
    for j in 1..=steps {
        let h = j as f64 * step;
        let extended = pt.extend_steps(j)?;
        let v = f.evaluate(extended.horizon(), &extended)?;
        xs.push(h);
        qs.push((v - base) / h);
    }
    Ok(extrapolate_to_zero(&xs, &qs))
}

/// Vertical gradient at `(t, p)`: closed form if available and not forced to
/// FD, otherwise [`vertical_gradient_fd`].
pub fn vertical_gradient(
    f: &dyn Functional,
    p: &PathPair,
    t: f64,
    scheme: &FDScheme,
) -> Result<Vec<f64>> {
    scheme.validate()?;
    let pt = p.restrict(t)?;
    if !scheme.force_fd {
        if let Some(r) = f.analytic_vertical(t, &pt) {
            return r;
        }
    }
    vertical_gradient_at(f, &pt, scheme.vertical_eps)
}

/// Central-difference vertical gradient with relative step
/// `vertical_eps * max(1, |x(t)|)`.
pub fn vertical_gradient_fd(
    f: &dyn Functional,
    p: &PathPair,
    t: f64,
    scheme: &FDScheme,
) -> Result<Vec<f64>> {
    scheme.validate()?;
    let pt = p.restrict(t)?;
    vertical_gradient_at(f, &pt, scheme.vertical_eps)
}

pub(crate) fn vertical_gradient_at(f: &dyn Functional, pt: &PathPair, eps: f64) -> Result<Vec<f64>> {
    let t = pt.horizon();
    let d = pt.dim();
    let h = vertical_step(eps, pt);
    let mut g = vec![0.0; d];
    let mut e = vec![0.0; d];
    for (c, gc) in g.iter_mut().enumerate() {
        e[c] = h;
        let up = f.evaluate(t, &pt.perturb_x(&e)?)?;
        e[c] = -h;
        let down = f.evaluate(t, &pt.perturb_x(&e)?)?;
        e[c] = 0.0;
        *gc = (up - down) / (2.0 * h);
    }
    Ok(g)
}

/// Vertical Hessian at `(t, p)`: closed form if available and not forced to
/// FD, otherwise [`vertical_hessian_fd`].
pub fn vertical_hessian(
    f: &dyn Functional,
    p: &PathPair,
    t: f64,
    scheme: &FDScheme,
) -> Result<SymMatrix> {
    scheme.validate()?;
    let pt = p.restrict(t)?;
    if !scheme.force_fd {
        if let Some(r) = f.analytic_vertical2(t, &pt) {
            return r;
        }
    }
    vertical_hessian_at(f, &pt, scheme)
}

/// Finite-difference vertical Hessian: central differences of the gradient
/// functional with relative step `hessian_eps * max(1, |x(t)|)`. The inner
/// gradient is the closed form when the functional has one, and a central
/// difference (step `vertical_eps`) otherwise.
pub fn vertical_hessian_fd(
    f: &dyn Functional,
    p: &PathPair,
    t: f64,
    scheme: &FDScheme,
) -> Result<SymMatrix> {
    scheme.validate()?;
    let pt = p.restrict(t)?;
    vertical_hessian_at(f, &pt, scheme)
}

fn gradient_for_hessian(f: &dyn Functional, pt: &PathPair, scheme: &FDScheme) -> Result<Vec<f64>> {
    if let Some(r) = f.analytic_vertical(pt.horizon(), pt) {
        return r;
    }
    vertical_gradient_at(f, pt, scheme.vertical_eps)
}

pub(crate) fn vertical_hessian_at(
    f: &dyn Functional,
    pt: &PathPair,
    scheme: &FDScheme,
) -> Result<SymMatrix> {
    let d = pt.dim();
    let h = vertical_step(scheme.hessian_eps, pt);
    let mut dense = vec![0.0; d * d];
    let mut e = vec![0.0; d];
    for c in 0..d {
        e[c] = h;
        let up = gradient_for_hessian(f, &pt.perturb_x(&e)?, scheme)?;
        e[c] = -h;
        let down = gradient_for_hessian(f, &pt.perturb_x(&e)?, scheme)?;
        e[c] = 0.0;
        for r in 0..d {
            dense[r * d + c] = (up[r] - down[r]) / (2.0 * h);
        }
    }
    Ok(SymMatrix::symmetrize(d, &dense))
}

/// Empirical horizontal Lipschitz constant of `F` over the window
/// `[t1, t2]`: the largest quotient
/// `|F_{t2}(extended) - F_{t1}(q)| / (t2 - t1)` over the restriction of `p`
/// to `t1` and a seeded family of endpoint perturbations of it.
pub fn horizontal_lipschitz_probe(
    f: &dyn Functional,
    p: &PathPair,
    t1: f64,
    t2: f64,
    perturbations: u32,
    seed: u64,
) -> Result<f64> {
    let i1 = p.x().index_of(t1)?;
    let i2 = p.x().index_of(t2)?;
    if i2 <= i1 {
        return Err(Error::Domain(format!(
            "probe window must satisfy t1 < t2, got [{t1}, {t2}]"
        )));
    }
    let base = p.restrict_index(i1)?;
    let gap = p.x().grid_time(i2) - p.x().grid_time(i1);
    let d = base.dim();
    let amp = 0.5 * (1.0 + norm2(base.x().value_at(i1)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(101 * 256);
    let mut worst: f64 = 0.0;
    for k in 0..=perturbations {
        let q = if k == 0 {
            base.clone()
        } else {
            let e: Vec<f64> = (0..d).map(|_| amp * (2.0 * rng.random::<f64>() - 1.0)).collect();
            base.perturb_x(&e)?
        };
        let a = f.evaluate(q.horizon(), &q)?;
        let ext = q.extend_steps(i2 - i1)?;
        let b = f.evaluate(ext.horizon(), &ext)?;
        worst = worst.max((b - a).abs() / gap);
    }
    Ok(worst)
}
