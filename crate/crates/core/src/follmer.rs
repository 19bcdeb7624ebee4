//! Föllmer integration along refining subdivisions and the pathwise
//! change-of-variable identity it closes.
//!
//! For a subdivision `0 = t_0 < ... < t_k = T` of the observation window, the
//! Föllmer integral of a gradient field against a path `x` is the limit of
//! the Riemann sums
//!
//! ```text
//!     Σ_i ⟨ ∇F(frame_i), x(t_{i+1}) − x(t_i) ⟩
//! ```
//!
//! where `frame_i` is a piecewise-constant snapshot of the history. Three
//! sampling conventions are supported:
//!
//! * **continuous** — earlier cells `[t_j, t_{j+1})` carry the *right*
//!   endpoint sample `x(t_{j+1})`, the frame's own endpoint carries the live
//!   value `x(t_i)`, and the jump registry is empty. This is the frame of the
//!   change-of-variable formula for continuous paths.
//! * **cadlag** — earlier cells carry the *left limits* `x(t_{j+1}−)`, the
//!   endpoint carries the live value `x(t_i)` (left limit plus the registered
//!   jump at `t_i`, when there is one), and the registry keeps the registered
//!   jumps at subdivision times up to `t_i`. Jumps the subdivision does not
//!   resolve are absorbed into the cell values as ordinary increments.
//! * **right** — the frame freezes the history at `t_i` and extends it
//!   horizontally to `t_{i+1}`, where the gradient is evaluated. This is the
//!   right-limit variant for continuous inputs; it carries no jump
//!   bookkeeping.
//!
//! The companion `v` is sampled at *left* endpoints in every mode: cells
//! carry `v(t_j)`, and the frame endpoint carries `v(t_{i-1})` (continuous
//! and cadlag; `v(0)` on the first interval) or `v(t_i)` (right).
//!
//! [`change_of_variable_report`] assembles, level by level, the pathwise
//! identity
//!
//! ```text
//!     F_T(x, v) − F_0(x_0, v_0)
//!         = ∫ 𝒟F dt + ½ ∫ tr(∇²F d[x]) + ∫ ∇F · dx + Σ jump compensations
//! ```
//!
//! with every integral realized at the requested subdivision: the time
//! integral as a left-endpoint quadrature, the trace term against discrete
//! quadratic-variation increments (with the squared registered jump at a
//! resolved subdivision time moved out of the trace and into the jump term in
//! cadlag mode), and the Föllmer term as above. The residual measures how far
//! the identity is from closing at that level; it shrinks as levels refine
//! for functionals with the required regularity, and is zero up to roundoff
//! at every level for functionals whose second-order expansion is exact.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use crate::derivatives::{
    horizontal_quotients, vertical_gradient_at, vertical_hessian_at, FDScheme,
};
use crate::error::{Error, Result};
use crate::functionals::Functional;
use crate::numeric::{norm2, CompensatedSum};
use crate::path_space::{CadlagPath, JumpEntry, PathPair};
use crate::quadratic_variation::{
    pair_jump_magnitude, subdivision_for, Subdivision, SubdivisionScheme,
};

/// Sampling convention for approximants and Föllmer frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Right-endpoint cells, empty registries; for continuous paths.
    Continuous,
    /// Left-limit cells plus the registered jumps the subdivision resolves.
    Cadlag,
    /// History frozen at the left endpoint and extended to the right one.
    Right,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Continuous => "continuous",
            Mode::Cadlag => "cadlag",
            Mode::Right => "right",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(Mode::Continuous),
            "cadlag" => Ok(Mode::Cadlag),
            "right" => Ok(Mode::Right),
            other => Err(Error::Config(format!(
                "unknown mode {other:?} (expected continuous|cadlag|right)"
            ))),
        }
    }
}

/// Cadlag mode only makes sense along subdivisions that resolve the
/// registered jumps; continuous and right modes take any scheme.
fn require_mode_scheme(mode: Mode, scheme: SubdivisionScheme) -> Result<()> {
    if mode == Mode::Cadlag && scheme == SubdivisionScheme::Dyadic {
        return Err(Error::Config(
            "cadlag mode requires a jump-aware subdivision scheme (jump or stopping); \
             a plain dyadic subdivision cannot resolve registered jumps"
                .into(),
        ));
    }
    Ok(())
}

/// Prefixes an error message with calling context, keeping the variant.
fn annotate(e: Error, ctx: &str) -> Error {
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

/// Cell layout of one subdivision and mode: the approximant samples realized
/// on the master grid, plus the registry subset the subdivision resolves.
/// The frame for an individual interval is a prefix of this layout with the
/// endpoint rewritten.
struct Frames<'a> {
    p: &'a PathPair,
    mode: Mode,
    idx: Vec<usize>,
    base_x: Vec<f64>,
    base_v: Vec<f64>,
    sub_registry: Vec<JumpEntry>,
}

impl<'a> Frames<'a> {
    fn new(p: &'a PathPair, sub: &Subdivision, mode: Mode) -> Result<Self> {
        require_mode_scheme(mode, sub.scheme())?;
        let idx = sub.indices_for(&p.x().grid())?;
        let (x, v) = (p.x(), p.v());
        let (d, pd) = (x.dim(), v.dim());
        let mut base_x = vec![0.0; x.n_points() * d];
        let mut base_v = vec![0.0; v.n_points() * pd];
        for w in idx.windows(2) {
            let (a, b) = (w[0], w[1]);
            let cell = match mode {
                Mode::Continuous => x.value_at(b).to_vec(),
                Mode::Cadlag => x.left_limit_at_index(b),
                Mode::Right => x.value_at(a).to_vec(),
            };
            for j in a..b {
                base_x[j * d..(j + 1) * d].copy_from_slice(&cell);
                base_v[j * pd..(j + 1) * pd].copy_from_slice(v.value_at(a));
            }
        }
        let last = x.last_index();
        base_x[last * d..].copy_from_slice(x.value_at(last));
        base_v[last * pd..].copy_from_slice(v.value_at(last));
        let sub_registry = x
            .registry()
            .iter()
            .filter(|e| idx.binary_search(&e.index).is_ok())
            .cloned()
            .collect();
        Ok(Self {
            p,
            mode,
            idx,
            base_x,
            base_v,
            sub_registry,
        })
    }

    /// Number of subdivision intervals.
    fn k(&self) -> usize {
        self.idx.len() - 1
    }

    /// Grid index at which the gradient for interval `i` is evaluated.
    fn gradient_index(&self, i: usize) -> usize {
        match self.mode {
            Mode::Continuous | Mode::Cadlag => self.idx[i],
            Mode::Right => self.idx[i + 1],
        }
    }

    fn gradient_time(&self, i: usize) -> f64 {
        self.p.x().grid_time(self.gradient_index(i))
    }

    /// The frame for interval `i`, with its horizon at the gradient time.
    fn frame(&self, i: usize) -> Result<PathPair> {
        let (x, v) = (self.p.x(), self.p.v());
        let (d, pd) = (x.dim(), v.dim());
        let end = self.gradient_index(i);
        let a = self.idx[i];
        let mut xs = self.base_x[..(end + 1) * d].to_vec();
        xs[end * d..].copy_from_slice(x.value_at(a));
        let mut vs = self.base_v[..(end + 1) * pd].to_vec();
        let v_end = match self.mode {
            Mode::Continuous | Mode::Cadlag => self.idx[i.saturating_sub(1)],
            Mode::Right => a,
        };
        vs[end * pd..].copy_from_slice(v.value_at(v_end));
        let registry = match self.mode {
            Mode::Cadlag => self
                .sub_registry
                .iter()
                .filter(|e| e.index <= end)
                .cloned()
                .collect(),
            Mode::Continuous | Mode::Right => Vec::new(),
        };
        let x_frame = CadlagPath::new(d, x.step(), xs, registry)?;
        let v_frame = CadlagPath::new(pd, v.step(), vs, Vec::new())?;
        Ok(PathPair::new_unchecked(x_frame, v_frame))
    }
}

/// Piecewise-constant approximants of a pair along a subdivision, realized on
/// the master grid.
#[derive(Debug, Clone)]
pub struct ApproximantPair {
    /// Step approximant of `x`; its registry records the approximant's own
    /// step discontinuities at subdivision times, nothing else.
    pub x_n: CadlagPath,
    /// Left-endpoint step approximant of `v` (left endpoints in every mode).
    pub v_n: CadlagPath,
    /// Subdivision level.
    pub level: u32,
    /// Sampling convention used for the cells of `x_n`.
    pub mode: Mode,
    /// The subdivision the approximants were built along.
    pub subdivision: Subdivision,
    /// `sup_t |x_n(t) − x(t)|_2` over the master grid.
    pub sup_error_x: f64,
    /// `sup_t |v_n(t) − v(t)|_F` over the master grid.
    pub sup_error_v: f64,
}

/// Builds the step approximants of `p` along `sub`.
///
/// Cell values by mode: right-endpoint samples (`continuous`), left limits at
/// the right endpoint (`cadlag`), left-endpoint samples (`right`); the
/// horizon keeps the exact sample `x(T)`, and the companion always takes left
/// endpoints. Cadlag mode rejects plain dyadic subdivisions (config error):
/// the left-limit convention is only consistent when the subdivision resolves
/// the registered jumps.
pub fn build_approximants(p: &PathPair, sub: &Subdivision, mode: Mode) -> Result<ApproximantPair> {
    let frames = Frames::new(p, sub, mode)?;
    let x_n = realize(&frames.base_x, p.dim(), p.step(), &frames.idx)?;
    let v_n = realize(&frames.base_v, p.v().dim(), p.step(), &frames.idx)?;
    let sup_error_x = p.x().sup_diff(&x_n)?;
    let sup_error_v = p.v().sup_diff(&v_n)?;
    Ok(ApproximantPair {
        x_n,
        v_n,
        level: sub.level(),
        mode,
        subdivision: sub.clone(),
        sup_error_x,
        sup_error_v,
    })
}

/// Turns a cell-value layout into a path whose registry records the step
/// discontinuities at subdivision times (zero steps are dropped by the
/// constructor).
fn realize(base: &[f64], dim: usize, step: f64, idx: &[usize]) -> Result<CadlagPath> {
    let mut registry = Vec::with_capacity(idx.len() - 1);
    for &j in &idx[1..] {
        let delta = (0..dim)
            .map(|c| base[j * dim + c] - base[(j - 1) * dim + c])
            .collect();
        registry.push(JumpEntry { index: j, delta });
    }
    CadlagPath::new(dim, step, base.to_vec(), registry)
}

/// Vertical gradient at a frame: the closed form when requested and
/// available, central finite differences otherwise.
fn frame_gradient(
    f: &dyn Functional,
    t: f64,
    frame: &PathPair,
    use_analytic: bool,
) -> Result<Vec<f64>> {
    if use_analytic {
        if let Some(r) = f.analytic_vertical(t, frame) {
            return r;
        }
    }
    vertical_gradient_at(f, frame, FDScheme::default().vertical_eps)
}

fn follmer_core(f: &dyn Functional, frames: &Frames<'_>, use_analytic: bool) -> Result<f64> {
    let x = frames.p.x();
    let d = x.dim();
    let mut acc = CompensatedSum::new();
    for i in 0..frames.k() {
        let frame = frames.frame(i)?;
        let t = frames.gradient_time(i);
        let g = frame_gradient(f, t, &frame, use_analytic)
            .map_err(|e| annotate(e, &format!("gradient at subdivision interval {i} (t = {t})")))?;
        let (xa, xb) = (x.value_at(frames.idx[i]), x.value_at(frames.idx[i + 1]));
        let mut dot = 0.0;
        for c in 0..d {
            dot += g[c] * (xb[c] - xa[c]);
        }
        acc.add(dot);
    }
    Ok(acc.total())
}

/// The Föllmer sum `Σ_i ⟨∇F(frame_i), x(t_{i+1}) − x(t_i)⟩` along `sub`.
///
/// `use_analytic` selects the closed-form gradient where the functional has
/// one; otherwise — or when there is none — central finite differences are
/// used. A failed gradient reports the interval it occurred at.
pub fn follmer_sum(
    f: &dyn Functional,
    p: &PathPair,
    sub: &Subdivision,
    mode: Mode,
    use_analytic: bool,
) -> Result<f64> {
    let frames = Frames::new(p, sub, mode)?;
    follmer_core(f, &frames, use_analytic)
}

/// Grid indices in `(0, T]` where `x` or `v` registers a jump, merged.
fn registered_indices(p: &PathPair) -> Vec<usize> {
    let mut out: Vec<usize> = p
        .x()
        .registry()
        .iter()
        .chain(p.v().registry().iter())
        .map(|e| e.index)
        .filter(|&u| u > 0)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Second-order compensation of the registered jump at grid index `u`:
/// `F_u(x_u, v_u) − F_u(x_{u−}, v_{u−}) − ⟨∇F_u(x_{u−}, v_{u−}), Δx(u)⟩`,
/// with the left limits taken by stopping the pair right before `u`.
fn compensation_at(f: &dyn Functional, p: &PathPair, u: usize) -> Result<f64> {
    let t = p.x().grid_time(u);
    let at = p.restrict_index(u)?;
    let before = p.stopped_before_index(u)?;
    let f_at = f.evaluate(t, &at)?;
    let f_before = f.evaluate(t, &before)?;
    let g = frame_gradient(f, t, &before, true)?;
    let mut corr = 0.0;
    if let Some(delta) = p.x().jump_at_index(u) {
        for c in 0..p.dim() {
            corr += g[c] * delta[c];
        }
    }
    Ok(f_at - f_before - corr)
}

/// Sum of the second-order jump compensations over every registered jump of
/// magnitude at least `threshold` — measured as the larger of `|Δx|_2` and
/// `|Δv|_F`, the same gauge jump-augmented subdivisions use. Jumps at the
/// time origin are excluded: no increment completes there.
///
/// The compensation vanishes identically for functionals that respond
/// exactly linearly to their jumps (the Doléans exponential, where
/// `ΔF = F_− Δx`), and equals the squared jump for the squared-endpoint
/// cylinder.
pub fn jump_compensation(f: &dyn Functional, p: &PathPair, threshold: f64) -> Result<f64> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::Config(format!(
            "jump threshold must be a nonnegative number, got {threshold}"
        )));
    }
    let mut acc = CompensatedSum::new();
    for u in registered_indices(p) {
        if pair_jump_magnitude(p, u) < threshold {
            continue;
        }
        let term = compensation_at(f, p, u).map_err(|e| {
            annotate(
                e,
                &format!("jump compensation at t = {}", p.x().grid_time(u)),
            )
        })?;
        acc.add(term);
    }
    Ok(acc.total())
}

/// One level of the change-of-variable identity, term by term.
///
/// [`residual`](CovReport::residual) recomputes
/// `lhs − (horizontal + trace + föllmer + jumps)` from the stored terms;
/// no total is cached.
#[derive(Debug, Clone)]
pub struct CovReport {
    pub level: u32,
    /// Left-endpoint quadrature `Σ_i 𝒟F(t_i) h_i` of the horizontal
    /// derivative.
    pub term_horizontal: f64,
    /// `½ Σ_i tr(∇²F · M_i)` against discrete quadratic-variation increments;
    /// in cadlag mode the squared registered jump at a resolved right
    /// endpoint is removed from `M_i` (it belongs to `term_jumps`).
    pub term_trace: f64,
    /// The Föllmer sum at this level.
    pub term_follmer: f64,
    /// Second-order jump compensations at resolved subdivision times
    /// (cadlag mode; zero otherwise).
    pub term_jumps: f64,
    /// `F_T(x, v) − F_0(x_0, v_0)`.
    pub lhs: f64,
    /// First-order bound on the identity error contributed by registered
    /// x-jumps the subdivision does not resolve:
    /// `½ · sup_i |∇²F| · Σ_unresolved |Δx|²`. Zero when every jump is
    /// resolved, and always zero outside cadlag mode.
    pub small_jump_bound: f64,
}

impl CovReport {
    /// How far the identity is from closing at this level.
    pub fn residual(&self) -> f64 {
        self.lhs - (self.term_horizontal + self.term_trace + self.term_follmer + self.term_jumps)
    }
}

/// Per-level outcome of [`change_of_variable_report`]: a failed level keeps
/// its diagnostics without aborting the sweep.
#[derive(Debug)]
pub struct LevelOutcome {
    pub level: u32,
    pub report: Result<CovReport>,
}

/// Assembles the change-of-variable identity level by level.
///
/// For each level, a subdivision of the requested scheme is built and every
/// term is realized along it; a level that fails — say, finer than the master
/// grid — is recorded as an error without aborting the others. Mode/scheme
/// compatibility and the endpoint values `F_T`, `F_0` are validated up front.
/// Closed-form derivatives are used where the functional has them, finite
/// differences (with forward steps clamped to the room left before the
/// horizon) otherwise.
pub fn change_of_variable_report(
    f: &dyn Functional,
    p: &PathPair,
    levels: RangeInclusive<u32>,
    scheme: SubdivisionScheme,
    mode: Mode,
) -> Result<Vec<LevelOutcome>> {
    require_mode_scheme(mode, scheme)?;
    let f_end = f
        .evaluate(p.horizon(), p)
        .map_err(|e| annotate(e, "evaluating F at the horizon"))?;
    let p0 = p.restrict_index(0)?;
    let f_start = f
        .evaluate(0.0, &p0)
        .map_err(|e| annotate(e, "evaluating F at t = 0"))?;
    let lhs = f_end - f_start;
    Ok(levels
        .map(|level| LevelOutcome {
            level,
            report: level_report(f, p, level, scheme, mode, lhs),
        })
        .collect())
}

fn level_report(
    f: &dyn Functional,
    p: &PathPair,
    level: u32,
    scheme: SubdivisionScheme,
    mode: Mode,
    lhs: f64,
) -> Result<CovReport> {
    let sub = subdivision_for(scheme, p, level)?;
    let frames = Frames::new(p, &sub, mode)?;
    let fd = FDScheme::default();
    let x = p.x();
    let d = x.dim();
    let mut horizontal = CompensatedSum::new();
    let mut trace = CompensatedSum::new();
    let mut hess_sup: f64 = 0.0;
    for i in 0..frames.k() {
        let (a, b) = (frames.idx[i], frames.idx[i + 1]);
        let t_a = x.grid_time(a);
        let h_i = x.grid_time(b) - t_a;
        let arg = match mode {
            Mode::Continuous | Mode::Right => p.restrict_index(a)?,
            Mode::Cadlag => p.stopped_before_index(a)?,
        };
        let dt = match f.analytic_horizontal(t_a, &arg) {
            Some(r) => r,
            None => {
                let steps = (fd.horizontal_steps as usize).min(x.last_index() - a);
                horizontal_quotients(f, &arg, steps)
            }
        }
        .map_err(|e| {
            annotate(
                e,
                &format!("horizontal derivative at subdivision interval {i} (t = {t_a})"),
            )
        })?;
        horizontal.add(dt * h_i);
        let hess = match f.analytic_vertical2(t_a, &arg) {
            Some(r) => r,
            None => vertical_hessian_at(f, &arg, &fd),
        }
        .map_err(|e| {
            annotate(
                e,
                &format!("second vertical derivative at subdivision interval {i} (t = {t_a})"),
            )
        })?;
        hess_sup = hess_sup.max(hess.max_abs());
        let (xa, xb) = (x.value_at(a), x.value_at(b));
        let delta: Vec<f64> = (0..d).map(|c| xb[c] - xa[c]).collect();
        let mut q = hess.quadratic_form(&delta);
        if mode == Mode::Cadlag {
            if let Some(jump) = x.jump_at_index(b) {
                q -= hess.quadratic_form(jump);
            }
        }
        trace.add(0.5 * q);
    }
    let term_follmer = follmer_core(f, &frames, true)?;
    let mut jumps = CompensatedSum::new();
    let mut unresolved = 0.0;
    if mode == Mode::Cadlag {
        for u in registered_indices(p) {
            if frames.idx.binary_search(&u).is_err() {
                continue;
            }
            let term = compensation_at(f, p, u)
                .map_err(|e| annotate(e, &format!("jump term at t = {}", x.grid_time(u))))?;
            jumps.add(term);
        }
        for e in x.registry() {
            if e.index > 0 && frames.idx.binary_search(&e.index).is_err() {
                let m = norm2(&e.delta);
                unresolved += m * m;
            }
        }
    }
    Ok(CovReport {
        level,
        term_horizontal: horizontal.total(),
        term_trace: trace.total(),
        term_follmer,
        term_jumps: jumps.total(),
        lhs,
        small_jump_bound: 0.5 * hess_sup * unresolved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{Cylinder, Doleans, QuadraticCylinder};
    use crate::path_space::{CadlagPath, JumpEntry, PathPair};
    use crate::quadratic_variation::{subdivision_for, SubdivisionScheme};

    fn grid(depth: u32) -> (f64, usize) {
        (1.0 / (1u64 << depth) as f64, (1usize << depth) + 1)
    }

    fn pair_from(values: Vec<f64>, registry: Vec<JumpEntry>, depth: u32) -> PathPair {
        let (step, n) = grid(depth);
        assert_eq!(values.len(), n);
        let x = CadlagPath::new(1, step, values, registry).unwrap();
        PathPair::with_constant_companion(x, 0.0).unwrap()
    }

    fn linear_pair(depth: u32) -> PathPair {
        let (step, n) = grid(depth);
        pair_from((0..n).map(|j| j as f64 * step).collect(), Vec::new(), depth)
    }

    fn wiggly_pair(depth: u32) -> PathPair {
        let (step, n) = grid(depth);
        let values = (0..n)
            .map(|j| {
                let t = j as f64 * step;
                0.4 * (6.0 * t).sin() + 0.3 * t
            })
            .collect();
        pair_from(values, Vec::new(), depth)
    }

    fn step_pair(depth: u32, jump_index: usize, a: f64) -> PathPair {
        let (_, n) = grid(depth);
        let values = (0..n)
            .map(|j| if j >= jump_index { a } else { 0.0 })
            .collect();
        pair_from(
            values,
            vec![JumpEntry {
                index: jump_index,
                delta: vec![a],
            }],
            depth,
        )
    }

    fn sub(scheme: SubdivisionScheme, p: &PathPair, level: u32) -> Subdivision {
        subdivision_for(scheme, p, level).unwrap()
    }

    #[test]
    fn linear_level_one_approximant_matches_the_worked_cells() {
        let (step, n) = grid(2);
        let samples: Vec<f64> = (0..n).map(|j| j as f64 * step).collect();
        let x = CadlagPath::new(1, step, samples.clone(), Vec::new()).unwrap();
        let v = CadlagPath::new(1, step, samples, Vec::new()).unwrap();
        let p = PathPair::new(x, v).unwrap();
        let s = sub(SubdivisionScheme::Dyadic, &p, 1);
        let ap = build_approximants(&p, &s, Mode::Continuous).unwrap();
        assert_eq!(ap.x_n.values(), &[0.5, 0.5, 1.0, 1.0, 1.0]);
        assert_eq!(ap.x_n.registry().len(), 1);
        assert_eq!(ap.x_n.registry()[0].index, 2);
        assert_eq!(ap.x_n.registry()[0].delta, vec![0.5]);
        assert_eq!(ap.sup_error_x, 0.5);
        // the companion takes left endpoints
        assert_eq!(ap.v_n.values(), &[0.0, 0.0, 0.5, 0.5, 1.0]);
        assert_eq!(ap.level, 1);
        assert_eq!(ap.subdivision.times(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_path_approximants_reproduce_the_path() {
        let (step, n) = grid(3);
        let x = CadlagPath::constant(2, step, n, &[1.25, -0.5]).unwrap();
        let p = PathPair::with_constant_companion(x, 0.3).unwrap();
        for mode in [Mode::Continuous, Mode::Cadlag, Mode::Right] {
            let scheme = if mode == Mode::Cadlag {
                SubdivisionScheme::JumpAugmented
            } else {
                SubdivisionScheme::Dyadic
            };
            let ap = build_approximants(&p, &sub(scheme, &p, 2), mode).unwrap();
            assert_eq!(ap.x_n.values(), p.x().values());
            assert_eq!(ap.v_n.values(), p.v().values());
            assert!(ap.x_n.registry().is_empty());
            assert_eq!(ap.sup_error_x, 0.0);
            assert_eq!(ap.sup_error_v, 0.0);
        }
    }

    #[test]
    fn cadlag_cells_vanish_up_to_the_jump_and_register_it() {
        let p = step_pair(3, 4, 0.7);
        let s = sub(SubdivisionScheme::JumpAugmented, &p, 2);
        let ap = build_approximants(&p, &s, Mode::Cadlag).unwrap();
        // the step path is its own cadlag approximant: zero right up to the
        // jump time, the jump value from there on
        assert_eq!(ap.x_n.values(), p.x().values());
        assert_eq!(ap.x_n.registry().len(), 1);
        assert_eq!(ap.x_n.registry()[0].index, 4);
        assert_eq!(ap.x_n.registry()[0].delta, vec![0.7]);
        assert_eq!(ap.sup_error_x, 0.0);
    }

    #[test]
    fn cadlag_mode_requires_a_jump_aware_subdivision() {
        let f = QuadraticCylinder::new();
        let p = step_pair(3, 4, 0.7);
        let s = sub(SubdivisionScheme::Dyadic, &p, 2);
        let err = build_approximants(&p, &s, Mode::Cadlag).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        let err = follmer_sum(&f, &p, &s, Mode::Cadlag, true).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        let err =
            change_of_variable_report(&f, &p, 0..=2, SubdivisionScheme::Dyadic, Mode::Cadlag)
                .unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        // right mode takes jump-augmented subdivisions
        let s = sub(SubdivisionScheme::JumpAugmented, &p, 2);
        assert!(follmer_sum(&f, &p, &s, Mode::Right, true).is_ok());
    }

    #[test]
    fn unit_gradient_telescopes_to_the_endpoint_increment() {
        let f = Cylinder::new("x").unwrap();
        let p = wiggly_pair(4);
        let want = p.x().value_at(p.last_index())[0] - p.x().value_at(0)[0];
        for level in 0..=4 {
            let s = sub(SubdivisionScheme::Dyadic, &p, level);
            for mode in [Mode::Continuous, Mode::Right] {
                let got = follmer_sum(&f, &p, &s, mode, true).unwrap();
                assert!(
                    (got - want).abs() <= 1e-15,
                    "level {level} {mode}: {got} vs {want}"
                );
            }
        }
        // cadlag mode telescopes across jumps too
        let p = step_pair(4, 8, 0.7);
        for level in 1..=4 {
            let s = sub(SubdivisionScheme::JumpAugmented, &p, level);
            let got = follmer_sum(&f, &p, &s, Mode::Cadlag, true).unwrap();
            assert!((got - 0.7).abs() <= 1e-15, "level {level}: {got}");
        }
    }

    #[test]
    fn quadratic_on_the_identity_path_sums_to_one_minus_two_to_minus_level() {
        let f = QuadraticCylinder::new();
        let p = linear_pair(6);
        for level in 0..=6u32 {
            let s = sub(SubdivisionScheme::Dyadic, &p, level);
            let want = 1.0 - 0.5f64.powi(level as i32);
            assert_eq!(follmer_sum(&f, &p, &s, Mode::Continuous, true).unwrap(), want);
            assert_eq!(follmer_sum(&f, &p, &s, Mode::Right, true).unwrap(), want);
        }
    }

    #[test]
    fn pure_jump_quadratic_sum_vanishes_at_every_level() {
        let f = QuadraticCylinder::new();
        let p = step_pair(4, 8, 0.8);
        for level in 1..=4 {
            let s = sub(SubdivisionScheme::JumpAugmented, &p, level);
            // the only nonzero increment pairs with a zero left-limit gradient
            assert_eq!(follmer_sum(&f, &p, &s, Mode::Cadlag, true).unwrap(), 0.0);
        }
    }

    #[test]
    fn finite_difference_gradients_track_the_closed_form() {
        let f = QuadraticCylinder::new();
        let p = wiggly_pair(4);
        let s = sub(SubdivisionScheme::Dyadic, &p, 3);
        let exact = follmer_sum(&f, &p, &s, Mode::Continuous, true).unwrap();
        let fd = follmer_sum(&f, &p, &s, Mode::Continuous, false).unwrap();
        assert!(
            (fd - exact).abs() <= 1e-9 * (1.0 + exact.abs()),
            "{fd} vs {exact}"
        );
    }

    #[test]
    fn jump_compensation_worked_values() {
        let f = QuadraticCylinder::new();
        // no registered jumps: the sum is empty
        assert_eq!(jump_compensation(&f, &linear_pair(3), 0.0).unwrap(), 0.0);
        // single jump of size a from a zero left limit: exactly a^2
        let a = 0.8;
        let p = step_pair(4, 8, a);
        assert_eq!(jump_compensation(&f, &p, 0.0).unwrap(), a * a);
        // the Doléans exponential responds exactly linearly to its jumps
        let c = jump_compensation(&Doleans::new(), &p, 0.0).unwrap();
        assert!(c.abs() <= 1e-12, "{c}");
        // thresholding keeps only the large jumps
        let (_, n) = grid(4);
        let mut values = vec![0.0; n];
        for (j, v) in values.iter_mut().enumerate() {
            if j >= 4 {
                *v += 0.3;
            }
            if j >= 12 {
                *v += 0.05;
            }
        }
        let q = pair_from(
            values,
            vec![
                JumpEntry {
                    index: 4,
                    delta: vec![0.3],
                },
                JumpEntry {
                    index: 12,
                    delta: vec![0.05],
                },
            ],
            4,
        );
        let all = jump_compensation(&f, &q, 0.0).unwrap();
        assert!((all - (0.3 * 0.3 + 0.05 * 0.05)).abs() <= 1e-15, "{all}");
        assert_eq!(jump_compensation(&f, &q, 0.1).unwrap(), 0.3 * 0.3);
        // bad thresholds are config errors
        assert!(matches!(
            jump_compensation(&f, &q, -1.0).unwrap_err(),
            Error::Config(_)
        ));
    }

    /// Identity path plus jumps 0.3 at t = 1/4 (dyadic from level 2) and
    /// -0.2 at t = 19/32 (dyadic only at level 5).
    fn two_jump_pair(depth: u32) -> PathPair {
        let (step, n) = grid(depth);
        assert!(depth >= 5);
        let (i1, i2) = (n / 4, 19 * (n - 1) / 32);
        let values = (0..n)
            .map(|j| {
                let mut v = j as f64 * step;
                if j >= i1 {
                    v += 0.3;
                }
                if j >= i2 {
                    v -= 0.2;
                }
                v
            })
            .collect();
        pair_from(
            values,
            vec![
                JumpEntry {
                    index: i1,
                    delta: vec![0.3],
                },
                JumpEntry {
                    index: i2,
                    delta: vec![-0.2],
                },
            ],
            depth,
        )
    }

    #[test]
    fn quadratic_reports_close_at_machine_precision() {
        let f = QuadraticCylinder::new();
        let p = wiggly_pair(5);
        let runs =
            change_of_variable_report(&f, &p, 0..=5, SubdivisionScheme::Dyadic, Mode::Continuous)
                .unwrap();
        assert_eq!(runs.len(), 6);
        for run in &runs {
            let r = run.report.as_ref().unwrap();
            assert_eq!(r.level, run.level);
            assert!(
                r.residual().abs() <= 1e-12 * (1.0 + r.lhs.abs()),
                "level {}: residual {}",
                run.level,
                r.residual()
            );
            assert_eq!(r.term_jumps, 0.0);
            assert_eq!(r.small_jump_bound, 0.0);
        }

        let q = two_jump_pair(5);
        let runs = change_of_variable_report(
            &f,
            &q,
            0..=5,
            SubdivisionScheme::JumpAugmented,
            Mode::Cadlag,
        )
        .unwrap();
        for run in &runs {
            let r = run.report.as_ref().unwrap();
            assert!(
                r.residual().abs() <= 1e-12 * (1.0 + r.lhs.abs()),
                "level {}: residual {}",
                run.level,
                r.residual()
            );
        }
        // at level 4 only the first jump sits on the subdivision (19/32 is
        // not a level-4 dyadic and 0.2 is below the 1/4 threshold); at level
        // 5 both do, and each contributes its squared size
        let r4 = runs[4].report.as_ref().unwrap();
        assert!((r4.term_jumps - 0.3 * 0.3).abs() <= 1e-15, "{}", r4.term_jumps);
        assert!(
            (r4.small_jump_bound - 0.2 * 0.2).abs() <= 1e-15,
            "{}",
            r4.small_jump_bound
        );
        let r5 = runs[5].report.as_ref().unwrap();
        assert!(
            (r5.term_jumps - (0.3 * 0.3 + 0.2 * 0.2)).abs() <= 1e-15,
            "{}",
            r5.term_jumps
        );
        assert_eq!(r5.small_jump_bound, 0.0);
    }

    #[test]
    fn time_cylinder_reports_a_pure_horizontal_term() {
        let f = Cylinder::new("t").unwrap();
        let p = wiggly_pair(4);
        let runs =
            change_of_variable_report(&f, &p, 0..=4, SubdivisionScheme::Dyadic, Mode::Continuous)
                .unwrap();
        for run in &runs {
            let r = run.report.as_ref().unwrap();
            assert_eq!(r.term_horizontal, 1.0);
            assert_eq!(r.term_trace, 0.0);
            assert_eq!(r.term_follmer, 0.0);
            assert_eq!(r.term_jumps, 0.0);
            assert_eq!(r.lhs, 1.0);
            assert_eq!(r.residual(), 0.0);
        }
    }

    #[test]
    fn continuous_and_cadlag_reports_agree_exactly_on_continuous_paths() {
        let f = QuadraticCylinder::new();
        let p = wiggly_pair(4);
        let a =
            change_of_variable_report(&f, &p, 0..=4, SubdivisionScheme::Dyadic, Mode::Continuous)
                .unwrap();
        let b = change_of_variable_report(
            &f,
            &p,
            0..=4,
            SubdivisionScheme::JumpAugmented,
            Mode::Cadlag,
        )
        .unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            let ra = ra.report.as_ref().unwrap();
            let rb = rb.report.as_ref().unwrap();
            assert_eq!(ra.term_horizontal, rb.term_horizontal);
            assert_eq!(ra.term_trace, rb.term_trace);
            assert_eq!(ra.term_follmer, rb.term_follmer);
            assert_eq!(ra.term_jumps, rb.term_jumps);
            assert_eq!(ra.lhs, rb.lhs);
        }
    }

    #[test]
    fn too_fine_levels_fail_without_aborting_the_sweep() {
        let f = QuadraticCylinder::new();
        let p = wiggly_pair(3);
        let runs =
            change_of_variable_report(&f, &p, 0..=5, SubdivisionScheme::Dyadic, Mode::Continuous)
                .unwrap();
        assert_eq!(runs.len(), 6);
        for run in &runs {
            if run.level <= 3 {
                assert!(run.report.is_ok(), "level {}", run.level);
            } else {
                let err = run.report.as_ref().unwrap_err();
                assert!(matches!(err, Error::Domain(_)), "level {}: {err}", run.level);
            }
        }
    }

    #[test]
    fn mode_parsing_round_trips() {
        for (s, m) in [
            ("continuous", Mode::Continuous),
            ("cadlag", Mode::Cadlag),
            ("right", Mode::Right),
        ] {
            assert_eq!(s.parse::<Mode>().unwrap(), m);
            assert_eq!(m.to_string(), s);
        }
        assert!(matches!(
            "weak".parse::<Mode>().unwrap_err(),
            Error::Config(_)
        ));
    }
}
