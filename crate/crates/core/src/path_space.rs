//! Cadlag paths on a uniform grid with an explicit jump registry, and pairs
//! of such paths carrying a positive-semidefinite matrix companion.
//!
//! # Representation
//!
//! A path on `[0, T]` is stored as right-limit samples at the grid points
//! `t_j = j * step`, plus a registry of jumps `(t_j, delta)` with
//! `delta = x(t_j) - x(t_j-)`. Evaluation is piecewise constant and right
//! continuous: `eval(t)` returns the sample at the largest grid point `<= t`.
//!
//! The registry is the definition of discontinuity. At a registry time the
//! left limit is `value - delta`; at every other time the path counts as
//! continuous there, and the sample-to-sample change is continuous variation.
//! This convention keeps stopped paths of continuous data equal to plain
//! restrictions and makes the jump bookkeeping of the variation and
//! change-of-variable modules exact instead of grid-blurred.
//!
//! # Operations
//!
//! Restriction and stopping shorten the domain; horizontal extension freezes
//! the endpoint forward; vertical perturbation bumps the endpoint and records
//! the bump in the registry. The ordered sup-distance [`d_infty`] compares a
//! pair on `[0, t]` with a pair on `[0, t + h]`, `h >= 0`, by extending the
//! shorter pair and adding `h`.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::numeric::{frobenius_packed_diff, norm2, norm2_diff, packed_is_psd, packed_len};
use crate::quadratic_variation::Subdivision;

/// Relative tolerance used when snapping times onto the grid.
pub const SNAP_REL_TOL: f64 = 1e-9;

/// Tolerance for the positive-semidefiniteness of stored matrix samples.
pub const PSD_TOL: f64 = 1e-12;

/// A jump registered at a grid index.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpEntry {
    /// Grid index of the jump time.
    pub index: usize,
    /// Jump vector, `dim` entries: value minus left limit.
    pub delta: Vec<f64>,
}

/// Grid geometry shared by a family of paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub step: f64,
    pub n_points: usize,
}

impl GridSpec {
    pub fn last_index(&self) -> usize {
        self.n_points - 1
    }

    pub fn horizon(&self) -> f64 {
        self.step * self.last_index() as f64
    }
}

/// Right-continuous path with left limits on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CadlagPath {
    dim: usize,
    step: f64,
    /// Right-limit samples, `dim` entries per grid point.
    values: Vec<f64>,
    /// Sorted by index, at most one entry per index, no zero deltas.
    registry: Vec<JumpEntry>,
}

impl CadlagPath {
    /// Validating constructor.
    ///
    /// Zero jump deltas are dropped; duplicate or out-of-range registry
    /// indices, non-finite data, and shape mismatches are config errors.
    pub fn new(
        dim: usize,
        step: f64,
        values: Vec<f64>,
        mut registry: Vec<JumpEntry>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("path dimension must be at least 1".into()));
        }
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::Config(format!("grid step must be positive, got {step}")));
        }
        if values.is_empty() || values.len() % dim != 0 {
            return Err(Error::Config(format!(
                "sample buffer length {} is not a positive multiple of dim {dim}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite sample {bad}")));
        }
        let n_points = values.len() / dim;
        registry.retain(|e| e.delta.iter().any(|&d| d != 0.0));
        registry.sort_by_key(|e| e.index);
        for pair in registry.windows(2) {
            if pair[0].index == pair[1].index {
                return Err(Error::Config(format!(
                    "duplicate registry entry at index {}",
                    pair[0].index
                )));
            }
        }
        for e in &registry {
            if e.index >= n_points {
                return Err(Error::Config(format!(
                    "registry index {} beyond last grid index {}",
                    e.index,
                    n_points - 1
                )));
            }
            if e.delta.len() != dim {
                return Err(Error::Config(format!(
                    "registry delta at index {} has {} entries, expected {dim}",
                    e.index,
                    e.delta.len()
                )));
            }
            if e.delta.iter().any(|d| !d.is_finite()) {
                return Err(Error::Config(format!(
                    "non-finite registry delta at index {}",
                    e.index
                )));
            }
        }
        Ok(Self {
            dim,
            step,
            values,
            registry,
        })
    }

    /// Constant path.
    pub fn constant(dim: usize, step: f64, n_points: usize, value: &[f64]) -> Result<Self> {
        if value.len() != dim {
            return Err(Error::Config("constant value length must equal dim".into()));
        }
        let mut values = Vec::with_capacity(n_points * dim);
        for _ in 0..n_points {
            values.extend_from_slice(value);
        }
        Self::new(dim, step, values, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn n_points(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn last_index(&self) -> usize {
        self.n_points() - 1
    }

    /// Right endpoint of the domain.
    pub fn horizon(&self) -> f64 {
        self.grid_time(self.last_index())
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec {
            step: self.step,
            n_points: self.n_points(),
        }
    }

    pub fn grid_time(&self, index: usize) -> f64 {
        self.step * index as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn registry(&self) -> &[JumpEntry] {
        &self.registry
    }

    /// Sample at a grid index (the right limit there).
    pub fn value_at(&self, index: usize) -> &[f64] {
        &self.values[index * self.dim..(index + 1) * self.dim]
    }

    fn snap_tol_units(&self) -> f64 {
        SNAP_REL_TOL * self.horizon().max(1.0) / self.step
    }

    /// Grid index of a time that must sit on the grid (within snap tolerance).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let u = t / self.step;
        let j = u.round();
        if (u - j).abs() > self.snap_tol_units() {
            return Err(Error::Precision(format!(
                "time {t} is off the grid (step {}); snap it first",
                self.step
            )));
        }
        if j < 0.0 || j > self.last_index() as f64 {
            return Err(Error::Domain(format!(
                "time {t} outside [0, {}]",
                self.horizon()
            )));
        }
        Ok(j as usize)
    }

    /// Index of the cell containing `t`: largest grid point `<= t`, with
    /// times within snap tolerance of a grid point treated as on it.
    fn cell_of(&self, t: f64) -> Result<usize> {
        let tol_t = SNAP_REL_TOL * self.horizon().max(1.0);
        if !(t >= -tol_t) || !(t <= self.horizon() + tol_t) {
            return Err(Error::Domain(format!(
                "time {t} outside [0, {}]",
                self.horizon()
            )));
        }
        let u = t / self.step;
        let r = u.round();
        let j = if (u - r).abs() <= self.snap_tol_units() {
            r
        } else {
            u.floor()
        };
        Ok((j.max(0.0) as usize).min(self.last_index()))
    }

    /// Right-continuous evaluation at any time in `[0, horizon]`.
    pub fn eval(&self, t: f64) -> Result<&[f64]> {
        Ok(self.value_at(self.cell_of(t)?))
    }

    /// Registered jump at a grid index, if any.
    pub fn jump_at_index(&self, index: usize) -> Option<&[f64]> {
        self.registry
            .binary_search_by_key(&index, |e| e.index)
            .ok()
            .map(|k| self.registry[k].delta.as_slice())
    }

    /// Left limit at a grid index: `value - delta` at a registry time, the
    /// value itself elsewhere (the path counts as continuous there).
    pub fn left_limit_at_index(&self, index: usize) -> Vec<f64> {
        let v = self.value_at(index);
        match self.jump_at_index(index) {
            Some(delta) => v.iter().zip(delta).map(|(a, d)| a - d).collect(),
            None => v.to_vec(),
        }
    }

    /// Left limit at any time in `[0, horizon]`.
    ///
    /// Off-grid times fall inside a cell where the path is constant, so the
    /// left limit equals the value; `left_limit(0)` is the initial value
    /// unless a registry entry at 0 says otherwise.
    pub fn left_limit(&self, t: f64) -> Result<Vec<f64>> {
        let j = self.cell_of(t)?;
        let u = t / self.step;
        let on_grid = (u - j as f64).abs() <= self.snap_tol_units();
        if on_grid {
            Ok(self.left_limit_at_index(j))
        } else {
            Ok(self.value_at(j).to_vec())
        }
    }

    /// Restriction to `[0, t]`; `t` must sit on the grid.
    pub fn restrict(&self, t: f64) -> Result<CadlagPath> {
        self.restrict_index(self.index_of(t)?)
    }

    /// Restriction to `[0, t_j]` by grid index.
    pub fn restrict_index(&self, index: usize) -> Result<CadlagPath> {
        if index > self.last_index() {
            return Err(Error::Domain(format!(
                "restrict index {index} beyond last grid index {}",
                self.last_index()
            )));
        }
        let values = self.values[..(index + 1) * self.dim].to_vec();
        let registry = self
            .registry
            .iter()
            .take_while(|e| e.index <= index)
            .cloned()
            .collect();
        Ok(CadlagPath {
            dim: self.dim,
            step: self.step,
            values,
            registry,
        })
    }

    /// Path stopped before `t`: the restriction with the final value replaced
    /// by the left limit and the jump at `t` (if any) removed.
    ///
    /// For a path continuous at `t` this is exactly `restrict(t)`.
    pub fn stopped_before(&self, t: f64) -> Result<CadlagPath> {
        self.stopped_before_index(self.index_of(t)?)
    }

    /// Index-addressed form of [`stopped_before`](Self::stopped_before).
    pub fn stopped_before_index(&self, index: usize) -> Result<CadlagPath> {
        let mut r = self.restrict_index(index)?;
        if let Some(k) = r.registry.iter().position(|e| e.index == index) {
            let entry = r.registry.remove(k);
            let base = index * r.dim;
            for (c, d) in entry.delta.iter().enumerate() {
                r.values[base + c] -= d;
            }
        }
        Ok(r)
    }

    /// Horizontal extension: appends the endpoint value as a constant on
    /// `]t, t + h]`. `h` must be a nonnegative grid multiple.
    pub fn horizontal_extend(&self, h: f64) -> Result<CadlagPath> {
        if !(h >= 0.0) || !h.is_finite() {
            return Err(Error::Domain(format!("extension length must be >= 0, got {h}")));
        }
        let u = h / self.step;
        let k = u.round();
        if (u - k).abs() > self.snap_tol_units() {
            return Err(Error::Precision(format!(
                "extension length {h} is not a multiple of the grid step {}",
                self.step
            )));
        }
        self.extend_steps(k as usize)
    }

    /// Appends `k` grid cells of the frozen endpoint value.
    pub fn extend_steps(&self, k: usize) -> Result<CadlagPath> {
        let mut out = self.clone();
        let end = self.value_at(self.last_index()).to_vec();
        for _ in 0..k {
            out.values.extend_from_slice(&end);
        }
        Ok(out)
    }

    /// Vertical perturbation: bumps the endpoint by `e` and accumulates `e`
    /// into the registry entry at the endpoint (creating or removing it so
    /// that `value - left_limit` stays exact).
    ///
    /// Every earlier sample is bitwise unchanged.
    pub fn vertical_perturb(&self, e: &[f64]) -> Result<CadlagPath> {
        if e.len() != self.dim {
            return Err(Error::Config(format!(
                "perturbation has {} entries, path dim is {}",
                e.len(),
                self.dim
            )));
        }
        if e.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("non-finite perturbation".into()));
        }
        let mut out = self.clone();
        let last = out.last_index();
        let base = last * out.dim;
        for (c, &ec) in e.iter().enumerate() {
            out.values[base + c] += ec;
        }
        match out.registry.iter().position(|en| en.index == last) {
            Some(k) => {
                for (c, &ec) in e.iter().enumerate() {
                    out.registry[k].delta[c] += ec;
                }
                if out.registry[k].delta.iter().all(|&d| d == 0.0) {
                    out.registry.remove(k);
                }
            }
            None => {
                if e.iter().any(|&x| x != 0.0) {
                    out.registry.push(JumpEntry {
                        index: last,
                        delta: e.to_vec(),
                    });
                    out.registry.sort_by_key(|en| en.index);
                }
            }
        }
        Ok(out)
    }

    /// Max Euclidean distance between samples of two paths on the same grid.
    pub fn sup_diff(&self, other: &CadlagPath) -> Result<f64> {
        if self.dim != other.dim || self.step != other.step || self.n_points() != other.n_points()
        {
            return Err(Error::Config(
                "sup_diff requires identical grids and dimensions".into(),
            ));
        }
        let mut m: f64 = 0.0;
        for j in 0..self.n_points() {
            m = m.max(norm2_diff(self.value_at(j), other.value_at(j)));
        }
        Ok(m)
    }
}

/// Registered jumps of Euclidean size at least `threshold`, as
/// `(time, delta)` pairs in time order.
///
/// A zero threshold lists the whole registry; an infinite one lists nothing.
pub fn jumps(path: &CadlagPath, threshold: f64) -> Result<Vec<(f64, Vec<f64>)>> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::Config(format!(
            "jump threshold must be nonnegative, got {threshold}"
        )));
    }
    Ok(path
        .registry()
        .iter()
        .filter(|e| norm2(&e.delta) >= threshold)
        .map(|e| (path.grid_time(e.index), e.delta.clone()))
        .collect())
}

/// Largest two-point oscillation within a window `eta` that is not explained
/// by an interior registered jump.
///
/// For every ordered grid pair `s < u` with `u - s <= eta`, computes
/// `|x(u) - x(s)| - max{|delta| : registry time in (s, u]}` and returns the
/// maximum. For a path whose only discontinuities are its registry entries
/// this quantifies the uniform continuity of the remainder; it shrinks with
/// the grid for refinements of a fixed continuous-plus-jumps signal.
/// Exhaustive scan, O(points x window).
pub fn oscillation_beyond_jumps(path: &CadlagPath, eta: f64) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::Config("window must be positive".into()));
    }
    let w = (eta / path.step()).floor() as usize;
    let n = path.n_points();
    let mut worst = f64::NEG_INFINITY;
    for s in 0..n {
        let mut max_jump: f64 = 0.0;
        for u in s + 1..=(s + w).min(n - 1) {
            if let Some(d) = path.jump_at_index(u) {
                max_jump = max_jump.max(norm2(d));
            }
            let osc = norm2_diff(path.value_at(u), path.value_at(s));
            worst = worst.max(osc - max_jump);
        }
    }
    Ok(worst.max(0.0))
}

/// A path together with its positive-semidefinite matrix companion.
///
/// The companion `v` plays the role of a running covariance density; it is
/// stored as a path of packed upper-triangular symmetric matrices
/// (`d(d+1)/2` components for an `x` of dimension `d`) on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPair {
    x: CadlagPath,
    v: CadlagPath,
}

impl PathPair {
    /// Validating constructor: grids must match and every `v` sample must be
    /// positive semidefinite within [`PSD_TOL`].
    pub fn new(x: CadlagPath, v: CadlagPath) -> Result<Self> {
        if v.dim() != packed_len(x.dim()) {
            return Err(Error::Config(format!(
                "companion dimension {} does not match packed size {} for x dim {}",
                v.dim(),
                packed_len(x.dim()),
                x.dim()
            )));
        }
        if x.step() != v.step() || x.n_points() != v.n_points() {
            return Err(Error::Config(
                "path and companion must share the same grid".into(),
            ));
        }
        let d = x.dim();
        for j in 0..v.n_points() {
            if !packed_is_psd(v.value_at(j), d, PSD_TOL) {
                return Err(Error::Config(format!(
                    "companion sample at grid index {j} is not positive semidefinite"
                )));
            }
        }
        Ok(Self { x, v })
    }

    /// Constructor skipping the PSD scan; for internally built restrictions
    /// and snapshots whose samples are copies of already-validated data.
    pub(crate) fn new_unchecked(x: CadlagPath, v: CadlagPath) -> Self {
        debug_assert_eq!(v.dim(), packed_len(x.dim()));
        debug_assert_eq!(x.n_points(), v.n_points());
        Self { x, v }
    }

    /// Pair with a constant companion `scale * I` on the grid of `x`.
    pub fn with_constant_companion(x: CadlagPath, scale: f64) -> Result<Self> {
        if scale < 0.0 {
            return Err(Error::Config(format!(
                "constant companion scale must be >= 0, got {scale}"
            )));
        }
        let d = x.dim();
        let mut sample = vec![0.0; packed_len(d)];
        let mut k = 0;
        for i in 0..d {
            for j in i..d {
                sample[k] = if i == j { scale } else { 0.0 };
                k += 1;
            }
        }
        let v = CadlagPath::constant(packed_len(d), x.step(), x.n_points(), &sample)?;
        Ok(Self { x, v })
    }

    pub fn x(&self) -> &CadlagPath {
        &self.x
    }

    pub fn v(&self) -> &CadlagPath {
        &self.v
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    pub fn horizon(&self) -> f64 {
        self.x.horizon()
    }

    pub fn step(&self) -> f64 {
        self.x.step()
    }

    pub fn last_index(&self) -> usize {
        self.x.last_index()
    }

    pub fn restrict(&self, t: f64) -> Result<PathPair> {
        self.restrict_index(self.x.index_of(t)?)
    }

    pub fn restrict_index(&self, index: usize) -> Result<PathPair> {
        Ok(PathPair {
            x: self.x.restrict_index(index)?,
            v: self.v.restrict_index(index)?,
        })
    }

    /// Both components stopped before `t`.
    pub fn stopped_before(&self, t: f64) -> Result<PathPair> {
        self.stopped_before_index(self.x.index_of(t)?)
    }

    pub fn stopped_before_index(&self, index: usize) -> Result<PathPair> {
        Ok(PathPair {
            x: self.x.stopped_before_index(index)?,
            v: self.v.stopped_before_index(index)?,
        })
    }

    /// Horizontal extension of both components by `h`.
    pub fn horizontal_extend(&self, h: f64) -> Result<PathPair> {
        Ok(PathPair {
            x: self.x.horizontal_extend(h)?,
            v: self.v.horizontal_extend(h)?,
        })
    }

    pub(crate) fn extend_steps(&self, k: usize) -> Result<PathPair> {
        Ok(PathPair {
            x: self.x.extend_steps(k)?,
            v: self.v.extend_steps(k)?,
        })
    }

    /// Vertical perturbation of the `x` endpoint only; `v` is never perturbed.
    pub fn perturb_x(&self, e: &[f64]) -> Result<PathPair> {
        Ok(PathPair {
            x: self.x.vertical_perturb(e)?,
            v: self.v.clone(),
        })
    }
}

/// Ordered sup-distance between pairs with possibly different horizons.
///
/// Requires `horizon(q) >= horizon(p)`; with `h` the horizon gap, returns
/// `sup |x_ext - x'| + sup |v_ext - v'| + h`, where the extension freezes the
/// endpoint of `p` over the gap, the `x` suprema use the Euclidean norm and
/// the `v` suprema the Frobenius norm. The order of arguments matters: this
/// comparison is only defined against a pair reaching at least as far.
pub fn d_infty(p: &PathPair, q: &PathPair) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::Config("pairs must have the same dimension".into()));
    }
    if p.step() != q.step() {
        return Err(Error::Config("pairs must share the grid step".into()));
    }
    let np = p.x.n_points();
    let nq = q.x.n_points();
    if nq < np {
        return Err(Error::Domain(
            "d_infty(p, q) needs horizon(q) >= horizon(p); swap the arguments".into(),
        ));
    }
    let h = (nq - np) as f64 * p.step();
    let d = p.dim();
    let mut sup_x: f64 = 0.0;
    let mut sup_v: f64 = 0.0;
    for j in 0..nq {
        let jp = j.min(np - 1);
        sup_x = sup_x.max(norm2_diff(p.x.value_at(jp), q.x.value_at(j)));
        sup_v = sup_v.max(frobenius_packed_diff(p.v.value_at(jp), q.v.value_at(j), d));
    }
    Ok(sup_x + sup_v + h)
}

/// Left-endpoint step approximation of a path along a subdivision.
///
/// Returns the step path `sum h(t_i) 1_[t_i, t_{i+1})  +  h(t_k) 1_{t_k}`
/// realized on the master grid (empty registry; it is a diagnostic object)
/// together with the sup-norm error against the source samples.
pub fn step_approximation(path: &CadlagPath, sub: &Subdivision) -> Result<(CadlagPath, f64)> {
    let idx = sub.indices_for(&path.grid())?;
    let d = path.dim();
    let n = path.n_points();
    let mut values = vec![0.0; n * d];
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        let cell = path.value_at(a);
        for j in a..b {
            values[j * d..(j + 1) * d].copy_from_slice(cell);
        }
    }
    let last = *idx.last().expect("subdivision is never empty");
    values[last * d..(last + 1) * d].copy_from_slice(path.value_at(last));
    let step_path = CadlagPath::new(d, path.step(), values, Vec::new())?;
    let sup_error = path.sup_diff(&step_path)?;
    Ok((step_path, sup_error))
}

/// Digits that round-trip any f64 exactly.
pub(crate) fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a path as CSV: `#`-prefixed header lines, a `t,x1,...,xd` column
/// row, then one row per grid point in time order. A registry time is encoded
/// as a duplicated timestamp: first the left limit, then the value.
///
/// All numbers carry 17 significant digits, so values round-trip exactly;
/// jump sizes (reconstructed as value minus left limit) round-trip to within
/// one ulp.
pub fn write_path_csv<W: Write>(path: &CadlagPath, header: &[String], w: &mut W) -> Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    let d = path.dim();
    let mut cols = String::from("t");
    for c in 1..=d {
        cols.push_str(&format!(",x{c}"));
    }
    writeln!(w, "{cols}")?;
    let mut row = |t: f64, vals: &[f64]| -> Result<()> {
        let mut line = format_f64(t);
        for v in vals {
            line.push(',');
            line.push_str(&format_f64(*v));
        }
        writeln!(w, "{line}")?;
        Ok(())
    };
    for j in 0..path.n_points() {
        let t = path.grid_time(j);
        if path.jump_at_index(j).is_some() {
            row(t, &path.left_limit_at_index(j))?;
        }
        row(t, path.value_at(j))?;
    }
    Ok(())
}

/// Reads a path written by [`write_path_csv`]; also returns the header lines
/// (without the leading `# `).
///
/// Times must form a uniform grid starting at 0 (within snap tolerance of
/// `1e-9` relative); duplicated timestamps become registry entries.
pub fn read_path_csv<R: BufRead>(r: R) -> Result<(CadlagPath, Vec<String>)> {
    let mut header = Vec::new();
    let mut columns: Option<usize> = None;
    // (time, rows-at-time) in file order.
    let mut groups: Vec<(f64, Vec<Vec<f64>>)> = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            header.push(rest.trim_start().to_string());
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        match columns {
            None => {
                if fields.len() < 2 || fields[0] != "t" {
                    return Err(Error::Parse(format!(
                        "line {}: expected column header starting with 't', got {trimmed:?}",
                        lineno + 1
                    )));
                }
                columns = Some(fields.len());
            }
            Some(ncol) => {
                if fields.len() != ncol {
                    return Err(Error::Parse(format!(
                        "line {}: expected {ncol} fields, got {}",
                        lineno + 1,
                        fields.len()
                    )));
                }
                let mut nums = Vec::with_capacity(ncol);
                for f in &fields {
                    nums.push(f.trim().parse::<f64>().map_err(|e| {
                        Error::Parse(format!("line {}: bad number {f:?}: {e}", lineno + 1))
                    })?);
                }
                let t = nums[0];
                let vals = nums[1..].to_vec();
                match groups.last_mut() {
                    Some((gt, rows)) if *gt == t => rows.push(vals),
                    _ => groups.push((t, vec![vals])),
                }
            }
        }
    }
    let ncol = columns.ok_or_else(|| Error::Parse("no column header found".into()))?;
    let dim = ncol - 1;
    if groups.len() < 2 {
        return Err(Error::Parse("need at least two grid points".into()));
    }
    let horizon = groups.last().unwrap().0;
    if !(horizon > 0.0) {
        return Err(Error::Parse(format!("final time must be positive, got {horizon}")));
    }
    let m = groups.len() - 1;
    let step = horizon / m as f64;
    let tol = SNAP_REL_TOL * horizon.max(1.0);
    let mut values = Vec::with_capacity(groups.len() * dim);
    let mut registry = Vec::new();
    for (j, (t, rows)) in groups.iter().enumerate() {
        if (t - step * j as f64).abs() > tol {
            return Err(Error::Parse(format!(
                "time {t} is off the uniform grid (expected {})",
                step * j as f64
            )));
        }
        match rows.len() {
            1 => values.extend_from_slice(&rows[0]),
            2 => {
                let delta: Vec<f64> = rows[1].iter().zip(&rows[0]).map(|(v, l)| v - l).collect();
                registry.push(JumpEntry { index: j, delta });
                values.extend_from_slice(&rows[1]);
            }
            k => {
                return Err(Error::Parse(format!(
                    "time {t} appears {k} times; at most two rows (left limit, value) are allowed"
                )))
            }
        }
    }
    let path = CadlagPath::new(dim, step, values, registry)?;
    Ok((path, header))
}
