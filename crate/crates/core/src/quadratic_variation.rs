//! Subdivision sequences and discrete quadratic variation.
//!
//! A [`Subdivision`] is an ordered set of times `0 = t_0 <= ... <= t_k = T`
//! produced by one of three refinement schemes:
//!
//! * **dyadic** — the `2^n + 1` times `i * T * 2^-n`;
//! * **jump-augmented** — a base subdivision united with every registry time
//!   whose jump magnitude is at least `1/n`;
//! * **stopping-time** — the recursion `tau_k = inf { u > tau_{k-1} : u is a
//!   level-N dyadic time, or the jump at u exceeds 1/N } /\ T`, which is
//!   provably the sorted union of dyadic times and super-threshold jump
//!   times; the implementation computes both forms and errors if they ever
//!   disagree. Note the strict inequality: a jump of size exactly `1/N` is
//!   excluded here but included by the jump-augmented scheme.
//!
//! The discrete quadratic variation along a subdivision is the curve
//! `t_m -> sum_{i<m} (x(t_{i+1}) - x(t_i))^2` per component: the square of an
//! increment lands at the increment's right endpoint, so the curve starts at
//! zero. Atoms are the squared registry jumps at subdivision times in
//! `(0, T]`; subtracting their running total from the curve gives the
//! continuous part. A jump straddled by a subdivision interval is not an
//! atom — its mass stays inside the straddling squared increment, exactly as
//! the discrete formula dictates.
//!
//! Cross-variation is computed as the direct outer-product sum and checked
//! against the polarization identity
//! `[x_i, x_j] = ([x_i + x_j] - [x_i] - [x_j]) / 2`, which must agree to
//! `1e-12` in exact-arithmetic terms.

use crate::error::{Error, Result};
use crate::numeric::{
    packed_frobenius, packed_index, packed_len, norm2, CompensatedSum, SymMatrix,
};
use crate::path_space::{CadlagPath, GridSpec, JumpEntry, PathPair, SNAP_REL_TOL};

/// Absolute tolerance for the polarization identity and the nonnegativity of
/// the continuous part; both are exact in exact arithmetic.
pub const QV_CONSISTENCY_TOL: f64 = 1e-12;

/// How a subdivision was constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubdivisionScheme {
    Dyadic,
    JumpAugmented,
    StoppingTime,
}

impl std::str::FromStr for SubdivisionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dyadic" => Ok(Self::Dyadic),
            "jump" => Ok(Self::JumpAugmented),
            "stopping" => Ok(Self::StoppingTime),
            other => Err(Error::Config(format!(
                "unknown subdivision scheme {other:?} (expected dyadic|jump|stopping)"
            ))),
        }
    }
}

/// Ordered times `0 = t_0 <= ... <= t_k = T` with the level and scheme that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Subdivision {
    level: u32,
    scheme: SubdivisionScheme,
    times: Vec<f64>,
}

impl Subdivision {
    fn from_times(level: u32, scheme: SubdivisionScheme, mut times: Vec<f64>) -> Result<Self> {
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("non-finite subdivision time".into()));
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        if times.len() < 2 || times[0] != 0.0 {
            return Err(Error::Config(
                "a subdivision needs at least the two pinned endpoints, starting at 0".into(),
            ));
        }
        Ok(Self {
            level,
            scheme,
            times,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn scheme(&self) -> SubdivisionScheme {
        self.scheme
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn n_intervals(&self) -> usize {
        self.times.len() - 1
    }

    /// Largest interval length.
    pub fn mesh(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Resolves the times onto a uniform grid as strictly increasing indices.
    ///
    /// Every time must sit on the grid within relative tolerance
    /// [`SNAP_REL_TOL`], and the last one must be the grid horizon. Times
    /// closer than the tolerance collapse to one index.
    pub fn indices_for(&self, grid: &GridSpec) -> Result<Vec<usize>> {
        let horizon = grid.horizon();
        let tol_units = SNAP_REL_TOL * horizon.max(1.0) / grid.step;
        let mut indices = Vec::with_capacity(self.times.len());
        for &t in &self.times {
            let u = t / grid.step;
            let j = u.round();
            if (u - j).abs() > tol_units || j < 0.0 || j > grid.last_index() as f64 {
                return Err(match self.scheme {
                    SubdivisionScheme::Dyadic | SubdivisionScheme::StoppingTime => {
                        Error::Domain(format!(
                            "subdivision level {} exceeds the grid resolution ({} cells)",
                            self.level,
                            grid.last_index()
                        ))
                    }
                    SubdivisionScheme::JumpAugmented => Error::Precision(format!(
                        "subdivision time {t} is off the grid (step {})",
                        grid.step
                    )),
                });
            }
            let j = j as usize;
            if indices.last() != Some(&j) {
                indices.push(j);
            }
        }
        if *indices.last().unwrap() != grid.last_index() {
            return Err(Error::Config(format!(
                "subdivision ends at {} but the grid horizon is {}",
                self.horizon(),
                horizon
            )));
        }
        Ok(indices)
    }
}

/// Dyadic subdivision of `[0, T]` at level `n`: the times `i * T * 2^-n`.
///
/// Whether `2^n` fits the consuming path's grid is checked when the
/// subdivision is resolved against that grid.
pub fn dyadic_subdivision(horizon: f64, level: u32) -> Result<Subdivision> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::Config(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if level > 30 {
        return Err(Error::Config(format!(
            "dyadic level {level} is beyond any supported grid"
        )));
    }
    let k = 1u64 << level;
    let times = (0..=k).map(|i| horizon * i as f64 / k as f64).collect();
    Subdivision::from_times(level, SubdivisionScheme::Dyadic, times)
}

/// Jump magnitude at a grid index of a pair: the larger of the Euclidean
/// x-jump and the Frobenius v-jump (zero where neither registry has an entry).
pub(crate) fn pair_jump_magnitude(p: &PathPair, index: usize) -> f64 {
    let jx = p.x().jump_at_index(index).map_or(0.0, norm2);
    let jv = p
        .v()
        .jump_at_index(index)
        .map_or(0.0, |d| packed_frobenius(d, p.dim()));
    jx.max(jv)
}

/// Base subdivision united with every registry time of `p` (in `x` or `v`)
/// whose jump magnitude is at least `1/n`. Level 0 keeps the base unchanged
/// (threshold infinity).
pub fn jump_augmented_subdivision(
    base: &Subdivision,
    p: &PathPair,
    level: u32,
) -> Result<Subdivision> {
    let threshold = 1.0 / level as f64;
    let mut times = base.times().to_vec();
    let mut seen: Vec<usize> = p.x().registry().iter().map(|e| e.index).collect();
    seen.extend(p.v().registry().iter().map(|e| e.index));
    seen.sort_unstable();
    seen.dedup();
    for index in seen {
        if pair_jump_magnitude(p, index) >= threshold {
            times.push(p.x().grid_time(index));
        }
    }
    Subdivision::from_times(level, SubdivisionScheme::JumpAugmented, times)
}

/// Stopping-time subdivision: the recursion
/// `tau_k = inf { u > tau_{k-1} : u dyadic at level N, or jump at u > 1/N }`,
/// capped at the horizon, computed over the grid and cross-checked against
/// its closed form (the sorted union); a mismatch is an internal
/// inconsistency.
pub fn stopping_time_subdivision(p: &PathPair, level: u32) -> Result<Subdivision> {
    let m = p.last_index();
    let k = 1usize
        .checked_shl(level)
        .filter(|&k| k <= m)
        .ok_or_else(|| {
            Error::Domain(format!(
                "stopping-time level {level} exceeds the grid resolution ({m} cells)"
            ))
        })?;
    if m % k != 0 {
        return Err(Error::Domain(format!(
            "grid with {m} cells does not refine dyadic level {level}"
        )));
    }
    let stride = m / k;
    let threshold = 1.0 / level as f64;

    let mut indices = vec![0usize];
    let mut current = 0usize;
    while current < m {
        let mut next = None;
        for u in current + 1..=m {
            if u % stride == 0 || pair_jump_magnitude(p, u) > threshold {
                next = Some(u);
                break;
            }
        }
        // The dyadic times include the horizon, so the infimum always exists;
        // the cap at the horizon is kept for parity with the definition.
        current = next.unwrap_or(m);
        indices.push(current);
    }

    let mut union: Vec<usize> = (0..=k).map(|i| i * stride).collect();
    for e in p.x().registry().iter().chain(p.v().registry().iter()) {
        if pair_jump_magnitude(p, e.index) > threshold {
            union.push(e.index);
        }
    }
    union.sort_unstable();
    union.dedup();
    if indices != union {
        return Err(Error::Inconsistency(
            "stopping-time recursion disagrees with its closed-form sorted union".into(),
        ));
    }

    let times = indices.iter().map(|&j| p.x().grid_time(j)).collect();
    Subdivision::from_times(level, SubdivisionScheme::StoppingTime, times)
}

/// Builds the level-`n` subdivision of the given scheme for a pair.
pub fn subdivision_for(scheme: SubdivisionScheme, p: &PathPair, level: u32) -> Result<Subdivision> {
    match scheme {
        SubdivisionScheme::Dyadic => dyadic_subdivision(p.horizon(), level),
        SubdivisionScheme::JumpAugmented => {
            let base = dyadic_subdivision(p.horizon(), level)?;
            jump_augmented_subdivision(&base, p, level)
        }
        SubdivisionScheme::StoppingTime => stopping_time_subdivision(p, level),
    }
}

/// A squared-jump atom sitting at a subdivision point.
#[derive(Debug, Clone, PartialEq)]
pub struct QVAtom {
    /// Subdivision position (index into the times of the measure).
    pub position: usize,
    pub time: f64,
    /// Squared jump per component (`dim` entries; packed length for the
    /// matrix-valued version).
    pub weights: Vec<f64>,
}

/// Discrete quadratic variation curve per scalar component, with its atoms
/// and continuous part.
#[derive(Debug, Clone)]
pub struct QVMeasure {
    level: u32,
    dim: usize,
    times: Vec<f64>,
    /// Flattened `(k+1) x dim`: component `c` at position `m` is
    /// `curve[m*dim + c]`.
    curve: Vec<f64>,
    atoms: Vec<QVAtom>,
    continuous: Vec<f64>,
}

impl QVMeasure {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Subdivision times the curve is sampled at.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn atoms(&self) -> &[QVAtom] {
        &self.atoms
    }

    /// Curve value of one component at a subdivision position.
    pub fn curve_at(&self, position: usize, component: usize) -> f64 {
        self.curve[position * self.dim + component]
    }

    /// Continuous part (curve minus accumulated atoms) of one component.
    pub fn continuous_at(&self, position: usize, component: usize) -> f64 {
        self.continuous[position * self.dim + component]
    }

    /// Curve value of one component at the horizon.
    pub fn total(&self, component: usize) -> f64 {
        self.curve_at(self.times.len() - 1, component)
    }

    /// Accumulated atomic mass of one component at the horizon.
    pub fn atomic_total(&self, component: usize) -> f64 {
        let mut s = CompensatedSum::new();
        for a in &self.atoms {
            s.add(a.weights[component]);
        }
        s.total()
    }
}

/// Discrete quadratic variation of each scalar component of `path` along
/// `sub`: squared increments accumulated at their right endpoints, atoms read
/// off the registry at subdivision times in `(0, T]`.
pub fn discrete_qv(path: &CadlagPath, sub: &Subdivision) -> Result<QVMeasure> {
    let idx = sub.indices_for(&path.grid())?;
    let d = path.dim();
    let k = idx.len() - 1;
    let mut curve = vec![0.0; (k + 1) * d];
    let mut sums: Vec<CompensatedSum> = vec![CompensatedSum::new(); d];
    for m in 1..=k {
        let a = path.value_at(idx[m - 1]);
        let b = path.value_at(idx[m]);
        for c in 0..d {
            let delta = b[c] - a[c];
            sums[c].add(delta * delta);
            curve[m * d + c] = sums[c].total();
        }
    }
    let mut atoms = Vec::new();
    for (m, &j) in idx.iter().enumerate().skip(1) {
        if let Some(delta) = path.jump_at_index(j) {
            atoms.push(QVAtom {
                position: m,
                time: path.grid_time(j),
                weights: delta.iter().map(|dc| dc * dc).collect(),
            });
        }
    }
    let mut continuous = curve.clone();
    let mut acc = vec![0.0; d];
    let mut next_atom = atoms.iter().peekable();
    for m in 0..=k {
        while next_atom.peek().is_some_and(|a| a.position == m) {
            let a = next_atom.next().unwrap();
            for c in 0..d {
                acc[c] += a.weights[c];
            }
        }
        for c in 0..d {
            continuous[m * d + c] = curve[m * d + c] - acc[c];
        }
    }
    Ok(QVMeasure {
        level: sub.level(),
        dim: d,
        times: idx.iter().map(|&j| path.grid_time(j)).collect(),
        curve,
        atoms,
        continuous,
    })
}

/// Splits a measure into its continuous curve and atom list, after checking
/// that the continuous part is pointwise nonnegative within
/// [`QV_CONSISTENCY_TOL`]; a deeper dip signals a registry/subdivision
/// mismatch.
///
/// The returned curve is flattened `(k+1) x dim`, like the measure's own.
pub fn qv_decompose(q: &QVMeasure) -> Result<(Vec<f64>, Vec<QVAtom>)> {
    for (i, &v) in q.continuous.iter().enumerate() {
        if v < -QV_CONSISTENCY_TOL {
            return Err(Error::Inconsistency(format!(
                "continuous part dips to {v} at position {} (component {}): registry and \
                 subdivision disagree about a jump",
                i / q.dim,
                i % q.dim
            )));
        }
    }
    Ok((q.continuous.clone(), q.atoms.clone()))
}

/// Matrix-valued quadratic variation: outer-product increment sums, packed
/// upper-triangular per subdivision position.
#[derive(Debug, Clone)]
pub struct MatrixQV {
    level: u32,
    dim: usize,
    times: Vec<f64>,
    /// Flattened `(k+1) x packed_len(dim)`.
    curve: Vec<f64>,
    atoms: Vec<QVAtom>,
}

impl MatrixQV {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn atoms(&self) -> &[QVAtom] {
        &self.atoms
    }

    /// Packed matrix row at a subdivision position.
    pub fn curve_at(&self, position: usize) -> &[f64] {
        let p = packed_len(self.dim);
        &self.curve[position * p..(position + 1) * p]
    }

    /// Entry `(i, j)` of the curve at a position.
    pub fn entry_at(&self, position: usize, i: usize, j: usize) -> f64 {
        self.curve_at(position)[packed_index(i, j, self.dim)]
    }

    /// Increment matrix over subdivision positions `[from, to]` as a dense
    /// symmetric matrix (a sum of outer products, hence PSD up to rounding).
    pub fn increment(&self, from: usize, to: usize) -> SymMatrix {
        let p = packed_len(self.dim);
        let mut packed = vec![0.0; p];
        for (q, v) in packed.iter_mut().enumerate() {
            *v = self.curve[to * p + q] - self.curve[from * p + q];
        }
        SymMatrix::from_packed(self.dim, &packed)
    }
}

/// One scalar component of a path as its own path (registry filtered to that
/// component).
fn component_path(path: &CadlagPath, c: usize) -> CadlagPath {
    let n = path.n_points();
    let values = (0..n).map(|j| path.value_at(j)[c]).collect();
    let registry = path
        .registry()
        .iter()
        .filter(|e| e.delta[c] != 0.0)
        .map(|e| JumpEntry {
            index: e.index,
            delta: vec![e.delta[c]],
        })
        .collect();
    CadlagPath::new(1, path.step(), values, registry).expect("component of a valid path")
}

/// Sum of two scalar components as a path, for the polarization identity.
fn component_sum_path(path: &CadlagPath, a: usize, b: usize) -> CadlagPath {
    let n = path.n_points();
    let values = (0..n)
        .map(|j| {
            let v = path.value_at(j);
            v[a] + v[b]
        })
        .collect();
    let registry = path
        .registry()
        .iter()
        .filter(|e| e.delta[a] + e.delta[b] != 0.0)
        .map(|e| JumpEntry {
            index: e.index,
            delta: vec![e.delta[a] + e.delta[b]],
        })
        .collect();
    CadlagPath::new(1, path.step(), values, registry).expect("component sum of a valid path")
}

/// Matrix-valued quadratic variation along `sub`, computed as the direct
/// outer-product sum and verified against the polarization identity
/// `[x_i, x_j] = ([x_i + x_j] - [x_i] - [x_j]) / 2` to
/// [`QV_CONSISTENCY_TOL`] at every subdivision point.
pub fn cross_variation(path: &CadlagPath, sub: &Subdivision) -> Result<MatrixQV> {
    let idx = sub.indices_for(&path.grid())?;
    let d = path.dim();
    let p = packed_len(d);
    let k = idx.len() - 1;
    let mut curve = vec![0.0; (k + 1) * p];
    let mut sums: Vec<CompensatedSum> = vec![CompensatedSum::new(); p];
    for m in 1..=k {
        let a = path.value_at(idx[m - 1]);
        let b = path.value_at(idx[m]);
        for i in 0..d {
            let di = b[i] - a[i];
            for j in i..d {
                let dj = b[j] - a[j];
                let q = packed_index(i, j, d);
                sums[q].add(di * dj);
                curve[m * p + q] = sums[q].total();
            }
        }
    }
    let mut atoms = Vec::new();
    for (m, &j) in idx.iter().enumerate().skip(1) {
        if let Some(delta) = path.jump_at_index(j) {
            let mut weights = vec![0.0; p];
            for i in 0..d {
                for l in i..d {
                    weights[packed_index(i, l, d)] = delta[i] * delta[l];
                }
            }
            atoms.push(QVAtom {
                position: m,
                time: path.grid_time(j),
                weights,
            });
        }
    }

    // Polarization cross-check for every off-diagonal entry.
    let scalars: Vec<QVMeasure> = (0..d)
        .map(|c| discrete_qv(&component_path(path, c), sub))
        .collect::<Result<_>>()?;
    for i in 0..d {
        for j in i + 1..d {
            let qsum = discrete_qv(&component_sum_path(path, i, j), sub)?;
            let q = packed_index(i, j, d);
            for m in 0..=k {
                let polarized =
                    0.5 * (qsum.curve_at(m, 0) - scalars[i].curve_at(m, 0) - scalars[j].curve_at(m, 0));
                let direct = curve[m * p + q];
                if (polarized - direct).abs() > QV_CONSISTENCY_TOL {
                    return Err(Error::Inconsistency(format!(
                        "polarization identity violated for components ({i},{j}) at position \
                         {m}: polarized {polarized} vs direct {direct}"
                    )));
                }
            }
        }
    }

    Ok(MatrixQV {
        level: sub.level(),
        dim: d,
        times: idx.iter().map(|&j| path.grid_time(j)).collect(),
        curve,
        atoms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path_space::PathPair;
    use approx::assert_abs_diff_eq;

    fn grid_path(depth: u32, f: impl Fn(f64) -> f64) -> CadlagPath {
        let n = (1usize << depth) + 1;
        let step = 1.0 / (1u64 << depth) as f64;
        let values: Vec<f64> = (0..n).map(|j| f(j as f64 * step)).collect();
        CadlagPath::new(1, step, values, Vec::new()).unwrap()
    }

    fn jump_pair(depth: u32, jump_index: usize, a: f64) -> PathPair {
        let n = (1usize << depth) + 1;
        let step = 1.0 / (1u64 << depth) as f64;
        let values: Vec<f64> = (0..n)
            .map(|j| if j >= jump_index { a } else { 0.0 })
            .collect();
        let x = CadlagPath::new(
            1,
            step,
            values,
            vec![JumpEntry {
                index: jump_index,
                delta: vec![a],
            }],
        )
        .unwrap();
        PathPair::with_constant_companion(x, 0.0).unwrap()
    }

    #[test]
    fn dyadic_levels_have_expected_points() {
        let s0 = dyadic_subdivision(1.0, 0).unwrap();
        assert_eq!(s0.times(), &[0.0, 1.0]);
        let s1 = dyadic_subdivision(1.0, 1).unwrap();
        assert_eq!(s1.times(), &[0.0, 0.5, 1.0]);
        for n in 0..=6 {
            let s = dyadic_subdivision(1.0, n).unwrap();
            assert_eq!(s.times().len(), (1 << n) + 1);
        }
    }

    #[test]
    fn indices_reject_too_deep_levels() {
        let p = grid_path(3, |t| t);
        let s = dyadic_subdivision(1.0, 5).unwrap();
        assert!(matches!(
            s.indices_for(&p.grid()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn jump_augmentation_respects_threshold() {
        let p = jump_pair(4, 5, 0.7);
        let base = dyadic_subdivision(1.0, 1).unwrap();
        // 0.7 >= 1/2: included.
        let s2 = jump_augmented_subdivision(&base, &p, 2).unwrap();
        assert_eq!(s2.times(), &[0.0, 5.0 / 16.0, 0.5, 1.0]);
        // 0.7 < 1: base unchanged.
        let s1 = jump_augmented_subdivision(&base, &p, 1).unwrap();
        assert_eq!(s1.times(), base.times());
        // Continuous pair: always unchanged.
        let cont = PathPair::with_constant_companion(grid_path(4, |t| t), 0.0).unwrap();
        let s = jump_augmented_subdivision(&base, &cont, 8).unwrap();
        assert_eq!(s.times(), base.times());
    }

    #[test]
    fn stopping_time_matches_dyadic_on_continuous_pairs() {
        let p = PathPair::with_constant_companion(grid_path(4, |t| t.sin()), 0.0).unwrap();
        let s = stopping_time_subdivision(&p, 2).unwrap();
        assert_eq!(s.times(), dyadic_subdivision(1.0, 2).unwrap().times());
    }

    #[test]
    fn stopping_time_excludes_boundary_jump_that_augmentation_includes() {
        // Jump of size exactly 1/N: strict inequality drops it from the
        // stopping-time construction, the >= of jump-augmentation keeps it.
        let p = jump_pair(4, 3, 0.5);
        let stop = stopping_time_subdivision(&p, 2).unwrap();
        assert_eq!(stop.times(), dyadic_subdivision(1.0, 2).unwrap().times());
        let base = dyadic_subdivision(1.0, 2).unwrap();
        let aug = jump_augmented_subdivision(&base, &p, 2).unwrap();
        assert!(aug.times().contains(&(3.0 / 16.0)));
    }

    #[test]
    fn stopping_time_includes_strictly_larger_jump() {
        let p = jump_pair(4, 3, 0.6);
        let stop = stopping_time_subdivision(&p, 2).unwrap();
        assert_eq!(stop.times(), &[0.0, 3.0 / 16.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn identity_path_curve_is_two_to_minus_n() {
        let p = grid_path(8, |t| t);
        for n in 0..=8 {
            let sub = dyadic_subdivision(1.0, n).unwrap();
            let q = discrete_qv(&p, &sub).unwrap();
            assert_abs_diff_eq!(q.total(0), 2f64.powi(-(n as i32)), epsilon = 1e-15);
            assert_eq!(q.curve_at(0, 0), 0.0);
            assert!(q.atoms().is_empty());
        }
    }

    #[test]
    fn step_path_mass_is_one_atom() {
        let p = jump_pair(4, 5, 0.5);
        let base = dyadic_subdivision(1.0, 4).unwrap();
        let sub = jump_augmented_subdivision(&base, &p, 4).unwrap();
        let q = discrete_qv(p.x(), &sub).unwrap();
        assert_eq!(q.total(0), 0.25);
        assert_eq!(q.atoms().len(), 1);
        assert_eq!(q.atoms()[0].weights[0], 0.25);
        let (cont, atoms) = qv_decompose(&q).unwrap();
        assert!(cont.iter().all(|&v| v == 0.0));
        assert_eq!(atoms.len(), 1);
    }

    #[test]
    fn straddled_jump_is_not_an_atom() {
        // Jump at 5/16 never enters a level-1 subdivision: its mass stays in
        // the straddling increment and the atom list is empty.
        let p = jump_pair(4, 5, 0.5);
        let sub = dyadic_subdivision(1.0, 1).unwrap();
        let q = discrete_qv(p.x(), &sub).unwrap();
        assert!(q.atoms().is_empty());
        assert_eq!(q.total(0), 0.25);
        // All the mass is formally "continuous" at this level.
        let (cont, _) = qv_decompose(&q).unwrap();
        assert_eq!(cont.last().copied().unwrap(), 0.25);
    }

    #[test]
    fn decompose_flags_unregistered_jump() {
        // Same samples as a jump path but with an empty registry, and a
        // registry entry claiming a larger jump than the samples show: curve
        // minus atoms goes negative.
        let n = 17;
        let step = 1.0 / 16.0;
        let values: Vec<f64> = (0..n).map(|j| if j >= 5 { 0.5 } else { 0.0 }).collect();
        let x = CadlagPath::new(
            1,
            step,
            values,
            vec![JumpEntry {
                index: 5,
                delta: vec![0.8],
            }],
        )
        .unwrap();
        let base = dyadic_subdivision(1.0, 4).unwrap();
        let p = PathPair::with_constant_companion(x.clone(), 0.0).unwrap();
        let sub = jump_augmented_subdivision(&base, &p, 4).unwrap();
        let q = discrete_qv(&x, &sub).unwrap();
        assert!(matches!(qv_decompose(&q), Err(Error::Inconsistency(_))));
    }

    #[test]
    fn cross_variation_polarization_cases() {
        let w = grid_path(6, |t| (7.0 * t).sin() + t);
        let n = w.n_points();
        // (w, w): off-diagonal equals the scalar QV of w.
        let mut values = Vec::with_capacity(n * 2);
        for j in 0..n {
            let v = w.value_at(j)[0];
            values.extend_from_slice(&[v, v]);
        }
        let p2 = CadlagPath::new(2, w.step(), values, Vec::new()).unwrap();
        let sub = dyadic_subdivision(1.0, 6).unwrap();
        let m = cross_variation(&p2, &sub).unwrap();
        let q = discrete_qv(&w, &sub).unwrap();
        let k = q.times().len() - 1;
        assert_abs_diff_eq!(m.entry_at(k, 0, 1), q.total(0), epsilon = 1e-14);

        // (w, -w): off-diagonal equals minus the scalar QV.
        let mut values = Vec::with_capacity(n * 2);
        for j in 0..n {
            let v = w.value_at(j)[0];
            values.extend_from_slice(&[v, -v]);
        }
        let pm = CadlagPath::new(2, w.step(), values, Vec::new()).unwrap();
        let m2 = cross_variation(&pm, &sub).unwrap();
        assert_abs_diff_eq!(m2.entry_at(k, 0, 1), -q.total(0), epsilon = 1e-14);

        // Increment matrices are PSD.
        let inc = m.increment(0, k);
        assert!(crate::numeric::packed_is_psd(
            &[inc.get(0, 0), inc.get(0, 1), inc.get(1, 1)],
            2,
            QV_CONSISTENCY_TOL
        ));
    }

    #[test]
    fn refinement_halves_identity_curve() {
        let p = grid_path(10, |t| t);
        let mut prev = discrete_qv(&p, &dyadic_subdivision(1.0, 0).unwrap())
            .unwrap()
            .total(0);
        for n in 1..=10 {
            let q = discrete_qv(&p, &dyadic_subdivision(1.0, n).unwrap())
                .unwrap()
                .total(0);
            assert_eq!(q, 0.5 * prev);
            prev = q;
        }
    }
}
