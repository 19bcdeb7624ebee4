//! Seeded, reproducible sample paths with ground-truth metadata.
//!
//! Every generator is a pure function of its [`GenSpec`]: randomness comes
//! from a counter-based generator keyed by `(seed, stream)`, with a fixed
//! stream per role — Brownian increments, jump arrival times, jump marks and
//! Weierstrass phases each own one — so adding one component to a path never
//! perturbs another's draws. All reductions run in a fixed order; identical
//! specs produce bitwise-identical paths.
//!
//! The available kinds:
//!
//! * **brownian** — cumulative i.i.d. Gaussian increments `σ √Δt · Z`;
//!   expected continuous quadratic variation `σ² t`.
//! * **compound_poisson** — exponential inter-arrival times snapped onto the
//!   grid (arrivals sharing a cell merge), marks from a bounded law; pure
//!   jump, zero continuous quadratic variation.
//! * **jump_diffusion** — the sum of the two above, with merged metadata.
//! * **zero_qv** — a Weierstrass-type series
//!   `amplitude · Σ_{j≤depth} 2^{−αj} cos(2^j π t + φ_j)` with seeded phases.
//!   For Hölder exponent `α ∈ (0.5, 1)` its dyadic level-`n` quadratic
//!   variation is bounded by a constant times `2^{n(1−2α)}`, hence vanishes
//!   along refining dyadic subdivisions: the continuous zero-energy
//!   component of a Dirichlet decomposition.
//! * **deterministic** — named closed forms (`linear`, `step`, `sine`) for
//!   hand-checkable tests.
//!
//! [`dirichlet_sum`] adds a continuous zero-QV component to a (jump) path
//! and records both components in the ground truth: along refining
//! subdivisions the sum's quadratic variation converges to that of the first
//! component alone.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};

use crate::error::{Error, Result};
use crate::path_space::{format_f64, CadlagPath, JumpEntry};

/// Deepest master grid a generator will produce (`2^depth` cells).
pub const MAX_DEPTH: u32 = 20;

const BROWNIAN_STREAM: u64 = 1;
const POISSON_TIME_STREAM: u64 = 2;
const POISSON_MARK_STREAM: u64 = 3;
const WEIERSTRASS_STREAM: u64 = 4;

fn stream_rng(seed: u64, role: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(role * 256);
    rng
}

/// Distribution of compound-Poisson jump marks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarkLaw {
    /// Uniform on `[lo, hi)`.
    Uniform { lo: f64, hi: f64 },
    /// Every mark equal to `value` (consumes no randomness).
    Constant { value: f64 },
}

impl MarkLaw {
    fn validate(&self) -> Result<()> {
        match *self {
            MarkLaw::Uniform { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                    return Err(Error::Config(format!(
                        "uniform mark law needs finite lo < hi, got [{lo}, {hi})"
                    )));
                }
            }
            MarkLaw::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::Config(format!(
                        "constant mark law needs a finite value, got {value}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            MarkLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            MarkLaw::Constant { value } => value,
        }
    }
}

/// Closed-form test shapes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DetShape {
    /// `x(t) = slope · t`.
    Linear { slope: f64 },
    /// `x(t) = size · 1_{[time, T]}`, `time` snapped to the grid. A step at
    /// `time = 0` is a constant path (a path merely *starting* at `size` has
    /// no jump to register).
    Step { size: f64, time: f64 },
    /// `x(t) = amplitude · sin(2π · cycles · t / T)`.
    Sine { amplitude: f64, cycles: f64 },
}

/// What to generate: the kind plus its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GenKind {
    Brownian { sigma: f64 },
    CompoundPoisson { rate: f64, law: MarkLaw },
    JumpDiffusion { sigma: f64, rate: f64, law: MarkLaw },
    /// `amplitude` scales the whole series; the default 0.25 keeps desk-scale
    /// dyadic quadratic variation small without touching the exponent.
    ZeroQv { alpha: f64, amplitude: f64 },
    Deterministic(DetShape),
}

impl GenKind {
    pub fn name(&self) -> &'static str {
        match self {
            GenKind::Brownian { .. } => "brownian",
            GenKind::CompoundPoisson { .. } => "compound_poisson",
            GenKind::JumpDiffusion { .. } => "jump_diffusion",
            GenKind::ZeroQv { .. } => "zero_qv",
            GenKind::Deterministic(_) => "deterministic",
        }
    }
}

/// A complete, validated-on-use generation request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenSpec {
    pub kind: GenKind,
    /// Observation horizon `T`.
    pub horizon: f64,
    /// The grid has `2^depth` cells of length `T · 2^-depth`.
    pub depth: u32,
    pub seed: u64,
}

impl GenSpec {
    fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Config(format!(
                "horizon must be positive and finite, got {}",
                self.horizon
            )));
        }
        if self.depth > MAX_DEPTH {
            return Err(Error::Config(format!(
                "depth {} exceeds the supported maximum {MAX_DEPTH}",
                self.depth
            )));
        }
        match self.kind {
            GenKind::Brownian { sigma } => require_nonnegative("sigma", sigma),
            GenKind::CompoundPoisson { rate, law } => {
                require_nonnegative("rate", rate)?;
                law.validate()
            }
            GenKind::JumpDiffusion { sigma, rate, law } => {
                require_nonnegative("sigma", sigma)?;
                require_nonnegative("rate", rate)?;
                law.validate()
            }
            GenKind::ZeroQv { alpha, amplitude } => {
                if !(alpha > 0.5 && alpha < 1.0) {
                    return Err(Error::Config(format!(
                        "zero-qv exponent alpha must lie in (0.5, 1), got {alpha}"
                    )));
                }
                if !(amplitude > 0.0) || !amplitude.is_finite() {
                    return Err(Error::Config(format!(
                        "zero-qv amplitude must be positive, got {amplitude}"
                    )));
                }
                Ok(())
            }
            GenKind::Deterministic(shape) => match shape {
                DetShape::Linear { slope } => require_finite("slope", slope),
                DetShape::Step { size, time } => {
                    require_finite("size", size)?;
                    if !(time >= 0.0) || time > self.horizon {
                        return Err(Error::Config(format!(
                            "step time must lie in [0, {}], got {time}",
                            self.horizon
                        )));
                    }
                    Ok(())
                }
                DetShape::Sine { amplitude, cycles } => {
                    require_finite("amplitude", amplitude)?;
                    require_nonnegative("cycles", cycles)
                }
            },
        }
    }

    fn n_points(&self) -> usize {
        (1usize << self.depth) + 1
    }

    fn step(&self) -> f64 {
        self.horizon / (1u64 << self.depth) as f64
    }
}

fn require_nonnegative(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::Config(format!(
            "{name} must be nonnegative and finite, got {v}"
        )));
    }
    Ok(())
}

fn require_finite(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::Config(format!("{name} must be finite, got {v}")));
    }
    Ok(())
}

/// What the generator knows to be true about an emitted path.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Slope of the expected continuous quadratic variation: the curve
    /// `t ↦ slope · t` (zero for pure-jump, deterministic and zero-QV paths);
    /// `None` when the expectation is carried by `components` instead.
    pub qv_slope: Option<f64>,
    /// The registry the emitted path is guaranteed to carry, verbatim.
    pub jumps_planted: Vec<JumpEntry>,
    /// For Dirichlet sums: the (jump/martingale part, zero-QV part) the path
    /// was assembled from.
    pub components: Option<(CadlagPath, CadlagPath)>,
}

impl GroundTruth {
    /// Expected continuous quadratic variation accumulated by time `t`.
    pub fn qv_continuous_expected(&self, t: f64) -> Option<f64> {
        self.qv_slope.map(|s| s * t)
    }
}

/// Generates the path described by `spec` together with its ground truth.
pub fn generate(spec: &GenSpec) -> Result<(CadlagPath, GroundTruth)> {
    spec.validate()?;
    match spec.kind {
        GenKind::Brownian { sigma } => {
            let path = brownian_path(spec, sigma)?;
            Ok((
                path,
                GroundTruth {
                    qv_slope: Some(sigma * sigma),
                    jumps_planted: Vec::new(),
                    components: None,
                },
            ))
        }
        GenKind::CompoundPoisson { rate, law } => {
            let path = poisson_path(spec, rate, law)?;
            let jumps = path.registry().to_vec();
            Ok((
                path,
                GroundTruth {
                    qv_slope: Some(0.0),
                    jumps_planted: jumps,
                    components: None,
                },
            ))
        }
        GenKind::JumpDiffusion { sigma, rate, law } => {
            let bm = brownian_path(spec, sigma)?;
            let cp = poisson_path(spec, rate, law)?;
            let values = bm
                .values()
                .iter()
                .zip(cp.values())
                .map(|(a, b)| a + b)
                .collect();
            let path = CadlagPath::new(1, spec.step(), values, cp.registry().to_vec())?;
            let jumps = path.registry().to_vec();
            Ok((
                path,
                GroundTruth {
                    qv_slope: Some(sigma * sigma),
                    jumps_planted: jumps,
                    components: None,
                },
            ))
        }
        GenKind::ZeroQv { alpha, amplitude } => {
            let path = weierstrass_path(spec, alpha, amplitude)?;
            Ok((
                path,
                GroundTruth {
                    qv_slope: Some(0.0),
                    jumps_planted: Vec::new(),
                    components: None,
                },
            ))
        }
        GenKind::Deterministic(shape) => {
            let path = deterministic_path(spec, shape)?;
            let jumps = path.registry().to_vec();
            Ok((
                path,
                GroundTruth {
                    qv_slope: Some(0.0),
                    jumps_planted: jumps,
                    components: None,
                },
            ))
        }
    }
}

fn brownian_path(spec: &GenSpec, sigma: f64) -> Result<CadlagPath> {
    let n = spec.n_points();
    let scale = sigma * spec.step().sqrt();
    let mut rng = stream_rng(spec.seed, BROWNIAN_STREAM);
    let mut values = Vec::with_capacity(n);
    values.push(0.0);
    for i in 1..n {
        let z: f64 = rng.sample(StandardNormal);
        values.push(values[i - 1] + scale * z);
    }
    CadlagPath::new(1, spec.step(), values, Vec::new())
}

fn poisson_path(spec: &GenSpec, rate: f64, law: MarkLaw) -> Result<CadlagPath> {
    let n = spec.n_points();
    let step = spec.step();
    let mut merged: Vec<(usize, f64)> = Vec::new();
    if rate > 0.0 {
        let gaps = Exp::new(rate)
            .map_err(|e| Error::Config(format!("invalid jump rate {rate}: {e}")))?;
        let mut times = stream_rng(spec.seed, POISSON_TIME_STREAM);
        let mut marks = stream_rng(spec.seed, POISSON_MARK_STREAM);
        let mut t: f64 = times.sample(gaps);
        while t <= spec.horizon {
            // arrivals snap to the nearest grid point; the origin is excluded
            // (no increment completes there) and same-cell arrivals merge
            let index = ((t / step).round() as usize).clamp(1, n - 1);
            let mark = law.sample(&mut marks);
            match merged.last_mut() {
                Some(last) if last.0 == index => last.1 += mark,
                _ => merged.push((index, mark)),
            }
            t += times.sample(gaps);
        }
    }
    let mut values = vec![0.0; n];
    let mut level = 0.0;
    let mut next = merged.iter().peekable();
    for (j, v) in values.iter_mut().enumerate() {
        if let Some(&&(index, mark)) = next.peek() {
            if index == j {
                level += mark;
                next.next();
            }
        }
        *v = level;
    }
    let registry = merged
        .into_iter()
        .map(|(index, mark)| JumpEntry {
            index,
            delta: vec![mark],
        })
        .collect();
    CadlagPath::new(1, step, values, registry)
}

fn weierstrass_path(spec: &GenSpec, alpha: f64, amplitude: f64) -> Result<CadlagPath> {
    let n = spec.n_points();
    let step = spec.step();
    let mut rng = stream_rng(spec.seed, WEIERSTRASS_STREAM);
    let phases: Vec<f64> = (0..=spec.depth)
        .map(|_| std::f64::consts::TAU * rng.random::<f64>())
        .collect();
    let values = (0..n)
        .map(|i| {
            let t = step * i as f64;
            let mut acc = 0.0;
            for (j, phi) in phases.iter().enumerate() {
                let freq = (1u64 << j) as f64 * std::f64::consts::PI;
                acc += 2f64.powf(-alpha * j as f64) * (freq * t + phi).cos();
            }
            amplitude * acc
        })
        .collect();
    CadlagPath::new(1, step, values, Vec::new())
}

fn deterministic_path(spec: &GenSpec, shape: DetShape) -> Result<CadlagPath> {
    let n = spec.n_points();
    let step = spec.step();
    match shape {
        DetShape::Linear { slope } => {
            let values = (0..n).map(|i| slope * step * i as f64).collect();
            CadlagPath::new(1, step, values, Vec::new())
        }
        DetShape::Step { size, time } => {
            let index = ((time / step).round() as usize).min(n - 1);
            let values = (0..n)
                .map(|i| if i >= index { size } else { 0.0 })
                .collect();
            let registry = if index > 0 {
                vec![JumpEntry {
                    index,
                    delta: vec![size],
                }]
            } else {
                Vec::new()
            };
            CadlagPath::new(1, step, values, registry)
        }
        DetShape::Sine { amplitude, cycles } => {
            let omega = std::f64::consts::TAU * cycles / spec.horizon;
            let values = (0..n)
                .map(|i| amplitude * (omega * step * i as f64).sin())
                .collect();
            CadlagPath::new(1, step, values, Vec::new())
        }
    }
}

/// Adds a continuous zero-QV component `b` to a path `x`.
///
/// The grids must match and `b` must be continuous (an empty registry); a
/// registered jump on `b` is a domain error. The sum keeps `x`'s registry
/// verbatim, and the ground truth records both components — along refining
/// subdivisions the sum's quadratic variation is that of `x` alone.
pub fn dirichlet_sum(x: &CadlagPath, b: &CadlagPath) -> Result<(CadlagPath, GroundTruth)> {
    if x.dim() != b.dim() || x.step() != b.step() || x.n_points() != b.n_points() {
        return Err(Error::Config(format!(
            "component grids do not match: {}x{} cells of {} vs {}x{} cells of {}",
            x.dim(),
            x.last_index(),
            x.step(),
            b.dim(),
            b.last_index(),
            b.step()
        )));
    }
    if !b.registry().is_empty() {
        return Err(Error::Domain(
            "the zero-QV component must be continuous, but its registry is not empty".into(),
        ));
    }
    let values = x
        .values()
        .iter()
        .zip(b.values())
        .map(|(a, c)| a + c)
        .collect();
    let sum = CadlagPath::new(x.dim(), x.step(), values, x.registry().to_vec())?;
    let jumps = sum.registry().to_vec();
    Ok((
        sum,
        GroundTruth {
            qv_slope: None,
            jumps_planted: jumps,
            components: Some((x.clone(), b.clone())),
        },
    ))
}

/// Writes ground truth as a small CSV: `#`-prefixed header lines, a column
/// row, then one `qv_slope` row (empty value when unknown) and one `jump` row
/// per planted jump carrying `index`, `time` and the delta components.
/// All numbers carry 17 significant digits.
pub fn write_ground_truth_csv<W: Write>(
    gt: &GroundTruth,
    step: f64,
    header: &[String],
    w: &mut W,
) -> Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "record,index,time,values")?;
    match gt.qv_slope {
        Some(s) => writeln!(w, "qv_slope,,,{}", format_f64(s))?,
        None => writeln!(w, "qv_slope,,,")?,
    }
    for e in &gt.jumps_planted {
        let mut line = format!("jump,{},{}", e.index, format_f64(step * e.index as f64));
        for d in &e.delta {
            line.push(',');
            line.push_str(&format_f64(*d));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Reads the CSV written by [`write_ground_truth_csv`]. Components are not
/// serialized, so they come back as `None`; jump times are redundant with the
/// indices and ignored.
pub fn read_ground_truth_csv<R: BufRead>(r: &mut R) -> Result<GroundTruth> {
    let mut qv_slope = None;
    let mut jumps = Vec::new();
    let mut saw_columns = false;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_columns {
            if line != "record,index,time,values" {
                return Err(Error::Parse(format!(
                    "line {}: expected the column row 'record,index,time,values', got {line:?}",
                    lineno + 1
                )));
            }
            saw_columns = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |what: &str| {
            Error::Parse(format!("line {}: {what} in {line:?}", lineno + 1))
        };
        match fields[0] {
            "qv_slope" => {
                if fields.len() != 4 {
                    return Err(bad("expected 4 fields"));
                }
                if !fields[3].is_empty() {
                    qv_slope = Some(
                        fields[3]
                            .parse::<f64>()
                            .map_err(|_| bad("unreadable slope"))?,
                    );
                }
            }
            "jump" => {
                if fields.len() < 4 {
                    return Err(bad("expected at least 4 fields"));
                }
                let index = fields[1]
                    .parse::<usize>()
                    .map_err(|_| bad("unreadable jump index"))?;
                let delta = fields[3..]
                    .iter()
                    .map(|f| f.parse::<f64>().map_err(|_| bad("unreadable jump delta")))
                    .collect::<Result<Vec<f64>>>()?;
                jumps.push(JumpEntry { index, delta });
            }
            other => {
                return Err(Error::Parse(format!(
                    "line {}: unknown record type {other:?}",
                    lineno + 1
                )));
            }
        }
    }
    if !saw_columns {
        return Err(Error::Parse("ground-truth file has no column row".into()));
    }
    Ok(GroundTruth {
        qv_slope,
        jumps_planted: jumps,
        components: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path_space::PathPair;
    use crate::quadratic_variation::{discrete_qv, subdivision_for, SubdivisionScheme};

    fn law() -> MarkLaw {
        MarkLaw::Uniform { lo: -0.4, hi: 0.8 }
    }

    fn spec(kind: GenKind, depth: u32, seed: u64) -> GenSpec {
        GenSpec {
            kind,
            horizon: 1.0,
            depth,
            seed,
        }
    }

    #[test]
    fn deterministic_linear_is_the_identity_path() {
        let s = spec(
            GenKind::Deterministic(DetShape::Linear { slope: 1.0 }),
            4,
            0,
        );
        let (path, gt) = generate(&s).unwrap();
        for j in 0..=16 {
            assert_eq!(path.value_at(j), &[j as f64 / 16.0]);
        }
        assert!(path.registry().is_empty());
        assert_eq!(gt.qv_continuous_expected(1.0), Some(0.0));
    }

    #[test]
    fn identical_specs_generate_identical_paths() {
        for kind in [
            GenKind::Brownian { sigma: 1.0 },
            GenKind::CompoundPoisson {
                rate: 5.0,
                law: law(),
            },
            GenKind::JumpDiffusion {
                sigma: 0.5,
                rate: 5.0,
                law: law(),
            },
            GenKind::ZeroQv {
                alpha: 0.75,
                amplitude: 0.25,
            },
        ] {
            let (a, _) = generate(&spec(kind, 8, 42)).unwrap();
            let (b, _) = generate(&spec(kind, 8, 42)).unwrap();
            assert_eq!(a.values(), b.values());
            assert_eq!(a.registry(), b.registry());
            let (c, _) = generate(&spec(kind, 8, 43)).unwrap();
            assert_ne!(a.values(), c.values());
        }
    }

    #[test]
    fn jump_diffusion_is_the_sum_of_its_streams() {
        let s = spec(
            GenKind::JumpDiffusion {
                sigma: 0.5,
                rate: 5.0,
                law: law(),
            },
            8,
            7,
        );
        let (jd, gt) = generate(&s).unwrap();
        let (bm, _) = generate(&spec(GenKind::Brownian { sigma: 0.5 }, 8, 7)).unwrap();
        let (cp, cp_gt) = generate(&spec(
            GenKind::CompoundPoisson {
                rate: 5.0,
                law: law(),
            },
            8,
            7,
        ))
        .unwrap();
        // component streams are isolated: the diffusion part of the mixture
        // is bitwise the standalone Brownian path, and the jump part the
        // standalone compound-Poisson path
        for j in 0..=256 {
            assert_eq!(jd.value_at(j)[0], bm.value_at(j)[0] + cp.value_at(j)[0]);
        }
        assert_eq!(jd.registry(), cp.registry());
        assert_eq!(gt.jumps_planted, cp_gt.jumps_planted);
        assert_eq!(gt.qv_slope, Some(0.25));
    }

    #[test]
    fn zero_rate_poisson_is_the_zero_path() {
        let s = spec(
            GenKind::CompoundPoisson {
                rate: 0.0,
                law: law(),
            },
            6,
            11,
        );
        let (path, gt) = generate(&s).unwrap();
        assert!(path.values().iter().all(|&v| v == 0.0));
        assert!(path.registry().is_empty());
        assert!(gt.jumps_planted.is_empty());
    }

    #[test]
    fn planted_jumps_match_the_emitted_registry() {
        let s = spec(
            GenKind::CompoundPoisson {
                rate: 6.0,
                law: law(),
            },
            8,
            3,
        );
        let (path, gt) = generate(&s).unwrap();
        assert!(!path.registry().is_empty(), "seed should draw some jumps");
        assert_eq!(path.registry(), gt.jumps_planted.as_slice());
        // the terminal value is the sum of the planted marks
        let total: f64 = gt.jumps_planted.iter().map(|e| e.delta[0]).sum();
        assert_eq!(path.value_at(path.last_index())[0], total);
        // jumps never land on the origin
        assert!(gt.jumps_planted.iter().all(|e| e.index > 0));
    }

    #[test]
    fn brownian_increments_have_the_right_variance() {
        let sigma = 0.8;
        let s = spec(GenKind::Brownian { sigma }, 14, 7);
        let (path, gt) = generate(&s).unwrap();
        let n = path.last_index();
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for j in 1..=n {
            let d = path.value_at(j)[0] - path.value_at(j - 1)[0];
            sum += d;
            sumsq += d * d;
        }
        let mean = sum / n as f64;
        let var = (sumsq - n as f64 * mean * mean) / (n - 1) as f64;
        let want = sigma * sigma * path.step();
        assert!(
            (var - want).abs() <= 0.1 * want,
            "sample variance {var} vs {want}"
        );
        assert_eq!(gt.qv_continuous_expected(1.0), Some(sigma * sigma));
    }

    #[test]
    fn zero_qv_dyadic_variation_decays_at_the_holder_rate() {
        let alpha = 0.75;
        let s = spec(
            GenKind::ZeroQv {
                alpha,
                amplitude: 0.25,
            },
            14,
            42,
        );
        let (path, _) = generate(&s).unwrap();
        let p = PathPair::with_constant_companion(path, 0.0).unwrap();
        let mut scaled = Vec::new();
        let mut previous = f64::INFINITY;
        for level in 8..=14 {
            let sub = subdivision_for(SubdivisionScheme::Dyadic, &p, level).unwrap();
            let qv = discrete_qv(p.x(), &sub).unwrap().total(0);
            assert!(qv < previous, "level {level}: {qv} did not decrease");
            previous = qv;
            scaled.push(qv / 2f64.powf(level as f64 * (1.0 - 2.0 * alpha)));
        }
        let (lo, hi) = scaled
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &c| {
                (lo.min(c), hi.max(c))
            });
        assert!(
            hi / lo <= 4.0,
            "scaled constants spread beyond a factor of 4: [{lo}, {hi}]"
        );
    }

    #[test]
    fn dirichlet_sum_records_components_and_keeps_jumps() {
        let (x, _) = generate(&spec(
            GenKind::JumpDiffusion {
                sigma: 1.0,
                rate: 4.0,
                law: law(),
            },
            8,
            5,
        ))
        .unwrap();
        let (b, _) = generate(&spec(
            GenKind::ZeroQv {
                alpha: 0.75,
                amplitude: 0.25,
            },
            8,
            5,
        ))
        .unwrap();
        let (sum, gt) = dirichlet_sum(&x, &b).unwrap();
        for j in 0..=256 {
            assert_eq!(sum.value_at(j)[0], x.value_at(j)[0] + b.value_at(j)[0]);
        }
        assert_eq!(sum.registry(), x.registry());
        assert_eq!(gt.qv_slope, None);
        let (cx, cb) = gt.components.as_ref().unwrap();
        assert_eq!(cx.values(), x.values());
        assert_eq!(cb.values(), b.values());
        // a jumpy zero-QV component is rejected
        assert!(matches!(
            dirichlet_sum(&b, &x).unwrap_err(),
            Error::Domain(_)
        ));
        // as is a mismatched grid
        let (short, _) = generate(&spec(GenKind::Brownian { sigma: 1.0 }, 7, 5)).unwrap();
        assert!(matches!(
            dirichlet_sum(&short, &b).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn step_shape_plants_its_jump() {
        let s = spec(
            GenKind::Deterministic(DetShape::Step {
                size: 0.5,
                time: 0.5,
            }),
            4,
            0,
        );
        let (path, gt) = generate(&s).unwrap();
        assert_eq!(path.value_at(7), &[0.0]);
        assert_eq!(path.value_at(8), &[0.5]);
        assert_eq!(gt.jumps_planted.len(), 1);
        assert_eq!(gt.jumps_planted[0].index, 8);
        assert_eq!(gt.jumps_planted[0].delta, vec![0.5]);
        // a step at the origin is just a constant path
        let s0 = spec(
            GenKind::Deterministic(DetShape::Step {
                size: 0.5,
                time: 0.0,
            }),
            4,
            0,
        );
        let (path, gt) = generate(&s0).unwrap();
        assert!(path.values().iter().all(|&v| v == 0.5));
        assert!(gt.jumps_planted.is_empty());
    }

    #[test]
    fn invalid_specs_are_config_errors() {
        let bad = [
            GenKind::Brownian { sigma: -1.0 },
            GenKind::CompoundPoisson {
                rate: -2.0,
                law: law(),
            },
            GenKind::CompoundPoisson {
                rate: 1.0,
                law: MarkLaw::Uniform { lo: 0.5, hi: 0.5 },
            },
            GenKind::ZeroQv {
                alpha: 0.5,
                amplitude: 0.25,
            },
            GenKind::ZeroQv {
                alpha: 0.75,
                amplitude: 0.0,
            },
            GenKind::Deterministic(DetShape::Step {
                size: 1.0,
                time: 2.0,
            }),
        ];
        for kind in bad {
            assert!(
                matches!(generate(&spec(kind, 4, 0)).unwrap_err(), Error::Config(_)),
                "{kind:?}"
            );
        }
        let too_deep = spec(GenKind::Brownian { sigma: 1.0 }, MAX_DEPTH + 1, 0);
        assert!(matches!(generate(&too_deep).unwrap_err(), Error::Config(_)));
    }

    #[test]
    fn ground_truth_csv_round_trips() {
        let gt = GroundTruth {
            qv_slope: Some(0.64),
            jumps_planted: vec![
                JumpEntry {
                    index: 8,
                    delta: vec![0.3],
                },
                JumpEntry {
                    index: 12,
                    delta: vec![-0.2],
                },
            ],
            components: None,
        };
        let mut buf = Vec::new();
        write_ground_truth_csv(&gt, 0.0625, &["demo".into()], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# demo\n"));
        let back = read_ground_truth_csv(&mut buf.as_slice()).unwrap();
        assert_eq!(back, gt);

        let unknown = GroundTruth {
            qv_slope: None,
            jumps_planted: Vec::new(),
            components: None,
        };
        let mut buf = Vec::new();
        write_ground_truth_csv(&unknown, 0.0625, &[], &mut buf).unwrap();
        let back = read_ground_truth_csv(&mut buf.as_slice()).unwrap();
        assert_eq!(back, unknown);

        let mut garbled = b"record,index,time,values\nwat,,,1".as_slice();
        assert!(matches!(
            read_ground_truth_csv(&mut garbled).unwrap_err(),
            Error::Parse(_)
        ));
    }
}
