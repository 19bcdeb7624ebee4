//! One-shot calibration run backing the constants frozen into the acceptance
//! suite.
//!
//! Every acceptance check that depends on sampled paths (Brownian
//! quadratic-variation band membership, change-of-variable residual decay,
//! Doléans residual thresholds, finite-difference margins, zero-QV levels)
//! needs its expected values measured once and then pinned. This binary
//! performs those measurements: it prints the value on the shipped seed plus
//! distributional context over a wider seed sweep, and writes the level-14
//! Brownian quadratic-variation fixture (1000 seeds) that the acceptance
//! tests read back.
//!
//! Run from the workspace root — release profile, the level-14 report sweeps
//! are quadratic in the grid size:
//!
//! ```text
//! cargo run -p pathcalc-core --release --example calibrate
//! ```

use std::fs;
use std::io::Write as _;
use std::time::Instant;

use pathcalc_core::derivatives::{
    horizontal_derivative, horizontal_derivative_fd, relative_error, vertical_gradient,
    vertical_gradient_fd, vertical_hessian, vertical_hessian_fd, FDScheme,
};
use pathcalc_core::follmer::{change_of_variable_report, follmer_sum, CovReport, Mode};
use pathcalc_core::functionals::{builtin, evaluate, BuiltinSpec};
use pathcalc_core::generators::{dirichlet_sum, generate, DetShape, GenKind, GenSpec, MarkLaw};
use pathcalc_core::path_space::{CadlagPath, JumpEntry, PathPair};
use pathcalc_core::quadratic_variation::{
    cross_variation, discrete_qv, dyadic_subdivision, subdivision_for, SubdivisionScheme,
};

const DEPTH: u32 = 14;
const HORIZON: f64 = 1.0;
const SHIPPED_SEED: u64 = 42;

fn gen_path(kind: GenKind, seed: u64) -> CadlagPath {
    generate(&GenSpec {
        kind,
        horizon: HORIZON,
        depth: DEPTH,
        seed,
    })
    .expect("calibration spec is valid")
    .0
}

fn pair_of(x: CadlagPath, v_scale: f64) -> PathPair {
    PathPair::with_constant_companion(x, v_scale).expect("constant companion")
}

fn brownian(seed: u64, sigma: f64) -> CadlagPath {
    gen_path(GenKind::Brownian { sigma }, seed)
}

fn jump_diffusion_kind() -> GenKind {
    GenKind::JumpDiffusion {
        sigma: 0.5,
        rate: 5.0,
        law: MarkLaw::Uniform { lo: -0.4, hi: 0.8 },
    }
}

/// The five-path corpus the acceptance suite sweeps, all with unit constant
/// companion.
fn corpus() -> Vec<(&'static str, PathPair)> {
    let linear = gen_path(GenKind::Deterministic(DetShape::Linear { slope: 1.0 }), 0);
    let pure_jump = gen_path(
        GenKind::Deterministic(DetShape::Step {
            size: 0.7,
            time: 3.0 / 16.0,
        }),
        0,
    );
    let bm = brownian(SHIPPED_SEED, 1.0);
    let jd = gen_path(jump_diffusion_kind(), SHIPPED_SEED);
    let zq = gen_path(
        GenKind::ZeroQv {
            alpha: 0.75,
            amplitude: 0.25,
        },
        SHIPPED_SEED,
    );
    let (dirichlet, _) = dirichlet_sum(&bm, &zq).expect("zero-qv companion is continuous");
    vec![
        ("linear", pair_of(linear, 1.0)),
        ("pure_jump", pair_of(pure_jump, 1.0)),
        ("brownian", pair_of(bm, 1.0)),
        ("jump_diffusion", pair_of(jd, 1.0)),
        ("dirichlet", pair_of(dirichlet, 1.0)),
    ]
}

fn unwrap_reports(outcomes: Vec<pathcalc_core::follmer::LevelOutcome>) -> Vec<CovReport> {
    outcomes
        .into_iter()
        .map(|o| o.report.expect("level inside grid resolution"))
        .collect()
}

fn relative_residual(r: &CovReport) -> f64 {
    r.residual().abs() / (1.0 + r.lhs.abs())
}

/// Identity-path dyadic QV: curve(1) should be exactly 2^-n.
fn identity_qv() {
    println!("== identity-path dyadic QV (exactness) ==");
    let x = gen_path(GenKind::Deterministic(DetShape::Linear { slope: 1.0 }), 0);
    let mut worst = 0.0_f64;
    for n in 0..=DEPTH {
        let sub = dyadic_subdivision(HORIZON, n).unwrap();
        let q = discrete_qv(&x, &sub).unwrap();
        let gap = (q.total(0) - (2.0_f64).powi(-(n as i32))).abs();
        worst = worst.max(gap);
    }
    println!("max |curve(1) - 2^-n| over n=0..14: {worst:.3e}\n");
}

/// Telescoping exactness of F = |x|^2 across the corpus, both modes.
fn telescoping() {
    println!("== telescoping residuals, F = |x|^2, levels 0..14 ==");
    let f = builtin(&BuiltinSpec::parse("quadratic_cylinder").unwrap()).unwrap();
    let mut global = 0.0_f64;
    for (name, p) in corpus() {
        for (mode, scheme) in [
            (Mode::Continuous, SubdivisionScheme::Dyadic),
            (Mode::Cadlag, SubdivisionScheme::JumpAugmented),
        ] {
            let reports =
                unwrap_reports(change_of_variable_report(&*f, &p, 0..=DEPTH, scheme, mode).unwrap());
            let worst = reports
                .iter()
                .map(relative_residual)
                .fold(0.0_f64, f64::max);
            println!("{name:>14} {mode:>10}: max rel residual {worst:.3e}");
            global = global.max(worst);
        }
    }
    println!("global max: {global:.3e}\n");
}

/// Pure-jump path: which levels resolve the jump, and the exact term split.
fn pure_jump_exactness() {
    println!("== pure-jump path a=0.7 at t0=3/16, F = x^2, cadlag jump-augmented ==");
    let p = pair_of(
        gen_path(
            GenKind::Deterministic(DetShape::Step {
                size: 0.7,
                time: 3.0 / 16.0,
            }),
            0,
        ),
        1.0,
    );
    let f = builtin(&BuiltinSpec::parse("quadratic_cylinder").unwrap()).unwrap();
    let reports = unwrap_reports(
        change_of_variable_report(&*f, &p, 0..=DEPTH, SubdivisionScheme::JumpAugmented, Mode::Cadlag)
            .unwrap(),
    );
    for r in &reports {
        if r.level <= 4 || r.level == DEPTH {
            println!(
                "level {:>2}: follmer {:+.3e}  jumps {:+.3e}  residual {:+.3e}",
                r.level,
                r.term_follmer,
                r.term_jumps,
                r.residual()
            );
        }
    }
    let first = reports.iter().find(|r| r.term_jumps != 0.0).map(|r| r.level);
    println!("first level with the jump resolved: {first:?} (expect 2: threshold 1/2 <= 0.7)\n");
}

/// 1000-seed Brownian level-14 QV sweep: fixture + band statistics.
fn brownian_band(fixture_dir: &str) {
    println!("== Brownian dyadic QV at level 14 (sigma = 1), 1000 seeds ==");
    let sub = dyadic_subdivision(HORIZON, DEPTH).unwrap();
    let mut rows = Vec::with_capacity(1000);
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    let (mut in_band_1000, mut in_band_100) = (0, 0);
    for seed in 0..1000u64 {
        let q = discrete_qv(&brownian(seed, 1.0), &sub).unwrap().total(0);
        rows.push((seed, q));
        lo = lo.min(q);
        hi = hi.max(q);
        sum += q;
        let in_band = (0.95..=1.05).contains(&q);
        if in_band {
            in_band_1000 += 1;
            if seed < 100 {
                in_band_100 += 1;
            }
        }
    }
    let shipped = rows[SHIPPED_SEED as usize].1;
    println!("min {lo:.6}  max {hi:.6}  mean {:.6}", sum / 1000.0);
    println!("in [0.95, 1.05]: {in_band_1000}/1000, first hundred seeds: {in_band_100}/100");
    println!("shipped seed {SHIPPED_SEED}: {shipped:.6}");

    fs::create_dir_all(fixture_dir).expect("create fixture dir");
    let path = format!("{fixture_dir}/brownian_qv_level14_1000seeds.csv");
    let mut out = fs::File::create(&path).expect("create fixture");
    writeln!(
        out,
        "# level-14 dyadic quadratic variation of Brownian paths, sigma = 1, horizon = 1, depth = 14"
    )
    .unwrap();
    writeln!(
        out,
        "# produced by: cargo run -p pathcalc-core --release --example calibrate"
    )
    .unwrap();
    writeln!(out, "seed,qv").unwrap();
    for (seed, q) in &rows {
        writeln!(out, "{seed},{q:.16e}").unwrap();
    }
    println!("fixture written to {path}\n");
}

/// F = t * x^2 on a Brownian path, continuous mode: residual decay 8 -> 14.
fn ito_reduction() {
    println!("== residual decay for F = t * x^2 on Brownian paths, levels 8,10,12,14 ==");
    let f = builtin(&BuiltinSpec::parse("cylinder:f=t * x^2").unwrap()).unwrap();
    let run = |seed: u64| -> (Vec<f64>, f64) {
        let p = pair_of(brownian(seed, 1.0), 1.0);
        let reports = unwrap_reports(
            change_of_variable_report(&*f, &p, 8..=DEPTH, SubdivisionScheme::Dyadic, Mode::Continuous)
                .unwrap(),
        );
        let picked: Vec<f64> = reports
            .iter()
            .filter(|r| r.level % 2 == 0)
            .map(|r| r.residual().abs())
            .collect();
        let lhs = reports.last().unwrap().lhs;
        (picked, lhs)
    };
    let passes = |res: &[f64], lhs: f64| -> bool {
        res.windows(2).all(|w| w[1] < w[0]) && res[3] <= 1e-2 * (1.0 + lhs.abs())
    };
    let (res, lhs) = run(SHIPPED_SEED);
    println!(
        "shipped seed {SHIPPED_SEED}: |residual| at 8,10,12,14 = {:?}, F_T = {lhs:.6}, bound {:.3e}, pass = {}",
        res.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>(),
        1e-2 * (1.0 + lhs.abs()),
        passes(&res, lhs)
    );
    let mut failing = Vec::new();
    for seed in 0..100u64 {
        let (res, lhs) = run(seed);
        if !passes(&res, lhs) {
            failing.push(seed);
        }
    }
    println!("seeds 0..99 failing strict two-level decay + final bound: {failing:?}\n");
}

/// Doléans identity: continuous case relative residual at level 14.
fn doleans_continuous() {
    println!("== Doléans continuous case: Y_T - 1 vs Föllmer sum, level 14 ==");
    let f = builtin(&BuiltinSpec::parse("doleans").unwrap()).unwrap();
    let sub = dyadic_subdivision(HORIZON, DEPTH).unwrap();
    let rel = |seed: u64| -> f64 {
        let p = pair_of(brownian(seed, 1.0), 1.0);
        let y_t = evaluate(&*f, HORIZON, &p).unwrap();
        let s = follmer_sum(&*f, &p, &sub, Mode::Continuous, true).unwrap();
        ((y_t - 1.0) - s).abs() / (1.0 + (y_t - 1.0).abs())
    };
    let shipped = rel(SHIPPED_SEED);
    let mut worst = (0.0_f64, 0u64);
    for seed in 0..200u64 {
        let r = rel(seed);
        if r > worst.0 {
            worst = (r, seed);
        }
    }
    println!("shipped seed {SHIPPED_SEED}: rel residual {shipped:.4e} (bound 5e-2)");
    println!("max over seeds 0..199: {:.4e} at seed {}\n", worst.0, worst.1);
}

/// Doléans identity on jump-diffusion paths: full report residual at level 14.
fn doleans_jump() {
    println!("== Doléans jump-diffusion case: level-14 report residual, 100 seeds ==");
    let f = builtin(&BuiltinSpec::parse("doleans").unwrap()).unwrap();
    let started = Instant::now();
    let rel = |seed: u64| -> f64 {
        let p = pair_of(gen_path(jump_diffusion_kind(), seed), 0.25);
        let reports = unwrap_reports(
            change_of_variable_report(
                &*f,
                &p,
                DEPTH..=DEPTH,
                SubdivisionScheme::JumpAugmented,
                Mode::Cadlag,
            )
            .unwrap(),
        );
        relative_residual(&reports[0])
    };
    let shipped = rel(SHIPPED_SEED);
    let mut all = Vec::with_capacity(100);
    for seed in 0..100u64 {
        all.push(rel(seed));
        if seed % 25 == 24 {
            println!("  ... {} seeds, {:.1}s", seed + 1, started.elapsed().as_secs_f64());
        }
    }
    all.sort_by(f64::total_cmp);
    println!("shipped seed {SHIPPED_SEED}: rel residual {shipped:.4e}");
    println!(
        "seeds 0..99: median {:.4e}  p95 {:.4e}  max {:.4e}",
        all[50], all[95], all[99]
    );
    println!("suggested pinned threshold (2x max): {:.4e}\n", 2.0 * all[99]);
}

/// Minimum running-max flip margin over a candidate seed base, in units of
/// the Hessian FD step.
fn min_flip_margin(base: u64, times: &[f64], scheme: &FDScheme) -> f64 {
    let mut min_ratio = f64::INFINITY;
    for s in 0..100u64 {
        let x = generate(&GenSpec {
            kind: GenKind::Brownian { sigma: 1.0 },
            horizon: HORIZON,
            depth: 10,
            seed: base + s,
        })
        .unwrap()
        .0;
        let p = pair_of(x, 1.0);
        for &t in times {
            let pt = p.restrict(t).unwrap();
            let xs = pt.x();
            let last = xs.last_index();
            let end = xs.value_at(last)[0];
            let mut prior = f64::NEG_INFINITY;
            for j in 0..last {
                prior = prior.max(xs.value_at(j)[0]);
            }
            let h = scheme.hessian_eps * end.abs().max(1.0);
            min_ratio = min_ratio.min((end - prior).abs() / h);
        }
    }
    min_ratio
}

/// Analytic vs finite-difference derivative sweep for every builtin.
fn fd_validation() {
    println!("== analytic vs FD derivatives, 100 Brownian pairs at depth 10 ==");
    let scheme = FDScheme::default();
    let times = [0.25, 0.5, 0.75];

    let mut base = 0u64;
    loop {
        let ratio = min_flip_margin(base, &times, &scheme);
        println!("seed base {base}: min running-max flip margin = {ratio:.2} hessian steps");
        if ratio >= 3.0 {
            break;
        }
        base += 10_000;
        assert!(base <= 100_000, "no seed base with comfortable flip margins");
    }
    println!("pinned seed base: {base}");

    let specs = [
        "cylinder:f=exp(t) * x^2 + sin(x)",
        "running_integral:g=x^2",
        "running_max",
        "quadratic_cylinder",
        "doleans",
    ];
    for spec in specs {
        let f = builtin(&BuiltinSpec::parse(spec).unwrap()).unwrap();
        let (mut g_max, mut h_max, mut d_max) = (0.0_f64, 0.0_f64, 0.0_f64);
        for s in 0..100u64 {
            let x = generate(&GenSpec {
                kind: GenKind::Brownian { sigma: 1.0 },
                horizon: HORIZON,
                depth: 10,
                seed: base + s,
            })
            .unwrap()
            .0;
            let p = pair_of(x, 1.0);
            for &t in &times {
                let ga = vertical_gradient(&*f, &p, t, &scheme).unwrap();
                let gf = vertical_gradient_fd(&*f, &p, t, &scheme).unwrap();
                for c in 0..ga.len() {
                    g_max = g_max.max(relative_error(gf[c], ga[c]));
                }
                let ha = vertical_hessian(&*f, &p, t, &scheme).unwrap();
                let hf = vertical_hessian_fd(&*f, &p, t, &scheme).unwrap();
                h_max = h_max.max(hf.max_abs_diff(&ha) / (1.0 + ha.max_abs()));
                let da = horizontal_derivative(&*f, &p, t, &scheme).unwrap();
                let df = horizontal_derivative_fd(&*f, &p, t, &scheme).unwrap();
                d_max = d_max.max(relative_error(df, da));
            }
        }
        println!(
            "{:>32}: gradient {g_max:.3e} (tol 1e-6)  hessian {h_max:.3e} (tol 1e-4)  horizontal {d_max:.3e} (tol 1e-3)",
            spec
        );
    }
    println!();
}

/// Zero-QV level-14 value and Dirichlet-sum QV agreement.
fn zero_qv_and_dirichlet() {
    println!("== zero-QV component and Dirichlet sum, level 14 ==");
    let sub = dyadic_subdivision(HORIZON, DEPTH).unwrap();
    let zq_kind = GenKind::ZeroQv {
        alpha: 0.75,
        amplitude: 0.25,
    };
    let shipped_zq = discrete_qv(&gen_path(zq_kind, SHIPPED_SEED), &sub)
        .unwrap()
        .total(0);
    println!("zero-QV path, shipped seed: level-14 QV = {shipped_zq:.4e} (bound 1e-2)");

    let rel_diff = |seed: u64| -> f64 {
        let bm = brownian(seed, 1.0);
        let zq = gen_path(zq_kind, seed);
        let (sum, _) = dirichlet_sum(&bm, &zq).unwrap();
        let q_bm = discrete_qv(&bm, &sub).unwrap().total(0);
        let q_sum = discrete_qv(&sum, &sub).unwrap().total(0);
        (q_sum - q_bm).abs() / q_bm
    };
    let shipped = rel_diff(SHIPPED_SEED);
    let mut worst = (0.0_f64, 0u64);
    let mut max_zq = 0.0_f64;
    for seed in 0..100u64 {
        let r = rel_diff(seed);
        if r > worst.0 {
            worst = (r, seed);
        }
        max_zq = max_zq.max(discrete_qv(&gen_path(zq_kind, seed), &sub).unwrap().total(0));
    }
    println!("dirichlet vs brownian-component QV, shipped seed: rel diff {shipped:.4e} (bound 2e-2)");
    println!("max rel diff over seeds 0..99: {:.4e} at seed {}", worst.0, worst.1);
    println!("max zero-QV level-14 value over seeds 0..99: {max_zq:.4e}\n");
}

/// Level-14 Föllmer sums under jump-augmented vs stopping-time subdivisions.
fn subdivision_independence() {
    println!("== subdivision independence at level 14, F = |x|^2 ==");
    let f = builtin(&BuiltinSpec::parse("quadratic_cylinder").unwrap()).unwrap();
    for (name, p) in corpus() {
        let run = |scheme: SubdivisionScheme| -> (f64, f64) {
            let sub = subdivision_for(scheme, &p, DEPTH).unwrap();
            let s = follmer_sum(&*f, &p, &sub, Mode::Cadlag, true).unwrap();
            let reports = unwrap_reports(
                change_of_variable_report(&*f, &p, DEPTH..=DEPTH, scheme, Mode::Cadlag).unwrap(),
            );
            (s, reports[0].residual().abs())
        };
        let (s_jump, r_jump) = run(SubdivisionScheme::JumpAugmented);
        let (s_stop, r_stop) = run(SubdivisionScheme::StoppingTime);
        println!(
            "{name:>14}: |S_jump - S_stop| = {:.3e}, residuals ({r_jump:.3e}, {r_stop:.3e})",
            (s_jump - s_stop).abs()
        );
    }
    println!();
}

/// Cross-variation polarization identity and PSD interval increments.
fn polarization_psd() {
    println!("== polarization identity and PSD increments, level 14 ==");
    let sub = dyadic_subdivision(HORIZON, DEPTH).unwrap();
    for (i, (name, p)) in corpus().into_iter().enumerate() {
        let x = p.x();
        let y = brownian(7_000 + i as u64, 0.7);
        let n = x.n_points();
        let mut values = Vec::with_capacity(2 * n);
        for j in 0..n {
            values.push(x.value_at(j)[0]);
            values.push(y.value_at(j)[0]);
        }
        let registry: Vec<JumpEntry> = x
            .registry()
            .iter()
            .map(|e| JumpEntry {
                index: e.index,
                delta: vec![e.delta[0], 0.0],
            })
            .collect();
        let z = CadlagPath::new(2, x.step(), values, registry).unwrap();
        let mq = cross_variation(&z, &sub).unwrap();
        let k = mq.times().len() - 1;

        let sum_vals: Vec<f64> = (0..n).map(|j| x.value_at(j)[0] + y.value_at(j)[0]).collect();
        let sum_path = CadlagPath::new(1, x.step(), sum_vals, x.registry().to_vec()).unwrap();
        let xx = discrete_qv(x, &sub).unwrap().total(0);
        let yy = discrete_qv(&y, &sub).unwrap().total(0);
        let ss = discrete_qv(&sum_path, &sub).unwrap().total(0);
        let polarized = 0.5 * (ss - xx - yy);
        let direct = mq.entry_at(k, 0, 1);

        let mut all_psd = true;
        for m in 1..=k {
            if !mq.increment(m - 1, m).is_psd(1e-12) {
                all_psd = false;
            }
        }
        println!(
            "{name:>14}: |polarized - direct| = {:.3e}, all {k} increments PSD: {all_psd}",
            (polarized - direct).abs()
        );
    }
    println!();
}

fn main() {
    let fixture_dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "crates/core/tests/fixtures".to_string());
    let started = Instant::now();
    identity_qv();
    telescoping();
    pure_jump_exactness();
    brownian_band(&fixture_dir);
    ito_reduction();
    doleans_continuous();
    doleans_jump();
    fd_validation();
    zero_qv_and_dirichlet();
    subdivision_independence();
    polarization_psd();
    println!("total: {:.1}s", started.elapsed().as_secs_f64());
}
