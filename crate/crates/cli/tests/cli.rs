//! End-to-end tests driving the `pathcalc` binary: the documented example
//! invocations, exit-code contracts, configuration precedence, and the
//! byte-identical-rerun guarantee.

use std::path::Path;
use std::process::{Command, Output};

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pathcalc"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

/// Data rows of an emitted CSV: everything after the `#` header block and the
/// column row, split on commas.
fn data_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn column_row(text: &str) -> &str {
    text.lines().find(|l| !l.starts_with('#')).expect("column row")
}

#[test]
fn generate_writes_path_and_sidecar_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "generate", "--kind", "brownian", "--seed", "42", "--depth", "14", "--out", "bm.csv",
    ];
    let out = run_in(dir.path(), &args);
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let path_csv = read(dir.path(), "bm.csv");
    let meta_csv = read(dir.path(), "bm.meta.csv");
    for text in [&path_csv, &meta_csv] {
        assert!(text.starts_with("# pathcalc "), "header echoes the version");
        assert!(text.contains("# kind = brownian:sigma=1"));
        assert!(text.contains("# seed = 42"));
        assert!(text.contains("# depth = 14"));
    }
    assert!(meta_csv.contains("record,index,time,values"));
    // 2^14 + 1 samples, no jump rows on a Brownian path.
    assert_eq!(data_rows(&path_csv).len(), (1 << 14) + 1);

    let mut rerun_args = args;
    rerun_args[8] = "bm2.csv";
    let rerun = run_in(dir.path(), &rerun_args);
    assert!(rerun.status.success());
    assert_eq!(path_csv, read(dir.path(), "bm2.csv"), "byte-identical rerun");
}

#[test]
fn verify_surfaces_telescoping_residuals_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let gen = run_in(
        dir.path(),
        &["generate", "--kind", "brownian", "--seed", "42", "--depth", "14", "--out", "bm.csv"],
    );
    assert!(gen.status.success(), "stderr: {}", stderr(&gen));

    let args = [
        "verify", "--functional", "quadratic_cylinder", "--path-file", "bm.csv", "--levels",
        "8..14", "--mode", "continuous", "--out", "r.csv",
    ];
    let out = run_in(dir.path(), &args);
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let report = read(dir.path(), "r.csv");
    assert_eq!(
        column_row(&report),
        "level,intervals,lhs,horizontal,trace,follmer,jumps,small_jump_bound,residual"
    );
    let rows = data_rows(&report);
    assert_eq!(rows.len(), 7, "levels 8..14 inclusive");
    for (i, row) in rows.iter().enumerate() {
        let level: u32 = row[0].parse().unwrap();
        let intervals: usize = row[1].parse().unwrap();
        let residual: f64 = row[8].parse().unwrap();
        assert_eq!(level, 8 + i as u32);
        assert_eq!(intervals, 1usize << level);
        assert!(
            residual.abs() <= 1e-12,
            "level {level} residual {residual:e}"
        );
    }

    let mut rerun_args = args;
    rerun_args[10] = "r2.csv";
    let rerun = run_in(dir.path(), &rerun_args);
    assert!(rerun.status.success());
    assert_eq!(report, read(dir.path(), "r2.csv"), "byte-identical rerun");
}

#[test]
fn per_run_outputs_agree_across_input_provenance() {
    // A generated file read back must verify to the same bits as the same
    // kind realized in memory: values round-trip through 17 digits exactly.
    let dir = tempfile::tempdir().unwrap();
    let gen = run_in(
        dir.path(),
        &["generate", "--kind", "brownian", "--seed", "7", "--depth", "8", "--out", "p.csv"],
    );
    assert!(gen.status.success());
    let from_file = run_in(
        dir.path(),
        &[
            "verify", "--functional", "doleans", "--path-file", "p.csv", "--levels", "4..8",
            "--out", "a.csv",
        ],
    );
    let from_kind = run_in(
        dir.path(),
        &[
            "verify", "--functional", "doleans", "--kind", "brownian", "--seed", "7", "--depth",
            "8", "--levels", "4..8", "--out", "b.csv",
        ],
    );
    assert!(from_file.status.success(), "stderr: {}", stderr(&from_file));
    assert!(from_kind.status.success(), "stderr: {}", stderr(&from_kind));
    assert_eq!(
        data_rows(&read(dir.path(), "a.csv")),
        data_rows(&read(dir.path(), "b.csv")),
        "same numbers regardless of provenance; only the header echo differs"
    );
}

#[test]
fn qv_rejects_levels_beyond_the_grid_depth() {
    let dir = tempfile::tempdir().unwrap();
    let gen = run_in(
        dir.path(),
        &["generate", "--kind", "brownian", "--seed", "42", "--depth", "14", "--out", "bm.csv"],
    );
    assert!(gen.status.success());
    let out = run_in(
        dir.path(),
        &["qv", "--path-file", "bm.csv", "--levels", "20..22", "--out", "q.csv"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("level exceeds grid depth"),
        "stderr: {}",
        stderr(&out)
    );
    assert!(!dir.path().join("q.csv").exists(), "no partial output");
}

#[test]
fn qv_reports_atoms_and_expected_totals() {
    let dir = tempfile::tempdir().unwrap();
    // x = 0.7 * 1_{[3/16, 1]}: total QV is 0.49 at every level; the atom is
    // resolved once the dyadic grid contains 3/16, i.e. from level 4 on.
    let out = run_in(
        dir.path(),
        &["qv", "--kind", "step", "--depth", "6", "--levels", "0..6", "--out", "q.csv"],
    );
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let table = read(dir.path(), "q.csv");
    assert_eq!(
        column_row(&table),
        "level,intervals,total,atomic_total,expected_total"
    );
    for row in data_rows(&table) {
        let level: u32 = row[0].parse().unwrap();
        let total: f64 = row[2].parse().unwrap();
        let atomic: f64 = row[3].parse().unwrap();
        let expected: f64 = row[4].parse().unwrap();
        assert_eq!(total, 0.7 * 0.7);
        assert_eq!(expected, 0.7 * 0.7);
        assert_eq!(atomic, if level >= 4 { 0.7 * 0.7 } else { 0.0 });
    }

    // The expected_total column also rides on a --meta-file sidecar.
    let gen = run_in(
        dir.path(),
        &["generate", "--kind", "step", "--depth", "6", "--out", "s.csv"],
    );
    assert!(gen.status.success());
    let out = run_in(
        dir.path(),
        &[
            "qv", "--path-file", "s.csv", "--meta-file", "s.meta.csv", "--levels", "0..6",
            "--out", "q2.csv",
        ],
    );
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert_eq!(data_rows(&read(dir.path(), "q2.csv")), data_rows(&table));

    // Without ground truth the column disappears.
    let out = run_in(
        dir.path(),
        &["qv", "--path-file", "s.csv", "--levels", "0..6", "--out", "q3.csv"],
    );
    assert!(out.status.success());
    assert_eq!(
        column_row(&read(dir.path(), "q3.csv")),
        "level,intervals,total,atomic_total"
    );
}

#[test]
fn config_file_fills_gaps_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "seed = 7\ndepth = 8\n").unwrap();
    let with_config = run_in(
        dir.path(),
        &[
            "generate", "--config", "run.toml", "--kind", "brownian", "--seed", "9", "--out",
            "a.csv",
        ],
    );
    assert!(with_config.status.success(), "stderr: {}", stderr(&with_config));
    let with_flags = run_in(
        dir.path(),
        &["generate", "--kind", "brownian", "--seed", "9", "--depth", "8", "--out", "b.csv"],
    );
    assert!(with_flags.status.success());
    assert_eq!(
        read(dir.path(), "a.csv"),
        read(dir.path(), "b.csv"),
        "flag seed=9 beats file seed=7; file depth=8 beats default 14"
    );
}

#[test]
fn derive_validates_builtins_within_default_tolerances() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "derive", "--kind", "brownian", "--seed", "42", "--depth", "10", "--functional",
            "cylinder:f=exp(t) * x^2 + sin(x)", "--out", "d.csv",
        ],
    );
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let table = read(dir.path(), "d.csv");
    assert_eq!(
        column_row(&table),
        "time,gradient,gradient_fd,gradient_err,hessian,hessian_fd,hessian_err,\
         horizontal,horizontal_fd,horizontal_err"
    );
    let rows = data_rows(&table);
    assert_eq!(rows.len(), 3, "default times T/4, T/2, 3T/4");
    for row in &rows {
        let gradient_err: f64 = row[3].parse().unwrap();
        let hessian_err: f64 = row[6].parse().unwrap();
        let horizontal_err: f64 = row[9].parse().unwrap();
        assert!(gradient_err <= 1e-6);
        assert!(hessian_err <= 1e-4);
        assert!(horizontal_err <= 1e-3);
    }
}

#[test]
fn derive_tolerance_violations_exit_1_with_the_table_written() {
    let dir = tempfile::tempdir().unwrap();
    // Central differences of exp carry ~1e-11 relative truncation error, so
    // an absurd gradient tolerance must trip all three times.
    let out = run_in(
        dir.path(),
        &[
            "derive", "--kind", "brownian", "--seed", "42", "--depth", "10", "--functional",
            "cylinder:f=exp(x)", "--tol-gradient", "1e-18", "--out", "d.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("3 of 9"), "stderr: {}", stderr(&out));
    assert_eq!(data_rows(&read(dir.path(), "d.csv")).len(), 3, "table still written");
}

#[test]
fn integrate_reports_follmer_sums_and_use_fd_stays_close() {
    let dir = tempfile::tempdir().unwrap();
    let analytic = run_in(
        dir.path(),
        &[
            "integrate", "--kind", "brownian", "--seed", "1", "--depth", "8", "--functional",
            "quadratic_cylinder", "--levels", "8", "--out", "a.csv",
        ],
    );
    assert!(analytic.status.success(), "stderr: {}", stderr(&analytic));
    let fd = run_in(
        dir.path(),
        &[
            "integrate", "--kind", "brownian", "--seed", "1", "--depth", "8", "--functional",
            "quadratic_cylinder", "--levels", "8", "--use-fd", "--out", "b.csv",
        ],
    );
    assert!(fd.status.success(), "stderr: {}", stderr(&fd));
    let a = read(dir.path(), "a.csv");
    let b = read(dir.path(), "b.csv");
    assert!(a.contains("# use_fd = false"));
    assert!(b.contains("# use_fd = true"));
    assert_eq!(column_row(&a), "level,intervals,follmer_sum");
    let sa: f64 = data_rows(&a)[0][2].parse().unwrap();
    let sb: f64 = data_rows(&b)[0][2].parse().unwrap();
    assert!(
        (sa - sb).abs() <= 1e-6 * (1.0 + sa.abs()),
        "fd {sb} vs analytic {sa}"
    );
}

#[test]
fn cadlag_jump_verification_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "verify", "--kind", "jump_diffusion", "--seed", "42", "--depth", "10",
            "--functional", "quadratic_cylinder", "--levels", "10", "--scheme", "jump",
            "--mode", "cadlag", "--out", "r.csv",
        ],
    );
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let rows = data_rows(&read(dir.path(), "r.csv"));
    let jumps: f64 = rows[0][6].parse().unwrap();
    let residual: f64 = rows[0][8].parse().unwrap();
    assert!(jumps > 0.0, "resolved jumps must contribute");
    assert!(residual.abs() <= 1e-12, "residual {residual:e}");
}

#[test]
fn usage_errors_exit_2_with_one_line_messages() {
    let dir = tempfile::tempdir().unwrap();
    let cases: &[&[&str]] = &[
        &["qv", "--kind", "brownian", "--levels", "0..4", "--frobnicate"],
        &["qv", "--kind", "heston", "--levels", "0..4"],
        &["qv", "--levels", "0..4"],
        &["verify", "--kind", "brownian", "--functional", "entropy", "--levels", "0..4"],
        &["verify", "--kind", "brownian", "--functional", "cylinder:f=exp(", "--levels", "0..4"],
        &["verify", "--kind", "brownian", "--functional", "doleans", "--levels", "0..4", "--mode", "cadlag"],
        &["verify", "--kind", "brownian", "--functional", "doleans", "--levels", "4..0"],
        &["integrate", "--kind", "brownian", "--functional", "doleans"],
        &["generate", "--kind", "brownian"],
        &["generate", "--out", "x.csv"],
        &["derive", "--kind", "brownian", "--functional", "doleans", "--at", "2.0"],
        &["qv", "--kind", "brownian", "--path-file", "bm.csv", "--levels", "0..4"],
        &["qv", "--path-file", "no_such_file.csv", "--levels", "0..4"],
    ];
    for args in cases {
        let out = run_in(dir.path(), args);
        assert_eq!(
            out.status.code(),
            Some(2),
            "expected usage exit for {args:?}, stderr: {}",
            stderr(&out)
        );
        assert!(!stderr(&out).is_empty(), "silent failure for {args:?}");
    }
}

#[test]
fn help_and_version_exit_0() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["--help"][..], &["--version"][..], &["verify", "--help"][..]] {
        let out = run_in(dir.path(), args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn stdout_is_the_default_sink() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["qv", "--kind", "linear", "--depth", "4", "--levels", "0..2"],
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# pathcalc "));
    assert_eq!(data_rows(&text).len(), 3);
}
