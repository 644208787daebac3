use std::path::Path;
use std::process::{Command, Output};

use adaprox_bench::scene_io::decode_header;
use adaprox_bench::{load_scene, read_summaries, read_trace_losses, Scene};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adaprox-bench"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = bench(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn only_summary(dir: &Path) -> std::path::PathBuf {
    let mut found: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("summary_"))
        .collect();
    assert_eq!(found.len(), 1, "{found:?}");
    found.pop().unwrap()
}

#[test]
fn pgm_run_reports_unit_subiterations() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&["run", "--problem", "nmf", "--mode", "pgm", "--seed", "0,1", "--out", out]);
    let rows = read_summaries(&only_summary(dir.path())).unwrap();
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert_eq!((row.subiters_a, row.subiters_s), (1.0, 1.0));
        assert_eq!(row.method, "pgm");
        let losses = read_trace_losses(&dir.path().join(&row.trace_file)).unwrap();
        assert_eq!(losses.len(), row.iterations);
        assert_eq!(losses.last().copied().unwrap().to_bits(), row.final_loss.to_bits());
    }
}

#[test]
fn trace_csv_has_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&["run", "--problem", "nmf", "--scheme", "amsgrad", "--max-iter", "20", "--out", out]);
    let row = read_summaries(&only_summary(dir.path())).unwrap().remove(0);
    let text = std::fs::read_to_string(dir.path().join(row.trace_file)).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "iteration,loss,subiters_A,subiters_S,rel_change_A,rel_change_S,elapsed_s"
    );
    assert_eq!(text.lines().count(), 21);
}

#[test]
fn non_convergence_is_marked() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let stdout = run_ok(&["run", "--problem", "mixmf", "--scheme", "adam", "--max-iter", "30", "--out", out]);
    assert!(stdout.contains("30*"), "{stdout}");
    let row = read_summaries(&only_summary(dir.path())).unwrap().remove(0);
    assert!(!row.converged && !row.failed);
    assert_eq!(row.marker, "*");
}

#[test]
fn json_format_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&[
        "run", "--problem", "multiband", "--scheme", "padam", "--format", "json", "--max-iter", "15", "--out", out,
    ]);
    let summary = only_summary(dir.path());
    assert_eq!(summary.extension().unwrap(), "json");
    let row = read_summaries(&summary).unwrap().remove(0);
    let losses = read_trace_losses(&dir.path().join(&row.trace_file)).unwrap();
    assert_eq!(losses.last().copied().unwrap().to_bits(), row.final_loss.to_bits());
}

#[test]
fn compare_sorts_and_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for (mode, scheme, alpha) in [("adaprox", "padam", "0.1"), ("pgm", "amsgrad", "0.1"), ("adaprox", "adam", "0.01")] {
        run_ok(&[
            "run", "--problem", "nmf", "--mode", mode, "--scheme", scheme, "--alpha", alpha, "--max-iter", "25",
            "--out", out,
        ]);
    }
    let table = dir.path().join("table.csv");
    let stdout = run_ok(&["compare", "--in", out, "--out", table.to_str().unwrap()]);
    assert!(stdout.contains("3 curves"), "{stdout}");

    let rows = read_summaries(&table).unwrap();
    let order: Vec<(f64, &str)> = rows.iter().map(|r| (r.alpha, r.method.as_str())).collect();
    assert_eq!(order, vec![(0.01, "adaprox-adam"), (0.1, "adaprox-padam"), (0.1, "pgm")]);
    for row in &rows {
        let stem = row.trace_file.split(".trace.").next().unwrap();
        let curve = std::fs::read_to_string(dir.path().join("table_curves").join(format!("{stem}.dat"))).unwrap();
        assert_eq!(curve.lines().count(), row.iterations);
        assert!(curve.lines().all(|l| l.split(' ').count() == 2));
    }
}

#[test]
fn duplicate_runs_give_identical_rows() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut rows = Vec::new();
    for d in &dirs {
        run_ok(&["run", "--problem", "nmf", "--max-iter", "40", "--out", d.path().to_str().unwrap()]);
        let mut r = read_summaries(&only_summary(d.path())).unwrap().remove(0);
        r.runtime_s = 0.0;
        rows.push(r);
    }
    assert_eq!(rows[0], rows[1]);
}

#[test]
fn gen_scene_records_seed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("astro.scene");
    run_ok(&["gen-scene", "--problem", "multiband", "--seed", "17", "--out", path.to_str().unwrap()]);
    let bytes = std::fs::read(&path).unwrap();
    let (header, _) = decode_header(&bytes).unwrap();
    assert_eq!((header.kind.as_str(), header.seed), ("astro", 17));
    match load_scene(&path).unwrap() {
        Scene::Astro(s) => assert_eq!(s.seed, 17),
        other => panic!("wrong kind {}", other.kind()),
    }
}

#[test]
fn invalid_spec_is_a_usage_error() {
    let out = bench(&["run", "--problem", "nmf", "--tol=-1", "--out", "/nonexistent/never"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("usage") && err.contains("tol"), "{err}");

    let out = bench(&["run", "--problem", "tensor"]);
    assert!(!out.status.success());
}

#[test]
fn truncated_scene_fails_to_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nmf.scene");
    run_ok(&["gen-scene", "--problem", "nmf", "--out", path.to_str().unwrap()]);
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 100]).unwrap();
    let err = load_scene(&path).unwrap_err().to_string();
    assert!(err.contains("length mismatch"), "{err}");
}

#[test]
fn numerical_failure_flags_row_and_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = bench(&[
        "run", "--problem", "nmf", "--scheme", "adagrad", "--alpha", "1e300", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let row = read_summaries(&only_summary(dir.path())).unwrap().remove(0);
    assert!(row.failed && !row.converged);
    assert!(row.error.contains("non-finite"), "{}", row.error);
    assert_eq!(row.marker, "");
}
