use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_chipfield");

fn config(mode: &str, res_mm: f64, extra: &str) -> String {
    format!(
        "[run]\nmode = {mode}\nfrequency_ghz = 60\nout_dir = out\n\
         [geometry]\ndie_side_mm = 22\npackage_side_mm = 33\nt_sio2_um = 13\n\
         grid_resolution_mm = {res_mm}\n{extra}"
    )
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn produce_map(dir: &Path) -> std::path::PathBuf {
    let cfg = write_config(dir, &config("map", 1.0, ""));
    let o = run_in(dir, &["--config", cfg.to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    dir.join("out").join("field_map.csv")
}

#[test]
fn map_mode_writes_csv_and_summary() {
    let dir = TempDir::new().unwrap();
    let csv = produce_map(dir.path());
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x_mm,y_mm,mag_db,re,im"));
    assert_eq!(lines.count(), 23 * 23 - 1);

    let summary = fs::read_to_string(dir.path().join("out/run_summary.txt")).unwrap();
    let ms: f64 = summary
        .lines()
        .find_map(|l| l.strip_prefix("sweep_ms = "))
        .expect("sweep_ms line")
        .parse()
        .unwrap();
    assert!(ms > 0.0);
    assert!(summary.contains("cells = 529"));
}

#[test]
fn self_comparison_reports_zero() {
    let dir = TempDir::new().unwrap();
    let csv = produce_map(dir.path());
    let reference = dir.path().join("reference.csv");
    fs::copy(&csv, &reference).unwrap();
    let cfg = write_config(
        dir.path(),
        &config(
            "compare",
            1.0,
            "[compare]\nreference_path = reference.csv\n",
        ),
    );
    let o = run_in(
        dir.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "--fail-above-db",
            "0.001",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(
        stdout(&o).contains("geometric mean error 0.000 dB"),
        "{}",
        stdout(&o)
    );
    let report = fs::read_to_string(dir.path().join("out/comparison_report.txt")).unwrap();
    assert!(report.contains("geometric_mean_error_db = 0.00000"));
    let errors = fs::read_to_string(dir.path().join("out/error_map.csv")).unwrap();
    assert!(errors.starts_with("x_mm,y_mm,error_db\n"));
}

#[test]
fn threshold_breach_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let csv = produce_map(dir.path());
    // Flatten the reference so it disagrees with the model everywhere.
    let text = fs::read_to_string(&csv).unwrap();
    let flat: String = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            if i == 0 {
                "x_mm,y_mm,mag_db\n".to_string()
            } else {
                let f: Vec<&str> = l.split(',').collect();
                if f[2].is_empty() {
                    format!("{},{},\n", f[0], f[1])
                } else {
                    format!("{},{},0\n", f[0], f[1])
                }
            }
        })
        .collect();
    fs::write(dir.path().join("flat.csv"), flat).unwrap();
    let cfg = write_config(
        dir.path(),
        &config("compare", 1.0, "[compare]\nreference_path = flat.csv\n"),
    );
    let path = cfg.to_str().unwrap();
    assert_eq!(
        run_in(dir.path(), &["--config", path]).status.code(),
        Some(0)
    );
    let o = run_in(dir.path(), &["--config", path, "--fail-above-db", "0.5"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("threshold 0.500 dB exceeded"));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &config("map", 1.0, "bogus_key = 1\n"));
    let o = run(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus_key"));

    let missing = dir.path().join("absent.cfg");
    assert_eq!(
        run(&["--config", missing.to_str().unwrap()]).status.code(),
        Some(1)
    );
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["--workers", "many"]).status.code(), Some(1));
}

#[test]
fn link_mode_prints_breakdown() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        &config("link", 1.0, "[link]\nrx_x_mm = 5\nrx_y_mm = 0\n"),
    );
    let o = run(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for word in ["direct", "heatsink", "edge", "total"] {
        assert!(out.contains(word), "missing {word} in\n{out}");
    }
}

#[test]
fn mode_flag_overrides_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        &config("map", 1.0, "[link]\nrx_x_mm = 3\nrx_y_mm = 4\n"),
    );
    let o = run_in(
        dir.path(),
        &["--config", cfg.to_str().unwrap(), "--mode", "link"],
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("link"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn emitted_example_config_is_runnable() {
    let o = run(&["--emit-example-config"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let dir = TempDir::new().unwrap();
    let text = text.replace("grid_resolution_mm = 0.1", "grid_resolution_mm = 2");
    let cfg = write_config(dir.path(), &text);
    let o = run_in(
        dir.path(),
        &["--config", cfg.to_str().unwrap(), "--workers", "2"],
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(dir.path().join("out/field_map.csv").exists());
}
