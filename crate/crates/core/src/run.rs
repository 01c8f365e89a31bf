//! Orchestration of the three run modes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::compare::{compare_maps, load_reference, ComparisonReport};
use crate::config::{Mode, RunConfig};
use crate::fieldmap::{compute_field_map, point_to_point_field, FieldGrid};
use crate::geometry::Point;
use crate::{Error, Result};

pub const FIELD_MAP_FILE: &str = "field_map.csv";
pub const SUMMARY_FILE: &str = "run_summary.txt";
pub const REPORT_FILE: &str = "comparison_report.txt";
pub const ERROR_MAP_FILE: &str = "error_map.csv";

/// Exit code when the comparison exceeds `fail_above_db`.
pub const EXIT_THRESHOLD: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub exit_code: i32,
    /// Human-readable text for stdout.
    pub message: String,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TimedMap {
    pub grid: FieldGrid,
    pub sweep_ms: f64,
}

pub fn timed_map(config: &RunConfig) -> Result<TimedMap> {
    let scene = config.scene()?;
    let options = config.map_options()?;
    let spec = config.grid_spec();
    let start = Instant::now();
    let grid = compute_field_map(&scene, &spec, &options)?;
    let sweep_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(TimedMap { grid, sweep_ms })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    match config.mode {
        Mode::Map => run_map(config),
        Mode::Link => run_link(config),
        Mode::Compare => run_compare(config),
    }
}

fn run_map(config: &RunConfig) -> Result<RunOutcome> {
    let TimedMap { grid, sweep_ms } = timed_map(config)?;
    let dir = &config.out_dir;
    ensure_dir(dir)?;
    let csv_path = dir.join(FIELD_MAP_FILE);
    write_file(&csv_path, grid.to_csv_string().as_bytes())?;

    let evaluated = grid.len() - grid.excluded_cells().count();
    let workers = match config.workers {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    };
    let mut summary = String::new();
    let _ = writeln!(summary, "mode = map");
    let _ = writeln!(summary, "frequency_ghz = {}", config.frequency_ghz);
    let _ = writeln!(summary, "grid = {0}x{0}", grid.dim());
    let _ = writeln!(summary, "cells = {}", grid.len());
    let _ = writeln!(summary, "cells_evaluated = {evaluated}");
    let _ = writeln!(summary, "workers = {workers}");
    let _ = writeln!(summary, "reference_amplitude = {:e}", grid.reference);
    let _ = writeln!(summary, "sweep_ms = {sweep_ms:.3}");
    let summary_path = dir.join(SUMMARY_FILE);
    write_file(&summary_path, summary.as_bytes())?;

    Ok(RunOutcome {
        exit_code: 0,
        message: format!(
            "{evaluated} cells in {sweep_ms:.1} ms -> {}",
            csv_path.display()
        ),
        artifacts: vec![csv_path, summary_path],
    })
}

fn run_link(config: &RunConfig) -> Result<RunOutcome> {
    let (x, y) = config.link_rx_mm.ok_or_else(|| Error::Config {
        path: PathBuf::from("<config>"),
        message: "link mode needs [link] rx_x_mm and rx_y_mm".into(),
    })?;
    let scene = config.scene()?;
    let options = config.map_options()?;
    let src = scene.geometry.antenna;
    let rx = Point::new(x * 1e-3, y * 1e-3);
    let link = point_to_point_field(&scene, src, rx, &options)?;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "link ({:.3}, {:.3}) mm -> ({x:.3}, {y:.3}) mm",
        src.x * 1e3,
        src.y * 1e3
    );
    let _ = writeln!(
        out,
        "{:<12} {:>11} {:>12} {:>11} {:>10}",
        "component", "path_mm", "|coef|", "mag_db", "phase_deg"
    );
    for c in &link.components {
        let _ = writeln!(
            out,
            "{:<12} {:>11.4} {:>12.6} {:>11.3} {:>10.2}",
            c.kind.to_string(),
            c.path_length() * 1e3,
            c.coefficient.norm(),
            20.0 * c.amplitude.norm().log10(),
            c.amplitude.arg().to_degrees()
        );
    }
    let _ = writeln!(
        out,
        "{:<12} {:>11} {:>12} {:>11.3} {:>10.2}",
        "total",
        "",
        "",
        20.0 * link.total.norm().log10(),
        link.total.arg().to_degrees()
    );
    Ok(RunOutcome {
        exit_code: 0,
        message: out,
        artifacts: vec![],
    })
}

fn run_compare(config: &RunConfig) -> Result<RunOutcome> {
    let path = config
        .reference_path
        .as_ref()
        .ok_or_else(|| Error::Config {
            path: PathBuf::from("<config>"),
            message: "compare mode needs [compare] reference_path".into(),
        })?;
    let reference = load_reference(path)?;
    let TimedMap { grid, .. } = timed_map(config)?;
    let report = compare_maps(&grid.to_db_map(), &reference, config.alignment)?;

    let dir = &config.out_dir;
    ensure_dir(dir)?;
    let report_path = dir.join(REPORT_FILE);
    let error_path = dir.join(ERROR_MAP_FILE);
    let mut buf = Vec::new();
    report
        .write_summary(&mut buf)
        .map_err(|e| Error::io(&report_path, e))?;
    write_file(&report_path, &buf)?;
    let mut buf = Vec::new();
    report
        .write_error_map(&mut buf)
        .map_err(|e| Error::io(&error_path, e))?;
    write_file(&error_path, &buf)?;

    let exit_code = if exceeds(&report, config.fail_above_db) {
        EXIT_THRESHOLD
    } else {
        0
    };
    let mut message = format!(
        "geometric mean error {:.3} dB, max {:.3} dB over {} cells ({})",
        report.geometric_mean_error_db,
        report.max_error_db,
        report.cells_compared,
        report.alignment
    );
    if exit_code != 0 {
        let _ = write!(
            message,
            "\nthreshold {:.3} dB exceeded",
            config.fail_above_db.unwrap_or_default()
        );
    }
    Ok(RunOutcome {
        exit_code,
        message,
        artifacts: vec![report_path, error_path],
    })
}

pub fn exceeds(report: &ComparisonReport, threshold_db: Option<f64>) -> bool {
    threshold_db.is_some_and(|t| report.geometric_mean_error_db > t)
}
