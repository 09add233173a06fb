//! Dispatching checks and writing their outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use solitonlab::report::{convergence_csv, format_float, long_csv, stability_csv, to_json};
use solitonlab::variation::{convergence_study, default_ladder, run_check, CheckKind};
use solitonlab::CheckReport;

use crate::config::{Mode, RunConfig, RunDocument};
use crate::error::CliError;

/// Run every selected check. Checks are independent jobs; their reports
/// come back in selection order.
pub fn execute(config: &RunConfig) -> RunDocument {
    let reports: Vec<CheckReport> = config.checks.par_iter().map(|&kind| run_one(config, kind)).collect();
    let all_passed = reports.iter().all(|r| r.passed);
    RunDocument { config: config.clone(), reports, all_passed }
}

fn run_one(config: &RunConfig, kind: CheckKind) -> CheckReport {
    let start = Instant::now();
    let result = match config.mode {
        Mode::Verify => run_check(kind, &config.soliton, config.backend, &config.settings),
        Mode::Converge => {
            let ladder =
                config.settings.resolutions.clone().unwrap_or_else(|| default_ladder(config.soliton.resolution));
            convergence_study(kind, &config.soliton, &ladder, config.backend, &config.settings)
        }
    };
    let mut rep = result.unwrap_or_else(|e| {
        let mut rep = CheckReport::new(kind.name(), Some(config.soliton.clone()), config.backend);
        rep.sup_residual = f64::INFINITY;
        rep.l2_residual = f64::INFINITY;
        rep.note(format!("error: {e}"));
        rep
    });
    if config.record_timings {
        rep.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
    }
    rep
}

/// Human-readable summary, one row per check.
pub fn summary_table(reports: &[CheckReport]) -> String {
    let mut out = format!(
        "{:<12} {:<9} {:>12} {:>12} {:>8} {:>10}  {}\n",
        "check", "backend", "residual", "tolerance", "order", "resolution", "status"
    );
    for r in reports {
        let order = r.observed_order.map(|o| format!("{o:.3}")).unwrap_or_else(|| "-".into());
        let res: Vec<String> = r.resolutions.iter().map(|x| x.to_string()).collect();
        out.push_str(&format!(
            "{:<12} {:<9} {:>12.3e} {:>12.3e} {:>8} {:>10}  {}\n",
            r.check,
            r.backend.name(),
            r.sup_residual,
            r.tolerance,
            order,
            res.join("/"),
            if r.passed { "PASS" } else { "FAIL" }
        ));
        for note in r.notes.iter().filter(|n| n.starts_with("error:")) {
            out.push_str(&format!("    {note}\n"));
        }
    }
    out
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if path.exists() {
        eprintln!("notice: overwriting {}", path.display());
    }
    fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// `<stem>_samples.csv` next to a plot-data path.
pub fn samples_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_samples.csv"))
}

/// Long-format CSV of every report, plus per-sample stability rows when a
/// scan is present. No-op with a warning for an empty set.
pub fn emit_plot_data(reports: &[CheckReport], path: &Path) -> Result<(), CliError> {
    if reports.is_empty() {
        eprintln!("warning: no reports, {} not written", path.display());
        return Ok(());
    }
    write(path, &long_csv(reports))?;
    if reports.iter().any(|r| !r.details.stability.is_empty()) {
        write(&samples_path(path), &stability_csv(reports))?;
    }
    Ok(())
}

/// Write the outputs a config asks for.
pub fn write_outputs(doc: &RunDocument) -> Result<(), CliError> {
    let config = &doc.config;
    if let Some(out) = &config.out {
        let text = match config.mode {
            Mode::Verify => to_json(doc).expect("reports serialize"),
            Mode::Converge if doc.reports.len() == 1 => convergence_csv(&doc.reports[0].details.convergence),
            Mode::Converge => long_csv(&doc.reports),
        };
        write(out, &text)?;
    }
    if let Some(path) = &config.plot_data {
        emit_plot_data(&doc.reports, path)?;
    }
    Ok(())
}

/// Per-level rows of every refinement study.
pub fn convergence_table(reports: &[CheckReport]) -> String {
    let mut out = String::new();
    for r in reports.iter().filter(|r| !r.details.convergence.is_empty()) {
        out.push_str(&format!("{} ({})\n", r.check, r.backend.name()));
        for row in &r.details.convergence {
            let order = row.order.map(|o| format!("{o:.3}")).unwrap_or_else(|| "-".into());
            out.push_str(&format!("  {:>6} {:>24} {:>8}\n", row.resolution, format_float(row.sup_residual), order));
        }
    }
    out
}

/// Exit status of a finished run: 0 when every check passed, 1 otherwise.
pub fn status(doc: &RunDocument) -> i32 {
    if doc.all_passed {
        0
    } else {
        1
    }
}

/// Reports with timings removed, for comparing reruns.
pub fn comparable(reports: &[CheckReport]) -> String {
    let stripped: Vec<CheckReport> = reports
        .iter()
        .cloned()
        .map(|mut r| {
            r.wall_clock_seconds = None;
            r
        })
        .collect();
    to_json(&stripped).expect("reports serialize")
}

/// Re-run a report's configuration. Returns the fresh document and whether
/// its residuals reproduce the stored ones exactly.
pub fn rerun(report: &Path) -> Result<(RunDocument, bool), CliError> {
    let text = fs::read_to_string(report).map_err(|e| CliError::Usage(format!("{}: {e}", report.display())))?;
    let old: RunDocument =
        serde_json::from_str(&text).map_err(|source| CliError::Json { path: report.to_path_buf(), source })?;
    let new = execute(&old.config);
    let same = comparable(&old.reports) == comparable(&new.reports);
    Ok((new, same))
}
