//! Command-line dispatch.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{load_config, ConfigError, RunConfig};
use crate::harness::{model_compare, run_study, StudyReport, StudySpec};
use crate::multiplier::{grid_sample_range, validate_admissible};
use crate::plot::{emit_plot, PlotError};
use crate::report::{write_atomic, write_diagnostics_csv, write_failed_marker, write_table};
use crate::snapshot::{write_snapshot, SnapshotMeta};
use crate::stepper::{run, RunError, Trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_BLOWUP: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "whitham-lab", version, about = "Whitham-Boussinesq systems: simulation, diagnostics and studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one configuration and write diagnostics and snapshots.
    Run {
        config: PathBuf,
        /// Overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a study described by a study configuration.
    Sweep {
        study: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check admissibility and non-cavitation without running.
    Validate { config: PathBuf },
    /// Compare two models on the same grid and initial data.
    Compare {
        config_a: PathBuf,
        config_b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in invariant suite.
    Selftest,
    /// Plot CSV columns against the first column as SVG.
    Plot {
        csv: PathBuf,
        /// Comma-separated column names.
        #[arg(long, value_delimiter = ',', required = true)]
        cols: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Logarithmic y axis.
        #[arg(long)]
        log: bool,
    },
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Run { config, out } => cmd_run(&config, out.as_deref()),
        Command::Sweep { study, out } => cmd_sweep(&study, out.as_deref()),
        Command::Validate { config } => cmd_validate(&config),
        Command::Compare { config_a, config_b, out } => cmd_compare(&config_a, &config_b, out.as_deref()),
        Command::Selftest => cmd_selftest(),
        Command::Plot { csv, cols, out, log } => cmd_plot(&csv, &cols, &out, log),
    }
}

fn config_failure(e: &ConfigError) -> i32 {
    eprintln!("error: {e}");
    match e {
        ConfigError::Io { .. } => EXIT_USAGE,
        _ => EXIT_VALIDATION,
    }
}

fn internal(e: impl std::fmt::Display) -> i32 {
    eprintln!("error: {e}");
    EXIT_INTERNAL
}

fn load(path: &Path) -> Result<RunConfig, i32> {
    match load_config(path) {
        Ok((cfg, validated)) => {
            for w in &validated.warnings {
                eprintln!("warning: {w}");
            }
            Ok(cfg)
        }
        Err(e) => Err(config_failure(&e)),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    write_atomic(path, |w| writeln!(w, "{text}"))
}

fn write_run_outputs(dir: &Path, cfg: &RunConfig, traj: &Trajectory) -> std::io::Result<()> {
    let meta = SnapshotMeta {
        mu: cfg.mu,
        epsilon: cfg.epsilon,
    };
    write_diagnostics_csv(&dir.join("diagnostics.csv"), &traj.reports)?;
    for (k, state) in traj.states.iter().enumerate() {
        write_snapshot(&dir.join(format!("snapshot_{k:05}.wbsnap")), state, meta).map_err(std::io::Error::other)?;
    }
    write_snapshot(&dir.join("final.wbsnap"), traj.last(), meta).map_err(std::io::Error::other)?;
    Ok(())
}

fn cmd_run(path: &Path, out: Option<&Path>) -> i32 {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let marker = dir.join(".failed");
    if marker.exists() {
        let _ = std::fs::remove_file(&marker);
    }
    let (model, init) = match cfg.build_model().and_then(|m| cfg.initial_state(&m).map(|s| (m, s))) {
        Ok(x) => x,
        Err(e) => return internal(e),
    };
    if let Err(e) = std::fs::create_dir_all(&dir) {
        return internal(e);
    }
    match run(&model, &init, &cfg.stepper_config(), &cfg.run_control()) {
        Ok(traj) => {
            let summary = serde_json::json!({
                "steps": traj.steps,
                "dt": traj.dt,
                "t_end": traj.last().time,
                "x_norm_s_initial": traj.reports.first().map(|r| r.x_norm_s),
                "x_norm_s_final": traj.reports.last().map(|r| r.x_norm_s),
            });
            let written = write_run_outputs(&dir, &cfg, &traj)
                .and_then(|_| write_json(&dir.join("summary.json"), &summary))
                .and_then(|_| write_atomic(&dir.join("config.json"), |w| writeln!(w, "{}", cfg.to_json())));
            match written {
                Ok(()) => {
                    println!("completed {} steps to t = {}; outputs in {}", traj.steps, traj.last().time, dir.display());
                    EXIT_OK
                }
                Err(e) => {
                    let _ = write_failed_marker(&dir, &format!("output failure: {e}"));
                    internal(e)
                }
            }
        }
        Err(RunError::BlowUpDetected { time, last_norm, partial }) => {
            let msg = format!("blow-up detected at t = {time} (X^s norm {last_norm:e})");
            eprintln!("{msg}");
            let _ = write_diagnostics_csv(&dir.join("diagnostics.partial.csv"), &partial.reports);
            let _ = write_failed_marker(&dir, &msg);
            EXIT_BLOWUP
        }
        Err(RunError::NonFinite { time, partial }) => {
            let msg = format!("blow-up detected at t = {time} (non-finite state)");
            eprintln!("{msg}");
            let _ = write_diagnostics_csv(&dir.join("diagnostics.partial.csv"), &partial.reports);
            let _ = write_failed_marker(&dir, &msg);
            EXIT_BLOWUP
        }
        Err(e @ RunError::CavitationViolated { .. }) => {
            eprintln!("error: {e}");
            EXIT_VALIDATION
        }
        Err(e) => {
            let _ = write_failed_marker(&dir, &e.to_string());
            internal(e)
        }
    }
}

fn cmd_validate(path: &Path) -> i32 {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return EXIT_USAGE;
        }
    };
    let cfg = match RunConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => return config_failure(&e),
    };
    if let (Ok(pair), Ok(grid)) = (cfg.model.pair(cfg.mu), cfg.grid()) {
        let r = validate_admissible(&pair, grid_sample_range(&grid), 256);
        println!(
            "admissibility: {} (sup|G1| = {:.6}, sup|G2| = {:.6}, min G1 = {:.6}, {} samples on [0, {:.3}])",
            if r.passed() { "ok" } else { "FAILED" },
            r.sup_g[0],
            r.sup_g[1],
            r.min_g1,
            r.n_samples,
            r.range.1
        );
        for v in &r.violations {
            println!("  violated clause: {v}");
        }
    }
    match cfg.validate() {
        Ok(v) => {
            for w in &v.warnings {
                println!("warning: {w}");
            }
            println!("non-cavitation: ok (min 1 + eps zeta0 = {:.6}, h_min = {})", v.min_depth, cfg.h_min);
            EXIT_OK
        }
        Err(e) => {
            for v in e.violations() {
                println!("invalid {v}");
            }
            config_failure(&e)
        }
    }
}

fn cmd_sweep(path: &Path, out: Option<&Path>) -> i32 {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return EXIT_USAGE;
        }
    };
    let spec: StudySpec = match serde_json::from_str(&text) {
        Ok(s) => s,
        Err(e) => return config_failure(&ConfigError::from(e)),
    };
    if let Err(e) = spec.base.validate() {
        return config_failure(&e);
    }
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&spec.base.output.dir));
    let report = match run_study(&spec) {
        Ok(r) => r,
        Err(e) => {
            let _ = std::fs::create_dir_all(&dir);
            let _ = write_failed_marker(&dir, &e.to_string());
            return internal(e);
        }
    };
    let table = study_table(&report);
    let written = write_json(&dir.join("study.json"), &report)
        .and_then(|_| write_table(&dir.join("study.csv"), &table.0, &table.1));
    match written {
        Ok(()) => {
            println!("study written to {}", dir.display());
            EXIT_OK
        }
        Err(e) => internal(e),
    }
}

fn study_table(report: &StudyReport) -> (Vec<&'static str>, Vec<Vec<f64>>) {
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    match report {
        StudyReport::EnergyGrowth(r) => (
            vec!["epsilon", "mu", "rate", "prefactor", "efold_time", "fit_points"],
            r.runs
                .iter()
                .map(|x| {
                    vec![
                        x.epsilon,
                        x.mu,
                        x.rate,
                        x.prefactor,
                        x.efold_time.unwrap_or(f64::NAN),
                        x.fit_points as f64,
                    ]
                })
                .collect(),
        ),
        StudyReport::Timescale { rows } => (
            vec!["epsilon", "mu", "completed", "t_target", "t_reached", "norm_ratio", "max_ratio"],
            rows.iter()
                .map(|x| vec![x.epsilon, x.mu, flag(x.completed), x.t_target, x.t_reached, x.norm_ratio, x.max_ratio])
                .collect(),
        ),
        StudyReport::Stability { cells } => (
            vec!["mu", "c_hat", "e0", "sup_residual", "max_error"],
            cells
                .iter()
                .map(|(mu, r)| {
                    vec![*mu, r.c_hat, r.e0, r.sup_residual, r.error.iter().cloned().fold(0.0, f64::max)]
                })
                .collect(),
        ),
        StudyReport::MuScaling(r) => (
            vec!["mu", "error", "error_fine", "resolved"],
            r.mus
                .iter()
                .enumerate()
                .map(|(i, &mu)| vec![mu, r.errors[i], r.errors_fine[i], flag(r.resolved[i])])
                .collect(),
        ),
        StudyReport::Convergence(r) => (
            vec!["kind", "step_or_n", "error"],
            r.temporal
                .iter()
                .map(|&(dt, e)| vec![0.0, dt, e])
                .chain(r.spatial.iter().map(|&(n, e)| vec![1.0, n as f64, e]))
                .collect(),
        ),
    }
}

fn cmd_compare(a: &Path, b: &Path, out: Option<&Path>) -> i32 {
    let ca = match load(a) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let cb = match load(b) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&ca.output.dir));
    let report = match model_compare(&ca, &cb, ca.t_end()) {
        Ok(r) => r,
        Err(e) => {
            let _ = std::fs::create_dir_all(&dir);
            let _ = write_failed_marker(&dir, &e.to_string());
            return match e {
                crate::harness::HarnessError::Run {
                    source: RunError::BlowUpDetected { .. } | RunError::NonFinite { .. },
                    ..
                } => {
                    eprintln!("{e}");
                    EXIT_BLOWUP
                }
                crate::harness::HarnessError::Mismatch(_) => {
                    eprintln!("error: {e}");
                    EXIT_VALIDATION
                }
                other => internal(other),
            };
        }
    };
    let rows: Vec<Vec<f64>> = (0..report.times.len())
        .map(|k| vec![report.times[k], report.error[k], report.residual[k]])
        .collect();
    let summary = serde_json::json!({
        "c_hat": report.c_hat,
        "e0": report.e0,
        "sup_residual": report.sup_residual,
        "bound_holds": report.bound_holds,
        "dt": report.dt,
    });
    let written = write_table(&dir.join("compare.csv"), &["time", "error", "residual"], &rows)
        .and_then(|_| write_json(&dir.join("compare.json"), &summary));
    match written {
        Ok(()) => {
            println!(
                "C^ = {:.6}, sup residual = {:.6e}, e0 = {:.6e}; outputs in {}",
                report.c_hat,
                report.sup_residual,
                report.e0,
                dir.display()
            );
            EXIT_OK
        }
        Err(e) => internal(e),
    }
}

fn cmd_selftest() -> i32 {
    let checks = crate::selftest::run_all();
    let mut failed = 0;
    for c in &checks {
        match &c.outcome {
            Ok(detail) => println!("PASS {:<22} {detail}", c.name),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:<22} {detail}", c.name);
            }
        }
    }
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_INTERNAL
    }
}

fn cmd_plot(csv: &Path, cols: &[String], out: &Path, log: bool) -> i32 {
    match emit_plot(csv, cols, out, log) {
        Ok(()) => EXIT_OK,
        Err(e @ PlotError::Io(_)) => internal(e),
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
