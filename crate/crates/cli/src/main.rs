//! `geodesic solve <config.json>`, `geodesic analyze <run_dir>`,
//! `geodesic render <run_dir>`.
//!
//! Exit codes: 0 on success, 2 for invalid input (bad configuration,
//! inadmissible partition size), 1 for any other failure. Failures print a
//! JSON report on stderr; `solve` also writes it to `error.json` in the
//! output directory when that directory is known.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use sdot_geodesic::render::render_dir;
use sdot_geodesic::run::{analyze_dir, run, RunConfig, Summary};
use sdot_geodesic::Error;

#[derive(Parser)]
#[command(name = "geodesic", version, about = "Generalized geodesics of volume-preserving maps via semi-discrete optimal transport")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the problem described by a JSON configuration and write a run directory.
    Solve { config: PathBuf },
    /// Recompute the analyses of an existing run directory.
    Analyze { run_dir: PathBuf },
    /// Draw SVG frames, probe bundles and pressure arrows for a run directory.
    Render { run_dir: PathBuf },
}

fn print_summary(dir: &Path, s: &Summary) {
    println!("run directory: {}", dir.display());
    println!("energy: {:.10}  E': {:.10}", s.energy, s.e_prime);
    match s.residual {
        Some(r) => println!("incompressibility residual: {r:.6e}  (bound E'/(4T^2) = {:.6e})", s.residual_bound),
        None => println!("residual bound E'/(4T^2): {:.6e}", s.residual_bound),
    }
    if let Some(d) = &s.dimension_estimate {
        println!("box dimension estimate: {:.4}  (fit over i in [{}, {}])", d.estimate, d.fit_range.0, d.fit_range.1);
    }
    println!("below classical threshold: {}", s.classical_threshold);
    println!("wall time: {:.2} s", s.wall_time_s);
}

fn error_report(e: &Error) -> (u8, serde_json::Value) {
    let code = if e.is_input_error() { 2 } else { 1 };
    let mut report = json!({ "error": e.kind(), "message": e.to_string(), "exit_code": code });
    if let Error::PartitionSize { n, admissible, .. } = e {
        report["n"] = json!(n);
        report["admissible"] = json!(admissible);
    }
    (code, report)
}

fn solve(config_path: &Path) -> Result<(), (Error, Option<PathBuf>)> {
    let config = RunConfig::load(config_path).map_err(|e| (e, None))?;
    let dir = config.output_dir.clone();
    let summary = run(&config).map_err(|e| (e, Some(dir.clone())))?;
    if config.render.frames || !config.render.trajectories.is_empty() {
        render_dir(&dir, config.render.frames).map_err(|e| (e, Some(dir.clone())))?;
    }
    print_summary(&dir, &summary);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve { config } => solve(config),
        Command::Analyze { run_dir } => analyze_dir(run_dir).map(|s| print_summary(run_dir, &s)).map_err(|e| (e, None)),
        Command::Render { run_dir } => render_dir(run_dir, true)
            .map(|r| {
                println!("wrote {} frames, {} probe figures{}", r.frames.len(), r.probes.len(), if r.pressure.is_some() { ", pressure figure" } else { "" });
                for p in &r.probes {
                    println!("probe at {:?} r={}: {} paths, bounding box covers {:.1}% of the domain", p.center, p.radius, p.paths, 100.0 * p.domain_fraction);
                }
            })
            .map_err(|e| (e, None)),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err((e, dir)) => {
            let (code, report) = error_report(&e);
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            eprintln!("{text}");
            if let Some(dir) = dir {
                if std::fs::create_dir_all(&dir).is_ok() {
                    let _ = std::fs::write(dir.join("error.json"), format!("{text}\n"));
                }
            }
            ExitCode::from(code)
        }
    }
}
