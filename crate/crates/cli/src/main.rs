/*
Copyright 2026 The cdfplan Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
//! `cdfplan` command-line interface.

mod serve;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use cdfplan::cdf::{build_cdf_field, write_field, CdfField};
use cdfplan::config::ScenarioFile;
use cdfplan::planner::{baseline_planner, plan_bubbles, PlannerConfig};
use cdfplan::sim::{bench_planners, run_episode, Frame};
use cdfplan::trace::{read_trace, write_trace};
use cdfplan::PointCloud64;
use clap::{Parser, Subcommand};
use serde_json::json;

/// Exit codes.
pub(crate) const EXIT_FAILURE: u8 = 1;
pub(crate) const EXIT_CONFIG: u8 = 2;
pub(crate) const EXIT_PORT_BUSY: u8 = 3;

#[derive(Parser)]
#[command(name = "cdfplan", version, about = "Distance-field planning and safety filtering for planar arms")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tabulate the distance field for a scenario's arm and write it to a file.
    BuildCdf {
        /// Scenario file (TOML).
        #[arg(long)]
        scenario: PathBuf,
        /// Output field file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan once from the scenario's start on its t = 0 obstacles and print the result as JSON.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        /// Use the dense-checking roadmap planner instead of the bubble planner.
        #[arg(long)]
        baseline: bool,
        /// Planner seed; defaults to the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a full episode. Exits 0 only if the goal was reached with no collision ticks.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Trace output, one JSON record per tick.
        #[arg(long)]
        trace: PathBuf,
        /// Metrics output (JSON).
        #[arg(long)]
        metrics: PathBuf,
        /// Pass nominal commands through unfiltered.
        #[arg(long)]
        no_filter: bool,
    },
    /// Compare both planners on every scenario in a directory and write a CSV table.
    Bench {
        /// Directory of scenario files; every *.toml is used.
        #[arg(long)]
        suite: PathBuf,
        /// Planner seeds per scenario.
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        /// CSV output: scenario, planner, median_checks, median_path_len, success_rate.
        #[arg(long)]
        out: PathBuf,
    },
    /// Stream a recorded trace as state messages to the first WebSocket client.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        /// Playback speed multiplier.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long, default_value_t = 8765)]
        port: u16,
    },
    /// Run a live episode and broadcast state over WebSocket; clients may send commands.
    Serve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        /// Ticks per second of wall-clock time.
        #[arg(long, default_value_t = 50.0)]
        tick_hz: f64,
        /// Stop after this many ticks.
        #[arg(long)]
        max_ticks: Option<u64>,
    },
}

/// Error with the exit code it maps to.
pub(crate) struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<cdfplan::Error> for Failure {
    fn from(e: cdfplan::Error) -> Self {
        let code = match e {
            cdfplan::Error::Config(_) | cdfplan::Error::Format(_) | cdfplan::Error::BudgetExceeded { .. } => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        };
        Self::new(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::new(EXIT_FAILURE, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("CDFPLAN_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::BuildCdf { scenario, out } => build_cdf(&scenario, &out),
        Cmd::Plan { scenario, baseline, seed } => plan(&scenario, baseline, seed),
        Cmd::Run { scenario, trace, metrics, no_filter } => run(&scenario, &trace, &metrics, no_filter),
        Cmd::Bench { suite, seeds, out } => bench(&suite, seeds, &out),
        Cmd::Replay { trace, speed, port } => replay(&trace, speed, port),
        Cmd::Serve { scenario, port, tick_hz, max_ticks } => serve_cmd(&scenario, port, tick_hz, max_ticks),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

fn base_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn load(path: &Path) -> Result<(ScenarioFile, Arc<CdfField>), Failure> {
    let file = ScenarioFile::load(path)?;
    let field = file.load_field(base_dir(path))?;
    Ok((file, field))
}

fn build_cdf(scenario: &Path, out: &Path) -> Outcome {
    let file = ScenarioFile::load(scenario)?;
    let arm = file.arm()?;
    let clock = Instant::now();
    let field: CdfField = build_cdf_field(&arm, &file.grid_spec(&arm))?;
    let seconds = clock.elapsed().as_secs_f64();
    write_field(&field, BufWriter::new(File::create(out)?))?;
    let (lq, lp) = field.certified_lipschitz();
    println!("{}", json!({ "lipschitz_q": lq, "lipschitz_p": lp, "build_seconds": seconds, "out": out }));
    Ok(())
}

fn plan(scenario: &Path, baseline: bool, seed: Option<u64>) -> Outcome {
    let (file, field) = load(scenario)?;
    let sc = file.to_scenario()?;
    let cloud = PointCloud64::stationary(Frame::capture(&sc.obstacles, 0.0).points)?;
    let cfg = PlannerConfig { rng_seed: seed.unwrap_or(sc.seed), ..sc.planner.clone() };
    let result = if baseline {
        baseline_planner(&sc.arm, &field, &cloud, &sc.q_start, sc.target_ee, &cfg)
    } else {
        plan_bubbles(&sc.arm, &field, &cloud, &sc.q_start, sc.target_ee, &cfg).map(|(p, _)| p)
    };
    match result {
        Ok(p) => {
            println!(
                "{}",
                json!({
                    "planner": if baseline { "baseline" } else { "bubble" },
                    "h_evaluations": p.stats.h_evaluations,
                    "path_length": p.stats.path_length,
                    "samples_drawn": p.stats.samples_drawn,
                    "planning_time": p.stats.planning_time,
                    "waypoints": p.waypoints.iter().map(|w| w.as_slice().to_vec()).collect::<Vec<_>>(),
                })
            );
            Ok(())
        }
        Err(f) => Err(Failure::new(EXIT_FAILURE, f.to_string())),
    }
}

fn run(scenario: &Path, trace: &Path, metrics: &Path, no_filter: bool) -> Outcome {
    let (file, field) = load(scenario)?;
    let mut sc = file.to_scenario()?;
    if no_filter {
        sc.filter_enabled = false;
    }
    let (records, m) = run_episode(&sc, field)?;
    write_trace(BufWriter::new(File::create(trace)?), &records)?;
    let mut w = BufWriter::new(File::create(metrics)?);
    serde_json::to_writer_pretty(&mut w, &m).map_err(|e| Failure::new(EXIT_FAILURE, e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    if let Some(reason) = &m.failure {
        return Err(Failure::new(EXIT_FAILURE, format!("initial plan failed: {reason}")));
    }
    if !m.success || m.collisions > 0 {
        return Err(Failure::new(
            EXIT_FAILURE,
            format!("episode failed: success = {}, collision ticks = {}", m.success, m.collisions),
        ));
    }
    Ok(())
}

fn bench(suite: &Path, seeds: usize, out: &Path) -> Outcome {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(suite)
        .map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: {e}", suite.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::new(EXIT_CONFIG, format!("{}: no scenario files", suite.display())));
    }
    // scenarios sharing arm and grid share one field
    let mut fields: Vec<(String, Arc<CdfField>)> = Vec::new();
    let mut entries = Vec::new();
    for p in &paths {
        let file = ScenarioFile::load(p)?;
        let key = serde_json::to_string(&(&file.arm, &file.cdf)).expect("serializable");
        let field = match fields.iter().find(|(k, _)| *k == key) {
            Some((_, f)) => f.clone(),
            None => {
                let f = file.load_field(base_dir(p))?;
                fields.push((key, f.clone()));
                f
            }
        };
        entries.push((file.to_scenario()?, field));
    }
    let table = bench_planners(&entries, seeds)?;
    std::fs::write(out, table.to_csv())?;
    let (checks, lens) = table.median_ratios();
    println!("{}", json!({ "median_check_ratio": checks, "median_path_ratio": lens, "out": out }));
    Ok(())
}

fn replay(trace: &Path, speed: f64, port: u16) -> Outcome {
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(Failure::new(EXIT_CONFIG, "--speed must be positive"));
    }
    let file = File::open(trace).map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: {e}", trace.display())))?;
    let records = read_trace(BufReader::new(file))?;
    serve::replay(&records, speed, port)
}

fn serve_cmd(scenario: &Path, port: u16, tick_hz: f64, max_ticks: Option<u64>) -> Outcome {
    if !(tick_hz > 0.0 && tick_hz.is_finite()) {
        return Err(Failure::new(EXIT_CONFIG, "--tick-hz must be positive"));
    }
    let (file, field) = load(scenario)?;
    serve::serve(file.to_scenario()?, field, port, tick_hz, max_ticks)
}
