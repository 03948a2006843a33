//! `overtake`: run scenarios, velocity sweeps and risk-map dumps, or serve a
//! live session to an operator client.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::info;

use overtake_bridge::{serve, ServeOptions};
use overtake_core::sim::{run, to_csv, RunMetrics, Scenario, ScenarioError, Simulation};

#[derive(Parser)]
#[command(name = "overtake", version, about = "Overtaking-with-abort planner simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write log.csv and metrics.json.
    Run(RunArgs),
    /// Run a grid of desired ego speeds against lead-vehicle speeds.
    Sweep(SweepArgs),
    /// Write the risk grid and planner sets at one instant.
    DumpRiskmap(DumpArgs),
    /// Check a scenario file and report the first invalid field.
    ValidateScenario(ScenarioArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Override a scenario value, e.g. `planner.behavior.v_des=15`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct OutArgs {
    #[arg(long, env = "OVERTAKE_OUT_DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    out: OutArgs,
    /// Serve the run live over WebSocket instead of running it in batch.
    #[arg(long, conflicts_with = "headless")]
    serve: bool,
    #[arg(long, default_value_t = 8765, value_parser = clap::value_parser!(u16).range(1..))]
    port: u16,
    /// Batch run only (the default).
    #[arg(long)]
    headless: bool,
    /// Start stepping as soon as a client connects.
    #[arg(long, requires = "serve")]
    autostart: bool,
    /// Simulated seconds per wall-clock second when serving.
    #[arg(long, default_value_t = 1.0, requires = "serve")]
    speed_factor: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    out: OutArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [10.0, 15.0, 20.0])]
    v_des: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [5.0, 7.5, 10.0])]
    v_lv: Vec<f64>,
    /// Index of the traffic entry used as lead vehicle.
    #[arg(long, default_value_t = 0)]
    lead_index: usize,
    /// Parallel workers.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct DumpArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    out: OutArgs,
    /// Simulation time of the dump (s).
    #[arg(long, default_value_t = 0.0)]
    t: f64,
}

fn load(args: &ScenarioArgs) -> Result<Scenario, ScenarioError> {
    Scenario::load(&args.scenario, &args.overrides)
}

fn exit_code(err: &ScenarioError) -> u8 {
    match err {
        ScenarioError::Io { .. } => 2,
        _ => 3,
    }
}

fn write(dir: &Path, name: &str, content: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, content).with_context(|| format!("writing {}", path.display()))
}

fn write_run(dir: &Path, scenario: &Scenario) -> anyhow::Result<RunMetrics> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let (logs, metrics) = run(scenario);
    write(dir, "log.csv", &to_csv(&logs))?;
    write(dir, "metrics.json", &metrics.to_json())?;
    write(dir, "scenario.toml", &scenario.to_toml_string())?;
    Ok(metrics)
}

fn cmd_run(args: &RunArgs, scenario: Scenario) -> anyhow::Result<()> {
    if args.serve {
        let options = ServeOptions { autostart: args.autostart, speed_factor: args.speed_factor };
        anyhow::ensure!(args.speed_factor > 0.0, "--speed-factor must be positive");
        println!("serving ws://127.0.0.1:{}/", args.port);
        serve(scenario, args.port, options)?;
        return Ok(());
    }
    let m = write_run(&args.out.out, &scenario)?;
    println!(
        "timeline {} completion {} collision {} min_clearance {:.3} max_intrusion {:.3}",
        m.timeline_letters(),
        m.completion,
        m.collision_occurred,
        m.min_clearance,
        m.max_intrusion
    );
    println!("wrote {}", args.out.out.display());
    Ok(())
}

struct SweepRow {
    v_des: f64,
    v_lv: f64,
    metrics: RunMetrics,
}

fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "v_des,v_lv,collision,completion,timeline,min_clearance,max_intrusion,converged_ticks,fallback_ticks,planner_ticks\n",
    );
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.4},{:.4},{},{},{}",
            r.v_des,
            r.v_lv,
            m.collision_occurred,
            m.completion,
            m.timeline_letters(),
            m.min_clearance,
            m.max_intrusion,
            m.converged_ticks,
            m.fallback_ticks,
            m.planner_ticks
        );
    }
    out
}

fn cmd_sweep(args: &SweepArgs) -> Result<anyhow::Result<()>, ScenarioError> {
    let mut cases = Vec::new();
    for &vd in &args.v_des {
        for &vl in &args.v_lv {
            let mut overrides = args.scenario.overrides.clone();
            overrides.push(format!("planner.behavior.v_des={vd}"));
            overrides.push(format!("traffic.{}.speed_profile=[[0.0, {vl}]]", args.lead_index));
            let scenario = Scenario::load(&args.scenario.scenario, &overrides)?;
            cases.push((vd, vl, scenario));
        }
    }
    Ok(run_sweep(args, cases))
}

fn run_sweep(args: &SweepArgs, cases: Vec<(f64, f64, Scenario)>) -> anyhow::Result<()> {
    let out = &args.out.out;
    let jobs = args.jobs.max(1);
    let run_case = |(vd, vl, sc): &(f64, f64, Scenario)| -> anyhow::Result<SweepRow> {
        let dir = out.join(format!("vdes_{vd}_vlv_{vl}"));
        info!("sweep case v_des={vd} v_lv={vl}");
        Ok(SweepRow { v_des: *vd, v_lv: *vl, metrics: write_run(&dir, sc)? })
    };
    let results: Vec<anyhow::Result<SweepRow>> = if jobs == 1 {
        cases.iter().map(run_case).collect()
    } else {
        let chunk = cases.len().div_ceil(jobs).max(1);
        std::thread::scope(|s| {
            let handles: Vec<_> =
                cases.chunks(chunk).map(|c| s.spawn(move || c.iter().map(run_case).collect::<Vec<_>>())).collect();
            handles.into_iter().flat_map(|h| h.join().expect("sweep worker")).collect()
        })
    };
    let rows = results.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    let table = sweep_table(&rows);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(out, "sweep.csv", &table)?;
    print!("{table}");
    let collisions = rows.iter().filter(|r| r.metrics.collision_occurred).count();
    println!("{} runs, {} with collisions", rows.len(), collisions);
    Ok(())
}

fn points_csv(points: impl Iterator<Item = [f64; 2]>) -> String {
    let mut out = String::from("x,y\n");
    for p in points {
        let _ = writeln!(out, "{},{}", p[0], p[1]);
    }
    out
}

fn cmd_dump(args: &DumpArgs, scenario: Scenario) -> anyhow::Result<()> {
    let mut sim = Simulation::new(scenario);
    while sim.time() + 1e-9 < args.t && !sim.is_finished() {
        sim.step_planner();
    }
    anyhow::ensure!(!sim.is_finished(), "t = {} is past the end of the scenario", args.t);
    let grid = sim.risk_grid();
    sim.step_planner();
    let snap = sim.snapshot().expect("planner ran");
    let dir = &args.out.out;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write(dir, "riskmap.csv", &grid.to_csv())?;
    write(dir, "safe_set.csv", &points_csv(snap.safe.points.iter().map(|p| [p.x, p.y])))?;
    write(dir, "reachable.csv", &points_csv(snap.reach.boundary.iter().map(|p| [p.x, p.y])))?;
    write(dir, "safe_reachable.csv", &points_csv(snap.ssr.points.iter().map(|p| [p.x, p.y])))?;
    println!(
        "t {:.2} fsm {} cells {} safe {} safe_reachable {}; wrote {}",
        snap.t,
        snap.fsm,
        grid.values.len(),
        snap.safe.len(),
        snap.ssr.len(),
        dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let scenario_args = match &cli.command {
        Cmd::Run(a) => &a.scenario,
        Cmd::Sweep(a) => &a.scenario,
        Cmd::DumpRiskmap(a) => &a.scenario,
        Cmd::ValidateScenario(a) => a,
    };
    let scenario = match load(scenario_args) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };

    let result = match &cli.command {
        Cmd::Run(a) => cmd_run(a, scenario),
        Cmd::Sweep(a) => match cmd_sweep(a) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(exit_code(&e));
            }
        },
        Cmd::DumpRiskmap(a) => cmd_dump(a, scenario),
        Cmd::ValidateScenario(_) => {
            println!("ok: {} (schema version {})", scenario_args.scenario.display(), scenario.schema_version);
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
