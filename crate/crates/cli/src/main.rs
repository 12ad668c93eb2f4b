use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ftrgame::scenario::{load_solution, prepare_market, run_metrics, run_scenario, ScenarioConfig};
use ftrgame::{clear_market, emit_tables, ClearingInstance, Error, UpdateRule};

/// Risk-adjusted FTR bidding and auction equilibrium study.
#[derive(Parser)]
#[command(name = "ftrgame", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full study: metrics, both scenario states, equilibrium and Nash check.
    Run(ScenarioArgs),
    /// Stop after the chance coefficients and contribution bounds.
    Metrics(ScenarioArgs),
    /// Clear a single auction instance read from JSON.
    Clear {
        instance: PathBuf,
        /// Write the outcome here instead of stdout.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Look for profitable unilateral deviations from a saved solution.
    Verify {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        solution: PathBuf,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario TOML file.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory; falls back to the scenario's own, then `out`.
    #[arg(short, long, env = "FTRGAME_OUT_DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    nash_tolerance: Option<f64>,
    #[arg(long)]
    change_tolerance: Option<f64>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    max_rounds: Option<usize>,
    #[arg(long, value_parser = parse_rule)]
    update_rule: Option<UpdateRule>,
    /// Skip the joint single-level solve.
    #[arg(long)]
    no_joint: bool,
}

fn parse_rule(s: &str) -> Result<UpdateRule, String> {
    match s {
        "sequential" => Ok(UpdateRule::Sequential),
        "simultaneous" => Ok(UpdateRule::Simultaneous),
        _ => Err(format!("expected `sequential` or `simultaneous`, got `{s}`")),
    }
}

enum Failure {
    Config(String),
    NotConverged,
    Internal(String),
}

impl Failure {
    fn from_run(e: Error) -> Self {
        match e.root() {
            Error::Schema(_) | Error::Topology(_) => Failure::Config(e.to_string()),
            _ => Failure::Internal(e.to_string()),
        }
    }
}

impl ScenarioArgs {
    fn load(&self) -> Result<ScenarioConfig, Failure> {
        let mut doc = ftrgame::ScenarioDocument::from_path(&self.config)
            .map_err(|e| Failure::Config(format!("{}: {e}", self.config.display())))?;
        let s = &mut doc.solver;
        if let Some(v) = self.nash_tolerance {
            s.nash_tolerance = v;
        }
        if let Some(v) = self.change_tolerance {
            s.change_tolerance = v;
        }
        if let Some(v) = self.grid_points {
            s.grid_points = v;
        }
        if let Some(v) = self.max_rounds {
            s.max_rounds = v;
        }
        if let Some(v) = self.update_rule {
            s.update_rule = v;
        }
        if self.no_joint {
            s.joint_kkt = false;
        }
        if self.seed.is_some() {
            doc.seed = self.seed;
        }
        let mut config = ScenarioConfig::new(doc).map_err(|e| Failure::Config(e.to_string()))?;
        if let Some(out) = &self.out {
            config.output_dir = Some(out.clone());
        }
        Ok(config)
    }
}

fn output_dir(config: &ScenarioConfig) -> PathBuf {
    config.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn write_report(report: &ftrgame::RunReport, dir: &Path) -> Result<(), Failure> {
    let files = emit_tables(report, dir).map_err(|e| Failure::Internal(e.to_string()))?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(args) => {
            let config = args.load()?;
            let report = run_scenario(&config).map_err(Failure::from_run)?;
            write_report(&report, &output_dir(&config))?;
            if let Some(eq) = &report.equilibrium {
                println!(
                    "equilibrium: {} after {} rounds, objective {:.4}, max deviation gain {:.3e} ({})",
                    if eq.state.converged { "converged" } else { "not converged" },
                    eq.state.rounds,
                    eq.state.solution.objective,
                    eq.nash.max_improvement,
                    if eq.nash.certified { "certified" } else { "not certified" },
                );
            }
            if report.converged() {
                Ok(())
            } else {
                Err(Failure::NotConverged)
            }
        }
        Command::Metrics(args) => {
            let config = args.load()?;
            let report = run_metrics(&config).map_err(Failure::from_run)?;
            write_report(&report, &output_dir(&config))
        }
        Command::Clear { instance, out } => {
            let text = std::fs::read_to_string(&instance)
                .map_err(|e| Failure::Config(format!("{}: {e}", instance.display())))?;
            let inst: ClearingInstance =
                serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", instance.display())))?;
            inst.validate().map_err(|e| Failure::Config(e.to_string()))?;
            let outcome = clear_market(&inst).map_err(Failure::from_run)?;
            let json = serde_json::to_string_pretty(&outcome).map_err(|e| Failure::Internal(e.to_string()))?;
            match out {
                Some(p) => std::fs::write(&p, json).map_err(|e| Failure::Internal(e.to_string())),
                None => {
                    println!("{json}");
                    Ok(())
                }
            }
        }
        Command::Verify { scenario, solution } => {
            let config = scenario.load()?;
            let market = prepare_market(&config.document).map_err(Failure::from_run)?;
            let sol = load_solution(&solution).map_err(|e| Failure::Config(format!("{}: {e}", solution.display())))?;
            let opts = &config.document.solver;
            let report = market
                .game
                .verify_nash(&sol.profile, opts.grid_points, opts.nash_tolerance)
                .map_err(Failure::from_run)?;
            let json = serde_json::to_string_pretty(&report).map_err(|e| Failure::Internal(e.to_string()))?;
            println!("{json}");
            if report.certified {
                Ok(())
            } else {
                Err(Failure::NotConverged)
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FTRGAME_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::NotConverged) => {
            eprintln!("error: no equilibrium within the configured tolerances; results were still written");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
