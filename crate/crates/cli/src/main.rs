use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use log::info;
use sdnsim::reports::{compare, RunReport, COMPARISON_CSV};
use sdnsim::scenario::{Mode, NetworkMode, RunOutcome, Scenario};
use sdnsim::usecase;

/// Simulate MapReduce jobs on an SDN or legacy data-center network.
#[derive(Debug, Parser)]
#[command(name = "sdnsim", version)]
struct Args {
    /// Scenario file referencing the topology and workload.
    #[arg(long, value_name = "PATH", required_unless_present = "emit_fixture")]
    scenario: Option<PathBuf>,

    /// Network mode; overrides the scenario file.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,

    /// Seed for all random choices; overrides the scenario file.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Report directory; overrides the scenario file.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Write the bundled three-tier experiment into DIR and exit.
    #[arg(long, value_name = "DIR", conflicts_with = "scenario")]
    emit_fixture: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Sdn,
    Legacy,
    Both,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Sdn => Mode::Sdn,
            ModeArg::Legacy => Mode::Legacy,
            ModeArg::Both => Mode::Both,
        }
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("sdnsim: configuration error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("sdnsim: simulation error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(args: Args) -> Result<(), Failure> {
    if let Some(dir) = args.emit_fixture {
        let seed = args.seed.unwrap_or(42);
        let path =
            usecase::write_fixture(&dir, seed).map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))?;
        println!("wrote {}", path.display());
        return Ok(());
    }
    let path = args.scenario.expect("clap enforces --scenario");
    let scenario = Scenario::load(&path).map_err(|e| Failure::Config(e.to_string()))?;
    let mode = args.mode.map_or(scenario.config.mode, Mode::from);
    let seed = args.seed.unwrap_or(scenario.config.seed);
    let out = args.out.unwrap_or_else(|| scenario.config.output.clone());
    info!(
        "running {path:?} mode={mode:?} seed={seed} hash={}",
        scenario.config_hash()
    );

    let outcomes: Vec<RunOutcome> = match mode {
        Mode::Both => {
            let (sdn, legacy) = scenario.run_both(seed).map_err(|e| Failure::Runtime(e.to_string()))?;
            vec![sdn, legacy]
        }
        Mode::Sdn => vec![run_one(&scenario, NetworkMode::Sdn, seed)?],
        Mode::Legacy => vec![run_one(&scenario, NetworkMode::Legacy, seed)?],
    };

    let mut reports = Vec::new();
    for outcome in &outcomes {
        let report = RunReport::from_outcome(outcome).map_err(|e| Failure::Runtime(e.to_string()))?;
        let dir = out.join(outcome.mode.to_string());
        report.emit(&dir).map_err(|e| Failure::Runtime(e.to_string()))?;
        println!(
            "{}: {} jobs, mean transmission {:.3} s, mean completion {:.3} s, energy {:.1} J -> {}",
            outcome.mode,
            report.jobs.len(),
            report.mean_transmission_s(),
            report.mean_completion_s(),
            report.total_energy_j,
            dir.display()
        );
        reports.push(report);
    }
    if let [sdn, legacy] = reports.as_slice() {
        let summary = compare(sdn, legacy).map_err(|e| Failure::Runtime(e.to_string()))?;
        let file = out.join(COMPARISON_CSV);
        summary.write(&file).map_err(|e| Failure::Runtime(e.to_string()))?;
        println!(
            "sdn vs legacy: transmission {:.2}%, completion {:.2}%, energy {:.2}% -> {}",
            summary.transmission_pct,
            summary.completion_pct,
            summary.energy_pct,
            file.display()
        );
    }
    Ok(())
}

fn run_one(scenario: &Scenario, mode: NetworkMode, seed: u64) -> Result<RunOutcome, Failure> {
    scenario.run(mode, seed).map_err(|e| Failure::Runtime(e.to_string()))
}
