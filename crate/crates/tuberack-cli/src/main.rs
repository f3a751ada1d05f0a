use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use tuberack_cli::commands;

#[derive(Parser)]
#[command(name = "tuberack", about = "Plan and simulate test-tube rack rearrangement")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the planner trace as JSONL.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Write the command's result as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Plan a full pick-and-place sequence without executing it.
    Plan(Common),
    /// Execute with fault injection, perception, and recovery.
    Execute(Common),
    /// Fit the hole classifier from the scenario's ground-truth rack.
    Register(Common),
    /// Sweep transit lift heights and report sampler effort.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated lift heights in mm.
        #[arg(long, value_delimiter = ',', required = true)]
        lift_heights: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Render the scenario (and optionally a trace) as SVG.
    Render {
        /// Scenario JSON file.
        #[arg(long)]
        scenario: PathBuf,
        /// Trace JSONL to draw as a timeline.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), commands::CmdError> {
    match cli.cmd {
        Cmd::Plan(c) => {
            let s = commands::cmd_plan(&c.scenario, c.seed, c.trace_out.as_deref(), c.out.as_deref())?;
            println!("planned {} steps ({} trace events)", s.steps, s.trace_events);
        }
        Cmd::Execute(c) => {
            let s = commands::cmd_execute(&c.scenario, c.seed, c.trace_out.as_deref(), c.out.as_deref())?;
            println!(
                "executed {} steps, {} replans, success: {}",
                s.steps_executed, s.replans_used, s.success
            );
        }
        Cmd::Register(c) => {
            let m = commands::cmd_register(&c.scenario, c.seed, c.out.as_deref())?;
            println!("registered {} tube types", m.centroids.len());
        }
        Cmd::Bench { common: c, lift_heights, trials } => {
            let report = commands::cmd_bench(&c.scenario, c.seed, &lift_heights, trials, c.out.as_deref())?;
            for row in &report.rows {
                println!(
                    "lift {:>6.1} mm: {}/{} ok, mean iters {:.1}, mean transit {:.1} mm, lift-blocked {}",
                    row.lift_height_mm,
                    row.successes,
                    row.trials,
                    row.mean_iterations,
                    row.mean_transit_mm,
                    row.lift_blocked
                );
            }
        }
        Cmd::Render { scenario, trace, out } => {
            commands::cmd_render(&scenario, trace.as_deref(), &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
