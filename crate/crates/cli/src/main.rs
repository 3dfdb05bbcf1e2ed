use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use tetherplan::harness::{
    self, CheckOptions, HarnessError, PlanOptions, RetrievalMode, SimulateOptions, SweepOptions,
};
use tetherplan::scenario::Scenario;
use tetherplan::sim::SimConfig;

/// Plan and simulate the descent of a tethered end droid below a hovering carrier.
#[derive(Debug, Parser)]
#[command(name = "tetherplan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimize a trajectory and write trajectory, corridor, coefficient, cost and history CSVs.
    Plan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        planning: Planning,
    },
    /// Fly a planned trajectory (and optionally the retrieval) and write telemetry.csv.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Trajectory artifact; defaults to <out>/coefficients.csv.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Reel the droid back in after the pickup.
        #[arg(long, conflicts_with = "retrieval_only")]
        retrieval: bool,
        /// Only simulate the retrieval, starting from the middle of the goal corridor.
        #[arg(long)]
        retrieval_only: bool,
        /// Payload mass carried during retrieval (kg).
        #[arg(long, default_value_t = 0.0)]
        attach_mass: f64,
        /// Integration step (s).
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
    },
    /// Plan every point of a parameter grid in parallel and write sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        planning: Planning,
        /// Grid axis as name=v1,v2,... or name=start:stop:step; repeat for a product grid.
        #[arg(long = "param", value_name = "NAME=VALUES")]
        params: Vec<String>,
        /// Also simulate every successful plan.
        #[arg(long)]
        simulate: bool,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the oracle self-checks and print a pass/fail table.
    Check {
        /// Scenario whose cable, limits and weights are checked (default: reference pickup to (2, 0, 1)).
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Seed of the randomized instances.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Randomized instances per suite.
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Accepted for uniform scripting; planning and simulation are deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct Planning {
    /// Freeze the total duration (s) instead of optimizing it.
    #[arg(long)]
    fixed_duration: Option<f64>,
    /// Dense re-check samples per optimizer sample.
    #[arg(long, default_value_t = 10)]
    dense_check_factor: usize,
}

impl Planning {
    fn options(&self) -> Result<PlanOptions, HarnessError> {
        if self.dense_check_factor == 0 {
            return Err(HarnessError::Grid(
                "--dense-check-factor must be at least 1".into(),
            ));
        }
        let mut opts = PlanOptions::default();
        opts.optimizer.fixed_duration = self.fixed_duration;
        opts.optimizer.dense_factor = self.dense_check_factor;
        Ok(opts)
    }
}

fn run(cli: Cli) -> Result<i32, HarnessError> {
    match cli.command {
        Command::Plan { common, planning } => {
            let scenario = harness::load_scenario(&common.scenario)?;
            let outcome = harness::cmd_plan(&scenario, &planning.options()?, &common.out)?;
            for line in outcome.summary() {
                println!("{line}");
            }
            println!("wrote CSVs to {}", common.out.display());
            Ok(outcome.exit_code())
        }
        Command::Simulate {
            common,
            trajectory,
            retrieval,
            retrieval_only,
            attach_mass,
            dt,
        } => {
            let scenario = harness::load_scenario(&common.scenario)?;
            let opts = SimulateOptions {
                sim: SimConfig {
                    dt,
                    ..SimConfig::default()
                },
                retrieval: match (retrieval, retrieval_only) {
                    (_, true) => RetrievalMode::Only,
                    (true, false) => RetrievalMode::AfterPickup,
                    (false, false) => RetrievalMode::None,
                },
                attach_mass,
                trajectory,
            };
            let outcome = harness::cmd_simulate(&scenario, &opts, &common.out)?;
            for line in outcome.summary() {
                println!("{line}");
            }
            Ok(outcome.exit_code())
        }
        Command::Sweep {
            common,
            planning,
            params,
            simulate,
            jobs,
        } => {
            let scenario = harness::load_scenario(&common.scenario)?;
            let grid = params
                .iter()
                .map(|p| harness::parse_grid_axis(p))
                .collect::<Result<Vec<_>, _>>()?;
            let opts = SweepOptions {
                plan: planning.options()?,
                simulate: simulate.then(SimConfig::default),
                jobs,
            };
            let rows = harness::cmd_sweep(&scenario, &grid, &opts, &common.out)?;
            let ok = rows.iter().filter(|r| r.success).count();
            for r in &rows {
                let values: Vec<String> = r.parameters.iter().map(|v| format!("{v}")).collect();
                println!(
                    "run {:>3} [{}] {}{}",
                    r.run,
                    values.join(", "),
                    if r.success { "ok" } else { "failed" },
                    if r.message.is_empty() {
                        String::new()
                    } else {
                        format!(": {}", r.message)
                    }
                );
            }
            println!(
                "{ok}/{} runs succeeded; wrote {}",
                rows.len(),
                common.out.join("sweep.csv").display()
            );
            Ok(harness::EXIT_OK)
        }
        Command::Check {
            scenario,
            seed,
            instances,
        } => {
            let scenario = match scenario {
                Some(path) => harness::load_scenario(&path)?,
                None => Scenario::reference_pickup(Vector3::new(2.0, 0.0, 1.0)),
            };
            let report = harness::cmd_check(&scenario, &CheckOptions { seed, instances });
            for line in report.table() {
                println!("{line}");
            }
            Ok(report.exit_code())
        }
    }
}

fn main() -> ExitCode {
    let code = match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
