use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mssflat::error::{Error, EXIT_NUMERICAL, EXIT_OK};
use mssflat::mpc::PlanMode;
use mssflat::scenario::{checks_json, cmd_mpc, cmd_openloop, cmd_validate, print_checks, Overrides, Scenario};

#[derive(Parser)]
#[command(name = "mssflat", version, about = "Motion planning and receding-horizon control for muscle-driven linkages")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a transfer, recover neural inputs and verify by simulation.
    Openloop(Common),
    /// Run the receding-horizon controller.
    Mpc(Common),
    /// Check the plant, flatness roundtrips and solver self-tests.
    Validate(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Lp,
    Sos,
}

#[derive(Args)]
struct Common {
    /// Scenario file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Grid points per horizon.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the validation suites; 0 uses all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Maximum receding-horizon steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Also write the optimization problem (SDPA sparse format).
    #[arg(long)]
    dump_problem: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            mode: self.mode.map(|m| match m {
                Mode::Lp => PlanMode::Lp,
                Mode::Sos => PlanMode::Sos,
            }),
            grid_points: self.grid,
            max_steps: self.steps,
            seed: self.seed,
            threads: self.threads,
            dump_problem: self.dump_problem,
        }
    }
}

fn run(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Openloop(c) => {
            let scn = Scenario::load(&c.config)?;
            let s = cmd_openloop(&scn, &c.overrides(), &c.out)?;
            println!(
                "{}: {:?}, objective {:.6}, solve {:.3} s, max joint error {:.3e} rad",
                s.scenario, s.status, s.objective, s.solve_seconds, s.max_q_error
            );
            Ok(EXIT_OK)
        }
        Command::Mpc(c) => {
            let scn = Scenario::load(&c.config)?;
            let s = cmd_mpc(&scn, &c.overrides(), &c.out)?;
            let conv = s.converged_at.map_or("not converged".to_string(), |k| format!("converged at step {k}"));
            println!(
                "{}: {} steps, {conv}, solve median {:.2} ms max {:.2} ms, final error {:.3} deg",
                s.scenario,
                s.steps,
                s.median_solve_seconds * 1e3,
                s.max_solve_seconds * 1e3,
                s.final_q_error_deg
            );
            Ok(EXIT_OK)
        }
        Command::Validate(c) => {
            let scn = Scenario::load(&c.config)?;
            let checks = cmd_validate(&scn, &c.overrides())?;
            print!("{}", print_checks(&checks));
            std::fs::create_dir_all(&c.out).map_err(|e| Error::Output(format!("{}: {e}", c.out.display())))?;
            let path = c.out.join("validate.json");
            let text = serde_json_pretty(&checks_json(&checks));
            std::fs::write(&path, text).map_err(|e| Error::Output(format!("{}: {e}", path.display())))?;
            Ok(if checks.iter().all(|c| c.passed) { EXIT_OK } else { EXIT_NUMERICAL })
        }
    }
}

fn serde_json_pretty(v: &impl std::fmt::Display) -> String {
    format!("{v:#}\n")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
