use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dlmp_market::harness::{
    decompose, emit_results, emit_sweep, generate_scenario, run_scenario, run_sweep, weight_grid,
    write_atomic, Scenario, ScenarioKind, ScenarioOverrides, LINEARIZATION_CSV,
};
use dlmp_market::solver::SolverConfig;
use dlmp_market::{Error, Result};

/// Fairness-regularized distribution market prices on a radial feeder.
#[derive(Parser)]
#[command(name = "dlmp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the market once and write prices, trace and summary.
    Run {
        #[command(flatten)]
        common: Common,
        /// Fairness weight C.
        #[arg(long)]
        fairness: Option<f64>,
    },
    /// Run the market over a grid of fairness weights.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.0)]
        c_from: f64,
        #[arg(long, default_value_t = 0.5)]
        c_to: f64,
        #[arg(long, default_value_t = 0.02)]
        c_step: f64,
    },
    /// Compare the linear model with the AC power flow at the market outcome.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fairness: Option<f64>,
    },
    /// Re-emit the price decomposition table of an earlier run.
    Decompose {
        /// Directory written by `run`.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// I, II, III, or a scenario JSON file.
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Penalty and dual step factor.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Solver settings as JSON; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

impl Common {
    fn load(&self, fairness: Option<f64>) -> Result<(Scenario, SolverConfig)> {
        let mut scenario = match self.scenario.parse::<ScenarioKind>() {
            Ok(kind) => generate_scenario(kind, self.seed, &ScenarioOverrides::default())?,
            Err(_) if Path::new(&self.scenario).is_file() => {
                Scenario::from_json(&std::fs::read_to_string(&self.scenario)?)?
            }
            Err(e) => return Err(e),
        };
        if let Some(eta) = self.eta {
            scenario.eta = eta;
        }
        if let Some(c) = fairness {
            scenario.fairness_weight = c;
        }
        scenario.validate()?;
        let mut config = match &self.config {
            Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
            None => SolverConfig::default(),
        };
        if let Some(m) = self.max_iter {
            config.max_iter = m;
        }
        Ok((scenario, config))
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, fairness } => {
            let (scenario, config) = common.load(fairness)?;
            let record = run_scenario(&scenario, &config)?;
            emit_results(&scenario, &record, &common.out)?;
            let r = &record.result;
            println!(
                "converged={} iterations={} welfare={:.6} jain={} max_violation={:.3e}",
                r.converged,
                r.iterations,
                r.total_welfare,
                r.jain.map_or("-".into(), |j| format!("{j:.6}")),
                r.max_violation
            );
            if !r.converged {
                eprintln!("warning: iteration budget exhausted before convergence");
            }
        }
        Command::Sweep {
            common,
            c_from,
            c_to,
            c_step,
        } => {
            let (scenario, config) = common.load(None)?;
            let grid = weight_grid(c_from, c_to, c_step)?;
            let table = run_sweep(&scenario, &grid, &config)?;
            emit_sweep(&scenario, &table, &common.out)?;
            let failed = table.rows.iter().filter(|r| !r.converged).count();
            println!("{} rows, {failed} not converged", table.rows.len());
        }
        Command::Validate { common, fairness } => {
            let (scenario, config) = common.load(fairness)?;
            let record = run_scenario(&scenario, &config)?;
            std::fs::create_dir_all(&common.out)?;
            write_atomic(
                &common.out.join(LINEARIZATION_CSV),
                &record.linearization.to_csv(),
            )?;
            let l = &record.linearization;
            println!(
                "max |dV|={:.3e} max |dP|={:.3e} max |dQ|={:.3e} max |dL|={:.3e}",
                l.max_voltage, l.max_p_flow, l.max_q_flow, l.max_loss
            );
        }
        Command::Decompose { input, out } => {
            let path = decompose(&input, &out)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::InvalidArgument(_) | Error::UnknownScenario(_)) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
