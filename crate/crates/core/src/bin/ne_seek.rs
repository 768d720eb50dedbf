use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use ne_seek::experiment::{run, sweep, SweepParam};
use ne_seek::{EquilibriumReport, Error, Scenario};

/// Distributed adaptive prescribed-time Nash equilibrium seeking.
#[derive(Parser)]
#[command(name = "ne-seek", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario, write its trajectory CSV and print a summary.
    Run {
        #[command(flatten)]
        common: Common,
        /// Trajectory CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one simulation per value of a scenario parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// tp, seed, amplitude or gamma-scale.
        #[arg(long)]
        vary: SweepParam,
        /// Comma-separated values; may be empty.
        #[arg(long, default_value = "")]
        values: ValueList,
        /// Directory for the per-run trajectory CSVs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the equilibrium report without simulating.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Adaptive edge gain to evaluate the Lyapunov matrix at.
        #[arg(long)]
        omega_star: Option<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file, or a builtin name (power5, power5-coupled).
    #[arg(long, default_value = "power5")]
    scenario: String,
    /// Prescribed time.
    #[arg(long)]
    tp: Option<f64>,
    /// Seed for random initial estimates.
    #[arg(long)]
    seed: Option<u64>,
    /// Integration horizon in reparameterized time.
    #[arg(long)]
    s_max: Option<f64>,
    /// Relative and absolute integrator tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<Scenario, Error> {
        let mut sc = Scenario::resolve(&self.scenario)?;
        if let Some(tp) = self.tp {
            sc = sc.with_tp(tp)?;
        }
        if let Some(seed) = self.seed {
            sc = sc.with_seed(seed);
        }
        if let Some(s_max) = self.s_max {
            sc.integrator.s_max = s_max;
        }
        if let Some(tol) = self.tol {
            sc.integrator.rel_tol = tol;
            sc.integrator.abs_tol = tol;
        }
        sc.integrator.validate()?;
        Ok(sc)
    }
}

#[derive(Clone)]
struct ValueList(Vec<f64>);

impl FromStr for ValueList {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, String> {
        text.split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(|v| v.parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
            .collect::<Result<_, _>>()
            .map(ValueList)
    }
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("summary serializes"));
}

fn execute(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Run { common, out } => {
            let sc = common.load()?;
            let output = run(&sc, out.as_deref())?;
            print_json(&output.summary);
            Ok(output.summary.succeeded())
        }
        Command::Sweep { common, vary, values, out } => {
            let sc = common.load()?;
            let table = sweep(&sc, vary, &values.0, out.as_deref())?;
            print_json(&table);
            Ok(table.all_succeeded())
        }
        Command::Analyze { common, omega_star } => {
            let sc = common.load()?;
            let report = EquilibriumReport::build(&sc.game, &sc.graph, omega_star)?;
            print_json(&report);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NE_SEEK_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: integration did not reach its horizon");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_integrator_failure() { 2 } else { 1 })
        }
    }
}
