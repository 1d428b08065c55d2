use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tiermenu_cli::run::{self, AppError, Options, SweepParam};

/// Optimal differentiated-service menus for congested network markets.
#[derive(Parser)]
#[command(name = "tiermenu", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario file
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for artifacts
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also emit SVG charts
    #[arg(long)]
    svg: bool,
    /// Force the pay-as-you-go transform of the quality model
    #[arg(long)]
    payg: bool,
}

impl Common {
    fn options(&self) -> Options {
        Options {
            out: self.out.clone(),
            svg: self.svg,
            payg: self.payg,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the fixed-capacity scenario
    SolveFixed(Common),
    /// Solve the variable-capacity (investment) scenario
    SolveVariable(Common),
    /// Evaluate the menu from the scenario's [menu] section
    MenuEval(Common),
    /// Optimal single-class benchmark
    SingleClass(Common),
    /// Brute-force menu search (requires a [search] section)
    BruteForce(Common),
    /// Sweep a parameter and tabulate all summary metrics
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter to sweep: c_m, alpha or t
        #[arg(long)]
        param: String,
        /// Explicit comma-separated values (alternative to --from/--to/--steps)
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        from: Option<f64>,
        #[arg(long)]
        to: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Reproduce a figure preset (fig1..fig5)
    Reproduce {
        /// Which figure to reproduce
        figure: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        svg: bool,
        /// Also refresh the golden copies (TIERMENU_GOLDEN_DIR or ./golden)
        #[arg(long)]
        regold: bool,
    },
}

fn sweep_values(
    values: Option<Vec<f64>>,
    from: Option<f64>,
    to: Option<f64>,
    steps: Option<usize>,
) -> Result<Vec<f64>, AppError> {
    if let Some(v) = values {
        return Ok(v);
    }
    match (from, to, steps) {
        (Some(a), Some(b), Some(n)) if n >= 2 => Ok((0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect()),
        _ => Err(AppError::Usage(
            "sweep needs either --values or --from/--to/--steps (steps >= 2)".into(),
        )),
    }
}

fn dispatch(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::SolveFixed(c) => run::cmd_solve_fixed(&c.scenario, &c.options()),
        Command::SolveVariable(c) => run::cmd_solve_variable(&c.scenario, &c.options()),
        Command::MenuEval(c) => run::cmd_menu_eval(&c.scenario, &c.options()),
        Command::SingleClass(c) => run::cmd_single_class(&c.scenario, &c.options()),
        Command::BruteForce(c) => run::cmd_brute_force(&c.scenario, &c.options()),
        Command::Sweep {
            common,
            param,
            values,
            from,
            to,
            steps,
        } => {
            let param = SweepParam::parse(&param)?;
            let values = sweep_values(values, from, to, steps)?;
            run::cmd_sweep(&common.scenario, &common.options(), param, values)
        }
        Command::Reproduce {
            figure,
            out,
            svg,
            regold,
        } => {
            let opts = Options {
                out,
                svg,
                payg: false,
            };
            run::cmd_reproduce(&figure, &opts, regold)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
