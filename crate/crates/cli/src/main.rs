use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use softnorm::BoundaryMode;
use softnorm_cli::commands::{cmd_crosscheck, cmd_figures, cmd_simulate, cmd_solve, cmd_table2, out_dir};
use softnorm_cli::{exit_code, RuleArg, RunConfig, RunContext};

#[derive(Parser)]
#[command(name = "softnorm", version, about = "Optimal consumption and portfolio choice under a soft consumption norm")]
struct Cli {
    /// key = value configuration file; unspecified keys take the defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo paths (Table 2 uses its own count unless this is given)
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Simulation horizon in years for figures and simulate
    #[arg(long, global = true)]
    years: Option<f64>,
    #[arg(long, global = true, value_parser = parse_mode)]
    boundary_mode: Option<BoundaryMode>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the policy table and write it with a solve report
    Solve,
    /// Write the data behind Figures 1-8
    Figures,
    /// Compare rules of thumb with the optimal policy
    Table2,
    /// Compare the solved table against the dual value function
    Crosscheck,
    /// Simulate one rule and write fan charts
    Simulate {
        /// optimal, crra:G, mix:OMEGA:ETA or tobin:OMEGA:ETA:LAMBDA
        #[arg(long, default_value = "optimal")]
        rule: RuleArg,
    },
    /// Print the effective configuration
    Config,
}

fn parse_mode(s: &str) -> Result<BoundaryMode, String> {
    s.parse().map_err(|e: softnorm::Error| e.to_string())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.paths {
        cfg.paths = n;
        cfg.table2_paths = n;
    }
    if let Some(y) = cli.years {
        cfg.years = y;
    }
    if let Some(m) = cli.boundary_mode {
        cfg.boundary_mode = m;
    }
    cfg.validate()?;
    let ctx = RunContext { cfg, out: out_dir(cli.out.as_deref()) };
    match cli.command {
        Command::Solve => cmd_solve(&ctx).map(|_| ()),
        Command::Figures => cmd_figures(&ctx),
        Command::Table2 => cmd_table2(&ctx),
        Command::Crosscheck => cmd_crosscheck(&ctx),
        Command::Simulate { rule } => cmd_simulate(&ctx, rule),
        Command::Config => {
            print!("{}", ctx.cfg.to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
