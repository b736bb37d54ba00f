use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use consensim_cli::artifacts::write_atomic;
use consensim_cli::commands::{
    cmd_constants, cmd_curves, cmd_survival, cmd_validate, crossover_summary,
    etc_never_cheaper_from, survival_table, Format, SE_MARGIN,
};
use consensim_cli::config::{parse_n_list, parse_real_list, ExperimentConfig, Overrides, SEED_ENV};
use consensim_cli::{CliError, Result};

#[derive(Clone)]
struct NList(Vec<u32>);

#[derive(Clone)]
struct Times(Vec<f64>);

#[derive(Parser)]
#[command(
    name = "consensim",
    version,
    about = "Networked consensus cost experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the per-N simulation constants and store them.
    Constants(Common),
    /// Write normalized TTC/TDMA and ETC/ALOHA costs over the load grid.
    Curves(Common),
    /// Compare simulations with the analytic cost and loss results.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Events per networked run.
        #[arg(long)]
        events: Option<u64>,
    },
    /// Tabulate P(T_ET > t) for unit threshold.
    Survival {
        #[command(flatten)]
        common: Common,
        /// Comma-separated times.
        #[arg(long, value_parser = |s: &str| parse_real_list(s).map(Times), default_value = "0,0.1,0.5,1,2")]
        t: Times,
        /// Series truncation tolerance.
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated agent counts.
    #[arg(long, value_parser = |s: &str| parse_n_list(s).map(NList))]
    n: Option<NList>,
    #[arg(long)]
    rho_min: Option<f64>,
    #[arg(long)]
    rho_max: Option<f64>,
    #[arg(long)]
    rho_count: Option<usize>,
    #[arg(long)]
    replications: Option<u64>,
    #[arg(long)]
    step: Option<f64>,
    /// Output file; defaults to the path in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Constants file to read.
    #[arg(long)]
    constants: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

impl Common {
    fn resolve(&self, events: Option<u64>) -> Result<ExperimentConfig> {
        let overrides = Overrides {
            seed: self.seed,
            n_list: self.n.as_ref().map(|n| n.0.clone()),
            rho_min: self.rho_min,
            rho_max: self.rho_max,
            rho_count: self.rho_count,
            replications: self.replications,
            step: self.step,
            events,
        };
        let env_seed = std::env::var(SEED_ENV).ok();
        ExperimentConfig::resolve(self.config.as_deref(), env_seed.as_deref(), &overrides)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Constants(common) => {
            let config = common.resolve(None)?;
            let run = cmd_constants(&config, common.out.as_deref())?;
            print!("{}", run.table);
            print!("{}", crossover_summary(&run.file, config.tolerance));
            if let Some(n) = etc_never_cheaper_from(&run.file, SE_MARGIN) {
                println!("ETC never cheaper for every stored n >= {n}");
            }
            println!("wrote {}", run.path.display());
            for (n, reason) in &run.failures {
                eprintln!("n = {n}: estimation failed: {reason}");
            }
            if !run.failures.is_empty() {
                return Err(CliError::ValidationFailed {
                    failed: run.failures.len(),
                    total: config.n_list.len(),
                });
            }
        }
        Command::Curves(common) => {
            let config = common.resolve(None)?;
            let run = cmd_curves(
                &config,
                common.constants.as_deref(),
                common.out.as_deref(),
                common.format,
            )?;
            println!(
                "wrote {} points to {}",
                run.points.len(),
                run.path.display()
            );
        }
        Command::Validate { common, events } => {
            let config = common.resolve(events)?;
            let (report, path) =
                cmd_validate(&config, common.constants.as_deref(), common.out.as_deref())?;
            for c in &report.checks {
                println!(
                    "{} {:<28} measured {:.6} analytic {:.6} se {:.6}  {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.measured,
                    c.analytic,
                    c.se,
                    c.detail
                );
            }
            println!("wrote {}", path.display());
            let failed = report.checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(CliError::ValidationFailed {
                    failed,
                    total: report.checks.len(),
                });
            }
        }
        Command::Survival { common, t, tol } => {
            let n_list = common.n.map_or_else(|| vec![1], |n| n.0);
            let rows = cmd_survival(&n_list, &t.0, tol).map_err(|e| {
                CliError::Config(format!(
                    "{e} (usage: consensim survival --n 1,2 --t 0,0.5,1 --tol 1e-12)"
                ))
            })?;
            let table = survival_table(&rows, common.format);
            match &common.out {
                Some(path) => write_atomic(path, &table)?,
                None => print!("{table}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
