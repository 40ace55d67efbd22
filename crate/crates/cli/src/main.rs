use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nested_conformal_cli::config::{load_config, plan_from_file, Experiment, Overrides};
use nested_conformal_cli::cpi_sample::{write_sample, DEFAULT_SEED, SAMPLE_MONTHS};
use nested_conformal_cli::runner::{recompute_metrics, run_inflation, run_simulation, SummaryRow};
use nested_conformal_cli::{CliError, CliResult};

/// Nested online conformal prediction experiments.
///
/// Exit codes: 0 success, 1 internal error, 2 config or usage error,
/// 3 file system error, 4 data integrity error.
#[derive(Parser)]
#[command(name = "nested-conformal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the synthetic random-walk experiment.
    Simulate(RunArgs),
    /// Run the CPI inflation forecasting experiment.
    Inflation(RunArgs),
    /// Check a config file and list every violation.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Recompute metric CSVs from an existing records.csv.
    Metrics {
        /// Path to a records.csv written by simulate or inflation.
        #[arg(long)]
        data: PathBuf,
        /// Output directory (defaults to the records file's directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Rolling window in steps.
        #[arg(long, default_value_t = 10_000)]
        dt: usize,
    },
    /// Write the synthetic FRED-format CPI sample.
    CpiSample {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = SAMPLE_MONTHS)]
        months: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Args, Default)]
struct OverrideArgs {
    /// Run a single seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// CPI file for the inflation experiment.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated methods, e.g. eg,pg,tracker,tracker-proj.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    /// "start:end:step" or a comma-separated list of miscoverage levels.
    #[arg(long)]
    levels: Option<String>,
}

impl From<OverrideArgs> for Overrides {
    fn from(a: OverrideArgs) -> Self {
        Overrides {
            seed: a.seed,
            out: a.out,
            data: a.data,
            methods: a.methods,
            eta: a.eta,
            mu: a.mu,
            levels: a.levels,
        }
    }
}

fn print_summary(rows: &[SummaryRow], out: &Path, started: Instant) {
    for r in rows {
        let seed = r.seed.map(|s| format!(" seed={s}")).unwrap_or_default();
        let l1 = r
            .final_l1
            .map(|x| format!(" final_l1={x:.4}"))
            .unwrap_or_default();
        let regret = r
            .regret
            .as_ref()
            .map(|g| {
                format!(
                    " regret_bound={}",
                    if g.loss_bound.pass { "ok" } else { "VIOLATED" }
                )
            })
            .unwrap_or_default();
        println!(
            "{}{seed}: ce_max={:.4}{l1} violations={}{regret}",
            r.method, r.ce_max, r.violations
        );
    }
    println!(
        "wrote {} ({} runs, {:.1}s)",
        out.join("summary.csv").display(),
        rows.len(),
        started.elapsed().as_secs_f64()
    );
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => {
            let started = Instant::now();
            let plan = plan_from_file(&a.config, &a.overrides.into(), Experiment::Synthetic)?;
            let rows = run_simulation(&plan)?;
            print_summary(&rows, &plan.out_dir, started);
        }
        Command::Inflation(a) => {
            let started = Instant::now();
            let plan = plan_from_file(&a.config, &a.overrides.into(), Experiment::Inflation)?;
            let rows = run_inflation(&plan)?;
            print_summary(&rows, &plan.out_dir, started);
        }
        Command::Validate { config, overrides } => {
            let mut cfg = load_config(&config)?;
            cfg.apply(&overrides.into());
            let declared = match cfg.experiment.as_deref() {
                Some("inflation") => Some(Experiment::Inflation),
                _ => None,
            };
            match cfg.resolve(declared) {
                Ok(_) => println!("{}: ok", config.display()),
                Err(v) => {
                    for msg in &v {
                        println!("{msg}");
                    }
                    return Err(CliError::Config(format!("{} violation(s)", v.len())));
                }
            }
        }
        Command::Metrics { data, out, dt } => {
            let out =
                out.unwrap_or_else(|| data.parent().map(Path::to_path_buf).unwrap_or_default());
            let m = recompute_metrics(&data, &out, dt)?;
            println!(
                "{}: {} steps, ce_max={:.4}, violations={}",
                data.display(),
                m.ce_sum_cumulative.len(),
                m.ce.iter().cloned().fold(0.0, f64::max),
                m.violations
            );
        }
        Command::CpiSample { out, seed, months } => {
            write_sample(&out, seed, months)?;
            println!("wrote {}", out.display());
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
