//! Command-line front end. Exit codes: 0 ok, 2 config, 3 numerical, 4 io.

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use distml::experiment::{
    exit_code, load_config, read_metrics, render_table, resolve_out_dir, run_experiment, write_dataset,
    write_report_csv, write_shards, ExperimentConfig, TaskKind,
};
use distml::{Error, Result};

#[derive(Parser)]
#[command(name = "distml", version, about = "Distributed learning experiments")]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config's `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured dataset as CSV.
    Gen,
    /// Write one CSV per shard of the configured split.
    Split,
    /// Run a paramserver or aggregate-ls task.
    Train,
    /// Fit a GP committee and predict on the configured grid.
    Gp,
    /// Run k-means or k-windows (optionally distributed).
    Cluster,
    /// Print a convergence table and write `t,objective,dist_to_oracle` CSV.
    Report {
        /// A metrics.jsonl file.
        metrics: PathBuf,
    },
}

fn config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config {
        path: "--config".into(),
        message: "this command needs a config file".into(),
    })?;
    let mut config = load_config(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn expect_task(config: &ExperimentConfig, allowed: &[TaskKind], command: &str) -> Result<()> {
    if allowed.contains(&config.task) {
        Ok(())
    } else {
        Err(Error::Config {
            path: "task".into(),
            message: format!("`{command}` cannot run task {:?}", config.task),
        })
    }
}

fn run(cli: &Cli) -> Result<()> {
    let stdout = &mut io::stdout().lock();
    match &cli.command {
        Command::Gen => {
            let config = config(cli)?;
            let path = write_dataset(&config, &resolve_out_dir(&config, cli.out.as_deref()))?;
            writeln!(stdout, "{}", path.display())?;
        }
        Command::Split => {
            let config = config(cli)?;
            for path in write_shards(&config, &resolve_out_dir(&config, cli.out.as_deref()))? {
                writeln!(stdout, "{}", path.display())?;
            }
        }
        Command::Train | Command::Gp | Command::Cluster => {
            let config = config(cli)?;
            let (allowed, name): (&[TaskKind], &str) = match cli.command {
                Command::Train => (&[TaskKind::Paramserver, TaskKind::AggregateLs], "train"),
                Command::Gp => (&[TaskKind::GpCommittee], "gp"),
                _ => (&[TaskKind::Kwindows, TaskKind::Kmeans], "cluster"),
            };
            expect_task(&config, allowed, name)?;
            let summary = run_experiment(&config, &resolve_out_dir(&config, cli.out.as_deref()))?;
            writeln!(stdout, "{}", serde_json::to_string_pretty(&summary)?)?;
        }
        Command::Report { metrics } => {
            let records = read_metrics(metrics)?;
            write!(stdout, "{}", render_table(&records, 20))?;
            let csv_path = match &cli.out {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    dir.join("report.csv")
                }
                None => metrics.with_extension("csv"),
            };
            let file = File::create(&csv_path)
                .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", csv_path.display())))?;
            write_report_csv(&records, file)?;
            writeln!(stdout, "{}", csv_path.display())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
