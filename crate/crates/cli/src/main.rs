use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use ampd_core::config::{parse_override, RunConfig};
use ampd_core::{
    build_log, dependency_matrix, directly_follows_counts, discover_model, export_dot, generate_synthetic_table,
    load_table, log_fitness, parse_dot, parse_mapping, train, write_report, ColumnMapping, EventTable,
};

#[derive(Parser)]
#[command(name = "ampd", version, about = "Process discovery with a deep Q-learning agent")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides one configuration key, e.g. `--set train.epochs=10`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write a run directory.
    Train {
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Discover one model under a fixed mapping and threshold.
    Discover {
        #[arg(long)]
        table: PathBuf,
        /// `case,activity,resource[,timestamp]`, 0-based column indices.
        #[arg(long)]
        mapping: String,
        #[arg(long)]
        threshold: f64,
        /// DOT output path; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a table against a DOT model.
    Check {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        mapping: String,
        #[arg(long)]
        model: PathBuf,
        /// Per-trace fitness report path; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic event table.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let overrides = common
        .set
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()
        .map_err(usage)?;
    RunConfig::load(common.config.as_deref(), &overrides, common.seed).map_err(|e| match e {
        ampd_core::Error::Io { .. } => Failure::Runtime(e.into()),
        other => usage(other),
    })
}

fn mapping_arg(text: &str) -> Result<ColumnMapping, Failure> {
    parse_mapping(text).map_err(|m| usage(anyhow!("--mapping: {m}")))
}

fn read_table(cfg: &RunConfig, path: &Path) -> anyhow::Result<EventTable> {
    Ok(load_table(path, cfg.data.delimiter, cfg.data.has_header)?)
}

fn write_text(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => Ok(std::io::stdout().write_all(text.as_bytes())?),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Train { out } => {
            let table = match &cfg.data.path {
                Some(path) => read_table(&cfg, path)?,
                None => generate_synthetic_table(&cfg.synth, cfg.seed()).map_err(anyhow::Error::from)?.table,
            };
            let mut report = train(&table, &cfg.training).map_err(anyhow::Error::from)?;
            report.config_snapshot = cfg.snapshot();
            write_report(&report, &out).map_err(anyhow::Error::from)?;
            let last = report.metrics.last().expect("at least one epoch");
            eprintln!(
                "{} epochs in {:.1}s; last epoch avg_fitness {:.6}, count_ge_threshold {}",
                report.metrics.len(),
                report.wall_clock.as_secs_f64(),
                last.avg_fitness,
                last.count_ge_threshold
            );
            if let Some(best) = report.best.first() {
                eprintln!("best action {} with fitness {:.6}", best.action, best.fitness);
            }
            println!("{}", out.display());
        }
        Command::Discover {
            table,
            mapping,
            threshold,
            out,
        } => {
            let mapping = mapping_arg(&mapping)?;
            let table = read_table(&cfg, &table)?;
            let log = build_log(&table, &mapping).map_err(anyhow::Error::from)?;
            let dep = dependency_matrix(&directly_follows_counts(&log));
            let model = discover_model(&dep, threshold, Some(mapping)).map_err(usage)?;
            let fitness = log_fitness(&log, &model).log_fitness;
            write_text(out.as_deref(), &export_dot(&model))?;
            if out.is_some() {
                println!("{fitness:.6}");
            } else {
                eprintln!("fitness {fitness:.6}");
            }
        }
        Command::Check {
            table,
            mapping,
            model,
            out,
        } => {
            let mapping = mapping_arg(&mapping)?;
            let text = std::fs::read_to_string(&model).with_context(|| format!("cannot read {}", model.display()))?;
            let model = parse_dot(&text).map_err(anyhow::Error::from)?;
            let table = read_table(&cfg, &table)?;
            let log = build_log(&table, &mapping).map_err(anyhow::Error::from)?;
            let report = log_fitness(&log, &model);
            let mut buf = Vec::new();
            report.write_delimited(&mut buf, ',').map_err(anyhow::Error::from)?;
            write_text(out.as_deref(), &String::from_utf8(buf).expect("utf-8 report"))?;
            if out.is_some() {
                println!("{:.6}", report.log_fitness);
            } else {
                eprintln!("fitness {:.6}", report.log_fitness);
            }
        }
        Command::Synth { out } => {
            let synth = generate_synthetic_table(&cfg.synth, cfg.seed()).map_err(usage)?;
            synth
                .table
                .save(&out, cfg.data.delimiter)
                .map_err(anyhow::Error::from)?;
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
