use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kbprobe_core::pipeline::{self, PipelineError};
use kbprobe_core::RunConfig;

/// Probe a language model's knowledge with true/false statements generated
/// from a knowledge base.
#[derive(Parser)]
#[command(name = "kbprobe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the KB, sample knowledge points and negatives, hold out demos.
    Ingest(Common),
    /// Render sampled points into test statements.
    Generate(Common),
    /// Ask the model about every statement and build the score matrix.
    Evaluate(Common),
    /// Compute metrics from the score matrix.
    Report(Common),
    /// All stages in order.
    Run(Common),
    /// Check the config, KB and prototype pool without running.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Also check that configured endpoints answer.
        #[arg(long)]
        check_endpoints: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Emit the cumulative transformation ablation in the report.
    #[arg(long)]
    ablation: bool,
    /// Override the output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, PipelineError> {
        let mut cfg = RunConfig::load(&self.config)?;
        if self.ablation {
            cfg.ablation_sweep = true;
        }
        if let Some(dir) = &self.output_dir {
            let cwd = std::env::current_dir().unwrap_or_default();
            cfg.output_dir = cwd.join(dir);
        }
        Ok(cfg)
    }
}

fn execute(command: &Command) -> Result<(), PipelineError> {
    match command {
        Command::Ingest(c) => {
            let log = pipeline::ingest(&c.load()?)?;
            println!(
                "{} test points, {} demo points ({} negative pairs skipped)",
                log.test_points,
                log.demo_points,
                log.skipped_negative_pairs.len()
            );
        }
        Command::Generate(c) => {
            let log = pipeline::generate(&c.load()?)?;
            println!(
                "{} test samples, {} demo samples, {} points excluded",
                log.test_samples,
                log.demo_samples,
                log.excluded.len()
            );
        }
        Command::Evaluate(c) => {
            let stats = pipeline::evaluate(&c.load()?)?;
            println!(
                "{} requests, {} cache hits, {} failures, {} unparsed",
                stats.requests, stats.cache_hits, stats.failures, stats.unparsed
            );
        }
        Command::Report(c) => {
            let report = pipeline::report(&c.load()?)?;
            print!("{}", pipeline::render_report(&report));
        }
        Command::Run(c) => {
            let summary = pipeline::run(&c.load()?)?;
            log::info!("{} requests, {} cache hits", summary.eval.requests, summary.eval.cache_hits);
            print!("{}", pipeline::render_report(&summary.report));
        }
        Command::Validate { common, check_endpoints } => {
            let cfg = common.load()?;
            let problems = pipeline::validate(&cfg, *check_endpoints);
            for p in &problems {
                println!("{p}");
            }
            println!("{} problems", problems.len());
            if !problems.is_empty() {
                return Err(PipelineError::Config(kbprobe_core::config::ConfigError::Invalid(format!(
                    "{} problems found",
                    problems.len()
                ))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
