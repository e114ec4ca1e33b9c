//! Command-line pipeline for virtual survey panels.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vpanel::config::PipelineConfig;
use vpanel::matching::MatchMethod;
use vpanel::pipeline::{self, run_lower_bound, run_pipeline_until, RunReport, Stage};
use vpanel::Error;

#[derive(Parser)]
#[command(
    name = "vpanel",
    version,
    about = "Virtual survey panels: generate backstories, profile personas, \
match them to a human cohort, administer surveys, and score the results"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or load) the backstory anthology.
    Generate {
        #[command(flatten)]
        args: StageArgs,
        /// Generation kind override: open-ended stories or stories
        /// primed on each respondent's demographics.
        #[arg(long, value_enum)]
        kind: Option<GenerateKind>,
    },
    /// Estimate persona demographics for the anthology.
    Profile(StageArgs),
    /// Match personas to the human cohort.
    Match {
        #[command(flatten)]
        args: StageArgs,
        /// Override the configured matching method.
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
    },
    /// Administer the survey to the conditioned cohort.
    RunSurvey(StageArgs),
    /// Score existing responses against the human cohort.
    Evaluate(StageArgs),
    /// Split-half lower bound of the human cohort.
    LowerBound {
        #[command(flatten)]
        args: StageArgs,
        #[arg(long, default_value_t = 100)]
        iterations: u32,
    },
    /// Run all stages end to end.
    Pipeline(StageArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Greedy,
    MaxWeight,
    Random,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GenerateKind {
    Natural,
    Dp,
}

impl From<MethodArg> for MatchMethod {
    fn from(value: MethodArg) -> Self {
        match value {
            MethodArg::Greedy => MatchMethod::Greedy,
            MethodArg::MaxWeight => MatchMethod::MaxWeight,
            MethodArg::Random => MatchMethod::Random,
        }
    }
}

fn load_config(args: &StageArgs) -> Result<PipelineConfig, Error> {
    let mut config = PipelineConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seeds.master = seed;
    }
    if let Some(out) = &args.out {
        config.out_dir = Some(out.clone());
    }
    Ok(config)
}

fn print_stages(report: &RunReport) {
    for outcome in &report.stages {
        println!("stage {}: {:?}", outcome.stage, outcome.status);
    }
    if let Some(metrics) = &report.report {
        println!(
            "avg_wd={:.6} frobenius_gap={:.6} alpha_virtual={:.6} alpha_human={} n_effective={}",
            metrics.avg_wd,
            metrics.frobenius_gap,
            metrics.cronbach_alpha_virtual,
            metrics
                .cronbach_alpha_human
                .map(|a| format!("{a:.6}"))
                .unwrap_or_else(|| "undefined".into()),
            metrics.n_effective
        );
    }
    println!("artifacts: {}", report.out_dir.display());
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Generate { args, kind } => {
            let mut config = load_config(&args)?;
            match kind {
                Some(GenerateKind::Natural) => {
                    config.survey_run.method = vpanel::config::MethodName::AnthologyNatural;
                }
                Some(GenerateKind::Dp) => {
                    config.survey_run.method = vpanel::config::MethodName::AnthologyDp;
                }
                None => {}
            }
            print_stages(&run_pipeline_until(&config, Stage::Generate)?);
        }
        Command::Profile(args) => {
            let config = load_config(&args)?;
            print_stages(&run_pipeline_until(&config, Stage::Profile)?);
        }
        Command::Match { args, method } => {
            let mut config = load_config(&args)?;
            if let Some(method) = method {
                config.matching.method = method.into();
            }
            print_stages(&run_pipeline_until(&config, Stage::Match)?);
        }
        Command::RunSurvey(args) => {
            let config = load_config(&args)?;
            print_stages(&run_pipeline_until(&config, Stage::Administer)?);
        }
        Command::Evaluate(args) => {
            let config = load_config(&args)?;
            let artifact = pipeline::evaluate_existing(&config)?;
            println!(
                "avg_wd={:.6} frobenius_gap={:.6} alpha_virtual={:.6}",
                artifact.report.avg_wd,
                artifact.report.frobenius_gap,
                artifact.report.cronbach_alpha_virtual
            );
        }
        Command::LowerBound { args, iterations } => {
            let config = load_config(&args)?;
            let artifact = run_lower_bound(&config, iterations)?;
            println!(
                "lower bound over {} iterations: avg_wd={:.6} frobenius_gap={:.6} alpha={}",
                artifact.lower_bound.iterations,
                artifact.lower_bound.avg_wd,
                artifact.lower_bound.frobenius_gap,
                artifact
                    .lower_bound
                    .cronbach_alpha
                    .map(|a| format!("{a:.6}"))
                    .unwrap_or_else(|| "undefined".into()),
            );
        }
        Command::Pipeline(args) => {
            let config = load_config(&args)?;
            print_stages(&pipeline::run_pipeline(&config)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error[{}]: {error}", error.code());
            ExitCode::FAILURE
        }
    }
}
