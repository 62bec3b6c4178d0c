//! `perfit`: score response files, compute person-fit statistics, and run
//! the pollution experiments from JSON configs.
//!
//! Exit codes: 0 success, 2 invalid input or config, 3 I/O failure,
//! 4 a requested test had an empty group.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use perfit_core::{Alternative, Measure};

#[derive(Debug, Parser)]
#[command(name = "perfit", version, about = "Person-fit statistics for aberrant-response detection")]
struct Cli {
    /// Suppress warnings and progress messages.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score raw option choices against an answer key.
    Score {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        key: PathBuf,
        /// Scored-matrix CSV to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Person-fit statistics for every respondent of a scored matrix.
    Pfs {
        #[arg(long)]
        input: PathBuf,
        /// PFS CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// Reference difficulties (`item_id,p`) instead of estimating them from the input.
        #[arg(long)]
        difficulty: Option<PathBuf>,
    },
    /// List respondents whose statistic exceeds a threshold.
    Flag {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = parse_measure)]
        measure: Measure,
        #[arg(long, allow_negative_numbers = true)]
        threshold: f64,
        /// CSV to write; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        difficulty: Option<PathBuf>,
    },
    /// Humans against agents, one rank-sum test per measure.
    Compare(PipelineArgs),
    /// Kruskal-Wallis across agent groups with Dunn follow-ups.
    Multigroup(PipelineArgs),
    /// Rank-sum tests over a grid of pollution levels and seeds.
    Sensitivity(PipelineArgs),
    /// Draw a synthetic scored matrix.
    Simulate {
        /// Simulation config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Master seed; overrides the config's seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of g,gstar,u3,zu3.
    #[arg(long, value_delimiter = ',', value_parser = parse_measure)]
    measures: Option<Vec<Measure>>,
    #[arg(long, value_parser = parse_alternative)]
    alternative: Option<Alternative>,
}

fn parse_measure(s: &str) -> Result<Measure, String> {
    s.parse()
}

fn parse_alternative(s: &str) -> Result<Alternative, String> {
    match s.parse()? {
        Alternative::TwoSided => Err("alternative must be less or greater".to_string()),
        a => Ok(a),
    }
}

fn init_threads() -> Result<(), commands::CliError> {
    let Ok(raw) = std::env::var("PERFIT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        commands::CliError::Invalid(format!("PERFIT_THREADS must be a non-negative integer, got '{raw}'"))
    })?;
    // 0 leaves the choice to rayon
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| commands::CliError::Invalid(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let log = output::Log { quiet: cli.quiet };
    let result = init_threads().and_then(|()| match cli.command {
        Command::Score { raw, key, out } => commands::score(&raw, &key, &out, &log),
        Command::Pfs {
            input,
            out,
            difficulty,
        } => commands::pfs(&input, &out, difficulty.as_deref(), &log),
        Command::Flag {
            input,
            measure,
            threshold,
            out,
            difficulty,
        } => commands::flag(&input, measure, threshold, out.as_deref(), difficulty.as_deref(), &log),
        Command::Compare(a) => commands::compare(&a.into(), &log),
        Command::Multigroup(a) => commands::multigroup(&a.into(), &log),
        Command::Sensitivity(a) => commands::sensitivity(&a.into(), &log),
        Command::Simulate { config, out, seed } => {
            commands::simulate(config.as_deref(), &out, seed, &log)
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

impl From<PipelineArgs> for commands::PipelineOptions {
    fn from(a: PipelineArgs) -> Self {
        Self {
            config: a.config,
            out: a.out,
            seed: a.seed,
            measures: a.measures,
            alternative: a.alternative,
        }
    }
}
