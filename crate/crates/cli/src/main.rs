//! `epicast`: context-aware probabilistic forecasting of weekly
//! infectious-disease counts.
//!
//! Exit codes: 0 on success, 1 for configuration or input validation
//! problems, 2 for run failures (excluded single-origin forecast, an
//! evaluation where every origin was excluded, look-ahead violations).

mod app;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use app::{AppError, Mode, ReportFormat};

#[derive(Parser)]
#[command(
    name = "epicast",
    version,
    about = "Probabilistic weekly disease-count forecasts from a two-agent pipeline"
)]
struct Cli {
    /// Run configuration (JSON). Required by every subcommand except
    /// `report`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// How agent calls reach their provider.
    #[arg(long, value_enum, default_value_t = ModeArg::Live, global = true)]
    mode: ModeArg,

    /// Transcript directory, required for record and replay modes.
    #[arg(long, global = true)]
    transcripts: Option<PathBuf>,

    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Live,
    Record,
    Replay,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Live => Mode::Live,
            ModeArg::Record => Mode::Record,
            ModeArg::Replay => Mode::Replay,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Svg,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> ReportFormat {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Svg => ReportFormat::Svg,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate every configured input, print a summary.
    Ingest,
    /// Forecast from one origin week (no truth required).
    Forecast {
        /// Origin week start date (ISO, must be on the series grid).
        #[arg(long)]
        origin: NaiveDate,
    },
    /// Rolling-origin evaluation between two origin dates, inclusive.
    Evaluate {
        #[arg(long)]
        start: NaiveDate,
        #[arg(long)]
        end: NaiveDate,
        /// Keep every n-th origin in the range.
        #[arg(long = "every-n", default_value_t = 1)]
        every_n: usize,
    },
    /// Evaluation with parts of the evidence switched off.
    Ablate {
        #[arg(long)]
        start: NaiveDate,
        #[arg(long)]
        end: NaiveDate,
        #[arg(long = "every-n", default_value_t = 1)]
        every_n: usize,
        /// Comma-separated flags: no_agent1, no_climate, no_rag,
        /// no_school_event.
        #[arg(long, value_delimiter = ',')]
        flags: Vec<String>,
    },
    /// Rebuild artifacts from a stored record table.
    Report {
        /// A records.csv written by `evaluate` or `ablate`.
        #[arg(long)]
        records: PathBuf,
        #[arg(long, value_enum)]
        format: FormatArg,
    },
}

fn require_config(cli: &Cli) -> Result<&PathBuf, AppError> {
    cli.config
        .as_ref()
        .ok_or_else(|| AppError::Validation("--config is required for this subcommand".into()))
}

fn run(cli: Cli) -> Result<(), AppError> {
    let mode = Mode::from(cli.mode);
    match &cli.command {
        Command::Ingest => {
            let world = app::build_world(
                require_config(&cli)?,
                mode,
                cli.transcripts.as_deref(),
                cli.out.as_deref(),
                None,
            )?;
            app::cmd_ingest(&world)
        }
        Command::Forecast { origin } => {
            let world = app::build_world(
                require_config(&cli)?,
                mode,
                cli.transcripts.as_deref(),
                cli.out.as_deref(),
                None,
            )?;
            app::cmd_forecast(&world, *origin)
        }
        Command::Evaluate {
            start,
            end,
            every_n,
        } => {
            let world = app::build_world(
                require_config(&cli)?,
                mode,
                cli.transcripts.as_deref(),
                cli.out.as_deref(),
                None,
            )?;
            app::cmd_evaluate(&world, *start, *end, *every_n)
        }
        Command::Ablate {
            start,
            end,
            every_n,
            flags,
        } => {
            let ablation = app::parse_ablation_flags(flags)?;
            let mut world = app::build_world(
                require_config(&cli)?,
                mode,
                cli.transcripts.as_deref(),
                cli.out.as_deref(),
                Some(ablation),
            )?;
            // Keep ablation variants separate unless --out pinned a spot.
            if cli.out.is_none() {
                world.out_dir = world.out_dir.join(app::ablation_dir_name(ablation));
            }
            app::cmd_evaluate(&world, *start, *end, *every_n)
        }
        Command::Report { records, format } => {
            app::cmd_report(records, ReportFormat::from(*format), cli.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    // Rust ignores SIGPIPE, so a consumer that stops reading the JSONL
    // streams (`epicast ... | head`) would otherwise turn every later write
    // into a panic. Restore the default disposition and die quietly like any
    // other stream-writing tool.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            // clap renders help to stdout and errors to stderr on its own.
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            app::log_event(
                "error",
                serde_json::json!({ "message": e.message(), "exit_code": e.exit_code() }),
            );
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
