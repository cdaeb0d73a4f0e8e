use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use memcost_core::config::{Overrides, PipelineConfig};
use memcost_core::pipeline::{run_pipeline, Command, RunOptions};
use memcost_core::report::Format;
use memcost_core::synth::{SynthCorpus, SynthSpec};
use memcost_core::Error;

/// Dependency-based maintenance metrics and their evaluation against
/// reading times.
#[derive(Parser)]
#[command(name = "memcost", version)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and validate the treebank.
    Parse(Common),
    /// Region-level maintenance metrics.
    Metrics(Common),
    /// Build the feature matrix.
    Features(Common),
    /// Cross-validated model comparison.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Baseline predictors (comma separated).
        #[arg(long, value_delimiter = ',')]
        base: Option<Vec<String>>,
        /// Predictors added to the baseline for a custom full model.
        #[arg(long, value_delimiter = ',')]
        add: Option<Vec<String>>,
    },
    /// Per-participant typology and the anti-locality tradeoff.
    Participants(Common),
    /// Tables and summaries from the artifacts in the output directory.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = FormatArg::Tsv)]
        format: FormatArg,
    },
    /// Write a synthetic corpus with planted effects and a matching config.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        docs: Option<usize>,
        #[arg(long)]
        sentences: Option<usize>,
        #[arg(long)]
        participants: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "memcost-out")]
    out_dir: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    n_perm: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Tsv,
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, Error> {
    let (command, common, base, add, format) = match cli.command {
        Cmd::Synth {
            out_dir,
            seed,
            docs,
            sentences,
            participants,
        } => {
            let mut spec = SynthSpec::fixture(seed);
            spec.n_docs = docs.unwrap_or(spec.n_docs);
            spec.sentences_per_doc = sentences.unwrap_or(spec.sentences_per_doc);
            spec.n_participants = participants.unwrap_or(spec.n_participants);
            SynthCorpus::generate(&spec)?.write_to(&out_dir, seed)?;
            return Ok(vec![out_dir]);
        }
        Cmd::Parse(c) => (Command::Parse, c, None, None, Format::Tsv),
        Cmd::Metrics(c) => (Command::Metrics, c, None, None, Format::Tsv),
        Cmd::Features(c) => (Command::Features, c, None, None, Format::Tsv),
        Cmd::Participants(c) => (Command::Participants, c, None, None, Format::Tsv),
        Cmd::Eval { common, base, add } => (Command::Eval, common, base, add, Format::Tsv),
        Cmd::Report { common, format } => {
            let f = match format {
                FormatArg::Json => Format::Json,
                FormatArg::Tsv => Format::Tsv,
            };
            (Command::Report, common, None, None, f)
        }
    };

    let mut cfg = PipelineConfig::load(&common.config)?;
    cfg.apply(&Overrides {
        base,
        add,
        k: common.k,
        repeats: common.repeats,
        n_perm: common.n_perm,
        seed: common.seed,
    });
    let opts = RunOptions {
        out_dir: common.out_dir,
        format,
    };
    Ok(run_pipeline(&cfg, command, &opts)?.files)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("memcost: error[{}]: {e}", e.kind());
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}
