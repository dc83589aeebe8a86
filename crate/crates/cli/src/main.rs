mod commands;
mod config;

use std::ffi::OsString;
use std::io::ErrorKind;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use prov_core::NodeId;

#[derive(Parser, Debug)]
#[command(name = "prov", version, about = "Provenance indexes over a deduplicated archive of source code")]
pub struct Cli {
    /// Store directory.
    #[arg(long, global = true, env = "PROV_STORE")]
    pub store: Option<PathBuf>,
    /// key = value file with defaults for any long option.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Line-delimited JSON instead of TSV/CSV.
    #[arg(long, global = true)]
    pub json: bool,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Print a banner with the wall-clock time before the output.
    #[arg(long, global = true)]
    pub timestamps: bool,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Load artifacts into the store.
    #[command(subcommand)]
    Ingest(IngestCmd),
    /// Record visits of origins.
    #[command(subcommand)]
    Visit(VisitCmd),
    /// Generate synthetic corpora.
    #[command(subcommand)]
    Gen(GenCmd),
    /// Build or update a provenance index.
    Build(BuildArgs),
    /// Query a provenance index.
    #[command(subcommand)]
    Query(QueryCmd),
    /// Entity and relationship counts of built indexes.
    Stats(StatsArgs),
    /// Growth, multiplication, SLOC and origin measurements.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Store maintenance.
    #[command(subcommand)]
    Store(StoreCmd),
    /// Rehash every node and check references.
    Validate,
}

#[derive(Subcommand, Debug)]
pub enum IngestCmd {
    /// Load a JSON-lines dump (plain or .gz; `-` reads stdin).
    Dump {
        #[arg(long, default_value = "-")]
        input: PathBuf,
        /// Digest algorithm when the store is created.
        #[arg(long, default_value = "sha1")]
        algo: String,
    },
    /// Import every object reachable from the refs of a git repository.
    Git {
        #[arg(long)]
        repo: PathBuf,
        /// Origin URL recorded for the visit (default: the repository path).
        #[arg(long)]
        origin: Option<String>,
        /// Visit time in Unix seconds (default: now).
        #[arg(long)]
        visit_time: Option<i64>,
    },
}

#[derive(Subcommand, Debug)]
pub enum VisitCmd {
    Record {
        #[arg(long)]
        origin: String,
        #[arg(long)]
        snapshot: NodeId,
        /// Unix seconds.
        #[arg(long)]
        time: i64,
    },
}

#[derive(Args, Debug)]
pub struct GenOutput {
    /// Write a dump here (`-` for stdout) instead of into the store.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value = "sha1")]
    pub algo: String,
}

#[derive(Subcommand, Debug)]
pub enum GenCmd {
    /// Origins with exponentially growing activity and heavy-tailed reuse.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        origins: Option<usize>,
        /// fixed:N, uniform:A-B or geometric:MEAN.
        #[arg(long)]
        revisions: Option<String>,
        /// Unix seconds of the first revision.
        #[arg(long)]
        start: Option<i64>,
        #[arg(long)]
        years: Option<f64>,
        /// Growth rate per year.
        #[arg(long)]
        rate: Option<f64>,
        /// Exponent of the content reuse distribution.
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        #[arg(long)]
        max_multiplicity: Option<u32>,
        #[arg(long)]
        slots: Option<usize>,
        #[arg(long)]
        branching: Option<usize>,
        #[arg(long)]
        fork_probability: Option<f64>,
        #[arg(long)]
        release_probability: Option<f64>,
        #[arg(long)]
        min_size: Option<usize>,
        #[arg(long)]
        max_size: Option<usize>,
        #[command(flatten)]
        out: GenOutput,
    },
    /// n revisions sharing one root directory of k contents.
    Extreme1 {
        #[arg(long)]
        revisions: usize,
        #[arg(long)]
        contents: usize,
        #[arg(long, default_value_t = 1_000_000_000)]
        start: i64,
        #[command(flatten)]
        out: GenOutput,
    },
    /// n revisions over pairwise disjoint trees.
    Extreme2 {
        #[arg(long)]
        revisions: usize,
        #[arg(long, default_value_t = 3)]
        files: usize,
        #[arg(long)]
        nested: bool,
        #[arg(long, default_value_t = 1_000_000_000)]
        start: i64,
        #[command(flatten)]
        out: GenOutput,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModelArg {
    Flat,
    Compact,
    Recursive,
    All,
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    /// Keep revisions strictly after this Unix time.
    #[arg(long, allow_hyphen_values = true)]
    pub after: Option<i64>,
    /// Keep revisions at or before this Unix time.
    #[arg(long, allow_hyphen_values = true)]
    pub until: Option<i64>,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Fail on out-of-order revisions instead of marking the index approximate.
    #[arg(long)]
    pub strict_order: bool,
    /// Revisions per transaction.
    #[arg(long, default_value_t = 2048)]
    pub chunk: usize,
    #[command(flatten)]
    pub filter: FilterArgs,
}

#[derive(Subcommand, Debug)]
pub enum QueryCmd {
    /// Earliest occurrence of a content.
    First {
        #[arg(long)]
        content: NodeId,
        #[arg(long, value_enum, default_value = "compact")]
        model: ModelArg,
    },
    /// Every occurrence of a content, streamed.
    All {
        #[arg(long)]
        content: NodeId,
        #[arg(long, value_enum, default_value = "compact")]
        model: ModelArg,
        /// Append the origins holding each revision.
        #[arg(long)]
        origins: bool,
    },
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub model: ModelArg,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// Hex prefix of sampled ids.
    #[arg(long)]
    pub prefix: Option<String>,
    /// Smallest content size in bytes.
    #[arg(long)]
    pub min_size: Option<u64>,
    /// Largest content size in bytes.
    #[arg(long)]
    pub max_size: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SeriesArg {
    Revisions,
    Contents,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LawArg {
    Exponential,
    PowerLaw,
}

#[derive(Subcommand, Debug)]
pub enum AnalyzeCmd {
    /// Original revisions or contents per time bucket (CSV bucket,count).
    Growth {
        #[arg(long, value_enum, default_value = "revisions")]
        series: SeriesArg,
        /// 1m, 3m, 86400s...
        #[arg(long, default_value = "1m")]
        bucket: String,
        /// Keep revisions strictly after this Unix time.
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        after: i64,
        /// Keep revisions at or before this Unix time.
        #[arg(long, allow_hyphen_values = true)]
        until: Option<i64>,
    },
    /// Fit a CSV produced by `growth` or `mult`; prints a JSON summary.
    Fit {
        #[arg(long, value_enum)]
        law: LawArg,
        #[arg(long, default_value = "-")]
        input: PathBuf,
        /// Exponential: first bucket kept (YYYY-MM or Unix seconds).
        #[arg(long)]
        from: Option<String>,
        /// Exponential: last bucket kept.
        #[arg(long)]
        to: Option<String>,
        /// Power law: smallest k kept.
        #[arg(long, default_value_t = 1)]
        kmin: u64,
        /// Power law: largest k kept.
        #[arg(long, default_value_t = u64::MAX)]
        kmax: u64,
    },
    /// Multiplication factor histogram (CSV k,count).
    Mult {
        /// content (revisions per content, needs the flat index) or
        /// revision (origins per revision, needs visits).
        #[arg(long, default_value = "content")]
        layer: String,
        #[command(flatten)]
        sample: SampleArgs,
        /// Artifacts with a factor of at least k.
        #[arg(long)]
        cumulative: bool,
    },
    /// Contents per normalized source line (CSV k,count).
    Sloc {
        /// Name suffix a content must have been recorded under; repeatable.
        #[arg(long = "ext")]
        extensions: Vec<String>,
        #[command(flatten)]
        sample: SampleArgs,
        /// Emit the line length distribution (CSV length,count) instead.
        #[arg(long)]
        lengths: bool,
    },
    /// Revisions per origin.
    Origins {
        #[arg(long, default_value = "simple")]
        mode: String,
        /// Emit the size distribution (CSV k,count) instead.
        #[arg(long)]
        distribution: bool,
    },
}

#[derive(Subcommand, Debug)]
pub enum StoreCmd {
    /// Entries and bytes per keyspace.
    Stats,
}

/// Parses the command line, then again with config values the command
/// line left unset.
fn parse_args(argv: Vec<OsString>) -> Result<Cli, clap::Error> {
    let cmd = Cli::command();
    let matches = match cmd.clone().try_get_matches_from(&argv) {
        Ok(m) => m,
        // A required option may still come from the config file.
        Err(e) if e.kind() == clap::error::ErrorKind::MissingRequiredArgument => {
            match cmd.clone().ignore_errors(true).try_get_matches_from(&argv) {
                Ok(m) if m.get_one::<PathBuf>("config").is_some() => m,
                _ => return Err(e),
            }
        }
        Err(e) => return Err(e),
    };
    let Some(path) = matches.get_one::<PathBuf>("config") else { return Cli::from_arg_matches(&matches) };
    let entries = match config::load(path) {
        Ok(e) => e,
        Err(e) => return Err(Cli::command().error(clap::error::ErrorKind::Io, format!("{e:#}"))),
    };
    let (extra, ignored) = config::extra_args(&cmd, &matches, &entries);
    for key in ignored {
        log::warn!("config key {key:?} does not apply to this command");
    }
    let mut full = argv;
    full.extend(extra);
    Cli::try_parse_from(full)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match parse_args(std::env::args_os().collect()) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    log::info!("effective configuration: {cli:?}");
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            log::warn!("cannot size the thread pool: {e}");
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if e.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == ErrorKind::BrokenPipe)) {
                return ExitCode::SUCCESS;
            }
            if let Some(usage) = e.downcast_ref::<commands::Usage>() {
                eprintln!("error: {usage}");
                return ExitCode::from(2);
            }
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
