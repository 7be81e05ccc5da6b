//! Command line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 search or runtime error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use semantelli_core::query::QueryError;
use semantelli_core::{RelevanceNumerator, SearchError, SearchOptions, SearchResponse};

use crate::config::AppConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "semantelli", version, about = "Federated metasearch with telliFactor ranking")]
pub struct Cli {
    /// Config file (key = value). Falls back to $SEMANTELLI_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Engine database file; overrides the config file.
    #[arg(long, global = true)]
    pub seid: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one search and print the ranked results.
    Search(SearchArgs),
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        listen: Option<String>,
    },
    /// Inspect or change the engine roster.
    #[command(subcommand)]
    Engines(EnginesCommand),
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    pub query: String,
    #[arg(long, conflicts_with = "table")]
    pub json: bool,
    #[arg(long)]
    pub table: bool,
    #[arg(long)]
    pub damping: Option<f64>,
    #[arg(long, value_parser = ["h_plus_l", "h_plus_one"])]
    pub relevance_numerator: Option<String>,
    #[arg(long)]
    pub limit: Option<usize>,
    /// Include full-precision scores.
    #[arg(long)]
    pub verbose: bool,
    /// Write the search session as JSON to stderr.
    #[arg(long)]
    pub dump_session: bool,
}

#[derive(Debug, Subcommand)]
pub enum EnginesCommand {
    List,
    SetWeight { engine_id: String, weight: f64 },
}

/// Renders a response as the JSON body the HTTP API returns.
pub fn response_json(response: &SearchResponse) -> String {
    serde_json::to_string(response).expect("response serializes")
}

fn print_table(out: &mut dyn Write, r: &SearchResponse) -> std::io::Result<()> {
    writeln!(out, "query: {}", r.query)?;
    writeln!(out, "combinations: {}", r.combinations.join(" | "))?;
    writeln!(out, "{:>4}  {:>6}  {:<28}  title / url", "rank", "t_F", "engines")?;
    for row in &r.results {
        let engines = row
            .engines
            .iter()
            .map(|c| format!("{}#{}", c.engine_id, c.origin_rank))
            .collect::<Vec<_>>()
            .join(",");
        writeln!(out, "{:>4}  {:>6.3}  {:<28}  {}", row.final_rank, row.telli_factor, engines, row.title)?;
        writeln!(out, "{:>4}  {:>6}  {:<28}  {}", "", "", "", row.canonical_url)?;
    }
    let failed = r.fetch_report.count(|o| !o.is_ok());
    writeln!(
        out,
        "{} of {} results shown; {} of {} backend requests failed",
        r.results.len(),
        r.total_results,
        failed,
        r.fetch_report.entries.len()
    )
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => EXIT_USAGE,
            };
        }
    };

    let mut config = match AppConfig::discover(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_ERROR;
        }
    };
    if let Some(seid) = cli.seid {
        config.seid_path = seid;
    }

    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().expect("tokio runtime");
    match cli.command {
        Command::Search(args) => runtime.block_on(run_search(config, args, out, err)),
        Command::Serve { listen } => {
            if let Some(listen) = listen {
                config.listen = listen;
            }
            let service = match config.build_service() {
                Ok(s) => Arc::new(s),
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    return EXIT_ERROR;
                }
            };
            match runtime.block_on(crate::http::serve(service, &config.listen, config.ui_dir.as_deref())) {
                Ok(()) => EXIT_OK,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    EXIT_ERROR
                }
            }
        }
        Command::Engines(cmd) => run_engines(&config, cmd, out, err),
    }
}

async fn run_search(mut config: AppConfig, args: SearchArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    if let Some(d) = args.damping {
        config.settings.score.damping = d;
    }
    if let Some(n) = &args.relevance_numerator {
        config.settings.score.relevance_numerator = n.parse::<RelevanceNumerator>().expect("restricted by clap");
    }
    if let Err(e) = config.settings.score.validate() {
        let _ = writeln!(err, "error: {e}");
        return EXIT_USAGE;
    }
    let service = match config.build_service() {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_ERROR;
        }
    };
    let options = SearchOptions {
        limit: args.limit.unwrap_or(SearchOptions::default().limit),
        verbose: args.verbose,
    };
    match service.search_with_session(&args.query, options).await {
        Ok((response, session)) => {
            if args.dump_session {
                let _ = writeln!(err, "{}", serde_json::to_string_pretty(&*session).expect("session serializes"));
            }
            let written = if args.json {
                writeln!(out, "{}", response_json(&response))
            } else {
                print_table(out, &response)
            };
            if written.is_err() {
                return EXIT_ERROR;
            }
            EXIT_OK
        }
        Err(SearchError::Query(e @ (QueryError::EmptyQuery | QueryError::QueryTooLong(_)))) => {
            let _ = writeln!(err, "error: {e}\n\nUsage: semantelli search <QUERY> [--json|--table]");
            EXIT_USAGE
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn run_engines(config: &AppConfig, cmd: EnginesCommand, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let service = match config.build_service() {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_ERROR;
        }
    };
    if let EnginesCommand::SetWeight { engine_id, weight } = &cmd {
        if let Err(e) = service.set_engine_weight(engine_id, *weight) {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    }
    let _ = writeln!(out, "{:<12} {:<12} {:>6} {:<8} adapter", "engine", "name", "weight", "enabled");
    for e in service.engines() {
        let adapter = e.adapter.map_or("-".to_owned(), |k| k.to_string());
        let _ = writeln!(
            out,
            "{:<12} {:<12} {:>6.3} {:<8} {}",
            e.engine_id, e.display_name, e.initial_weight, e.enabled, adapter
        );
    }
    EXIT_OK
}
