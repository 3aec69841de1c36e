use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use ainsight_core::ingest::{ChunkingParams, KnowledgeBase};
use ainsight_core::pipeline::{Engine, EngineConfig, DEFAULT_TICK_MS};
use ainsight_core::providers::{ProviderConfig, ProviderMode, ProviderSet};
use ainsight_core::replay::{export_metrics, load_script, run_replay, ClockKind, ReplayOptions};
use ainsight_core::{Error, Result};
use ainsight_server::{serve, AppState, ServerConfig};
use clap::{Args, Parser, Subcommand};
use tracing::{error, info};
use tracing_subscriber::EnvFilter;

/// Real-time, source-grounded decision support for live conversations.
///
/// Provider settings come from the environment (`AINSIGHT_PROVIDER_MODE`,
/// `AINSIGHT_BASE_URL`, `AINSIGHT_API_KEY`, ...); the default is the offline
/// mock mode.
#[derive(Debug, Parser)]
#[command(name = "ainsight", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Chunk and embed a knowledge-base directory into an index directory.
    Ingest(IngestArgs),
    /// Run the HTTP/SSE service.
    Serve(ServeArgs),
    /// Replay a scripted dialogue through the pipeline and write metrics.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    kb: PathBuf,
    /// Output directory for index.jsonl and manifest.json.
    #[arg(long)]
    index: PathBuf,
    #[arg(long, default_value_t = ChunkingParams::default().max_chunk_chars)]
    chunk_chars: usize,
    #[arg(long, default_value_t = ChunkingParams::default().overlap_chars)]
    overlap: usize,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Overrides AINSIGHT_LISTEN_ADDR.
    #[arg(long)]
    listen: Option<String>,
    /// Overrides AINSIGHT_INDEX_PATH.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Overrides AINSIGHT_KB_DIR.
    #[arg(long)]
    kb: Option<PathBuf>,
    /// Overrides AINSIGHT_UI_DIR.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
    /// Overrides AINSIGHT_TICK_MS.
    #[arg(long)]
    tick_ms: Option<u64>,
    /// Overrides AINSIGHT_MOCK_FIXTURES.
    #[arg(long)]
    mock_fixtures: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[arg(long)]
    script: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    #[arg(long, default_value_t = ClockKind::Sim)]
    clock: ClockKind,
    #[arg(long)]
    out: PathBuf,
    /// A saved index; without it `--kb` is ingested in memory.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Knowledge-base root. Defaults to `../kb` next to the script's directory.
    #[arg(long)]
    kb: Option<PathBuf>,
    /// Mock chat fixtures. Defaults to `../mock` next to the script's directory.
    #[arg(long)]
    mock_fixtures: Option<PathBuf>,
    /// Overrides the script's fixture key.
    #[arg(long)]
    fixture_key: Option<String>,
    #[arg(long, default_value_t = DEFAULT_TICK_MS)]
    tick_ms: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let result = match cli.command {
        Command::Ingest(args) => ingest(args),
        Command::Serve(args) => run_serve(args),
        Command::Replay(args) => replay(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn ingest(args: IngestArgs) -> Result<()> {
    let providers = ProviderSet::from_config(&ProviderConfig::from_env()?, None)?;
    let params = ChunkingParams {
        max_chunk_chars: args.chunk_chars,
        overlap_chars: args.overlap,
    };
    let kb = KnowledgeBase::ingest(&args.kb, &params, &providers)?;
    kb.save(&args.index)?;
    println!(
        "indexed {} chunks from {} sources into {}",
        kb.index.len(),
        kb.manifest.sources.len(),
        args.index.display()
    );
    Ok(())
}

fn run_serve(args: ServeArgs) -> Result<()> {
    let mut config = ServerConfig::from_env()?;
    if let Some(v) = args.listen {
        config.listen_addr = v;
    }
    config.index_path = args.index.or(config.index_path);
    config.kb_dir = args.kb.or(config.kb_dir);
    config.ui_dir = args.ui_dir.or(config.ui_dir);
    config.mock_fixtures = args.mock_fixtures.or(config.mock_fixtures);
    if let Some(v) = args.tick_ms {
        config.tick_ms = v;
    }
    let engine = config.build_engine()?.map(Arc::new);
    if engine.is_none() {
        info!("no index configured; sessions will be refused until one is given");
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&config.listen_addr)
            .await
            .map_err(|e| Error::io(&config.listen_addr, e))?;
        let addr = listener
            .local_addr()
            .map_err(|e| Error::io(&config.listen_addr, e))?;
        // Printed so scripts can bind port 0 and discover the address.
        println!("listening on {addr}");
        serve(listener, AppState::new(engine), config.ui_dir.as_deref())
            .await
            .map_err(|e| Error::io(addr.to_string(), e))
    })
}

fn sibling_of_script(script: &Path, name: &str) -> Option<PathBuf> {
    let dir = script.parent()?.parent()?.join(name);
    dir.is_dir().then_some(dir)
}

fn replay(args: ReplayArgs) -> Result<()> {
    let script = load_script(&args.script)?;
    let provider_config = ProviderConfig::from_env()?;
    let mock_fixtures = args.mock_fixtures.or_else(|| {
        (provider_config.mode == ProviderMode::Mock)
            .then(|| sibling_of_script(&args.script, "mock"))
            .flatten()
    });
    let providers = ProviderSet::from_config(&provider_config, mock_fixtures.as_deref())?;
    let kb_dir = args.kb.or_else(|| sibling_of_script(&args.script, "kb"));
    let kb = match (&args.index, &kb_dir) {
        (Some(index), kb_dir) => KnowledgeBase::open(index, kb_dir.as_deref())?,
        (None, Some(kb_dir)) => {
            KnowledgeBase::ingest(kb_dir, &ChunkingParams::default(), &providers)?
        }
        (None, None) => {
            return Err(Error::Config(
                "no knowledge base: pass --index or --kb".into(),
            ))
        }
    };
    let engine = Engine::new(
        kb,
        providers,
        EngineConfig {
            tick_ms: args.tick_ms,
            ..EngineConfig::default()
        },
    )?;
    let opts = ReplayOptions {
        speed: args.speed,
        clock: args.clock,
        session_id: None,
        fixture_key: args.fixture_key,
    };
    match run_replay(&script, &engine, &opts) {
        Ok(outcome) => {
            export_metrics(&outcome.metrics, &args.out)?;
            let t = &outcome.metrics.totals;
            println!(
                "{}: {} ticks ({} skipped, {} failed), {} insights, {} provider calls; metrics in {}",
                script.title,
                t.ticks,
                t.skipped_ticks,
                t.failed_ticks,
                t.insights,
                outcome.metrics.session_usage.call_count,
                args.out.display()
            );
            Ok(())
        }
        Err(failure) => {
            if let Some(partial) = &failure.partial {
                export_metrics(partial, &args.out)?;
                eprintln!("partial metrics written to {}", args.out.display());
            }
            Err(failure.error)
        }
    }
}
