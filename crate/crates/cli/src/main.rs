use std::fs;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nodoi_core::mock::{fixture_dir, load_tei_fixtures, FixtureSite, MockExtractionService};
use nodoi_core::pipeline::{
    ConfigLayer, Pipeline, PipelineConfig, PipelineError, Stage, StageOutcome, EXIT_MISSING_PREREQUISITE,
    EXIT_STAGE_FAILED,
};
use nodoi_core::MetadataStore;

/// Builds a citation dataset for open-access papers without DOIs.
///
/// Settings come from defaults, then the config file, then `NODOI_*`
/// environment variables, then flags.
#[derive(Debug, Parser)]
#[command(name = "nodoi", version)]
struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true, env = "NODOI_CONFIG")]
    config: Option<PathBuf>,
    /// Work directory holding every stage's outputs.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Corpus XML file.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Base URL of the PDF-to-TEI extraction service.
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// Ask the service to consolidate citations (`--consolidate=false` to disable).
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    consolidate: Option<bool>,
    /// Treat invariant violations as failures (exit code 3).
    #[arg(long, global = true)]
    strict: bool,
    /// Worker threads and extraction requests in flight.
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one stage or `all`: ingest, load-store, harvest, extract, convert, match, export.
    Run { stage: String },
    /// Inspect the metadata store.
    Store {
        #[command(subcommand)]
        command: StoreCommand,
    },
    /// Serve the mock extraction service until interrupted.
    MockService {
        /// Directory of `<name>.pdf` / `<name>.tei.xml` pairs.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8070")]
        bind: SocketAddr,
        /// Also serve the bundled fixture PDFs and write a corpus pointing
        /// at them into this directory. The service then binds a free port.
        #[arg(long)]
        site_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum StoreCommand {
    /// Record count and index sizes.
    Stats,
}

fn resolve(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut layers = Vec::new();
    if let Some(path) = &cli.config {
        layers.push(ConfigLayer::from_file(path)?);
    }
    layers.push(ConfigLayer::from_env(std::env::vars())?);
    layers.push(ConfigLayer {
        corpus_path: cli.corpus.clone(),
        workdir: cli.workdir.clone(),
        extraction_endpoint: cli.endpoint.clone(),
        consolidate_citations: cli.consolidate,
        concurrency: cli.concurrency,
        strict: cli.strict.then_some(true),
        ..ConfigLayer::default()
    });
    Ok(PipelineConfig::resolve(&layers)?)
}

fn run(cli: &Cli, stage: &str) -> Result<(), PipelineError> {
    let Some(stages) = Stage::parse_selection(stage) else {
        eprintln!("error: unknown stage {stage:?}");
        std::process::exit(EXIT_MISSING_PREREQUISITE);
    };
    let pipeline = Pipeline::new(resolve(cli)?);
    for stage in stages {
        let report = pipeline.run_stage(stage)?;
        let outcome = match report.outcome {
            StageOutcome::Completed => "completed",
            StageOutcome::Skipped => "skipped (up to date)",
        };
        println!("{:<10} {outcome}  {}", stage.as_str(), report.summary);
        if !report.warnings.is_empty() {
            println!("{:<10} {} warning(s)", "", report.warnings.len());
        }
        if stage == Stage::Export {
            if let Ok(table) = fs::read_to_string(pipeline.stage_dir(Stage::Export).join("stats.txt")) {
                print!("\n{table}");
            }
        }
    }
    Ok(())
}

fn store_stats(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = resolve(cli)?;
    let dir = cfg.workdir.join(Stage::LoadStore.dir_name());
    if !dir.join("records.jsonl").is_file() {
        return Err(PipelineError::MissingPrerequisite {
            stage: Stage::LoadStore,
            message: format!("no store at {}", dir.display()),
        });
    }
    let store = MetadataStore::open(&dir).map_err(|e| PipelineError::Failed {
        stage: Stage::LoadStore,
        message: e.to_string(),
    })?;
    let stats = store.stats();
    println!("location      {}", dir.display());
    println!("record_count  {}", stats.record_count);
    println!("by_doi        {}", stats.doi_keys);
    println!("by_norm_title {}", stats.title_keys);
    Ok(())
}

enum Serving {
    Site(FixtureSite),
    Service(MockExtractionService),
}

fn mock_service(fixtures: Option<PathBuf>, bind: SocketAddr, site_dir: Option<PathBuf>) -> std::io::Result<()> {
    let serving = match site_dir {
        Some(dir) => Serving::Site(FixtureSite::start(&fixtures.unwrap_or_else(fixture_dir), &dir)?),
        None => {
            let dir = fixtures.unwrap_or_else(|| fixture_dir().join("service"));
            Serving::Service(MockExtractionService::start_on(load_tei_fixtures(&dir)?, bind)?)
        }
    };
    match &serving {
        Serving::Site(site) => {
            println!("extraction service  {}", site.service.endpoint());
            println!("pdf host            {}", site.host.base_url());
            println!("corpus              {}", site.corpus.display());
        }
        Serving::Service(service) => println!("extraction service  {}", service.endpoint()),
    }
    println!("press Ctrl-C to stop");
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()?
        .block_on(tokio::signal::ctrl_c())?;
    drop(serving);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Run { stage } => run(&cli, stage),
        Command::Store {
            command: StoreCommand::Stats,
        } => store_stats(&cli),
        Command::MockService {
            fixtures,
            bind,
            site_dir,
        } => {
            return match mock_service(fixtures.clone(), *bind, site_dir.clone()) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: mock service: {e}");
                    ExitCode::from(EXIT_STAGE_FAILED as u8)
                }
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(EXIT_STAGE_FAILED as u8))
        }
    }
}
