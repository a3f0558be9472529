use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use openvik_cli::server;
use openvik_core::annotation::AnnotationStore;
use openvik_core::io::from_jsonl;
use openvik_core::corpus::parse_corpus;
use openvik_core::pipeline::{load_config, run_all, run_stage, ConfigIssue, PipelineConfig, StageError, StageName};
use openvik_core::{KnowledgePhrase, Split};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, RwLock};

#[derive(Parser)]
#[command(name = "openvik", version, about = "Open-vocabulary visual knowledge pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    Ingest(StageArgs),
    Enhance(StageArgs),
    TrainDetector(StageArgs),
    TrainGenerator(StageArgs),
    Extract(StageArgs),
    Evaluate(StageArgs),
    CompareKg(StageArgs),
    Enrich(StageArgs),
    /// Every enabled stage in order.
    All(StageArgs),
    /// Check a config file and print the resolved settings.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Serve the rating backend over HTTP.
    ServeAnnotation {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Knowledge phrases (JSONL) to rate.
        #[arg(long)]
        corpus: PathBuf,
        /// Image records (JSONL) supplying image locations.
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "rater1,rater2,rater3")]
        raters: Vec<String>,
        /// Append-only rating log; defaults to `<corpus>.ratings.log`.
        #[arg(long)]
        ratings: Option<PathBuf>,
        /// Show only the first N phrases of each image.
        #[arg(long)]
        phrases_per_image: Option<usize>,
    },
}

fn config_error(e: Vec<ConfigIssue>) -> StageError {
    StageError::Config(e)
}

fn load(args: &StageArgs) -> Result<PipelineConfig, StageError> {
    let mut config = load_config(&args.config).map_err(config_error)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.paths.out = out.clone();
    }
    Ok(config)
}

fn stage_command(stage: Option<StageName>, args: &StageArgs) -> Result<(), StageError> {
    let config = load(args)?;
    let manifests = match stage {
        Some(s) => vec![run_stage(s, &config)?],
        None => run_all(&config)?,
    };
    for m in manifests {
        println!("{}: {} output(s) in {}", m.stage, m.outputs.len(), config.paths.out.display());
    }
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    from_jsonl(&text).map_err(|(line, e)| anyhow::anyhow!("{} line {line}: {e}", path.display()))
}

#[allow(clippy::too_many_arguments)]
fn serve(
    host: &str,
    port: u16,
    corpus: &Path,
    images: Option<&Path>,
    raters: Vec<String>,
    ratings: Option<PathBuf>,
    phrases_per_image: Option<usize>,
) -> anyhow::Result<()> {
    let phrases: Vec<KnowledgePhrase> = read_jsonl(corpus)?;
    let uris: BTreeMap<String, String> = match images {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let images = parse_corpus(&text, Split::Test)?;
            images.images().iter().map(|r| (r.image_id.clone(), r.uri.clone())).collect()
        }
        None => BTreeMap::new(),
    };
    if raters.iter().any(|r| r.trim().is_empty()) {
        bail!("rater ids must be non-empty");
    }
    let log = ratings.unwrap_or_else(|| {
        let mut s = corpus.as_os_str().to_owned();
        s.push(".ratings.log");
        PathBuf::from(s)
    });
    let store = AnnotationStore::new(&phrases, &uris, raters, phrases_per_image)?.with_log(&log)?;
    let app = server::router(Arc::new(RwLock::new(store)));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port)).await.with_context(|| format!("binding {host}:{port}"))?;
        eprintln!("annotation backend on http://{}", listener.local_addr()?);
        axum::serve(listener, app).await?;
        Ok(())
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, args) = match cli.command {
        Command::Ingest(a) => (Some(StageName::Ingest), a),
        Command::Enhance(a) => (Some(StageName::Enhance), a),
        Command::TrainDetector(a) => (Some(StageName::TrainDetector), a),
        Command::TrainGenerator(a) => (Some(StageName::TrainGenerator), a),
        Command::Extract(a) => (Some(StageName::Extract), a),
        Command::Evaluate(a) => (Some(StageName::Evaluate), a),
        Command::CompareKg(a) => (Some(StageName::CompareKg), a),
        Command::Enrich(a) => (Some(StageName::Enrich), a),
        Command::All(a) => (None, a),
        Command::ValidateConfig { config } => {
            return match load_config(&config) {
                Ok(c) => {
                    print!("{}", c.to_toml());
                    ExitCode::SUCCESS
                }
                Err(issues) => {
                    eprintln!("error: {}", config_error(issues));
                    ExitCode::from(2)
                }
            };
        }
        Command::ServeAnnotation { port, host, corpus, images, raters, ratings, phrases_per_image } => {
            return match serve(&host, port, &corpus, images.as_deref(), raters, ratings, phrases_per_image) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::FAILURE
                }
            };
        }
    };
    match stage_command(stage, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
