use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use chrono::{DateTime, NaiveDate, Timelike};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

use musical_moments::dataset::{
    build_dataset, read_dataset, split_dataset, write_dataset, DEFAULT_TRAIN_FRACTION,
    DEFAULT_VOCABULARY_SIZE,
};
use musical_moments::ingestion::{ApiConfig, Cache, Ingestor, Mode, DEFAULT_RATE_LIMIT};
use musical_moments::models::{
    evaluate_rmse, load_model, save_model, train, GbtConfig, ModelKind, TrainConfig, DEFAULT_LAMBDA,
};
use musical_moments::pipeline::{render_report, run_pipeline, Library, DEFAULT_K, LIBRARY_FILE};
use musical_moments::service::{serve, AppState, Artifacts, FEEDBACK_FILE};
use musical_moments::simulator::{generate_history, ListenerSpec};
use musical_moments::types::{Feature, TzOffset};

#[derive(Parser)]
#[command(name = "moments", version, about = "Hour-of-day music recommendations from a scrobble history")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch scrobbles, tags and audio features into a local cache.
    Ingest(IngestArgs),
    /// Turn a cache into the hourly moments dataset and the track library.
    BuildDataset(BuildArgs),
    /// Train a regressor on a dataset and report held-out RMSE.
    Train(TrainArgs),
    /// Run the four phases for one hour and print the report.
    Recommend(RecommendArgs),
    /// Generate a synthetic listening history as fixture files.
    Simulate(SimulateArgs),
    /// Serve the HTTP API (and optionally static web assets).
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Live,
    Offline,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long, value_enum, default_value = "offline")]
    mode: ModeArg,
    /// Fixture directory (offline mode).
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Cache directory to write.
    #[arg(long)]
    out: PathBuf,
    /// Start of the window, RFC 3339 or YYYY-MM-DD (inclusive).
    #[arg(long)]
    since: Option<String>,
    /// End of the window, RFC 3339 or YYYY-MM-DD (exclusive).
    #[arg(long)]
    until: Option<String>,
    #[arg(long, env = "LASTFM_USER", default_value = "")]
    user: String,
    #[arg(long, default_value_t = DEFAULT_RATE_LIMIT)]
    rate_limit: f64,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    cache: PathBuf,
    #[arg(long, default_value_t = DEFAULT_VOCABULARY_SIZE)]
    k: usize,
    /// Listener's offset from UTC, in minutes.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    tz_offset: i32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "gbt")]
    model: String,
    #[arg(long, default_value = "danceability")]
    target: String,
    /// Seeds the train/test split and the model.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = GbtConfig::default().rounds)]
    rounds: usize,
    #[arg(long, default_value_t = GbtConfig::default().max_depth)]
    depth: usize,
    #[arg(long, default_value_t = GbtConfig::default().learning_rate)]
    learning_rate: f64,
    /// Also train and report the other two kinds (only `--model` is saved).
    #[arg(long)]
    compare: bool,
}

#[derive(Args)]
struct RecommendArgs {
    /// Hour of day; defaults to the local clock.
    #[arg(long)]
    hour: Option<u32>,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Library file or directory; defaults to the dataset directory.
    #[arg(long)]
    library: Option<PathBuf>,
    /// Print the result as JSON instead of the text report.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Listener spec (JSON); the built-in default when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    library: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long = "static")]
    static_dir: Option<PathBuf>,
    #[arg(long, default_value = FEEDBACK_FILE)]
    feedback_log: PathBuf,
}

fn parse_instant(s: &str) -> anyhow::Result<i64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.timestamp());
    }
    let date = NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .with_context(|| format!("{s:?} is neither RFC 3339 nor YYYY-MM-DD"))?;
    Ok(date.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp())
}

fn ingest(args: IngestArgs) -> anyhow::Result<()> {
    let env = |name: &str| std::env::var(name).unwrap_or_default();
    let config = ApiConfig {
        lastfm_api_key: env("LASTFM_API_KEY"),
        lastfm_user: args.user,
        spotify_client_id: env("SPOTIFY_CLIENT_ID"),
        spotify_client_secret: env("SPOTIFY_CLIENT_SECRET"),
        rate_limit_per_sec: args.rate_limit,
        cache_dir: args.out,
        mode: match args.mode {
            ModeArg::Live => Mode::Live,
            ModeArg::Offline => Mode::Offline,
        },
        fixtures_dir: args.fixtures,
    };
    let ingestor = Ingestor::from_config(&config)?;
    let report = match (args.since, args.until) {
        (None, None) if config.mode == Mode::Offline => ingestor.run_all()?,
        (since, until) => {
            let since = since.as_deref().map(parse_instant).transpose()?.unwrap_or(1);
            let until = match until {
                Some(u) => parse_instant(&u)?,
                None => chrono::Utc::now().timestamp() + 1,
            };
            ingestor.run(since, until)?
        }
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn build(args: BuildArgs) -> anyhow::Result<()> {
    let cache = Cache::open(&args.cache)?;
    let tz = TzOffset::minutes(args.tz_offset)?;
    let dataset = build_dataset(&cache, args.k, tz)?;
    write_dataset(&dataset, &args.out)?;
    let library = Library::from_cache(&cache);
    library.save(args.out.join(LIBRARY_FILE))?;
    let degenerate = dataset.samples.iter().filter(|s| s.degenerate).count();
    println!(
        "{} moments ({degenerate} without vocabulary tags), {} tags, {} library tracks -> {}",
        dataset.len(),
        dataset.vocabulary.len(),
        library.len(),
        args.out.display()
    );
    Ok(())
}

fn train_cmd(args: TrainArgs) -> anyhow::Result<()> {
    let kind: ModelKind = args.model.parse()?;
    let target: Feature = args.target.parse()?;
    if target.is_categorical() {
        bail!("{target} is categorical and cannot be a regression target");
    }
    let dataset = read_dataset(&args.dataset, target)?;
    let (train_set, test_set) = split_dataset(&dataset, args.train_fraction, args.seed)?;
    let config = TrainConfig {
        seed: args.seed,
        lambda: args.lambda,
        gbt: GbtConfig { rounds: args.rounds, max_depth: args.depth, learning_rate: args.learning_rate },
    };
    let (test_x, test_y) = test_set.training_data();
    let kinds: Vec<ModelKind> = if args.compare { ModelKind::ALL.to_vec() } else { vec![kind] };
    println!(
        "{} moments: {} train / {} test, target {target}",
        dataset.len(),
        train_set.len(),
        test_set.len()
    );
    println!("{:<10} {:>10} {:>10} {:>9}", "model", "train RMSE", "test RMSE", "seconds");
    for k in kinds {
        let start = Instant::now();
        let model = train(&train_set, k, &config)?;
        let seconds = start.elapsed().as_secs_f64();
        let test_rmse = if test_y.is_empty() { f64::NAN } else { evaluate_rmse(&model, &test_x, &test_y)? };
        println!("{:<10} {:>10.4} {:>10.4} {:>9.2}", k, model.train_rmse, test_rmse, seconds);
        if k == kind {
            save_model(&model, &args.out)?;
        }
    }
    println!("saved {} model -> {}", kind, args.out.display());
    Ok(())
}

fn recommend(args: RecommendArgs) -> anyhow::Result<()> {
    let model = load_model(&args.model)?;
    let dataset = read_dataset(&args.dataset, model.target_feature)?;
    let library = Library::load_from(args.library.as_deref().unwrap_or(&args.dataset))?;
    let (hour, minute) = match args.hour {
        Some(h) => (h, None),
        None => {
            let now = chrono::Local::now();
            (now.hour(), Some(now.minute()))
        }
    };
    let result = run_pipeline(&dataset, &model, &library, hour, args.k, args.epsilon)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&result)?);
    } else {
        print!("{}", render_report(&result, minute));
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let mut spec = match &args.spec {
        Some(path) => ListenerSpec::load(path)?,
        None => ListenerSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let history = generate_history(&spec)?;
    history.write(&args.out)?;
    println!(
        "{} scrobbles, {} tracks -> {}",
        history.scrobbles.len(),
        history.features.len(),
        args.out.display()
    );
    Ok(())
}

fn serve_cmd(args: ServeArgs) -> anyhow::Result<()> {
    let artifacts = Artifacts::load(&args.model, &args.dataset, args.library.as_deref())?;
    let state = AppState::new(Some(artifacts), &args.feedback_log)?;
    if let Some(dir) = &args.static_dir {
        if !Path::new(dir).is_dir() {
            bail!("static directory {} does not exist", dir.display());
        }
    }
    let addr = SocketAddr::new(args.host, args.port);
    tokio::runtime::Runtime::new()?.block_on(serve(state, addr, args.static_dir))
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Ingest(a) => ingest(a),
        Command::BuildDataset(a) => build(a),
        Command::Train(a) => train_cmd(a),
        Command::Recommend(a) => recommend(a),
        Command::Simulate(a) => simulate(a),
        Command::Serve(a) => serve_cmd(a),
    }
}
