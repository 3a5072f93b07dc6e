//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{
    load_checkpoint, save_checkpoint, CaptionSet, EmbeddingTable, FeatureStore, ModelCheckpoint, RunConfig,
};
use crate::error::{Error, ErrorKind, Result};
use crate::retrieval::{
    compose_query, encode_captions, evaluate_queries, metrics_json, nearest_features, outcomes_from_rankings,
    parse_ranking_dump, rank_all, relevance_map, write_per_query, write_ranking_dump, EncodedPool,
    MetricsReport, QueryOutcome, Relevance,
};
use crate::text::tokenize;
use crate::train::{fit_with, grad_check, tiny_problem, FitInputs};

/// Gradient checks pass below this relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(
    name = "w2vv",
    version,
    about = "Predict visual features from text and retrieve captions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model; writes the best checkpoint and a per-epoch log.
    Train(TrainArgs),
    /// Encode a caption file into a pool of predicted features.
    Encode(EncodeArgs),
    /// Rank a caption pool for every query feature vector.
    Rank(RankArgs),
    /// Compute R@K and MIR.
    Eval(EvalArgs),
    /// Nearest images to an image feature shifted by word predictions.
    Compose(ComposeArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Training captions (overrides the config).
    #[arg(long)]
    pub captions: Option<PathBuf>,
    /// Training features (overrides the config).
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub captions: PathBuf,
    /// Replacement word vectors for the mean-embedding segment.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Query feature vectors, one per medium.
    #[arg(long)]
    pub features: PathBuf,
    /// Pre-encoded pool; alternatively give --checkpoint and --captions.
    #[arg(long, conflicts_with_all = ["checkpoint", "captions"])]
    pub pool: Option<PathBuf>,
    #[arg(long, requires = "captions")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, requires = "checkpoint")]
    pub captions: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Keep only the first N entries per query.
    #[arg(long)]
    pub top: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ranking dump; alternatively give --pool and --features.
    #[arg(long, conflicts_with_all = ["pool", "features"])]
    pub ranking: Option<PathBuf>,
    #[arg(long, requires = "features")]
    pub pool: Option<PathBuf>,
    #[arg(long, requires = "pool")]
    pub features: Option<PathBuf>,
    #[arg(long, default_value = "shared-media")]
    pub relevance: Relevance,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub k: Vec<usize>,
    /// Metrics JSON destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-query report destination.
    #[arg(long)]
    pub per_query: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Image feature store, searched for nearest neighbours.
    #[arg(long)]
    pub features: PathBuf,
    /// Id of the query image within --features.
    #[arg(long)]
    pub query: String,
    #[arg(long, value_delimiter = ',')]
    pub add: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub sub: Vec<String>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Selects segments and output activation of the tiny model.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Check a trained model instead, on the first caption of --captions.
    #[arg(long, requires_all = ["captions", "features"])]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub captions: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub eps: f64,
    /// Coordinates sampled per tensor for checkpoints (all for the tiny model).
    #[arg(long, default_value_t = 20)]
    pub sample: usize,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numeric => 3,
            }
        }
    }
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Train(a) => train(a),
        Command::Encode(a) => encode(a),
        Command::Rank(a) => rank(a),
        Command::Eval(a) => eval(a),
        Command::Compose(a) => compose(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Usage(format!(
            "{what} {} is not a readable file",
            path.display()
        )))
    }
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::Usage(format!(
            "{what} {} is not a directory",
            path.display()
        )))
    }
}

/// The parent directory of an output file must already exist.
fn require_writable(path: &Path) -> Result<()> {
    if path.is_dir() {
        return Err(Error::Usage(format!("output {} is a directory", path.display())));
    }
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => Err(Error::Usage(format!(
            "output directory {} does not exist",
            p.display()
        ))),
        _ => Ok(()),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn print(text: &str) -> Result<()> {
    std::io::stdout()
        .write_all(text.as_bytes())
        .map_err(|e| Error::Io {
            path: "<stdout>".into(),
            source: e,
        })
}

fn train(a: TrainArgs) -> Result<i32> {
    require_file(&a.config, "config")?;
    let mut config = RunConfig::load(&a.config)?;
    let base = a.config.parent().unwrap_or(Path::new(""));
    let resolve = |p: Option<PathBuf>| p.map(|p| if p.is_relative() { base.join(p) } else { p });
    config.train_captions = a.captions.or_else(|| resolve(config.train_captions.take()));
    config.train_features = a.features.or_else(|| resolve(config.train_features.take()));
    config.val_captions = resolve(config.val_captions.take());
    config.val_features = resolve(config.val_features.take());
    config.embeddings = a.embeddings.or_else(|| resolve(config.embeddings.take()));
    config.out_dir = a.out.or_else(|| resolve(config.out_dir.take()));
    if let Some(t) = a.threads {
        config.threads = t;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    config.validate()?;

    let need = |p: &Option<PathBuf>, what: &str| -> Result<PathBuf> {
        let p = p
            .clone()
            .ok_or_else(|| Error::Usage(format!("no {what} given in the config or on the command line")))?;
        require_file(&p, what)?;
        Ok(p)
    };
    let train_captions = need(&config.train_captions, "training captions")?;
    let train_features = need(&config.train_features, "training features")?;
    let val_captions = need(&config.val_captions, "validation captions")?;
    let val_features = need(&config.val_features, "validation features")?;
    let embeddings = match &config.embeddings {
        Some(_) => Some(need(&config.embeddings, "embeddings")?),
        None => None,
    };
    let out_dir = config
        .out_dir
        .clone()
        .ok_or_else(|| Error::Usage("no output directory given".into()))?;
    if out_dir.exists() && !out_dir.is_dir() {
        return Err(Error::Usage(format!(
            "output {} is not a directory",
            out_dir.display()
        )));
    }

    let train_set = CaptionSet::load(&train_captions)?;
    let val_set = CaptionSet::load(&val_captions)?;
    let train_store = FeatureStore::load(&train_features)?;
    let val_store = FeatureStore::load(&val_features)?;
    let table = match &embeddings {
        Some(path) => {
            // Only words that can occur in the encoded captions are kept.
            let words = train_set
                .records()
                .iter()
                .chain(val_set.records())
                .flat_map(|r| tokenize(&r.text).tokens)
                .collect();
            let t = EmbeddingTable::load(path, Some(&words))?;
            if t.warnings() > 0 {
                log::warn!("{}: {} warnings while loading", path.display(), t.warnings());
            }
            Some(t)
        }
        None => None,
    };

    fs::create_dir_all(&out_dir).map_err(|e| Error::Io {
        path: out_dir.clone(),
        source: e,
    })?;
    let checkpoint_dir = out_dir.join("checkpoint");
    let log_path = out_dir.join("train.log");
    let mut log_text = String::new();
    let inputs = FitInputs {
        train_captions: &train_set,
        train_features: &train_store,
        val_captions: &val_set,
        val_features: &val_store,
        embeddings: table.as_ref(),
    };
    let outcome = fit_with(&config, inputs, None, &mut |log, best| {
        log_text.push_str(&format!("{log}\n"));
        write_file(&log_path, log_text.as_bytes())?;
        if let Some(ck) = best {
            save_checkpoint(ck, &checkpoint_dir)?;
        }
        Ok(())
    })?;
    save_checkpoint(&outcome.checkpoint, &checkpoint_dir)?;
    write_file(&out_dir.join("config.json"), config.to_json().as_bytes())?;
    log::info!(
        "best epoch {} of {}{}; checkpoint in {}",
        outcome.best_epoch,
        outcome.history.len(),
        if outcome.stopped_early {
            " (stopped early)"
        } else {
            ""
        },
        checkpoint_dir.display()
    );
    Ok(0)
}

fn load_model(
    dir: &Path,
    embeddings: Option<&Path>,
) -> Result<(ModelCheckpoint, crate::text::SentenceEncoder)> {
    let ck = load_checkpoint(dir)?;
    let encoder = match embeddings {
        Some(p) => ck.encoder_with_table(EmbeddingTable::load(p, None)?)?,
        None => ck.encoder()?,
    };
    Ok((ck, encoder))
}

fn encode(a: EncodeArgs) -> Result<i32> {
    require_dir(&a.checkpoint, "checkpoint")?;
    require_file(&a.captions, "captions")?;
    if let Some(p) = &a.embeddings {
        require_file(p, "embeddings")?;
    }
    require_writable(&a.out)?;
    let (ck, encoder) = load_model(&a.checkpoint, a.embeddings.as_deref())?;
    let captions = CaptionSet::load(&a.captions)?;
    let pool = encode_captions(&ck.params, &encoder, &captions, a.threads, Some(ck.identity()))?;
    pool.to_feature_store()?.save_binary(&a.out)?;
    log::info!("encoded {} captions with model {}", pool.len(), ck.identity());
    Ok(0)
}

fn rank(a: RankArgs) -> Result<i32> {
    require_file(&a.features, "features")?;
    match (&a.pool, &a.checkpoint, &a.captions) {
        (Some(p), _, _) => require_file(p, "pool")?,
        (None, Some(c), Some(q)) => {
            require_dir(c, "checkpoint")?;
            require_file(q, "captions")?;
        }
        _ => {
            return Err(Error::Usage(
                "give --pool, or --checkpoint with --captions".into(),
            ))
        }
    }
    if let Some(p) = &a.embeddings {
        require_file(p, "embeddings")?;
    }
    require_writable(&a.out)?;
    let queries = FeatureStore::load(&a.features)?;
    let pool = match (&a.pool, &a.checkpoint, &a.captions) {
        (Some(p), _, _) => EncodedPool::from_feature_store(&FeatureStore::load(p)?)?,
        (None, Some(c), Some(q)) => {
            let (ck, encoder) = load_model(c, a.embeddings.as_deref())?;
            encode_captions(
                &ck.params,
                &encoder,
                &CaptionSet::load(q)?,
                a.threads,
                Some(ck.identity()),
            )?
        }
        _ => unreachable!("checked above"),
    };
    let rankings = rank_all(&queries, &pool, a.top, a.threads)?;
    write_file(&a.out, write_ranking_dump(&rankings).as_bytes())?;
    Ok(0)
}

fn eval(a: EvalArgs) -> Result<i32> {
    if a.k.is_empty() || a.k.contains(&0) {
        return Err(Error::Usage("--k needs positive cutoffs".into()));
    }
    match (&a.ranking, &a.pool, &a.features) {
        (Some(r), _, _) => require_file(r, "ranking")?,
        (None, Some(p), Some(f)) => {
            require_file(p, "pool")?;
            require_file(f, "features")?;
        }
        _ => return Err(Error::Usage("give --ranking, or --pool with --features".into())),
    }
    for p in a.out.iter().chain(&a.per_query) {
        require_writable(p)?;
    }
    let outcomes: Vec<QueryOutcome> = match (&a.ranking, &a.pool, &a.features) {
        (Some(r), _, _) => {
            let text = fs::read_to_string(r).map_err(|e| Error::Io {
                path: r.clone(),
                source: e,
            })?;
            let rankings = parse_ranking_dump(&text, r)?;
            // Relevance comes from the captions present in the dump.
            let mut all_keys: Vec<_> = rankings
                .iter()
                .flat_map(|l| l.entries.iter().map(|(k, _)| k.clone()))
                .collect();
            all_keys.sort();
            all_keys.dedup();
            let rel = relevance_map(&all_keys, rankings.iter().map(|l| l.query.as_str()), a.relevance)?;
            outcomes_from_rankings(&rankings, &rel)?
        }
        (None, Some(p), Some(f)) => {
            let pool = EncodedPool::from_feature_store(&FeatureStore::load(p)?)?;
            let queries = FeatureStore::load(f)?;
            evaluate_queries(&queries, &pool, a.relevance, a.threads)?
        }
        _ => unreachable!("checked above"),
    };
    let ranks: Vec<usize> = outcomes.iter().map(|o| o.best_rank).collect();
    let json = metrics_json(&ranks, &a.k)?;
    let report = MetricsReport::from_best_ranks(&ranks)?;
    if let Some(out) = &a.out {
        write_file(out, json.as_bytes())?;
    }
    if let Some(pq) = &a.per_query {
        write_file(pq, write_per_query(&outcomes).as_bytes())?;
    }
    let mut summary: Vec<String> =
        a.k.iter()
            .map(|&k| format!("r{k}={:.1}", crate::retrieval::recall_at_k(&ranks, k)))
            .collect();
    summary.push(format!("mir={:.6}", report.mir));
    summary.push(format!("queries={}", report.queries));
    print(&format!("{}\n", summary.join(" ")))?;
    if a.out.is_none() {
        print(&json)?;
    }
    Ok(0)
}

fn compose(a: ComposeArgs) -> Result<i32> {
    require_dir(&a.checkpoint, "checkpoint")?;
    require_file(&a.features, "features")?;
    if let Some(p) = &a.embeddings {
        require_file(p, "embeddings")?;
    }
    if let Some(out) = &a.out {
        require_writable(out)?;
    }
    let (ck, encoder) = load_model(&a.checkpoint, a.embeddings.as_deref())?;
    let images = FeatureStore::load(&a.features)?;
    let image = images
        .get(&a.query)
        .ok_or_else(|| Error::Dataset(format!("query {} not in {}", a.query, a.features.display())))?;
    let add: Vec<&str> = a
        .add
        .iter()
        .map(String::as_str)
        .filter(|w| !w.is_empty())
        .collect();
    let sub: Vec<&str> = a
        .sub
        .iter()
        .map(String::as_str)
        .filter(|w| !w.is_empty())
        .collect();
    let query = compose_query(image, &add, &sub, &ck.params, &encoder)?;
    let mut text = String::new();
    for (id, sim) in nearest_features(&query, &images, a.top)? {
        text.push_str(&format!("{id}\t{sim:.6}\n"));
    }
    match &a.out {
        Some(out) => write_file(out, text.as_bytes())?,
        None => print(&text)?,
    }
    Ok(0)
}

fn gradcheck(a: GradcheckArgs) -> Result<i32> {
    if let Some(c) = &a.config {
        require_file(c, "config")?;
    }
    if let Some(c) = &a.checkpoint {
        require_dir(c, "checkpoint")?;
        require_file(a.captions.as_deref().unwrap(), "captions")?;
        require_file(a.features.as_deref().unwrap(), "features")?;
    }
    let config = match &a.config {
        Some(c) => RunConfig::load(c)?,
        None => RunConfig::default(),
    };
    let report = match &a.checkpoint {
        None => {
            let (params, input, target) = tiny_problem(&config, a.seed)?;
            grad_check(&params, &input, &target, a.eps, None, a.seed)?
        }
        Some(dir) => {
            let ck = load_checkpoint(dir)?;
            let encoder = ck.encoder()?;
            let captions = CaptionSet::load(a.captions.as_ref().unwrap())?;
            let features = FeatureStore::load(a.features.as_ref().unwrap())?;
            let first = captions
                .records()
                .first()
                .ok_or_else(|| Error::Dataset("caption file is empty".into()))?;
            let target = features
                .get(&first.key.media_id)
                .ok_or_else(|| Error::Dataset(format!("medium {} has no features", first.key.media_id)))?;
            let params = ck.params.cast::<f64>();
            grad_check(
                &params,
                &encoder.encode(&first.text),
                target,
                a.eps,
                Some(a.sample),
                a.seed,
            )?
        }
    };
    let worst = report
        .worst
        .as_ref()
        .map_or_else(String::new, |(t, i)| format!(" worst={t}[{i}]"));
    print(&format!(
        "max_relative_error={:.3e} checked={} total={}{}\n",
        report.max_relative_error, report.checked, report.total, worst
    ))?;
    if report.max_relative_error < GRADCHECK_TOLERANCE {
        Ok(0)
    } else {
        Err(Error::numeric(format!(
            "gradient check: relative error {:.3e} exceeds {GRADCHECK_TOLERANCE:e}",
            report.max_relative_error
        )))
    }
}
