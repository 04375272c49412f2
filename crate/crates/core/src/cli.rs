//! The `diachron` command line.
//!
//! Data goes to the files named by flags, or to stdout when a command has no
//! output flag. Logs go to stderr. Exit codes: 0 success, 1 usage error or
//! unknown model, 2 bad input data, 3 transport failure.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{self, PpplMatrix};
use crate::cleaning::{self, CleaningConfig, DedupConfig, NUM_PERMUTATIONS};
use crate::config::{Config, Overrides};
use crate::corpus::{self, MockClient, Period, QuerySpec};
use crate::error::{Error, Result};
use crate::scoring::{self, MaskedScorer, ReportFile, TextRecord};
use crate::temporal::{self, Clamp, Mode, ModelRecord, Quarter, Registry};

#[derive(Debug, Parser)]
#[command(
    name = "diachron",
    version,
    about = "Diachronic evaluation of masked language models on tweets"
)]
struct Cli {
    /// Model registry (JSONL); defaults to the built-in registry.
    #[arg(long, global = true)]
    registry: Option<PathBuf>,
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only log errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Collect a time-sampled corpus from the (mock) search API.
    Ingest(IngestArgs),
    /// Hold out a per-quarter test set.
    Split(SplitArgs),
    /// Filter heavy posters, remove near-duplicates and mask mentions.
    Clean(CleanArgs),
    /// Inspect the model registry.
    #[command(subcommand)]
    Models(ModelsCommand),
    /// Pseudo-perplexity of a test set.
    Score(ScoreArgs),
    /// Top-k fillers for `<mask>` tokens.
    Predict(PredictArgs),
    /// Degradation analytics over pseudo-perplexity matrices.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    from: String,
    #[arg(long)]
    to: String,
    #[arg(long, default_value = "5m")]
    interval: String,
    #[arg(long, default_value_t = 10)]
    per_slot: usize,
    /// Seed of the offline mock API (default: the global seed).
    #[arg(long)]
    mock_seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 1000)]
    per_quarter: usize,
    /// Receives `<quarter>-train.jsonl` and `<quarter>-test.jsonl`.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct CleanArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    user_percentile: f64,
    #[arg(long, default_value_t = NUM_PERMUTATIONS)]
    perms: usize,
    /// Minimum matching signature positions for a near-duplicate.
    #[arg(long, default_value_t = NUM_PERMUTATIONS)]
    min_matching: usize,
    #[arg(long, default_value_t = 1)]
    shingle_size: usize,
    /// Verified usernames, one per line.
    #[arg(long)]
    verified: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum ModelsCommand {
    List {
        /// Print the registry as JSONL.
        #[arg(long)]
        json: bool,
    },
    Resolve {
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        created_at: Option<String>,
    },
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    mode: Option<String>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    mode: Option<String>,
    #[arg(long, default_value_t = 3)]
    top_k: usize,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum AnalyzeCommand {
    /// Score every registry model on every `<quarter>-test.jsonl` of a directory.
    Matrix {
        #[arg(long)]
        test_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Change between consecutive quarterly models.
    Change {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Degradation relative to each model's cutoff quarter.
    Degradation {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quarter-by-quarter comparison of two models.
    Compare {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// PLL of each text under every quarterly model.
    Trajectories {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

/// Parses `argv` (without the program name) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = std::iter::once(OsString::from("diachron")).chain(argv.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.quiet);
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(quiet: bool) {
    let level = if quiet { "error" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn execute(cli: Cli) -> Result<()> {
    let flags = Overrides {
        registry: cli.registry.clone(),
        seed: cli.seed,
        ..Overrides::default()
    };
    let mut config = Config::resolve(cli.config.as_deref(), &|k| std::env::var(k).ok(), flags)?;
    if let Command::Score(ScoreArgs {
        batch_size: Some(b),
        ..
    }) = &cli.command
    {
        config.batch_size = *b;
        config.validate()?;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Error::invalid("--jobs must be positive"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli.command, &config))
}

fn dispatch(command: Command, config: &Config) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(a, config),
        Command::Split(a) => split(a, config),
        Command::Clean(a) => clean(a),
        Command::Models(m) => models(m, config),
        Command::Score(a) => score(a, config),
        Command::Predict(a) => predict(a, config),
        Command::Analyze(a) => analyze(a, config),
    }
}

fn write_output(path: Option<&Path>, body: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, body).map_err(|e| Error::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn load_registry(config: &Config) -> Result<Registry> {
    match &config.registry {
        Some(p) => Registry::load(p),
        None => Ok(Registry::builtin()),
    }
}

fn parse_mode(flag: Option<&str>, config: &Config) -> Result<Mode> {
    flag.unwrap_or(&config.mode).parse()
}

fn log_clamp(model: &str, clamped: Option<Clamp>) {
    match clamped {
        Some(Clamp::ToBase) => log::warn!("tweet predates the quarterly models; using {model}"),
        Some(Clamp::ToLatest) => log::warn!("tweet postdates the quarterly models; using {model}"),
        None => {}
    }
}

/// Opens each model's scorer once.
struct ScorerCache {
    options: scoring::ScorerOptions,
    open: HashMap<String, Box<dyn MaskedScorer>>,
}

impl ScorerCache {
    fn new(config: &Config) -> Self {
        Self {
            options: config.scorer_options(),
            open: HashMap::new(),
        }
    }

    fn get(&mut self, record: &ModelRecord) -> Result<&dyn MaskedScorer> {
        if !self.open.contains_key(&record.name) {
            log::info!("loading model {} from {}", record.name, record.scorer);
            let scorer = scoring::open_scorer(&record.scorer, &self.options)
                .map_err(|e| e.with_context(format!("model {}", record.name)))?;
            self.open.insert(record.name.clone(), scorer);
        }
        Ok(self.open[&record.name].as_ref())
    }
}

fn ingest(a: IngestArgs, config: &Config) -> Result<()> {
    let from = corpus::parse_timestamp(&a.from)?;
    let to = corpus::parse_timestamp(&a.to)?;
    let interval = humantime::parse_duration(&a.interval)
        .map_err(|e| Error::invalid(format!("--interval {:?}: {e}", a.interval)))?;
    let interval = chrono::Duration::from_std(interval)
        .map_err(|_| Error::invalid("--interval out of range"))?;
    let schedule = corpus::build_sampling_schedule(Period::new(from, to), interval, a.per_slot)?;
    let query = corpus::build_query(&QuerySpec::default())?;
    let client = MockClient::new(a.mock_seed.unwrap_or(config.seed));
    log::info!(
        "sampling {} slots of {} tweets",
        schedule.slots().len(),
        a.per_slot
    );
    let tweets = corpus::collect(&client, &query, &schedule)?;
    let n = corpus::write_corpus(&tweets, &a.out)?;
    log::info!("wrote {n} tweets to {}", a.out.display());
    Ok(())
}

fn split(a: SplitArgs, config: &Config) -> Result<()> {
    let splits =
        corpus::split_test_set(corpus::open_corpus(&a.input)?, a.per_quarter, config.seed)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    for (q, s) in &splits {
        corpus::write_corpus(&s.train, &a.out_dir.join(format!("{q}-train.jsonl")))?;
        corpus::write_corpus(&s.test, &a.out_dir.join(format!("{q}-test.jsonl")))?;
        log::info!("{q}: {} train, {} test", s.train.len(), s.test.len());
    }
    Ok(())
}

fn clean(a: CleanArgs) -> Result<()> {
    if a.perms != NUM_PERMUTATIONS {
        return Err(Error::invalid(format!(
            "--perms must be {NUM_PERMUTATIONS}"
        )));
    }
    let verified = match &a.verified {
        Some(p) => {
            let body = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            cleaning::verified_set(body.lines().map(str::trim).filter(|l| !l.is_empty()))
        }
        None => Default::default(),
    };
    let config = CleaningConfig {
        user_percentile: a.user_percentile,
        dedup: DedupConfig {
            shingle_size: a.shingle_size,
            min_matching: a.min_matching,
        },
        verified,
    };
    let tweets = corpus::read_corpus(&a.input)?;
    let (cleaned, report) = cleaning::clean_pipeline(tweets, &config)?;
    corpus::write_corpus(&cleaned, &a.out)?;
    log::info!(
        "kept {} of {} tweets ({} heavy-user, {} duplicate)",
        report.output_count,
        report.input_count,
        report.removed_by_user_filter,
        report.removed_as_duplicates
    );
    write_output(a.report.as_deref(), &to_json(&report))
}

fn models(cmd: ModelsCommand, config: &Config) -> Result<()> {
    let registry = load_registry(config)?;
    match cmd {
        ModelsCommand::List { json: true } => write_output(None, &registry.to_jsonl()),
        ModelsCommand::List { json: false } => {
            let mut s = format!(
                "{:<14} {:<8} {:>11} {:>9}\n",
                "model", "cutoff", "additional", "total"
            );
            for r in registry.records() {
                let add = r
                    .additional_millions
                    .map(|v| format!("{v:.2}M"))
                    .unwrap_or_else(|| "-".into());
                s.push_str(&format!(
                    "{:<14} {:<8} {:>11} {:>9}\n",
                    r.name,
                    r.cutoff.to_string(),
                    add,
                    format!("{:.2}M", r.total_millions)
                ));
            }
            write_output(None, &s)
        }
        ModelsCommand::Resolve { mode, created_at } => {
            let mode = parse_mode(mode.as_deref(), config)?;
            let tweet = created_at
                .map(|ts| -> Result<_> {
                    Ok(corpus::Tweet::new(0, "", corpus::parse_timestamp(&ts)?, ""))
                })
                .transpose()?;
            let res = temporal::resolve_mode(&registry, &mode, tweet.as_ref())?;
            if let Some(m) = res.models.first() {
                log_clamp(&m.name, res.clamped);
            }
            let mut s = res.names().join("\n");
            s.push('\n');
            write_output(None, &s)
        }
    }
}

/// Groups records by the model `mode` selects for them, in registry order.
/// Records keep their input index.
/// A model with the input records it scores, tagged by input position.
type Assignment<'r> = (&'r ModelRecord, Vec<(usize, TextRecord)>);

fn assign_models<'r>(
    registry: &'r Registry,
    mode: &Mode,
    records: Vec<TextRecord>,
) -> Result<Vec<Assignment<'r>>> {
    let records: Vec<(usize, TextRecord)> = records.into_iter().enumerate().collect();
    if *mode != Mode::Corresponding {
        let res = temporal::resolve_mode(registry, mode, None)?;
        return Ok(res
            .models
            .into_iter()
            .map(|m| (m, records.clone()))
            .collect());
    }
    let mut groups: BTreeMap<usize, Vec<(usize, TextRecord)>> = BTreeMap::new();
    for (i, r) in records {
        let ts = r.created_at.ok_or_else(|| {
            Error::data(format!(
                "record {}: corresponding mode needs created_at",
                r.id
            ))
        })?;
        let res = temporal::resolve_corresponding_quarter(registry, Quarter::of(ts))?;
        let model = res.models[0];
        log_clamp(&model.name, res.clamped);
        let idx = registry
            .records()
            .iter()
            .position(|m| m.name == model.name)
            .expect("resolved from registry");
        groups.entry(idx).or_default().push((i, r));
    }
    Ok(groups
        .into_iter()
        .map(|(i, rs)| (&registry.records()[i], rs))
        .collect())
}

fn score(a: ScoreArgs, config: &Config) -> Result<()> {
    let registry = load_registry(config)?;
    let mode = parse_mode(a.mode.as_deref(), config)?;
    let records = scoring::read_texts(&a.input)?;
    if records.is_empty() {
        return Err(Error::invalid(format!(
            "test set {} is empty",
            a.input.display()
        )));
    }
    let testset = a
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut cache = ScorerCache::new(config);
    let mut reports = Vec::new();
    for (model, group) in assign_models(&registry, &mode, records)? {
        let scorer = cache.get(model)?;
        let texts: Vec<(u64, String)> = group.into_iter().map(|(_, r)| (r.id, r.text)).collect();
        let mut report = scoring::pppl(scorer, &texts)
            .map_err(|e| e.with_context(format!("model {}", model.name)))?;
        report.model_name = model.name.clone();
        report.testset_name = testset.clone();
        log::info!(
            "{}: pppl {:.4} over {} tokens",
            model.name,
            report.pppl,
            report.total_tokens
        );
        reports.push(ReportFile::from(&report));
    }
    let body = if reports.len() == 1 {
        to_json(&reports[0])
    } else {
        to_json(&reports)
    };
    write_output(a.out.as_deref(), &body)
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    id: String,
    model: &'a str,
    text: &'a str,
    masks: Vec<MaskLine<'a>>,
}

#[derive(Serialize)]
struct MaskLine<'a> {
    position: usize,
    candidates: Vec<Candidate<'a>>,
}

#[derive(Serialize)]
struct Candidate<'a> {
    token: &'a str,
    score: f64,
}

fn predict(a: PredictArgs, config: &Config) -> Result<()> {
    let registry = load_registry(config)?;
    let mode = parse_mode(a.mode.as_deref(), config)?;
    let records = scoring::read_texts(&a.input)?;
    let mut cache = ScorerCache::new(config);
    let mut lines: Vec<(usize, String)> = Vec::new();
    for (model, group) in assign_models(&registry, &mode, records)? {
        let scorer = cache.get(model)?;
        for (i, r) in &group {
            let preds = scoring::masked_predictions(scorer, &r.text, a.top_k)
                .map_err(|e| e.with_context(format!("record {}", r.id)))?;
            let line = PredictionLine {
                id: r.id.to_string(),
                model: &model.name,
                text: &r.text,
                masks: preds
                    .iter()
                    .map(|p| MaskLine {
                        position: p.position,
                        candidates: p
                            .candidates
                            .iter()
                            .map(|(t, s)| Candidate {
                                token: t,
                                score: *s,
                            })
                            .collect(),
                    })
                    .collect(),
            };
            let mut s = serde_json::to_string(&line).expect("serializable");
            s.push('\n');
            lines.push((*i, s));
        }
    }
    lines.sort_by_key(|(i, _)| *i);
    write_output(
        a.out.as_deref(),
        &lines.into_iter().map(|(_, s)| s).collect::<String>(),
    )
}

fn read_matrix(path: &Path) -> Result<PpplMatrix> {
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    analysis::matrix_from_csv(&body).map_err(|e| e.with_context(path.display()))
}

fn log_flags(flags: &[analysis::Flag]) {
    for f in flags {
        match f.quarter {
            Some(q) => log::warn!("skipped [{}, {q}]: {}", f.model, f.reason),
            None => log::warn!("skipped {}: {}", f.model, f.reason),
        }
    }
}

fn analyze(cmd: AnalyzeCommand, config: &Config) -> Result<()> {
    let pct = config.precision.saturating_sub(1);
    match cmd {
        AnalyzeCommand::Matrix { test_dir, out } => {
            let registry = load_registry(config)?;
            let mut testsets: BTreeMap<Quarter, Vec<(u64, String)>> = BTreeMap::new();
            let entries = std::fs::read_dir(&test_dir).map_err(|e| Error::io(&test_dir, e))?;
            for entry in entries {
                let path = entry.map_err(|e| Error::io(&test_dir, e))?.path();
                let name = path
                    .file_name()
                    .and_then(|n| n.to_str())
                    .unwrap_or_default();
                let Some(q) = name
                    .strip_suffix("-test.jsonl")
                    .and_then(|l| l.parse::<Quarter>().ok())
                else {
                    continue;
                };
                let texts = scoring::read_texts(&path)?
                    .into_iter()
                    .map(|r| (r.id, r.text))
                    .collect();
                testsets.insert(q, texts);
            }
            let options = config.scorer_options();
            let factory = |r: &ModelRecord| scoring::open_scorer(&r.scorer, &options);
            let matrix = analysis::build_pppl_matrix(&registry, &testsets, &factory)?;
            write_output(
                out.as_deref(),
                &analysis::matrix_to_csv(&matrix, config.precision),
            )
        }
        AnalyzeCommand::Change { matrix, out } => {
            let c = analysis::change_column(&read_matrix(&matrix)?)?;
            log_flags(&c.flags);
            write_output(out.as_deref(), &analysis::change_to_csv(&c, pct))
        }
        AnalyzeCommand::Degradation { matrix, out } => {
            let t = analysis::degradation_table(&read_matrix(&matrix)?)?;
            log_flags(&t.flags);
            write_output(out.as_deref(), &analysis::degradation_to_csv(&t, pct))
        }
        AnalyzeCommand::Compare {
            matrix,
            a,
            b,
            out,
            svg,
        } => {
            let c = analysis::compare_models(&read_matrix(&matrix)?, &a, &b)?;
            if let Some(svg) = svg {
                write_output(
                    Some(&svg),
                    &analysis::render_svg(&analysis::comparison_chart(&c)),
                )?;
            }
            write_output(
                out.as_deref(),
                &analysis::comparison_to_csv(&c, config.precision),
            )
        }
        AnalyzeCommand::Trajectories { input, out, svg } => {
            let registry = load_registry(config)?;
            let texts: Vec<(String, String)> = scoring::read_texts(&input)?
                .into_iter()
                .map(|r| (r.id.to_string(), r.text))
                .collect();
            let options = config.scorer_options();
            let factory = |r: &ModelRecord| scoring::open_scorer(&r.scorer, &options);
            let trajectories = analysis::pll_trajectories(&registry, &texts, &factory)?;
            if let Some(svg) = svg {
                write_output(
                    Some(&svg),
                    &analysis::render_svg(&analysis::trajectory_chart(&trajectories)),
                )?;
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["id".to_string()];
            if let Some(t) = trajectories.first() {
                header.extend(t.points.iter().map(|(m, _)| m.clone()));
            }
            w.write_record(&header).expect("in-memory write");
            for t in &trajectories {
                let mut rec = vec![t.label.clone()];
                rec.extend(t.points.iter().map(|(_, v)| format!("{v:.6}")));
                w.write_record(&rec).expect("in-memory write");
            }
            let body = String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8");
            write_output(out.as_deref(), &body)
        }
    }
}
