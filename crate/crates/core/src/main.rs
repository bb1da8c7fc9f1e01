//! `fcm` command-line tool: train, predict, eval, gradcheck, ablate.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 gradient check
//! above tolerance.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use fcm::archive;
use fcm::corpus::{self, InstanceKey};
use fcm::eval::{self, Ablation};
use fcm::features::{self, FeatureVocab};
use fcm::gradcheck::{self, ProblemShape};
use fcm::model::{self, FcmParams, LabelWeights};
use fcm::trainer::{self, EarlyStopMetric, Optimizer};
use fcm::{
    EmbeddingTable, EvalProtocol, FeatureConfig, LabelSet, ModelKind, PairMode, RelationInstance, TemplateSet, TrainConfig,
    TypeSource, UnkPolicy,
};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    GradientMismatch(f64),
}

type CliResult<T> = Result<T, CliError>;

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Parser)]
#[command(name = "fcm", version, about = "Feature-rich compositional embedding model for relation extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and save it as an archive.
    Train(TrainArgs),
    /// Label a corpus with a saved model (JSONL output).
    Predict(PredictArgs),
    /// Score predictions against gold.
    Eval(EvalArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Retrain with each feature group removed and tabulate dev scores.
    Ablate(AblateArgs),
}

/// Options that make up the run configuration. Every flag overrides the
/// value from `--config`.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// JSON run configuration (flags take precedence).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    kind: Option<ModelKind>,
    /// Update embeddings during training.
    #[arg(long)]
    fine_tune: bool,
    #[arg(long)]
    lr: Option<f64>,
    /// Embedding learning rate (defaults to --lr).
    #[arg(long)]
    emb_lr: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// sgd or adagrad.
    #[arg(long)]
    optimizer: Option<String>,
    /// ace or semeval.
    #[arg(long)]
    eval: Option<String>,
    /// Comma-separated subset of heademb,context,inbetween,onpath.
    #[arg(long)]
    templates: Option<String>,
    /// gold, ne, supersense, clusterK or none.
    #[arg(long)]
    entity_types: Option<String>,
    #[arg(long)]
    path_inclusive: Option<bool>,
    /// Add a bias feature to every word.
    #[arg(long)]
    bias: Option<bool>,
    #[arg(long)]
    nil_label: Option<String>,
    /// Name of the catch-all class under --eval semeval.
    #[arg(long)]
    other_label: Option<String>,
    /// all (every mention pair, unlabeled ones get the NIL label) or given.
    #[arg(long)]
    pairs: Option<String>,
    /// Skip pairs with more than this many mentions between them.
    #[arg(long)]
    max_intervening: Option<usize>,
    /// Score relation types regardless of argument order (ACE).
    #[arg(long)]
    direction_insensitive: bool,
    /// mean, zero or unk.
    #[arg(long)]
    unk_policy: Option<String>,
    /// Scale embedding rows to unit length after loading.
    #[arg(long)]
    normalize_embeddings: Option<bool>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Scored with the final model when given.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Output archive.
    #[arg(long)]
    model: PathBuf,
    /// Per-epoch JSON lines (default: stderr).
    #[arg(long)]
    log: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Corpus to label.
    #[arg(long)]
    test: PathBuf,
    /// Required unless the model stores fine-tuned embeddings or is log-linear.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the instance generation stored with the model.
    #[arg(long)]
    pairs: Option<String>,
    #[arg(long)]
    max_intervening: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Gold corpus, or a predictions file in the `predict` format.
    #[arg(long)]
    gold: PathBuf,
    /// Predictions from `predict`.
    #[arg(long)]
    pred: PathBuf,
    /// Write the full report as JSON here.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sentence length of random instances.
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 16)]
    features: usize,
    #[arg(long, default_value_t = 4)]
    labels: usize,
    /// Number of instances to check.
    #[arg(long, default_value_t = 10)]
    count: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = gradcheck::DEFAULT_STEP)]
    step: f64,
    /// Check instances from this corpus instead of random ones (needs --embeddings).
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Also write the table as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

/// Effective configuration; echoed into archives and reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct RunConfig {
    kind: ModelKind,
    features: FeatureConfig,
    training: TrainConfig,
    eval: String,
    nil_label: String,
    other_label: String,
    pairs: Option<String>,
    max_intervening: Option<usize>,
    direction_sensitive: bool,
    unk_policy: UnkPolicy,
    normalize_embeddings: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            kind: ModelKind::Fcm,
            features: FeatureConfig::default(),
            training: TrainConfig::default(),
            eval: "ace".into(),
            nil_label: "NIL".into(),
            other_label: "Other".into(),
            pairs: None,
            max_intervening: None,
            direction_sensitive: true,
            unk_policy: UnkPolicy::default(),
            normalize_embeddings: false,
        }
    }
}

impl RunConfig {
    fn resolve(args: &ConfigArgs) -> CliResult<RunConfig> {
        let mut c = match &args.config {
            None => RunConfig::default(),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?
            }
        };
        if let Some(k) = args.kind {
            c.kind = k;
        }
        let t = &mut c.training;
        if args.fine_tune {
            t.fine_tune = true;
        }
        if args.lr.is_some() {
            t.learning_rate = args.lr;
        }
        if args.emb_lr.is_some() {
            t.embedding_learning_rate = args.emb_lr;
        }
        if let Some(v) = args.l2 {
            t.l2 = v;
        }
        if let Some(v) = args.epochs {
            t.epochs = v;
        }
        if let Some(v) = args.patience {
            t.patience = v;
        }
        if let Some(v) = args.seed {
            t.seed = v;
        }
        if let Some(o) = &args.optimizer {
            t.optimizer = match o.as_str() {
                "sgd" => Optimizer::Sgd,
                "adagrad" => Optimizer::AdaGrad,
                _ => return Err(CliError::Usage(format!("unknown optimizer {o:?} (expected sgd, adagrad)"))),
            };
        }
        if let Some(e) = &args.eval {
            c.eval = e.clone();
        }
        if let Some(list) = &args.templates {
            let sets = list
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse::<TemplateSet>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(CliError::Usage)?;
            c.features = c.features.with_templates(&sets);
        }
        if let Some(src) = &args.entity_types {
            let src: TypeSource = src.parse().map_err(CliError::Usage)?;
            c.features.use_entity_types = src != TypeSource::None;
            c.features.type_source = src;
        }
        if let Some(v) = args.path_inclusive {
            c.features.path_inclusive = v;
        }
        if let Some(v) = args.bias {
            c.features.bias = v;
        }
        if let Some(v) = &args.nil_label {
            c.nil_label = v.clone();
        }
        if let Some(v) = &args.other_label {
            c.other_label = v.clone();
        }
        if args.pairs.is_some() {
            c.pairs = args.pairs.clone();
        }
        if args.max_intervening.is_some() {
            c.max_intervening = args.max_intervening;
        }
        if args.direction_insensitive {
            c.direction_sensitive = false;
        }
        if let Some(p) = &args.unk_policy {
            c.unk_policy = parse_unk_policy(p)?;
        }
        if let Some(v) = args.normalize_embeddings {
            c.normalize_embeddings = v;
        }
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> CliResult<()> {
        let t = &self.training;
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(CliError::Usage(format!("--{name} must be a positive number, got {x}"))),
            _ => Ok(()),
        };
        positive("lr", t.learning_rate)?;
        positive("emb-lr", t.embedding_learning_rate)?;
        if !(t.l2 >= 0.0 && t.l2.is_finite()) {
            return Err(CliError::Usage(format!("--l2 must be >= 0, got {}", t.l2)));
        }
        if t.epochs == 0 {
            return Err(CliError::Usage("--epochs must be at least 1".into()));
        }
        if self.kind != ModelKind::LogLinear {
            self.features.validate().map_err(data)?;
        }
        self.protocol()?;
        self.pair_mode()?;
        Ok(())
    }

    fn protocol(&self) -> CliResult<EvalProtocol> {
        match self.eval.as_str() {
            "ace" => Ok(EvalProtocol::Ace {
                nil: self.nil_label.clone(),
                direction_sensitive: self.direction_sensitive,
            }),
            "semeval" => Ok(EvalProtocol::SemEval {
                other: self.other_label.clone(),
            }),
            e => Err(CliError::Usage(format!("unknown eval protocol {e:?} (expected ace, semeval)"))),
        }
    }

    /// ACE enumerates all mention pairs; SemEval scores only the given ones.
    fn pair_mode(&self) -> CliResult<PairMode> {
        match self.pairs.as_deref() {
            None if self.eval == "semeval" => Ok(PairMode::GivenPairs),
            None => Ok(PairMode::AllPairs),
            Some("all") => Ok(PairMode::AllPairs),
            Some("given") => Ok(PairMode::GivenPairs),
            Some(p) => Err(CliError::Usage(format!("unknown pair mode {p:?} (expected all, given)"))),
        }
    }

    fn nil(&self) -> Option<&str> {
        (self.eval == "ace").then_some(self.nil_label.as_str())
    }

    fn instances(&self, path: &Path) -> CliResult<Vec<RelationInstance>> {
        let corpus = corpus::load_corpus(path).map_err(data)?;
        corpus
            .instances(self.pair_mode()?, self.nil(), self.max_intervening)
            .map_err(data)
    }

    fn embeddings(&self, path: &Path) -> CliResult<EmbeddingTable> {
        let mut table = fcm::load_word2vec_text(path, self.unk_policy).map_err(data)?;
        if self.normalize_embeddings {
            table.normalize_rows();
        }
        Ok(table)
    }
}

fn parse_unk_policy(s: &str) -> CliResult<UnkPolicy> {
    match s {
        "mean" => Ok(UnkPolicy::MeanVector),
        "zero" => Ok(UnkPolicy::ZeroVector),
        "unk" => Ok(UnkPolicy::DedicatedUnk),
        _ => Err(CliError::Usage(format!("unknown unk policy {s:?} (expected mean, zero, unk)"))),
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", path.display())))
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn gold_labels(instances: &[RelationInstance]) -> Vec<&str> {
    instances.iter().map(|i| i.label.as_deref().unwrap_or("")).collect()
}

fn cmd_train(args: TrainArgs) -> CliResult<()> {
    let run = RunConfig::resolve(&args.config)?;
    let protocol = run.protocol()?;
    let embeddings = match (&args.embeddings, run.kind) {
        (Some(p), _) => Some(Arc::new(run.embeddings(p)?)),
        (None, ModelKind::LogLinear) => None,
        (None, _) => return Err(CliError::Usage("--embeddings is required for fcm and hybrid models".into())),
    };
    let train = run.instances(&args.train)?;
    let dev = match &args.dev {
        Some(p) => run.instances(p)?,
        None => Vec::new(),
    };
    let outcome = trainer::train_shared(&train, &dev, run.kind, &run.features, embeddings, &run.training, &protocol)
        .map_err(data)?;

    let mut log: Box<dyn Write> = match &args.log {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stderr().lock()),
    };
    for record in &outcome.log {
        writeln!(log, "{}", record.to_line()).map_err(data)?;
    }
    log.flush().map_err(data)?;

    let extra = serde_json::json!({ "run": run, "best_epoch": outcome.best_epoch });
    archive::save_model(&args.model, &outcome.model, &extra).map_err(data)?;
    eprintln!(
        "saved {} ({} labels, best epoch {})",
        args.model.display(),
        outcome.model.labels.len(),
        outcome.best_epoch
    );

    if let Some(test) = &args.test {
        let test = run.instances(test)?;
        let pred = outcome.model.predict_labels(&test).map_err(data)?;
        let pred: Vec<&str> = pred.iter().map(String::as_str).collect();
        let report = protocol.score(&gold_labels(&test), &pred).map_err(data)?;
        print!("{}", report.to_table());
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictionLine {
    sentence: String,
    m1: String,
    m2: String,
    label: String,
    proba: Vec<f64>,
}

fn cmd_predict(args: PredictArgs) -> CliResult<()> {
    let extra = archive::load_extra(&args.model).map_err(data)?;
    let mut run: RunConfig = serde_json::from_value(extra["run"].clone()).unwrap_or_default();
    let table = match &args.embeddings {
        Some(p) => Some(Arc::new(run.embeddings(p)?)),
        None => None,
    };
    let model = match archive::load_model(&args.model, table) {
        Ok((model, _)) => model,
        Err(archive::ArchiveError::NeedsEmbeddings) => {
            return Err(CliError::Usage(
                "this model was trained without fine-tuning; pass the same --embeddings used for training".into(),
            ))
        }
        Err(e) => return Err(data(e)),
    };
    if args.pairs.is_some() {
        run.pairs = args.pairs.clone();
    }
    if args.max_intervening.is_some() {
        run.max_intervening = args.max_intervening;
    }
    let instances = run.instances(&args.test)?;
    let predictions = model.predict(&instances).map_err(data)?;
    let mut out = output(args.out.as_deref())?;
    for (inst, (label, proba)) in instances.iter().zip(predictions) {
        let line = PredictionLine {
            sentence: inst.sentence.id.clone(),
            m1: inst.m1.id.clone(),
            m2: inst.m2.id.clone(),
            label,
            proba,
        };
        serde_json::to_writer(&mut out, &line).map_err(data)?;
        writeln!(out).map_err(data)?;
    }
    out.flush().map_err(data)
}

fn read_predictions(path: &Path) -> CliResult<Vec<PredictionLine>> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(data)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| CliError::Data(format!("{}, line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

/// Whether the first record of `path` looks like a corpus document.
fn is_corpus(path: &Path) -> CliResult<bool> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(data)?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| CliError::Data(format!("{}, line 1: {e}", path.display())))?;
        return Ok(v.get("tokens").is_some());
    }
    Ok(false)
}

fn cmd_eval(args: EvalArgs) -> CliResult<()> {
    let run = RunConfig::resolve(&args.config)?;
    let protocol = run.protocol()?;
    let gold: Vec<(InstanceKey, String)> = if is_corpus(&args.gold)? {
        run.instances(&args.gold)?
            .into_iter()
            .map(|i| (i.key(), i.label.clone().unwrap_or_default()))
            .collect()
    } else {
        read_predictions(&args.gold)?
            .into_iter()
            .map(|p| (key(&p), p.label))
            .collect()
    };
    let predicted: HashMap<InstanceKey, String> = read_predictions(&args.pred)?
        .into_iter()
        .map(|p| (key(&p), p.label))
        .collect();
    let mut g = Vec::with_capacity(gold.len());
    let mut p = Vec::with_capacity(gold.len());
    for (k, label) in &gold {
        let pred = predicted.get(k).ok_or_else(|| {
            CliError::Data(format!("no prediction for sentence {:?}, pair ({}, {})", k.sentence, k.m1, k.m2))
        })?;
        g.push(label.as_str());
        p.push(pred.as_str());
    }
    if predicted.len() > gold.len() {
        log::warn!("{} predictions have no gold counterpart and were ignored", predicted.len() - gold.len());
    }
    let report = protocol.score(&g, &p).map_err(data)?;
    print!("{}", report.to_table());
    if let Some(path) = &args.report {
        let mut out = create(path)?;
        serde_json::to_writer_pretty(&mut out, &serde_json::json!({ "run": run, "report": report })).map_err(data)?;
        out.flush().map_err(data)?;
    }
    Ok(())
}

fn key(p: &PredictionLine) -> InstanceKey {
    InstanceKey {
        sentence: p.sentence.clone(),
        m1: p.m1.clone(),
        m2: p.m2.clone(),
    }
}

fn cmd_gradcheck(args: GradcheckArgs) -> CliResult<()> {
    if args.n == 0 || args.dim == 0 || args.features == 0 || args.labels < 2 || args.count == 0 {
        return Err(CliError::Usage("--n, --dim, --features, --count must be >= 1 and --labels >= 2".into()));
    }
    if !(args.step > 0.0) {
        return Err(CliError::Usage("--step must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let problems: Vec<gradcheck::Problem> = match (&args.corpus, &args.embeddings) {
        (None, _) => {
            let shape = ProblemShape {
                words: args.n,
                dim: args.dim,
                features: args.features,
                labels: args.labels,
            };
            (0..args.count).map(|_| gradcheck::random_problem(&mut rng, shape)).collect()
        }
        (Some(_), None) => return Err(CliError::Usage("--corpus needs --embeddings".into())),
        (Some(c), Some(e)) => corpus_problems(&mut rng, c, e, args.count)?,
    };
    let mut worst = 0.0f64;
    let mut coordinates = 0;
    for p in &problems {
        let r = gradcheck::check(p, args.step).map_err(data)?;
        worst = worst.max(r.max_error());
        coordinates += r.coordinates;
    }
    println!(
        "checked {} instances, {coordinates} coordinates; max relative error {worst:.3e}",
        problems.len()
    );
    if worst > GRADCHECK_TOLERANCE {
        return Err(CliError::GradientMismatch(worst));
    }
    Ok(())
}

/// Gradient problems from real instances with random weights.
fn corpus_problems(rng: &mut ChaCha8Rng, corpus: &Path, embeddings: &Path, count: usize) -> CliResult<Vec<gradcheck::Problem>> {
    let run = RunConfig::default();
    let instances = corpus::load_corpus(corpus)
        .map_err(data)?
        .instances(PairMode::GivenPairs, None, None)
        .map_err(data)?;
    let labelled: Vec<_> = instances.into_iter().filter(|i| i.label.is_some()).take(count).collect();
    if labelled.is_empty() {
        return Err(CliError::Data(format!("{} has no labeled relations", corpus.display())));
    }
    let table = Arc::new(run.embeddings(embeddings)?);
    let mut vocab = FeatureVocab::new();
    let feats: Vec<_> = labelled
        .iter()
        .map(|i| features::extract_instance(i, &run.features, &mut vocab))
        .collect();
    let mut labels = LabelSet::from_labels(labelled.iter().filter_map(|i| i.label.as_deref()), None);
    if labels.len() < 2 {
        labels = LabelSet::from_labels(labels.labels().iter().map(String::as_str), Some("NIL"));
    }
    let (l, f, d) = (labels.len(), vocab.dimension(), table.dim());
    let weights = LabelWeights::from_values(l, f, d, (0..l * f * d).map(|_| rng.gen_range(-0.5..0.5)).collect()).map_err(data)?;
    let params = FcmParams {
        labels: labels.clone(),
        weights,
        embeddings: table.clone(),
        fine_tune: true,
    };
    Ok(labelled
        .iter()
        .zip(feats)
        .map(|(inst, f)| gradcheck::Problem {
            params: params.clone(),
            instance: model::encode_from_features(inst, f, &table, &labels),
        })
        .collect())
}

fn cmd_ablate(args: AblateArgs) -> CliResult<()> {
    let run = RunConfig::resolve(&args.config)?;
    let protocol = run.protocol()?;
    let table = run.embeddings(&args.embeddings)?;
    let train = run.instances(&args.train)?;
    let dev = run.instances(&args.dev)?;
    let mut training = run.training.clone();
    if args.config.config.is_none() && run.eval == "semeval" {
        training.early_stop_metric = EarlyStopMetric::MacroF1;
    }
    let table = eval::run_ablation(&train, &dev, &table, &run.features, &training, &protocol, &Ablation::STANDARD)
        .map_err(data)?;
    print!("{}", table.to_table());
    if let Some(path) = &args.report {
        let mut out = create(path)?;
        serde_json::to_writer_pretty(&mut out, &table).map_err(data)?;
        out.flush().map_err(data)?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Ablate(a) => cmd_ablate(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::GradientMismatch(err)) => {
            eprintln!("error: max relative gradient error {err:.3e} exceeds {GRADCHECK_TOLERANCE:e}");
            ExitCode::from(3)
        }
    }
}
