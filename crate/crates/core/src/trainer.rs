//! Per-instance stochastic training with L2 shrinkage, optional embedding
//! fine-tuning and dev-set early stopping.

use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabelSet, RelationInstance};
use crate::embeddings::EmbeddingTable;
use crate::eval::{EvalError, EvalProtocol, EvalReport};
use crate::features::{self, FeatureConfig, FeatureError, FeatureVocab, SparseFeatureVector, TypeSource};
use crate::loglinear::{self, LogLinearParams};
use crate::model::{self, argmax, softmax, EncodedInstance, FcmParams, ModelError};

/// Learning rate with fine-tuned embeddings.
pub const FINE_TUNE_LEARNING_RATE: f64 = 5e-3;
/// Learning rate with fixed embeddings.
pub const FROZEN_LEARNING_RATE: f64 = 5e-2;

const ADAGRAD_EPS: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training instance {0} has no label")]
    Unlabeled(usize),
    #[error("model kind {0:?} needs word embeddings")]
    MissingEmbeddings(ModelKind),
    #[error("learning rate must be positive, got {0}")]
    LearningRate(f64),
    #[error("parameters became non-finite in epoch {0}")]
    Diverged(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Fcm,
    LogLinear,
    Hybrid,
}

impl ModelKind {
    pub fn has_fcm(self) -> bool {
        matches!(self, ModelKind::Fcm | ModelKind::Hybrid)
    }

    pub fn has_loglin(self) -> bool {
        matches!(self, ModelKind::LogLinear | ModelKind::Hybrid)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fcm" => Ok(ModelKind::Fcm),
            "loglin" | "loglinear" => Ok(ModelKind::LogLinear),
            "hybrid" => Ok(ModelKind::Hybrid),
            _ => Err(format!("unknown model kind {s:?} (expected fcm, loglin, hybrid)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Optimizer {
    #[default]
    Sgd,
    AdaGrad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EarlyStopMetric {
    MicroF1,
    MacroF1,
    Accuracy,
}

impl EarlyStopMetric {
    pub fn pick(self, report: &EvalReport) -> f64 {
        match self {
            EarlyStopMetric::MicroF1 => report.micro.f1,
            EarlyStopMetric::MacroF1 => report.macro_f1,
            EarlyStopMetric::Accuracy => report.accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Defaults to 5e-3 when fine-tuning, 5e-2 otherwise.
    pub learning_rate: Option<f64>,
    /// Defaults to the weight learning rate.
    pub embedding_learning_rate: Option<f64>,
    pub epochs: usize,
    pub l2: f64,
    pub fine_tune: bool,
    pub seed: u64,
    pub shuffle: bool,
    pub early_stop_metric: EarlyStopMetric,
    pub patience: usize,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: None,
            embedding_learning_rate: None,
            epochs: 50,
            l2: 1e-4,
            fine_tune: false,
            seed: 0,
            shuffle: true,
            early_stop_metric: EarlyStopMetric::MicroF1,
            patience: 5,
            optimizer: Optimizer::Sgd,
        }
    }
}

impl TrainConfig {
    pub fn effective_learning_rate(&self) -> f64 {
        self.learning_rate.unwrap_or(if self.fine_tune {
            FINE_TUNE_LEARNING_RATE
        } else {
            FROZEN_LEARNING_RATE
        })
    }

    pub fn effective_embedding_learning_rate(&self) -> f64 {
        self.embedding_learning_rate
            .unwrap_or_else(|| self.effective_learning_rate())
    }
}

#[derive(Debug, Clone)]
pub struct FcmPart {
    pub vocab: FeatureVocab,
    pub params: FcmParams,
}

/// A trained FCM, log-linear or hybrid classifier.
#[derive(Debug, Clone)]
pub struct RelationModel {
    pub kind: ModelKind,
    pub labels: LabelSet,
    pub feature_config: FeatureConfig,
    pub fcm: Option<FcmPart>,
    pub loglin: Option<LogLinearParams>,
}

/// An instance in the form each sub-model reads.
#[derive(Debug, Clone)]
pub struct EncodedExample {
    pub fcm: Option<EncodedInstance>,
    pub loglin: Option<SparseFeatureVector>,
    pub gold: Option<usize>,
}

fn loglin_type_source(cfg: &FeatureConfig) -> TypeSource {
    if cfg.use_entity_types {
        cfg.type_source
    } else {
        TypeSource::None
    }
}

impl RelationModel {
    pub fn fcm_feature_count(&self) -> usize {
        self.fcm.as_ref().map_or(0, |f| f.vocab.dimension())
    }

    /// Encodes against the frozen vocabularies.
    pub fn encode(&self, instance: &RelationInstance) -> EncodedExample {
        let gold = instance.label.as_deref().and_then(|l| self.labels.index_of(l));
        let fcm = self.fcm.as_ref().map(|part| {
            model::encode(
                instance,
                &self.feature_config,
                &part.vocab,
                &part.params.embeddings,
                &self.labels,
            )
        });
        let loglin = self
            .loglin
            .as_ref()
            .map(|ll| ll.featurize(instance, loglin_type_source(&self.feature_config)));
        EncodedExample { fcm, loglin, gold }
    }

    /// Summed raw scores of the sub-models.
    pub fn logits(&self, ex: &EncodedExample) -> Result<Vec<f64>, ModelError> {
        let mut s = vec![0.0; self.labels.len()];
        if let (Some(part), Some(enc)) = (&self.fcm, &ex.fcm) {
            let f = model::score(enc, &part.params)?;
            s.iter_mut().zip(&f.0).for_each(|(a, b)| *a += b);
        }
        if let (Some(ll), Some(f)) = (&self.loglin, &ex.loglin) {
            let l = ll.score(f)?;
            s.iter_mut().zip(&l.0).for_each(|(a, b)| *a += b);
        }
        Ok(s)
    }

    pub fn predict_proba(&self, instance: &RelationInstance) -> Result<Vec<f64>, ModelError> {
        Ok(softmax(&self.logits(&self.encode(instance))?))
    }

    /// Predicted label and its probability vector for each instance.
    pub fn predict(&self, instances: &[RelationInstance]) -> Result<Vec<(String, Vec<f64>)>, ModelError> {
        instances
            .par_iter()
            .map(|inst| {
                let p = self.predict_proba(inst)?;
                Ok((self.labels.label(argmax(&p)).to_string(), p))
            })
            .collect()
    }

    pub fn predict_labels(&self, instances: &[RelationInstance]) -> Result<Vec<String>, ModelError> {
        Ok(self.predict(instances)?.into_iter().map(|(l, _)| l).collect())
    }

    fn predict_encoded(&self, examples: &[EncodedExample]) -> Result<Vec<usize>, ModelError> {
        examples
            .par_iter()
            .map(|ex| Ok(argmax(&self.logits(ex)?)))
            .collect()
    }

    fn is_finite(&self) -> bool {
        self.fcm.as_ref().map_or(true, |p| {
            p.params.weights.is_finite() && p.params.embeddings.matrix().iter().all(|v| v.is_finite())
        }) && self.loglin.as_ref().map_or(true, LogLinearParams::is_finite)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_metric: Option<f64>,
    pub wall_seconds: f64,
    pub improved: bool,
}

impl EpochRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serialises")
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: RelationModel,
    pub log: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
}

/// AdaGrad accumulators, one per parameter block.
struct AdaGradState {
    weights: Vec<f64>,
    embeddings: Vec<f64>,
    loglin: Vec<f64>,
}

fn adagrad_step(acc: &mut f64, g: f64, lr: f64) -> f64 {
    *acc += g * g;
    -lr * g / (acc.sqrt() + ADAGRAD_EPS)
}

/// Trains `kind` on `train`, early-stopping on `dev` under `protocol`.
///
/// Vocabularies are built from `train` only. With an empty `dev` set every
/// epoch runs and the last parameters are returned.
pub fn train(
    train: &[RelationInstance],
    dev: &[RelationInstance],
    kind: ModelKind,
    feature_config: &FeatureConfig,
    embeddings: Option<&EmbeddingTable>,
    config: &TrainConfig,
    protocol: &EvalProtocol,
) -> Result<TrainOutcome, TrainError> {
    train_shared(train, dev, kind, feature_config, embeddings.map(|t| Arc::new(t.clone())), config, protocol)
}

/// As [`train`], sharing the embedding table instead of copying it.
pub fn train_shared(
    train: &[RelationInstance],
    dev: &[RelationInstance],
    kind: ModelKind,
    feature_config: &FeatureConfig,
    embeddings: Option<Arc<EmbeddingTable>>,
    config: &TrainConfig,
    protocol: &EvalProtocol,
) -> Result<TrainOutcome, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if let Some(i) = train.iter().position(|i| i.label.is_none()) {
        return Err(TrainError::Unlabeled(i));
    }
    let lr = config.effective_learning_rate();
    let emb_lr = config.effective_embedding_learning_rate();
    if !(lr > 0.0) || !(emb_lr > 0.0) {
        return Err(TrainError::LearningRate(if lr > 0.0 { emb_lr } else { lr }));
    }
    if kind.has_fcm() {
        feature_config.validate()?;
    }

    let nil = match protocol {
        EvalProtocol::Ace { nil, .. } => Some(nil.as_str()),
        EvalProtocol::SemEval { .. } => None,
    };
    let train_labels = train.iter().filter_map(|i| i.label.as_deref());
    let labels = LabelSet::from_labels(train_labels, nil);
    for inst in dev {
        if let Some(l) = inst.label.as_deref() {
            if labels.index_of(l).is_none() {
                log::warn!("dev label {l:?} never occurs in training data; it cannot be predicted");
            }
        }
    }

    let fcm = if kind.has_fcm() {
        let table = embeddings.ok_or(TrainError::MissingEmbeddings(kind))?;
        let mut vocab = FeatureVocab::new();
        for inst in train {
            features::extract_instance(inst, feature_config, &mut vocab);
        }
        vocab.freeze();
        let params = FcmParams::zeros(labels.clone(), vocab.dimension(), table, config.fine_tune);
        Some(FcmPart { vocab, params })
    } else {
        None
    };
    let loglin = if kind.has_loglin() {
        let ts = loglin_type_source(feature_config);
        let mut vocab = FeatureVocab::new();
        for inst in train {
            vocab.map(&loglinear::extract_instance_features(inst, ts));
        }
        vocab.freeze();
        Some(LogLinearParams::zeros(labels.clone(), vocab))
    } else {
        None
    };
    let mut current = RelationModel {
        kind,
        labels,
        feature_config: feature_config.clone(),
        fcm,
        loglin,
    };

    let train_enc: Vec<EncodedExample> = train.iter().map(|i| current.encode(i)).collect();
    let dev_enc: Vec<EncodedExample> = dev.iter().map(|i| current.encode(i)).collect();
    let dev_gold: Vec<&str> = dev.iter().map(|i| i.label.as_deref().unwrap_or("")).collect();

    let mut adagrad = (config.optimizer == Optimizer::AdaGrad).then(|| AdaGradState {
        weights: current
            .fcm
            .as_ref()
            .map_or(Vec::new(), |p| vec![0.0; p.params.weights.values().len()]),
        embeddings: current
            .fcm
            .as_ref()
            .map_or(Vec::new(), |p| vec![0.0; p.params.embeddings.matrix().len()]),
        loglin: current.loglin.as_ref().map_or(Vec::new(), |p| vec![0.0; p.values().len()]),
    });

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_enc.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, RelationModel, usize)> = None;
    let mut non_improving = 0;

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total_loss = 0.0;
        for &idx in &order {
            total_loss += step(&mut current, &train_enc[idx], config, lr, emb_lr, adagrad.as_mut())?;
        }
        if let Some(part) = current.fcm.as_mut() {
            if config.fine_tune {
                Arc::make_mut(&mut part.params.embeddings).refresh_unknown();
            }
        }
        if !current.is_finite() {
            return Err(TrainError::Diverged(epoch));
        }

        let dev_metric = if dev.is_empty() {
            None
        } else {
            let pred_idx = current.predict_encoded(&dev_enc)?;
            let pred: Vec<&str> = pred_idx.iter().map(|&y| current.labels.label(y)).collect();
            Some(config.early_stop_metric.pick(&protocol.score(&dev_gold, &pred)?))
        };
        let improved = match (dev_metric, &best) {
            (None, _) => true,
            (Some(_), None) => true,
            (Some(m), Some((b, _, _))) => m > *b,
        };
        let record = EpochRecord {
            epoch,
            train_loss: total_loss / train_enc.len() as f64,
            dev_metric,
            wall_seconds: start.elapsed().as_secs_f64(),
            improved,
        };
        log::info!("{}", record.to_line());
        log.push(record);

        if improved {
            best = Some((dev_metric.unwrap_or(f64::NEG_INFINITY), current.clone(), epoch));
            non_improving = 0;
        } else {
            non_improving += 1;
            if non_improving >= config.patience.max(1) {
                log::info!("early stopping after epoch {epoch}");
                break;
            }
        }
    }

    let (mut model, best_epoch) = match best {
        Some((_, m, e)) => (m, e),
        None => (current, 0),
    };
    if let Some(part) = model.fcm.as_mut() {
        part.params.weights.fold_scale();
    }
    if let Some(ll) = model.loglin.as_mut() {
        ll.fold_scale();
    }
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
    })
}

/// One stochastic update on a single example; returns its pre-update loss.
fn step(
    model: &mut RelationModel,
    ex: &EncodedExample,
    config: &TrainConfig,
    lr: f64,
    emb_lr: f64,
    adagrad: Option<&mut AdaGradState>,
) -> Result<f64, TrainError> {
    let gold = ex.gold.expect("training labels are in the label set");
    let logits = model.logits(ex)?;
    let (loss, ds) = model::nll_and_score_grad(&logits, gold);
    let l2 = config.l2;

    let fcm_grads = match (&model.fcm, &ex.fcm) {
        (Some(part), Some(enc)) => Some(model::backward(enc, &part.params, ds.clone())?),
        _ => None,
    };

    match adagrad {
        None => {
            if let (Some(part), Some(g)) = (model.fcm.as_mut(), fcm_grads) {
                let w = &mut part.params.weights;
                w.shrink(1.0 - lr * l2);
                for (y, &dsy) in g.score_grad.iter().enumerate() {
                    if dsy == 0.0 {
                        continue;
                    }
                    for (&j, row) in &g.sentence_embedding.rows {
                        w.axpy_row(y, j, -lr * dsy, row);
                    }
                }
                if !g.embeddings.is_empty() {
                    let table = Arc::make_mut(&mut part.params.embeddings);
                    for (&r, grad) in &g.embeddings {
                        for (v, d) in table.row_mut(r).iter_mut().zip(grad) {
                            *v -= emb_lr * d;
                        }
                    }
                }
            }
            if let (Some(ll), Some(f)) = (model.loglin.as_mut(), &ex.loglin) {
                ll.shrink(1.0 - lr * l2);
                for &j in f.indices() {
                    for (y, &dsy) in ds.iter().enumerate() {
                        ll.add(j, y, -lr * dsy);
                    }
                }
            }
        }
        Some(state) => {
            // L2 is applied to the coordinates each update touches.
            if let (Some(part), Some(g)) = (model.fcm.as_mut(), fcm_grads) {
                let (nf, d) = (part.params.num_features(), part.params.dim());
                let w = &mut part.params.weights;
                for (y, &dsy) in g.score_grad.iter().enumerate() {
                    for (&j, row) in &g.sentence_embedding.rows {
                        for (k, &x) in row.iter().enumerate() {
                            let theta = w.get(y, j, k);
                            let grad = dsy * x + l2 * theta;
                            let delta = adagrad_step(&mut state.weights[(y * nf + j) * d + k], grad, lr);
                            w.set(y, j, k, theta + delta);
                        }
                    }
                }
                if !g.embeddings.is_empty() {
                    let table = Arc::make_mut(&mut part.params.embeddings);
                    for (&r, grad) in &g.embeddings {
                        for (k, (v, &gk)) in table.row_mut(r).iter_mut().zip(grad).enumerate() {
                            *v += adagrad_step(&mut state.embeddings[r * d + k], gk, emb_lr);
                        }
                    }
                }
            }
            if let (Some(ll), Some(f)) = (model.loglin.as_mut(), &ex.loglin) {
                let nl = ll.num_labels();
                for &j in f.indices() {
                    for (y, &dsy) in ds.iter().enumerate() {
                        let grad = dsy + l2 * ll.get(j, y);
                        let delta = adagrad_step(&mut state.loglin[j * nl + y], grad, lr);
                        ll.add(j, y, delta);
                    }
                }
            }
        }
    }
    Ok(loss)
}
