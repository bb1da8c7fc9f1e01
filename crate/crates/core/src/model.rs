//! The compositional embedding model.
//!
//! Each word contributes the outer product of its binary feature vector and
//! its embedding; the sum over words is the sentence embedding `e_x`
//! (|F| × d, nonzero only on rows of features that fired). A label's score is
//! the Frobenius product of its weight matrix with `e_x`, computed sparsely
//! word by word in O(s·n·d).
//!
//! Sign convention: the loss is the negated log-likelihood, so every gradient
//! here is the negative of the ascent-form gradient.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::corpus::{LabelSet, RelationInstance};
use crate::embeddings::{EmbeddingTable, WordSlot};
use crate::features::{self, FeatureConfig, FeatureError, FeatureVocab, SparseFeatureVector};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("gold label {0:?} is not in the label set")]
    UnknownLabel(String),
    #[error("instance has no gold label")]
    MissingGold,
    #[error("label sets of the combined models differ")]
    LabelMismatch,
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Per-label |F| × d weight matrices, stored with a lazy global scale so
/// that L2 shrinkage is O(1) per update. Logical value = `scale * data`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelWeights {
    labels: usize,
    features: usize,
    dim: usize,
    data: Vec<f64>,
    scale: f64,
}

impl LabelWeights {
    pub fn zeros(labels: usize, features: usize, dim: usize) -> Self {
        LabelWeights {
            labels,
            features,
            dim,
            data: vec![0.0; labels * features * dim],
            scale: 1.0,
        }
    }

    /// Wraps logical values laid out as `[label][feature][k]`.
    pub fn from_values(labels: usize, features: usize, dim: usize, data: Vec<f64>) -> Result<Self, ModelError> {
        if data.len() != labels * features * dim {
            return Err(ModelError::Dimension(format!(
                "{} weights for {labels} labels × {features} features × {dim} dims",
                data.len()
            )));
        }
        Ok(LabelWeights {
            labels,
            features,
            dim,
            data,
            scale: 1.0,
        })
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn offset(&self, label: usize, feature: usize) -> usize {
        (label * self.features + feature) * self.dim
    }

    fn raw_row(&self, label: usize, feature: usize) -> &[f64] {
        let o = self.offset(label, feature);
        &self.data[o..o + self.dim]
    }

    pub fn get(&self, label: usize, feature: usize, k: usize) -> f64 {
        self.scale * self.data[self.offset(label, feature) + k]
    }

    pub fn set(&mut self, label: usize, feature: usize, k: usize, value: f64) {
        let o = self.offset(label, feature) + k;
        self.data[o] = value / self.scale;
    }

    /// `T_y[j] · e`.
    pub fn row_dot(&self, label: usize, feature: usize, e: &[f64]) -> f64 {
        let dot: f64 = self.raw_row(label, feature).iter().zip(e).map(|(w, x)| w * x).sum();
        self.scale * dot
    }

    /// `out += factor * T_y[j]`.
    pub fn axpy_row_into(&self, label: usize, feature: usize, factor: f64, out: &mut [f64]) {
        let f = factor * self.scale;
        for (o, w) in out.iter_mut().zip(self.raw_row(label, feature)) {
            *o += f * w;
        }
    }

    /// `T_y[j] += factor * v`.
    pub fn axpy_row(&mut self, label: usize, feature: usize, factor: f64, v: &[f64]) {
        let f = factor / self.scale;
        let o = self.offset(label, feature);
        for (w, x) in self.data[o..o + self.dim].iter_mut().zip(v) {
            *w += f * x;
        }
    }

    /// Multiplies every weight by `factor` in O(1).
    pub fn shrink(&mut self, factor: f64) {
        if factor == 1.0 {
            return;
        }
        self.scale *= factor;
        if self.scale.abs() < 1e-6 {
            self.fold_scale();
        }
    }

    /// Folds the lazy scale into the stored values.
    pub fn fold_scale(&mut self) {
        let s = self.scale;
        self.data.iter_mut().for_each(|w| *w *= s);
        self.scale = 1.0;
    }

    /// Logical values, `[label][feature][k]`.
    pub fn values(&self) -> Vec<f64> {
        if self.scale == 1.0 {
            return self.data.clone();
        }
        self.data.iter().map(|w| w * self.scale).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.scale.is_finite() && self.data.iter().all(|w| w.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct FcmParams {
    pub labels: LabelSet,
    pub weights: LabelWeights,
    pub embeddings: Arc<EmbeddingTable>,
    pub fine_tune: bool,
}

impl FcmParams {
    /// Zero-initialised weights over `features` features.
    pub fn zeros(labels: LabelSet, features: usize, embeddings: Arc<EmbeddingTable>, fine_tune: bool) -> Self {
        let weights = LabelWeights::zeros(labels.len(), features, embeddings.dim());
        FcmParams {
            labels,
            weights,
            embeddings,
            fine_tune,
        }
    }

    pub fn num_labels(&self) -> usize {
        self.weights.labels()
    }

    pub fn num_features(&self) -> usize {
        self.weights.features()
    }

    pub fn dim(&self) -> usize {
        self.weights.dim()
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if self.labels.len() != self.weights.labels() {
            return Err(ModelError::Dimension(format!(
                "{} labels but {} weight matrices",
                self.labels.len(),
                self.weights.labels()
            )));
        }
        if self.embeddings.dim() != self.weights.dim() {
            return Err(ModelError::Dimension(format!(
                "embedding dim {} but weight rows of length {}",
                self.embeddings.dim(),
                self.weights.dim()
            )));
        }
        Ok(())
    }
}

/// One word of an encoded instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedWord {
    pub features: SparseFeatureVector,
    pub slot: WordSlot,
}

/// An instance reduced to what the model reads: per-word features and
/// embedding slots (words with no features are dropped), plus the gold index.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInstance {
    pub words: Vec<EncodedWord>,
    pub gold: Option<usize>,
}

/// Encodes against a frozen vocab.
pub fn encode(
    instance: &RelationInstance,
    config: &FeatureConfig,
    vocab: &FeatureVocab,
    table: &EmbeddingTable,
    labels: &LabelSet,
) -> EncodedInstance {
    let feats = features::extract_instance_frozen(instance, config, vocab);
    encode_from_features(instance, feats, table, labels)
}

pub fn encode_from_features(
    instance: &RelationInstance,
    feats: Vec<SparseFeatureVector>,
    table: &EmbeddingTable,
    labels: &LabelSet,
) -> EncodedInstance {
    let words = feats
        .into_iter()
        .zip(&instance.sentence.tokens)
        .filter(|(f, _)| !f.is_empty())
        .map(|(features, tok)| EncodedWord {
            features,
            slot: table.resolve(&tok.form),
        })
        .collect();
    let gold = instance.label.as_deref().and_then(|l| labels.index_of(l));
    EncodedInstance { words, gold }
}

/// Matrix with only some rows stored; missing rows are zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRows {
    pub num_rows: usize,
    pub num_cols: usize,
    pub rows: BTreeMap<usize, Vec<f64>>,
}

impl SparseRows {
    pub fn new(num_rows: usize, num_cols: usize) -> Self {
        SparseRows {
            num_rows,
            num_cols,
            rows: BTreeMap::new(),
        }
    }

    pub fn add_to_row(&mut self, row: usize, v: &[f64]) {
        let r = self.rows.entry(row).or_insert_with(|| vec![0.0; v.len()]);
        for (a, b) in r.iter_mut().zip(v) {
            *a += b;
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.rows.get(&row).map_or(0.0, |r| r[col])
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.num_rows)
            .map(|j| {
                self.rows
                    .get(&j)
                    .cloned()
                    .unwrap_or_else(|| vec![0.0; self.num_cols])
            })
            .collect()
    }
}

/// `f ⊗ e`: row j equals `e` where feature j fires.
pub fn substructure_embedding(f: &SparseFeatureVector, e: &[f64], num_features: usize) -> Result<SparseRows, ModelError> {
    f.check_bounds(num_features)?;
    let mut m = SparseRows::new(num_features, e.len());
    for &j in f.indices() {
        m.rows.insert(j, e.to_vec());
    }
    Ok(m)
}

fn check_encoded(enc: &EncodedInstance, params: &FcmParams) -> Result<(), ModelError> {
    for w in &enc.words {
        w.features.check_bounds(params.num_features())?;
        if let WordSlot::Row(r) = w.slot {
            if r >= params.embeddings.len() {
                return Err(ModelError::Dimension(format!(
                    "embedding row {r} outside table of {} rows",
                    params.embeddings.len()
                )));
            }
        }
    }
    Ok(())
}

/// `e_x = Σ_i f_i ⊗ e_i`.
pub fn sentence_embedding(enc: &EncodedInstance, params: &FcmParams) -> Result<SparseRows, ModelError> {
    check_encoded(enc, params)?;
    let mut ex = SparseRows::new(params.num_features(), params.dim());
    for w in &enc.words {
        let e = params.embeddings.vector(w.slot);
        for &j in w.features.indices() {
            ex.add_to_row(j, e);
        }
    }
    Ok(ex)
}

/// Raw per-label scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `s_y = Σ_i Σ_{j ∈ f_i} T_y[j] · e_{w_i}`.
pub fn score(enc: &EncodedInstance, params: &FcmParams) -> Result<ScoreVector, ModelError> {
    params.check()?;
    check_encoded(enc, params)?;
    Ok(score_unchecked(enc, params))
}

pub(crate) fn score_unchecked(enc: &EncodedInstance, params: &FcmParams) -> ScoreVector {
    let mut s = vec![0.0; params.num_labels()];
    for (y, sy) in s.iter_mut().enumerate() {
        for w in &enc.words {
            let e = params.embeddings.vector(w.slot);
            for &j in w.features.indices() {
                *sy += params.weights.row_dot(y, j, e);
            }
        }
    }
    ScoreVector(s)
}

/// Softmax with max subtraction.
pub fn predict_proba(scores: &ScoreVector) -> Vec<f64> {
    softmax(scores.as_slice())
}

pub fn softmax(s: &[f64]) -> Vec<f64> {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = s.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    p
}

/// `log Σ exp(s)`, stable.
pub fn log_sum_exp(s: &[f64]) -> f64 {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + s.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Negated log-likelihood of `gold` and its gradient w.r.t. the scores,
/// `P − onehot(gold)`.
pub fn nll_and_score_grad(scores: &[f64], gold: usize) -> (f64, Vec<f64>) {
    let loss = log_sum_exp(scores) - scores[gold];
    let mut ds = softmax(scores);
    ds[gold] -= 1.0;
    (loss, ds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcmGradients {
    /// ∂loss/∂s.
    pub score_grad: Vec<f64>,
    /// `e_x`; the weight gradient is `dT_y = score_grad[y] · e_x`.
    pub sentence_embedding: SparseRows,
    /// ∂loss/∂e_w by embedding row; empty unless fine-tuning.
    pub embeddings: BTreeMap<usize, Vec<f64>>,
}

impl FcmGradients {
    pub fn weight_grad(&self, label: usize, feature: usize, k: usize) -> f64 {
        self.score_grad[label] * self.sentence_embedding.get(feature, k)
    }

    /// Dense `[label][feature][k]` weight gradient.
    pub fn dense_weight_grad(&self) -> Vec<f64> {
        let (f, d) = (self.sentence_embedding.num_rows, self.sentence_embedding.num_cols);
        let mut out = vec![0.0; self.score_grad.len() * f * d];
        for (y, g) in self.score_grad.iter().enumerate() {
            for (&j, row) in &self.sentence_embedding.rows {
                let o = (y * f + j) * d;
                for (k, v) in row.iter().enumerate() {
                    out[o + k] = g * v;
                }
            }
        }
        out
    }
}

/// Back-propagates a score gradient into the weights and (when fine-tuning)
/// the embeddings. Words resolved to the constant unknown vector get no
/// embedding gradient.
pub fn backward(enc: &EncodedInstance, params: &FcmParams, score_grad: Vec<f64>) -> Result<FcmGradients, ModelError> {
    let ex = sentence_embedding(enc, params)?;
    let mut embeddings: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    if params.fine_tune {
        for w in &enc.words {
            let WordSlot::Row(r) = w.slot else { continue };
            let g = embeddings.entry(r).or_insert_with(|| vec![0.0; params.dim()]);
            for (y, &dsy) in score_grad.iter().enumerate() {
                if dsy == 0.0 {
                    continue;
                }
                for &j in w.features.indices() {
                    params.weights.axpy_row_into(y, j, dsy, g);
                }
            }
        }
    }
    Ok(FcmGradients {
        score_grad,
        sentence_embedding: ex,
        embeddings,
    })
}

/// `(−log P(gold | x), gradients)`.
pub fn loss_and_gradients(enc: &EncodedInstance, params: &FcmParams) -> Result<(f64, FcmGradients), ModelError> {
    let gold = enc.gold.ok_or(ModelError::MissingGold)?;
    if gold >= params.num_labels() {
        return Err(ModelError::UnknownLabel(format!("#{gold}")));
    }
    let s = score(enc, params)?;
    let (loss, ds) = nll_and_score_grad(s.as_slice(), gold);
    Ok((loss, backward(enc, params, ds)?))
}

/// Negated log-likelihood only.
pub fn loss(enc: &EncodedInstance, params: &FcmParams) -> Result<f64, ModelError> {
    let gold = enc.gold.ok_or(ModelError::MissingGold)?;
    let s = score(enc, params)?;
    Ok(log_sum_exp(s.as_slice()) - s.0[gold])
}

/// Product-of-experts logits: the sum of both models' raw scores.
pub fn hybrid_logits(
    fcm: &ScoreVector,
    fcm_labels: &LabelSet,
    loglin: &ScoreVector,
    loglin_labels: &LabelSet,
) -> Result<ScoreVector, ModelError> {
    if fcm_labels.labels() != loglin_labels.labels() || fcm.len() != loglin.len() {
        return Err(ModelError::LabelMismatch);
    }
    Ok(ScoreVector(fcm.0.iter().zip(&loglin.0).map(|(a, b)| a + b).collect()))
}

/// `P(y) ∝ P_fcm(y|x) · P_loglin(y|x)`, renormalised jointly.
pub fn hybrid_proba(
    fcm: &ScoreVector,
    fcm_labels: &LabelSet,
    loglin: &ScoreVector,
    loglin_labels: &LabelSet,
) -> Result<Vec<f64>, ModelError> {
    Ok(softmax(hybrid_logits(fcm, fcm_labels, loglin, loglin_labels)?.as_slice()))
}
