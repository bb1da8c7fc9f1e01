//! Log-linear relation classifier over instance-level binary features.
//!
//! The feature inventory is a reduced relation-extraction baseline:
//!
//! | prefix     | fires for                                                  |
//! |------------|------------------------------------------------------------|
//! | `bias`     | every instance                                             |
//! | `hw1:` `hw2:` `hw12:` | lowercased head words and their conjunction     |
//! | `et1:` `et2:` `et12:` | entity types of the heads and the ordered pair  |
//! | `between:` | each lowercased word strictly between the heads            |
//! | `pathw:`   | each lowercased word on the dependency path, heads excluded |
//! | `pathrel:` | each dependency label on the path edges                     |
//! | `dist:`    | tokens strictly between heads: `0`, `1`, `2`, `3-5`, `6+`   |
//! | `order:`   | `m1first` or `m2first` by head position                     |
//! | `posseq:`  | POS tags between the heads joined by `_`; `NONE` when empty, `LONG` beyond 4 |

use crate::corpus::{LabelSet, RelationInstance};
use crate::features::{entity_type, FeatureVocab, SparseFeatureVector, TypeSource};
use crate::model::{argmax, nll_and_score_grad, softmax, ModelError, ScoreVector};

const MAX_POS_SEQ: usize = 4;

fn distance_bucket(between: usize) -> &'static str {
    match between {
        0 => "0",
        1 => "1",
        2 => "2",
        3..=5 => "3-5",
        _ => "6+",
    }
}

/// Feature strings of the reduced baseline inventory for one instance.
pub fn extract_instance_features(instance: &RelationInstance, type_source: TypeSource) -> Vec<String> {
    let s = &instance.sentence;
    let (h1, h2) = (instance.m1.head, instance.m2.head);
    let (lo, hi) = (h1.min(h2), h1.max(h2));
    let word = |i: usize| s.tokens[i].form.to_lowercase();
    let mut out = vec!["bias".to_string()];

    let (w1, w2) = (word(h1), word(h2));
    out.push(format!("hw1:{w1}"));
    out.push(format!("hw2:{w2}"));
    out.push(format!("hw12:{w1}|{w2}"));

    if type_source != TypeSource::None {
        let t1 = entity_type(instance, false, type_source);
        let t2 = entity_type(instance, true, type_source);
        out.push(format!("et1:{t1}"));
        out.push(format!("et2:{t2}"));
        out.push(format!("et12:{t1}|{t2}"));
    }

    for i in lo + 1..hi {
        out.push(format!("between:{}", word(i)));
    }

    let path = s.dependency_path(h1, h2);
    for &i in &path[1..path.len() - 1] {
        out.push(format!("pathw:{}", word(i)));
    }
    for pair in path.windows(2) {
        let child = if s.tokens[pair[0]].head == Some(pair[1]) { pair[0] } else { pair[1] };
        out.push(format!("pathrel:{}", s.tokens[child].deprel));
    }

    let gap = hi - lo - 1;
    out.push(format!("dist:{}", distance_bucket(gap)));
    out.push(if h1 < h2 { "order:m1first" } else { "order:m2first" }.to_string());

    let posseq = if gap == 0 {
        "NONE".to_string()
    } else if gap > MAX_POS_SEQ {
        "LONG".to_string()
    } else {
        (lo + 1..hi)
            .map(|i| s.tokens[i].pos.as_str())
            .collect::<Vec<_>>()
            .join("_")
    };
    out.push(format!("posseq:{posseq}"));
    out
}

/// Weight vector θ indexed by (feature, label).
#[derive(Debug, Clone, PartialEq)]
pub struct LogLinearParams {
    pub labels: LabelSet,
    pub vocab: FeatureVocab,
    /// `[feature][label]`, logical value `scale * raw`.
    weights: Vec<f64>,
    scale: f64,
}

impl LogLinearParams {
    pub fn zeros(labels: LabelSet, vocab: FeatureVocab) -> Self {
        let weights = vec![0.0; vocab.dimension() * labels.len()];
        LogLinearParams {
            labels,
            vocab,
            weights,
            scale: 1.0,
        }
    }

    pub fn from_values(labels: LabelSet, vocab: FeatureVocab, weights: Vec<f64>) -> Result<Self, ModelError> {
        if weights.len() != vocab.dimension() * labels.len() {
            return Err(ModelError::Dimension(format!(
                "{} weights for {} features × {} labels",
                weights.len(),
                vocab.dimension(),
                labels.len()
            )));
        }
        Ok(LogLinearParams {
            labels,
            vocab,
            weights,
            scale: 1.0,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn num_features(&self) -> usize {
        self.vocab.dimension()
    }

    pub fn get(&self, feature: usize, label: usize) -> f64 {
        self.scale * self.weights[feature * self.num_labels() + label]
    }

    pub fn set(&mut self, feature: usize, label: usize, value: f64) {
        let l = self.num_labels();
        self.weights[feature * l + label] = value / self.scale;
    }

    /// θ[feature][label] += delta.
    pub fn add(&mut self, feature: usize, label: usize, delta: f64) {
        let l = self.num_labels();
        self.weights[feature * l + label] += delta / self.scale;
    }

    /// Multiplies all weights by `factor` in O(1).
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
        if s != 1.0 {
            self.weights.iter_mut().for_each(|w| *w *= s);
            self.scale = 1.0;
        }
    }

    /// Logical weights, `[feature][label]`.
    pub fn values(&self) -> Vec<f64> {
        if self.scale == 1.0 {
            return self.weights.clone();
        }
        self.weights.iter().map(|w| w * self.scale).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.scale.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }

    /// Features through the frozen vocab (unknown strings dropped).
    pub fn featurize(&self, instance: &RelationInstance, type_source: TypeSource) -> SparseFeatureVector {
        self.vocab
            .map_frozen(&extract_instance_features(instance, type_source))
    }

    pub fn score(&self, f: &SparseFeatureVector) -> Result<ScoreVector, ModelError> {
        f.check_bounds(self.num_features())?;
        let l = self.num_labels();
        let mut s = vec![0.0; l];
        for &j in f.indices() {
            for (y, sy) in s.iter_mut().enumerate() {
                *sy += self.weights[j * l + y];
            }
        }
        s.iter_mut().for_each(|v| *v *= self.scale);
        Ok(ScoreVector(s))
    }

    pub fn predict_proba(&self, f: &SparseFeatureVector) -> Result<Vec<f64>, ModelError> {
        Ok(softmax(self.score(f)?.as_slice()))
    }

    pub fn predict(&self, f: &SparseFeatureVector) -> Result<usize, ModelError> {
        Ok(argmax(self.score(f)?.as_slice()))
    }

    /// Negated log-likelihood and ∂loss/∂s; the weight gradient is
    /// `(P − onehot(gold)) ⊗ f`, i.e. `score_grad[y]` on every active feature.
    pub fn loss_and_gradients(&self, f: &SparseFeatureVector, gold: usize) -> Result<(f64, Vec<f64>), ModelError> {
        if gold >= self.num_labels() {
            return Err(ModelError::UnknownLabel(format!("#{gold}")));
        }
        let s = self.score(f)?;
        Ok(nll_and_score_grad(s.as_slice(), gold))
    }
}
