//! Scoring protocols and the template ablation driver.
//!
//! Undefined ratios (0/0) are reported as 0.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{relation_type, LabelSet, RelationInstance};
use crate::embeddings::EmbeddingTable;
use crate::features::{FeatureConfig, TemplateSet};
use crate::trainer::{self, ModelKind, TrainConfig, TrainError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("gold has {gold} items but predictions have {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("label scheme has no {0:?} class")]
    MissingOther(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Prf {
    pub fn from_counts(tp: usize, predicted: usize, gold: usize) -> Self {
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: String,
    pub tp: usize,
    pub predicted: usize,
    pub gold: usize,
    #[serde(flatten)]
    pub prf: Prf,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub instances: usize,
    pub accuracy: f64,
    /// Per label (ACE) or per relation type (SemEval).
    pub per_label: Vec<LabelScore>,
    pub micro: Prf,
    pub macro_f1: f64,
    /// `(gold, predicted) → count`.
    pub confusion: BTreeMap<String, BTreeMap<String, usize>>,
}

impl EvalReport {
    /// Aligned-column text.
    pub fn to_table(&self) -> String {
        let width = self
            .per_label
            .iter()
            .map(|l| l.label.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}",
            "label", "tp", "pred", "gold", "P", "R", "F1"
        );
        for l in &self.per_label {
            let _ = writeln!(
                s,
                "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6.2}  {:>6.2}  {:>6.2}",
                l.label,
                l.tp,
                l.predicted,
                l.gold,
                100.0 * l.prf.precision,
                100.0 * l.prf.recall,
                100.0 * l.prf.f1
            );
        }
        let _ = writeln!(
            s,
            "micro  P={:.2}  R={:.2}  F1={:.2}",
            100.0 * self.micro.precision,
            100.0 * self.micro.recall,
            100.0 * self.micro.f1
        );
        let _ = writeln!(s, "macro-F1={:.2}  accuracy={:.2}  n={}", 100.0 * self.macro_f1, 100.0 * self.accuracy, self.instances);
        s
    }
}

fn check_lengths<A, B>(gold: &[A], pred: &[B]) -> Result<(), EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    Ok(())
}

fn confusion<S: AsRef<str>>(gold: &[S], pred: &[S]) -> BTreeMap<String, BTreeMap<String, usize>> {
    let mut m: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for (g, p) in gold.iter().zip(pred) {
        *m.entry(g.as_ref().to_string())
            .or_default()
            .entry(p.as_ref().to_string())
            .or_default() += 1;
    }
    m
}

fn accuracy<S: AsRef<str>>(gold: &[S], pred: &[S]) -> f64 {
    ratio(
        gold.iter().zip(pred).filter(|(g, p)| g.as_ref() == p.as_ref()).count(),
        gold.len(),
    )
}

/// ACE-style micro P/R/F1 over non-NIL labels. A prediction is correct when
/// its label matches exactly, or, with `direction_sensitive` off, when the
/// relation types match.
pub fn score_ace<S: AsRef<str>>(gold: &[S], pred: &[S], nil: &str, direction_sensitive: bool) -> Result<EvalReport, EvalError> {
    check_lengths(gold, pred)?;
    let key = |l: &str| -> String {
        if direction_sensitive {
            l.to_string()
        } else {
            relation_type(l).to_string()
        }
    };
    let mut per: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    let (mut tp, mut npred, mut ngold) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        let (g, p) = (g.as_ref(), p.as_ref());
        let g_pos = g != nil;
        let p_pos = p != nil;
        if g_pos {
            ngold += 1;
            per.entry(key(g)).or_default().2 += 1;
        }
        if p_pos {
            npred += 1;
            per.entry(key(p)).or_default().1 += 1;
        }
        if g_pos && p_pos && key(g) == key(p) {
            tp += 1;
            per.entry(key(g)).or_default().0 += 1;
        }
    }
    let per_label: Vec<LabelScore> = per
        .into_iter()
        .map(|(label, (tp, predicted, gold))| LabelScore {
            label,
            tp,
            predicted,
            gold,
            prf: Prf::from_counts(tp, predicted, gold),
        })
        .collect();
    let macro_f1 = if per_label.is_empty() {
        0.0
    } else {
        per_label.iter().map(|l| l.prf.f1).sum::<f64>() / per_label.len() as f64
    };
    Ok(EvalReport {
        instances: gold.len(),
        accuracy: accuracy(gold, pred),
        per_label,
        micro: Prf::from_counts(tp, npred, ngold),
        macro_f1,
        confusion: confusion(gold, pred),
    })
}

/// Relation types scored by the SemEval protocol: every type in the label
/// set except `other`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemEvalScheme {
    pub types: Vec<String>,
    pub other: String,
}

impl SemEvalScheme {
    pub fn from_labels(labels: &LabelSet, other: &str) -> Result<Self, EvalError> {
        if labels.index_of(other).is_none() {
            return Err(EvalError::MissingOther(other.to_string()));
        }
        let types: BTreeSet<String> = labels
            .labels()
            .iter()
            .filter(|l| l.as_str() != other)
            .map(|l| relation_type(l).to_string())
            .collect();
        Ok(SemEvalScheme {
            types: types.into_iter().collect(),
            other: other.to_string(),
        })
    }

    /// Scheme inferred from the labels that occur in gold and predictions.
    pub fn infer<S: AsRef<str>>(gold: &[S], pred: &[S], other: &str) -> Result<Self, EvalError> {
        let labels = LabelSet::from_labels(gold.iter().chain(pred).map(|s| s.as_ref()), Some(other));
        Self::from_labels(&labels, other)
    }
}

/// SemEval-2010 Task 8 official-style macro-F1: per relation type, both
/// directions are merged, a true positive needs the exact directed label,
/// and F1 is averaged over the types excluding Other.
pub fn score_semeval_macro<S: AsRef<str>>(gold: &[S], pred: &[S], scheme: &SemEvalScheme) -> Result<EvalReport, EvalError> {
    check_lengths(gold, pred)?;
    let other = scheme.other.as_str();
    let mut per: BTreeMap<&str, (usize, usize, usize)> =
        scheme.types.iter().map(|t| (t.as_str(), (0, 0, 0))).collect();
    let (mut tp, mut npred, mut ngold) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        let (g, p) = (g.as_ref(), p.as_ref());
        if g != other {
            ngold += 1;
            if let Some(c) = per.get_mut(relation_type(g)) {
                c.2 += 1;
            }
        }
        if p != other {
            npred += 1;
            if let Some(c) = per.get_mut(relation_type(p)) {
                c.1 += 1;
            }
        }
        if g != other && g == p {
            tp += 1;
            if let Some(c) = per.get_mut(relation_type(g)) {
                c.0 += 1;
            }
        }
    }
    let per_label: Vec<LabelScore> = per
        .into_iter()
        .map(|(t, (tp, predicted, gold))| LabelScore {
            label: t.to_string(),
            tp,
            predicted,
            gold,
            prf: Prf::from_counts(tp, predicted, gold),
        })
        .collect();
    let macro_f1 = if per_label.is_empty() {
        0.0
    } else {
        per_label.iter().map(|l| l.prf.f1).sum::<f64>() / per_label.len() as f64
    };
    Ok(EvalReport {
        instances: gold.len(),
        accuracy: accuracy(gold, pred),
        per_label,
        micro: Prf::from_counts(tp, npred, ngold),
        macro_f1,
        confusion: confusion(gold, pred),
    })
}

/// Which protocol scores a label sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalProtocol {
    Ace { nil: String, direction_sensitive: bool },
    SemEval { other: String },
}

impl EvalProtocol {
    pub fn score<S: AsRef<str>>(&self, gold: &[S], pred: &[S]) -> Result<EvalReport, EvalError> {
        match self {
            EvalProtocol::Ace { nil, direction_sensitive } => score_ace(gold, pred, nil, *direction_sensitive),
            EvalProtocol::SemEval { other } => {
                score_semeval_macro(gold, pred, &SemEvalScheme::infer(gold, pred, other)?)
            }
        }
    }
}

/// One row removed from the full configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ablation {
    Template(TemplateSet),
    EntityTypes,
}

impl Ablation {
    pub const STANDARD: [Ablation; 5] = [
        Ablation::Template(TemplateSet::HeadEmb),
        Ablation::Template(TemplateSet::Context),
        Ablation::Template(TemplateSet::InBetween),
        Ablation::Template(TemplateSet::OnPath),
        Ablation::EntityTypes,
    ];

    pub fn name(self) -> String {
        match self {
            Ablation::Template(t) => format!("-{}", t.name()),
            Ablation::EntityTypes => "-EntityTypes".to_string(),
        }
    }

    pub fn apply(self, base: &FeatureConfig) -> FeatureConfig {
        match self {
            Ablation::Template(t) => {
                let kept: Vec<TemplateSet> = base.templates.iter().copied().filter(|&x| x != t).collect();
                base.with_templates(&kept)
            }
            Ablation::EntityTypes => FeatureConfig {
                use_entity_types: false,
                ..base.clone()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub features: usize,
    pub report: EvalReport,
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<14}  {:>8}  {:>8}  {:>8}  {:>8}", "config", "features", "metric", "microF1", "accuracy");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<14}  {:>8}  {:>8.2}  {:>8.2}  {:>8.2}",
                r.name,
                r.features,
                100.0 * r.metric,
                100.0 * r.report.micro.f1,
                100.0 * r.report.accuracy
            );
        }
        s
    }
}

/// Retrains with each ablation applied to `base` and scores the dev set.
/// The first row is the full configuration.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation(
    train: &[RelationInstance],
    dev: &[RelationInstance],
    embeddings: &EmbeddingTable,
    base: &FeatureConfig,
    train_config: &TrainConfig,
    protocol: &EvalProtocol,
    ablations: &[Ablation],
) -> Result<AblationTable, TrainError> {
    let mut configs = vec![("full".to_string(), base.clone())];
    configs.extend(ablations.iter().map(|a| (a.name(), a.apply(base))));
    let mut rows = Vec::with_capacity(configs.len());
    for (name, cfg) in configs {
        let outcome = trainer::train(train, dev, ModelKind::Fcm, &cfg, Some(embeddings), train_config, protocol)?;
        let predicted = outcome.model.predict_labels(dev)?;
        let gold: Vec<&str> = dev.iter().map(|i| i.label.as_deref().unwrap_or("")).collect();
        let pred: Vec<&str> = predicted.iter().map(String::as_str).collect();
        let report = protocol.score(&gold, &pred)?;
        let metric = train_config.early_stop_metric.pick(&report);
        rows.push(AblationRow {
            name,
            features: outcome.model.fcm_feature_count(),
            report,
            metric,
        });
    }
    Ok(AblationTable { rows })
}
