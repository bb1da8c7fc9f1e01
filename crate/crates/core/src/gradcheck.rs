//! Finite-difference check of the FCM gradients on random problems.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::LabelSet;
use crate::embeddings::{EmbeddingTable, UnkPolicy, WordSlot};
use crate::features::SparseFeatureVector;
use crate::model::{self, EncodedInstance, EncodedWord, FcmParams, LabelWeights, ModelError};

/// Denominator floor for relative errors. Central differences carry about
/// `f64::EPSILON · |loss| / h` ≈ 3e-11 of cancellation noise at h = 1e-4 and
/// loss ≈ 15, which would swamp a relative error on gradients of ~1e-7;
/// below the floor a coordinate is judged on absolute error (< 1e-9 for a
/// 1e-5 budget).
pub const REL_FLOOR: f64 = 1e-4;

pub const DEFAULT_STEP: f64 = 1e-4;

/// `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProblemShape {
    /// Sentence length.
    pub words: usize,
    pub dim: usize,
    pub features: usize,
    pub labels: usize,
}

/// A labeled instance with parameters, fine-tuning on.
#[derive(Debug, Clone)]
pub struct Problem {
    pub params: FcmParams,
    pub instance: EncodedInstance,
}

/// Random weights in (−0.5, 0.5), embeddings in (−1, 1), each word firing a
/// random non-empty feature subset. Words share embedding rows occasionally.
pub fn random_problem<R: Rng>(rng: &mut R, shape: ProblemShape) -> Problem {
    let ProblemShape {
        words: n,
        dim,
        features,
        labels,
    } = shape;
    let vocab = n.max(2);
    let rows = (0..vocab).map(|w| (format!("w{w}"), (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()));
    let table = EmbeddingTable::from_rows(dim, rows, UnkPolicy::MeanVector).expect("valid random table");
    let weights: Vec<f64> = (0..labels * features * dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let label_set = LabelSet::from_labels((0..labels).map(|y| format!("L{y}")), None);
    let params = FcmParams {
        labels: label_set,
        weights: LabelWeights::from_values(labels, features, dim, weights).expect("shape matches"),
        embeddings: Arc::new(table),
        fine_tune: true,
    };
    let words = (0..n)
        .map(|_| {
            let k = rng.gen_range(1..=features);
            let feats = SparseFeatureVector::from_indices((0..k).map(|_| rng.gen_range(0..features)));
            EncodedWord {
                features: feats,
                slot: WordSlot::Row(rng.gen_range(0..vocab)),
            }
        })
        .collect();
    Problem {
        params,
        instance: EncodedInstance {
            words,
            gold: Some(rng.gen_range(0..labels)),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradCheckReport {
    pub max_weight_error: f64,
    pub max_embedding_error: f64,
    pub coordinates: usize,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.max_weight_error.max(self.max_embedding_error)
    }

    fn merge(&mut self, other: GradCheckReport) {
        self.max_weight_error = self.max_weight_error.max(other.max_weight_error);
        self.max_embedding_error = self.max_embedding_error.max(other.max_embedding_error);
        self.coordinates += other.coordinates;
    }
}

/// Compares every weight and every used embedding coordinate against central
/// differences with step `h`.
pub fn check(problem: &Problem, h: f64) -> Result<GradCheckReport, ModelError> {
    let (_, grads) = model::loss_and_gradients(&problem.instance, &problem.params)?;
    let mut params = problem.params.clone();
    let mut report = GradCheckReport::default();
    let (labels, features, dim) = (params.num_labels(), params.num_features(), params.dim());

    let dense = grads.dense_weight_grad();
    for y in 0..labels {
        for j in 0..features {
            for k in 0..dim {
                let orig = params.weights.get(y, j, k);
                params.weights.set(y, j, k, orig + h);
                let up = model::loss(&problem.instance, &params)?;
                params.weights.set(y, j, k, orig - h);
                let down = model::loss(&problem.instance, &params)?;
                params.weights.set(y, j, k, orig);
                let numeric = (up - down) / (2.0 * h);
                let analytic = dense[(y * features + j) * dim + k];
                report.max_weight_error = report.max_weight_error.max(relative_error(analytic, numeric));
                report.coordinates += 1;
            }
        }
    }

    let rows: Vec<usize> = (0..params.embeddings.len()).collect();
    for r in rows {
        for k in 0..dim {
            let orig = params.embeddings.row(r)[k];
            Arc::make_mut(&mut params.embeddings).row_mut(r)[k] = orig + h;
            let up = model::loss(&problem.instance, &params)?;
            Arc::make_mut(&mut params.embeddings).row_mut(r)[k] = orig - h;
            let down = model::loss(&problem.instance, &params)?;
            Arc::make_mut(&mut params.embeddings).row_mut(r)[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.embeddings.get(&r).map_or(0.0, |g| g[k]);
            report.max_embedding_error = report.max_embedding_error.max(relative_error(analytic, numeric));
            report.coordinates += 1;
        }
    }
    Ok(report)
}

/// Checks `count` random problems with shapes drawn up to `max`.
pub fn run(seed: u64, count: usize, max: ProblemShape, h: f64) -> Result<GradCheckReport, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport::default();
    for _ in 0..count {
        let shape = ProblemShape {
            words: rng.gen_range(1..=max.words.max(1)),
            dim: rng.gen_range(1..=max.dim.max(1)),
            features: rng.gen_range(1..=max.features.max(1)),
            labels: rng.gen_range(2..=max.labels.max(2)),
        };
        report.merge(check(&random_problem(&mut rng, shape), h)?);
    }
    Ok(report)
}
