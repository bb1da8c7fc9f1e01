//! Feature-rich compositional embedding model (FCM) for relation extraction.
//!
//! Words are described by sparse binary features of their role relative to
//! two entity mentions; each word's feature vector is composed with its dense
//! embedding by an outer product, the products are summed over the sentence,
//! and a per-label weight matrix scores the result under a softmax.

pub mod archive;
pub mod corpus;
pub mod embeddings;
pub mod eval;
pub mod features;
pub mod gradcheck;
pub mod loglinear;
pub mod model;
pub mod trainer;

pub use corpus::{AnnotatedSentence, Corpus, Document, EntityMention, LabelSet, PairMode, RelationInstance, Token};
pub use embeddings::{load_word2vec_text, save_embeddings, EmbeddingTable, UnkPolicy};
pub use eval::{EvalProtocol, EvalReport};
pub use features::{FeatureConfig, FeatureVocab, SparseFeatureVector, TemplateSet, TypeSource};
pub use model::{FcmParams, ScoreVector};
pub use trainer::{ModelKind, RelationModel, TrainConfig};
