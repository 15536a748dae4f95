//! Hybrid tagging: hashed features, per-label logistic regression and
//! similarity-based candidate reduction.

mod features;
mod hybrid;
mod index;
mod logreg;
mod train;

pub use features::{
    feature_index, featurize, featurize_tokens, stable_hash, validate_dim, FeatureVector,
    DEFAULT_DIM,
};
pub use hybrid::{candidate_tags, predict_page, HybridConfig, Tagger};
pub use index::{build_similarity_index, most_similar, PageId, PageRef, SimilarityIndex};
pub use logreg::{
    predict_prob, train_label_model, Example, LabelModel, LogisticObjective, TrainHyper, TrainMeta,
};
pub use train::{train_models, NegativeSampling, TrainedModels};
