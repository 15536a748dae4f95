//! Automatic subject indexing of books against a controlled vocabulary.
//!
//! A book is indexed by sampling a handful of its pages, rejecting pages whose
//! extracted text is character garbage, lemmatizing the rest, predicting
//! labels for each page with a candidate-reduced set of per-label logistic
//! regression classifiers, and ranking labels by the fraction of pages that
//! predicted them.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix it to `f64`.

pub mod bundle;
pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod pipeline;
pub mod preprocess;
pub mod scalar;
pub mod stats;
pub mod synth;
pub mod tagger;
pub mod textqc;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ModelBundle = bundle::ModelBundle<f64>;
pub type TrainOptions = bundle::TrainOptions<f64>;
pub type CharModel = textqc::CharModel<f64>;
pub type QualityConfig = textqc::QualityConfig<f64>;
pub type LanguageProfile = preprocess::LanguageProfile<f64>;
pub type FeatureVector = tagger::FeatureVector<f64>;
pub type LabelModel = tagger::LabelModel<f64>;
pub type SimilarityIndex = tagger::SimilarityIndex<f64>;
pub type Tagger = tagger::Tagger<f64>;
