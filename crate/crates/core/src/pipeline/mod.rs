//! Indexing one book: sample pages, drop garbage pages, predict labels per
//! page, aggregate to `f = t / n` and threshold.

mod aggregate;
mod marc;
mod sample;
mod source;

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use aggregate::{aggregate, apply_threshold, sort_keywords, KeywordResult};
pub use marc::{field_tag, marc_line, to_marc21, SOURCE_CODE};
pub use sample::{sample_indices, sample_pages};
pub use source::{
    detect_format, pdf_pages, read_book, read_book_file, text_pages, write_text_pdf, SourceFormat,
};

use crate::bundle::ModelBundle;
use crate::corpus::BookRecord;
use crate::error::{Error, Result};
use crate::preprocess::{analyze, detect_language, Detection};
use crate::scalar::Scalar;
use crate::tagger::{featurize, predict_page, HybridConfig};
use crate::textqc::passes_quality;

pub const DEFAULT_PAGES: usize = 10;
pub const DEFAULT_BUFFER: usize = 5;
pub const DEFAULT_THRESHOLD: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexingConfig {
    pub pages_n: usize,
    /// Extra pages sampled to make up for quality-gate failures.
    pub buffer: usize,
    pub threshold: f64,
    pub seed: u64,
    pub hybrid: HybridConfig,
}

impl Default for IndexingConfig {
    fn default() -> Self {
        IndexingConfig {
            pages_n: DEFAULT_PAGES,
            buffer: DEFAULT_BUFFER,
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
            hybrid: HybridConfig::default(),
        }
    }
}

impl IndexingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pages_n == 0 {
            return Err(Error::Config("pages_n must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "threshold {} is outside [0, 1]",
                self.threshold
            )));
        }
        self.hybrid.validate()
    }
}

/// Workflow stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Converting,
    Sampling,
    Extracting,
    QualityControl,
    DetectingLanguages,
    Preprocessing,
    Predicting,
    Aggregating,
    Finished,
}

impl Step {
    pub const ALL: [Step; 9] = [
        Step::Converting,
        Step::Sampling,
        Step::Extracting,
        Step::QualityControl,
        Step::DetectingLanguages,
        Step::Preprocessing,
        Step::Predicting,
        Step::Aggregating,
        Step::Finished,
    ];

    /// Human-readable label, e.g. "Detecting languages".
    pub fn label(self) -> &'static str {
        match self {
            Step::Converting => "Converting",
            Step::Sampling => "Sampling pages",
            Step::Extracting => "Extracting text",
            Step::QualityControl => "Quality control",
            Step::DetectingLanguages => "Detecting languages",
            Step::Preprocessing => "Preprocessing",
            Step::Predicting => "Predicting",
            Step::Aggregating => "Aggregating",
            Step::Finished => "Finished",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexingOutcome {
    /// Sorted by `f`, then `mean_prob` (both descending), then term.
    pub keywords: Vec<KeywordResult>,
    /// Fraction of used pages per detected language.
    pub language_distribution: BTreeMap<String, f64>,
    /// 1-based page numbers in draw order.
    pub pages_sampled: Vec<u32>,
    pub pages_used: usize,
    pub pages_failed_qc: usize,
    pub elapsed_ms: u64,
    /// The threshold `keywords` was filtered at.
    pub threshold: f64,
}

impl IndexingOutcome {
    /// The same outcome re-filtered at `threshold`. Only meaningful on an
    /// outcome filtered at a lower threshold (normally 0).
    pub fn filtered(&self, threshold: f64) -> IndexingOutcome {
        IndexingOutcome {
            keywords: apply_threshold(&self.keywords, threshold),
            threshold,
            ..self.clone()
        }
    }

    pub fn terms(&self) -> Vec<&str> {
        self.keywords.iter().map(|k| k.term.as_str()).collect()
    }
}

/// Predictions for one used page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageResult {
    pub page_no: u32,
    pub lang: String,
    pub predictions: Vec<(String, f64)>,
}

/// Quality-gates `sampled` in draw order and keeps the first `pages_n`
/// passing pages. Returns them with the number of failures in the sample.
pub fn select_pages<'a, T: Scalar>(
    bundle: &ModelBundle<T>,
    sampled: &[(u32, &'a str)],
    pages_n: usize,
) -> (Vec<(u32, &'a str)>, usize) {
    let passed: Vec<bool> = sampled
        .par_iter()
        .map(|(_, text)| passes_quality(&bundle.char_model, &bundle.quality, text))
        .collect();
    let failed = passed.iter().filter(|&&p| !p).count();
    let used = sampled
        .iter()
        .zip(&passed)
        .filter(|(_, &p)| p)
        .map(|(page, _)| *page)
        .take(pages_n)
        .collect();
    (used, failed)
}

/// Language detection, analysis and prediction for already selected pages.
pub fn predict_pages<T: Scalar>(
    bundle: &ModelBundle<T>,
    pages: &[(u32, &str)],
    hybrid: &HybridConfig,
    progress: &mut dyn FnMut(Step),
) -> Result<Vec<PageResult>> {
    progress(Step::DetectingLanguages);
    let detections: Vec<Detection> = pages
        .par_iter()
        .map(|(_, text)| detect_language(&bundle.profiles, text))
        .collect();
    progress(Step::Preprocessing);
    let dim = bundle.manifest.dim;
    let features: Vec<_> = pages
        .par_iter()
        .zip(&detections)
        .map(|((_, text), d)| featurize::<T>(&analyze(text, d, bundle.analyzer.as_ref()), dim))
        .collect();
    progress(Step::Predicting);
    let predictions: Vec<Vec<(String, T)>> = features
        .par_iter()
        .map(|fv| predict_page(&bundle.tagger.models, &bundle.tagger.index, hybrid, fv))
        .collect::<Result<_>>()?;
    Ok(pages
        .iter()
        .zip(detections)
        .zip(predictions)
        .map(|(((page_no, _), d), preds)| PageResult {
            page_no: *page_no,
            lang: d.lang,
            predictions: preds.into_iter().map(|(t, p)| (t, p.as_f64())).collect(),
        })
        .collect())
}

/// Runs the whole workflow on `book` and reports each step to `progress`.
/// The outcome is filtered at `cfg.threshold`.
pub fn index_book<T: Scalar>(
    bundle: &ModelBundle<T>,
    book: &BookRecord,
    cfg: &IndexingConfig,
    progress: &mut dyn FnMut(Step),
) -> Result<IndexingOutcome> {
    let outcome = index_book_unfiltered(bundle, book, cfg, progress)?;
    Ok(outcome.filtered(cfg.threshold))
}

/// Like [`index_book`] but keeps every keyword (threshold 0), so that any
/// threshold can be applied later with [`IndexingOutcome::filtered`].
pub fn index_book_unfiltered<T: Scalar>(
    bundle: &ModelBundle<T>,
    book: &BookRecord,
    cfg: &IndexingConfig,
    progress: &mut dyn FnMut(Step),
) -> Result<IndexingOutcome> {
    let start = Instant::now();
    cfg.validate()?;
    if book.pages.is_empty() {
        return Err(Error::UnsupportedSource(format!("book {:?} has no pages", book.id)));
    }
    progress(Step::Sampling);
    let sampled = sample_pages(&book.pages, cfg.pages_n, cfg.buffer, cfg.seed);
    progress(Step::Extracting);
    progress(Step::QualityControl);
    let (used, failed) = select_pages(bundle, &sampled, cfg.pages_n);
    if used.is_empty() {
        return Err(Error::NoUsableText {
            sampled: sampled.len(),
        });
    }
    let results = predict_pages(bundle, &used, &cfg.hybrid, progress)?;
    progress(Step::Aggregating);
    let page_predictions: Vec<Vec<(String, f64)>> =
        results.iter().map(|r| r.predictions.clone()).collect();
    let keywords = aggregate(&page_predictions, &bundle.manifest.vocabulary);
    let mut language_distribution: BTreeMap<String, f64> = BTreeMap::new();
    for r in &results {
        *language_distribution.entry(r.lang.clone()).or_default() += 1.0;
    }
    for v in language_distribution.values_mut() {
        *v /= results.len() as f64;
    }
    let outcome = IndexingOutcome {
        keywords,
        language_distribution,
        pages_sampled: sampled.iter().map(|(no, _)| *no).collect(),
        pages_used: results.len(),
        pages_failed_qc: failed,
        elapsed_ms: start.elapsed().as_millis() as u64,
        threshold: 0.0,
    };
    progress(Step::Finished);
    Ok(outcome)
}

/// Reads a book from raw bytes (reporting [`Step::Converting`]) and indexes
/// it without a threshold.
pub fn index_source<T: Scalar>(
    bundle: &ModelBundle<T>,
    bytes: &[u8],
    name: Option<&str>,
    cfg: &IndexingConfig,
    progress: &mut dyn FnMut(Step),
) -> Result<IndexingOutcome> {
    progress(Step::Converting);
    let book = read_book(bytes, name, None)?;
    index_book_unfiltered(bundle, &book, cfg, progress)
}
