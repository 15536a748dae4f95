//! Everything inference needs, trained together and stored as a directory:
//!
//! ```text
//! manifest.json   versions, configuration, vocabulary with categories
//! labels.jsonl    one LabelModel per line, sorted by term
//! index.json      the similarity index over training pages
//! textqc.json     character model and quality threshold
//! langid.json     language profiles
//! ```
//!
//! Files contain no timestamps and use ordered maps, so identical inputs and
//! seeds give byte-identical bundles.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::{explode_to_pages, filter_labels, BookRecord, Category, TrainingConfig};
use crate::error::{Error, Result};
use crate::preprocess::{
    analyze, build_language_profiles, detect_language, Analyzer, LanguageProfile, RuleAnalyzer,
    DEFAULT_TOP_K, MIN_SAMPLE_CHARS, UNDETERMINED,
};
use crate::scalar::Scalar;
use crate::synth::garbage;
use crate::tagger::{
    build_similarity_index, featurize, stable_hash, train_models, validate_dim, FeatureVector,
    HybridConfig, LabelModel, NegativeSampling, SimilarityIndex, Tagger, TrainHyper, DEFAULT_DIM,
};
use crate::textqc::{
    calibrate_threshold, normalize_whitespace, train_char_model, CharModel, CharModelFile,
    QualityConfig, DEFAULT_ALPHA, DEFAULT_ORDER,
};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

/// Cap on the text used per language profile and for the character model.
const SAMPLE_CHAR_CAP: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRecord {
    pub order: usize,
    pub alpha: f64,
    pub threshold: f64,
    pub min_chars: usize,
    pub calibration_pages: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    /// Fingerprint of the training data and configuration.
    pub model_version: String,
    pub scalar: String,
    pub dim: usize,
    pub seed: u64,
    pub training: TrainingConfig,
    pub hyper: TrainHyper<f64>,
    pub sampling: NegativeSampling,
    pub hybrid: HybridConfig,
    pub quality: QualityRecord,
    pub languages: Vec<String>,
    pub training_books: usize,
    pub training_pages: usize,
    pub vocabulary: BTreeMap<String, Category>,
    /// Page-instance count per label.
    pub label_counts: BTreeMap<String, usize>,
    /// Labels that passed the example filter but could not be trained.
    pub dropped_labels: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrainOptions<T> {
    pub training: TrainingConfig,
    pub dim: usize,
    pub hyper: TrainHyper<T>,
    pub sampling: NegativeSampling,
    pub hybrid: HybridConfig,
    pub qc_order: usize,
    pub qc_alpha: T,
    pub calibration_pages: usize,
    pub lang_top_k: usize,
    /// Seeds classifier training and quality-gate calibration.
    pub seed: u64,
}

impl<T: Scalar> Default for TrainOptions<T> {
    fn default() -> Self {
        TrainOptions {
            training: TrainingConfig::default(),
            dim: DEFAULT_DIM,
            hyper: TrainHyper::default(),
            sampling: NegativeSampling::default(),
            hybrid: HybridConfig::default(),
            qc_order: DEFAULT_ORDER,
            qc_alpha: T::of(DEFAULT_ALPHA),
            calibration_pages: 500,
            lang_top_k: DEFAULT_TOP_K,
            seed: 0,
        }
    }
}

#[derive(Clone)]
pub struct ModelBundle<T> {
    pub manifest: Manifest,
    pub char_model: CharModel<T>,
    pub quality: QualityConfig<T>,
    pub profiles: Vec<LanguageProfile<T>>,
    pub tagger: Tagger<T>,
    pub analyzer: Arc<dyn Analyzer>,
}

/// Stored quality gate: the character model and its calibrated threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct QualityFile<T> {
    pub model: CharModelFile<T>,
    pub quality: QualityConfig<T>,
}

fn scalar_name<T: Scalar>() -> String {
    std::any::type_name::<T>().to_string()
}

impl<T: Scalar> ModelBundle<T> {
    pub fn category(&self, term: &str) -> Option<Category> {
        self.manifest.vocabulary.get(term).copied()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join("manifest.json"), &self.manifest, true)?;
        let path = dir.join("labels.jsonl");
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for model in self.tagger.models.values() {
            serde_json::to_writer(&mut w, model)?;
            w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        write_json(&dir.join("index.json"), &self.tagger.index, false)?;
        write_json(
            &dir.join("textqc.json"),
            &QualityFile {
                model: CharModelFile::from_model(&self.char_model),
                quality: self.quality,
            },
            false,
        )?;
        write_json(&dir.join("langid.json"), &self.profiles, false)
    }

    /// Loads a bundle; the format version and scalar type must match.
    pub fn load(dir: impl AsRef<Path>, analyzer: Arc<dyn Analyzer>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
        if manifest.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::Bundle(format!(
                "format version {} is not supported (expected {BUNDLE_FORMAT_VERSION})",
                manifest.format_version
            )));
        }
        if manifest.scalar != scalar_name::<T>() {
            return Err(Error::Bundle(format!(
                "bundle stores {} weights, loader expects {}",
                manifest.scalar,
                scalar_name::<T>()
            )));
        }
        let path = dir.join("labels.jsonl");
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut models = BTreeMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let model: LabelModel<T> = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: format!("labels.jsonl: {e}"),
            })?;
            if model.dim != manifest.dim {
                return Err(Error::DimMismatch {
                    model: model.dim,
                    vector: manifest.dim,
                });
            }
            models.insert(model.term.clone(), model);
        }
        if let Some(term) = manifest.vocabulary.keys().find(|t| !models.contains_key(*t)) {
            return Err(Error::MissingModel(term.clone()));
        }
        let index: SimilarityIndex<T> = read_json(&dir.join("index.json"))?;
        if index.dim() != manifest.dim {
            return Err(Error::DimMismatch {
                model: manifest.dim,
                vector: index.dim(),
            });
        }
        let qf: QualityFile<T> = read_json(&dir.join("textqc.json"))?;
        let profiles: Vec<LanguageProfile<T>> = read_json(&dir.join("langid.json"))?;
        let tagger = Tagger::new(models, index, manifest.hybrid)?;
        Ok(ModelBundle {
            char_model: qf.model.into_model()?,
            quality: qf.quality,
            profiles,
            tagger,
            analyzer,
            manifest,
        })
    }

    /// Loads with the builtin rule analyzer.
    pub fn load_default(dir: impl AsRef<Path>) -> Result<Self> {
        Self::load(dir, Arc::new(RuleAnalyzer::builtin()))
    }
}

fn write_json<S: Serialize>(path: &Path, value: &S, pretty: bool) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    if pretty {
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    } else {
        serde_json::to_writer(&mut w, value)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Bundle(format!("{}: {e}", path.display())))
}

/// Lemmatized, hashed features of `text` under the bundle's language profiles.
pub fn page_features<T: Scalar>(
    text: &str,
    profiles: &[LanguageProfile<T>],
    analyzer: &dyn Analyzer,
    dim: usize,
) -> (String, FeatureVector<T>) {
    let detection = detect_language(profiles, text);
    let page = analyze(text, &detection, analyzer);
    (page.lang.clone(), featurize(&page, dim))
}

/// Trains a character model on a seeded share of `texts` and calibrates its
/// threshold on up to `calibration_pages` held-out texts against uniform
/// random alphanumeric strings of the same lengths. Returns the number of
/// held-out texts used.
pub fn train_quality_gate<T: Scalar, S: AsRef<str>>(
    texts: &[S],
    order: usize,
    alpha: T,
    calibration_pages: usize,
    seed: u64,
) -> Result<(CharModel<T>, QualityConfig<T>, usize)> {
    let mut shuffled: Vec<usize> = (0..texts.len()).collect();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5143));
    let holdout_n = calibration_pages.min(texts.len() / 2);
    let (holdout, rest) = shuffled.split_at(holdout_n);
    let mut train: Vec<&str> = Vec::new();
    let mut chars = 0;
    for &i in rest {
        if chars >= SAMPLE_CHAR_CAP {
            break;
        }
        chars += texts[i].as_ref().len();
        train.push(texts[i].as_ref());
    }
    let char_model = train_char_model(&train, order, alpha)?;
    let mut quality = QualityConfig::new(T::zero());
    let good: Vec<&str> = holdout
        .iter()
        .map(|&i| texts[i].as_ref())
        .filter(|t| normalize_whitespace(t).chars().count() >= quality.min_chars)
        .collect();
    if good.is_empty() {
        return Err(Error::InsufficientText {
            needed: quality.min_chars,
            got: 0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6761_7262);
    let bad: Vec<String> = good
        .iter()
        .map(|t| garbage(t.chars().count(), &mut rng))
        .collect();
    let bad: Vec<&str> = bad.iter().map(String::as_str).collect();
    quality.threshold = calibrate_threshold(&char_model, &good, &bad)?;
    Ok((char_model, quality, good.len()))
}

/// Trains the quality gate, language profiles, classifiers and page index.
pub fn train_bundle<T: Scalar>(
    books: &[BookRecord],
    opts: &TrainOptions<T>,
    analyzer: Arc<dyn Analyzer>,
) -> Result<ModelBundle<T>> {
    validate_dim(opts.dim)?;
    opts.hybrid.validate()?;
    let ts = filter_labels(explode_to_pages(books, &opts.training)?, opts.training.min_examples)?;
    info!(
        "{} training pages, {} labels",
        ts.pages.len(),
        ts.vocabulary.len()
    );

    let page_texts: Vec<&str> = ts.pages.iter().map(|p| p.text.as_str()).collect();
    let (char_model, quality, calibration_pages) = train_quality_gate(
        &page_texts,
        opts.qc_order,
        opts.qc_alpha,
        opts.calibration_pages,
        opts.seed,
    )?;

    // Language profiles from the books' declared languages.
    let mut samples: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    let language_of: BTreeMap<&str, &str> =
        books.iter().map(|b| (b.id.as_str(), b.language.as_str())).collect();
    let mut lang_chars: BTreeMap<&str, usize> = BTreeMap::new();
    for page in &ts.pages {
        let lang = language_of.get(page.book_id.as_str()).copied().unwrap_or(UNDETERMINED);
        if lang == UNDETERMINED {
            continue;
        }
        let used = lang_chars.entry(lang).or_default();
        if *used < SAMPLE_CHAR_CAP {
            *used += page.text.chars().count();
            samples.entry(lang.to_string()).or_default().push(&page.text);
        }
    }
    samples.retain(|lang, _| {
        let ok = lang_chars[lang.as_str()] >= MIN_SAMPLE_CHARS;
        if !ok {
            warn!("language {lang:?}: too little text for a profile, pages will be undetermined");
        }
        ok
    });
    let profiles: Vec<LanguageProfile<T>> = build_language_profiles(&samples, opts.lang_top_k)?;

    let features: Vec<FeatureVector<T>> = ts
        .pages
        .par_iter()
        .map(|p| page_features(&p.text, &profiles, analyzer.as_ref(), opts.dim).1)
        .collect();
    let hyper = TrainHyper {
        seed: opts.seed,
        ..opts.hyper
    };
    let trained = train_models(&ts, &features, &hyper, &opts.sampling)?;

    let mut ts = ts;
    if !trained.dropped.is_empty() {
        for (term, _) in &trained.dropped {
            ts.vocabulary.remove(term);
            ts.label_counts.remove(term);
            ts.categories.remove(term);
        }
        let vocabulary = &ts.vocabulary;
        for page in &mut ts.pages {
            page.labels.retain(|l| vocabulary.contains(l));
        }
        if ts.vocabulary.is_empty() {
            return Err(Error::EmptyVocabulary {
                min_examples: opts.training.min_examples,
            });
        }
    }
    let pairs: Vec<_> = ts.pages.iter().zip(features.iter()).collect();
    let index = build_similarity_index(&pairs)?;
    let tagger = Tagger::new(trained.models, index, opts.hybrid)?;

    let hyper_f64 = TrainHyper {
        l2: hyper.l2.as_f64(),
        lr: hyper.lr.as_f64(),
        lr_decay: hyper.lr_decay.as_f64(),
        epochs: hyper.epochs,
        batch_size: hyper.batch_size,
        seed: hyper.seed,
        min_positives: hyper.min_positives,
    };
    let quality_record = QualityRecord {
        order: opts.qc_order,
        alpha: opts.qc_alpha.as_f64(),
        threshold: quality.threshold.as_f64(),
        min_chars: quality.min_chars,
        calibration_pages,
    };
    let mut manifest = Manifest {
        format_version: BUNDLE_FORMAT_VERSION,
        model_version: String::new(),
        scalar: scalar_name::<T>(),
        dim: opts.dim,
        seed: opts.seed,
        training: opts.training.clone(),
        hyper: hyper_f64,
        sampling: opts.sampling,
        hybrid: opts.hybrid,
        quality: quality_record,
        languages: profiles.iter().map(|p| p.lang.clone()).collect(),
        training_books: books.len(),
        training_pages: ts.pages.len(),
        vocabulary: ts.categories.clone(),
        label_counts: ts.label_counts.clone(),
        dropped_labels: trained.dropped,
    };
    manifest.model_version = fingerprint(&manifest, &ts.pages);
    Ok(ModelBundle {
        manifest,
        char_model,
        quality,
        profiles,
        tagger,
        analyzer,
    })
}

fn fingerprint(manifest: &Manifest, pages: &[crate::corpus::PageInstance]) -> String {
    let mut bytes = serde_json::to_vec(manifest).expect("manifest serializes");
    for p in pages {
        bytes.extend_from_slice(p.book_id.as_bytes());
        bytes.extend_from_slice(&p.page_no.to_le_bytes());
        bytes.extend_from_slice(&stable_hash(p.text.as_bytes()).to_le_bytes());
    }
    format!("{:016x}", stable_hash(&bytes))
}
