//! Per-book precision, recall and F1 against gold subjects, macro-averaged
//! over books; threshold sweeps; recall as a function of pages used.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::ModelBundle;
use crate::corpus::{BookRecord, Category};
use crate::error::{Error, Result};
use crate::pipeline::{
    index_book_unfiltered, predict_pages, sample_pages, select_pages, IndexingConfig,
    IndexingOutcome,
};
use crate::scalar::Scalar;
use crate::stats::Summary;
use crate::tagger::HybridConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub hits: usize,
}

/// Set precision, recall and F1. An empty prediction scores 0 on all three;
/// so does an empty gold set.
pub fn prf<S: Ord>(gold: &BTreeSet<S>, predicted: &BTreeSet<S>) -> Prf {
    let hits = gold.intersection(predicted).count();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(hits, predicted.len());
    let recall = ratio(hits, gold.len());
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Prf {
        precision,
        recall,
        f1,
        hits,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookEval {
    pub book_id: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold_size: usize,
    pub pred_size: usize,
    /// Gold terms dropped because the model was never trained on them.
    pub excluded_unseen: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    pub exclude_unseen: bool,
    pub per_book: Vec<BookEval>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Books left without gold terms after unseen-label exclusion.
    pub skipped_books: Vec<String>,
    /// Books that could not be indexed, scored as empty predictions.
    pub failed_books: Vec<(String, String)>,
    pub config: IndexingConfig,
}

/// Unweighted means of per-book precision, recall and F1.
pub fn macro_average(per_book: &[BookEval]) -> (f64, f64, f64) {
    if per_book.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let n = per_book.len() as f64;
    let sum = |f: fn(&BookEval) -> f64| per_book.iter().map(f).sum::<f64>() / n;
    (sum(|b| b.precision), sum(|b| b.recall), sum(|b| b.f1))
}

/// Gold terms of `book`, optionally restricted to `vocabulary`, with the
/// number of terms removed.
pub fn gold_terms(
    book: &BookRecord,
    vocabulary: &BTreeMap<String, Category>,
    exclude_unseen: bool,
) -> (BTreeSet<String>, usize) {
    let all = book.subject_keys();
    if !exclude_unseen {
        return (all, 0);
    }
    let kept: BTreeSet<String> = all.iter().filter(|t| vocabulary.contains_key(*t)).cloned().collect();
    let excluded = all.len() - kept.len();
    (kept, excluded)
}

/// Scores unthresholded outcomes at each threshold. `outcomes[i]` belongs to
/// `books[i]`; an `Err` counts as an empty prediction.
pub fn evaluate_outcomes(
    books: &[BookRecord],
    outcomes: &[std::result::Result<IndexingOutcome, String>],
    vocabulary: &BTreeMap<String, Category>,
    thresholds: &[f64],
    exclude_unseen: bool,
    cfg: &IndexingConfig,
) -> Vec<EvalReport> {
    thresholds
        .iter()
        .map(|&threshold| {
            let mut report = EvalReport {
                threshold,
                exclude_unseen,
                per_book: Vec::new(),
                macro_precision: 0.0,
                macro_recall: 0.0,
                macro_f1: 0.0,
                skipped_books: Vec::new(),
                failed_books: Vec::new(),
                config: IndexingConfig { threshold, ..*cfg },
            };
            for (book, outcome) in books.iter().zip(outcomes) {
                let (gold, excluded) = gold_terms(book, vocabulary, exclude_unseen);
                if gold.is_empty() {
                    report.skipped_books.push(book.id.clone());
                    continue;
                }
                let predicted: BTreeSet<String> = match outcome {
                    Ok(o) => o.filtered(threshold).keywords.into_iter().map(|k| k.term).collect(),
                    Err(e) => {
                        report.failed_books.push((book.id.clone(), e.clone()));
                        BTreeSet::new()
                    }
                };
                let s = prf(&gold, &predicted);
                report.per_book.push(BookEval {
                    book_id: book.id.clone(),
                    precision: s.precision,
                    recall: s.recall,
                    f1: s.f1,
                    gold_size: gold.len(),
                    pred_size: predicted.len(),
                    excluded_unseen: excluded,
                });
            }
            let (p, r, f) = macro_average(&report.per_book);
            report.macro_precision = p;
            report.macro_recall = r;
            report.macro_f1 = f;
            report
        })
        .collect()
}

/// Indexes every book once, without a threshold, in parallel.
pub fn index_all<T: Scalar>(
    bundle: &ModelBundle<T>,
    books: &[BookRecord],
    cfg: &IndexingConfig,
) -> Vec<std::result::Result<IndexingOutcome, String>> {
    books
        .par_iter()
        .map(|book| {
            index_book_unfiltered(bundle, book, cfg, &mut |_| {}).map_err(|e| {
                warn!("book {:?}: {e}", book.id);
                e.to_string()
            })
        })
        .collect()
}

pub fn evaluate_set<T: Scalar>(
    bundle: &ModelBundle<T>,
    books: &[BookRecord],
    cfg: &IndexingConfig,
    thresholds: &[f64],
    exclude_unseen: bool,
) -> Result<Vec<EvalReport>> {
    if books.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let outcomes = index_all(bundle, books, cfg);
    let reports = evaluate_outcomes(
        books,
        &outcomes,
        &bundle.manifest.vocabulary,
        thresholds,
        exclude_unseen,
        cfg,
    );
    for r in &reports {
        if !r.skipped_books.is_empty() {
            warn!(
                "threshold {}: {} books skipped (no gold terms known to the model)",
                r.threshold,
                r.skipped_books.len()
            );
        }
    }
    Ok(reports)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExtentClass {
    #[serde(rename = "1-49")]
    UpTo49,
    #[serde(rename = "50-99")]
    UpTo99,
    #[serde(rename = "100-299")]
    UpTo299,
    #[serde(rename = "300-499")]
    UpTo499,
    #[serde(rename = "500+")]
    From500,
}

impl ExtentClass {
    pub fn of(pages: usize) -> ExtentClass {
        match pages {
            0..=49 => ExtentClass::UpTo49,
            50..=99 => ExtentClass::UpTo99,
            100..=299 => ExtentClass::UpTo299,
            300..=499 => ExtentClass::UpTo499,
            _ => ExtentClass::From500,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExtentClass::UpTo49 => "1-49",
            ExtentClass::UpTo99 => "50-99",
            ExtentClass::UpTo299 => "100-299",
            ExtentClass::UpTo499 => "300-499",
            ExtentClass::From500 => "500+",
        }
    }
}

/// Recall after each additional page of one book, at threshold 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookCurve {
    pub book_id: String,
    pub extent: usize,
    /// `recalls[k - 1]` is the recall of the union of the first `k` pages.
    pub recalls: Vec<f64>,
    pub max_recall: f64,
    pub pages_to_90pct: usize,
    pub pages_to_max: usize,
}

impl BookCurve {
    pub fn from_recalls(book_id: impl Into<String>, extent: usize, recalls: Vec<f64>) -> Self {
        let max_recall = recalls.last().copied().unwrap_or(0.0);
        let first = |target: f64| {
            recalls
                .iter()
                .position(|&r| r >= target)
                .map_or(recalls.len(), |i| i + 1)
        };
        BookCurve {
            book_id: book_id.into(),
            extent,
            pages_to_90pct: first(0.9 * max_recall),
            pages_to_max: first(max_recall),
            max_recall,
            recalls,
        }
    }

    /// Recall after `k` pages, or after all pages if the curve is shorter.
    pub fn recall_at(&self, k: usize) -> f64 {
        match self.recalls.len() {
            0 => 0.0,
            len => self.recalls[k.clamp(1, len) - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub extent_class: ExtentClass,
    pub books: usize,
    pub pages_to_90pct: f64,
    pub pages_to_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    pub curves: Vec<BookCurve>,
    /// Books without known gold terms or without a usable page.
    pub skipped_books: Vec<String>,
}

/// Union recall of the first `k` page prediction sets, for every `k`.
pub fn recall_curve(gold: &BTreeSet<String>, pages: &[Vec<(String, f64)>]) -> Vec<f64> {
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut hits = 0usize;
    pages
        .iter()
        .map(|preds| {
            for (term, _) in preds {
                if seen.insert(term) && gold.contains(term) {
                    hits += 1;
                }
            }
            if gold.is_empty() {
                0.0
            } else {
                hits as f64 / gold.len() as f64
            }
        })
        .collect()
}

/// Recall against unseen-excluded gold as pages are added one at a time in
/// seeded nested order (quality-gate failures skipped), up to `max_pages`
/// sampled pages per book (all pages when `None`).
pub fn convergence_study<T: Scalar>(
    bundle: &ModelBundle<T>,
    books: &[BookRecord],
    max_pages: Option<usize>,
    seed: u64,
    hybrid: &HybridConfig,
) -> Result<ConvergenceStudy> {
    let curves: Vec<std::result::Result<BookCurve, String>> = books
        .par_iter()
        .map(|book| {
            let (gold, _) = gold_terms(book, &bundle.manifest.vocabulary, true);
            if gold.is_empty() || book.pages.is_empty() {
                return Err(book.id.clone());
            }
            let k = max_pages.unwrap_or(book.pages.len()).min(book.pages.len());
            let sampled = sample_pages(&book.pages, k, 0, seed);
            let (used, _) = select_pages(bundle, &sampled, k);
            if used.is_empty() {
                return Err(book.id.clone());
            }
            let results = predict_pages(bundle, &used, hybrid, &mut |_| {}).map_err(|e| {
                warn!("book {:?}: {e}", book.id);
                book.id.clone()
            })?;
            let preds: Vec<Vec<(String, f64)>> =
                results.into_iter().map(|r| r.predictions).collect();
            Ok(BookCurve::from_recalls(
                &book.id,
                book.pages.len(),
                recall_curve(&gold, &preds),
            ))
        })
        .collect();
    let mut study = ConvergenceStudy {
        rows: Vec::new(),
        curves: Vec::new(),
        skipped_books: Vec::new(),
    };
    for c in curves {
        match c {
            Ok(curve) => study.curves.push(curve),
            Err(id) => study.skipped_books.push(id),
        }
    }
    study.rows = convergence_rows(&study.curves);
    Ok(study)
}

/// Per-class averages; classes without books are omitted.
pub fn convergence_rows(curves: &[BookCurve]) -> Vec<ConvergenceRow> {
    let mut by_class: BTreeMap<ExtentClass, Vec<&BookCurve>> = BTreeMap::new();
    for c in curves {
        by_class.entry(ExtentClass::of(c.extent)).or_default().push(c);
    }
    by_class
        .into_iter()
        .map(|(class, cs)| {
            let n = cs.len() as f64;
            ConvergenceRow {
                extent_class: class,
                books: cs.len(),
                pages_to_90pct: cs.iter().map(|c| c.pages_to_90pct as f64).sum::<f64>() / n,
                pages_to_max: cs.iter().map(|c| c.pages_to_max as f64).sum::<f64>() / n,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCounts {
    pub threshold: f64,
    /// Predicted keyword count per indexed book.
    pub counts: Vec<usize>,
    pub summary: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordCountReport {
    pub gold_counts: Vec<usize>,
    pub gold: Option<Summary>,
    pub per_threshold: Vec<ThresholdCounts>,
}

/// Keyword counts per threshold from unthresholded outcomes; failed books
/// are left out of both the predicted and the gold counts.
pub fn keyword_counts(
    books: &[BookRecord],
    outcomes: &[std::result::Result<IndexingOutcome, String>],
    thresholds: &[f64],
) -> KeywordCountReport {
    let ok: Vec<(&BookRecord, &IndexingOutcome)> = books
        .iter()
        .zip(outcomes)
        .filter_map(|(b, o)| o.as_ref().ok().map(|o| (b, o)))
        .collect();
    let gold_counts: Vec<usize> = ok.iter().map(|(b, _)| b.subject_keys().len()).collect();
    let per_threshold = thresholds
        .iter()
        .map(|&threshold| {
            let counts: Vec<usize> = ok
                .iter()
                .map(|(_, o)| o.keywords.iter().filter(|k| k.passes(threshold)).count())
                .collect();
            ThresholdCounts {
                threshold,
                summary: Summary::of_counts(counts.iter().copied()),
                counts,
            }
        })
        .collect();
    KeywordCountReport {
        gold: Summary::of_counts(gold_counts.iter().copied()),
        gold_counts,
        per_threshold,
    }
}

pub fn keyword_count_report<T: Scalar>(
    bundle: &ModelBundle<T>,
    books: &[BookRecord],
    cfg: &IndexingConfig,
    thresholds: &[f64],
) -> Result<KeywordCountReport> {
    if books.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    Ok(keyword_counts(books, &index_all(bundle, books, cfg), thresholds))
}

#[derive(Serialize)]
struct BookRow<'a> {
    threshold: f64,
    book_id: &'a str,
    precision: f64,
    recall: f64,
    f1: f64,
    gold_size: usize,
    pred_size: usize,
    excluded_unseen: usize,
}

#[derive(Serialize)]
struct SummaryRow {
    threshold: f64,
    books: usize,
    skipped_books: usize,
    failed_books: usize,
    macro_precision: f64,
    macro_recall: f64,
    macro_f1: f64,
}

#[derive(Serialize)]
struct ConvergenceCsvRow {
    extent_class: &'static str,
    books: usize,
    pages_to_90pct: f64,
    pages_to_max: f64,
}

/// One row per book and threshold.
pub fn write_books_csv<W: Write>(reports: &[EvalReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        for b in &r.per_book {
            w.serialize(BookRow {
                threshold: r.threshold,
                book_id: &b.book_id,
                precision: b.precision,
                recall: b.recall,
                f1: b.f1,
                gold_size: b.gold_size,
                pred_size: b.pred_size,
                excluded_unseen: b.excluded_unseen,
            })?;
        }
    }
    w.flush().map_err(|e| Error::Csv(e.into()))
}

/// One row per threshold.
pub fn write_summary_csv<W: Write>(reports: &[EvalReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(SummaryRow {
            threshold: r.threshold,
            books: r.per_book.len(),
            skipped_books: r.skipped_books.len(),
            failed_books: r.failed_books.len(),
            macro_precision: r.macro_precision,
            macro_recall: r.macro_recall,
            macro_f1: r.macro_f1,
        })?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))
}

/// One row per populated extent class.
pub fn write_convergence_csv<W: Write>(study: &ConvergenceStudy, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in &study.rows {
        w.serialize(ConvergenceCsvRow {
            extent_class: r.extent_class.as_str(),
            books: r.books,
            pages_to_90pct: r.pages_to_90pct,
            pages_to_max: r.pages_to_max,
        })?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))
}
