//! Inverted index over training pages with BM25 ranking.
//!
//! ```text
//! score(q, d) = sum over distinct t in q of
//!     idf(t) * tf(t, d) * (k1 + 1) / (tf(t, d) + k1 * (1 - b + b * |d| / avgdl))
//! idf(t) = ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5))
//! ```

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::features::FeatureVector;
use crate::corpus::PageInstance;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Position of a page in the index; also the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PageId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageRef {
    pub book_id: String,
    pub page_no: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SimilarityIndex<T> {
    dim: usize,
    postings: BTreeMap<u32, Vec<(PageId, T)>>,
    /// Token count per page.
    page_lengths: Vec<T>,
    avg_length: T,
    pages: Vec<PageRef>,
    /// Interned label strings.
    labels: Vec<String>,
    page_labels: Vec<Vec<u32>>,
    pub bm25_k1: T,
    pub bm25_b: T,
}

impl<T: Scalar> SimilarityIndex<T> {
    pub fn doc_count(&self) -> usize {
        self.page_lengths.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn avg_length(&self) -> T {
        self.avg_length
    }

    pub fn page_length(&self, page: PageId) -> T {
        self.page_lengths[page.0 as usize]
    }

    pub fn page_ref(&self, page: PageId) -> &PageRef {
        &self.pages[page.0 as usize]
    }

    pub fn page_labels(&self, page: PageId) -> impl Iterator<Item = &str> {
        self.page_labels[page.0 as usize]
            .iter()
            .map(|&l| self.labels[l as usize].as_str())
    }

    /// Every label that occurs on at least one indexed page.
    pub fn label_set(&self) -> BTreeSet<&str> {
        self.page_labels
            .iter()
            .flatten()
            .map(|&l| self.labels[l as usize].as_str())
            .collect()
    }

    pub fn postings(&self, feature: u32) -> &[(PageId, T)] {
        self.postings.get(&feature).map_or(&[], Vec::as_slice)
    }

    pub fn document_frequency(&self, feature: u32) -> usize {
        self.postings(feature).len()
    }

    pub fn idf(&self, feature: u32) -> T {
        let n = T::of_usize(self.doc_count());
        let df = T::of_usize(self.document_frequency(feature));
        let half = T::of(0.5);
        (T::one() + (n - df + half) / (df + half)).ln()
    }

    fn term_score(&self, idf: T, tf: T, length: T) -> T {
        let k1 = self.bm25_k1;
        let norm = T::one() - self.bm25_b + self.bm25_b * length / self.avg_length;
        idf * tf * (k1 + T::one()) / (tf + k1 * norm)
    }

    /// BM25 score of every page for `query`, indexed by `PageId`.
    pub fn score_all(&self, query: &FeatureVector<T>) -> Vec<T> {
        let mut scores = vec![T::zero(); self.doc_count()];
        for &(feature, _) in query.entries() {
            let postings = self.postings(feature);
            if postings.is_empty() {
                continue;
            }
            let idf = self.idf(feature);
            for &(page, tf) in postings {
                let slot = &mut scores[page.0 as usize];
                *slot = *slot + self.term_score(idf, tf, self.page_length(page));
            }
        }
        scores
    }
}

/// Indexes training pages under their raw term-frequency vectors.
pub fn build_similarity_index<T: Scalar>(
    pages: &[(&PageInstance, &FeatureVector<T>)],
) -> Result<SimilarityIndex<T>> {
    if pages.is_empty() {
        return Err(Error::Config("cannot index an empty training set".into()));
    }
    let dim = pages[0].1.dim();
    let mut interned: BTreeMap<&str, u32> = BTreeMap::new();
    for (page, _) in pages {
        for l in &page.labels {
            let next = interned.len() as u32;
            interned.entry(l.as_str()).or_insert(next);
        }
    }
    let mut labels = vec![String::new(); interned.len()];
    for (l, &id) in &interned {
        labels[id as usize] = l.to_string();
    }

    let mut postings: BTreeMap<u32, Vec<(PageId, T)>> = BTreeMap::new();
    let mut page_lengths = Vec::with_capacity(pages.len());
    let mut refs = Vec::with_capacity(pages.len());
    let mut page_labels = Vec::with_capacity(pages.len());
    for (i, (page, fv)) in pages.iter().enumerate() {
        if fv.dim() != dim {
            return Err(Error::DimMismatch {
                model: dim,
                vector: fv.dim(),
            });
        }
        let id = PageId(i as u32);
        for &(feature, tf) in fv.entries() {
            postings.entry(feature).or_default().push((id, tf));
        }
        page_lengths.push(fv.total());
        refs.push(PageRef {
            book_id: page.book_id.clone(),
            page_no: page.page_no,
        });
        page_labels.push(page.labels.iter().map(|l| interned[l.as_str()]).collect());
    }
    let total: T = page_lengths.iter().copied().sum();
    let avg = total / T::of_usize(page_lengths.len());
    Ok(SimilarityIndex {
        dim,
        postings,
        page_lengths,
        // all-empty pages would otherwise divide by zero
        avg_length: if avg > T::zero() { avg } else { T::one() },
        pages: refs,
        labels,
        page_labels,
        bm25_k1: T::of(1.2),
        bm25_b: T::of(0.75),
    })
}

/// Top `m` pages by BM25 score, descending; equal scores in `PageId` order.
///
/// Pages sharing no feature with the query score zero and rank last, so with
/// `m >= doc_count` every page is returned.
pub fn most_similar<T: Scalar>(
    index: &SimilarityIndex<T>,
    query: &FeatureVector<T>,
    m: usize,
) -> Vec<(PageId, T)> {
    if query.is_empty() || m == 0 {
        return Vec::new();
    }
    let mut ranked: Vec<(PageId, T)> = index
        .score_all(query)
        .into_iter()
        .enumerate()
        .map(|(i, s)| (PageId(i as u32), s))
        .collect();
    let order = |a: &(PageId, T), b: &(PageId, T)| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    };
    if m < ranked.len() {
        ranked.select_nth_unstable_by(m - 1, order);
        ranked.truncate(m);
    }
    ranked.sort_by(order);
    ranked
}
