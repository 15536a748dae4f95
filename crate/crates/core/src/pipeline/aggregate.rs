//! Page-level predictions to ranked keywords: `f = t / n`.

use std::collections::{BTreeMap, HashSet};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::corpus::Category;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordResult {
    pub term: String,
    pub category: Category,
    /// Pages that predicted the term.
    pub t: u32,
    /// Pages used.
    #[serde(rename = "n")]
    pub n_used: u32,
    /// `t / n_used`, rounded to the nearest `f64`.
    pub f: f64,
    /// Mean classifier probability over the pages that predicted the term.
    pub mean_prob: f64,
}

impl KeywordResult {
    /// Exact page-hit frequency.
    pub fn frequency(&self) -> Ratio<u32> {
        Ratio::new(self.t, self.n_used)
    }

    /// `f >= threshold`. `f` is the correctly rounded `t / n`, so a ratio
    /// equal to the decimal threshold (4/10 against 0.4) always passes.
    pub fn passes(&self, threshold: f64) -> bool {
        self.f >= threshold
    }
}

/// Counts, for every term, the pages predicting it.
///
/// A term listed twice for one page counts once; its first probability is
/// used. Result is sorted by `f` descending, then `mean_prob` descending,
/// then term.
pub fn aggregate<P: AsRef<str>>(
    page_predictions: &[Vec<(P, f64)>],
    categories: &BTreeMap<String, Category>,
) -> Vec<KeywordResult> {
    let n_used = page_predictions.len() as u32;
    let mut tally: BTreeMap<&str, (u32, f64)> = BTreeMap::new();
    for page in page_predictions {
        let mut seen = HashSet::new();
        for (term, p) in page {
            let term = term.as_ref();
            if seen.insert(term) {
                let e = tally.entry(term).or_insert((0, 0.0));
                e.0 += 1;
                e.1 += p;
            }
        }
    }
    let mut out: Vec<KeywordResult> = tally
        .into_iter()
        .map(|(term, (t, sum))| KeywordResult {
            term: term.to_string(),
            category: categories.get(term).copied().unwrap_or(Category::Topic),
            t,
            n_used,
            f: t as f64 / n_used as f64,
            mean_prob: sum / t as f64,
        })
        .collect();
    sort_keywords(&mut out);
    out
}

pub fn sort_keywords(keywords: &mut [KeywordResult]) {
    keywords.sort_by(|a, b| {
        b.frequency()
            .cmp(&a.frequency())
            .then_with(|| b.mean_prob.total_cmp(&a.mean_prob))
            .then_with(|| a.term.cmp(&b.term))
    });
}

/// Keeps keywords with `f >= threshold`, preserving order.
pub fn apply_threshold(keywords: &[KeywordResult], threshold: f64) -> Vec<KeywordResult> {
    keywords
        .iter()
        .filter(|k| k.passes(threshold))
        .cloned()
        .collect()
}
