//! Candidate reduction: only the labels that are most frequent among the
//! `similar_docs` nearest training pages get their classifier evaluated.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::features::FeatureVector;
use super::index::{most_similar, PageId, SimilarityIndex};
use super::logreg::{predict_prob, LabelModel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    /// Number of nearest training pages to draw candidates from.
    pub similar_docs: usize,
    /// Maximum number of labels whose classifier is evaluated.
    pub candidate_cap: usize,
    /// Minimum classifier probability for a positive prediction.
    pub decision_prob: f64,
}

impl Default for HybridConfig {
    fn default() -> Self {
        HybridConfig {
            similar_docs: 20,
            candidate_cap: 20,
            decision_prob: 0.5,
        }
    }
}

impl HybridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.similar_docs == 0 || self.candidate_cap == 0 {
            return Err(Error::Config(
                "similar_docs and candidate_cap must be at least 1".into(),
            ));
        }
        if !(self.decision_prob > 0.0 && self.decision_prob < 1.0) {
            return Err(Error::Config("decision_prob must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Labels ranked by how many of the `similar` pages carry them.
///
/// Equal counts are ordered by summed similarity score (descending), then by
/// term.
pub fn candidate_tags<T: Scalar>(
    similar: &[(PageId, T)],
    index: &SimilarityIndex<T>,
    cap: usize,
) -> Vec<String> {
    let mut tally: HashMap<&str, (usize, T)> = HashMap::new();
    for &(page, score) in similar {
        for label in index.page_labels(page) {
            let entry = tally.entry(label).or_insert((0, T::zero()));
            entry.0 += 1;
            entry.1 = entry.1 + score;
        }
    }
    let mut ranked: Vec<(&str, (usize, T))> = tally.into_iter().collect();
    ranked.sort_by(|a, b| {
        b.1 .0
            .cmp(&a.1 .0)
            .then_with(|| {
                b.1 .1
                    .partial_cmp(&a.1 .1)
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .then_with(|| a.0.cmp(b.0))
    });
    ranked
        .into_iter()
        .take(cap)
        .map(|(term, _)| term.to_string())
        .collect()
}

/// Predicts the labels of one page.
///
/// `fv` is the page's raw term-frequency vector: it queries the similarity
/// index as is and is L2-normalized before it reaches the classifiers.
/// Returns `(term, probability)` in candidate order.
pub fn predict_page<T: Scalar>(
    models: &BTreeMap<String, LabelModel<T>>,
    index: &SimilarityIndex<T>,
    cfg: &HybridConfig,
    fv: &FeatureVector<T>,
) -> Result<Vec<(String, T)>> {
    if fv.is_empty() {
        return Ok(Vec::new());
    }
    let similar = most_similar(index, fv, cfg.similar_docs);
    let candidates = candidate_tags(&similar, index, cfg.candidate_cap);
    let x = fv.l2_normalized();
    let cutoff = T::of(cfg.decision_prob);
    let mut out = Vec::new();
    for term in candidates {
        let model = models
            .get(&term)
            .ok_or_else(|| Error::MissingModel(term.clone()))?;
        let p = predict_prob(model, &x)?;
        if p >= cutoff {
            out.push((term, p));
        }
    }
    Ok(out)
}

/// Trained classifiers, the page index and the reduction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Tagger<T> {
    pub models: BTreeMap<String, LabelModel<T>>,
    pub index: SimilarityIndex<T>,
    pub cfg: HybridConfig,
}

impl<T: Scalar> Tagger<T> {
    /// Fails if some label in the index lacks a classifier.
    pub fn new(
        models: BTreeMap<String, LabelModel<T>>,
        index: SimilarityIndex<T>,
        cfg: HybridConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if let Some(missing) = index.label_set().into_iter().find(|l| !models.contains_key(*l)) {
            return Err(Error::MissingModel(missing.to_string()));
        }
        Ok(Tagger { models, index, cfg })
    }

    pub fn predict(&self, fv: &FeatureVector<T>) -> Result<Vec<(String, T)>> {
        predict_page(&self.models, &self.index, &self.cfg, fv)
    }

    pub fn with_config(&self, cfg: HybridConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Tagger {
            cfg,
            ..self.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PageInstance;
    use crate::tagger::features::featurize_tokens;
    use crate::tagger::index::build_similarity_index;

    fn page(labels: &[&str]) -> PageInstance {
        PageInstance {
            book_id: "b".into(),
            page_no: 1,
            text: String::new(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn small_index() -> SimilarityIndex<f64> {
        let pages = [page(&["A", "B"]), page(&["A"]), page(&["C"])];
        let fvs: Vec<FeatureVector<f64>> = ["x y", "x z", "w"]
            .iter()
            .map(|t| featurize_tokens(t.split_whitespace(), 64))
            .collect();
        let pairs: Vec<_> = pages.iter().zip(fvs.iter()).collect();
        build_similarity_index(&pairs).unwrap()
    }

    #[test]
    fn counts_then_similarity_then_term() {
        let index = small_index();
        let similar = [(PageId(0), 3.0), (PageId(1), 2.0), (PageId(2), 1.0)];
        assert_eq!(candidate_tags(&similar, &index, 2), ["A", "B"]);
        assert_eq!(candidate_tags(&similar, &index, 1), ["A"]);
        // B and C tie on count; C wins on summed score
        let similar = [(PageId(0), 1.0), (PageId(1), 2.0), (PageId(2), 5.0)];
        assert_eq!(candidate_tags(&similar, &index, 3), ["A", "C", "B"]);
        // full tie falls back to the term
        let similar = [(PageId(0), 0.0), (PageId(2), 0.0)];
        assert_eq!(candidate_tags(&similar, &index, 3), ["A", "B", "C"]);
        assert!(candidate_tags(&[], &index, 3).is_empty());
    }

    #[test]
    fn empty_page_predicts_nothing() {
        let index = small_index();
        let models: BTreeMap<_, _> = ["A", "B", "C"]
            .iter()
            .map(|t| (t.to_string(), LabelModel::zero(*t, 64)))
            .collect();
        let out = predict_page(&models, &index, &HybridConfig::default(), &FeatureVector::empty(64))
            .unwrap();
        assert!(out.is_empty());
        // zero models give exactly 0.5, which passes the inclusive cutoff
        let fv = featurize_tokens(["x"], 64);
        let out = predict_page(&models, &index, &HybridConfig::default(), &fv).unwrap();
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn missing_model_is_integrity_error() {
        let index = small_index();
        let models: BTreeMap<_, _> = [("A".to_string(), LabelModel::zero("A", 64))].into();
        let fv = featurize_tokens(["w"], 64);
        assert!(matches!(
            predict_page(&models, &index, &HybridConfig::default(), &fv),
            Err(Error::MissingModel(_))
        ));
        assert!(Tagger::new(models, index, HybridConfig::default()).is_err());
    }

    #[test]
    fn config_bounds() {
        assert!(HybridConfig::default().validate().is_ok());
        let bad = HybridConfig {
            candidate_cap: 0,
            ..HybridConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = HybridConfig {
            decision_prob: 1.0,
            ..HybridConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
