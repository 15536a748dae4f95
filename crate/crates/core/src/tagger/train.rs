use std::collections::BTreeMap;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{stable_hash, FeatureVector};
use super::logreg::{train_label_model, LabelModel, TrainHyper};
use crate::corpus::TrainingSet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeSampling {
    /// Negatives drawn per positive.
    pub ratio: usize,
    pub max_negatives: usize,
}

impl Default for NegativeSampling {
    fn default() -> Self {
        NegativeSampling {
            ratio: 3,
            max_negatives: 10_000,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainedModels<T> {
    pub models: BTreeMap<String, LabelModel<T>>,
    /// Labels that could not be trained (too few negatives), with the reason.
    pub dropped: Vec<(String, String)>,
}

/// Trains one classifier per vocabulary label, in parallel.
///
/// `features[i]` is the raw term-frequency vector of `ts.pages[i]`;
/// classifiers see L2-normalized copies. Negatives are drawn uniformly
/// without replacement from pages not carrying the label, seeded per label
/// from `hyper.seed` so results do not depend on thread scheduling.
pub fn train_models<T: Scalar>(
    ts: &TrainingSet,
    features: &[FeatureVector<T>],
    hyper: &TrainHyper<T>,
    sampling: &NegativeSampling,
) -> Result<TrainedModels<T>> {
    if features.len() != ts.pages.len() {
        return Err(Error::Config(format!(
            "{} feature vectors for {} pages",
            features.len(),
            ts.pages.len()
        )));
    }
    let normalized: Vec<FeatureVector<T>> =
        features.par_iter().map(FeatureVector::l2_normalized).collect();
    let mut pages_of: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, page) in ts.pages.iter().enumerate() {
        for label in &page.labels {
            pages_of.entry(label.as_str()).or_default().push(i);
        }
    }

    let results: Vec<(String, Result<LabelModel<T>>)> = ts
        .vocabulary
        .par_iter()
        .map(|term| {
            let positives_idx = pages_of.get(term.as_str()).map_or(&[][..], Vec::as_slice);
            let seed = hyper.seed ^ stable_hash(term.as_bytes());
            let negatives_idx = sample_negatives(
                ts.pages.len(),
                positives_idx,
                (positives_idx.len() * sampling.ratio).min(sampling.max_negatives),
                seed,
            );
            let positives: Vec<FeatureVector<T>> =
                positives_idx.iter().map(|&i| normalized[i].clone()).collect();
            let negatives: Vec<FeatureVector<T>> =
                negatives_idx.iter().map(|&i| normalized[i].clone()).collect();
            let label_hyper = TrainHyper { seed, ..*hyper };
            (
                term.clone(),
                train_label_model(term, &positives, &negatives, &label_hyper),
            )
        })
        .collect();

    let mut out = TrainedModels {
        models: BTreeMap::new(),
        dropped: Vec::new(),
    };
    for (term, result) in results {
        match result {
            Ok(model) => {
                out.models.insert(term, model);
            }
            Err(Error::Training { message, .. }) => {
                warn!("dropping label {term:?}: {message}");
                out.dropped.push((term, message));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Up to `count` sorted page indices in `0..total` that are not in `positives`
/// (which must be sorted).
fn sample_negatives(total: usize, positives: &[usize], count: usize, seed: u64) -> Vec<usize> {
    let available = total - positives.len();
    let count = count.min(available);
    if count == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ranks = rand::seq::index::sample(&mut rng, available, count).into_vec();
    ranks.sort_unstable();
    // Map the r-th non-positive rank onto its page index.
    let mut out = Vec::with_capacity(count);
    let mut pos = positives.iter().peekable();
    let mut ranks = ranks.into_iter().peekable();
    let mut rank = 0;
    for page in 0..total {
        if pos.peek() == Some(&&page) {
            pos.next();
            continue;
        }
        while ranks.peek() == Some(&rank) {
            out.push(page);
            ranks.next();
        }
        if ranks.peek().is_none() {
            break;
        }
        rank += 1;
    }
    out
}
