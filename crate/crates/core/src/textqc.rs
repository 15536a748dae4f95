//! Character-sequence quality gate for extracted page text.
//!
//! An order-k character Markov chain is trained on known-good text. A page is
//! scored by its average per-character log-likelihood; pages that score
//! below a calibrated threshold are treated as extraction garbage.
//!
//! Whitespace runs are collapsed to a single space (and trimmed) before both
//! training and scoring. While scoring, the context of the first `order`
//! characters wraps around to the end of the text, so every character is
//! scored with a full context and `score(t + t) == score(t)`.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MIN_TRAINING_CHARS: usize = 10_000;
pub const DEFAULT_ORDER: usize = 2;
pub const DEFAULT_ALPHA: f64 = 0.1;
const FORMAT_VERSION: u32 = 1;

/// Stand-in for every character outside the trained alphabet.
pub const OTHER: char = '\u{FFFD}';

/// Collapses whitespace runs to single spaces and trims the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq)]
struct ContextDist<T> {
    next: HashMap<u32, T>,
    /// Log probability of any symbol not seen after this context.
    unseen: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharModel<T> {
    order: usize,
    alpha: T,
    /// Sorted alphabet; symbol ids are positions here, `OTHER` is `alphabet.len()`.
    alphabet: Vec<char>,
    contexts: HashMap<u64, ContextDist<T>>,
}

impl<T: Scalar> CharModel<T> {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    /// Alphabet size including `OTHER`.
    pub fn symbol_count(&self) -> usize {
        self.alphabet.len() + 1
    }

    fn symbol(&self, c: char) -> u32 {
        match self.alphabet.binary_search(&c) {
            Ok(i) => i as u32,
            Err(_) => self.alphabet.len() as u32,
        }
    }

    fn context_key(&self, symbols: impl Iterator<Item = u32>) -> u64 {
        let base = self.symbol_count() as u64;
        symbols.fold(0u64, |acc, s| acc * base + s as u64)
    }

    fn decode_context(&self, mut key: u64) -> String {
        let base = self.symbol_count() as u64;
        let mut chars = vec![OTHER; self.order];
        for slot in chars.iter_mut().rev() {
            *slot = self.char_of((key % base) as u32);
            key /= base;
        }
        chars.into_iter().collect()
    }

    fn char_of(&self, symbol: u32) -> char {
        self.alphabet.get(symbol as usize).copied().unwrap_or(OTHER)
    }

    /// `log P(next | context)` where both are given as characters.
    pub fn log_prob(&self, context: &str, next: char) -> T {
        let key = self.context_key(context.chars().map(|c| self.symbol(c)));
        self.log_prob_symbols(key, self.symbol(next))
    }

    fn log_prob_symbols(&self, context: u64, next: u32) -> T {
        match self.contexts.get(&context) {
            Some(dist) => dist.next.get(&next).copied().unwrap_or(dist.unseen),
            None => -T::of_usize(self.symbol_count()).ln(),
        }
    }

    /// Iterates `(context, next, log_prob)` for every observed transition.
    pub fn entries(&self) -> impl Iterator<Item = (String, char, T)> + '_ {
        self.contexts.iter().flat_map(move |(&key, dist)| {
            let ctx = self.decode_context(key);
            dist.next
                .iter()
                .map(move |(&sym, &lp)| (ctx.clone(), self.char_of(sym), lp))
        })
    }

    /// Observed contexts with the log probability assigned to unseen successors.
    pub fn contexts(&self) -> impl Iterator<Item = (String, T, usize)> + '_ {
        self.contexts
            .iter()
            .map(move |(&key, d)| (self.decode_context(key), d.unseen, d.next.len()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(&CharModelFile::from_model(self))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str::<CharModelFile<T>>(&raw)?.into_model()
    }
}

/// On-disk table form of a [`CharModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CharModelFile<T> {
    pub version: u32,
    pub order: usize,
    pub alpha: T,
    pub alphabet: String,
    /// `(context, next char, log probability)`, sorted.
    pub entries: Vec<(String, char, T)>,
    /// `(context, log probability of unseen successors)`, sorted.
    pub contexts: Vec<(String, T)>,
}

impl<T: Scalar> CharModelFile<T> {
    pub fn from_model(model: &CharModel<T>) -> Self {
        let mut entries: Vec<_> = model.entries().collect();
        entries.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
        let mut contexts: Vec<_> = model.contexts().map(|(c, u, _)| (c, u)).collect();
        contexts.sort_by(|a, b| a.0.cmp(&b.0));
        CharModelFile {
            version: FORMAT_VERSION,
            order: model.order,
            alpha: model.alpha,
            alphabet: model.alphabet.iter().collect(),
            entries,
            contexts,
        }
    }

    pub fn into_model(self) -> Result<CharModel<T>> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Bundle(format!(
                "character model version {} (expected {FORMAT_VERSION})",
                self.version
            )));
        }
        let mut model = CharModel {
            order: self.order,
            alpha: self.alpha,
            alphabet: self.alphabet.chars().collect(),
            contexts: HashMap::new(),
        };
        if !model.alphabet.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Bundle("character model alphabet is not sorted".into()));
        }
        for (ctx, unseen) in self.contexts {
            let key = model.context_key(ctx.chars().map(|c| model.symbol(c)));
            model.contexts.insert(
                key,
                ContextDist {
                    next: HashMap::new(),
                    unseen,
                },
            );
        }
        for (ctx, next, lp) in self.entries {
            let key = model.context_key(ctx.chars().map(|c| model.symbol(c)));
            let sym = model.symbol(next);
            model
                .contexts
                .get_mut(&key)
                .ok_or_else(|| Error::Bundle(format!("entry for unknown context {ctx:?}")))?
                .next
                .insert(sym, lp);
        }
        Ok(model)
    }
}

/// Trains an add-alpha smoothed order-`order` character chain.
pub fn train_char_model<T: Scalar, S: AsRef<str>>(
    texts: &[S],
    order: usize,
    alpha: T,
) -> Result<CharModel<T>> {
    if order == 0 {
        return Err(Error::Config("character model order must be at least 1".into()));
    }
    if alpha <= T::zero() {
        return Err(Error::Config("smoothing alpha must be positive".into()));
    }
    let normalized: Vec<Vec<char>> = texts
        .iter()
        .map(|t| normalize_whitespace(t.as_ref()).chars().collect())
        .collect();
    let total: usize = normalized.iter().map(Vec::len).sum();
    if total < MIN_TRAINING_CHARS {
        return Err(Error::InsufficientText {
            needed: MIN_TRAINING_CHARS,
            got: total,
        });
    }
    let alphabet: Vec<char> = normalized
        .iter()
        .flatten()
        .copied()
        .filter(|&c| c != OTHER)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let symbols = alphabet.len() as u64 + 1;
    if (symbols as f64).powi(order as i32) >= u64::MAX as f64 {
        return Err(Error::Config(format!(
            "order {order} is too large for an alphabet of {symbols} symbols"
        )));
    }

    let mut model = CharModel {
        order,
        alpha,
        alphabet,
        contexts: HashMap::new(),
    };
    let mut counts: HashMap<u64, HashMap<u32, usize>> = HashMap::new();
    for text in &normalized {
        let syms: Vec<u32> = text.iter().map(|&c| model.symbol(c)).collect();
        for window in syms.windows(order + 1) {
            let key = model.context_key(window[..order].iter().copied());
            *counts
                .entry(key)
                .or_default()
                .entry(window[order])
                .or_default() += 1;
        }
    }

    let v = T::of_usize(model.symbol_count());
    for (key, next) in counts {
        let ctx_total = T::of_usize(next.values().sum());
        let denom = ctx_total + alpha * v;
        let dist = ContextDist {
            next: next
                .into_iter()
                .map(|(sym, n)| (sym, ((T::of_usize(n) + alpha) / denom).ln()))
                .collect(),
            unseen: (alpha / denom).ln(),
        };
        model.contexts.insert(key, dist);
    }
    Ok(model)
}

/// Average per-character log-likelihood of `text` under `model`.
pub fn score_text<T: Scalar>(model: &CharModel<T>, text: &str) -> Result<T> {
    let syms: Vec<u32> = normalize_whitespace(text)
        .chars()
        .map(|c| model.symbol(c))
        .collect();
    if syms.is_empty() {
        return Err(Error::EmptyText);
    }
    let len = syms.len();
    let order = model.order;
    let mut total = T::zero();
    for i in 0..len {
        let ctx = (0..order).map(|j| syms[(i + len * order - order + j) % len]);
        total = total + model.log_prob_symbols(model.context_key(ctx), syms[i]);
    }
    Ok(total / T::of_usize(len))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct QualityConfig<T> {
    /// Minimum average per-character log-likelihood.
    pub threshold: T,
    /// Shorter pages (after whitespace normalization) always fail.
    pub min_chars: usize,
}

impl<T: Scalar> QualityConfig<T> {
    pub fn new(threshold: T) -> Self {
        QualityConfig {
            threshold,
            min_chars: 40,
        }
    }
}

pub fn passes_quality<T: Scalar>(model: &CharModel<T>, cfg: &QualityConfig<T>, text: &str) -> bool {
    let normalized = normalize_whitespace(text);
    if normalized.chars().count() < cfg.min_chars.max(1) {
        return false;
    }
    matches!(score_text(model, &normalized), Ok(s) if s >= cfg.threshold)
}

/// `(true positive rate + true negative rate) / 2` where "positive" means
/// `score >= threshold`.
pub fn balanced_accuracy<T: Scalar>(good: &[T], bad: &[T], threshold: T) -> f64 {
    let tpr = good.iter().filter(|&&s| s >= threshold).count() as f64 / good.len().max(1) as f64;
    let tnr = bad.iter().filter(|&&s| s < threshold).count() as f64 / bad.len().max(1) as f64;
    (tpr + tnr) / 2.0
}

/// Threshold maximizing balanced accuracy over `good` vs `bad` scores.
///
/// Candidates are the lowest observed score and every midpoint between
/// adjacent distinct scores; ties go to the lowest candidate.
pub fn calibrate_from_scores<T: Scalar>(good: &[T], bad: &[T]) -> Result<T> {
    if good.is_empty() || bad.is_empty() {
        return Err(Error::Config(
            "threshold calibration needs good and bad examples".into(),
        ));
    }
    let mut all: Vec<T> = good.iter().chain(bad).copied().collect();
    all.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    all.dedup();
    let two = T::of(2.0);
    let candidates =
        std::iter::once(all[0]).chain(all.windows(2).map(|w| (w[0] + w[1]) / two));

    let mut best = (f64::NEG_INFINITY, all[0]);
    for t in candidates {
        let acc = balanced_accuracy(good, bad, t);
        if acc > best.0 {
            best = (acc, t);
        }
    }
    Ok(best.1)
}

pub fn calibrate_threshold<T: Scalar, S: AsRef<str>>(
    model: &CharModel<T>,
    good: &[S],
    bad: &[S],
) -> Result<T> {
    let score_all = |texts: &[S]| -> Vec<T> {
        texts
            .iter()
            .filter_map(|t| score_text(model, t.as_ref()).ok())
            .collect()
    };
    calibrate_from_scores(&score_all(good), &score_all(bad))
}
