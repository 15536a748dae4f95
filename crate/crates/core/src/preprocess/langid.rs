use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_TOP_K: usize = 3000;
pub const MIN_SAMPLE_CHARS: usize = 5000;
/// Shorter texts are reported as undetermined.
pub const MIN_DETECT_CHARS: usize = 20;
pub const UNDETERMINED: &str = "und";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LanguageProfile<T> {
    pub lang: String,
    /// Top-K character trigrams with their relative frequency in the sample.
    pub trigram_freqs: BTreeMap<String, T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub lang: String,
    /// Winning cosine similarity minus the runner-up, clamped to `[0, 1]`.
    pub confidence: f64,
}

impl Detection {
    pub fn undetermined() -> Self {
        Detection {
            lang: UNDETERMINED.to_string(),
            confidence: 0.0,
        }
    }
}

/// Lowercases and maps every run of non-letters to one space, so inner word
/// boundaries take part in trigrams.
fn trigram_text(text: &str) -> Vec<char> {
    let mut out: Vec<char> = Vec::with_capacity(text.len());
    for c in text.nfc().flat_map(char::to_lowercase) {
        let c = if c.is_alphabetic() { c } else { ' ' };
        if c == ' ' && out.last().is_none_or(|&l| l == ' ') {
            continue;
        }
        out.push(c);
    }
    if out.last() == Some(&' ') {
        out.pop();
    }
    out
}

/// Raw trigram counts of `text`.
pub fn trigram_counts(text: &str) -> HashMap<String, usize> {
    let chars = trigram_text(text);
    let mut counts = HashMap::new();
    for w in chars.windows(3) {
        *counts.entry(w.iter().collect::<String>()).or_default() += 1;
    }
    counts
}

pub fn build_language_profiles<T: Scalar, S: AsRef<str>>(
    samples: &BTreeMap<String, Vec<S>>,
    top_k: usize,
) -> Result<Vec<LanguageProfile<T>>> {
    let mut profiles = Vec::with_capacity(samples.len());
    for (lang, texts) in samples {
        let chars: usize = texts.iter().map(|t| t.as_ref().chars().count()).sum();
        if chars < MIN_SAMPLE_CHARS {
            return Err(Error::InsufficientLanguageSample {
                lang: lang.clone(),
                needed: MIN_SAMPLE_CHARS,
                got: chars,
            });
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for (g, c) in trigram_counts(text.as_ref()) {
                *counts.entry(g).or_default() += c;
            }
        }
        let total: usize = counts.values().sum();
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(top_k.max(1));
        profiles.push(LanguageProfile {
            lang: lang.clone(),
            trigram_freqs: ranked
                .into_iter()
                .map(|(g, c)| (g, T::of_usize(c) / T::of_usize(total.max(1))))
                .collect(),
        });
    }
    Ok(profiles)
}

fn cosine<T: Scalar>(text: &HashMap<String, usize>, text_norm: f64, profile: &LanguageProfile<T>) -> f64 {
    let mut dot = 0.0;
    let mut profile_sq = 0.0;
    for (g, &p) in &profile.trigram_freqs {
        let p = p.as_f64();
        profile_sq += p * p;
        if let Some(&c) = text.get(g) {
            dot += c as f64 * p;
        }
    }
    if dot == 0.0 {
        return 0.0;
    }
    dot / (text_norm * profile_sq.sqrt())
}

/// Picks the profile with the highest trigram cosine similarity.
///
/// Ties go to the lexicographically smallest language code. Texts shorter
/// than [`MIN_DETECT_CHARS`], or sharing no trigram with any profile, are
/// undetermined.
pub fn detect_language<T: Scalar>(profiles: &[LanguageProfile<T>], text: &str) -> Detection {
    if profiles.is_empty() || text.trim().chars().count() < MIN_DETECT_CHARS {
        return Detection::undetermined();
    }
    let counts = trigram_counts(text);
    let norm = counts
        .values()
        .map(|&c| (c * c) as f64)
        .sum::<f64>()
        .sqrt();
    let mut scored: Vec<(f64, &str)> = profiles
        .iter()
        .map(|p| (cosine(&counts, norm, p), p.lang.as_str()))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    let (top, lang) = scored[0];
    if top <= 0.0 {
        return Detection::undetermined();
    }
    let runner_up = scored.get(1).map_or(0.0, |s| s.0);
    Detection {
        lang: lang.to_string(),
        confidence: (top - runner_up).clamp(0.0, 1.0),
    }
}
