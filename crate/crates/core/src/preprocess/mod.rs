//! Per-page language identification and lemma/POS tokenization.

mod analyzer;
mod langid;

pub use analyzer::{parse_rules, Analyzer, IdentityAnalyzer, LanguageRules, RuleAnalyzer};
pub use langid::{
    build_language_profiles, detect_language, trigram_counts, Detection, LanguageProfile,
    DEFAULT_TOP_K, MIN_DETECT_CHARS, MIN_SAMPLE_CHARS, UNDETERMINED,
};

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;
use unicode_segmentation::UnicodeSegmentation;

/// Lemma assigned to every numeral.
pub const NUM_LEMMA: &str = "<num>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Noun,
    Verb,
    Adj,
    Adv,
    Pron,
    Num,
    Propn,
    Other,
}

impl Pos {
    pub fn as_str(self) -> &'static str {
        match self {
            Pos::Noun => "NOUN",
            Pos::Verb => "VERB",
            Pos::Adj => "ADJ",
            Pos::Adv => "ADV",
            Pos::Pron => "PRON",
            Pos::Num => "NUM",
            Pos::Propn => "PROPN",
            Pos::Other => "OTHER",
        }
    }

    pub fn parse(tag: &str) -> Option<Pos> {
        Some(match tag.to_ascii_uppercase().as_str() {
            "NOUN" => Pos::Noun,
            "VERB" => Pos::Verb,
            "ADJ" => Pos::Adj,
            "ADV" => Pos::Adv,
            "PRON" => Pos::Pron,
            "NUM" => Pos::Num,
            "PROPN" => Pos::Propn,
            "OTHER" => Pos::Other,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub lemma: String,
    pub pos: Option<Pos>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedPage {
    pub lang: String,
    pub lang_confidence: f64,
    pub tokens: Vec<Token>,
}

impl TokenizedPage {
    /// Feature strings for the page: every lemma, plus `pos:<TAG>` for tagged
    /// tokens.
    pub fn feature_tokens(&self) -> impl Iterator<Item = String> + '_ {
        self.tokens.iter().flat_map(|t| {
            std::iter::once(t.lemma.clone()).chain(t.pos.map(|p| format!("pos:{}", p.as_str())))
        })
    }
}

fn is_numeral(word: &str) -> bool {
    word.chars().any(|c| c.is_numeric())
        && word
            .chars()
            .all(|c| c.is_numeric() || matches!(c, '.' | ',' | '\'' | '-'))
}

/// Segments `text` into words and lemmatizes each with `analyzer`.
pub fn analyze(text: &str, detection: &Detection, analyzer: &dyn Analyzer) -> TokenizedPage {
    let lang = detection.lang.as_str();
    let tokens = text
        .unicode_words()
        .map(|word| {
            let surface: String = word.nfc().flat_map(char::to_lowercase).collect::<String>();
            let surface: String = surface.nfc().collect();
            if is_numeral(&surface) {
                return Token {
                    surface,
                    lemma: NUM_LEMMA.to_string(),
                    pos: Some(Pos::Num),
                };
            }
            let lemma: String = analyzer.lemma(lang, &surface).nfc().flat_map(char::to_lowercase).collect();
            let lemma = if lemma.is_empty() { surface.clone() } else { lemma };
            let pos = analyzer.pos(lang, &surface);
            Token {
                surface,
                lemma,
                pos,
            }
        })
        .collect();
    TokenizedPage {
        lang: detection.lang.clone(),
        lang_confidence: detection.confidence,
        tokens,
    }
}
