use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use log::debug;

use super::Pos;
use crate::error::{Error, Result};

/// Lemmatizer and part-of-speech provider for lowercased, NFC-normalized words.
pub trait Analyzer: Send + Sync {
    /// Dictionary form of `word`; must not be empty.
    fn lemma(&self, lang: &str, word: &str) -> String;

    fn pos(&self, _lang: &str, _word: &str) -> Option<Pos> {
        None
    }
}

/// Leaves every word as its own lemma.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityAnalyzer;

impl Analyzer for IdentityAnalyzer {
    fn lemma(&self, _lang: &str, word: &str) -> String {
        word.to_string()
    }
}

#[derive(Debug, Clone, Default)]
pub struct LanguageRules {
    lemmas: HashMap<String, String>,
    /// Longest suffix first.
    suffixes: Vec<(String, String)>,
    pos: HashMap<String, Pos>,
}

impl LanguageRules {
    pub fn new(
        lemmas: impl IntoIterator<Item = (String, String)>,
        suffixes: impl IntoIterator<Item = (String, String)>,
        pos: impl IntoIterator<Item = (String, Pos)>,
    ) -> Self {
        let mut suffixes: Vec<_> = suffixes.into_iter().collect();
        suffixes.sort_by(|a, b| {
            b.0.chars()
                .count()
                .cmp(&a.0.chars().count())
                .then_with(|| a.0.cmp(&b.0))
        });
        LanguageRules {
            lemmas: lemmas.into_iter().collect(),
            suffixes,
            pos: pos.into_iter().collect(),
        }
    }

    pub fn suffix_rules(&self) -> &[(String, String)] {
        &self.suffixes
    }
}

/// Dictionary lookup with a longest-suffix-strip fallback, per language.
///
/// Languages without rules, and words no rule applies to, keep their surface
/// form as lemma.
#[derive(Debug, Clone)]
pub struct RuleAnalyzer {
    langs: BTreeMap<String, LanguageRules>,
    /// Characters a stem must keep after stripping a suffix.
    pub min_stem: usize,
}

const BUILTIN: &[(&str, &str, &str, &str)] = &[
    (
        "en",
        include_str!("../../data/analyzers/en.lemmas.tsv"),
        include_str!("../../data/analyzers/en.suffixes.tsv"),
        include_str!("../../data/analyzers/en.pos.tsv"),
    ),
    (
        "et",
        include_str!("../../data/analyzers/et.lemmas.tsv"),
        include_str!("../../data/analyzers/et.suffixes.tsv"),
        include_str!("../../data/analyzers/et.pos.tsv"),
    ),
];

impl Default for RuleAnalyzer {
    fn default() -> Self {
        RuleAnalyzer::empty()
    }
}

impl RuleAnalyzer {
    pub fn empty() -> Self {
        RuleAnalyzer {
            langs: BTreeMap::new(),
            min_stem: 3,
        }
    }

    /// Rule tables shipped with the crate (Estonian and English).
    pub fn builtin() -> Self {
        let mut analyzer = RuleAnalyzer::empty();
        for (lang, lemmas, suffixes, pos) in BUILTIN {
            let rules = parse_rules(lemmas, suffixes, pos, lang)
                .expect("builtin analyzer tables are well formed");
            analyzer.insert(*lang, rules);
        }
        analyzer
    }

    /// Loads `<lang>.lemmas.tsv`, `<lang>.suffixes.tsv` and `<lang>.pos.tsv`
    /// from `dir`; any of the three may be missing.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut found: BTreeMap<String, [String; 3]> = BTreeMap::new();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            let Some((lang, kind)) = name.strip_suffix(".tsv").and_then(|n| n.split_once('.'))
            else {
                continue;
            };
            let slot = match kind {
                "lemmas" => 0,
                "suffixes" => 1,
                "pos" => 2,
                _ => continue,
            };
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            found.entry(lang.to_string()).or_default()[slot] = text;
        }
        let mut analyzer = RuleAnalyzer::empty();
        for (lang, [lemmas, suffixes, pos]) in found {
            debug!("loaded analyzer rules for {lang}");
            let rules = parse_rules(&lemmas, &suffixes, &pos, &lang)?;
            analyzer.insert(lang, rules);
        }
        Ok(analyzer)
    }

    pub fn insert(&mut self, lang: impl Into<String>, rules: LanguageRules) {
        self.langs.insert(lang.into(), rules);
    }

    pub fn rules(&self, lang: &str) -> Option<&LanguageRules> {
        self.langs.get(lang)
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.langs.keys().map(String::as_str)
    }
}

impl Analyzer for RuleAnalyzer {
    fn lemma(&self, lang: &str, word: &str) -> String {
        let Some(rules) = self.langs.get(lang) else {
            return word.to_string();
        };
        if let Some(lemma) = rules.lemmas.get(word) {
            return lemma.clone();
        }
        let len = word.chars().count();
        for (suffix, replacement) in &rules.suffixes {
            let suffix_len = suffix.chars().count();
            if len >= suffix_len + self.min_stem {
                if let Some(stem) = word.strip_suffix(suffix.as_str()) {
                    return format!("{stem}{replacement}");
                }
            }
        }
        word.to_string()
    }

    fn pos(&self, lang: &str, word: &str) -> Option<Pos> {
        self.langs.get(lang)?.pos.get(word).copied()
    }
}

fn tsv_pairs<'a>(
    text: &'a str,
    what: &'a str,
    lang: &'a str,
    allow_empty_value: bool,
) -> impl Iterator<Item = Result<(String, String)>> + 'a {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(move |(i, line)| {
            let (key, value) = line.split_once('\t').unwrap_or((line, ""));
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() || (value.is_empty() && !allow_empty_value) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("{lang}.{what}.tsv: expected two tab-separated columns"),
                });
            }
            Ok((key.to_lowercase(), value.to_lowercase()))
        })
}

pub fn parse_rules(lemmas: &str, suffixes: &str, pos: &str, lang: &str) -> Result<LanguageRules> {
    let lemmas = tsv_pairs(lemmas, "lemmas", lang, false).collect::<Result<Vec<_>>>()?;
    let suffixes = tsv_pairs(suffixes, "suffixes", lang, true).collect::<Result<Vec<_>>>()?;
    let pos = tsv_pairs(pos, "pos", lang, false)
        .map(|r| {
            r.and_then(|(word, tag)| {
                Pos::parse(&tag)
                    .map(|p| (word, p))
                    .ok_or_else(|| Error::Config(format!("{lang}.pos.tsv: unknown tag {tag:?}")))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LanguageRules::new(lemmas, suffixes, pos))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_tables_parse() {
        let a = RuleAnalyzer::builtin();
        assert_eq!(a.languages().collect::<Vec<_>>(), ["en", "et"]);
        let et = a.rules("et").unwrap();
        // longest first
        assert_eq!(et.suffix_rules()[0].0.chars().count(), 5);
    }

    #[test]
    fn dictionary_beats_suffix_rules() {
        let a = RuleAnalyzer::builtin();
        assert_eq!(a.lemma("en", "ran"), "run");
        assert_eq!(a.lemma("en", "cities"), "city");
        assert_eq!(a.lemma("et", "raamatud"), "raamat");
    }

    #[test]
    fn short_stems_are_left_alone() {
        let a = RuleAnalyzer::builtin();
        // "nad" would leave a two-letter stem
        assert_eq!(a.lemma("et", "nad"), "nad");
        assert_eq!(a.lemma("xx", "whatever"), "whatever");
    }

    #[test]
    fn malformed_lemma_line_is_reported() {
        let err = parse_rules("ran\n", "", "", "en").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(parse_rules("", "", "run\tVERBISH", "en").is_err());
    }

    #[test]
    fn load_dir_reads_tables() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("fi.lemmas.tsv"), "kirjat\tkirja\n").unwrap();
        std::fs::write(dir.path().join("fi.suffixes.tsv"), "ssa\t\n").unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let a = RuleAnalyzer::load_dir(dir.path()).unwrap();
        assert_eq!(a.lemma("fi", "kirjat"), "kirja");
        assert_eq!(a.lemma("fi", "talossa"), "talo");
        assert_eq!(a.pos("fi", "talo"), None);
    }
}
