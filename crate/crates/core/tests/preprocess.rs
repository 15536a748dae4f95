use std::collections::{BTreeMap, HashMap};

use kratt_core::preprocess::{
    analyze, build_language_profiles, detect_language, trigram_counts, Analyzer, Detection,
    LanguageProfile, Pos, RuleAnalyzer, DEFAULT_TOP_K, NUM_LEMMA,
};
use kratt_core::synth::{prose, words_for};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Trigrams of lowercased text with non-letter runs as single spaces,
/// counted by sliding over the whole string.
fn oracle_trigrams(text: &str) -> HashMap<String, usize> {
    let lowered: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphabetic() { c } else { ' ' })
        .collect();
    let squeezed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    let chars: Vec<char> = squeezed.chars().collect();
    let mut out = HashMap::new();
    for i in 0..chars.len().saturating_sub(2) {
        *out.entry(chars[i..i + 3].iter().collect()).or_default() += 1;
    }
    out
}

#[test]
fn trigram_counts_match_oracle() {
    for text in [
        "Tere, maailm! Tere taas.",
        "  The 3 quick foxes -- jumped.  ",
        "Öösel sõitis rong üle jõe",
        "ab",
        "",
        "Мама мыла раму 12 раз",
    ] {
        assert_eq!(trigram_counts(text), oracle_trigrams(text), "{text:?}");
    }
}

fn profiles(seed: u64) -> Vec<LanguageProfile<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: BTreeMap<String, Vec<String>> = ["et", "en", "ru"]
        .iter()
        .map(|l| {
            let texts = (0..20).map(|_| prose(words_for(l), 1000, &mut rng)).collect();
            (l.to_string(), texts)
        })
        .collect();
    build_language_profiles(&samples, DEFAULT_TOP_K).unwrap()
}

#[test]
fn language_id_accuracy_on_three_languages() {
    let p = profiles(1);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut correct = 0;
    let mut total = 0;
    for lang in ["et", "en", "ru"] {
        for _ in 0..100 {
            let page = prose(words_for(lang), 300, &mut rng);
            correct += (detect_language(&p, &page).lang == lang) as usize;
            total += 1;
        }
    }
    let acc = correct as f64 / total as f64;
    assert!(acc >= 0.95, "accuracy {acc}");
}

#[test]
fn detection_is_deterministic_with_confidence_in_range() {
    let p = profiles(2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let page = prose(words_for("et"), 400, &mut rng);
    let a = detect_language(&p, &page);
    assert_eq!(a, detect_language(&p, &page));
    assert!((0.0..=1.0).contains(&a.confidence));
    assert_eq!(detect_language(&p, "12345 67890 12345 67890 !!").lang, "und");
}

#[test]
fn estonian_suffix_stripping() {
    let a = RuleAnalyzer::builtin();
    // longest suffix wins
    assert_eq!(a.lemma("et", "majadega"), "maja");
    assert_eq!(a.lemma("et", "majadesse"), "maja");
    assert_eq!(a.lemma("et", "raamatuga"), "raamatu");
    // the stem keeps at least three characters
    assert_eq!(a.lemma("et", "tes"), "tes");
    // dictionary beats suffix rules
    assert_eq!(a.lemma("et", "oli"), "olema");
    assert_eq!(a.lemma("en", "cities"), "city");
    // unknown language is left alone
    assert_eq!(a.lemma("fi", "taloissa"), "taloissa");
}

#[test]
fn analysis_lowercases_and_tags_numbers() {
    let a = RuleAnalyzer::builtin();
    let d = Detection {
        lang: "et".into(),
        confidence: 1.0,
    };
    let page = analyze("Majadesse tuli 1920. aastal 3,5 MA", &d, &a);
    let lemmas: Vec<&str> = page.tokens.iter().map(|t| t.lemma.as_str()).collect();
    assert_eq!(lemmas[0], "maja");
    assert!(lemmas.contains(&NUM_LEMMA));
    assert!(page.tokens.iter().filter(|t| t.pos == Some(Pos::Num)).count() >= 2);
    assert!(page.tokens.iter().any(|t| t.surface == "ma" && t.pos == Some(Pos::Pron)));
    let features: Vec<String> = page.feature_tokens().collect();
    assert!(features.contains(&"pos:NUM".to_string()));
}

proptest! {
    #[test]
    fn lemmas_are_never_empty(word in "[a-zäöõü]{1,12}") {
        let a = RuleAnalyzer::builtin();
        for lang in ["et", "en", "xx"] {
            let l = a.lemma(lang, &word);
            prop_assert!(!l.is_empty());
            prop_assert!(l.chars().count() <= word.chars().count() + 1);
        }
    }

    #[test]
    fn trigram_total_matches_length(text in "[a-zA-Z ,.!0-9]{0,60}") {
        let total: usize = trigram_counts(&text).values().sum();
        let oracle: usize = oracle_trigrams(&text).values().sum();
        prop_assert_eq!(total, oracle);
    }
}
