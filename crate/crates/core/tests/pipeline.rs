mod common;

use std::collections::{BTreeMap, BTreeSet};

use kratt_core::corpus::{BookRecord, Category};
use kratt_core::pipeline::{
    aggregate, index_book, index_book_unfiltered, index_source, sample_indices, sample_pages,
    to_marc21, write_text_pdf, IndexingConfig, KeywordResult, Step,
};
use kratt_core::Error;
use num_rational::Ratio;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const THRESHOLDS: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

#[test]
fn sampling_is_uniform() {
    // chi-square over index occurrence, 19 degrees of freedom; 43.82 is the
    // 0.999 quantile
    let (total, k, trials) = (20usize, 5usize, 20_000u64);
    let mut hits = vec![0f64; total];
    let mut first = vec![0f64; total];
    for seed in 0..trials {
        let s = sample_indices(total, k, seed);
        for &i in &s {
            hits[i] += 1.0;
        }
        first[s[0]] += 1.0;
    }
    let chi2 = |obs: &[f64], expected: f64| {
        obs.iter().map(|o| (o - expected).powi(2) / expected).sum::<f64>()
    };
    let all = chi2(&hits, trials as f64 * k as f64 / total as f64);
    let head = chi2(&first, trials as f64 / total as f64);
    assert!(all < 43.82, "chi2 {all}");
    assert!(head < 43.82, "chi2 {head}");
}

fn random_predictions(rng: &mut ChaCha8Rng, pages: usize) -> Vec<Vec<(String, f64)>> {
    (0..pages)
        .map(|_| {
            (0..rng.random_range(0..6))
                .map(|_| (format!("t{}", rng.random_range(0..8)), rng.random_range(0.5..1.0)))
                .collect()
        })
        .collect()
}

#[test]
fn aggregation_matches_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let cats: BTreeMap<String, Category> = [("t3".to_string(), Category::Location)].into();
    for _ in 0..500 {
        let n = rng.random_range(1..25);
        let preds = random_predictions(&mut rng, n);
        let out = aggregate(&preds, &cats);
        let mut recount: BTreeMap<&str, u32> = BTreeMap::new();
        for page in &preds {
            let distinct: BTreeSet<&str> = page.iter().map(|(t, _)| t.as_str()).collect();
            for t in distinct {
                *recount.entry(t).or_default() += 1;
            }
        }
        assert_eq!(out.len(), recount.len());
        for k in &out {
            assert_eq!(k.t, recount[k.term.as_str()]);
            assert_eq!(k.n_used as usize, n);
            assert_eq!(k.frequency() * Ratio::from_integer(k.n_used), Ratio::from_integer(k.t));
            assert_eq!(k.f, k.t as f64 / n as f64);
            assert!(k.mean_prob >= 0.5 && k.mean_prob < 1.0);
            let want = if k.term == "t3" { Category::Location } else { Category::Topic };
            assert_eq!(k.category, want);
        }
        assert!(out.windows(2).all(|w| w[0].frequency() >= w[1].frequency()));
    }
}

#[test]
fn marc_export_matches_golden_file() {
    let kw = |term: &str, category| KeywordResult {
        term: term.into(),
        category,
        t: 1,
        n_used: 1,
        f: 1.0,
        mean_prob: 0.9,
    };
    let selected = [
        kw("majandus", Category::Topic),
        kw("Tallinn", Category::Location),
        kw("20. sajand", Category::Time),
        kw("romaanid", Category::GenreForm),
        kw("Kross, Jaan", Category::Person),
        kw("Tartu Ülikool", Category::Collective),
        kw("laulupidu", Category::Event),
    ];
    assert_eq!(to_marc21(&selected), include_str!("data/golden.marc"));
}

#[test]
fn index_book_respects_sampling_and_steps() {
    let f = common::fixture();
    for book in f.test.iter().take(8) {
        let cfg = IndexingConfig {
            seed: 4,
            ..IndexingConfig::default()
        };
        let mut steps = Vec::new();
        let out = index_book(&f.bundle, book, &cfg, &mut |s| steps.push(s)).unwrap();
        assert_eq!(out.pages_sampled.len(), book.pages.len().min(15));
        assert!(out.pages_used <= 10 && out.pages_used > 0);
        assert!(out.pages_used + out.pages_failed_qc <= out.pages_sampled.len());
        assert!(steps.windows(2).all(|w| w[0] < w[1]), "{steps:?}");
        assert_eq!(steps.first(), Some(&Step::Sampling));
        assert_eq!(steps.last(), Some(&Step::Finished));
        assert!(out.keywords.iter().all(|k| k.f >= 0.4));
        let total: f64 = out.language_distribution.values().sum();
        assert!((total - 1.0).abs() < 1e-9);
        let again = index_book(&f.bundle, book, &cfg, &mut |_| {}).unwrap();
        assert_eq!(out.keywords, again.keywords);
        assert_eq!(out.pages_sampled, again.pages_sampled);
    }
}

#[test]
fn thresholds_nest_on_indexed_books() {
    let f = common::fixture();
    for book in &f.test {
        let out = index_book_unfiltered(&f.bundle, book, &IndexingConfig::default(), &mut |_| {})
            .unwrap();
        let sets: Vec<BTreeSet<String>> = THRESHOLDS
            .iter()
            .map(|&t| out.filtered(t).terms().into_iter().map(String::from).collect())
            .collect();
        for w in sets.windows(2) {
            assert!(w[1].is_subset(&w[0]), "book {}", book.id);
        }
        assert_eq!(sets[0].len(), out.keywords.len());
    }
}

#[test]
fn planted_topics_are_found() {
    let f = common::fixture();
    let mut found = 0;
    for book in &f.test {
        let out = index_book(&f.bundle, book, &IndexingConfig::default(), &mut |_| {}).unwrap();
        let main = &book.subjects[0].term;
        found += out.terms().contains(&main.as_str()) as usize;
    }
    assert!(found * 10 >= f.test.len() * 7, "{found}/{}", f.test.len());
}

#[test]
fn pdf_and_text_sources_index_like_the_record() {
    let f = common::fixture();
    let book = &f.test[3];
    let cfg = IndexingConfig::default();
    let direct = index_book_unfiltered(&f.bundle, book, &cfg, &mut |_| {}).unwrap();

    let text = book.pages.join("\u{000C}");
    let mut steps = Vec::new();
    let from_text =
        index_source(&f.bundle, text.as_bytes(), Some("raamat.txt"), &cfg, &mut |s| steps.push(s))
            .unwrap();
    assert_eq!(steps[0], Step::Converting);
    assert_eq!(from_text.pages_sampled, direct.pages_sampled);
    assert_eq!(from_text.terms(), direct.terms());

    let pdf = write_text_pdf(&book.pages).unwrap();
    let from_pdf = index_source(&f.bundle, &pdf, Some("raamat.pdf"), &cfg, &mut |_| {}).unwrap();
    assert_eq!(from_pdf.pages_sampled, direct.pages_sampled);
    let main = &book.subjects[0].term;
    assert_eq!(
        from_pdf.terms().contains(&main.as_str()),
        direct.terms().contains(&main.as_str())
    );

    let err = index_source(&f.bundle, b"%PDF-1.4 broken", None, &cfg, &mut |_| {}).unwrap_err();
    assert!(matches!(err, Error::UnsupportedSource(_)), "{err:?}");
}

#[test]
fn garbage_only_book_has_no_usable_text() {
    let f = common::fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let book = BookRecord {
        id: "junk".into(),
        title: String::new(),
        language: "und".into(),
        author_birth_year: None,
        pages: (0..20).map(|_| kratt_core::synth::garbage(500, &mut rng)).collect(),
        subjects: Vec::new(),
    };
    let err = index_book(&f.bundle, &book, &IndexingConfig::default(), &mut |_| {}).unwrap_err();
    assert!(matches!(err, Error::NoUsableText { sampled: 15 }), "{err:?}");
    let bad = IndexingConfig {
        threshold: 1.5,
        ..IndexingConfig::default()
    };
    assert!(index_book(&f.bundle, &f.test[0], &bad, &mut |_| {}).is_err());
}

proptest! {
    #[test]
    fn samples_are_nested_prefixes(total in 0usize..400, k in 0usize..60, seed in any::<u64>()) {
        let small = sample_indices(total, k, seed);
        let large = sample_indices(total, k + 7, seed);
        prop_assert_eq!(small.len(), k.min(total));
        prop_assert_eq!(&large[..small.len()], &small[..]);
        let distinct: BTreeSet<usize> = large.iter().copied().collect();
        prop_assert_eq!(distinct.len(), large.len());
        prop_assert!(large.iter().all(|&i| i < total));
    }

    #[test]
    fn sampled_pages_carry_their_text(n in 1usize..80, k in 1usize..20, seed in any::<u64>()) {
        let pages: Vec<String> = (0..n).map(|i| format!("page {i}")).collect();
        for (no, text) in sample_pages(&pages, k, 5, seed) {
            prop_assert_eq!(text, format!("page {}", no - 1));
        }
    }

    #[test]
    fn threshold_filters_nest(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let preds = random_predictions(&mut rng, n);
        let out = aggregate(&preds, &BTreeMap::new());
        let mut previous: Option<BTreeSet<String>> = None;
        for &t in &THRESHOLDS {
            let kept: BTreeSet<String> =
                out.iter().filter(|k| k.passes(t)).map(|k| k.term.clone()).collect();
            for k in &out {
                // decision agrees with the exact ratio against the decimal threshold
                let exact = Ratio::new(k.t as u64 * 10, k.n_used as u64) >= Ratio::from_integer((t * 10.0).round() as u64);
                prop_assert_eq!(k.passes(t), exact);
            }
            if let Some(p) = &previous {
                prop_assert!(kept.is_subset(p));
            }
            previous = Some(kept);
        }
    }
}
