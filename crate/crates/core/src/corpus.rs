//! Annotated book corpus: JSONL ingestion, page exploding and rare-label
//! filtering.
//!
//! Every page of a training book inherits the book's whole subject set, so a
//! book with 456 pages contributes 456 examples to each of its labels.
//! Labels from excluded categories (persons, collectives and events by
//! default) are dropped before any counting happens.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::stats::Summary;

/// Books outside this range of subject counts are unusual and logged.
const TYPICAL_SUBJECTS: std::ops::RangeInclusive<usize> = 1..=35;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Topic,
    Location,
    Time,
    GenreForm,
    Person,
    Collective,
    Event,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Topic,
        Category::Location,
        Category::Time,
        Category::GenreForm,
        Category::Person,
        Category::Collective,
        Category::Event,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Topic => "topic",
            Category::Location => "location",
            Category::Time => "time",
            Category::GenreForm => "genre_form",
            Category::Person => "person",
            Category::Collective => "collective",
            Category::Event => "event",
        }
    }
}

/// A controlled-vocabulary label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ThesaurusTerm {
    pub term: String,
    pub category: Category,
}

impl ThesaurusTerm {
    pub fn new(term: impl Into<String>, category: Category) -> Self {
        ThesaurusTerm {
            term: normalize(&term.into()).trim().to_string(),
            category,
        }
    }
}

/// One annotated book as stored in the corpus JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookRecord {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default = "undetermined")]
    pub language: String,
    #[serde(default)]
    pub author_birth_year: Option<i32>,
    pub pages: Vec<String>,
    #[serde(default)]
    pub subjects: Vec<ThesaurusTerm>,
}

fn undetermined() -> String {
    "und".to_string()
}

fn normalize(s: &str) -> String {
    s.nfc().collect()
}

impl BookRecord {
    /// NFC-normalizes every text field and drops duplicate subjects, keeping
    /// the first occurrence.
    pub fn normalized(mut self) -> Self {
        self.title = normalize(&self.title);
        for page in &mut self.pages {
            *page = normalize(page);
        }
        let mut seen = BTreeSet::new();
        self.subjects = self
            .subjects
            .into_iter()
            .map(|s| ThesaurusTerm::new(s.term, s.category))
            .filter(|s| seen.insert(s.term.clone()))
            .collect();
        self
    }

    pub fn subject_keys(&self) -> BTreeSet<String> {
        self.subjects.iter().map(|s| s.term.clone()).collect()
    }
}

/// Reads a corpus JSONL file. Blank lines are skipped.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<BookRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<BookRecord>> {
    let mut books = Vec::new();
    let mut first_seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let book: BookRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let book = book.normalized();
        validate_book(&book, line_no)?;
        if let Some(&first) = first_seen.get(&book.id) {
            return Err(Error::DuplicateId {
                id: book.id,
                first,
                second: line_no,
            });
        }
        first_seen.insert(book.id.clone(), line_no);
        books.push(book);
    }
    Ok(books)
}

fn validate_book(book: &BookRecord, line: usize) -> Result<()> {
    if book.id.is_empty() {
        return Err(Error::Parse {
            line,
            message: "empty book id".into(),
        });
    }
    if let Some(s) = book.subjects.iter().find(|s| s.term.is_empty()) {
        return Err(Error::Parse {
            line,
            message: format!("empty subject term ({})", s.category.as_str()),
        });
    }
    if book.pages.is_empty() {
        warn!("line {line}: book {:?} has no pages", book.id);
    }
    if !TYPICAL_SUBJECTS.contains(&book.subjects.len()) {
        warn!(
            "line {line}: book {:?} has {} subjects",
            book.id,
            book.subjects.len()
        );
    }
    Ok(())
}

/// A single training page carrying its book's (post-exclusion) labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageInstance {
    pub book_id: String,
    /// 1-based.
    pub page_no: u32,
    pub text: String,
    pub labels: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub min_examples: usize,
    pub excluded_categories: BTreeSet<Category>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            min_examples: 50,
            excluded_categories: [Category::Person, Category::Collective, Category::Event]
                .into_iter()
                .collect(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_examples == 0 {
            return Err(Error::Config("min_examples must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrainingSet {
    pub pages: Vec<PageInstance>,
    /// Page-instance count per label.
    pub label_counts: BTreeMap<String, usize>,
    pub vocabulary: BTreeSet<String>,
    pub categories: BTreeMap<String, Category>,
}

impl TrainingSet {
    pub fn category(&self, term: &str) -> Option<Category> {
        self.categories.get(term).copied()
    }
}

/// Splits books into labeled pages.
///
/// Books without pages are skipped. Books whose every subject falls in an
/// excluded category contribute no pages at all.
pub fn explode_to_pages(books: &[BookRecord], cfg: &TrainingConfig) -> Result<TrainingSet> {
    cfg.validate()?;
    let mut ts = TrainingSet::default();
    for book in books {
        if book.pages.is_empty() {
            warn!("skipping book {:?}: no pages", book.id);
            continue;
        }
        let mut labels = BTreeSet::new();
        for subject in &book.subjects {
            if cfg.excluded_categories.contains(&subject.category) {
                continue;
            }
            match ts.categories.get(&subject.term) {
                Some(&c) if c != subject.category => warn!(
                    "term {:?} appears as both {} and {}; keeping {}",
                    subject.term,
                    c.as_str(),
                    subject.category.as_str(),
                    c.as_str()
                ),
                Some(_) => {}
                None => {
                    ts.categories.insert(subject.term.clone(), subject.category);
                }
            }
            labels.insert(subject.term.clone());
        }
        if labels.is_empty() {
            warn!(
                "skipping book {:?}: no subjects left after category exclusion",
                book.id
            );
            continue;
        }
        for label in &labels {
            *ts.label_counts.entry(label.clone()).or_default() += book.pages.len();
        }
        ts.pages.extend(book.pages.iter().enumerate().map(|(i, text)| PageInstance {
            book_id: book.id.clone(),
            page_no: i as u32 + 1,
            text: text.clone(),
            labels: labels.clone(),
        }));
    }
    ts.vocabulary = ts.label_counts.keys().cloned().collect();
    Ok(ts)
}

/// Keeps labels with at least `min_examples` page instances (inclusive).
///
/// Pages that lose all their labels stay in the set as negative-only material.
pub fn filter_labels(mut ts: TrainingSet, min_examples: usize) -> Result<TrainingSet> {
    if min_examples == 0 {
        return Err(Error::Config("min_examples must be at least 1".into()));
    }
    ts.label_counts.retain(|_, count| *count >= min_examples);
    if ts.label_counts.is_empty() {
        return Err(Error::EmptyVocabulary { min_examples });
    }
    ts.vocabulary = ts.label_counts.keys().cloned().collect();
    let vocabulary = &ts.vocabulary;
    for page in &mut ts.pages {
        page.labels.retain(|l| vocabulary.contains(l));
    }
    ts.categories.retain(|term, _| vocabulary.contains(term));
    Ok(ts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub books: usize,
    /// Fraction of books per language code.
    pub language_distribution: BTreeMap<String, f64>,
    /// Number of books each unique label is assigned to.
    pub label_frequency: Summary,
    pub label_frequency_by_category: BTreeMap<Category, Summary>,
    pub labels_per_book: Summary,
    pub extent: Summary,
    pub author_birth_year: Option<Summary>,
}

pub fn corpus_stats(books: &[BookRecord]) -> Result<CorpusStats> {
    if books.is_empty() {
        return Err(Error::Config("corpus_stats needs a non-empty corpus".into()));
    }
    let n = books.len() as f64;

    let mut languages: BTreeMap<String, usize> = BTreeMap::new();
    let mut label_books: BTreeMap<&str, (Category, usize)> = BTreeMap::new();
    for book in books {
        *languages.entry(book.language.clone()).or_default() += 1;
        let unique: BTreeMap<&str, Category> = book
            .subjects
            .iter()
            .map(|s| (s.term.as_str(), s.category))
            .collect();
        for (term, category) in unique {
            label_books.entry(term).or_insert((category, 0)).1 += 1;
        }
    }

    let mut by_category: BTreeMap<Category, Vec<usize>> = BTreeMap::new();
    for (category, count) in label_books.values() {
        by_category.entry(*category).or_default().push(*count);
    }
    let empty = Summary::of(&[0.0]).expect("non-empty");

    let birth_years: Vec<f64> = books
        .iter()
        .filter_map(|b| b.author_birth_year.map(f64::from))
        .collect();

    Ok(CorpusStats {
        books: books.len(),
        language_distribution: languages
            .into_iter()
            .map(|(lang, count)| (lang, count as f64 / n))
            .collect(),
        label_frequency: Summary::of_counts(label_books.values().map(|(_, c)| *c))
            .unwrap_or(empty),
        label_frequency_by_category: by_category
            .into_iter()
            .filter_map(|(c, counts)| Summary::of_counts(counts).map(|s| (c, s)))
            .collect(),
        labels_per_book: Summary::of_counts(
            books
                .iter()
                .map(|b| b.subjects.iter().map(|s| &s.term).collect::<BTreeSet<_>>().len()),
        )
        .unwrap_or(empty),
        extent: Summary::of_counts(books.iter().map(|b| b.pages.len())).unwrap_or(empty),
        author_birth_year: Summary::of(&birth_years),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn book(id: &str, pages: usize, subjects: &[(&str, Category)]) -> BookRecord {
        BookRecord {
            id: id.into(),
            title: String::new(),
            language: "et".into(),
            author_birth_year: None,
            pages: (0..pages).map(|i| format!("page {i}")).collect(),
            subjects: subjects
                .iter()
                .map(|(t, c)| ThesaurusTerm::new(*t, *c))
                .collect(),
        }
    }

    #[test]
    fn parses_two_records() {
        let data = r#"{"id":"b1","title":"A","language":"et","author_birth_year":1950,"pages":["x"],"subjects":[{"term":"majandus","category":"topic"}]}
{"id":"b2","title":"B","language":"en","author_birth_year":null,"pages":["y","z"],"subjects":[{"term":"London","category":"location"}]}
"#;
        let books = parse_corpus(data.as_bytes()).unwrap();
        assert_eq!(books.len(), 2);
        assert_eq!(books[0].id, "b1");
        assert_eq!(books[1].pages.len(), 2);
        assert_eq!(books[1].subjects[0].category, Category::Location);
    }

    #[test]
    fn duplicate_id_names_both_lines() {
        let data = "{\"id\":\"b1\",\"pages\":[\"x\"]}\n\n{\"id\":\"b1\",\"pages\":[\"y\"]}\n";
        match parse_corpus(data.as_bytes()) {
            Err(Error::DuplicateId { id, first, second }) => {
                assert_eq!((id.as_str(), first, second), ("b1", 1, 3));
            }
            other => panic!("expected duplicate id error, got {other:?}"),
        }
    }

    #[test]
    fn missing_pages_is_parse_error_with_line() {
        let data = "{\"id\":\"b1\",\"pages\":[\"x\"]}\n{\"id\":\"b2\",\"subjects\":[]}\n";
        match parse_corpus(data.as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("pages"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_category_rejected() {
        let data = r#"{"id":"b1","pages":["x"],"subjects":[{"term":"a","category":"mood"}]}"#;
        assert!(matches!(
            parse_corpus(data.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn load_applies_nfc() {
        // "o" + combining diaeresis composes to "ö".
        let data = "{\"id\":\"b\",\"pages\":[\"to\u{0308}o\u{0308}\"],\"subjects\":[{\"term\":\"to\u{0308}o\u{0308}\",\"category\":\"topic\"}]}";
        let books = parse_corpus(data.as_bytes()).unwrap();
        assert_eq!(books[0].pages[0], "töö");
        assert_eq!(books[0].subjects[0].term, "töö");
    }

    #[test]
    fn book_of_456_pages_contributes_456_examples_per_label() {
        let b = book(
            "b",
            456,
            &[
                ("a", Category::Topic),
                ("b", Category::Location),
                ("c", Category::GenreForm),
            ],
        );
        let ts = explode_to_pages(&[b], &TrainingConfig::default()).unwrap();
        assert_eq!(ts.pages.len(), 456);
        for term in ["a", "b", "c"] {
            assert_eq!(ts.label_counts[term], 456);
        }
        assert_eq!(ts.pages[455].page_no, 456);
    }

    #[test]
    fn single_page_book() {
        let ts = explode_to_pages(
            &[book("b", 1, &[("a", Category::Topic)])],
            &TrainingConfig::default(),
        )
        .unwrap();
        assert_eq!(ts.pages.len(), 1);
        assert_eq!(ts.pages[0].labels.len(), 1);
    }

    #[test]
    fn person_only_book_contributes_nothing() {
        let books = [
            book("p", 5, &[("Tammsaare, A. H.", Category::Person)]),
            book("t", 3, &[("a", Category::Topic), ("X", Category::Event)]),
        ];
        let ts = explode_to_pages(&books, &TrainingConfig::default()).unwrap();
        assert_eq!(ts.pages.len(), 3);
        assert!(ts.pages.iter().all(|p| p.book_id == "t"));
        let recount = ts.pages.iter().filter(|p| p.labels.contains("a")).count();
        assert_eq!(ts.label_counts["a"], recount);
        assert!(!ts.label_counts.contains_key("X"));
        assert!(!ts.label_counts.contains_key("Tammsaare, A. H."));
    }

    #[test]
    fn zero_page_book_skipped() {
        let ts = explode_to_pages(
            &[book("e", 0, &[("a", Category::Topic)]), book("b", 2, &[("a", Category::Topic)])],
            &TrainingConfig::default(),
        )
        .unwrap();
        assert_eq!(ts.pages.len(), 2);
    }

    #[test]
    fn min_examples_boundary_is_inclusive() {
        let books = [
            book("x", 49, &[("rare", Category::Topic)]),
            book("y", 50, &[("edge", Category::Topic)]),
        ];
        let ts = explode_to_pages(&books, &TrainingConfig::default()).unwrap();
        let ts = filter_labels(ts, 50).unwrap();
        assert_eq!(ts.vocabulary, ["edge".to_string()].into_iter().collect());
        // pages of the dropped label stay as unlabeled material
        assert_eq!(ts.pages.len(), 99);
        assert_eq!(ts.pages.iter().filter(|p| p.labels.is_empty()).count(), 49);
        assert!(!ts.categories.contains_key("rare"));
    }

    #[test]
    fn three_term_filter() {
        let books = [
            book("x", 10, &[("t10", Category::Topic)]),
            book("y", 50, &[("t50", Category::Topic)]),
            book("z", 400, &[("t400", Category::Topic)]),
        ];
        let ts = explode_to_pages(&books, &TrainingConfig::default()).unwrap();
        let ts = filter_labels(ts, 50).unwrap();
        let v: Vec<&str> = ts.vocabulary.iter().map(String::as_str).collect();
        assert_eq!(v, ["t400", "t50"]);
    }

    #[test]
    fn empty_vocabulary_is_error() {
        let ts = explode_to_pages(&[book("x", 3, &[("a", Category::Topic)])], &TrainingConfig::default())
            .unwrap();
        assert!(matches!(
            filter_labels(ts, 4),
            Err(Error::EmptyVocabulary { min_examples: 4 })
        ));
    }

    #[test]
    fn stats_degenerate_single_book() {
        let s = corpus_stats(&[book("b", 1, &[("a", Category::Topic)])]).unwrap();
        assert_eq!(s.language_distribution["et"], 1.0);
        assert_eq!(s.label_frequency.median, 1.0);
        assert_eq!(s.labels_per_book.mean, 1.0);
        assert_eq!(s.extent.median, 1.0);
        assert_eq!(s.label_frequency_by_category[&Category::Topic].max, 1.0);
        assert!(s.author_birth_year.is_none());
        assert!(corpus_stats(&[]).is_err());
    }
}
