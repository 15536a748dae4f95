//! Seeded synthetic text and corpora for demos, tests and benchmarks.
//!
//! Planted-topic corpora mix a shared background vocabulary with a small set
//! of pseudo-words owned by each topic, so the correct labels of every page
//! are known by construction.

use std::collections::HashSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{BookRecord, Category, ThesaurusTerm};

pub const ET_WORDS: &[&str] = &[
    "ja", "on", "ei", "et", "see", "ta", "oli", "mis", "kui", "ka", "aga", "siis", "nii", "oma",
    "veel", "või", "mida", "kes", "seda", "kõik", "ning", "juba", "üks", "kas", "nad", "ma",
    "tema", "meie", "nende", "olla", "olid", "saab", "võib", "peab", "tuleb", "läks", "tegi",
    "ütles", "aasta", "aastal", "päev", "aeg", "inimene", "inimesed", "elu", "maa", "riik",
    "linn", "küla", "kodu", "maja", "tee", "töö", "kool", "raamat", "keel", "sõna", "lugu",
    "asi", "koht", "osa", "pool", "vesi", "mets", "meri", "jõgi", "põld", "ilm", "öö", "hommik",
    "õhtu", "suur", "väike", "uus", "vana", "hea", "halb", "ilus", "pikk", "lühike", "kõrge",
    "madal", "valge", "must", "punane", "roheline", "sinine", "noor", "tugev", "nõrk", "kiire",
    "palju", "vähe", "väga", "alati", "mitte", "kunagi", "täna", "homme", "eile", "nüüd",
    "praegu", "hiljem", "enne", "pärast", "koos", "üksi", "ainult", "isegi", "just", "ikka",
    "jälle", "sest", "kuigi", "kuni", "nagu", "vaid", "ehk", "samuti", "eriti", "eelkõige",
    "lisaks", "näiteks", "seega", "ometi", "peaaegu", "mõni", "iga", "teine", "kolmas",
    "esimene", "viimane", "kogu", "sama", "selline", "mõtlema", "teadma", "nägema", "kuulma",
    "rääkima", "kirjutama", "lugema", "elama", "minema", "tulema", "andma", "võtma", "panema",
    "jääma", "hakkama", "pidama", "saama", "olema", "tegema", "laps", "ema", "isa", "poeg",
    "tütar", "sõber", "naine", "mees", "perekond", "rahvas", "ajalugu", "kultuur", "teadus",
    "kunst", "muusika", "laul", "pilt", "loodus", "taevas", "päike", "kuu", "täht", "tuli",
    "tuul", "lumi", "vihm", "talv", "kevad", "suvi", "sügis",
];

pub const EN_WORDS: &[&str] = &[
    "the", "of", "and", "to", "in", "a", "is", "that", "for", "it", "as", "was", "with", "be",
    "by", "on", "not", "he", "this", "are", "or", "his", "from", "at", "which", "but", "have",
    "an", "had", "they", "you", "were", "their", "one", "all", "we", "can", "her", "has",
    "there", "been", "if", "more", "when", "will", "would", "who", "so", "no", "out", "up",
    "into", "than", "them", "some", "could", "time", "these", "only", "new", "other", "people",
    "about", "many", "may", "then", "its", "my", "first", "also", "any", "after", "like", "our",
    "over", "years", "way", "work", "world", "life", "day", "long", "great", "little", "own",
    "old", "right", "big", "high", "different", "small", "large", "next", "early", "young",
    "important", "few", "public", "bad", "same", "able", "house", "water", "place", "city",
    "country", "school", "book", "story", "family", "child", "children", "river", "forest",
    "sea", "morning", "evening", "night", "winter", "summer", "history", "language", "music",
    "nature", "state", "government", "war", "money", "land", "road", "church", "village",
    "friend", "mother", "father", "always", "never", "often", "still", "again", "here",
    "where", "because", "while", "through", "between", "under", "against", "without",
    "before", "during", "should", "must", "said", "made", "know", "think", "see", "come",
    "take", "give", "find", "tell", "become", "leave", "feel", "bring", "begin", "keep", "hold",
    "write", "stand", "hear", "let", "mean", "set", "meet", "run", "pay", "sit", "speak",
    "read", "grow", "open", "walk", "win", "teach", "offer", "remember",
];

pub const RU_WORDS: &[&str] = &[
    "и", "в", "не", "на", "я", "что", "он", "с", "как", "а", "то", "все", "она", "так", "его",
    "но", "да", "ты", "к", "у", "же", "вы", "за", "бы", "по", "только", "ее", "мне", "было",
    "вот", "от", "меня", "еще", "нет", "о", "из", "ему", "теперь", "когда", "даже", "ну",
    "вдруг", "ли", "если", "уже", "или", "ни", "быть", "был", "него", "до", "вас", "опять",
    "уж", "вам", "ведь", "там", "потом", "себя", "ничего", "ей", "может", "они", "тут", "где",
    "есть", "надо", "ней", "для", "мы", "тебя", "их", "чем", "была", "сам", "без", "будто",
    "чего", "раз", "тоже", "себе", "под", "будет", "тогда", "кто", "этот", "того", "потому",
    "этого", "какой", "совсем", "ним", "здесь", "этом", "один", "почти", "мой", "тем",
    "чтобы", "нее", "сейчас", "были", "куда", "зачем", "всех", "никогда", "можно", "при",
    "наконец", "два", "об", "другой", "хоть", "после", "над", "больше", "тот", "через", "эти",
    "нас", "про", "всего", "них", "какая", "много", "разве", "три", "эту", "моя", "впрочем",
    "хорошо", "свою", "этой", "перед", "иногда", "лучше", "чуть", "том", "нельзя", "такой",
    "им", "более", "всегда", "конечно", "всю", "между", "город", "книга", "история", "земля",
    "вода", "жизнь", "время", "человек", "дом", "дорога", "лес", "река", "море", "утро",
    "вечер", "ночь", "зима", "лето", "школа", "семья", "друг", "мать", "отец", "работа",
    "язык", "музыка", "природа", "государство",
];

const ALNUM: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";

pub fn words_for(lang: &str) -> &'static [&'static str] {
    match lang {
        "en" => EN_WORDS,
        "ru" => RU_WORDS,
        _ => ET_WORDS,
    }
}

/// Zipf-like weights (`1 / (rank + 1)`), so function words dominate.
fn zipf(n: usize) -> WeightedIndex<f64> {
    WeightedIndex::new((0..n).map(|r| 1.0 / (r as f64 + 1.0))).expect("non-empty vocabulary")
}

/// Sentences drawn from a word list, at least `min_chars` characters long.
pub fn prose<R: Rng>(words: &[&str], min_chars: usize, rng: &mut R) -> String {
    let dist = zipf(words.len());
    let mut out = String::new();
    while out.chars().count() < min_chars {
        let len = rng.random_range(5..15);
        let sentence: Vec<&str> = (0..len).map(|_| words[dist.sample(rng)]).collect();
        push_sentence(&mut out, &sentence, rng);
    }
    out
}

fn push_sentence<R: Rng>(out: &mut String, words: &[&str], rng: &mut R) {
    if !out.is_empty() {
        out.push(' ');
    }
    for (i, w) in words.iter().enumerate() {
        if i == 0 {
            let mut chars = w.chars();
            if let Some(first) = chars.next() {
                out.extend(first.to_uppercase());
                out.push_str(chars.as_str());
            }
        } else {
            if i + 1 < words.len() && rng.random_bool(0.08) {
                out.push(',');
            }
            out.push(' ');
            out.push_str(w);
        }
    }
    out.push('.');
}

/// Uniform random alphanumeric string, the shape of failed text extraction.
pub fn garbage<R: Rng>(len: usize, rng: &mut R) -> String {
    (0..len)
        .map(|_| ALNUM[rng.random_range(0..ALNUM.len())] as char)
        .collect()
}

/// Pseudo-words built from Estonian-like syllables, distinct from each other
/// and from every entry of `avoid`.
pub fn pseudo_words<R: Rng>(count: usize, avoid: &HashSet<String>, rng: &mut R) -> Vec<String> {
    const ONSETS: &[&str] = &["k", "l", "m", "n", "p", "r", "s", "t", "v", "j", "h", "", "kr", "st"];
    const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ä", "õ", "ö", "ü", "aa", "ee", "ii", "uu"];
    const CODAS: &[&str] = &["", "", "", "n", "s", "t", "l", "r", "k"];
    let mut seen = avoid.clone();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let syllables = rng.random_range(2..=4);
        let mut word = String::new();
        for _ in 0..syllables {
            word.push_str(ONSETS.choose(rng).unwrap());
            word.push_str(VOWELS.choose(rng).unwrap());
        }
        word.push_str(CODAS.choose(rng).unwrap());
        if word.chars().count() >= 4 && seen.insert(word.clone()) {
            out.push(word);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub topics: usize,
    pub books_per_topic: usize,
    pub min_pages: usize,
    pub max_pages: usize,
    pub words_per_page: usize,
    pub words_per_topic: usize,
    /// Probability that a word on a page comes from the book's main topic.
    pub topic_share: f64,
    /// Probability that a book also carries a second topic.
    pub secondary_prob: f64,
    /// Share of the second topic's words on each page of such a book.
    pub secondary_share: f64,
    /// Pages with background text only (front matter, indexes).
    pub plain_page_rate: f64,
    /// Pages replaced by extraction garbage.
    pub garbage_page_rate: f64,
    /// Fraction of books written with the English background vocabulary.
    pub english_rate: f64,
    /// Probability that a book also lists an author (person) subject.
    pub person_subject_prob: f64,
    /// Seeds the topic vocabularies; keep it fixed across train/test splits.
    pub vocab_seed: u64,
    /// Seeds the books themselves.
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            topics: 50,
            books_per_topic: 10,
            min_pages: 30,
            max_pages: 200,
            words_per_page: 120,
            words_per_topic: 30,
            topic_share: 0.3,
            secondary_prob: 0.3,
            secondary_share: 0.15,
            plain_page_rate: 0.05,
            garbage_page_rate: 0.02,
            english_rate: 0.2,
            person_subject_prob: 0.3,
            vocab_seed: 7,
            seed: 1,
        }
    }
}

/// The controlled vocabulary and word lists behind a planted corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTopics {
    pub terms: Vec<ThesaurusTerm>,
    pub words: Vec<Vec<String>>,
}

impl PlantedTopics {
    pub fn new(topics: usize, words_per_topic: usize, vocab_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(vocab_seed);
        let avoid: HashSet<String> = ET_WORDS
            .iter()
            .chain(EN_WORDS)
            .map(|w| w.to_string())
            .collect();
        let all = pseudo_words(topics * words_per_topic, &avoid, &mut rng);
        let words: Vec<Vec<String>> = all.chunks(words_per_topic).map(<[String]>::to_vec).collect();
        let terms = (0..topics)
            .map(|i| {
                let category = match i % 5 {
                    3 => Category::Location,
                    4 => Category::GenreForm,
                    _ => Category::Topic,
                };
                ThesaurusTerm::new(format!("{} {i:02}", words[i][0]), category)
            })
            .collect();
        PlantedTopics { terms, words }
    }
}

/// Generates `topics * books_per_topic` books; book `k` has main topic
/// `k % topics`.
pub fn planted_corpus(cfg: &PlantedConfig) -> (PlantedTopics, Vec<BookRecord>) {
    let topics = PlantedTopics::new(cfg.topics, cfg.words_per_topic, cfg.vocab_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let et = zipf(ET_WORDS.len());
    let en = zipf(EN_WORDS.len());
    let mut books = Vec::with_capacity(cfg.topics * cfg.books_per_topic);
    for k in 0..cfg.topics * cfg.books_per_topic {
        let main = k % cfg.topics;
        let secondary = (cfg.topics > 1 && rng.random_bool(cfg.secondary_prob)).then(|| {
            let other = rng.random_range(0..cfg.topics - 1);
            if other >= main {
                other + 1
            } else {
                other
            }
        });
        let english = rng.random_bool(cfg.english_rate);
        let (background, dist) = if english { (EN_WORDS, &en) } else { (ET_WORDS, &et) };
        let extent = rng.random_range(cfg.min_pages..=cfg.max_pages.max(cfg.min_pages));

        let mut pages = Vec::with_capacity(extent);
        for _ in 0..extent {
            if rng.random_bool(cfg.garbage_page_rate) {
                let len = rng.random_range(200..800);
                pages.push(garbage(len, &mut rng));
                continue;
            }
            let plain = rng.random_bool(cfg.plain_page_rate);
            let mut sentence: Vec<&str> = Vec::new();
            let mut text = String::new();
            let mut target_len = rng.random_range(5..15);
            for _ in 0..cfg.words_per_page {
                let roll: f64 = rng.random();
                let word: &str = if plain {
                    background[dist.sample(&mut rng)]
                } else if roll < cfg.topic_share {
                    topics.words[main].choose(&mut rng).unwrap()
                } else if let Some(s) = secondary.filter(|_| roll < cfg.topic_share + cfg.secondary_share) {
                    topics.words[s].choose(&mut rng).unwrap()
                } else {
                    background[dist.sample(&mut rng)]
                };
                sentence.push(word);
                if sentence.len() == target_len {
                    push_sentence(&mut text, &sentence, &mut rng);
                    sentence.clear();
                    target_len = rng.random_range(5..15);
                }
            }
            if !sentence.is_empty() {
                push_sentence(&mut text, &sentence, &mut rng);
            }
            pages.push(text);
        }

        let mut subjects = vec![topics.terms[main].clone()];
        if let Some(s) = secondary {
            subjects.push(topics.terms[s].clone());
        }
        if rng.random_bool(cfg.person_subject_prob) {
            subjects.push(ThesaurusTerm::new(
                format!("Autor, {}", (b'A' + (k % 26) as u8) as char),
                Category::Person,
            ));
        }
        books.push(BookRecord {
            id: format!("synth-{:05}", k),
            title: format!("Raamat {k}"),
            language: if english { "en" } else { "et" }.to_string(),
            author_birth_year: Some(1900 + (k % 100) as i32),
            pages,
            subjects,
        });
    }
    (topics, books)
}

/// Writes books as corpus JSONL.
pub fn to_jsonl(books: &[BookRecord]) -> String {
    let mut out = String::new();
    for b in books {
        out.push_str(&serde_json::to_string(b).expect("books serialize"));
        out.push('\n');
    }
    out
}
