#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use kratt_core::corpus::BookRecord;
use kratt_core::preprocess::RuleAnalyzer;
use kratt_core::synth::{planted_corpus, PlantedConfig, PlantedTopics};
use kratt_core::{ModelBundle, TrainOptions};

pub fn small_config(seed: u64) -> PlantedConfig {
    PlantedConfig {
        topics: 8,
        books_per_topic: 4,
        min_pages: 20,
        max_pages: 40,
        seed,
        ..PlantedConfig::default()
    }
}

pub fn small_options() -> TrainOptions {
    let mut opts = TrainOptions::default();
    opts.training.min_examples = 20;
    opts.dim = 1 << 14;
    opts.calibration_pages = 200;
    opts
}

pub struct Fixture {
    pub topics: PlantedTopics,
    pub train: Vec<BookRecord>,
    pub test: Vec<BookRecord>,
    pub bundle: ModelBundle,
}

/// A bundle trained on a small planted corpus, shared by the tests of one
/// binary.
pub fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let (topics, train) = planted_corpus(&small_config(1));
        let (_, test) = planted_corpus(&small_config(2));
        let bundle = kratt_core::bundle::train_bundle(
            &train,
            &small_options(),
            Arc::new(RuleAnalyzer::builtin()),
        )
        .expect("fixture trains");
        Fixture {
            topics,
            train,
            test,
            bundle,
        }
    })
}
