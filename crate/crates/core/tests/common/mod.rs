#![allow(dead_code)]

use std::path::PathBuf;

use flarewatch_core::{Dictionary, NormalizationMap};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn bundled_tables() -> (Dictionary, NormalizationMap) {
    let dir = data_dir();
    let dict = Dictionary::load(dir.join("dictionary.tsv")).expect("bundled dictionary");
    let map = NormalizationMap::load(dir.join("normalization.tsv")).expect("bundled normalization table");
    (dict, map)
}

pub const CATEGORIES: &[&str] = &["fire", "accident", "earthquake", "cyclone", "theft", "drunk-driving"];

pub fn bundled_context() -> flarewatch_core::PipelineContext {
    use flarewatch_core::pipeline::{ContextPaths, PipelineContext};
    let d = data_dir();
    let paths = ContextPaths {
        dictionary: d.join("dictionary.tsv"),
        normalization: d.join("normalization.tsv"),
        gazetteer: d.join("gazetteer.tsv"),
        filters: d.join("filters.txt"),
        models_dir: d.join("models"),
    };
    let categories = CATEGORIES.iter().map(|s| s.to_string()).collect();
    PipelineContext::load(&paths, flarewatch_core::BoundingBox::MUMBAI, categories).unwrap()
}
