//! Fixtures shared by the benchmarks.

use finprint::synthgen::generate_dataset;
use finprint::{DatasetConfig, EncounterDatabase, Features, PipelineConfig, Profile};

pub fn mild_database(individuals: usize, seed: u64) -> EncounterDatabase {
    let mut cfg = DatasetConfig::mild(seed);
    cfg.population.individuals = individuals;
    generate_dataset(&cfg).expect("preset generates")
}

pub fn bottlenose() -> PipelineConfig {
    PipelineConfig::profile(Profile::Bottlenose)
}

pub fn features(db: &EncounterDatabase) -> Features {
    Features::compute(db, &bottlenose().features().expect("preset is valid")).expect("synthetic contours are valid")
}
