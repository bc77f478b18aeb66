#![allow(dead_code)]

use ddx_core::corpus::synth::{generate_synthetic_corpus, SynthSpec, SyntheticCorpus};
use ddx_core::corpus::TokenizerMode;
use ddx_core::pipeline::{train_all, Engine, Knowledge, Model, PipelineConfig};

pub fn small_spec() -> SynthSpec {
    SynthSpec {
        diseases: 6,
        symptoms: 18,
        organs: 4,
        systems: 2,
        train: 60,
        valid: 12,
        test: 12,
        ..SynthSpec::default()
    }
}

pub fn small_config() -> PipelineConfig {
    let mut c = PipelineConfig::default().with_seed(9);
    c.dim = 16;
    c.heads = 2;
    c.tokenizer.mode = TokenizerMode::Whitespace;
    c.tokenizer.hash_buckets = 512;
    c.retrieval.steps = 40;
    c.classifier.steps = 200;
    c.acts.steps = 40;
    c
}

pub fn corpus() -> SyntheticCorpus {
    generate_synthetic_corpus(21, &small_spec()).unwrap()
}

pub fn trained() -> (SyntheticCorpus, PipelineConfig, Model) {
    let corpus = corpus();
    let config = small_config();
    let (model, _) = train_all(&config, &Knowledge::from_synthetic(&corpus), &corpus.dialogues).unwrap();
    (corpus, config, model)
}

pub fn engine() -> Engine {
    let (corpus, config, model) = trained();
    Engine::new(config, Knowledge::from_synthetic(&corpus), model).unwrap()
}

/// A patient opening naming the first two symptoms of the first disease.
pub fn opening(corpus: &SyntheticCorpus) -> String {
    let (_, symptoms) = corpus.disease_symptoms.iter().next().unwrap();
    let names: Vec<&str> = symptoms.iter().take(2).map(|s| corpus.graph.name(s)).collect();
    format!("hello doctor, i have {}.", names.join(" and "))
}
