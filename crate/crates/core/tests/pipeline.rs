use std::collections::BTreeSet;
use std::time::Instant;

use ddx_core::corpus::synth::{generate_synthetic_corpus, minimal_disease_covers, SynthSpec};
use ddx_core::corpus::TokenizerMode;
use ddx_core::pipeline::{run_turn, train_all, Engine, Knowledge, PipelineConfig};

#[test]
fn uniquely_covered_symptoms_pin_the_diagnosis_in_two_turns() {
    let spec = SynthSpec {
        diseases: 6,
        symptoms: 18,
        organs: 4,
        systems: 2,
        train: 150,
        valid: 20,
        test: 0,
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic_corpus(11, &spec).unwrap();
    let mut config = PipelineConfig::default().with_seed(4);
    config.dim = 32;
    config.tokenizer.mode = TokenizerMode::Whitespace;
    config.tokenizer.hash_buckets = 1024;
    config.retrieval.steps = 200;
    config.classifier.steps = 1500;
    config.acts.steps = 100;
    let knowledge = Knowledge::from_synthetic(&corpus);
    let start = Instant::now();
    let (model, _) = train_all(&config, &knowledge, &corpus.dialogues).unwrap();
    eprintln!("trained in {:.1}s", start.elapsed().as_secs_f64());
    let engine = Engine::new(config, knowledge, model).unwrap();

    let mut checked = 0;
    for (disease, symptoms) in &corpus.disease_symptoms {
        let observed: BTreeSet<String> = symptoms.iter().cloned().collect();
        let covers = minimal_disease_covers(&corpus.disease_symptoms, &observed);
        if covers != [BTreeSet::from([disease.clone()])] {
            continue;
        }
        checked += 1;
        let names: Vec<&str> = symptoms.iter().map(|s| corpus.graph.name(s)).collect();
        let (first, rest) = names.split_at(names.len().div_ceil(2));
        let mut session = engine.session(format!("unique-{disease}"));
        run_turn(&engine, &mut session, &format!("hello doctor, i have {}.", first.join(" and "))).unwrap();
        let (_, trace) = run_turn(&engine, &mut session, &format!("yes, i also have {}.", rest.join(" and "))).unwrap();
        let refined = trace.refined.expect("refined set");
        assert_eq!(refined.selected, vec![disease.clone()], "{disease}: {:?}", refined.probabilities);
    }
    assert!(checked >= 3, "only {checked} uniquely covered diseases");
}
