use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::final_diagnoses;
use super::{init_model, Architecture, Engine, Knowledge, Model, PipelineConfig, PipelineError};
use crate::acts::{score_examples, train_acts, tune_thresholds, ActExample};
use crate::classifier::{train_classifier, train_no_dog, ClassifierExample};
use crate::corpus::{build_query, normalize_segment_text, Dialogue, DialogueSet, Query, SoapLexicon, SoapSegment, Speaker, Split, Tokenizer};
use crate::metrics::disease_f1;
use crate::retrieval::{train_contrastive, ContrastivePair, Retriever};

/// Loss curves and validation scores of one `train_all` run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub retrieval_case_loss: Vec<f64>,
    pub retrieval_doc_loss: Vec<f64>,
    pub classifier_loss: Vec<f64>,
    pub no_dog_loss: Vec<f64>,
    pub acts_loss: Vec<f64>,
    pub case_pairs: usize,
    pub doc_pairs: usize,
    pub classifier_examples: usize,
    pub act_examples: usize,
    pub act_thresholds: Vec<f64>,
    /// Acts without a positive validation label; their threshold stays default.
    pub absent_acts: Vec<String>,
    pub valid_d_f1: Option<f64>,
    pub valid_act_micro_f1: Option<f64>,
}

/// A training job failed. `last_good` holds the parameters as they were
/// before the failing update.
#[derive(Clone, Debug)]
pub struct TrainFailure {
    pub job: &'static str,
    pub error: PipelineError,
    pub last_good: Model,
    pub report: TrainingReport,
}

impl core::fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "training job `{}` failed: {}", self.job, self.error)
    }
}

/// The dialogue state as seen at one patient turn.
pub(crate) struct PatientView {
    pub query: Query,
    /// All deduplicated segments up to and including the turn.
    pub segments: Vec<SoapSegment>,
    /// Previous doctor utterance and the patient utterance.
    pub history: String,
    /// Acts of the doctor reply that follows, if any.
    pub reply_acts: Option<Vec<String>>,
}

/// Replays segmentation exactly as the turn loop does.
pub(crate) fn patient_views(dialogue: &Dialogue, lexicon: &SoapLexicon) -> Vec<PatientView> {
    let mut seen = BTreeSet::new();
    let mut segments: Vec<SoapSegment> = Vec::new();
    let mut patient_texts: Vec<&str> = Vec::new();
    let mut prev_doctor = "";
    let mut out = Vec::new();
    for (i, u) in dialogue.turns.iter().enumerate() {
        for seg in u.soap_segments(lexicon, i) {
            if seen.insert(normalize_segment_text(&seg.text)) {
                segments.push(seg);
            }
        }
        match u.speaker {
            Speaker::Doctor => prev_doctor = &u.text,
            Speaker::Patient => {
                patient_texts.push(&u.text);
                let reply_acts = dialogue
                    .turns
                    .get(i + 1)
                    .filter(|n| n.speaker == Speaker::Doctor)
                    .map(|n| n.acts.clone());
                out.push(PatientView {
                    query: build_query(&segments, patient_texts.iter().copied()),
                    segments: segments.clone(),
                    history: alloc::format!("{prev_doctor} {}", u.text).trim().to_string(),
                    reply_acts,
                });
            }
        }
    }
    out
}

pub(crate) fn classifier_segments(q: &Query) -> Vec<String> {
    if q.fallback {
        alloc::vec![q.text.clone()]
    } else {
        q.segments.iter().map(|s| s.text.clone()).collect()
    }
}

/// Act instances: one per doctor reply that follows a patient turn.
pub fn act_examples<'a>(dialogues: impl IntoIterator<Item = &'a Dialogue>, lexicon: &SoapLexicon) -> Vec<ActExample> {
    let mut out = Vec::new();
    for d in dialogues {
        for v in patient_views(d, lexicon) {
            if let Some(acts) = v.reply_acts {
                out.push(ActExample {
                    segments: v.segments.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" "),
                    history: v.history,
                    acts,
                });
            }
        }
    }
    out
}

fn retrieval_pairs(
    train: &[&Dialogue],
    knowledge: &Knowledge,
    seed: u64,
) -> (Vec<ContrastivePair>, Vec<ContrastivePair>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let docs: BTreeMap<&str, String> = knowledge
        .documents
        .iter()
        .map(|d| (d.id.as_str(), d.retrieval_text()))
        .collect();
    let case_texts: Vec<String> = knowledge.cases.iter().map(|c| c.retrieval_text()).collect();
    let (mut case_pairs, mut doc_pairs) = (Vec::new(), Vec::new());
    for d in train {
        let gold: BTreeSet<String> = d.gold_diseases.iter().cloned().collect();
        let candidates: Vec<usize> = knowledge
            .cases
            .iter()
            .enumerate()
            .filter(|(_, c)| c.source_dialogue.as_deref() != Some(d.id.as_str()))
            .filter(|(_, c)| c.diseases.iter().any(|x| gold.contains(x)))
            .map(|(i, _)| i)
            .collect();
        for v in patient_views(d, &knowledge.lexicon) {
            if v.query.text.trim().is_empty() {
                continue;
            }
            if !candidates.is_empty() {
                let c = candidates[rng.gen_range(0..candidates.len())];
                case_pairs.push(ContrastivePair {
                    query: v.query.text.clone(),
                    positive: case_texts[c].clone(),
                    query_labels: gold.clone(),
                    positive_labels: knowledge.cases[c].diseases.iter().cloned().collect(),
                });
            }
            for g in &d.gold_diseases {
                if let Some(text) = docs.get(g.as_str()) {
                    doc_pairs.push(ContrastivePair {
                        query: v.query.text.clone(),
                        positive: text.clone(),
                        query_labels: gold.clone(),
                        positive_labels: core::iter::once(g.clone()).collect(),
                    });
                }
            }
        }
    }
    (case_pairs, doc_pairs)
}

/// Which training jobs to run. Jobs always run in the order retrieval,
/// classifier, acts, tuning.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Jobs {
    pub retrieval: bool,
    pub classifier: bool,
    pub acts: bool,
    /// Act threshold tuning on the validation split.
    pub tune: bool,
}

impl Jobs {
    pub const ALL: Jobs = Jobs {
        retrieval: true,
        classifier: true,
        acts: true,
        tune: true,
    };
    pub const NONE: Jobs = Jobs {
        retrieval: false,
        classifier: false,
        acts: false,
        tune: false,
    };
}

/// Retrievers, then the classifier and its graph-free variant, then the
/// act predictor with threshold tuning on the validation split. Each job
/// uses its own seed from `config`.
pub fn train_all(
    config: &PipelineConfig,
    knowledge: &Knowledge,
    dialogues: &DialogueSet,
) -> Result<(Model, TrainingReport), TrainFailure> {
    let early = |error| TrainFailure {
        job: "init",
        error,
        last_good: Model {
            params: Default::default(),
            act_thresholds: Vec::new(),
        },
        report: TrainingReport::default(),
    };
    if let Err(e) = knowledge.validate() {
        return Err(early(e));
    }
    let model = init_model(config, knowledge).map_err(early)?;
    train_jobs(config, knowledge, dialogues, model, Jobs::ALL)
}

/// Runs the selected jobs starting from `model`. Validation D-F1 is
/// reported whenever the validation split is non-empty.
pub fn train_jobs(
    config: &PipelineConfig,
    knowledge: &Knowledge,
    dialogues: &DialogueSet,
    mut model: Model,
    jobs: Jobs,
) -> Result<(Model, TrainingReport), TrainFailure> {
    let mut report = TrainingReport::default();
    if let Err(e) = config.validate().and_then(|_| knowledge.validate()) {
        return Err(TrainFailure {
            job: "init",
            error: e,
            last_good: model,
            report,
        });
    }
    let tokenizer = Tokenizer::new(config.tokenizer.clone()).expect("validated tokenizer config");
    let arch = Architecture::new(config, knowledge);
    let train: Vec<&Dialogue> = dialogues.split(Split::Train).collect();
    let valid: Vec<&Dialogue> = dialogues.split(Split::Valid).collect();

    macro_rules! job {
        ($name:literal, $e:expr) => {
            match $e {
                Ok(v) => v,
                Err(e) => {
                    log::error!("training job {} failed: {}", $name, e);
                    return Err(TrainFailure {
                        job: $name,
                        error: e.into(),
                        last_good: model,
                        report,
                    });
                }
            }
        };
    }

    let (case_pairs, doc_pairs) = retrieval_pairs(&train, knowledge, config.retrieval.seed);
    report.case_pairs = case_pairs.len();
    report.doc_pairs = doc_pairs.len();
    if jobs.retrieval && config.retrieval.steps > 0 {
        let case_cfg = config.retrieval;
        let mut doc_cfg = config.retrieval;
        doc_cfg.seed = doc_cfg.seed.wrapping_add(0x5eed);
        report.retrieval_case_loss = job!(
            "retrieval",
            train_contrastive(&mut model.params, &arch.case_encoder, &tokenizer, &case_pairs, &case_cfg)
        );
        report.retrieval_doc_loss = job!(
            "retrieval",
            train_contrastive(&mut model.params, &arch.doc_encoder, &tokenizer, &doc_pairs, &doc_cfg)
        );
    }

    if jobs.classifier {
        let retriever = job!(
            "classifier",
            Retriever::build(
                &model.params,
                &tokenizer,
                arch.case_encoder.clone(),
                arch.doc_encoder.clone(),
                &knowledge.cases,
                &knowledge.documents,
            )
        );
        let mut examples = Vec::new();
        for d in &train {
            for v in patient_views(d, &knowledge.lexicon) {
                let list = job!(
                    "classifier",
                    retriever.preliminary_list(&model.params, &tokenizer, &v.query.text, config.k)
                );
                examples.push(ClassifierExample {
                    segments: classifier_segments(&v.query),
                    list: list.into_iter().map(|s| s.disease).collect(),
                    gold: d.gold_diseases.clone(),
                });
            }
        }
        report.classifier_examples = examples.len();
        if config.classifier.steps > 0 {
            report.classifier_loss = job!(
                "classifier",
                train_classifier(&mut model.params, &arch.classifier, &tokenizer, &knowledge.graph, &examples, &config.classifier)
            );
            report.no_dog_loss = job!(
                "classifier",
                train_no_dog(&mut model.params, &arch.no_dog, &tokenizer, &examples, &config.classifier)
            );
        }
    }

    let act_train = act_examples(train.iter().copied(), &knowledge.lexicon);
    report.act_examples = act_train.len();
    if jobs.acts && config.acts.steps > 0 {
        report.acts_loss = job!("acts", train_acts(&mut model.params, &arch.acts, &tokenizer, &act_train, &config.acts));
    }
    let act_valid = act_examples(valid.iter().copied(), &knowledge.lexicon);
    if jobs.tune && !act_valid.is_empty() {
        let scores = job!("acts", score_examples(&model.params, &arch.acts, &tokenizer, &act_valid));
        let labels = job!(
            "acts",
            act_valid.iter().map(|e| arch.acts.labels(&e.acts)).collect::<Result<Vec<_>, _>>()
        );
        let tuned = job!("acts", tune_thresholds(&scores, &labels, arch.acts.acts.len()));
        report.absent_acts = tuned.absent.iter().map(|&a| arch.acts.acts[a].clone()).collect();
        model.act_thresholds = tuned.thresholds;
        let mut tuned_pred = arch.acts.clone();
        job!("acts", tuned_pred.set_thresholds(model.act_thresholds.clone()));
        let predicted: Vec<Vec<String>> = scores.iter().map(|p| tuned_pred.select(p).selected).collect();
        let gold: Vec<Vec<String>> = act_valid.iter().map(|e| e.acts.clone()).collect();
        report.valid_act_micro_f1 = Some(micro_f1(&predicted, &gold));
    }
    report.act_thresholds = model.act_thresholds.clone();

    if !valid.is_empty() {
        let engine = job!("validation", Engine::new(config.clone(), knowledge.clone(), model.clone()));
        let evals = job!("validation", final_diagnoses(&engine, &valid, config));
        let pred: Vec<_> = evals.iter().map(|e| e.predicted.clone()).collect();
        let gold: Vec<_> = evals.iter().map(|e| e.gold.clone()).collect();
        report.valid_d_f1 = Some(job!(
            "validation",
            disease_f1(&pred, &gold).map_err(|e| PipelineError::Metrics(e.to_string()))
        ));
    }
    Ok((model, report))
}

/// Micro-averaged F1 over (instance, label) pairs.
pub(crate) fn micro_f1(predicted: &[Vec<String>], gold: &[Vec<String>]) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (p, g) in predicted.iter().zip(gold) {
        let hit = p.iter().filter(|a| g.contains(a)).count();
        tp += hit;
        fp += p.len() - hit;
        fneg += g.iter().filter(|a| !p.contains(a)).count();
    }
    let denom = 2 * tp + fp + fneg;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}
