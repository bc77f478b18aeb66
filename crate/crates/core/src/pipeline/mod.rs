//! End-to-end orchestration: per-turn inference, training drivers,
//! teacher-forced evaluation and ablation switches.

mod eval;
mod train;
mod turn;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acts::{ActPredictor, ActTrainConfig, ActsError};
use crate::classifier::{Classifier, ClassifierError, ClassifierTrainConfig, NoDogHead, DEFAULT_TAU};
use crate::corpus::{
    ActCatalogue, CorpusError, DiseaseDocument, PatientCase, SoapLexicon, Tokenizer, TokenizerConfig,
};
use crate::corpus::synth::SyntheticCorpus;
use crate::dog::{DogGraph, EntityKind};
use crate::generation::{
    passages_from_documents, ActAspectMap, GenerationError, PassageIndex, TemplatePack, DEFAULT_PASSAGES,
};
use crate::metrics::EntityLexicon;
use crate::numerics::ParamStore;
use crate::retrieval::{ContrastiveConfig, Encoder, RetrievalError, Retriever};

pub use eval::{evaluate, final_diagnoses, gold_path_mass, EvalOutcome};
pub use train::{act_examples, train_all, train_jobs, Jobs, TrainFailure, TrainingReport};
pub use turn::{run_turn, run_turn_with, SessionState, StageRecord, StageStatus, TraceEntity, TurnTrace, STAGES};

pub const TRACE_SCHEMA_VERSION: u32 = 1;

pub const CASE_ENCODER: &str = "retrieval.case";
pub const DOC_ENCODER: &str = "retrieval.doc";
pub const CLASSIFIER: &str = "classifier";
pub const NO_DOG_HEAD: &str = "no_dog";
pub const ACT_PREDICTOR: &str = "acts";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error("inconsistent knowledge: {0}")]
    Knowledge(String),
    #[error("evaluation split is empty")]
    EmptySplit,
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: &'static str, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Acts(#[from] ActsError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error("metrics: {0}")]
    Metrics(String),
}

/// Ablation switches; any combination is allowed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    /// No differential diagnosis at all: replies are planned without diseases.
    pub no_ddx: bool,
    /// Skip analytic refinement; the refined set is the top of the preliminary list.
    pub no_analytic: bool,
    /// Classify without the disease ontology graph.
    pub no_dog: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Preliminary list length.
    pub k: usize,
    /// Disease selection threshold.
    pub tau: f64,
    /// Passages kept per reply.
    pub passages: usize,
    /// Refined-set size under `no_analytic`.
    pub no_analytic_top: usize,
    /// Diagnostic paths recorded per turn.
    pub path_beam: usize,
    pub ablations: Ablations,
    /// Seed of parameter initialization.
    pub seed: u64,
    pub dim: usize,
    pub heads: usize,
    pub tokenizer: TokenizerConfig,
    pub retrieval: ContrastiveConfig,
    pub classifier: ClassifierTrainConfig,
    pub acts: ActTrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: 50,
            tau: DEFAULT_TAU,
            passages: DEFAULT_PASSAGES,
            no_analytic_top: 5,
            path_beam: 3,
            ablations: Ablations::default(),
            seed: 0,
            dim: 64,
            heads: 4,
            tokenizer: TokenizerConfig::default(),
            retrieval: ContrastiveConfig::default(),
            classifier: ClassifierTrainConfig::default(),
            acts: ActTrainConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Sets the initialization seed and every training-job seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.retrieval.seed = seed.wrapping_add(1);
        self.classifier.seed = seed.wrapping_add(2);
        self.acts.seed = seed.wrapping_add(3);
        self
    }

    pub fn with_ablations(mut self, ablations: Ablations) -> Self {
        self.ablations = ablations;
        self
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.k == 0 {
            return bad("k must be positive");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1)");
        }
        if self.passages == 0 || self.no_analytic_top == 0 {
            return bad("passages and no_analytic_top must be positive");
        }
        if self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            return bad("dim must be a positive multiple of heads");
        }
        if !(self.classifier.alpha >= 0.0 && self.classifier.beta >= 0.0) {
            return bad("alpha and beta must be non-negative");
        }
        Tokenizer::new(self.tokenizer.clone())?;
        Ok(())
    }
}

/// Everything the engine knows besides learned parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Knowledge {
    pub graph: DogGraph,
    pub documents: Vec<DiseaseDocument>,
    pub cases: Vec<PatientCase>,
    pub lexicon: SoapLexicon,
    pub acts: ActCatalogue,
    pub aspect_map: ActAspectMap,
    pub templates: TemplatePack,
    pub entity_lexicon: EntityLexicon,
}

impl Knowledge {
    pub fn from_synthetic(corpus: &SyntheticCorpus) -> Self {
        Self {
            graph: corpus.graph.clone(),
            documents: corpus.documents.clone(),
            cases: corpus.cases.clone(),
            lexicon: corpus.lexicon.clone(),
            acts: corpus.acts.clone(),
            aspect_map: ActAspectMap::default(),
            templates: TemplatePack::default(),
            entity_lexicon: corpus.entity_lexicon.clone(),
        }
    }

    /// Documents must describe graph diseases and cases must cite documented
    /// diseases; the act map and templates must cover the catalogue.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let graph_diseases = self.graph.disease_ids();
        if self.documents.is_empty() {
            return Err(RetrievalError::EmptyDiseaseCorpus.into());
        }
        let mut doc_ids = BTreeSet::new();
        for d in &self.documents {
            if !graph_diseases.contains(&d.id) {
                return Err(PipelineError::Knowledge(alloc::format!(
                    "document `{}` is not a disease of the graph",
                    d.id
                )));
            }
            if !doc_ids.insert(d.id.as_str()) {
                return Err(PipelineError::Knowledge(alloc::format!("duplicate document `{}`", d.id)));
            }
        }
        for c in &self.cases {
            if let Some(d) = c.diseases.iter().find(|d| !doc_ids.contains(d.as_str())) {
                return Err(PipelineError::Knowledge(alloc::format!(
                    "case `{}` cites undocumented disease `{d}`",
                    c.id
                )));
            }
        }
        self.acts.validate()?;
        self.aspect_map.validate(&self.acts)?;
        self.templates.validate(&self.acts)?;
        Ok(())
    }

    /// Disease ids in classifier column order.
    pub fn disease_columns(&self) -> Vec<String> {
        self.graph.disease_ids().into_iter().collect()
    }

    pub fn disease_names(&self) -> BTreeMap<String, String> {
        self.documents.iter().map(|d| (d.id.clone(), d.name.clone())).collect()
    }
}

/// Entity lexicon over the names of graph diseases and symptoms.
pub fn entity_lexicon_from_graph(graph: &DogGraph) -> EntityLexicon {
    EntityLexicon(
        graph
            .entities()
            .filter(|e| matches!(e.kind, EntityKind::Disease | EntityKind::Symptom))
            .map(|e| (e.name.to_lowercase(), e.id.clone()))
            .collect(),
    )
}

/// Learned state: the parameter store and the tuned act thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub params: ParamStore,
    pub act_thresholds: Vec<f64>,
}

/// Named modules of the engine, derived from the knowledge base.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub case_encoder: Encoder,
    pub doc_encoder: Encoder,
    pub classifier: Classifier,
    pub no_dog: NoDogHead,
    pub acts: ActPredictor,
}

impl Architecture {
    pub fn new(config: &PipelineConfig, knowledge: &Knowledge) -> Self {
        let diseases = knowledge.disease_columns();
        Self {
            case_encoder: Encoder::named(CASE_ENCODER),
            doc_encoder: Encoder::named(DOC_ENCODER),
            classifier: Classifier::new(CLASSIFIER, config.heads, diseases.clone()),
            no_dog: NoDogHead::new(NO_DOG_HEAD, diseases),
            acts: ActPredictor::new(ACT_PREDICTOR, &knowledge.acts),
        }
    }
}

/// Seeded initial parameters. Modules are initialized in a fixed order from
/// one stream, so the result depends only on the config and the knowledge base.
pub fn init_model(config: &PipelineConfig, knowledge: &Knowledge) -> Result<Model, PipelineError> {
    config.validate()?;
    let arch = Architecture::new(config, knowledge);
    let buckets = config.tokenizer.hash_buckets;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ParamStore::new();
    arch.case_encoder.init(&mut params, buckets, config.dim, &mut rng);
    arch.doc_encoder.init(&mut params, buckets, config.dim, &mut rng);
    arch.classifier.init(&mut params, buckets, config.dim, &mut rng);
    arch.no_dog.init(&mut params, buckets, config.dim, &mut rng);
    arch.acts.init(&mut params, buckets, config.dim, &mut rng);
    Ok(Model {
        params,
        act_thresholds: arch.acts.thresholds.clone(),
    })
}

/// A loaded model ready to serve turns. Shared read-only across sessions.
#[derive(Clone, Debug)]
pub struct Engine {
    pub config: PipelineConfig,
    pub knowledge: Knowledge,
    pub params: ParamStore,
    pub tokenizer: Tokenizer,
    pub arch: Architecture,
    pub retriever: Retriever,
    pub passages: PassageIndex,
    names: BTreeMap<String, String>,
}

impl Engine {
    pub fn new(config: PipelineConfig, knowledge: Knowledge, model: Model) -> Result<Self, PipelineError> {
        config.validate()?;
        knowledge.validate()?;
        let tokenizer = Tokenizer::new(config.tokenizer.clone())?;
        let mut arch = Architecture::new(&config, &knowledge);
        arch.acts.set_thresholds(model.act_thresholds)?;
        for name in required_params(&arch) {
            if !model.params.contains(&name) {
                return Err(PipelineError::Config(alloc::format!("checkpoint lacks parameter `{name}`")));
            }
        }
        let retriever = Retriever::build(
            &model.params,
            &tokenizer,
            arch.case_encoder.clone(),
            arch.doc_encoder.clone(),
            &knowledge.cases,
            &knowledge.documents,
        )?;
        let passages = PassageIndex::build(passages_from_documents(&knowledge.documents), &tokenizer);
        Ok(Self {
            names: knowledge.disease_names(),
            config,
            knowledge,
            params: model.params,
            tokenizer,
            arch,
            retriever,
            passages,
        })
    }

    pub fn model(&self) -> Model {
        Model {
            params: self.params.clone(),
            act_thresholds: self.arch.acts.thresholds.clone(),
        }
    }

    pub fn disease_names(&self) -> &BTreeMap<String, String> {
        &self.names
    }

    /// A fresh session carrying a snapshot of the engine config.
    pub fn session(&self, id: impl Into<String>) -> SessionState {
        SessionState::new(id, self.config.clone())
    }
}

fn required_params(arch: &Architecture) -> Vec<String> {
    let enc = |e: &Encoder| [e.table.clone(), e.proj.clone(), e.bias.clone()];
    let mut out: Vec<String> = Vec::new();
    out.extend(enc(&arch.case_encoder));
    out.extend(enc(&arch.doc_encoder));
    out.extend(enc(&arch.classifier.encoder));
    out.extend(arch.classifier.gat.w.iter().cloned());
    out.extend(arch.classifier.gat.a_src.iter().cloned());
    out.extend(arch.classifier.gat.a_dst.iter().cloned());
    let x = &arch.classifier.xattn;
    out.extend([x.wq.clone(), x.wk.clone(), x.wv.clone(), x.out.clone()]);
    out.extend(enc(&arch.no_dog.encoder));
    out.extend([arch.no_dog.w.clone(), arch.no_dog.b.clone()]);
    out.extend(enc(&arch.acts.segment_encoder));
    out.extend(enc(&arch.acts.history_encoder));
    out.push(arch.acts.wa.clone());
    out
}
