//! Data directory layout and loaders.
//!
//! A data directory holds the knowledge base and the dialogues:
//!
//! | file | format | required |
//! |---|---|---|
//! | `entities.tsv` | `id TAB kind TAB name` | yes |
//! | `edges.tsv` | `id TAB id` | yes |
//! | `diseases.jsonl` | one disease document per line | yes |
//! | `soap_lexicon.tsv` | `pattern TAB section` | yes |
//! | `cases.jsonl` | one SOAP case per line | no |
//! | `acts.json` | act catalogue | no |
//! | `act_aspect_map.json` | act id to aspect or null | no |
//! | `templates.json` | template pack | no |
//! | `entity_lexicon.json` | surface form to entity id | no |
//! | `dialogues.jsonl` | dialogue schema v1 | for training and evaluation |

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use ddx_core::corpus::synth::SyntheticCorpus;
use ddx_core::corpus::{load_dialogues, parse_cases, parse_documents, ActCatalogue, DialogueSet, SoapLexicon, DIALOGUE_SCHEMA_VERSION};
use ddx_core::dog::DogGraph;
use ddx_core::generation::{ActAspectMap, TemplatePack};
use ddx_core::metrics::EntityLexicon;
use ddx_core::pipeline::{entity_lexicon_from_graph, Knowledge, PipelineConfig};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub const ENTITIES: &str = "entities.tsv";
pub const EDGES: &str = "edges.tsv";
pub const DISEASES: &str = "diseases.jsonl";
pub const CASES: &str = "cases.jsonl";
pub const LEXICON: &str = "soap_lexicon.tsv";
pub const ACTS: &str = "acts.json";
pub const ASPECT_MAP: &str = "act_aspect_map.json";
pub const TEMPLATES: &str = "templates.json";
pub const ENTITY_LEXICON: &str = "entity_lexicon.json";
pub const DIALOGUES: &str = "dialogues.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

impl DataError {
    pub fn invalid(path: &Path, message: impl ToString) -> Self {
        DataError::Invalid {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }
}

pub fn read(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_optional(path: &Path) -> Result<Option<String>, DataError> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(source) => Err(DataError::Io {
            path: path.to_path_buf(),
            source,
        }),
    }
}

pub fn write(path: &Path, text: &str) -> Result<(), DataError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| DataError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses JSON, reporting the failing field path.
pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T, DataError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| DataError::invalid(path, format!("{}: {}", e.path(), e.inner())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, DataError> {
    parse_json(path, &read(path)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DataError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write(path, &text)
}

pub fn load_graph(dir: &Path) -> Result<DogGraph, DataError> {
    let entities = read(&dir.join(ENTITIES))?;
    let edges = read(&dir.join(EDGES))?;
    DogGraph::load(&entities, &edges).map_err(|e| DataError::invalid(dir, e))
}

pub fn load_knowledge(dir: &Path) -> Result<Knowledge, DataError> {
    let graph = load_graph(dir)?;
    let path = dir.join(DISEASES);
    let documents = parse_documents(&read(&path)?).map_err(|e| DataError::invalid(&path, e))?;
    let doc_ids: BTreeSet<String> = documents.iter().map(|d| d.id.clone()).collect();
    let path = dir.join(CASES);
    let cases = match read_optional(&path)? {
        Some(text) => parse_cases(&text, &doc_ids).map_err(|e| DataError::invalid(&path, e))?,
        None => Vec::new(),
    };
    let path = dir.join(LEXICON);
    let lexicon = SoapLexicon::parse_tsv(&read(&path)?).map_err(|e| DataError::invalid(&path, e))?;
    let path = dir.join(ACTS);
    let acts = match read_optional(&path)? {
        Some(text) => ActCatalogue::from_json(&text).map_err(|e| DataError::invalid(&path, e))?,
        None => ActCatalogue::default(),
    };
    let path = dir.join(ASPECT_MAP);
    let aspect_map = match read_optional(&path)? {
        Some(text) => ActAspectMap::from_json(&text).map_err(|e| DataError::invalid(&path, e))?,
        None => ActAspectMap::default(),
    };
    let path = dir.join(TEMPLATES);
    let templates = match read_optional(&path)? {
        Some(text) => TemplatePack::from_json(&text).map_err(|e| DataError::invalid(&path, e))?,
        None => TemplatePack::default(),
    };
    let path = dir.join(ENTITY_LEXICON);
    let entity_lexicon: EntityLexicon = match read_optional(&path)? {
        Some(text) => parse_json(&path, &text)?,
        None => entity_lexicon_from_graph(&graph),
    };
    let knowledge = Knowledge {
        graph,
        documents,
        cases,
        lexicon,
        acts,
        aspect_map,
        templates,
        entity_lexicon,
    };
    knowledge.validate().map_err(|e| DataError::invalid(dir, e))?;
    Ok(knowledge)
}

pub fn load_dialogue_file(path: &Path, knowledge: &Knowledge) -> Result<DialogueSet, DataError> {
    let text = read(path)?;
    load_dialogues(&text, DIALOGUE_SCHEMA_VERSION, &knowledge.graph.disease_ids(), &knowledge.acts)
        .map_err(|e| DataError::invalid(path, e))
}

pub fn load_corpus_dialogues(dir: &Path, knowledge: &Knowledge) -> Result<DialogueSet, DataError> {
    load_dialogue_file(&dir.join(DIALOGUES), knowledge)
}

/// Writes every file of the layout.
pub fn write_knowledge(dir: &Path, k: &Knowledge) -> Result<(), DataError> {
    write(&dir.join(ENTITIES), &k.graph.entities_tsv())?;
    write(&dir.join(EDGES), &k.graph.edges_tsv())?;
    write(&dir.join(DISEASES), &jsonl(&k.documents))?;
    write(&dir.join(CASES), &jsonl(&k.cases))?;
    write(&dir.join(LEXICON), &k.lexicon.to_tsv())?;
    write_json(&dir.join(ACTS), &k.acts)?;
    write_json(&dir.join(ASPECT_MAP), &k.aspect_map)?;
    write_json(&dir.join(TEMPLATES), &k.templates)?;
    write_json(&dir.join(ENTITY_LEXICON), &k.entity_lexicon)
}

pub fn write_synthetic(dir: &Path, corpus: &SyntheticCorpus) -> Result<(), DataError> {
    write_knowledge(dir, &Knowledge::from_synthetic(corpus))?;
    write(&dir.join(DIALOGUES), &corpus.dialogues.to_jsonl())
}

pub fn jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("item serializes"));
        out.push('\n');
    }
    out
}

/// Reads and validates `config.json`; a missing path gives the defaults.
pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig, DataError> {
    let config: PipelineConfig = match path {
        Some(p) => read_json(p)?,
        None => PipelineConfig::default(),
    };
    config
        .validate()
        .map_err(|e| DataError::invalid(path.unwrap_or(Path::new("<default config>")), e))?;
    Ok(config)
}
