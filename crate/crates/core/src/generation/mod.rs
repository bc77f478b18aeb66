//! Knowledge selection guided by diseases and acts, and deterministic
//! template rendering of the doctor reply.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

mod templates;

pub use templates::{render, ActTemplate, Locale, RenderedReply, TemplatePack};

use crate::corpus::{ActCatalogue, DiseaseDocument, Tokenizer};
use crate::retrieval::Bm25Index;

pub const DEFAULT_PASSAGES: usize = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerationError {
    #[error("no template for act `{0}`")]
    MissingTemplate(String),
    #[error("act `{0}` missing from the act-aspect map")]
    UnmappedAct(String),
    #[error("plan has no acts")]
    NoActs,
    #[error("invalid json: {0}")]
    Json(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aspect {
    Overview,
    Etiology,
    Manifestations,
    Examinations,
    Treatment,
}

impl Aspect {
    pub const ALL: [Aspect; 5] = [
        Aspect::Overview,
        Aspect::Etiology,
        Aspect::Manifestations,
        Aspect::Examinations,
        Aspect::Treatment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Aspect::Overview => "overview",
            Aspect::Etiology => "etiology",
            Aspect::Manifestations => "manifestations",
            Aspect::Examinations => "examinations",
            Aspect::Treatment => "treatment",
        }
    }

    fn text(self, doc: &DiseaseDocument) -> &str {
        match self {
            Aspect::Overview => &doc.overview,
            Aspect::Etiology => &doc.etiology,
            Aspect::Manifestations => &doc.manifestations,
            Aspect::Examinations => &doc.examinations,
            Aspect::Treatment => &doc.treatment,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgePassage {
    pub disease: String,
    pub aspect: Aspect,
    pub text: String,
    pub source: String,
}

/// Splits documents into one passage per non-empty aspect.
pub fn passages_from_documents(docs: &[DiseaseDocument]) -> Vec<KnowledgePassage> {
    let mut out = Vec::new();
    for doc in docs {
        for aspect in Aspect::ALL {
            let text = aspect.text(doc).trim();
            if text.is_empty() {
                continue;
            }
            out.push(KnowledgePassage {
                disease: doc.id.clone(),
                aspect,
                text: text.to_string(),
                source: alloc::format!("{}#{}", doc.id, aspect.as_str()),
            });
        }
    }
    out
}

/// Act id to knowledge aspect; `None` marks a non-medical act.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActAspectMap(pub BTreeMap<String, Option<Aspect>>);

impl Default for ActAspectMap {
    fn default() -> Self {
        let medical = [
            ("inquire_present_illness", Aspect::Manifestations),
            ("inquire_medical_history", Aspect::Etiology),
            ("state_diagnosis", Aspect::Overview),
            ("recommend_examination", Aspect::Examinations),
            ("recommend_medicine", Aspect::Treatment),
        ];
        let other = ["greeting", "inquire_onset", "lifestyle_advice", "reassure", "farewell"];
        let mut map: BTreeMap<String, Option<Aspect>> = medical.iter().map(|(a, x)| (a.to_string(), Some(*x))).collect();
        map.extend(other.iter().map(|a| (a.to_string(), None)));
        Self(map)
    }
}

impl ActAspectMap {
    pub fn from_json(text: &str) -> Result<Self, GenerationError> {
        serde_json::from_str(text).map_err(|e| GenerationError::Json(e.to_string()))
    }

    pub fn validate(&self, catalogue: &ActCatalogue) -> Result<(), GenerationError> {
        match catalogue.ids().find(|a| !self.0.contains_key(*a)) {
            Some(a) => Err(GenerationError::UnmappedAct(a.into())),
            None => Ok(()),
        }
    }

    pub fn aspect(&self, act: &str) -> Result<Option<Aspect>, GenerationError> {
        self.0
            .get(act)
            .copied()
            .ok_or_else(|| GenerationError::UnmappedAct(act.into()))
    }
}

/// Passages with a BM25 index keyed by passage source id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassageIndex {
    passages: Vec<KnowledgePassage>,
    by_source: BTreeMap<String, usize>,
    bm25: Bm25Index,
}

impl PassageIndex {
    pub fn build(passages: Vec<KnowledgePassage>, tokenizer: &Tokenizer) -> Self {
        let bm25 = Bm25Index::build(
            passages
                .iter()
                .map(|p| (p.source.clone(), tokenizer.content_tokens(&p.text))),
        );
        let by_source = passages.iter().enumerate().map(|(i, p)| (p.source.clone(), i)).collect();
        Self {
            passages,
            by_source,
            bm25,
        }
    }

    pub fn passages(&self) -> &[KnowledgePassage] {
        &self.passages
    }

    pub fn find(&self, disease: &str, aspect: Aspect) -> Option<&KnowledgePassage> {
        let key = alloc::format!("{}#{}", disease, aspect.as_str());
        self.by_source.get(&key).map(|&i| &self.passages[i])
    }

    pub fn bm25(&self, query_tokens: &[String], k: usize) -> Vec<&KnowledgePassage> {
        self.bm25
            .topk(query_tokens, k)
            .into_iter()
            .map(|(src, _)| &self.passages[self.by_source[&src]])
            .collect()
    }
}

/// Mapped-aspect passages for medical acts (act-major, diseases in the
/// given order), then BM25 over the history when any act is non-medical or
/// no disease is given; deduplicated by (disease, aspect) and cut to `k`.
pub fn select_passages(
    diseases: &[String],
    acts: &[String],
    index: &PassageIndex,
    map: &ActAspectMap,
    history: &str,
    tokenizer: &Tokenizer,
    k: usize,
) -> Result<Vec<KnowledgePassage>, GenerationError> {
    let mut out: Vec<KnowledgePassage> = Vec::new();
    let mut seen: BTreeSet<(String, Aspect)> = BTreeSet::new();
    let mut push = |p: &KnowledgePassage, out: &mut Vec<KnowledgePassage>| {
        if seen.insert((p.disease.clone(), p.aspect)) {
            out.push(p.clone());
        }
    };
    let mut wants_bm25 = diseases.is_empty();
    for act in acts {
        match map.aspect(act)? {
            Some(aspect) => {
                for d in diseases {
                    if let Some(p) = index.find(d, aspect) {
                        push(p, &mut out);
                    }
                }
            }
            None => wants_bm25 = true,
        }
    }
    if wants_bm25 {
        let tokens = tokenizer.content_tokens(history);
        for p in index.bm25(&tokens, k) {
            push(p, &mut out);
        }
    }
    out.truncate(k);
    Ok(out)
}

/// One clause of the plan: the act, the disease it talks about and the
/// passage it draws on, if any.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedClause {
    pub act: String,
    pub disease: Option<String>,
    pub disease_name: Option<String>,
    pub passage: Option<KnowledgePassage>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClauseProvenance {
    pub act: String,
    /// Passage source id the clause quotes.
    pub passage: Option<String>,
    /// Disease named by the clause, from the dialogue state or the passage.
    pub disease: Option<String>,
    /// True when the template fallback was used because no passage fit.
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponsePlan {
    pub acts: Vec<String>,
    pub diseases: Vec<String>,
    pub passages: Vec<KnowledgePassage>,
    pub clauses: Vec<PlannedClause>,
    pub rendered: String,
    pub provenance: Vec<ClauseProvenance>,
}

/// One clause per act. A medical act takes the first passage of its
/// aspect about the top disease, else the first passage of its aspect.
/// The clause's disease is the passage's disease or, without a passage,
/// the top disease.
pub fn compose_plan(
    diseases: &[String],
    acts: &[String],
    passages: &[KnowledgePassage],
    map: &ActAspectMap,
    names: &BTreeMap<String, String>,
) -> Result<ResponsePlan, GenerationError> {
    if acts.is_empty() {
        return Err(GenerationError::NoActs);
    }
    let top = diseases.first();
    let mut clauses = Vec::with_capacity(acts.len());
    for act in acts {
        let passage = match map.aspect(act)? {
            Some(aspect) => passages
                .iter()
                .find(|p| p.aspect == aspect && Some(&p.disease) == top)
                .or_else(|| passages.iter().find(|p| p.aspect == aspect))
                .cloned(),
            None => None,
        };
        let disease = passage.as_ref().map(|p| p.disease.clone()).or_else(|| top.cloned());
        let disease_name = disease.as_ref().map(|d| names.get(d).cloned().unwrap_or_else(|| d.clone()));
        clauses.push(PlannedClause {
            act: act.clone(),
            disease,
            disease_name,
            passage,
        });
    }
    Ok(ResponsePlan {
        acts: acts.to_vec(),
        diseases: diseases.to_vec(),
        passages: passages.to_vec(),
        clauses,
        rendered: String::new(),
        provenance: Vec::new(),
    })
}
