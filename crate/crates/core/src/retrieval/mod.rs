//! Stage-one retrieval: dense case and document retrievers, score fusion
//! into a preliminary disease list, and a BM25 index for passages.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

mod bm25;
mod contrastive;
mod encoder;

pub use bm25::Bm25Index;
pub use contrastive::{
    contrastive_loss, contrastive_step, negative_mask, train_contrastive, ContrastiveConfig, ContrastivePair,
    StepOutcome,
};
pub use encoder::{score_pair, Encoder};

use crate::corpus::{DiseaseDocument, PatientCase, Tokenizer};
use crate::numerics::{NumericsError, ParamStore};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RetrievalError {
    #[error("disease corpus is empty")]
    EmptyDiseaseCorpus,
    #[error("K must be at least 1")]
    InvalidK,
    #[error("contrastive batch needs at least 2 items, got {0}")]
    BatchTooSmall(usize),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredDisease {
    pub disease: String,
    pub s_case_star: f64,
    pub s_doc: f64,
    pub s: f64,
}

/// Fuses case and document scores into a ranked disease list.
///
/// The disease universe is the set of documents. A disease's case score is
/// the best score among cases diagnosed with it; diseases without any case
/// take the lowest case score in the corpus (0 when there are no cases).
pub fn fuse_scores(
    case_scores: &[(&[String], f64)],
    doc_scores: &[(&str, f64)],
    k: usize,
) -> Result<Vec<ScoredDisease>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    if doc_scores.is_empty() {
        return Err(RetrievalError::EmptyDiseaseCorpus);
    }
    let floor = case_scores.iter().map(|c| c.1).reduce(f64::min).unwrap_or(0.0);
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for (diseases, s) in case_scores {
        for d in diseases.iter() {
            let e = best.entry(d.as_str()).or_insert(*s);
            if *s > *e {
                *e = *s;
            }
        }
    }
    let mut out: Vec<ScoredDisease> = doc_scores
        .iter()
        .map(|&(d, s_doc)| {
            let s_case_star = best.get(d).copied().unwrap_or(floor);
            ScoredDisease {
                disease: String::from(d),
                s_case_star,
                s_doc,
                s: (s_case_star + s_doc) / 2.0,
            }
        })
        .collect();
    out.sort_by(|a, b| b.s.total_cmp(&a.s).then_with(|| a.disease.cmp(&b.disease)));
    out.truncate(k);
    Ok(out)
}

/// Pre-encoded case and document collections with their encoders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Retriever {
    pub case_encoder: Encoder,
    pub doc_encoder: Encoder,
    case_ids: Vec<String>,
    case_diseases: Vec<Vec<String>>,
    case_vecs: Vec<Vec<f64>>,
    disease_ids: Vec<String>,
    doc_vecs: Vec<Vec<f64>>,
}

impl Retriever {
    pub fn build(
        store: &ParamStore,
        tokenizer: &Tokenizer,
        case_encoder: Encoder,
        doc_encoder: Encoder,
        cases: &[PatientCase],
        docs: &[DiseaseDocument],
    ) -> Result<Self, RetrievalError> {
        if docs.is_empty() {
            return Err(RetrievalError::EmptyDiseaseCorpus);
        }
        let case_vecs = cases
            .iter()
            .map(|c| case_encoder.encode(store, tokenizer, &c.retrieval_text()))
            .collect::<Result<_, _>>()?;
        let doc_vecs = docs
            .iter()
            .map(|d| doc_encoder.encode(store, tokenizer, &d.retrieval_text()))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            case_encoder,
            doc_encoder,
            case_ids: cases.iter().map(|c| c.id.clone()).collect(),
            case_diseases: cases.iter().map(|c| c.diseases.clone()).collect(),
            case_vecs,
            disease_ids: docs.iter().map(|d| d.id.clone()).collect(),
            doc_vecs,
        })
    }

    pub fn num_cases(&self) -> usize {
        self.case_ids.len()
    }

    pub fn case_id(&self, i: usize) -> &str {
        &self.case_ids[i]
    }

    pub fn case_diseases(&self, i: usize) -> &[String] {
        &self.case_diseases[i]
    }

    pub fn disease_ids(&self) -> &[String] {
        &self.disease_ids
    }

    pub fn case_scores(&self, store: &ParamStore, tokenizer: &Tokenizer, query: &str) -> Result<Vec<f64>, RetrievalError> {
        let q = self.case_encoder.encode(store, tokenizer, query)?;
        Ok(self.case_vecs.iter().map(|v| score_pair(&q, v)).collect::<Result<_, _>>()?)
    }

    pub fn doc_scores(&self, store: &ParamStore, tokenizer: &Tokenizer, query: &str) -> Result<Vec<f64>, RetrievalError> {
        let q = self.doc_encoder.encode(store, tokenizer, query)?;
        Ok(self.doc_vecs.iter().map(|v| score_pair(&q, v)).collect::<Result<_, _>>()?)
    }

    /// Top-`k` diseases for a query text.
    pub fn preliminary_list(
        &self,
        store: &ParamStore,
        tokenizer: &Tokenizer,
        query: &str,
        k: usize,
    ) -> Result<Vec<ScoredDisease>, RetrievalError> {
        let cs = self.case_scores(store, tokenizer, query)?;
        let ds = self.doc_scores(store, tokenizer, query)?;
        let cases: Vec<(&[String], f64)> = self.case_diseases.iter().map(Vec::as_slice).zip(cs).collect();
        let docs: Vec<(&str, f64)> = self.disease_ids.iter().map(String::as_str).zip(ds).collect();
        fuse_scores(&cases, &docs, k)
    }
}
