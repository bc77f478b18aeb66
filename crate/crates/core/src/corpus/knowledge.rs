use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{build_query, CorpusError, SoapSegment};

/// One disease-encyclopedia record (`diseases.jsonl`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiseaseDocument {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub overview: String,
    #[serde(default)]
    pub etiology: String,
    #[serde(default)]
    pub symptoms: Vec<String>,
    #[serde(default)]
    pub manifestations: String,
    #[serde(default)]
    pub examinations: String,
    #[serde(default)]
    pub treatment: String,
}

impl DiseaseDocument {
    /// Text seen by the document retriever: name, etiology and symptoms.
    pub fn retrieval_text(&self) -> String {
        let mut parts: Vec<&str> = Vec::with_capacity(3 + self.symptoms.len());
        parts.push(&self.name);
        parts.push(&self.etiology);
        parts.extend(self.symptoms.iter().map(String::as_str));
        parts.push(&self.manifestations);
        parts.retain(|p| !p.trim().is_empty());
        parts.join(" ")
    }
}

/// A past consultation in SOAP form with its diagnosed diseases (`cases.jsonl`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientCase {
    pub id: String,
    pub diseases: Vec<String>,
    pub soap: Vec<SoapSegment>,
    /// Dialogue the case was derived from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_dialogue: Option<String>,
}

impl PatientCase {
    /// Retrieval text: deduplicated S/O/A segments.
    pub fn retrieval_text(&self) -> String {
        build_query(&self.soap, core::iter::empty()).text
    }
}

fn parse_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<(usize, T)>, CorpusError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(raw).map_err(|e| CorpusError::Format {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, v));
    }
    Ok(out)
}

pub fn parse_documents(text: &str) -> Result<Vec<DiseaseDocument>, CorpusError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (line, doc) in parse_jsonl::<DiseaseDocument>(text)? {
        if !seen.insert(doc.id.clone()) {
            return Err(CorpusError::Format {
                line,
                message: alloc::format!("duplicate disease id `{}`", doc.id),
            });
        }
        out.push(doc);
    }
    Ok(out)
}

pub fn parse_cases(text: &str, known_diseases: &BTreeSet<String>) -> Result<Vec<PatientCase>, CorpusError> {
    let mut out = Vec::new();
    for (line, case) in parse_jsonl::<PatientCase>(text)? {
        if case.diseases.is_empty() {
            return Err(CorpusError::Format {
                line,
                message: "case has no diseases".into(),
            });
        }
        if let Some(id) = case.diseases.iter().find(|d| !known_diseases.contains(*d)) {
            return Err(CorpusError::UnknownDisease { line, id: id.clone() });
        }
        out.push(case);
    }
    Ok(out)
}
