//! Dialogues, SOAP segments, tokenization, query building, knowledge
//! records, and the synthetic corpus generator.

mod knowledge;
mod query;
mod soap;
pub mod synth;
mod tokenize;

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use knowledge::{parse_cases, parse_documents, DiseaseDocument, PatientCase};
pub use query::{build_query, dedup_segments, normalize_segment_text, Query};
pub use soap::{extract_soap, find_matches, LexiconEntry, LexiconMatch, SoapLexicon, MAX_SEGMENT_CHARS};
pub use tokenize::{fnv1a, Tokenizer, TokenizerConfig, TokenizerMode, MIN_HASH_BUCKETS};

pub const DIALOGUE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("line {line}: unknown disease id `{id}`")]
    UnknownDisease { line: usize, id: String },
    #[error("line {line}: unknown act id `{id}`")]
    UnknownAct { line: usize, id: String },
    #[error("unsupported dialogue schema version {0}")]
    UnsupportedSchema(u32),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("infeasible synthetic corpus spec: {0}")]
    InfeasibleSpec(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SoapSection {
    S,
    O,
    A,
    P,
}

impl SoapSection {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "S" | "s" => Some(Self::S),
            "O" | "o" => Some(Self::O),
            "A" | "a" => Some(Self::A),
            "P" | "p" => Some(Self::P),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::S => "S",
            Self::O => "O",
            Self::A => "A",
            Self::P => "P",
        }
    }

    /// Sections a speaker can contribute: patients report subjective and
    /// objective findings, doctors assessments and plans.
    pub fn allowed_for(self, speaker: Speaker) -> bool {
        match speaker {
            Speaker::Patient => matches!(self, Self::S | Self::O),
            Speaker::Doctor => matches!(self, Self::A | Self::P),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoapSegment {
    pub section: SoapSection,
    pub text: String,
    #[serde(default)]
    pub turn_index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Patient,
    Doctor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub acts: Vec<String>,
    /// Pre-annotated segments. When present they replace rule-based extraction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<SoapSegment>>,
}

impl Utterance {
    pub fn patient(text: impl Into<String>) -> Self {
        Self {
            speaker: Speaker::Patient,
            text: text.into(),
            acts: Vec::new(),
            segments: None,
        }
    }

    pub fn doctor(text: impl Into<String>, acts: Vec<String>) -> Self {
        Self {
            speaker: Speaker::Doctor,
            text: text.into(),
            acts,
            segments: None,
        }
    }

    /// Segments for this turn: the annotation if present, otherwise rule-based
    /// extraction, keeping only sections the speaker can contribute.
    pub fn soap_segments(&self, lexicon: &SoapLexicon, turn_index: usize) -> Vec<SoapSegment> {
        let segs = match &self.segments {
            Some(s) => s
                .iter()
                .map(|seg| SoapSegment {
                    turn_index,
                    ..seg.clone()
                })
                .collect(),
            None => extract_soap(&self.text, lexicon, turn_index),
        };
        segs.into_iter()
            .filter(|s| s.section.allowed_for(self.speaker))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub split: Split,
    pub gold_diseases: Vec<String>,
    pub turns: Vec<Utterance>,
}

impl Dialogue {
    /// Indices of patient turns.
    pub fn patient_turns(&self) -> impl Iterator<Item = usize> + '_ {
        self.turns
            .iter()
            .enumerate()
            .filter(|(_, u)| u.speaker == Speaker::Patient)
            .map(|(i, _)| i)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DialogueSet {
    pub dialogues: Vec<Dialogue>,
}

impl DialogueSet {
    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Dialogue> {
        self.dialogues.iter().filter(move |d| d.split == split)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for d in &self.dialogues {
            out.push_str(&serde_json::to_string(d).expect("dialogue serializes"));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActDef {
    pub id: String,
    pub name: String,
}

/// The flat doctor dialogue-act catalogue.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActCatalogue {
    pub acts: Vec<ActDef>,
}

const DEFAULT_ACTS: [(&str, &str); 10] = [
    ("greeting", "Greeting"),
    ("inquire_present_illness", "Inquire about present illness"),
    ("inquire_onset", "Inquire about symptom onset"),
    ("inquire_medical_history", "Inquire about medical history"),
    ("state_diagnosis", "State diagnosis"),
    ("recommend_examination", "Recommend examination"),
    ("recommend_medicine", "Recommend medicine"),
    ("lifestyle_advice", "Give lifestyle advice"),
    ("reassure", "Reassure patient"),
    ("farewell", "Farewell"),
];

impl Default for ActCatalogue {
    fn default() -> Self {
        Self {
            acts: DEFAULT_ACTS
                .iter()
                .map(|(id, name)| ActDef {
                    id: id.to_string(),
                    name: name.to_string(),
                })
                .collect(),
        }
    }
}

impl ActCatalogue {
    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let cat: Self = serde_json::from_str(text).map_err(|e| CorpusError::Format {
            line: e.line(),
            message: e.to_string(),
        })?;
        cat.validate()?;
        Ok(cat)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.acts.is_empty() {
            return Err(CorpusError::Config("act catalogue is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for a in &self.acts {
            if !seen.insert(a.id.as_str()) {
                return Err(CorpusError::Config(alloc::format!("duplicate act id `{}`", a.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.acts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.acts.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.acts.iter().position(|a| a.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index_of(id).is_some()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.acts.iter().map(|a| a.id.as_str())
    }
}

/// Parses and validates `dialogues.jsonl`. Every error carries the 1-based line.
pub fn load_dialogues(
    text: &str,
    schema_version: u32,
    known_diseases: &BTreeSet<String>,
    acts: &ActCatalogue,
) -> Result<DialogueSet, CorpusError> {
    if schema_version != DIALOGUE_SCHEMA_VERSION {
        return Err(CorpusError::UnsupportedSchema(schema_version));
    }
    let mut dialogues = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut d: Dialogue = serde_json::from_str(raw).map_err(|e| CorpusError::Format {
            line,
            message: e.to_string(),
        })?;
        validate_dialogue(&mut d, line, known_diseases, acts)?;
        if !ids.insert(d.id.clone()) {
            return Err(CorpusError::Format {
                line,
                message: alloc::format!("duplicate dialogue id `{}`", d.id),
            });
        }
        dialogues.push(d);
    }
    Ok(DialogueSet { dialogues })
}

fn validate_dialogue(
    d: &mut Dialogue,
    line: usize,
    known_diseases: &BTreeSet<String>,
    acts: &ActCatalogue,
) -> Result<(), CorpusError> {
    let fail = |message: String| CorpusError::Format { line, message };
    if d.gold_diseases.is_empty() {
        return Err(fail("gold_diseases is empty".into()));
    }
    for id in &d.gold_diseases {
        if !known_diseases.contains(id) {
            return Err(CorpusError::UnknownDisease {
                line,
                id: id.clone(),
            });
        }
    }
    if d.turns.is_empty() {
        return Err(fail("dialogue has no turns".into()));
    }
    for (t, u) in d.turns.iter_mut().enumerate() {
        let expected = if t % 2 == 0 { Speaker::Patient } else { Speaker::Doctor };
        if u.speaker != expected {
            return Err(fail(alloc::format!(
                "turn {t}: expected {expected:?}, turns must alternate starting with the patient"
            )));
        }
        if u.speaker == Speaker::Patient && !u.acts.is_empty() {
            return Err(fail(alloc::format!("turn {t}: patient turns carry no acts")));
        }
        for a in &u.acts {
            if !acts.contains(a) {
                return Err(CorpusError::UnknownAct { line, id: a.clone() });
            }
        }
        if let Some(segs) = &mut u.segments {
            for s in segs.iter_mut() {
                let n = s.text.chars().count();
                if n == 0 || n > MAX_SEGMENT_CHARS {
                    return Err(fail(alloc::format!("turn {t}: segment length {n} outside 1..=256")));
                }
                s.turn_index = t;
            }
        }
    }
    Ok(())
}
