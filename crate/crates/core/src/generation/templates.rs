use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ClauseProvenance, GenerationError, KnowledgePassage, ResponsePlan};
use crate::corpus::ActCatalogue;

const DISEASE_SLOT: &str = "{disease}";
const SNIPPET_SLOT: &str = "{passage_snippet}";
const TERMINALS: &[char] = &['.', '!', '?', '。', '！', '？'];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Locale {
    En,
    Zh,
}

impl Locale {
    fn terminator(self) -> char {
        match self {
            Locale::En => '.',
            Locale::Zh => '。',
        }
    }

    fn separator(self) -> &'static str {
        match self {
            Locale::En => " ",
            Locale::Zh => "",
        }
    }
}

/// `clause` may use `{disease}` and `{passage_snippet}`; `fallback` is used
/// when the clause needs a passage that the plan lacks and may only use
/// `{disease}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActTemplate {
    pub clause: String,
    pub fallback: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplatePack {
    pub locale: Locale,
    /// Fills `{disease}` when the plan names no disease.
    pub unknown_disease: String,
    pub acts: BTreeMap<String, ActTemplate>,
}

impl Default for TemplatePack {
    fn default() -> Self {
        let t = |clause: &str, fallback: &str| ActTemplate {
            clause: clause.to_string(),
            fallback: fallback.to_string(),
        };
        let acts = [
            ("greeting", t("Hello, I am glad to help you", "Hello, I am glad to help you")),
            (
                "inquire_present_illness",
                t(
                    "{passage_snippet}. Do you have any of these symptoms?",
                    "Could you describe your symptoms in more detail?",
                ),
            ),
            ("inquire_onset", t("When did the symptoms start?", "When did the symptoms start?")),
            (
                "inquire_medical_history",
                t(
                    "{passage_snippet}. Have you had anything like this before?",
                    "Have you had anything like this before?",
                ),
            ),
            ("state_diagnosis", t("It is likely {disease}. {passage_snippet}", "It is likely {disease}")),
            (
                "recommend_examination",
                t("For {disease}, {passage_snippet}", "I suggest a check-up at the hospital"),
            ),
            (
                "recommend_medicine",
                t("For {disease}, {passage_snippet}", "Please ask a pharmacist about suitable medicine"),
            ),
            (
                "lifestyle_advice",
                t("Please rest well and keep a light diet", "Please rest well and keep a light diet"),
            ),
            ("reassure", t("Do not worry too much, it can be managed", "Do not worry too much, it can be managed")),
            ("farewell", t("You are welcome, take care", "You are welcome, take care")),
        ];
        Self {
            locale: Locale::En,
            unknown_disease: "this condition".to_string(),
            acts: acts.into_iter().map(|(a, t)| (a.to_string(), t)).collect(),
        }
    }
}

impl TemplatePack {
    pub fn from_json(text: &str) -> Result<Self, GenerationError> {
        serde_json::from_str(text).map_err(|e| GenerationError::Json(e.to_string()))
    }

    pub fn validate(&self, catalogue: &ActCatalogue) -> Result<(), GenerationError> {
        if let Some(a) = catalogue.ids().find(|a| !self.acts.contains_key(*a)) {
            return Err(GenerationError::MissingTemplate(a.into()));
        }
        if let Some((a, _)) = self.acts.iter().find(|(_, t)| t.fallback.contains(SNIPPET_SLOT)) {
            return Err(GenerationError::Json(alloc::format!(
                "fallback of `{a}` must not use {SNIPPET_SLOT}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderedReply {
    pub text: String,
    pub provenance: Vec<ClauseProvenance>,
}

fn snippet(p: &KnowledgePassage) -> &str {
    p.text.trim().trim_end_matches(TERMINALS).trim_end()
}

/// Fills each clause's template and joins the clauses with the locale's
/// punctuation. Every clause yields one provenance record.
pub fn render(plan: &ResponsePlan, pack: &TemplatePack) -> Result<RenderedReply, GenerationError> {
    if plan.clauses.is_empty() {
        return Err(GenerationError::NoActs);
    }
    let mut parts = Vec::with_capacity(plan.clauses.len());
    let mut provenance = Vec::with_capacity(plan.clauses.len());
    for clause in &plan.clauses {
        let tpl = pack
            .acts
            .get(&clause.act)
            .ok_or_else(|| GenerationError::MissingTemplate(clause.act.clone()))?;
        let wants_passage = tpl.clause.contains(SNIPPET_SLOT);
        let (pattern, passage, fallback) = match (&clause.passage, wants_passage) {
            (Some(p), true) => (&tpl.clause, Some(p), false),
            (None, true) => (&tpl.fallback, None, true),
            (_, false) => (&tpl.clause, None, false),
        };
        let names_disease = pattern.contains(DISEASE_SLOT);
        let mut text = pattern.replace(DISEASE_SLOT, clause.disease_name.as_deref().unwrap_or(&pack.unknown_disease));
        if let Some(p) = passage {
            text = text.replace(SNIPPET_SLOT, snippet(p));
        }
        let mut text = text.trim().to_string();
        if !text.ends_with(TERMINALS) {
            text.push(pack.locale.terminator());
        }
        parts.push(text);
        provenance.push(ClauseProvenance {
            act: clause.act.clone(),
            passage: passage.map(|p| p.source.clone()),
            disease: if names_disease { clause.disease.clone() } else { None },
            fallback,
        });
    }
    Ok(RenderedReply {
        text: parts.join(pack.locale.separator()),
        provenance,
    })
}
