use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::train::micro_f1;
use super::{run_turn_with, Engine, PipelineConfig, PipelineError, SessionState, TurnTrace};
use crate::classifier::build_target_attention;
use crate::corpus::{Dialogue, Speaker};
use crate::dog::{induce_subgraph, SubGraph};
use crate::metrics::{build_report, words, DialogueEval, EvalInputs, EvalReport};
use crate::numerics::Tensor2;

/// Evaluation report plus act and explanation scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub act_micro_f1: f64,
    /// Mean attention mass on gold-path entities at the final patient turn,
    /// over dialogues where the graph classifier ran.
    pub gold_path_mass: Option<f64>,
    /// The same mean for uniform attention over the same subgraphs.
    pub uniform_path_mass: Option<f64>,
    pub replies: usize,
}

/// Attention mass on entities of gold diagnostic paths, averaged over
/// segment rows, and the mass uniform attention would place there. Zero
/// when no gold disease is in the subgraph.
pub fn gold_path_mass(sg: &SubGraph, gold: &[String], attention: &Tensor2) -> (f64, f64) {
    let n = sg.len();
    if n == 0 || attention.rows() == 0 || !gold.iter().any(|g| sg.index_of(g).is_some()) {
        return (0.0, 0.0);
    }
    let target = build_target_attention(sg, gold, 1);
    let on: Vec<bool> = target.row(0).iter().map(|&t| t > 0.0).collect();
    let mass: f64 = (0..attention.rows())
        .map(|r| {
            attention
                .row(r)
                .iter()
                .zip(&on)
                .filter(|(_, &o)| o)
                .map(|(a, _)| a)
                .sum::<f64>()
        })
        .sum::<f64>()
        / attention.rows() as f64;
    (mass, on.iter().filter(|&&o| o).count() as f64 / n as f64)
}

fn replay(engine: &Engine, d: &Dialogue, t: usize, config: &PipelineConfig) -> Result<TurnTrace, PipelineError> {
    let mut state = SessionState::with_history(d.id.clone(), config.clone(), &d.turns[..t]);
    Ok(run_turn_with(engine, &mut state, d.turns[t].clone())?.1)
}

fn last_patient_turn(d: &Dialogue) -> Option<usize> {
    d.patient_turns().last()
}

fn predicted_set(trace: &TurnTrace) -> BTreeSet<String> {
    trace
        .refined
        .as_ref()
        .map(|r| r.selected.iter().cloned().collect())
        .unwrap_or_default()
}

/// Teacher-forced diagnosis at the final patient turn of each dialogue.
pub fn final_diagnoses(engine: &Engine, dialogues: &[&Dialogue], config: &PipelineConfig) -> Result<Vec<DialogueEval>, PipelineError> {
    let mut out = Vec::with_capacity(dialogues.len());
    for d in dialogues {
        let Some(t) = last_patient_turn(d) else { continue };
        let trace = replay(engine, d, t, config)?;
        out.push(DialogueEval {
            id: d.id.clone(),
            predicted: predicted_set(&trace),
            gold: d.gold_diseases.iter().cloned().collect(),
            turns: d.turns.len(),
        });
    }
    if out.is_empty() {
        return Err(PipelineError::EmptySplit);
    }
    Ok(out)
}

/// Runs every patient turn on the gold history and scores the predicted
/// reply against the gold doctor reply that follows it.
pub fn evaluate(engine: &Engine, dialogues: &[&Dialogue], config: &PipelineConfig) -> Result<EvalOutcome, PipelineError> {
    let mut cand_texts = Vec::new();
    let mut ref_texts = Vec::new();
    let mut pred_acts = Vec::new();
    let mut gold_acts = Vec::new();
    let mut per_dialogue = Vec::new();
    let mut masses = Vec::new();
    for d in dialogues {
        let Some(last) = last_patient_turn(d) else { continue };
        for t in d.patient_turns().collect::<Vec<_>>() {
            let trace = replay(engine, d, t, config)?;
            if let Some(gold) = d.turns.get(t + 1).filter(|u| u.speaker == Speaker::Doctor) {
                cand_texts.push(trace.reply.clone());
                ref_texts.push(gold.text.clone());
                pred_acts.push(trace.acts.as_ref().map(|a| a.selected.clone()).unwrap_or_default());
                gold_acts.push(gold.acts.clone());
            }
            if t != last {
                continue;
            }
            if let Some(att) = &trace.attention {
                let ids: Vec<String> = trace.preliminary.iter().map(|s| s.disease.clone()).collect();
                let sg = induce_subgraph(&engine.knowledge.graph, &ids)
                    .map_err(|e| PipelineError::Stage {
                        stage: "induce_subgraph",
                        message: e.to_string(),
                    })?;
                masses.push(gold_path_mass(&sg, &d.gold_diseases, att));
            }
            per_dialogue.push(DialogueEval {
                id: d.id.clone(),
                predicted: predicted_set(&trace),
                gold: d.gold_diseases.iter().cloned().collect(),
                turns: d.turns.len(),
            });
        }
    }
    if per_dialogue.is_empty() || cand_texts.is_empty() {
        return Err(PipelineError::EmptySplit);
    }
    let cands: Vec<Vec<String>> = cand_texts.iter().map(|t| words(t)).collect();
    let refs: Vec<Vec<String>> = ref_texts.iter().map(|t| words(t)).collect();
    let report = build_report(EvalInputs {
        candidates: &cands,
        references: &refs,
        candidate_texts: &cand_texts,
        reference_texts: &ref_texts,
        lexicon: &engine.knowledge.entity_lexicon,
        per_dialogue,
    })
    .map_err(|e| PipelineError::Metrics(e.to_string()))?;
    let mean = |f: fn(&(f64, f64)) -> f64| (!masses.is_empty()).then(|| masses.iter().map(f).sum::<f64>() / masses.len() as f64);
    Ok(EvalOutcome {
        report,
        act_micro_f1: micro_f1(&pred_acts, &gold_acts),
        gold_path_mass: mean(|m| m.0),
        uniform_path_mass: mean(|m| m.1),
        replies: cand_texts.len(),
    })
}
