//! BLEU, ROUGE, entity and disease F1.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("BLEU order must be 1, 2 or 4, got {0}")]
    BleuOrder(usize),
    #[error("candidate and reference counts differ ({0} vs {1})")]
    Misaligned(usize, usize),
    #[error("no candidates")]
    Empty,
    #[error("entity lexicon is empty")]
    EmptyLexicon,
}

fn ngrams(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut out = BTreeMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

fn overlap(c: &BTreeMap<&[String], usize>, r: &BTreeMap<&[String], usize>) -> usize {
    c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum()
}

fn aligned<T, U>(a: &[T], b: &[U]) -> Result<(), MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::Misaligned(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Corpus BLEU up to order `n` with uniform weights. An order with no
/// clipped match uses `1 / (total + 1)`. Brevity penalty is
/// `exp(1 - r/c)` for `c <= r` and 0 for an empty candidate corpus.
pub fn bleu_n(candidates: &[Vec<String>], references: &[Vec<String>], n: usize) -> Result<f64, MetricsError> {
    if !matches!(n, 1 | 2 | 4) {
        return Err(MetricsError::BleuOrder(n));
    }
    aligned(candidates, references)?;
    let c: usize = candidates.iter().map(Vec::len).sum();
    let r: usize = references.iter().map(Vec::len).sum();
    if c == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for m in 1..=n {
        let (mut clipped, mut total) = (0usize, 0usize);
        for (cand, refr) in candidates.iter().zip(references) {
            let cg = ngrams(cand, m);
            clipped += overlap(&cg, &ngrams(refr, m));
            total += cg.values().sum::<usize>();
        }
        let p = if clipped == 0 {
            1.0 / (total as f64 + 1.0)
        } else {
            clipped as f64 / total as f64
        };
        log_sum += libm::log(p);
    }
    let bp = if c > r { 1.0 } else { libm::exp(1.0 - r as f64 / c as f64) };
    Ok(bp * libm::exp(log_sum / n as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(tp: usize, predicted: usize, gold: usize) -> Self {
        let precision = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
        let recall = if gold == 0 { 0.0 } else { tp as f64 / gold as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }
}

/// ROUGE-n of one pair.
pub fn rouge_n_pair(candidate: &[String], reference: &[String], n: usize) -> Prf {
    let cg = ngrams(candidate, n);
    let rg = ngrams(reference, n);
    let hit = overlap(&cg, &rg);
    Prf::from_counts(hit, cg.values().sum(), rg.values().sum())
}

/// Mean ROUGE-n F-measure over pairs.
pub fn rouge_n(candidates: &[Vec<String>], references: &[Vec<String>], n: usize) -> Result<f64, MetricsError> {
    aligned(candidates, references)?;
    let total: f64 = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| rouge_n_pair(c, r, n).f1)
        .sum();
    Ok(total / candidates.len() as f64)
}

/// Surface form to canonical entity id; matching is case-insensitive
/// substring search.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityLexicon(pub BTreeMap<String, String>);

impl EntityLexicon {
    pub fn entities_in(&self, text: &str) -> BTreeSet<String> {
        let lower = text.to_lowercase();
        self.0
            .iter()
            .filter(|(surface, _)| !surface.is_empty() && lower.contains(&surface.to_lowercase()))
            .map(|(_, id)| id.clone())
            .collect()
    }
}

/// Micro entity precision, recall and F1. No predictions at all gives a
/// precision of 0.
pub fn entity_prf(generated: &[String], gold: &[BTreeSet<String>], lexicon: &EntityLexicon) -> Result<Prf, MetricsError> {
    if lexicon.0.is_empty() {
        return Err(MetricsError::EmptyLexicon);
    }
    aligned(generated, gold)?;
    let (mut tp, mut np, mut ng) = (0, 0, 0);
    for (text, g) in generated.iter().zip(gold) {
        let found = lexicon.entities_in(text);
        tp += found.intersection(g).count();
        np += found.len();
        ng += g.len();
    }
    Ok(Prf::from_counts(tp, np, ng))
}

/// Micro F1 over (dialogue, disease) pairs.
pub fn disease_f1(predicted: &[BTreeSet<String>], gold: &[BTreeSet<String>]) -> Result<f64, MetricsError> {
    if predicted.len() != gold.len() {
        return Err(MetricsError::Misaligned(predicted.len(), gold.len()));
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (p, g) in predicted.iter().zip(gold) {
        let hit = p.intersection(g).count();
        tp += hit;
        fp += p.len() - hit;
        fneg += g.len() - hit;
    }
    let denom = 2 * tp + fp + fneg;
    Ok(if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogueEval {
    pub id: String,
    pub predicted: BTreeSet<String>,
    pub gold: BTreeSet<String>,
    pub turns: usize,
}

/// Aggregate evaluation results; all scores lie in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub b1: f64,
    pub b2: f64,
    pub b4: f64,
    pub r1: f64,
    pub r2: f64,
    pub e_p: f64,
    pub e_r: f64,
    pub e_f1: f64,
    pub d_f1: f64,
    pub per_dialogue: Vec<DialogueEval>,
}

/// Generated and reference replies plus diagnosis outcomes, ready to score.
pub struct EvalInputs<'a> {
    pub candidates: &'a [Vec<String>],
    pub references: &'a [Vec<String>],
    pub candidate_texts: &'a [String],
    pub reference_texts: &'a [String],
    pub lexicon: &'a EntityLexicon,
    pub per_dialogue: Vec<DialogueEval>,
}

pub fn build_report(inputs: EvalInputs<'_>) -> Result<EvalReport, MetricsError> {
    let gold_entities: Vec<BTreeSet<String>> = inputs
        .reference_texts
        .iter()
        .map(|t| inputs.lexicon.entities_in(t))
        .collect();
    let e = entity_prf(inputs.candidate_texts, &gold_entities, inputs.lexicon)?;
    let pred: Vec<BTreeSet<String>> = inputs.per_dialogue.iter().map(|d| d.predicted.clone()).collect();
    let gold: Vec<BTreeSet<String>> = inputs.per_dialogue.iter().map(|d| d.gold.clone()).collect();
    Ok(EvalReport {
        b1: bleu_n(inputs.candidates, inputs.references, 1)?,
        b2: bleu_n(inputs.candidates, inputs.references, 2)?,
        b4: bleu_n(inputs.candidates, inputs.references, 4)?,
        r1: rouge_n(inputs.candidates, inputs.references, 1)?,
        r2: rouge_n(inputs.candidates, inputs.references, 2)?,
        e_p: e.precision,
        e_r: e.recall,
        e_f1: e.f1,
        d_f1: disease_f1(&pred, &gold)?,
        per_dialogue: inputs.per_dialogue,
    })
}

pub fn words(text: &str) -> Vec<String> {
    text.split_whitespace().map(ToString::to_string).collect()
}
