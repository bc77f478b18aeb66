//! Multi-label doctor act prediction and per-act threshold tuning.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ActCatalogue, Tokenizer};
use crate::numerics::{adamw_step, AdamW, NumericsError, OptState, ParamStore, Tape, Tensor2, Var};
use crate::retrieval::Encoder;

/// Threshold grid `0.05, 0.10, ..., 0.95`.
pub fn threshold_grid() -> impl Iterator<Item = f64> {
    (1..=19).map(|k| k as f64 / 20.0)
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ActsError {
    #[error("unknown act `{0}`")]
    UnknownAct(String),
    #[error("threshold {0} outside (0, 1)")]
    Threshold(f64),
    #[error("expected {expected} acts, got {got}")]
    Width { expected: usize, got: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActPredictor {
    pub segment_encoder: Encoder,
    pub history_encoder: Encoder,
    /// `W^a`, `m x 2d`.
    pub wa: String,
    pub acts: Vec<String>,
    pub thresholds: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActPrediction {
    /// `(act, p)` in catalogue order.
    pub probs: Vec<(String, f64)>,
    /// Selected acts in catalogue order; never empty.
    pub selected: Vec<String>,
}

/// One training or validation instance: all segment texts so far, the
/// history window, and the doctor's acts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActExample {
    pub segments: String,
    pub history: String,
    pub acts: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ActTrainConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            batch_size: 16,
            lr: 1e-2,
            seed: 0,
        }
    }
}

impl ActPredictor {
    /// Segment and history encoders share one embedding table.
    pub fn new(prefix: &str, catalogue: &ActCatalogue) -> Self {
        let table = alloc::format!("{prefix}.table");
        let enc = |part: &str| Encoder {
            table: table.clone(),
            proj: alloc::format!("{prefix}.{part}.proj"),
            bias: alloc::format!("{prefix}.{part}.bias"),
        };
        let acts: Vec<String> = catalogue.ids().map(String::from).collect();
        Self {
            segment_encoder: enc("seg"),
            history_encoder: enc("hist"),
            wa: alloc::format!("{prefix}.wa"),
            thresholds: alloc::vec![DEFAULT_THRESHOLD; acts.len()],
            acts,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, buckets: usize, d: usize, rng: &mut R) {
        self.segment_encoder.init(store, buckets, d, rng);
        self.history_encoder.init(store, buckets, d, rng);
        store.insert_xavier(&self.wa, self.acts.len(), 2 * d, rng);
    }

    pub fn set_thresholds(&mut self, thresholds: Vec<f64>) -> Result<(), ActsError> {
        if thresholds.len() != self.acts.len() {
            return Err(ActsError::Width {
                expected: self.acts.len(),
                got: thresholds.len(),
            });
        }
        if let Some(&t) = thresholds.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
            return Err(ActsError::Threshold(t));
        }
        self.thresholds = thresholds;
        Ok(())
    }

    /// `sigmoid([H^s ; H] W^a^T)`, one row per (segments, history) pair.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, tokenizer: &Tokenizer, inputs: &[(&str, &str)]) -> Result<Var, ActsError> {
        let hs = self
            .segment_encoder
            .forward(tape, store, inputs.iter().map(|(s, _)| tokenizer.bag(s)).collect())?;
        let ht = self
            .history_encoder
            .forward(tape, store, inputs.iter().map(|(_, h)| tokenizer.bag(h)).collect())?;
        let x = tape.concat_cols(&[hs, ht])?;
        let wa = tape.param(store, &self.wa)?;
        let z = tape.matmul_nt(x, wa)?;
        Ok(tape.sigmoid(z))
    }

    pub fn probabilities(&self, store: &ParamStore, tokenizer: &Tokenizer, segments: &str, history: &str) -> Result<Vec<f64>, ActsError> {
        let mut tape = Tape::new();
        let p = self.forward(&mut tape, store, tokenizer, &[(segments, history)])?;
        Ok(tape.value(p).data().to_vec())
    }

    pub fn predict(&self, store: &ParamStore, tokenizer: &Tokenizer, segments: &str, history: &str) -> Result<ActPrediction, ActsError> {
        let p = self.probabilities(store, tokenizer, segments, history)?;
        Ok(self.select(&p))
    }

    /// Thresholds each act; falls back to the most probable act (lowest
    /// catalogue index on ties) when nothing passes.
    pub fn select(&self, p: &[f64]) -> ActPrediction {
        let mut selected: Vec<String> = self
            .acts
            .iter()
            .zip(p.iter().zip(&self.thresholds))
            .filter(|(_, (p, t))| *p >= *t)
            .map(|(a, _)| a.clone())
            .collect();
        if selected.is_empty() {
            let best = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
            selected.push(self.acts[best].clone());
        }
        ActPrediction {
            probs: self.acts.iter().cloned().zip(p.iter().copied()).collect(),
            selected,
        }
    }

    pub fn labels(&self, acts: &[String]) -> Result<Vec<bool>, ActsError> {
        if let Some(a) = acts.iter().find(|a| !self.acts.contains(a)) {
            return Err(ActsError::UnknownAct(a.clone()));
        }
        Ok(self.acts.iter().map(|a| acts.contains(a)).collect())
    }
}

/// Mean BCE over every entry of `probs` against 0/1 labels.
pub fn act_loss(tape: &mut Tape, probs: Var, labels: &[bool]) -> Result<Var, NumericsError> {
    let entries = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| (i, if y { 1.0 } else { 0.0 }))
        .collect();
    tape.bce(probs, entries)
}

pub fn train_acts(
    store: &mut ParamStore,
    predictor: &ActPredictor,
    tokenizer: &Tokenizer,
    examples: &[ActExample],
    config: &ActTrainConfig,
) -> Result<Vec<f64>, ActsError> {
    let labels = examples
        .iter()
        .map(|e| predictor.labels(&e.acts))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = OptState::new(AdamW::with_lr(config.lr));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut cursor = order.len();
    let mut curve = Vec::with_capacity(config.steps);
    if examples.is_empty() {
        return Ok(curve);
    }
    let size = config.batch_size.clamp(1, examples.len());
    for _ in 0..config.steps {
        let mut batch = Vec::with_capacity(size);
        while batch.len() < size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let inputs: Vec<(&str, &str)> = batch
            .iter()
            .map(|&i| (examples[i].segments.as_str(), examples[i].history.as_str()))
            .collect();
        let flat: Vec<bool> = batch.iter().flat_map(|&i| labels[i].iter().copied()).collect();
        let mut tape = Tape::new();
        let p = predictor.forward(&mut tape, store, tokenizer, &inputs)?;
        let loss = act_loss(&mut tape, p, &flat)?;
        curve.push(tape.value(loss).data()[0]);
        let grads = tape.backward(loss)?;
        adamw_step(store, &grads.params(&tape), &mut opt)?;
    }
    Ok(curve)
}

/// F1 of predicting positive iff `score >= threshold`.
pub fn f1_at(scores: &[f64], labels: &[bool], threshold: f64) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

pub struct TunedThresholds {
    pub thresholds: Vec<f64>,
    /// Acts with no positive validation label; their threshold stays 0.5.
    pub absent: Vec<usize>,
}

/// Per-act grid search maximizing F1, ties to the lowest threshold.
/// `scores[i][a]` and `labels[i][a]` index example `i`, act `a`.
pub fn tune_thresholds(scores: &[Vec<f64>], labels: &[Vec<bool>], m: usize) -> Result<TunedThresholds, ActsError> {
    for row in scores.iter().map(Vec::len).chain(labels.iter().map(Vec::len)) {
        if row != m {
            return Err(ActsError::Width { expected: m, got: row });
        }
    }
    let mut thresholds = Vec::with_capacity(m);
    let mut absent = Vec::new();
    for a in 0..m {
        let col: Vec<f64> = scores.iter().map(|r| r[a]).collect();
        let ys: Vec<bool> = labels.iter().map(|r| r[a]).collect();
        if !ys.iter().any(|&y| y) {
            log::warn!("act column {a} has no positive validation label; threshold left at {DEFAULT_THRESHOLD}");
            absent.push(a);
            thresholds.push(DEFAULT_THRESHOLD);
            continue;
        }
        let mut best = (f64::NEG_INFINITY, DEFAULT_THRESHOLD);
        for t in threshold_grid() {
            let f = f1_at(&col, &ys, t);
            if f > best.0 {
                best = (f, t);
            }
        }
        thresholds.push(best.1);
    }
    Ok(TunedThresholds { thresholds, absent })
}

/// Probability rows for a batch of examples, used for tuning and scoring.
pub fn score_examples(
    store: &ParamStore,
    predictor: &ActPredictor,
    tokenizer: &Tokenizer,
    examples: &[ActExample],
) -> Result<Vec<Vec<f64>>, ActsError> {
    if examples.is_empty() {
        return Ok(Vec::new());
    }
    let inputs: Vec<(&str, &str)> = examples.iter().map(|e| (e.segments.as_str(), e.history.as_str())).collect();
    let mut tape = Tape::new();
    let p = predictor.forward(&mut tape, store, tokenizer, &inputs)?;
    let p: &Tensor2 = tape.value(p);
    Ok((0..p.rows()).map(|r| p.row(r).to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{TokenizerConfig, TokenizerMode};
    use alloc::string::ToString;
    use alloc::vec;

    fn setup() -> (ParamStore, ActPredictor, Tokenizer) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let pred = ActPredictor::new("acts", &ActCatalogue::default());
        pred.init(&mut store, 256, 8, &mut rng);
        let tok = Tokenizer::new(TokenizerConfig {
            mode: TokenizerMode::Whitespace,
            hash_buckets: 256,
            ..TokenizerConfig::default()
        })
        .unwrap();
        (store, pred, tok)
    }

    #[test]
    fn zero_weights_give_half() {
        let (mut store, pred, tok) = setup();
        store.insert(pred.wa.clone(), Tensor2::zeros(10, 16));
        let p = pred.probabilities(&store, &tok, "pain", "hello doctor").unwrap();
        assert_eq!(p, vec![0.5; 10]);
    }

    #[test]
    fn threshold_rule_and_fallback() {
        let (_, mut pred, _) = setup();
        pred.set_thresholds(vec![1.0 - 1e-9; 10]).unwrap();
        let mut p = vec![0.3; 10];
        p[4] = 0.99;
        assert_eq!(pred.select(&p).selected, vec![pred.acts[4].clone()]);
        p[4] = 1.0 - 1e-12;
        p[6] = 1.0 - 1e-12;
        assert_eq!(pred.select(&p).selected, vec![pred.acts[4].clone(), pred.acts[6].clone()]);
        assert!(pred.set_thresholds(vec![1.0; 10]).is_err());
    }

    #[test]
    fn loss_values() {
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor2::filled(1, 4, 0.5));
        let l = act_loss(&mut tape, p, &[true, false, true, false]).unwrap();
        assert!(libm::fabs(tape.value(l).data()[0] - core::f64::consts::LN_2) < 1e-12);
        let p = tape.leaf(Tensor2::row_vector(&[1e-9, 1.0 - 1e-9]).unwrap());
        let l = act_loss(&mut tape, p, &[false, true]).unwrap();
        assert!(tape.value(l).data()[0] < 1e-8);
    }

    #[test]
    fn tuning_rules() {
        let scores = vec![vec![0.9, 0.7, 0.2], vec![0.1, 0.8, 0.6], vec![0.85, 0.9, 0.1]];
        let labels = vec![vec![true, true, false], vec![false, true, false], vec![true, true, false]];
        let t = tune_thresholds(&scores, &labels, 3).unwrap();
        assert_eq!(t.thresholds[0], 0.15);
        assert_eq!(t.thresholds[1], 0.05);
        assert_eq!(t.thresholds[2], 0.5);
        assert_eq!(t.absent, vec![2]);
        assert!(tune_thresholds(&scores, &labels, 2).is_err());
    }

    #[test]
    fn labels_reject_unknown_act() {
        let (_, pred, _) = setup();
        assert!(matches!(pred.labels(&["dance".to_string()]), Err(ActsError::UnknownAct(_))));
    }
}
