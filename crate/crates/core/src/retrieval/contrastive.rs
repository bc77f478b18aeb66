use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Encoder, RetrievalError};
use crate::corpus::Tokenizer;
use crate::numerics::{adamw_step, AdamW, NumericsError, OptState, ParamStore, Tape, Tensor2, Var};

/// A training query with one positive item; both carry disease labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastivePair {
    pub query: String,
    pub positive: String,
    pub query_labels: BTreeSet<String>,
    pub positive_labels: BTreeSet<String>,
}

/// Which in-batch items are negatives for each query: those whose labels
/// are disjoint from the query's labels.
pub fn negative_mask(batch: &[&ContrastivePair]) -> Vec<bool> {
    let n = batch.len();
    let mut mask = alloc::vec![false; n * n];
    for (i, q) in batch.iter().enumerate() {
        for (j, c) in batch.iter().enumerate() {
            mask[i * n + j] = i != j && q.query_labels.is_disjoint(&c.positive_labels);
        }
    }
    mask
}

/// Mean over rows of `lse_{j in neg(i)} s_ij - s_i,pos(i)`, optionally with
/// the positive added to the denominator. `scores` is `rows x cols`;
/// every row must have at least one negative.
pub fn contrastive_loss(
    tape: &mut Tape,
    scores: Var,
    positives: &[usize],
    negatives: &[bool],
    include_positive: bool,
) -> Result<Var, NumericsError> {
    let (rows, cols) = tape.shape(scores);
    if positives.len() != rows || rows == 0 {
        return Err(NumericsError::shape("contrastive_loss", (rows, cols), (positives.len(), 1)));
    }
    let mut mask = negatives.to_vec();
    let mut pick = Tensor2::zeros(rows, cols);
    for (r, &p) in positives.iter().enumerate() {
        if p >= cols {
            return Err(NumericsError::IndexOutOfRange { index: p, len: cols });
        }
        pick.set(r, p, 1.0);
        if include_positive {
            if let Some(m) = mask.get_mut(r * cols + p) {
                *m = true;
            }
        }
    }
    let lse = tape.log_sum_exp_rows(scores, mask)?;
    let pos = tape.mul_const(scores, pick)?;
    let pos = tape.sum_cols(pos);
    let per_row = tape.sub(lse, pos)?;
    Ok(tape.mean(per_row))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContrastiveConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub include_positive: bool,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            batch_size: 16,
            lr: 5e-3,
            seed: 0,
            include_positive: false,
        }
    }
}

/// Loss of one batch, `None` when no query in it has a negative.
pub struct StepOutcome {
    pub loss: Option<f64>,
    pub skipped: usize,
}

/// Forward and backward pass for one in-batch-negatives batch, followed by
/// an optimizer update of the encoder parameters.
pub fn contrastive_step(
    store: &mut ParamStore,
    opt: &mut OptState,
    encoder: &Encoder,
    tokenizer: &Tokenizer,
    batch: &[&ContrastivePair],
    include_positive: bool,
) -> Result<StepOutcome, RetrievalError> {
    if batch.len() < 2 {
        return Err(RetrievalError::BatchTooSmall(batch.len()));
    }
    let n = batch.len();
    let neg = negative_mask(batch);
    let kept: Vec<usize> = (0..n).filter(|&i| neg[i * n..(i + 1) * n].iter().any(|&m| m)).collect();
    let skipped = n - kept.len();
    if skipped > 0 {
        log::warn!("contrastive batch: {skipped} queries without negatives skipped");
    }
    if kept.is_empty() {
        return Ok(StepOutcome { loss: None, skipped });
    }
    let mut tape = Tape::new();
    let q = encoder.forward(&mut tape, store, kept.iter().map(|&i| tokenizer.bag(&batch[i].query)).collect())?;
    let c = encoder.forward(&mut tape, store, batch.iter().map(|p| tokenizer.bag(&p.positive)).collect())?;
    let s = tape.matmul_nt(q, c)?;
    let mask: Vec<bool> = kept.iter().flat_map(|&i| neg[i * n..(i + 1) * n].iter().copied()).collect();
    let loss = contrastive_loss(&mut tape, s, &kept, &mask, include_positive)?;
    let value = tape.value(loss).data()[0];
    let grads = tape.backward(loss)?;
    adamw_step(store, &grads.params(&tape), opt)?;
    Ok(StepOutcome {
        loss: Some(value),
        skipped,
    })
}

/// Trains `encoder` on shuffled mini-batches of `pairs`; returns the loss
/// of every step that had at least one usable query.
pub fn train_contrastive(
    store: &mut ParamStore,
    encoder: &Encoder,
    tokenizer: &Tokenizer,
    pairs: &[ContrastivePair],
    config: &ContrastiveConfig,
) -> Result<Vec<f64>, RetrievalError> {
    if pairs.len() < 2 || config.batch_size < 2 {
        return Err(RetrievalError::BatchTooSmall(pairs.len().min(config.batch_size)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = OptState::new(AdamW::with_lr(config.lr));
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut cursor = order.len();
    let mut losses = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        let mut batch = Vec::with_capacity(config.batch_size);
        while batch.len() < config.batch_size.min(pairs.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&pairs[order[cursor]]);
            cursor += 1;
        }
        let out = contrastive_step(store, &mut opt, encoder, tokenizer, &batch, config.include_positive)?;
        if let Some(l) = out.loss {
            if !l.is_finite() {
                return Err(NumericsError::NonFinite { index: 0 }.into());
            }
            losses.push(l);
        }
    }
    Ok(losses)
}
