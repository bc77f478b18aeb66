use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{attend, build_target_attention, gat_encode, project_entities, EntityProjections, losses, Classifier, ClassifierError, NoDogHead};
use crate::corpus::Tokenizer;
use crate::dog::{induce_subgraph, DogGraph, SubGraph};
use crate::numerics::{adamw_step, AdamW, OptState, ParamStore, Tape, Tensor2, Var};

/// Segments observed up to a patient turn, the preliminary list computed
/// for them and the dialogue's gold diseases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierExample {
    pub segments: Vec<String>,
    pub list: Vec<String>,
    pub gold: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self {
            steps: 4000,
            batch_size: 32,
            lr: 5e-3,
            seed: 0,
            alpha: super::DEFAULT_ALPHA,
            beta: super::DEFAULT_BETA,
        }
    }
}

struct Prepared {
    graph_idx: usize,
    columns: Vec<usize>,
    labels: Vec<f64>,
    target: Tensor2,
}

struct Batches {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl Batches {
    fn new(n: usize, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..n).collect(),
            cursor: n,
        }
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        let size = size.min(self.order.len());
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

fn list_targets(diseases: &[String], ex: &ClassifierExample) -> Result<(Vec<usize>, Vec<f64>), ClassifierError> {
    if ex.list.is_empty() {
        return Err(ClassifierError::EmptyList);
    }
    let mut columns = Vec::with_capacity(ex.list.len());
    let mut labels = Vec::with_capacity(ex.list.len());
    for d in &ex.list {
        let c = diseases
            .iter()
            .position(|x| x == d)
            .ok_or_else(|| ClassifierError::UnknownDisease(d.clone()))?;
        columns.push(c);
        labels.push(if ex.gold.contains(d) { 1.0 } else { 0.0 });
    }
    Ok((columns, labels))
}

/// Mini-batch AdamW on `alpha * L_d + beta * L_expl`. Returns the mean
/// batch loss per step. A non-finite loss aborts before the update, so
/// `store` keeps the last good parameters.
pub fn train_classifier(
    store: &mut ParamStore,
    model: &Classifier,
    tokenizer: &Tokenizer,
    graph: &DogGraph,
    examples: &[ClassifierExample],
    config: &ClassifierTrainConfig,
) -> Result<Vec<f64>, ClassifierError> {
    let mut graphs: Vec<SubGraph> = Vec::new();
    let mut masks: Vec<Vec<bool>> = Vec::new();
    let mut by_list: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    let mut prepared = Vec::with_capacity(examples.len());
    for ex in examples {
        if ex.segments.is_empty() {
            return Err(ClassifierError::EmptySegments);
        }
        let mut key = ex.list.clone();
        key.sort();
        let graph_idx = match by_list.get(&key) {
            Some(&i) => i,
            None => {
                let sg = induce_subgraph(graph, &ex.list)?;
                masks.push(sg.adjacency_mask(true));
                graphs.push(sg);
                by_list.insert(key, graphs.len() - 1);
                graphs.len() - 1
            }
        };
        let (columns, labels) = list_targets(&model.diseases, ex)?;
        let target = build_target_attention(&graphs[graph_idx], &ex.gold, ex.segments.len());
        prepared.push(Prepared {
            graph_idx,
            columns,
            labels,
            target,
        });
    }
    let mut opt = OptState::new(AdamW::with_lr(config.lr));
    let mut batches = Batches::new(examples.len(), config.seed);
    let mut curve = Vec::with_capacity(config.steps);
    if examples.is_empty() {
        return Ok(curve);
    }
    for _ in 0..config.steps {
        let batch = batches.next(config.batch_size);
        let mut tape = Tape::new();
        let mut entity_vars: BTreeMap<usize, EntityProjections> = BTreeMap::new();
        let mut terms = Vec::with_capacity(batch.len());
        for &i in &batch {
            let prep = &prepared[i];
            let g = prep.graph_idx;
            let e = match entity_vars.get(&g) {
                Some(&v) => v,
                None => {
                    let e0 = model.raw_entities(&mut tape, store, tokenizer, &graphs[g])?;
                    let e = gat_encode(&mut tape, store, &model.gat, e0, &masks[g])?.embeddings;
                    let v = project_entities(&mut tape, store, &model.xattn, e)?;
                    entity_vars.insert(g, v);
                    v
                }
            };
            let s = model
                .encoder
                .forward(&mut tape, store, examples[i].segments.iter().map(|t| tokenizer.bag(t)).collect())?;
            let (a, p) = attend(&mut tape, store, &model.xattn, s, e)?;
            let l = losses(
                &mut tape,
                a,
                prep.target.clone(),
                p,
                &prep.columns,
                &prep.labels,
                config.alpha,
                config.beta,
            )?;
            terms.push(l.total);
        }
        let loss = mean_of(&mut tape, &terms)?;
        curve.push(tape.value(loss).data()[0]);
        let grads = tape.backward(loss)?;
        adamw_step(store, &grads.params(&tape), &mut opt)?;
    }
    Ok(curve)
}

fn mean_of(tape: &mut Tape, terms: &[Var]) -> Result<Var, ClassifierError> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = tape.add(acc, t)?;
    }
    Ok(tape.scale(acc, 1.0 / terms.len() as f64))
}

/// BCE-only training of the graph-free head.
pub fn train_no_dog(
    store: &mut ParamStore,
    head: &NoDogHead,
    tokenizer: &Tokenizer,
    examples: &[ClassifierExample],
    config: &ClassifierTrainConfig,
) -> Result<Vec<f64>, ClassifierError> {
    let targets = examples
        .iter()
        .map(|ex| list_targets(&head.diseases, ex))
        .collect::<Result<Vec<_>, _>>()?;
    let mut opt = OptState::new(AdamW::with_lr(config.lr));
    let mut batches = Batches::new(examples.len(), config.seed);
    let mut curve = Vec::with_capacity(config.steps);
    if examples.is_empty() {
        return Ok(curve);
    }
    for _ in 0..config.steps {
        let batch = batches.next(config.batch_size);
        let mut tape = Tape::new();
        let mut terms = Vec::with_capacity(batch.len());
        for &i in &batch {
            let p = head.forward(&mut tape, store, tokenizer, &examples[i].segments)?;
            let (cols, labels) = &targets[i];
            let l = tape.bce_columns(p, cols, labels)?;
            terms.push(tape.scale(l, config.alpha));
        }
        let loss = mean_of(&mut tape, &terms)?;
        curve.push(tape.value(loss).data()[0]);
        let grads = tape.backward(loss)?;
        adamw_step(store, &grads.params(&tape), &mut opt)?;
    }
    Ok(curve)
}
