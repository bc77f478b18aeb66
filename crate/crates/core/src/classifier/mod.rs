//! Stage-two refinement: GAT over the induced subgraph, cross-attention
//! from segment representations to entities, and thresholded selection.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

mod gat;
mod train;

pub use gat::{gat_encode, GatNames, GatOutput, LEAKY_SLOPE};
pub use train::{train_classifier, train_no_dog, ClassifierExample, ClassifierTrainConfig};

use crate::corpus::Tokenizer;
use crate::dog::{DogError, EntityKind, SubGraph};
use crate::numerics::{NumericsError, ParamStore, Tape, Tensor2, Var};
use crate::retrieval::Encoder;

pub const DEFAULT_TAU: f64 = 0.8;
pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_BETA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifierError {
    #[error("no segments to classify")]
    EmptySegments,
    #[error("subgraph is empty")]
    EmptySubGraph,
    #[error("preliminary list is empty")]
    EmptyList,
    #[error("disease `{0}` has no output column")]
    UnknownDisease(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Dog(#[from] DogError),
}

/// Parameter names of the cross-attention block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct XattnNames {
    pub wq: String,
    pub wk: String,
    pub wv: String,
    pub out: String,
}

impl XattnNames {
    pub fn new(prefix: &str) -> Self {
        Self {
            wq: alloc::format!("{prefix}.wq"),
            wk: alloc::format!("{prefix}.wk"),
            wv: alloc::format!("{prefix}.wv"),
            out: alloc::format!("{prefix}.out"),
        }
    }

    /// The query projection starts at zero, so untrained attention is
    /// exactly uniform.
    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, d: usize, n: usize, rng: &mut R) {
        store.insert(self.wq.clone(), Tensor2::zeros(d, d));
        store.insert_xavier(&self.wk, d, d, rng);
        store.insert_xavier(&self.wv, d, d, rng);
        store.insert_xavier(&self.out, d, n, rng);
    }
}

/// Entity-side projections of the cross-attention: `K = E W_k` and
/// `V O = E W_v O`. They depend only on the subgraph, so a batch sharing
/// one subgraph computes them once.
#[derive(Clone, Copy, Debug)]
pub struct EntityProjections {
    pub k: Var,
    pub vo: Var,
}

pub fn project_entities(tape: &mut Tape, store: &ParamStore, names: &XattnNames, e: Var) -> Result<EntityProjections, NumericsError> {
    if tape.shape(e).0 == 0 {
        return Err(NumericsError::Empty("classify: entities"));
    }
    let wk = tape.param(store, &names.wk)?;
    let wv = tape.param(store, &names.wv)?;
    let o = tape.param(store, &names.out)?;
    let k = tape.matmul(e, wk)?;
    let v = tape.matmul(e, wv)?;
    let vo = tape.matmul(v, o)?;
    Ok(EntityProjections { k, vo })
}

/// Segment-side half of [`classify`].
pub fn attend(tape: &mut Tape, store: &ParamStore, names: &XattnNames, s: Var, proj: EntityProjections) -> Result<(Var, Var), NumericsError> {
    let (n_s, d) = tape.shape(s);
    if n_s == 0 {
        return Err(NumericsError::Empty("classify: segments"));
    }
    let wq = tape.param(store, &names.wq)?;
    let q = tape.matmul(s, wq)?;
    let scores = tape.matmul_nt(q, proj.k)?;
    let scores = tape.scale(scores, 1.0 / libm::sqrt(d as f64));
    let a = tape.softmax_rows(scores);
    let avo = tape.matmul(a, proj.vo)?;
    let logits = tape.sum_rows(avo);
    Ok((a, tape.sigmoid(logits)))
}

/// `A = softmax(Q K^T / sqrt(d))` and `p = sigmoid(sum_i [A V O]_i)`,
/// evaluated as `A (V O)`.
/// `s` is `n_s x d`, `e` is `n_G x d`; returns `(A, p)` with `p` a `1 x n` row.
pub fn classify(tape: &mut Tape, store: &ParamStore, names: &XattnNames, s: Var, e: Var) -> Result<(Var, Var), NumericsError> {
    if tape.shape(s).0 == 0 {
        return Err(NumericsError::Empty("classify: segments"));
    }
    let proj = project_entities(tape, store, names, e)?;
    attend(tape, store, names, s, proj)
}

/// Rows uniform over entities on a diagnostic path of a gold disease
/// present in `sg`; uniform over all entities when none is present.
pub fn build_target_attention(sg: &SubGraph, gold: &[String], n_s: usize) -> Tensor2 {
    let n = sg.len();
    let mut on_path = alloc::vec![false; n];
    let kind = |i: usize| sg.entities[i].kind;
    for g in gold {
        let Some(d) = sg.index_of(g) else { continue };
        on_path[d] = true;
        for j in 0..n {
            if !sg.has_edge(d, j) {
                continue;
            }
            match kind(j) {
                EntityKind::Symptom => on_path[j] = true,
                EntityKind::Organ => {
                    on_path[j] = true;
                    for y in 0..n {
                        if kind(y) == EntityKind::System && sg.has_edge(j, y) {
                            on_path[y] = true;
                        }
                    }
                }
                _ => {}
            }
        }
    }
    let count = on_path.iter().filter(|&&b| b).count();
    Tensor2::from_fn(n_s, n, |_, c| {
        if count == 0 {
            1.0 / n as f64
        } else if on_path[c] {
            1.0 / count as f64
        } else {
            0.0
        }
    })
}

pub struct LossVars {
    pub l_d: Var,
    pub l_expl: Var,
    pub total: Var,
}

/// `L = alpha * L_d + beta * L_expl` with `L_d` the mean BCE over the list
/// columns and `L_expl = ||A - A'||_F^2`.
#[allow(clippy::too_many_arguments)]
pub fn losses(
    tape: &mut Tape,
    a: Var,
    target: Tensor2,
    p: Var,
    list_columns: &[usize],
    labels: &[f64],
    alpha: f64,
    beta: f64,
) -> Result<LossVars, NumericsError> {
    let l_d = tape.bce_columns(p, list_columns, labels)?;
    let l_expl = tape.sq_dist(a, target)?;
    let wd = tape.scale(l_d, alpha);
    let we = tape.scale(l_expl, beta);
    let total = tape.add(wd, we)?;
    Ok(LossVars { l_d, l_expl, total })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinedDiagnosis {
    /// Probabilities of the preliminary-list diseases.
    pub probabilities: BTreeMap<String, f64>,
    /// Selected diseases by descending probability.
    pub selected: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention: Option<Tensor2>,
}

/// Diseases with `p >= tau`, or the single most probable one when none
/// qualifies. Ties are broken by id.
pub fn refine(probs: &[(String, f64)], tau: f64) -> Result<RefinedDiagnosis, ClassifierError> {
    if probs.is_empty() {
        return Err(ClassifierError::EmptyList);
    }
    let mut ranked: Vec<&(String, f64)> = probs.iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut selected: Vec<String> = ranked.iter().filter(|(_, p)| *p >= tau).map(|(d, _)| d.clone()).collect();
    if selected.is_empty() {
        selected.push(ranked[0].0.clone());
    }
    Ok(RefinedDiagnosis {
        probabilities: probs.iter().cloned().collect(),
        selected,
        attention: None,
    })
}

/// The graph-grounded multi-disease classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub encoder: Encoder,
    pub gat: GatNames,
    pub heads: usize,
    pub xattn: XattnNames,
    /// Output-column order of `O`.
    pub diseases: Vec<String>,
}

pub struct ClassifierForward {
    pub attention: Var,
    pub probs: Var,
    pub entities: Var,
    pub alpha: Vec<Var>,
}

pub struct Prediction {
    pub attention: Tensor2,
    /// Probabilities of the requested list diseases, in list order.
    pub probs: Vec<(String, f64)>,
}

impl Classifier {
    pub fn new(prefix: &str, heads: usize, diseases: Vec<String>) -> Self {
        Self {
            encoder: Encoder::named(&alloc::format!("{prefix}.seg")),
            gat: GatNames::new(&alloc::format!("{prefix}.gat"), heads),
            heads,
            xattn: XattnNames::new(&alloc::format!("{prefix}.xattn")),
            diseases,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, buckets: usize, d: usize, rng: &mut R) {
        self.encoder.init(store, buckets, d, rng);
        self.gat.init(store, d, rng);
        self.xattn.init(store, d, self.diseases.len(), rng);
    }

    pub fn column(&self, disease: &str) -> Result<usize, ClassifierError> {
        self.diseases
            .iter()
            .position(|d| d == disease)
            .ok_or_else(|| ClassifierError::UnknownDisease(disease.into()))
    }

    /// Raw entity embeddings: mean embedding-table rows of each name's tokens.
    pub fn raw_entities(&self, tape: &mut Tape, store: &ParamStore, tokenizer: &Tokenizer, sg: &SubGraph) -> Result<Var, NumericsError> {
        let table = tape.param(store, &self.encoder.table)?;
        tape.embed_bag(table, sg.entities.iter().map(|e| tokenizer.bag(&e.name)).collect())
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        tokenizer: &Tokenizer,
        segments: &[String],
        sg: &SubGraph,
    ) -> Result<ClassifierForward, ClassifierError> {
        if segments.is_empty() {
            return Err(ClassifierError::EmptySegments);
        }
        if sg.is_empty() {
            return Err(ClassifierError::EmptySubGraph);
        }
        let e0 = self.raw_entities(tape, store, tokenizer, sg)?;
        let g = gat_encode(tape, store, &self.gat, e0, &sg.adjacency_mask(true))?;
        let s = self
            .encoder
            .forward(tape, store, segments.iter().map(|t| tokenizer.bag(t)).collect())?;
        let (a, p) = classify(tape, store, &self.xattn, s, g.embeddings)?;
        Ok(ClassifierForward {
            attention: a,
            probs: p,
            entities: g.embeddings,
            alpha: g.alpha,
        })
    }

    pub fn predict(
        &self,
        store: &ParamStore,
        tokenizer: &Tokenizer,
        segments: &[String],
        sg: &SubGraph,
        list: &[String],
    ) -> Result<Prediction, ClassifierError> {
        if list.is_empty() {
            return Err(ClassifierError::EmptyList);
        }
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, store, tokenizer, segments, sg)?;
        let p = tape.value(f.probs);
        let probs = list
            .iter()
            .map(|d| Ok((d.clone(), p.data()[self.column(d)?])))
            .collect::<Result<_, ClassifierError>>()?;
        Ok(Prediction {
            attention: tape.value(f.attention).clone(),
            probs,
        })
    }
}

/// Graph-free head used when the DOG is ablated:
/// `p = sigmoid(mean_i(S_i) W + b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoDogHead {
    pub encoder: Encoder,
    pub w: String,
    pub b: String,
    pub diseases: Vec<String>,
}

impl NoDogHead {
    pub fn new(prefix: &str, diseases: Vec<String>) -> Self {
        Self {
            encoder: Encoder::named(&alloc::format!("{prefix}.seg")),
            w: alloc::format!("{prefix}.w"),
            b: alloc::format!("{prefix}.b"),
            diseases,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, buckets: usize, d: usize, rng: &mut R) {
        self.encoder.init(store, buckets, d, rng);
        store.insert_xavier(&self.w, d, self.diseases.len(), rng);
        store.insert(self.b.clone(), Tensor2::zeros(1, self.diseases.len()));
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, tokenizer: &Tokenizer, segments: &[String]) -> Result<Var, ClassifierError> {
        if segments.is_empty() {
            return Err(ClassifierError::EmptySegments);
        }
        let s = self
            .encoder
            .forward(tape, store, segments.iter().map(|t| tokenizer.bag(t)).collect())?;
        let pooled = tape.mean_rows(s);
        let w = tape.param(store, &self.w)?;
        let b = tape.param(store, &self.b)?;
        let z = tape.matmul(pooled, w)?;
        let z = tape.add(z, b)?;
        Ok(tape.sigmoid(z))
    }

    pub fn predict(&self, store: &ParamStore, tokenizer: &Tokenizer, segments: &[String], list: &[String]) -> Result<Vec<(String, f64)>, ClassifierError> {
        if list.is_empty() {
            return Err(ClassifierError::EmptyList);
        }
        let mut tape = Tape::new();
        let p = self.forward(&mut tape, store, tokenizer, segments)?;
        let p = tape.value(p);
        list.iter()
            .map(|d| {
                let c = self
                    .diseases
                    .iter()
                    .position(|x| x == d)
                    .ok_or_else(|| ClassifierError::UnknownDisease(d.clone()))?;
                Ok((d.clone(), p.data()[c]))
            })
            .collect()
    }
}
