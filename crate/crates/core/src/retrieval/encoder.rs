use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Tokenizer;
use crate::numerics::{NumericsError, ParamStore, Tape, Tensor2, Var};

/// Names of the three tensors making up a bag-of-tokens text encoder:
/// an embedding table (`buckets x d`), a projection (`d x d`) and a bias
/// (`1 x d`). Encoders may share a table by naming the same tensor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoder {
    pub table: String,
    pub proj: String,
    pub bias: String,
}

impl Encoder {
    pub fn named(prefix: &str) -> Self {
        Self {
            table: format!("{prefix}.table"),
            proj: format!("{prefix}.proj"),
            bias: format!("{prefix}.bias"),
        }
    }

    /// Inserts fresh parameters. An existing table of the same name is kept.
    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, buckets: usize, d: usize, rng: &mut R) {
        if !store.contains(&self.table) {
            store.insert_xavier(&self.table, buckets, d, rng);
        }
        store.insert_xavier(&self.proj, d, d, rng);
        store.insert(self.bias.clone(), Tensor2::zeros(1, d));
    }

    pub fn dim(&self, store: &ParamStore) -> Result<usize, NumericsError> {
        Ok(get(store, &self.proj)?.rows())
    }

    /// `tanh(mean(E[bag]) P^T + b)` for one text, without a tape.
    pub fn encode(&self, store: &ParamStore, tokenizer: &Tokenizer, text: &str) -> Result<Vec<f64>, NumericsError> {
        self.encode_bag(store, &tokenizer.bag(text))
    }

    pub fn encode_bag(&self, store: &ParamStore, bag: &[usize]) -> Result<Vec<f64>, NumericsError> {
        let table = get(store, &self.table)?;
        let proj = get(store, &self.proj)?;
        let bias = get(store, &self.bias)?;
        let d = table.cols();
        let mut pooled = alloc::vec![0.0; d];
        if !bag.is_empty() {
            let inv = 1.0 / bag.len() as f64;
            for &i in bag {
                if i >= table.rows() {
                    return Err(NumericsError::IndexOutOfRange {
                        index: i,
                        len: table.rows(),
                    });
                }
                for (p, v) in pooled.iter_mut().zip(table.row(i)) {
                    *p += v * inv;
                }
            }
        }
        Ok((0..proj.rows())
            .map(|r| {
                let z: f64 = proj.row(r).iter().zip(&pooled).map(|(w, x)| w * x).sum();
                libm::tanh(z + bias.data()[r])
            })
            .collect())
    }

    /// Taped encoding of a batch of bags; one output row per bag.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, bags: Vec<Vec<usize>>) -> Result<Var, NumericsError> {
        let table = tape.param(store, &self.table)?;
        let proj = tape.param(store, &self.proj)?;
        let bias = tape.param(store, &self.bias)?;
        let pooled = tape.embed_bag(table, bags)?;
        let z = tape.matmul_nt(pooled, proj)?;
        let z = tape.add_row(z, bias)?;
        Ok(tape.tanh(z))
    }
}

fn get<'a>(store: &'a ParamStore, name: &str) -> Result<&'a Tensor2, NumericsError> {
    store.get(name).ok_or_else(|| NumericsError::UnknownParam(name.into()))
}

/// Dot-product relevance.
pub fn score_pair(q: &[f64], doc: &[f64]) -> Result<f64, NumericsError> {
    if q.len() != doc.len() {
        return Err(NumericsError::shape("score_pair", (1, q.len()), (1, doc.len())));
    }
    Ok(q.iter().zip(doc).map(|(a, b)| a * b).sum())
}
