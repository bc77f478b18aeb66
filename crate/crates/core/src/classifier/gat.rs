use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::{NumericsError, ParamStore, Tape, Var};

pub const LEAKY_SLOPE: f64 = 0.2;

/// Parameter names of a multi-head single-layer GAT. Head `k` owns
/// `W^k` (`d_h x d`) and the attention vector split into a source half and
/// a neighbour half (`1 x d_h` each).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatNames {
    pub w: Vec<String>,
    pub a_src: Vec<String>,
    pub a_dst: Vec<String>,
}

impl GatNames {
    pub fn new(prefix: &str, heads: usize) -> Self {
        Self {
            w: (0..heads).map(|k| format!("{prefix}.w{k}")).collect(),
            a_src: (0..heads).map(|k| format!("{prefix}.a_src{k}")).collect(),
            a_dst: (0..heads).map(|k| format!("{prefix}.a_dst{k}")).collect(),
        }
    }

    pub fn heads(&self) -> usize {
        self.w.len()
    }

    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, d: usize, rng: &mut R) {
        let dh = d / self.heads();
        for k in 0..self.heads() {
            store.insert_xavier(&self.w[k], dh, d, rng);
            store.insert_xavier(&self.a_src[k], 1, dh, rng);
            store.insert_xavier(&self.a_dst[k], 1, dh, rng);
        }
    }
}

/// Per-head attention coefficients and the concatenated ELU output.
pub struct GatOutput {
    pub embeddings: Var,
    pub alpha: Vec<Var>,
}

/// One GAT layer over `e0` (`n x d`). `mask` is the row-major `n x n`
/// neighbourhood including self-loops.
pub fn gat_encode(
    tape: &mut Tape,
    store: &ParamStore,
    names: &GatNames,
    e0: Var,
    mask: &[bool],
) -> Result<GatOutput, NumericsError> {
    let mut heads = Vec::with_capacity(names.heads());
    let mut alpha = Vec::with_capacity(names.heads());
    for k in 0..names.heads() {
        let w = tape.param(store, &names.w[k])?;
        let a_src = tape.param(store, &names.a_src[k])?;
        let a_dst = tape.param(store, &names.a_dst[k])?;
        let h = tape.matmul_nt(e0, w)?;
        let src = tape.matmul_nt(h, a_src)?;
        let dst = tape.matmul_nt(a_dst, h)?;
        let logits = tape.add_outer(src, dst)?;
        let logits = tape.leaky_relu(logits, LEAKY_SLOPE);
        let att = tape.masked_softmax_rows(logits, mask)?;
        let agg = tape.matmul(att, h)?;
        heads.push(tape.elu(agg));
        alpha.push(att);
    }
    Ok(GatOutput {
        embeddings: tape.concat_cols(&heads)?,
        alpha,
    })
}
