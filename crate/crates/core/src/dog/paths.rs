use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{induce_subgraph, DogError, DogGraph, EntityKind, SubGraph};
use crate::numerics::Tensor2;

/// A System -> Organ -> Disease -> Symptom chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticPath {
    pub ids: [String; 4],
    pub names: [String; 4],
    pub salience: [f64; 4],
    pub score: f64,
}

impl DiagnosticPath {
    pub fn render(&self) -> String {
        let parts: Vec<String> = self.names.iter().map(|n| alloc::format!("[{n}]")).collect();
        parts.join(" -> ")
    }
}

struct Candidate {
    idx: [usize; 4],
    score: f64,
}

fn chain_score(s: &[f64], idx: [usize; 4]) -> f64 {
    ((s[idx[0]] + s[idx[1]]) + s[idx[2]]) + s[idx[3]]
}

fn cmp_candidates(sg: &SubGraph, a: &Candidate, b: &Candidate) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| {
        a.idx
            .iter()
            .zip(&b.idx)
            .map(|(&x, &y)| sg.entities[x].id.cmp(&sg.entities[y].id))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Up to `k` diagnostic chains in `sg` ranked by summed entity salience,
/// where salience is the column mean of the attention matrix. Ties go to
/// the lexicographically smaller `(system, organ, disease, symptom)` ids.
pub fn top_attended_path(sg: &SubGraph, attention: &Tensor2, k: usize) -> Result<Vec<DiagnosticPath>, DogError> {
    if attention.cols() != sg.len() || attention.rows() == 0 {
        return Err(DogError::AttentionShape {
            got: attention.shape(),
            expected: (attention.rows().max(1), sg.len()),
        });
    }
    let salience = attention.column_means();
    Ok(ranked_paths(sg, salience.data(), k))
}

fn ranked_paths(sg: &SubGraph, s: &[f64], k: usize) -> Vec<DiagnosticPath> {
    if k == 0 {
        return Vec::new();
    }
    let kind = |i: usize| sg.entities[i].kind;
    let id = |i: usize| sg.entities[i].id.as_str();
    let n = sg.len();
    let neighbors = |i: usize, want: EntityKind| -> Vec<usize> {
        (0..n).filter(|&j| kind(j) == want && sg.has_edge(i, j)).collect()
    };

    let mut candidates = Vec::new();
    for d in (0..n).filter(|&i| kind(i) == EntityKind::Disease) {
        let mut uppers: Vec<(usize, usize)> = Vec::new();
        for o in neighbors(d, EntityKind::Organ) {
            for y in neighbors(o, EntityKind::System) {
                uppers.push((y, o));
            }
        }
        uppers.sort_by(|a, b| {
            (s[b.0] + s[b.1])
                .total_cmp(&(s[a.0] + s[a.1]))
                .then_with(|| id(a.0).cmp(id(b.0)))
                .then_with(|| id(a.1).cmp(id(b.1)))
        });
        uppers.truncate(k);
        let mut symptoms = neighbors(d, EntityKind::Symptom);
        symptoms.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then_with(|| id(a).cmp(id(b))));
        symptoms.truncate(k);
        for &(y, o) in &uppers {
            for &m in &symptoms {
                let idx = [y, o, d, m];
                candidates.push(Candidate {
                    idx,
                    score: chain_score(s, idx),
                });
            }
        }
    }
    candidates.sort_by(|a, b| cmp_candidates(sg, a, b));
    candidates.truncate(k);
    candidates
        .into_iter()
        .map(|c| DiagnosticPath {
            ids: c.idx.map(|i| sg.entities[i].id.clone()),
            names: c.idx.map(|i| sg.entities[i].name.clone()),
            salience: c.idx.map(|i| s[i]),
            score: c.score,
        })
        .collect()
}

/// Every diagnostic chain through `disease` in the full graph, in id order.
pub fn disease_paths(graph: &DogGraph, disease: &str) -> Result<Vec<DiagnosticPath>, DogError> {
    let sg = induce_subgraph(graph, &[String::from(disease)])?;
    let zeros = alloc::vec![0.0; sg.len()];
    Ok(ranked_paths(&sg, &zeros, usize::MAX))
}
