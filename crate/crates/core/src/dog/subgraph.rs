use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{DogEntity, DogError, DogGraph, EntityKind};

/// Per-dialogue subgraph induced by a preliminary disease list. Entity order
/// (kind, then id) fixes the row order of every matrix built over it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubGraph {
    pub seeds: Vec<String>,
    pub entities: Vec<DogEntity>,
    /// Induced undirected edges as `(i, j)` entity indices with `i < j`.
    pub edges: Vec<(usize, usize)>,
}

impl SubGraph {
    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.entities.iter().position(|e| e.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entities.iter().map(|e| e.id.as_str())
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        let key = if i < j { (i, j) } else { (j, i) };
        self.edges.binary_search(&key).is_ok()
    }

    /// Row-major `n x n` neighbourhood mask. Self-loops are added on the
    /// diagonal when requested; they are never stored as edges.
    pub fn adjacency_mask(&self, self_loops: bool) -> Vec<bool> {
        let n = self.len();
        let mut mask = alloc::vec![false; n * n];
        for &(i, j) in &self.edges {
            mask[i * n + j] = true;
            mask[j * n + i] = true;
        }
        if self_loops {
            for i in 0..n {
                mask[i * n + i] = true;
            }
        }
        mask
    }

    /// The same subgraph with entities reordered so that new position `p`
    /// holds old entity `order[p]`.
    pub fn reordered(&self, order: &[usize]) -> SubGraph {
        let mut new_pos = alloc::vec![0; order.len()];
        for (p, &old) in order.iter().enumerate() {
            new_pos[old] = p;
        }
        let entities = order.iter().map(|&i| self.entities[i].clone()).collect();
        let mut edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (new_pos[i], new_pos[j]);
                (a.min(b), a.max(b))
            })
            .collect();
        edges.sort_unstable();
        SubGraph {
            seeds: self.seeds.clone(),
            entities,
            edges,
        }
    }
}

/// Union over seed diseases of the disease, its symptoms, its organs and
/// those organs' systems, with all graph edges among them.
pub fn induce_subgraph(graph: &DogGraph, seeds: &[String]) -> Result<SubGraph, DogError> {
    let mut ids: BTreeSet<(EntityKind, String)> = BTreeSet::new();
    for d in seeds {
        let e = graph.entity(d).ok_or_else(|| DogError::UnknownEntity(d.clone()))?;
        if e.kind != EntityKind::Disease {
            return Err(DogError::NotADisease(d.clone()));
        }
        ids.insert((EntityKind::Disease, d.clone()));
        for s in graph.neighbors_of_kind(d, EntityKind::Symptom) {
            ids.insert((EntityKind::Symptom, s.to_string()));
        }
        for o in graph.neighbors_of_kind(d, EntityKind::Organ) {
            ids.insert((EntityKind::Organ, o.to_string()));
            for s in graph.neighbors_of_kind(o, EntityKind::System) {
                ids.insert((EntityKind::System, s.to_string()));
            }
        }
    }
    let entities: Vec<DogEntity> = ids
        .iter()
        .map(|(_, id)| graph.entity(id).expect("collected from graph").clone())
        .collect();
    let mut edges = Vec::new();
    for i in 0..entities.len() {
        for j in i + 1..entities.len() {
            if graph.has_edge(&entities[i].id, &entities[j].id) {
                edges.push((i, j));
            }
        }
    }
    Ok(SubGraph {
        seeds: seeds.to_vec(),
        entities,
        edges,
    })
}
