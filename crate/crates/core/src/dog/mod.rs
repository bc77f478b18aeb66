//! The diagnosis-oriented graph: a tetrapartite System-Organ-Disease-Symptom
//! entity graph whose root-to-leaf chains are diagnostic paths.

mod paths;
mod subgraph;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use paths::{disease_paths, top_attended_path, DiagnosticPath};
pub use subgraph::{induce_subgraph, SubGraph};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DogError {
    #[error("{file} line {line}: {message}")]
    Format {
        file: &'static str,
        line: usize,
        message: String,
    },
    #[error("edges line {line}: `{a}` ({ka:?}) - `{b}` ({kb:?}) is not a System-Organ, Organ-Disease or Disease-Symptom edge")]
    KindViolation {
        line: usize,
        a: String,
        ka: EntityKind,
        b: String,
        kb: EntityKind,
    },
    #[error("edges line {line}: unknown entity `{id}`")]
    DanglingId { line: usize, id: String },
    #[error("entities line {line}: disease `{id}` does not reach any system through an organ")]
    OrphanDisease { line: usize, id: String },
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("`{0}` is not a disease")]
    NotADisease(String),
    #[error("attention shape {got:?} does not match {expected:?}")]
    AttentionShape {
        got: (usize, usize),
        expected: (usize, usize),
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityKind {
    System,
    Organ,
    Disease,
    Symptom,
}

impl EntityKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "system" => Some(Self::System),
            "organ" => Some(Self::Organ),
            "disease" => Some(Self::Disease),
            "symptom" => Some(Self::Symptom),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::System => "System",
            Self::Organ => "Organ",
            Self::Disease => "Disease",
            Self::Symptom => "Symptom",
        }
    }

    /// Position along a diagnostic path.
    pub fn level(self) -> u8 {
        self as u8
    }

    fn adjacent(self, other: Self) -> bool {
        self.level().abs_diff(other.level()) == 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DogEntity {
    pub id: String,
    pub kind: EntityKind,
    pub name: String,
}

/// Validated diagnosis-oriented graph. Edges are undirected and stored as
/// ordered `(min, max)` id pairs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DogGraph {
    entities: BTreeMap<String, DogEntity>,
    edges: BTreeSet<(String, String)>,
    adjacency: BTreeMap<String, BTreeSet<String>>,
}

impl DogGraph {
    /// Builds and validates a graph from `entities.tsv` and `edges.tsv` text.
    pub fn load(entities_tsv: &str, edges_tsv: &str) -> Result<Self, DogError> {
        let mut graph = Self::default();
        let mut entity_lines = BTreeMap::new();
        for (line, cols) in tsv_rows(entities_tsv, "id") {
            let [id, kind, name] = cols[..] else {
                return Err(DogError::Format {
                    file: "entities",
                    line,
                    message: "expected `id<TAB>kind<TAB>name`".into(),
                });
            };
            let kind = EntityKind::parse(kind).ok_or_else(|| DogError::Format {
                file: "entities",
                line,
                message: alloc::format!("unknown entity kind `{kind}`"),
            })?;
            if id.is_empty() || graph.entities.contains_key(id) {
                return Err(DogError::Format {
                    file: "entities",
                    line,
                    message: alloc::format!("empty or duplicate entity id `{id}`"),
                });
            }
            entity_lines.insert(id.to_string(), line);
            graph.insert_entity(DogEntity {
                id: id.to_string(),
                kind,
                name: name.to_string(),
            });
        }
        for (line, cols) in tsv_rows(edges_tsv, "source") {
            let [a, b] = cols[..] else {
                return Err(DogError::Format {
                    file: "edges",
                    line,
                    message: "expected `id<TAB>id`".into(),
                });
            };
            graph.add_edge_checked(a, b, line)?;
        }
        graph.check_reachability(|id| entity_lines.get(id).copied().unwrap_or(0))?;
        Ok(graph)
    }

    /// Builds a graph from in-memory parts with the same validation as [`DogGraph::load`].
    /// Line numbers in errors are 1-based positions in `edges`/`entities`.
    pub fn from_parts(entities: Vec<DogEntity>, edges: &[(String, String)]) -> Result<Self, DogError> {
        let mut graph = Self::default();
        let mut lines = BTreeMap::new();
        for (i, e) in entities.into_iter().enumerate() {
            if graph.entities.contains_key(&e.id) {
                return Err(DogError::Format {
                    file: "entities",
                    line: i + 1,
                    message: alloc::format!("duplicate entity id `{}`", e.id),
                });
            }
            lines.insert(e.id.clone(), i + 1);
            graph.insert_entity(e);
        }
        for (i, (a, b)) in edges.iter().enumerate() {
            graph.add_edge_checked(a, b, i + 1)?;
        }
        graph.check_reachability(|id| lines.get(id).copied().unwrap_or(0))?;
        Ok(graph)
    }

    fn insert_entity(&mut self, e: DogEntity) {
        self.adjacency.insert(e.id.clone(), BTreeSet::new());
        self.entities.insert(e.id.clone(), e);
    }

    fn add_edge_checked(&mut self, a: &str, b: &str, line: usize) -> Result<(), DogError> {
        let ka = self.kind_at(a, line)?;
        let kb = self.kind_at(b, line)?;
        if a == b || !ka.adjacent(kb) {
            return Err(DogError::KindViolation {
                line,
                a: a.to_string(),
                ka,
                b: b.to_string(),
                kb,
            });
        }
        let key = if a < b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        };
        self.edges.insert(key);
        self.adjacency.get_mut(a).expect("known").insert(b.to_string());
        self.adjacency.get_mut(b).expect("known").insert(a.to_string());
        Ok(())
    }

    fn kind_at(&self, id: &str, line: usize) -> Result<EntityKind, DogError> {
        self.entities
            .get(id)
            .map(|e| e.kind)
            .ok_or_else(|| DogError::DanglingId {
                line,
                id: id.to_string(),
            })
    }

    fn check_reachability(&self, line_of: impl Fn(&str) -> usize) -> Result<(), DogError> {
        for d in self.entities.values().filter(|e| e.kind == EntityKind::Disease) {
            let reaches = self
                .neighbors_of_kind(&d.id, EntityKind::Organ)
                .any(|o| self.neighbors_of_kind(o, EntityKind::System).next().is_some());
            if !reaches {
                return Err(DogError::OrphanDisease {
                    line: line_of(&d.id),
                    id: d.id.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn entity(&self, id: &str) -> Option<&DogEntity> {
        self.entities.get(id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &DogEntity> {
        self.entities.values()
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        self.adjacency.get(a).is_some_and(|n| n.contains(b))
    }

    pub fn neighbors(&self, id: &str) -> impl Iterator<Item = &str> {
        self.adjacency
            .get(id)
            .into_iter()
            .flat_map(|n| n.iter().map(String::as_str))
    }

    pub fn neighbors_of_kind<'a>(&'a self, id: &str, kind: EntityKind) -> impl Iterator<Item = &'a str> + 'a {
        let ids: Vec<&'a str> = self
            .adjacency
            .get(id)
            .into_iter()
            .flat_map(|n| n.iter().map(String::as_str))
            .collect();
        ids.into_iter()
            .filter(move |n| self.entities.get(*n).is_some_and(|e| e.kind == kind))
    }

    pub fn diseases(&self) -> impl Iterator<Item = &DogEntity> {
        self.entities.values().filter(|e| e.kind == EntityKind::Disease)
    }

    pub fn disease_ids(&self) -> BTreeSet<String> {
        self.diseases().map(|e| e.id.clone()).collect()
    }

    /// Name of an entity, falling back to its id.
    pub fn name<'a>(&'a self, id: &'a str) -> &'a str {
        self.entities.get(id).map_or(id, |e| e.name.as_str())
    }

    pub fn entities_tsv(&self) -> String {
        let mut out = String::from("id\tkind\tname\n");
        for e in self.entities.values() {
            out.push_str(&alloc::format!("{}\t{}\t{}\n", e.id, e.kind.as_str(), e.name));
        }
        out
    }

    pub fn edges_tsv(&self) -> String {
        let mut out = String::from("source\ttarget\n");
        for (a, b) in &self.edges {
            out.push_str(&alloc::format!("{a}\t{b}\n"));
        }
        out
    }
}

/// Non-empty, non-comment TSV rows with 1-based line numbers. A first row
/// whose first column equals `header` is skipped.
fn tsv_rows<'a>(text: &'a str, header: &'a str) -> impl Iterator<Item = (usize, Vec<&'a str>)> + 'a {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').split('\t').map(str::trim).collect::<Vec<_>>()))
        .filter(move |(i, cols)| !(*i == 1 && cols.first() == Some(&header)))
}
