use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Okapi BM25 inverted index over pre-tokenized documents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    doc_ids: Vec<String>,
    doc_len: Vec<usize>,
    avgdl: f64,
    /// term -> (doc index, term frequency), doc indices ascending.
    postings: BTreeMap<String, Vec<(usize, u32)>>,
    pub k1: f64,
    pub b: f64,
}

impl Bm25Index {
    pub const K1: f64 = 1.2;
    pub const B: f64 = 0.75;

    pub fn build<I, T>(docs: I) -> Self
    where
        I: IntoIterator<Item = (String, T)>,
        T: IntoIterator<Item = String>,
    {
        let mut doc_ids = Vec::new();
        let mut doc_len = Vec::new();
        let mut postings: BTreeMap<String, Vec<(usize, u32)>> = BTreeMap::new();
        for (idx, (id, tokens)) in docs.into_iter().enumerate() {
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            let mut len = 0;
            for t in tokens {
                *tf.entry(t).or_default() += 1;
                len += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((idx, n));
            }
            doc_ids.push(id);
            doc_len.push(len);
        }
        let total: usize = doc_len.iter().sum();
        let avgdl = if doc_len.is_empty() { 0.0 } else { total as f64 / doc_len.len() as f64 };
        Self {
            doc_ids,
            doc_len,
            avgdl,
            postings,
            k1: Self::K1,
            b: Self::B,
        }
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.doc_freq(term) as f64;
        libm::log((n - df + 0.5) / (df + 0.5) + 1.0)
    }

    /// Scores of every document with at least one query term. Repeated query
    /// terms contribute once per occurrence.
    pub fn scores(&self, query: &[String]) -> BTreeMap<usize, f64> {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for term in query {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for &(doc, tf) in list {
                let tf = f64::from(tf);
                let norm = 1.0 - self.b + self.b * self.doc_len[doc] as f64 / self.avgdl;
                *acc.entry(doc).or_default() += idf * tf * (self.k1 + 1.0) / (tf + self.k1 * norm);
            }
        }
        acc
    }

    /// Top `k` documents by descending score, ties by document id.
    pub fn topk(&self, query: &[String], k: usize) -> Vec<(String, f64)> {
        let mut hits: Vec<(usize, f64)> = self.scores(query).into_iter().collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| self.doc_ids[a.0].cmp(&self.doc_ids[b.0])));
        hits.truncate(k);
        hits.into_iter().map(|(i, s)| (self.doc_ids[i].clone(), s)).collect()
    }
}
