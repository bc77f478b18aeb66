use std::collections::BTreeSet;

use crate::common::{param_grad_error, random_graph, rng, uniform, word_tokenizer};
use ddx_core::acts::{act_loss, ActPredictor};
use ddx_core::classifier::{build_target_attention, classify, gat_encode, losses, Classifier, GatNames, XattnNames};
use ddx_core::corpus::ActCatalogue;
use ddx_core::dog::induce_subgraph;
use ddx_core::numerics::{grad_check, NumericsError, ParamStore, Tape, Tensor2, Var};
use ddx_core::retrieval::{contrastive_loss, negative_mask, ContrastivePair, Encoder};
use rand::seq::SliceRandom;
use rand::Rng;

const SEEDS: u64 = 100;
const TOL: f64 = 1e-4;

fn weighted_sum(tape: &mut Tape, v: Var, w: Tensor2) -> Var {
    let m = tape.mul_const(v, w).unwrap();
    tape.sum(m)
}

fn labels(rng: &mut impl Rng) -> BTreeSet<String> {
    let pool = ["a", "b", "c", "d", "e"];
    let k = rng.gen_range(1..=2);
    pool.choose_multiple(rng, k).map(|s| s.to_string()).collect()
}

pub fn contrastive_loss_gradients() {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let (d, rows) = (4, 12);
        let qe = Encoder::named("q");
        let de = Encoder::named("d");
        let mut store = ParamStore::new();
        qe.init(&mut store, rows, d, &mut r);
        de.init(&mut store, rows, d, &mut r);
        store.insert("q.bias", uniform(&mut r, 1, d, 0.5));
        let n = r.gen_range(3..=5);
        let pairs: Vec<ContrastivePair> = loop {
            let pairs: Vec<ContrastivePair> = (0..n)
                .map(|_| {
                    let l = labels(&mut r);
                    ContrastivePair {
                        query: String::new(),
                        positive: String::new(),
                        query_labels: l.clone(),
                        positive_labels: l,
                    }
                })
                .collect();
            let refs: Vec<&ContrastivePair> = pairs.iter().collect();
            let mask = negative_mask(&refs);
            if (0..n).all(|i| mask[i * n..(i + 1) * n].iter().any(|&m| m)) {
                break pairs;
            }
        };
        let refs: Vec<&ContrastivePair> = pairs.iter().collect();
        let mask = negative_mask(&refs);
        let bag = |r: &mut rand_chacha::ChaCha8Rng| (0..r.gen_range(1..=4)).map(|_| r.gen_range(0..rows)).collect::<Vec<_>>();
        let qbags: Vec<Vec<usize>> = (0..n).map(|_| bag(&mut r)).collect();
        let dbags: Vec<Vec<usize>> = (0..n).map(|_| bag(&mut r)).collect();
        let positives: Vec<usize> = (0..n).collect();
        let include_positive = r.gen_bool(0.5);
        let f = |tape: &mut Tape, s: &ParamStore| {
            let q = qe.forward(tape, s, qbags.clone()).unwrap();
            let p = de.forward(tape, s, dbags.clone()).unwrap();
            let scores = tape.matmul_nt(q, p).unwrap();
            contrastive_loss(tape, scores, &positives, &mask, include_positive).unwrap()
        };
        worst = worst.max(param_grad_error(&store, f, &["q.table", "d.table"]));
        let scores = uniform(&mut r, n, n, 2.0);
        let e = grad_check(|t: &mut Tape, x: Var| contrastive_loss(t, x, &positives, &mask, include_positive), &scores, 1e-5).unwrap();
        worst = worst.max(e);
    }
    assert!(worst < TOL, "worst relative error {worst:e}");
}

pub fn graph_attention_and_cross_attention_gradients() {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut r = rng(1000 + seed);
        let graph = random_graph(&mut r, 2, 3, 3, 5);
        let seeds: Vec<String> = graph.disease_ids().into_iter().collect();
        let sg = induce_subgraph(&graph, &seeds).unwrap();
        let (n, d, heads, n_s, n_d) = (sg.len(), 4, 2, 2, 3);
        let gat = GatNames::new("g", heads);
        let xattn = XattnNames::new("x");
        let mut store = ParamStore::new();
        gat.init(&mut store, d, &mut r);
        xattn.init(&mut store, d, n_d, &mut r);
        store.insert(xattn.wq.clone(), uniform(&mut r, d, d, 1.0));
        let mask = sg.adjacency_mask(true);
        let e0 = uniform(&mut r, n, d, 1.0);
        let s = uniform(&mut r, n_s, d, 1.0);
        let wa = uniform(&mut r, n_s, n, 1.0);
        let wp = uniform(&mut r, 1, n_d, 1.0);
        let f = |tape: &mut Tape, store: &ParamStore, e0: Var| -> Result<Var, NumericsError> {
            let g = gat_encode(tape, store, &gat, e0, &mask)?;
            let sv = tape.constant(s.clone());
            let (a, p) = classify(tape, store, &xattn, sv, g.embeddings)?;
            let la = weighted_sum(tape, a, wa.clone());
            let lp = weighted_sum(tape, p, wp.clone());
            tape.add(la, lp)
        };
        worst = worst.max(param_grad_error(
            &store,
            |tape, st| {
                let x = tape.constant(e0.clone());
                f(tape, st, x).unwrap()
            },
            &[],
        ));
        worst = worst.max(grad_check(|tape: &mut Tape, x: Var| f(tape, &store, x), &e0, 1e-5).unwrap());
    }
    assert!(worst < TOL, "worst relative error {worst:e}");
}

pub fn classifier_loss_gradients() {
    let tok = word_tokenizer();
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut r = rng(2000 + seed);
        let graph = random_graph(&mut r, 2, 2, 3, 4);
        let all: Vec<String> = graph.disease_ids().into_iter().collect();
        let list: Vec<String> = all.iter().take(r.gen_range(1..=3)).cloned().collect();
        let sg = induce_subgraph(&graph, &list).unwrap();
        let clf = Classifier::new("c", 2, all.clone());
        let mut store = ParamStore::new();
        clf.init(&mut store, tok.buckets(), 4, &mut r);
        store.insert(clf.xattn.wq.clone(), uniform(&mut r, 4, 4, 1.0));
        let segments = vec!["y word0 ache".to_string(), "m word1 pain d word2".to_string()];
        let gold = vec![list[0].clone()];
        let target = build_target_attention(&sg, &gold, segments.len());
        let cols: Vec<usize> = list.iter().map(|d| clf.column(d).unwrap()).collect();
        let ys: Vec<f64> = list.iter().map(|d| if gold.contains(d) { 1.0 } else { 0.0 }).collect();
        let f = |tape: &mut Tape, st: &ParamStore| {
            let out = clf.forward(tape, st, &tok, &segments, &sg).unwrap();
            losses(tape, out.attention, target.clone(), out.probs, &cols, &ys, 1.0, 0.5).unwrap().total
        };
        worst = worst.max(param_grad_error(&store, f, &["c.seg.table"]));
    }
    assert!(worst < TOL, "worst relative error {worst:e}");
}

pub fn act_loss_gradients() {
    let tok = word_tokenizer();
    let cat = ActCatalogue::default();
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut r = rng(3000 + seed);
        let pred = ActPredictor::new("a", &cat);
        let mut store = ParamStore::new();
        pred.init(&mut store, tok.buckets(), 3, &mut r);
        store.insert("a.seg.bias", uniform(&mut r, 1, 3, 0.5));
        let words = ["pain", "fever", "since", "yesterday", "cough", "doctor", "hello", "stomach"];
        let text = |r: &mut rand_chacha::ChaCha8Rng| {
            (0..r.gen_range(1..=4)).map(|_| *words.choose(r).unwrap()).collect::<Vec<_>>().join(" ")
        };
        let inputs: Vec<(String, String)> = (0..2).map(|_| (text(&mut r), text(&mut r))).collect();
        let labels: Vec<bool> = (0..2 * cat.len()).map(|_| r.gen_bool(0.3)).collect();
        let f = |tape: &mut Tape, st: &ParamStore| {
            let refs: Vec<(&str, &str)> = inputs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
            let p = pred.forward(tape, st, &tok, &refs).unwrap();
            act_loss(tape, p, &labels).unwrap()
        };
        worst = worst.max(param_grad_error(&store, f, &["a.table"]));
    }
    assert!(worst < TOL, "worst relative error {worst:e}");
}
