#![allow(dead_code)]

use std::collections::BTreeSet;

use ddx_core::corpus::{Tokenizer, TokenizerConfig, TokenizerMode};
use ddx_core::dog::{DogEntity, DogGraph, EntityKind};
use ddx_core::numerics::{ParamStore, Tape, Tensor2, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ids(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor2 {
    Tensor2::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

pub fn word_tokenizer() -> Tokenizer {
    Tokenizer::new(TokenizerConfig {
        mode: TokenizerMode::Whitespace,
        hash_buckets: 256,
        ..TokenizerConfig::default()
    })
    .unwrap()
}

pub fn scalar(tape: &Tape, v: Var) -> f64 {
    tape.value(v).item().expect("scalar")
}

/// Largest `|analytic - numeric| / max(1, |analytic|)` over every parameter
/// that receives a gradient. Rows of a table listed in `sparse` whose
/// analytic gradient is exactly zero are not referenced by the loss, so
/// only the first such row is probed.
pub fn param_grad_error<F>(store: &ParamStore, f: F, sparse: &[&str]) -> f64
where
    F: Fn(&mut Tape, &ParamStore) -> Var,
{
    const H: f64 = 1e-5;
    let mut tape = Tape::new();
    let loss = f(&mut tape, store);
    let grads = tape.backward(loss).unwrap().params(&tape);
    let eval = |s: &ParamStore| {
        let mut t = Tape::new();
        let v = f(&mut t, s);
        scalar(&t, v)
    };
    let mut worst: f64 = 0.0;
    let mut probe = store.clone();
    for (name, g) in &grads {
        let base = store.get(name).unwrap().clone();
        let (rows, cols) = base.shape();
        let mut probed_zero_row = false;
        for r in 0..rows {
            if sparse.contains(&name.as_str()) && g.row(r).iter().all(|&x| x == 0.0) {
                if probed_zero_row {
                    continue;
                }
                probed_zero_row = true;
            }
            for c in 0..cols {
                let i = r * cols + c;
                let mut data = base.data().to_vec();
                data[i] += H;
                probe.insert(name.clone(), Tensor2::new(rows, cols, data.clone()).unwrap());
                let up = eval(&probe);
                data[i] -= 2.0 * H;
                probe.insert(name.clone(), Tensor2::new(rows, cols, data).unwrap());
                let down = eval(&probe);
                probe.insert(name.clone(), base.clone());
                let numeric = (up - down) / (2.0 * H);
                let a = g.get(r, c);
                worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
            }
        }
    }
    worst
}

/// Random valid tetrapartite graph. Every disease gets one or two organs
/// and one to three symptoms; every organ gets one system.
pub fn random_graph(rng: &mut ChaCha8Rng, systems: usize, organs: usize, diseases: usize, symptoms: usize) -> DogGraph {
    let mut entities = Vec::new();
    let push = |prefix: &str, kind: EntityKind, n: usize, entities: &mut Vec<DogEntity>| {
        (0..n)
            .map(|i| {
                let id = format!("{prefix}{i}");
                entities.push(DogEntity {
                    id: id.clone(),
                    kind,
                    name: format!("{prefix} word{i}"),
                });
                id
            })
            .collect::<Vec<_>>()
    };
    let ys = push("y", EntityKind::System, systems, &mut entities);
    let os = push("o", EntityKind::Organ, organs, &mut entities);
    let ds = push("d", EntityKind::Disease, diseases, &mut entities);
    let ms = push("m", EntityKind::Symptom, symptoms, &mut entities);
    let mut edges = BTreeSet::new();
    for o in &os {
        edges.insert((ys[rng.gen_range(0..systems)].clone(), o.clone()));
        if rng.gen_bool(0.3) {
            edges.insert((ys[rng.gen_range(0..systems)].clone(), o.clone()));
        }
    }
    for d in &ds {
        for _ in 0..rng.gen_range(1..=2) {
            edges.insert((os[rng.gen_range(0..organs)].clone(), d.clone()));
        }
        for _ in 0..rng.gen_range(1..=3) {
            edges.insert((d.clone(), ms[rng.gen_range(0..symptoms)].clone()));
        }
    }
    let edges: Vec<(String, String)> = edges.into_iter().collect();
    DogGraph::from_parts(entities, &edges).unwrap()
}
