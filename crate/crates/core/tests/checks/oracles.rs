use std::collections::BTreeSet;

use crate::common::{random_graph, rng, uniform, word_tokenizer};
use ddx_core::acts::{threshold_grid, tune_thresholds};
use ddx_core::classifier::{classify, gat_encode, GatNames, XattnNames, LEAKY_SLOPE};
use ddx_core::corpus::synth::{generate_synthetic_corpus, SynthSpec};
use ddx_core::corpus::{extract_soap, find_matches, LexiconEntry, SoapLexicon, SoapSection, Split, Tokenizer};
use ddx_core::dog::{induce_subgraph, top_attended_path, DogGraph, EntityKind, SubGraph};
use ddx_core::numerics::{ParamStore, Tape, Tensor2};
use ddx_core::retrieval::{Bm25Index, Encoder, Retriever};
use rand::seq::SliceRandom;
use rand::Rng;

const EPS: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < EPS
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn naive_encode(store: &ParamStore, enc: &Encoder, tok: &Tokenizer, text: &str) -> Vec<f64> {
    let table = store.get(&enc.table).unwrap();
    let proj = store.get(&enc.proj).unwrap();
    let bias = store.get(&enc.bias).unwrap();
    let bag = tok.bag(text);
    let d = table.cols();
    let mut x = vec![0.0; d];
    for &i in &bag {
        for c in 0..d {
            x[c] += table.get(i, c);
        }
    }
    if !bag.is_empty() {
        for v in &mut x {
            *v /= bag.len() as f64;
        }
    }
    (0..d).map(|r| (dot(proj.row(r), &x) + bias.get(0, r)).tanh()).collect()
}

pub fn preliminary_list_matches_exhaustive_ranking() {
    let spec = SynthSpec {
        diseases: 60,
        symptoms: 80,
        train: 120,
        valid: 10,
        test: 0,
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic_corpus(11, &spec).unwrap();
    let tok = word_tokenizer();
    let mut r = rng(4);
    let (ce, de) = (Encoder::named("case"), Encoder::named("doc"));
    let mut store = ParamStore::new();
    ce.init(&mut store, tok.buckets(), 8, &mut r);
    de.init(&mut store, tok.buckets(), 8, &mut r);
    store.insert("case.bias", uniform(&mut r, 1, 8, 0.3));
    let retriever = Retriever::build(&store, &tok, ce.clone(), de.clone(), &corpus.cases, &corpus.documents).unwrap();

    let case_vecs: Vec<Vec<f64>> = corpus.cases.iter().map(|c| naive_encode(&store, &ce, &tok, &c.retrieval_text())).collect();
    let doc_vecs: Vec<Vec<f64>> = corpus.documents.iter().map(|d| naive_encode(&store, &de, &tok, &d.retrieval_text())).collect();
    for d in corpus.dialogues.split(Split::Valid) {
        let query: String = d.turns.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ");
        let qc = naive_encode(&store, &ce, &tok, &query);
        let qd = naive_encode(&store, &de, &tok, &query);
        let case_scores: Vec<f64> = case_vecs.iter().map(|v| dot(&qc, v)).collect();
        let floor = case_scores.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut expected: Vec<(String, f64, f64, f64)> = corpus
            .documents
            .iter()
            .zip(&doc_vecs)
            .map(|(doc, v)| {
                let star = corpus
                    .cases
                    .iter()
                    .zip(&case_scores)
                    .filter(|(c, _)| c.diseases.contains(&doc.id))
                    .map(|(_, &s)| s)
                    .fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.max(s))))
                    .unwrap_or(floor);
                let sd = dot(&qd, v);
                (doc.id.clone(), star, sd, (star + sd) / 2.0)
            })
            .collect();
        expected.sort_by(|a, b| b.3.partial_cmp(&a.3).unwrap().then_with(|| a.0.cmp(&b.0)));
        expected.truncate(50);

        let got = retriever.preliminary_list(&store, &tok, &query, 50).unwrap();
        assert_eq!(got.len(), 50);
        for (g, e) in got.iter().zip(&expected) {
            assert_eq!(g.disease, e.0);
            assert!(close(g.s_case_star, e.1) && close(g.s_doc, e.2) && close(g.s, e.3));
            assert!((g.s - (g.s_case_star + g.s_doc) / 2.0).abs() < 1e-12);
        }
    }
}

fn okapi(docs: &[Vec<String>], query: &[String], i: usize) -> f64 {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let dl = docs[i].len() as f64;
    query
        .iter()
        .map(|t| {
            let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
            let tf = docs[i].iter().filter(|w| *w == t).count() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            idf * tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * dl / avgdl))
        })
        .sum()
}

pub fn bm25_topk_matches_direct_formula() {
    let vocab = ["pain", "fever", "cough", "rash", "nausea", "ache", "chill", "itch", "sore", "dizzy", "numb", "swelling"];
    for seed in 0..20 {
        let mut r = rng(seed);
        let n = r.gen_range(5..=200);
        let docs: Vec<Vec<String>> = (0..n)
            .map(|_| (0..r.gen_range(1..=12)).map(|_| vocab.choose(&mut r).unwrap().to_string()).collect())
            .collect();
        let ids: Vec<String> = (0..n).map(|i| format!("doc{:03}", (i * 7919) % 1000)).collect();
        let index = Bm25Index::build(ids.iter().cloned().zip(docs.iter().cloned()));
        let query: Vec<String> = (0..r.gen_range(1..=4)).map(|_| vocab.choose(&mut r).unwrap().to_string()).collect();
        let mut expected: Vec<(String, f64)> = (0..n)
            .filter(|&i| query.iter().any(|t| docs[i].contains(t)))
            .map(|i| (ids[i].clone(), okapi(&docs, &query, i)))
            .collect();
        expected.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        let k = r.gen_range(1..=10);
        expected.truncate(k);
        let got = index.topk(&query, k);
        assert_eq!(got.len(), expected.len());
        for (g, e) in got.iter().zip(&expected) {
            assert_eq!(g.0, e.0, "seed {seed}");
            assert!(close(g.1, e.1));
        }
    }
}

pub fn bm25_five_document_hand_values() {
    let docs: Vec<Vec<String>> = ["pain fever", "pain pain cough", "rash", "fever chill chill chill", "cough"]
        .iter()
        .map(|s| s.split(' ').map(String::from).collect())
        .collect();
    let index = Bm25Index::build((0..5).map(|i| (format!("d{i}"), docs[i].clone())));
    let scores = index.scores(&["pain".to_string()]);
    // N = 5, df(pain) = 2, avgdl = 11 / 5.
    let idf = (3.5f64 / 2.5 + 1.0).ln();
    let d0 = idf * 1.0 * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 2.0 / 2.2));
    let d1 = idf * 2.0 * 2.2 / (2.0 + 1.2 * (0.25 + 0.75 * 3.0 / 2.2));
    assert!(close(index.avgdl(), 2.2));
    assert!(close(scores[&0], d0));
    assert!(close(scores[&1], d1));
    assert_eq!(scores.len(), 2);
}

fn random_subgraph(seed: u64, max_entities: usize) -> (DogGraph, SubGraph) {
    let mut r = rng(seed);
    loop {
        let graph = random_graph(&mut r, 2, 4, 6, 10);
        let mut diseases: Vec<String> = graph.disease_ids().into_iter().collect();
        diseases.shuffle(&mut r);
        diseases.truncate(r.gen_range(1..=3));
        let sg = induce_subgraph(&graph, &diseases).unwrap();
        if sg.len() <= max_entities {
            return (graph, sg);
        }
    }
}

pub fn gat_encode_matches_double_loop() {
    for seed in 0..30 {
        let (_, sg) = random_subgraph(seed, 30);
        let mut r = rng(100 + seed);
        let (n, d, heads) = (sg.len(), 6, 3);
        let dh = d / heads;
        let names = GatNames::new("g", heads);
        let mut store = ParamStore::new();
        names.init(&mut store, d, &mut r);
        let e0 = uniform(&mut r, n, d, 1.0);
        let mut tape = Tape::new();
        let x = tape.constant(e0.clone());
        let out = gat_encode(&mut tape, &store, &names, x, &sg.adjacency_mask(true)).unwrap();
        let got = tape.value(out.embeddings);

        for k in 0..heads {
            let w = store.get(&names.w[k]).unwrap();
            let a_src = store.get(&names.a_src[k]).unwrap();
            let a_dst = store.get(&names.a_dst[k]).unwrap();
            let h: Vec<Vec<f64>> = (0..n).map(|i| (0..dh).map(|o| dot(w.row(o), e0.row(i))).collect()).collect();
            for i in 0..n {
                let nbrs: Vec<usize> = (0..n).filter(|&j| j == i || sg.has_edge(i, j)).collect();
                let logits: Vec<f64> = nbrs
                    .iter()
                    .map(|&j| {
                        let z = dot(a_src.row(0), &h[i]) + dot(a_dst.row(0), &h[j]);
                        if z > 0.0 { z } else { LEAKY_SLOPE * z }
                    })
                    .collect();
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
                let alpha = tape.value(out.alpha[k]);
                for o in 0..dh {
                    let mut agg = 0.0;
                    for (idx, &j) in nbrs.iter().enumerate() {
                        let a = (logits[idx] - m).exp() / z;
                        assert!(close(alpha.get(i, j), a));
                        agg += a * h[j][o];
                    }
                    let want = if agg > 0.0 { agg } else { agg.exp() - 1.0 };
                    assert!(close(got.get(i, k * dh + o), want), "seed {seed} head {k}");
                }
                for j in (0..n).filter(|j| !nbrs.contains(j)) {
                    assert_eq!(alpha.get(i, j), 0.0);
                }
            }
        }
    }
}

pub fn classify_matches_explicit_loops() {
    for seed in 0..30 {
        let mut r = rng(200 + seed);
        let (n_s, n_g, n, d) = (r.gen_range(1..=4), r.gen_range(1..=30), r.gen_range(1..=6), 4);
        let names = XattnNames::new("x");
        let mut store = ParamStore::new();
        names.init(&mut store, d, n, &mut r);
        store.insert(names.wq.clone(), uniform(&mut r, d, d, 1.0));
        let s = uniform(&mut r, n_s, d, 1.0);
        let e = uniform(&mut r, n_g, d, 1.0);
        let mut tape = Tape::new();
        let sv = tape.constant(s.clone());
        let ev = tape.constant(e.clone());
        let (a, p) = classify(&mut tape, &store, &names, sv, ev).unwrap();

        let m = |x: &Tensor2, w: &Tensor2| -> Vec<Vec<f64>> {
            (0..x.rows())
                .map(|i| (0..w.cols()).map(|c| (0..w.rows()).map(|k| x.get(i, k) * w.get(k, c)).sum()).collect())
                .collect()
        };
        let q = m(&s, store.get(&names.wq).unwrap());
        let k = m(&e, store.get(&names.wk).unwrap());
        let v = m(&e, store.get(&names.wv).unwrap());
        let o = store.get(&names.out).unwrap();
        let mut logits = vec![0.0; n];
        for i in 0..n_s {
            let sc: Vec<f64> = (0..n_g).map(|j| dot(&q[i], &k[j]) / (d as f64).sqrt()).collect();
            let mx = sc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = sc.iter().map(|x| (x - mx).exp()).sum();
            let att: Vec<f64> = sc.iter().map(|x| (x - mx).exp() / z).collect();
            let row_sum: f64 = (0..n_g).map(|j| tape.value(a).get(i, j)).sum();
            assert!((row_sum - 1.0).abs() < EPS);
            for j in 0..n_g {
                assert!(close(tape.value(a).get(i, j), att[j]));
            }
            for c in 0..n {
                for j in 0..n_g {
                    for t in 0..d {
                        logits[c] += att[j] * v[j][t] * o.get(t, c);
                    }
                }
            }
        }
        for c in 0..n {
            assert!(close(tape.value(p).get(0, c), 1.0 / (1.0 + (-logits[c]).exp())), "seed {seed}");
        }
    }
}

pub fn tune_thresholds_matches_exhaustive_table() {
    for seed in 0..30 {
        let mut r = rng(300 + seed);
        let (rows, m) = (r.gen_range(1..=40), r.gen_range(1..=10));
        let scores: Vec<Vec<f64>> = (0..rows).map(|_| (0..m).map(|_| r.gen::<f64>()).collect()).collect();
        let labels: Vec<Vec<bool>> = (0..rows).map(|_| (0..m).map(|_| r.gen_bool(0.3)).collect()).collect();
        let tuned = tune_thresholds(&scores, &labels, m).unwrap();
        let grid: Vec<f64> = threshold_grid().collect();
        assert_eq!(grid.len(), 19);
        for a in 0..m {
            if !labels.iter().any(|l| l[a]) {
                assert_eq!(tuned.thresholds[a], 0.5);
                assert!(tuned.absent.contains(&a));
                continue;
            }
            let table: Vec<f64> = grid
                .iter()
                .map(|&t| {
                    let tp = (0..rows).filter(|&i| scores[i][a] >= t && labels[i][a]).count() as f64;
                    let fp = (0..rows).filter(|&i| scores[i][a] >= t && !labels[i][a]).count() as f64;
                    let fneg = (0..rows).filter(|&i| scores[i][a] < t && labels[i][a]).count() as f64;
                    if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fneg) }
                })
                .collect();
            let best = table.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let first = grid[table.iter().position(|&f| f == best).unwrap()];
            assert_eq!(tuned.thresholds[a], first, "seed {seed} act {a}");
            assert!(tuned.thresholds[a] > 0.0 && tuned.thresholds[a] < 1.0);
        }
    }
}

type Chain = [usize; 4];

fn all_chains(sg: &SubGraph) -> Vec<Chain> {
    let n = sg.len();
    let kind = |i: usize| sg.entities[i].kind;
    let mut out = Vec::new();
    for y in 0..n {
        for o in 0..n {
            for d in 0..n {
                for s in 0..n {
                    let ok = kind(y) == EntityKind::System
                        && kind(o) == EntityKind::Organ
                        && kind(d) == EntityKind::Disease
                        && kind(s) == EntityKind::Symptom
                        && sg.has_edge(y, o)
                        && sg.has_edge(o, d)
                        && sg.has_edge(d, s);
                    if ok {
                        out.push([y, o, d, s]);
                    }
                }
            }
        }
    }
    out
}

pub fn top_attended_path_matches_exhaustive_chains() {
    for seed in 0..40 {
        let (_, sg) = random_subgraph(500 + seed, 30);
        let mut r = rng(600 + seed);
        let n = sg.len();
        let rows = r.gen_range(1..=3);
        let attention = if seed % 4 == 0 {
            Tensor2::filled(rows, n, 1.0 / n as f64)
        } else {
            Tensor2::from_fn(rows, n, |_, _| r.gen::<f64>())
        };
        let sal: Vec<f64> = (0..n).map(|c| (0..rows).map(|i| attention.get(i, c)).sum::<f64>() / rows as f64).collect();
        let id = |i: usize| sg.entities[i].id.clone();
        let mut chains: Vec<(f64, Chain)> = all_chains(&sg)
            .into_iter()
            .map(|c| (((sal[c[0]] + sal[c[1]]) + sal[c[2]]) + sal[c[3]], c))
            .collect();
        chains.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.map(id).cmp(&b.1.map(id))));
        for k in [1, 3, 10] {
            let got = top_attended_path(&sg, &attention, k).unwrap();
            assert_eq!(got.len(), k.min(chains.len()));
            for (g, (score, c)) in got.iter().zip(&chains) {
                assert_eq!(g.ids, c.map(id), "seed {seed} k {k}");
                assert!(close(g.score, *score));
            }
        }
    }
}

pub fn induced_subgraph_equals_union_of_paths() {
    for seed in 0..50 {
        let mut r = rng(700 + seed);
        let graph = random_graph(&mut r, 3, 5, 6, 12);
        let mut seeds: Vec<String> = graph.disease_ids().into_iter().collect();
        seeds.shuffle(&mut r);
        seeds.truncate(r.gen_range(1..=4));
        let kind = |id: &str| graph.entity(id).unwrap().kind;
        let all: Vec<String> = graph.entities().map(|e| e.id.clone()).collect();
        let mut expected: BTreeSet<String> = BTreeSet::new();
        for y in &all {
            for o in &all {
                for s in &all {
                    for d in &seeds {
                        let ok = kind(y) == EntityKind::System
                            && kind(o) == EntityKind::Organ
                            && kind(s) == EntityKind::Symptom
                            && graph.has_edge(y, o)
                            && graph.has_edge(o, d)
                            && graph.has_edge(d, s);
                        if ok {
                            expected.extend([y.clone(), o.clone(), d.clone(), s.clone()]);
                        }
                    }
                }
            }
        }
        let sg = induce_subgraph(&graph, &seeds).unwrap();
        let got: BTreeSet<String> = sg.ids().map(String::from).collect();
        assert_eq!(got, expected, "seed {seed}");
        let order: Vec<(EntityKind, String)> = sg.entities.iter().map(|e| (e.kind, e.id.clone())).collect();
        let mut sorted = order.clone();
        sorted.sort();
        assert_eq!(order, sorted);
        for i in 0..sg.len() {
            for j in 0..sg.len() {
                if i != j {
                    assert_eq!(sg.has_edge(i, j), graph.has_edge(&sg.entities[i].id, &sg.entities[j].id));
                }
            }
        }
    }
}

/// Every `(start, entry, len)` at which a pattern matches, by direct
/// comparison at every offset.
fn all_matches(text: &str, patterns: &[(&str, bool)]) -> Vec<(usize, usize, usize)> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let word = |c: char| c.is_ascii_alphanumeric();
    let mut out = Vec::new();
    for start in 0..chars.len() {
        for (e, (pat, wild)) in patterns.iter().enumerate() {
            let p: Vec<char> = pat.chars().collect();
            let end = start + p.len();
            if end > chars.len() || chars[start..end] != p[..] {
                continue;
            }
            if start > 0 && word(chars[start - 1]) {
                continue;
            }
            let mut stop = end;
            if *wild {
                while stop < chars.len() && word(chars[stop]) {
                    stop += 1;
                }
            } else if stop < chars.len() && word(chars[stop]) {
                continue;
            }
            out.push((start, e, stop - start));
        }
    }
    out
}

pub fn soap_matching_matches_brute_force() {
    let patterns: [(&str, bool, SoapSection); 6] = [
        ("pain", false, SoapSection::S),
        ("pain in", false, SoapSection::S),
        ("fever", false, SoapSection::O),
        ("vomit", true, SoapSection::S),
        ("blood test", false, SoapSection::O),
        ("test", false, SoapSection::A),
    ];
    let lexicon = SoapLexicon::new(
        patterns
            .iter()
            .map(|(p, w, s)| LexiconEntry {
                pattern: if *w { format!("{p}*") } else { p.to_string() },
                section: *s,
            })
            .collect(),
    );
    let plain: Vec<(&str, bool)> = patterns.iter().map(|(p, w, _)| (*p, *w)).collect();
    let pieces = ["pain", "in", "fever", "vomited", "blood", "test", "painful", "x", "tests"];
    let seps = [" ", " ", ", ", ". ", " and "];
    for seed in 0..300 {
        let mut r = rng(800 + seed);
        let mut text = String::new();
        while text.chars().count() < 40 {
            text.push_str(pieces.choose(&mut r).unwrap());
            text.push_str(seps.choose(&mut r).unwrap());
        }
        let text: String = text.chars().take(40).collect();

        let mut expected = Vec::new();
        let hits = all_matches(&text, &plain);
        let mut pos = 0;
        loop {
            let next = hits.iter().filter(|h| h.0 >= pos).map(|h| h.0).min();
            let Some(start) = next else { break };
            let (s, e, len) = *hits
                .iter()
                .filter(|h| h.0 == start)
                .max_by(|a, b| a.2.cmp(&b.2).then_with(|| b.1.cmp(&a.1)))
                .unwrap();
            expected.push((s, s + len, e));
            pos = s + len;
        }
        let got: Vec<(usize, usize, usize)> = find_matches(&text, &lexicon).iter().map(|m| (m.start, m.end, m.entry)).collect();
        assert_eq!(got, expected, "{text:?}");
        let segs = extract_soap(&text, &lexicon, 0);
        let sections: Vec<SoapSection> = segs.iter().map(|s| s.section).collect();
        let want: Vec<SoapSection> = expected.iter().map(|&(_, _, e)| patterns[e].2).collect();
        assert_eq!(sections, want);
    }
}

pub fn disjoint_s_and_o_hits_give_two_segments_in_order() {
    let lexicon = SoapLexicon::parse_tsv("pain\tS\nfever\tO\n").unwrap();
    let segs = extract_soap("I have pain in my side, and a fever", &lexicon, 2);
    let got: Vec<(SoapSection, &str)> = segs.iter().map(|s| (s.section, s.text.as_str())).collect();
    assert_eq!(got, vec![(SoapSection::S, "pain in my side"), (SoapSection::O, "fever")]);
    assert!(segs.iter().all(|s| s.turn_index == 2));
}

pub fn synthetic_gold_recoverable_by_symptom_sets() {
    let corpus = generate_synthetic_corpus(5, &SynthSpec::default()).unwrap();
    let mut dialogues = 0;
    for d in &corpus.dialogues.dialogues {
        let text = d.turns.iter().map(|t| t.text.to_lowercase()).collect::<Vec<_>>().join(" ");
        let observed: BTreeSet<String> = corpus
            .graph
            .entities()
            .filter(|e| e.kind == EntityKind::Symptom && text.contains(&e.name.to_lowercase()))
            .map(|e| e.id.clone())
            .collect();
        let covers = ddx_core::corpus::synth::minimal_disease_covers(&corpus.disease_symptoms, &observed);
        let gold: BTreeSet<String> = d.gold_diseases.iter().cloned().collect();
        assert_eq!(covers, vec![gold], "{}", d.id);
        dialogues += 1;
    }
    assert_eq!(dialogues, 400);
}
