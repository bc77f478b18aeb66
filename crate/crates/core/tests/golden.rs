//! Byte-level golden files. Set `DDX_BLESS=1` to rewrite them.

mod common;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use common::ids;
use ddx_core::corpus::{fnv1a, DiseaseDocument, Tokenizer, TokenizerConfig, TokenizerMode};
use ddx_core::dog::{induce_subgraph, DogGraph};
use ddx_core::generation::{compose_plan, passages_from_documents, render, select_passages, ActAspectMap, PassageIndex, TemplatePack};

fn check(name: &str, actual: &str) {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "golden", name].iter().collect();
    if std::env::var_os("DDX_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name} drifted from its golden file");
}

/// Plain 64-bit FNV-1a from the published constants.
fn reference_fnv_bytes(bytes: &[u8]) -> u64 {
    let mut h: u64 = 14695981039346656037;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(1099511628211);
    }
    h
}

fn reference_fnv(seed: u64, token: &str) -> u64 {
    let mut bytes = Vec::new();
    for i in 0..8 {
        bytes.push(((seed >> (8 * i)) & 0xff) as u8);
    }
    bytes.extend_from_slice(token.as_bytes());
    reference_fnv_bytes(&bytes)
}

const TEXTS: &[&str] = &[
    "I have had a sharp stomach-ache since Tuesday.",
    "Fever 38.5C, COUGH and a sore throat!",
    "肚子疼了三天，还有点恶心。",
    "naïve café résumé",
];

#[test]
fn tokenizer_hashes_match_golden() {
    let mut out = String::new();
    for mode in [TokenizerMode::Whitespace, TokenizerMode::Grapheme] {
        for seed in [0u64, 7] {
            let tok = Tokenizer::new(TokenizerConfig {
                mode,
                seed,
                ..TokenizerConfig::default()
            })
            .unwrap();
            for text in TEXTS {
                for t in tok.content_tokens(text) {
                    let h = fnv1a(seed, t.as_bytes());
                    assert_eq!(h, reference_fnv(seed, &t));
                    assert_eq!(tok.bucket(&t) as u64, h % 4096);
                    writeln!(out, "{mode:?}\t{seed}\t{t}\t{h:016x}\t{}", tok.bucket(&t)).unwrap();
                }
            }
        }
    }
    check("tokens.tsv", &out);
}

#[test]
fn fnv_known_vectors() {
    assert_eq!(reference_fnv_bytes(b""), 0xcbf29ce484222325);
    assert_eq!(reference_fnv_bytes(b"a"), 0xaf63dc4c8601ec8c);
    assert_eq!(reference_fnv_bytes(b"foobar"), 0x85944171f73967e8);
    for seed in [0u64, 1, 7, u64::MAX] {
        for t in ["", "a", "stomach", "肚"] {
            assert_eq!(fnv1a(seed, t.as_bytes()), reference_fnv(seed, t));
        }
    }
}

fn fixture_graph() -> DogGraph {
    let entities = "\
id\tkind\tname
sys_gi\tsystem\tdigestive system
sys_resp\tsystem\trespiratory system
org_stomach\torgan\tstomach
org_esoph\torgan\tesophagus
org_lung\torgan\tlung
dis_gastritis\tdisease\tgastritis
dis_gerd\tdisease\tgerd
dis_pneu\tdisease\tpneumonia
sym_pain\tsymptom\tstomach pain
sym_reflux\tsymptom\tacid reflux
sym_cough\tsymptom\tcough
sym_fever\tsymptom\tfever
";
    let edges = "\
sys_gi\torg_stomach
sys_gi\torg_esoph
sys_resp\torg_lung
org_stomach\tdis_gastritis
org_esoph\tdis_gerd
org_stomach\tdis_gerd
org_lung\tdis_pneu
dis_gastritis\tsym_pain
dis_gerd\tsym_reflux
dis_gerd\tsym_pain
dis_pneu\tsym_cough
dis_pneu\tsym_fever
";
    DogGraph::load(entities, edges).unwrap()
}

#[test]
fn subgraph_ordering_matches_golden() {
    let graph = fixture_graph();
    let mut out = String::new();
    for seeds in [vec!["dis_gerd"], vec!["dis_pneu", "dis_gastritis"], vec!["dis_gastritis", "dis_gerd", "dis_pneu"]] {
        let sg = induce_subgraph(&graph, &ids(&seeds)).unwrap();
        let again = induce_subgraph(&graph, &ids(&seeds)).unwrap();
        assert!(sg.ids().eq(again.ids()));
        writeln!(out, "{}\t{}", seeds.join(","), sg.ids().collect::<Vec<_>>().join(",")).unwrap();
    }
    check("subgraph.tsv", &out);
}

fn doc(id: &str, name: &str, symptom: &str) -> DiseaseDocument {
    DiseaseDocument {
        id: id.into(),
        name: name.into(),
        overview: format!("{name} is a common disorder."),
        etiology: format!("{name} is often caused by infection."),
        symptoms: vec![symptom.into()],
        manifestations: format!("{name} commonly presents with {symptom}."),
        examinations: format!("a {name} panel is recommended."),
        treatment: format!("take {name}-relief tablets twice a day."),
    }
}

#[test]
fn rendered_reply_matches_golden() {
    let tok = Tokenizer::new(TokenizerConfig {
        mode: TokenizerMode::Whitespace,
        ..TokenizerConfig::default()
    })
    .unwrap();
    let docs = vec![
        doc("dis_gastritis", "gastritis", "stomach pain"),
        doc("dis_gerd", "gerd", "acid reflux"),
    ];
    let names: BTreeMap<String, String> = docs.iter().map(|d| (d.id.clone(), d.name.clone())).collect();
    let index = PassageIndex::build(passages_from_documents(&docs), &tok);
    let map = ActAspectMap::default();
    let diseases = ids(&["dis_gerd", "dis_gastritis"]);
    let acts = ids(&["greeting", "inquire_present_illness", "state_diagnosis", "recommend_examination", "recommend_medicine"]);
    let passages = select_passages(&diseases, &acts, &index, &map, "acid reflux after meals", &tok, 5).unwrap();
    let plan = compose_plan(&diseases, &acts, &passages, &map, &names).unwrap();
    let reply = render(&plan, &TemplatePack::default()).unwrap();
    let mut out = reply.text.clone();
    out.push('\n');
    out.push_str(&serde_json::to_string_pretty(&reply.provenance).unwrap());
    out.push('\n');
    check("reply.txt", &out);
}
