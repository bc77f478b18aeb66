use std::collections::BTreeSet;

use ddx_core::metrics::{bleu_n, build_report, disease_f1, entity_prf, rouge_n, words, DialogueEval, EntityLexicon, EvalInputs};

const TOL: f64 = 1e-9;

const CANDIDATES: [&str; 3] = ["the cat sat on the mat", "a dog runs", "fever and cough"];
const REFERENCES: [&str; 3] = ["the cat is on the mat", "the dog runs fast", "fever and cough"];

fn tokens(xs: &[&str]) -> Vec<Vec<String>> {
    xs.iter().map(|s| words(s)).collect()
}

fn set(xs: &[&str]) -> BTreeSet<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn lexicon() -> EntityLexicon {
    EntityLexicon(
        [("fever", "fev"), ("cough", "cou"), ("cat", "cat"), ("mat", "mat"), ("dog", "dog")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect(),
    )
}

fn close(a: f64, b: f64) {
    assert!((a - b).abs() < TOL, "{a} vs {b}");
}

// Candidate length 12, reference length 13.
// Clipped / total n-gram counts per order:
//   1: 5/6 + 2/3 + 3/3 = 10/12
//   2: 3/5 + 1/2 + 2/2 = 6/9
//   3: 1/4 + 0/1 + 1/1 = 2/6
//   4: 0/3 + 0/0 + 0/0 = 0/3, smoothed to 1/4
fn brevity() -> f64 {
    (1.0f64 - 13.0 / 12.0).exp()
}

pub fn bleu_matches_hand_counts() {
    let (c, r) = (tokens(&CANDIDATES), tokens(&REFERENCES));
    let (p1, p2, p3, p4) = (10.0 / 12.0, 6.0 / 9.0, 2.0 / 6.0, 1.0 / 4.0);
    close(bleu_n(&c, &r, 1).unwrap(), brevity() * p1);
    close(bleu_n(&c, &r, 2).unwrap(), brevity() * (p1 * p2).sqrt());
    close(bleu_n(&c, &r, 4).unwrap(), brevity() * (p1 * p2 * p3 * p4).powf(0.25));
    assert!(bleu_n(&c, &r, 3).is_err());
}

pub fn rouge_matches_hand_counts() {
    let (c, r) = (tokens(&CANDIDATES), tokens(&REFERENCES));
    // Unigram F per pair: 5/6, F(2/3, 1/2) = 4/7, 1.
    close(rouge_n(&c, &r, 1).unwrap(), (5.0 / 6.0 + 4.0 / 7.0 + 1.0) / 3.0);
    // Bigram F per pair: 3/5, F(1/2, 1/3) = 2/5, 1.
    close(rouge_n(&c, &r, 2).unwrap(), (3.0 / 5.0 + 2.0 / 5.0 + 1.0) / 3.0);
}

pub fn entity_prf_matches_hand_counts() {
    let texts: Vec<String> = CANDIDATES.iter().map(|s| s.to_string()).collect();
    let gold = vec![set(&["cat", "fev"]), set(&["dog", "mat"]), set(&["fev", "cou"])];
    // Found: {cat, mat}, {dog}, {fev, cou}. TP 4, predicted 5, gold 6.
    let e = entity_prf(&texts, &gold, &lexicon()).unwrap();
    close(e.precision, 4.0 / 5.0);
    close(e.recall, 4.0 / 6.0);
    close(e.f1, 8.0 / 11.0);
    assert!(entity_prf(&texts, &gold, &EntityLexicon::default()).is_err());
}

pub fn disease_f1_matches_hand_counts() {
    let two = disease_f1(&[set(&["A", "B"]), set(&["C"])], &[set(&["A"]), set(&["C", "D"])]).unwrap();
    close(two, 2.0 / 3.0);
    // Adding an empty prediction against {E}: TP 2, FP 1, FN 2.
    let three = disease_f1(
        &[set(&["A", "B"]), set(&["C"]), set(&[])],
        &[set(&["A"]), set(&["C", "D"]), set(&["E"])],
    )
    .unwrap();
    close(three, 4.0 / 7.0);
    close(disease_f1(&[set(&[]), set(&[])], &[set(&["A"]), set(&["B"])]).unwrap(), 0.0);
}

pub fn report_combines_fixture_scores() {
    let (c, r) = (tokens(&CANDIDATES), tokens(&REFERENCES));
    let ct: Vec<String> = CANDIDATES.iter().map(|s| s.to_string()).collect();
    let rt: Vec<String> = REFERENCES.iter().map(|s| s.to_string()).collect();
    let lex = lexicon();
    let dialogue = |id: &str, p: &[&str], g: &[&str]| DialogueEval {
        id: id.into(),
        predicted: set(p),
        gold: set(g),
        turns: 1,
    };
    let report = build_report(EvalInputs {
        candidates: &c,
        references: &r,
        candidate_texts: &ct,
        reference_texts: &rt,
        lexicon: &lex,
        per_dialogue: vec![dialogue("x", &["A", "B"], &["A"]), dialogue("y", &["C"], &["C", "D"])],
    })
    .unwrap();
    close(report.b1, brevity() * 10.0 / 12.0);
    // Gold entities from the references: {cat, mat}, {dog}, {fev, cou}, matching the candidates exactly.
    close(report.e_f1, 1.0);
    close(report.d_f1, 2.0 / 3.0);
}

pub fn echo_gold_scores_one() {
    let r = tokens(&REFERENCES);
    let rt: Vec<String> = REFERENCES.iter().map(|s| s.to_string()).collect();
    let lex = lexicon();
    let report = build_report(EvalInputs {
        candidates: &r,
        references: &r,
        candidate_texts: &rt,
        reference_texts: &rt,
        lexicon: &lex,
        per_dialogue: vec![DialogueEval {
            id: "x".into(),
            predicted: set(&["A"]),
            gold: set(&["A"]),
            turns: 1,
        }],
    })
    .unwrap();
    for v in [report.b1, report.b2, report.b4, report.r1, report.r2, report.e_f1, report.d_f1] {
        assert_eq!(v, 1.0);
    }
}
