//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#![allow(dead_code)]

#[path = "../../core/tests/checks/mod.rs"]
mod checks;
#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use checks::{gradients, losses, metrics_fixture, oracles};
use ddx::{checkpoint, session_log};
use ddx_core::corpus::synth::{generate_synthetic_corpus, SynthSpec, SyntheticCorpus};
use ddx_core::corpus::{Dialogue, Split, TokenizerMode, Utterance};
use ddx_core::pipeline::{
    evaluate, init_model, run_turn_with, train_all, Ablations, Engine, EvalOutcome, Knowledge, Model, PipelineConfig,
    TrainingReport, TurnTrace,
};

const SEEDS: [u64; 4] = [0, 1, 2, 3];
const TRAIN_BUDGET: Duration = Duration::from_secs(600);
const GRADIENT_BUDGET: Duration = Duration::from_secs(60);

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(name: &'static str, pass: bool, detail: String) -> Outcome {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    Outcome { name, pass, detail }
}

/// Runs each check, catching panics. Returns the names of failing checks.
fn run_checks(checks: &[(&str, fn())]) -> Vec<String> {
    checks
        .iter()
        .filter(|(_, f)| panic::catch_unwind(AssertUnwindSafe(f)).is_err())
        .map(|(n, _)| n.to_string())
        .collect()
}

fn check_group(name: &'static str, checks: &[(&str, fn())], budget: Option<Duration>) -> Outcome {
    let t = Instant::now();
    let failed = run_checks(checks);
    let elapsed = t.elapsed();
    let in_time = budget.map_or(true, |b| elapsed < b);
    let mut detail = format!("{}/{} checks in {:.1}s", checks.len() - failed.len(), checks.len(), elapsed.as_secs_f64());
    if !failed.is_empty() {
        detail.push_str(&format!(", failed: {}", failed.join(", ")));
    }
    if !in_time {
        detail.push_str(&format!(", over budget of {}s", budget.unwrap().as_secs()));
    }
    report(name, failed.is_empty() && in_time, detail)
}

fn config(seed: u64) -> PipelineConfig {
    let mut c = PipelineConfig::default().with_seed(seed);
    c.tokenizer.mode = TokenizerMode::Whitespace;
    c
}

struct Run {
    corpus: SyntheticCorpus,
    knowledge: Knowledge,
    config: PipelineConfig,
    model: Model,
    report: TrainingReport,
    elapsed: Duration,
}

fn train(seed: u64) -> Run {
    let corpus = generate_synthetic_corpus(seed, &SynthSpec::default()).expect("synthetic corpus");
    let knowledge = Knowledge::from_synthetic(&corpus);
    let config = config(seed);
    let t = Instant::now();
    let (model, report) = train_all(&config, &knowledge, &corpus.dialogues).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    Run {
        corpus,
        knowledge,
        config,
        model,
        report,
        elapsed: t.elapsed(),
    }
}

fn valid(run: &Run) -> Vec<&Dialogue> {
    run.corpus.dialogues.split(Split::Valid).collect()
}

fn eval_with(engine: &Engine, run: &Run, ablations: Ablations) -> EvalOutcome {
    evaluate(engine, &valid(run), &run.config.clone().with_ablations(ablations)).expect("evaluation")
}

struct SeedScores {
    seed: u64,
    full: EvalOutcome,
    no_dog: f64,
    no_analytic: f64,
    elapsed: Duration,
}

fn end_to_end(runs: &[Run]) -> (Outcome, Outcome, Vec<SeedScores>) {
    let scores: Vec<SeedScores> = runs
        .iter()
        .zip(SEEDS)
        .map(|(run, seed)| {
            let engine = Engine::new(run.config.clone(), run.knowledge.clone(), run.model.clone()).expect("engine");
            let full = eval_with(&engine, run, Ablations::default());
            let no_dog = eval_with(&engine, run, Ablations { no_dog: true, ..Ablations::default() }).report.d_f1;
            let no_analytic = eval_with(&engine, run, Ablations { no_analytic: true, ..Ablations::default() }).report.d_f1;
            println!(
                "  seed {seed}: train {:.1}s, D-F1 {:.3} (no_dog {:.3}, no_analytic {:.3}), act micro-F1 {:.3}",
                run.elapsed.as_secs_f64(),
                full.report.d_f1,
                no_dog,
                no_analytic,
                full.act_micro_f1
            );
            SeedScores {
                seed,
                full,
                no_dog,
                no_analytic,
                elapsed: run.elapsed,
            }
        })
        .collect();
    let quality = scores
        .iter()
        .all(|s| s.full.report.d_f1 >= 0.90 && s.full.act_micro_f1 >= 0.80 && s.elapsed <= TRAIN_BUDGET);
    let worst_d = scores.iter().map(|s| s.full.report.d_f1).fold(f64::INFINITY, f64::min);
    let worst_a = scores.iter().map(|s| s.full.act_micro_f1).fold(f64::INFINITY, f64::min);
    let slowest = scores.iter().map(|s| s.elapsed).max().unwrap_or_default();
    let a = report(
        "synthetic end-to-end quality",
        quality,
        format!(
            "min D-F1 {worst_d:.3} (>= 0.90), min act micro-F1 {worst_a:.3} (>= 0.80), slowest training {:.1}s (<= 600s) over {} seeds",
            slowest.as_secs_f64(),
            scores.len()
        ),
    );
    let holding: Vec<u64> = scores
        .iter()
        .filter(|s| s.full.report.d_f1 >= s.no_dog && s.no_dog >= s.no_analytic)
        .map(|s| s.seed)
        .collect();
    let b = report(
        "ablation ordering full >= no_dog >= no_analytic",
        holding.len() >= 3,
        format!("holds for seeds {holding:?} ({} of {}, need 3)", holding.len(), scores.len()),
    );
    (a, b, scores)
}

fn explanation(runs: &[Run], scores: &[SeedScores]) -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for (run, s) in runs.iter().zip(scores) {
        let untrained = init_model(&run.config, &run.knowledge).expect("init");
        let engine = Engine::new(run.config.clone(), run.knowledge.clone(), untrained).expect("engine");
        let before = eval_with(&engine, run, Ablations::default());
        let (pre, pre_uniform) = (before.gold_path_mass.unwrap_or(f64::NAN), before.uniform_path_mass.unwrap_or(f64::NAN));
        let post = s.full.gold_path_mass.unwrap_or(f64::NAN);
        let ok = post >= 0.6 && pre <= pre_uniform + 1e-12;
        pass &= ok;
        lines.push(format!("seed {}: {post:.3} after, {pre:.3} before vs uniform {pre_uniform:.3}", s.seed));
    }
    report("explanation efficacy", pass, lines.join("; "))
}

fn session_traces(engine: &Engine, dialogue: &Dialogue) -> Vec<TurnTrace> {
    let mut state = engine.session(dialogue.id.clone());
    dialogue
        .patient_turns()
        .map(|t| {
            let u = Utterance::patient(dialogue.turns[t].text.clone());
            run_turn_with(engine, &mut state, u).expect("turn").1
        })
        .collect()
}

fn determinism(first: &Run) -> Outcome {
    let again = train(SEEDS[0]);
    let a = checkpoint::encode(&first.model, &first.config);
    let b = checkpoint::encode(&again.model, &again.config);
    let same_checkpoint = a == b;

    let engine = Engine::new(first.config.clone(), first.knowledge.clone(), first.model.clone()).expect("engine");
    let twin = Engine::new(again.config.clone(), again.knowledge.clone(), again.model.clone()).expect("engine");
    let dir = tempfile::tempdir().expect("tempdir");
    let mut same_traces = true;
    let mut turns = 0;
    for d in valid(first).into_iter().take(5) {
        let x = serde_json::to_string(&session_traces(&engine, d)).expect("json");
        let y = serde_json::to_string(&session_traces(&twin, d)).expect("json");
        same_traces &= x == y;

        let path = session_log::log_path(dir.path(), &d.id);
        let mut state = engine.session(d.id.clone());
        let mut log = session_log::SessionLog::create(&path, &state).expect("log");
        let mut live = Vec::new();
        for t in d.patient_turns() {
            let u = Utterance::patient(d.turns[t].text.clone());
            let (_, trace) = run_turn_with(&engine, &mut state, u.clone()).expect("turn");
            log.turn(&u, &trace).expect("append");
            live.push(trace);
            turns += 1;
        }
        let replayed = session_log::replay(&twin, &path).expect("replay");
        same_traces &= serde_json::to_string(&replayed.traces).expect("json") == serde_json::to_string(&live).expect("json");
    }
    report(
        "determinism",
        same_checkpoint && same_traces,
        format!(
            "checkpoint {} ({} bytes), traces {} over {turns} turns",
            if same_checkpoint { "identical" } else { "differs" },
            a.len(),
            if same_traces { "identical" } else { "differ" }
        ),
    )
}

fn main() {
    let mut outcomes = Vec::new();

    outcomes.push(check_group(
        "gradient integrity",
        &[
            ("contrastive", gradients::contrastive_loss_gradients),
            ("graph and cross attention", gradients::graph_attention_and_cross_attention_gradients),
            ("classifier losses", gradients::classifier_loss_gradients),
            ("act loss", gradients::act_loss_gradients),
        ],
        Some(GRADIENT_BUDGET),
    ));
    outcomes.push(check_group(
        "oracle equivalence",
        &[
            ("preliminary_list", oracles::preliminary_list_matches_exhaustive_ranking),
            ("bm25_topk", oracles::bm25_topk_matches_direct_formula),
            ("bm25 hand values", oracles::bm25_five_document_hand_values),
            ("gat_encode", oracles::gat_encode_matches_double_loop),
            ("classify", oracles::classify_matches_explicit_loops),
            ("tune_thresholds", oracles::tune_thresholds_matches_exhaustive_table),
            ("top_attended_path", oracles::top_attended_path_matches_exhaustive_chains),
        ],
        None,
    ));
    outcomes.push(check_group(
        "loss identities",
        &[
            ("explanation loss at target", losses::matching_attention_gives_zero_explanation_loss),
            ("diagnosis loss at one half", losses::half_probability_gives_ln2),
            ("weighted total", losses::total_is_weighted_sum_exactly),
        ],
        None,
    ));
    outcomes.push(check_group(
        "metrics correctness",
        &[
            ("bleu", metrics_fixture::bleu_matches_hand_counts),
            ("rouge", metrics_fixture::rouge_matches_hand_counts),
            ("entity f1", metrics_fixture::entity_prf_matches_hand_counts),
            ("disease f1", metrics_fixture::disease_f1_matches_hand_counts),
            ("report", metrics_fixture::report_combines_fixture_scores),
            ("echo gold", metrics_fixture::echo_gold_scores_one),
        ],
        None,
    ));

    let runs: Vec<Run> = SEEDS.iter().map(|&s| train(s)).collect();
    let (quality, ordering, scores) = end_to_end(&runs);
    outcomes.push(quality);
    outcomes.push(ordering);
    outcomes.push(explanation(&runs, &scores));
    outcomes.push(determinism(&runs[0]));

    let failed: Vec<&Outcome> = outcomes.iter().filter(|o| !o.pass).collect();
    println!("{} of {} criteria passed", outcomes.len() - failed.len(), outcomes.len());
    if !failed.is_empty() {
        for o in failed {
            eprintln!("failed: {} ({})", o.name, o.detail);
        }
        std::process::exit(1);
    }
}
