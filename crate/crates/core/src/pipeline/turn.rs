use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Engine, PipelineConfig, PipelineError, TRACE_SCHEMA_VERSION};
use crate::acts::ActPrediction;
use crate::classifier::{classify, gat_encode, refine, RefinedDiagnosis};
use crate::corpus::{build_query, normalize_segment_text, Query, SoapSegment, Speaker, Utterance};
use crate::dog::{induce_subgraph, top_attended_path, DiagnosticPath, EntityKind, SubGraph};
use crate::generation::{compose_plan, render, select_passages, KnowledgePassage, ResponsePlan};
use crate::numerics::{Tape, Tensor2, Var};
use crate::retrieval::ScoredDisease;

/// Stage names in execution order.
pub const STAGES: [&str; 11] = [
    "extract_soap",
    "build_query",
    "preliminary_list",
    "induce_subgraph",
    "gat_encode",
    "classify",
    "refine",
    "predict_acts",
    "select_passages",
    "compose_plan",
    "render",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub config: PipelineConfig,
    pub dialogue: Vec<Utterance>,
    /// Segments of every processed turn, deduplicated by normalized text.
    pub segments: Vec<SoapSegment>,
    /// Number of dialogue turns already segmented.
    pub processed: usize,
    pub last_preliminary: Option<Vec<ScoredDisease>>,
    pub last_refined: Option<RefinedDiagnosis>,
    pub last_plan: Option<ResponsePlan>,
}

impl SessionState {
    pub fn new(id: impl Into<String>, config: PipelineConfig) -> Self {
        Self {
            id: id.into(),
            config,
            dialogue: Vec::new(),
            segments: Vec::new(),
            processed: 0,
            last_preliminary: None,
            last_refined: None,
            last_plan: None,
        }
    }

    /// A session whose history is the given turns; they are segmented on
    /// the next turn.
    pub fn with_history(id: impl Into<String>, config: PipelineConfig, turns: &[Utterance]) -> Self {
        let mut s = Self::new(id, config);
        s.dialogue = turns.to_vec();
        s
    }

    /// Number of deduplicated segments (`n_s`).
    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: StageStatus,
    pub note: String,
}

/// Column of the attention matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntity {
    pub id: String,
    pub kind: EntityKind,
    pub name: String,
}

/// Every intermediate of one turn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnTrace {
    pub schema_version: u32,
    pub session_id: String,
    /// Dialogue index of the patient utterance.
    pub turn: usize,
    pub stages: Vec<StageRecord>,
    pub new_segments: Vec<SoapSegment>,
    pub query: Query,
    pub preliminary: Vec<ScoredDisease>,
    /// Attention columns, in subgraph order.
    pub subgraph: Vec<TraceEntity>,
    /// `n_s x n` cross-attention, absent when the graph classifier did not run.
    pub attention: Option<Tensor2>,
    pub paths: Vec<DiagnosticPath>,
    /// `(disease, p)` in preliminary-list order.
    pub probabilities: Vec<(String, f64)>,
    pub threshold: f64,
    pub refined: Option<RefinedDiagnosis>,
    pub acts: Option<ActPrediction>,
    pub passages: Vec<KnowledgePassage>,
    pub plan: Option<ResponsePlan>,
    pub reply: String,
}

struct Recorder {
    stages: Vec<StageRecord>,
}

impl Recorder {
    fn ok(&mut self, stage: &'static str, note: impl Into<String>) {
        self.push(stage, StageStatus::Ok, note.into());
    }

    fn skip(&mut self, stage: &'static str, why: &str) {
        self.push(stage, StageStatus::Skipped, why.to_string());
    }

    fn push(&mut self, stage: &'static str, status: StageStatus, note: String) {
        debug_assert_eq!(STAGES[self.stages.len()], stage);
        self.stages.push(StageRecord {
            stage: stage.to_string(),
            status,
            note,
        });
    }
}

fn fail<E: core::fmt::Display>(stage: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        message: e.to_string(),
    }
}

/// Processes one patient utterance. On error the state is left untouched
/// and the failing stage is named.
pub fn run_turn(engine: &Engine, state: &mut SessionState, utterance: &str) -> Result<(String, TurnTrace), PipelineError> {
    run_turn_with(engine, state, Utterance::patient(utterance))
}

/// As [`run_turn`], for a patient utterance that may carry annotated segments.
pub fn run_turn_with(
    engine: &Engine,
    state: &mut SessionState,
    utterance: Utterance,
) -> Result<(String, TurnTrace), PipelineError> {
    if utterance.speaker != Speaker::Patient {
        return Err(PipelineError::Stage {
            stage: STAGES[0],
            message: "expected a patient utterance".into(),
        });
    }
    let mut next = state.clone();
    let trace = execute(engine, &mut next, utterance)?;
    *state = next;
    Ok((trace.reply.clone(), trace))
}

fn execute(engine: &Engine, st: &mut SessionState, utterance: Utterance) -> Result<TurnTrace, PipelineError> {
    let cfg = st.config.clone();
    let ab = cfg.ablations;
    let mut rec = Recorder { stages: Vec::new() };

    if utterance.text.trim().is_empty() && utterance.segments.is_none() {
        return Err(fail("extract_soap")("empty utterance"));
    }
    let turn = st.dialogue.len();
    let patient_text = utterance.text.clone();
    st.dialogue.push(utterance);
    let mut seen: BTreeSet<String> = st.segments.iter().map(|s| normalize_segment_text(&s.text)).collect();
    let mut new_segments = Vec::new();
    for i in st.processed..st.dialogue.len() {
        for seg in st.dialogue[i].soap_segments(&engine.knowledge.lexicon, i) {
            if seen.insert(normalize_segment_text(&seg.text)) {
                new_segments.push(seg);
            }
        }
    }
    st.processed = st.dialogue.len();
    st.segments.extend(new_segments.iter().cloned());
    rec.ok("extract_soap", alloc::format!("{} new, {} total", new_segments.len(), st.segments.len()));

    let query = build_query(
        &st.segments,
        st.dialogue
            .iter()
            .filter(|u| u.speaker == Speaker::Patient)
            .map(|u| u.text.as_str()),
    );
    rec.ok(
        "build_query",
        if query.fallback { "raw dialogue fallback".to_string() } else { alloc::format!("{} segments", query.segments.len()) },
    );
    let class_segments: Vec<String> = if query.fallback {
        alloc::vec![query.text.clone()]
    } else {
        query.segments.iter().map(|s| s.text.clone()).collect()
    };

    let preliminary = if ab.no_ddx {
        rec.skip("preliminary_list", "no_ddx");
        Vec::new()
    } else {
        let list = engine
            .retriever
            .preliminary_list(&engine.params, &engine.tokenizer, &query.text, cfg.k)
            .map_err(fail("preliminary_list"))?;
        rec.ok("preliminary_list", alloc::format!("{} diseases", list.len()));
        list
    };
    let list_ids: Vec<String> = preliminary.iter().map(|d| d.disease.clone()).collect();

    let graph_skip = if ab.no_ddx {
        Some("no_ddx")
    } else if ab.no_analytic {
        Some("no_analytic")
    } else if ab.no_dog {
        Some("no_dog")
    } else {
        None
    };
    let mut tape = Tape::new();
    let sg: Option<SubGraph> = match graph_skip {
        Some(why) => {
            rec.skip("induce_subgraph", why);
            None
        }
        None => {
            let sg = induce_subgraph(&engine.knowledge.graph, &list_ids).map_err(fail("induce_subgraph"))?;
            rec.ok("induce_subgraph", alloc::format!("{} entities, {} edges", sg.len(), sg.edges.len()));
            Some(sg)
        }
    };
    let entities: Option<Var> = match (&sg, graph_skip) {
        (Some(sg), None) => {
            let model = &engine.arch.classifier;
            let e0 = model
                .raw_entities(&mut tape, &engine.params, &engine.tokenizer, sg)
                .map_err(fail("gat_encode"))?;
            let g = gat_encode(&mut tape, &engine.params, &model.gat, e0, &sg.adjacency_mask(true))
                .map_err(fail("gat_encode"))?;
            rec.ok("gat_encode", alloc::format!("{} heads", model.heads));
            Some(g.embeddings)
        }
        (_, why) => {
            rec.skip("gat_encode", why.unwrap_or("no subgraph"));
            None
        }
    };

    let mut attention = None;
    let mut paths = Vec::new();
    let probabilities: Vec<(String, f64)> = if ab.no_ddx || ab.no_analytic {
        rec.skip("classify", if ab.no_ddx { "no_ddx" } else { "no_analytic" });
        Vec::new()
    } else if ab.no_dog {
        let p = engine
            .arch
            .no_dog
            .predict(&engine.params, &engine.tokenizer, &class_segments, &list_ids)
            .map_err(fail("classify"))?;
        rec.ok("classify", "graph-free head");
        p
    } else {
        let (sg, e) = (sg.as_ref().expect("subgraph"), entities.expect("entities"));
        let model = &engine.arch.classifier;
        let s = model
            .encoder
            .forward(&mut tape, &engine.params, class_segments.iter().map(|t| engine.tokenizer.bag(t)).collect())
            .map_err(fail("classify"))?;
        let (a, p) = classify(&mut tape, &engine.params, &model.xattn, s, e).map_err(fail("classify"))?;
        let pv = tape.value(p).clone();
        let av = tape.value(a).clone();
        let probs = list_ids
            .iter()
            .map(|d| Ok((d.clone(), pv.data()[model.column(d)?])))
            .collect::<Result<Vec<_>, crate::classifier::ClassifierError>>()
            .map_err(fail("classify"))?;
        paths = top_attended_path(sg, &av, cfg.path_beam).map_err(fail("classify"))?;
        rec.ok("classify", alloc::format!("{}x{} attention", av.rows(), av.cols()));
        attention = Some(av);
        probs
    };

    let refined: Option<RefinedDiagnosis> = if ab.no_ddx {
        rec.skip("refine", "no_ddx");
        None
    } else if ab.no_analytic {
        rec.ok("refine", alloc::format!("top {} of preliminary list", cfg.no_analytic_top));
        Some(RefinedDiagnosis {
            probabilities: Default::default(),
            selected: list_ids.iter().take(cfg.no_analytic_top).cloned().collect(),
            attention: None,
        })
    } else {
        let r = refine(&probabilities, cfg.tau).map_err(fail("refine"))?;
        rec.ok("refine", alloc::format!("{} selected", r.selected.len()));
        Some(r)
    };
    let diseases: Vec<String> = refined.as_ref().map(|r| r.selected.clone()).unwrap_or_default();

    let segment_text = st.segments.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" ");
    let prev_doctor = st.dialogue[..turn]
        .iter()
        .rev()
        .find(|u| u.speaker == Speaker::Doctor)
        .map_or("", |u| u.text.as_str());
    let history = alloc::format!("{prev_doctor} {patient_text}");
    let acts = engine
        .arch
        .acts
        .predict(&engine.params, &engine.tokenizer, &segment_text, history.trim())
        .map_err(fail("predict_acts"))?;
    rec.ok("predict_acts", acts.selected.join(","));

    let full_history = st.dialogue.iter().map(|u| u.text.as_str()).collect::<Vec<_>>().join(" ");
    let passages = select_passages(
        &diseases,
        &acts.selected,
        &engine.passages,
        &engine.knowledge.aspect_map,
        &full_history,
        &engine.tokenizer,
        cfg.passages,
    )
    .map_err(fail("select_passages"))?;
    rec.ok("select_passages", alloc::format!("{} passages", passages.len()));

    let mut plan = compose_plan(
        &diseases,
        &acts.selected,
        &passages,
        &engine.knowledge.aspect_map,
        engine.disease_names(),
    )
    .map_err(fail("compose_plan"))?;
    rec.ok("compose_plan", alloc::format!("{} clauses", plan.clauses.len()));

    let reply = render(&plan, &engine.knowledge.templates).map_err(fail("render"))?;
    rec.ok("render", alloc::format!("{} chars", reply.text.chars().count()));
    plan.rendered = reply.text.clone();
    plan.provenance = reply.provenance;

    st.dialogue.push(Utterance::doctor(reply.text.clone(), acts.selected.clone()));
    st.last_preliminary = (!ab.no_ddx).then(|| preliminary.clone());
    st.last_refined = refined.clone().map(|mut r| {
        r.attention = attention.clone();
        r
    });
    st.last_plan = Some(plan.clone());

    let subgraph = sg
        .map(|sg| {
            sg.entities
                .into_iter()
                .map(|e| TraceEntity {
                    id: e.id,
                    kind: e.kind,
                    name: e.name,
                })
                .collect()
        })
        .unwrap_or_default();
    debug_assert_eq!(rec.stages.len(), STAGES.len());
    Ok(TurnTrace {
        schema_version: TRACE_SCHEMA_VERSION,
        session_id: st.id.clone(),
        turn,
        stages: rec.stages,
        new_segments,
        query,
        preliminary,
        subgraph,
        attention,
        paths,
        probabilities,
        threshold: cfg.tau,
        refined,
        acts: Some(acts),
        passages,
        plan: Some(plan),
        reply: reply.text,
    })
}
