//! Command-line interface.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ddx_core::corpus::synth::{generate_synthetic_corpus, SynthSpec};
use ddx_core::corpus::{build_query, Split, Tokenizer, TokenizerConfig, TokenizerMode, Utterance};
use ddx_core::dog::{disease_paths, EntityKind};
use ddx_core::metrics::{build_report, DialogueEval, EntityLexicon, EvalInputs};
use ddx_core::pipeline::{evaluate, final_diagnoses, init_model, run_turn, train_jobs, Ablations, Engine, Jobs, PipelineConfig, TrainingReport};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, Thresholds};
use crate::data;
use crate::service::{self, AppState};
use crate::session_log::{self, SessionLog};

#[derive(Debug, Parser)]
#[command(name = "ddx", version, about = "Differential-diagnosis dialogue engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dialogue corpora.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// The diagnosis-oriented graph.
    #[command(subcommand)]
    Dog(DogCmd),
    /// Dense case and document retrieval.
    #[command(subcommand)]
    Retrieve(RetrieveCmd),
    /// The graph-enhanced disease classifier.
    #[command(subcommand)]
    Classify(ClassifyCmd),
    /// Dialogue-act prediction.
    #[command(subcommand)]
    Acts(ActsCmd),
    /// Train every component in sequence.
    Train(TrainArgs),
    /// Teacher-forced evaluation, or scoring of prediction files.
    Eval(EvalArgs),
    /// Answer one patient utterance within a logged session.
    Respond(RespondArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
    /// Terminal consultation.
    Chat(ChatArgs),
    /// Replay a session log and print its turn traces as JSON lines.
    Trace(TraceArgs),
}

#[derive(Debug, Args)]
pub struct DataArg {
    /// Data directory.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct EngineArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Tuned thresholds replacing those stored in the checkpoint.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    #[arg(long)]
    pub no_ddx: bool,
    #[arg(long)]
    pub no_analytic: bool,
    #[arg(long)]
    pub no_dog: bool,
}

#[derive(Debug, Args)]
pub struct TrainJobArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// `config.json`; defaults to the checkpoint's config or the built-in defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint to continue from; without it parameters are freshly initialized.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Training report destination.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// `thresholds.json` destination.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum CorpusCmd {
    /// Load and validate every file of a data directory.
    Validate(DataArg),
    /// Write a synthetic corpus.
    Synth {
        #[arg(long)]
        seed: u64,
        /// JSON synthetic-corpus spec; defaults apply when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum DogCmd {
    Validate(DataArg),
    /// Diagnostic paths through one disease.
    Path {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        disease: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum RetrieveCmd {
    Train(TrainJobArgs),
    /// Preliminary disease list for a patient description.
    List {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        query: String,
        #[arg(short, long)]
        k: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ClassifyCmd {
    Train(TrainJobArgs),
    /// Disease F1 at the final patient turn of each dialogue of a split.
    Eval {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
}

#[derive(Debug, Subcommand)]
pub enum ActsCmd {
    Train(TrainJobArgs),
    /// Tune act thresholds on the validation split.
    Tune(TrainJobArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub job: TrainJobArgs,
    /// Override every job seed and the initialization seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Valid,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TokenUnit {
    Word,
    Grapheme,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long)]
    pub no_ddx: bool,
    #[arg(long)]
    pub no_analytic: bool,
    #[arg(long)]
    pub no_dog: bool,
    /// Predictions as JSON lines of `{id, reply, diseases}`.
    #[arg(long, requires = "gold")]
    pub pred: Option<PathBuf>,
    /// Gold replies in the same format as `--pred`.
    #[arg(long, requires = "pred")]
    pub gold: Option<PathBuf>,
    /// Entity lexicon for file scoring; taken from `--data` when absent.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Token unit for BLEU and ROUGE in file scoring.
    #[arg(long, value_enum, default_value = "word")]
    pub tokens: TokenUnit,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RespondArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Session event log; created when missing.
    #[arg(long)]
    pub session: PathBuf,
    #[arg(long)]
    pub utterance: String,
    /// Print the turn trace instead of the reply.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Directory of session event logs; sessions found there are restored.
    #[arg(long)]
    pub log_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Session event log to write (or resume).
    #[arg(long)]
    pub session: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Session id, looked up in `--log-dir`.
    #[arg(long)]
    pub session: String,
    #[arg(long)]
    pub log_dir: PathBuf,
}

/// One line of a prediction or gold file for `eval --pred --gold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredReply {
    pub id: String,
    pub reply: String,
    #[serde(default)]
    pub diseases: Vec<String>,
}

fn emit<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

impl EngineArgs {
    fn ablations(&self, base: Ablations) -> Ablations {
        Ablations {
            no_ddx: base.no_ddx || self.no_ddx,
            no_analytic: base.no_analytic || self.no_analytic,
            no_dog: base.no_dog || self.no_dog,
        }
    }

    pub fn load(&self) -> Result<Engine> {
        load_engine(&self.data, &self.checkpoint, self.thresholds.as_deref(), |a| self.ablations(a))
    }
}

fn load_engine(data_dir: &Path, ckpt: &Path, thresholds: Option<&Path>, ablate: impl Fn(Ablations) -> Ablations) -> Result<Engine> {
    let knowledge = data::load_knowledge(data_dir)?;
    let (mut model, config) = checkpoint::load(ckpt)?;
    if let Some(path) = thresholds {
        let t: Thresholds = data::read_json(path)?;
        model.act_thresholds = t.in_catalogue_order(&knowledge.acts).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    }
    let ablations = ablate(config.ablations);
    Ok(Engine::new(config.with_ablations(ablations), knowledge, model)?)
}

pub fn run(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Corpus(CorpusCmd::Validate(a)) => {
            let knowledge = data::load_knowledge(&a.data)?;
            let dialogues = data::load_corpus_dialogues(&a.data, &knowledge)?;
            let count = |s| dialogues.split(s).count();
            emit(
                out,
                &serde_json::json!({
                    "diseases": knowledge.documents.len(),
                    "cases": knowledge.cases.len(),
                    "entities": knowledge.graph.len(),
                    "edges": knowledge.graph.edge_count(),
                    "acts": knowledge.acts.len(),
                    "dialogues": {"train": count(Split::Train), "valid": count(Split::Valid), "test": count(Split::Test)},
                }),
            )
        }
        Command::Corpus(CorpusCmd::Synth { seed, spec, out: dir }) => {
            let spec: SynthSpec = match spec {
                Some(p) => data::read_json(&p)?,
                None => SynthSpec::default(),
            };
            let corpus = generate_synthetic_corpus(seed, &spec)?;
            data::write_synthetic(&dir, &corpus)?;
            writeln!(out, "wrote {} dialogues and {} diseases to {}", corpus.dialogues.len(), corpus.documents.len(), dir.display())?;
            Ok(())
        }
        Command::Dog(DogCmd::Validate(a)) => {
            let g = data::load_graph(&a.data)?;
            let kinds = [EntityKind::System, EntityKind::Organ, EntityKind::Disease, EntityKind::Symptom];
            let counts: serde_json::Map<String, serde_json::Value> = kinds
                .iter()
                .map(|k| (k.as_str().to_string(), g.entities().filter(|e| e.kind == *k).count().into()))
                .collect();
            emit(out, &serde_json::json!({"entities": counts, "edges": g.edge_count()}))
        }
        Command::Dog(DogCmd::Path { data: dir, disease }) => {
            let g = data::load_graph(&dir)?;
            match g.entity(&disease) {
                Some(e) if e.kind == EntityKind::Disease => {}
                _ => bail!("unknown disease `{disease}`"),
            }
            for p in disease_paths(&g, &disease)? {
                writeln!(out, "{}", p.render())?;
            }
            Ok(())
        }
        Command::Retrieve(RetrieveCmd::Train(a)) => train_command(a, Jobs { retrieval: true, ..Jobs::NONE }, None, out),
        Command::Classify(ClassifyCmd::Train(a)) => train_command(a, Jobs { classifier: true, ..Jobs::NONE }, None, out),
        Command::Acts(ActsCmd::Train(a)) => train_command(a, Jobs { acts: true, ..Jobs::NONE }, None, out),
        Command::Acts(ActsCmd::Tune(a)) => train_command(a, Jobs { tune: true, ..Jobs::NONE }, None, out),
        Command::Train(a) => train_command(a.job, Jobs::ALL, a.seed, out),
        Command::Retrieve(RetrieveCmd::List { engine, query, k }) => {
            let e = engine.load()?;
            let segments = Utterance::patient(query.clone()).soap_segments(&e.knowledge.lexicon, 0);
            let q = build_query(&segments, [query.as_str()]);
            let list = e.retriever.preliminary_list(&e.params, &e.tokenizer, &q.text, k.unwrap_or(e.config.k))?;
            emit(out, &serde_json::json!({"query": q, "preliminary": list}))
        }
        Command::Classify(ClassifyCmd::Eval { engine, split }) => {
            let e = engine.load()?;
            let knowledge = e.knowledge.clone();
            let dialogues = data::load_corpus_dialogues(&engine.data, &knowledge)?;
            let chosen: Vec<_> = dialogues.split(split.into()).collect();
            let evals = final_diagnoses(&e, &chosen, &e.config)?;
            let pred: Vec<_> = evals.iter().map(|d| d.predicted.clone()).collect();
            let gold: Vec<_> = evals.iter().map(|d| d.gold.clone()).collect();
            let d_f1 = ddx_core::metrics::disease_f1(&pred, &gold)?;
            emit(out, &serde_json::json!({"split": format!("{split:?}").to_lowercase(), "dialogues": evals.len(), "d_f1": d_f1, "per_dialogue": evals}))
        }
        Command::Eval(a) => eval_command(a, out),
        Command::Respond(a) => {
            let e = a.engine.load()?;
            let (mut state, mut log) = if a.session.exists() {
                let r = session_log::replay(&e, &a.session)?;
                (r.state, SessionLog::reopen(&a.session, r.records)?)
            } else {
                let id = a
                    .session
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "session".into());
                let state = e.session(id);
                let log = SessionLog::create(&a.session, &state)?;
                (state, log)
            };
            let (reply, trace) = run_turn(&e, &mut state, &a.utterance)?;
            log.turn(&Utterance::patient(a.utterance.clone()), &trace)?;
            if a.trace {
                emit(out, &trace)
            } else {
                writeln!(out, "{reply}")?;
                Ok(())
            }
        }
        Command::Serve(a) => {
            let e = a.engine.load()?;
            let app = Arc::new(AppState::new(e, a.log_dir.clone()));
            let restored = app.restore()?;
            if restored > 0 {
                log::info!("restored {restored} sessions");
            }
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(service::serve(a.addr, app))?;
            Ok(())
        }
        Command::Chat(a) => chat(a, input, out),
        Command::Trace(a) => {
            let e = a.engine.load()?;
            let r = session_log::replay(&e, &session_log::log_path(&a.log_dir, &a.session))?;
            for t in &r.traces {
                writeln!(out, "{}", serde_json::to_string(t)?)?;
            }
            Ok(())
        }
    }
}

fn train_command(a: TrainJobArgs, jobs: Jobs, seed: Option<u64>, out: &mut dyn Write) -> Result<()> {
    let knowledge = data::load_knowledge(&a.data)?;
    let dialogues = data::load_corpus_dialogues(&a.data, &knowledge)?;
    let (start, ckpt_config) = match &a.init {
        Some(p) => {
            let (m, c) = checkpoint::load(p)?;
            (Some(m), Some(c))
        }
        None => (None, None),
    };
    let mut config = match (&a.config, ckpt_config) {
        (Some(p), _) => data::load_config(Some(p))?,
        (None, Some(c)) => c,
        (None, None) => PipelineConfig::default(),
    };
    if let Some(s) = seed {
        config = config.with_seed(s);
    }
    let start = match start {
        Some(m) => m,
        None => init_model(&config, &knowledge)?,
    };
    let (model, report) = train_jobs(&config, &knowledge, &dialogues, start, jobs).map_err(|f| {
        if let Err(e) = checkpoint::save(&a.out.with_extension("last_good.json"), &f.last_good, &config) {
            log::error!("could not save the last good checkpoint: {e}");
        }
        anyhow!("{f}")
    })?;
    checkpoint::save(&a.out, &model, &config)?;
    if let Some(p) = &a.report {
        data::write_json(p, &report)?;
    }
    if let Some(p) = &a.thresholds {
        data::write_json(p, &Thresholds::from_model(&model, &knowledge.acts, report.absent_acts.clone()))?;
    }
    summarize(out, &report, &a.out)
}

fn summarize(out: &mut dyn Write, r: &TrainingReport, ckpt: &Path) -> Result<()> {
    let last = |v: &[f64]| v.last().map_or("-".to_string(), |x| format!("{x:.4}"));
    writeln!(out, "checkpoint: {}", ckpt.display())?;
    writeln!(out, "retrieval loss (case/doc): {} / {}", last(&r.retrieval_case_loss), last(&r.retrieval_doc_loss))?;
    writeln!(out, "classifier loss: {} (graph-free head {})", last(&r.classifier_loss), last(&r.no_dog_loss))?;
    writeln!(out, "act loss: {}", last(&r.acts_loss))?;
    if let Some(f) = r.valid_d_f1 {
        writeln!(out, "validation D-F1: {f:.4}")?;
    }
    if let Some(f) = r.valid_act_micro_f1 {
        writeln!(out, "validation act micro-F1: {f:.4}")?;
    }
    Ok(())
}

fn eval_command(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    if let (Some(pred), Some(gold)) = (&a.pred, &a.gold) {
        let lexicon: EntityLexicon = match (&a.lexicon, &a.data) {
            (Some(p), _) => data::read_json(p)?,
            (None, Some(d)) => data::load_knowledge(d)?.entity_lexicon,
            (None, None) => bail!("file scoring needs --lexicon or --data"),
        };
        let report = score_files(pred, gold, &lexicon, a.tokens)?;
        if let Some(p) = &a.report {
            data::write_json(p, &report)?;
        }
        return emit(out, &report);
    }
    let (Some(dir), Some(ckpt)) = (&a.data, &a.checkpoint) else {
        bail!("eval needs --data and --checkpoint, or --pred and --gold");
    };
    let e = load_engine(dir, ckpt, a.thresholds.as_deref(), |b| Ablations {
        no_ddx: b.no_ddx || a.no_ddx,
        no_analytic: b.no_analytic || a.no_analytic,
        no_dog: b.no_dog || a.no_dog,
    })?;
    let dialogues = data::load_corpus_dialogues(dir, &e.knowledge)?;
    let chosen: Vec<_> = dialogues.split(a.split.into()).collect();
    let outcome = evaluate(&e, &chosen, &e.config)?;
    if let Some(p) = &a.report {
        data::write_json(p, &outcome)?;
    }
    emit(out, &outcome)
}

fn read_replies(path: &Path) -> Result<Vec<ScoredReply>> {
    let text = data::read(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

/// Scores prediction and gold files line by line; ids must align.
pub fn score_files(pred: &Path, gold: &Path, lexicon: &EntityLexicon, unit: TokenUnit) -> Result<ddx_core::metrics::EvalReport> {
    let p = read_replies(pred)?;
    let g = read_replies(gold)?;
    if p.len() != g.len() {
        bail!("{} has {} lines, {} has {}", pred.display(), p.len(), gold.display(), g.len());
    }
    if let Some((a, b)) = p.iter().zip(&g).find(|(a, b)| a.id != b.id) {
        bail!("id mismatch: `{}` vs `{}`", a.id, b.id);
    }
    let tok = Tokenizer::new(TokenizerConfig {
        mode: TokenizerMode::Grapheme,
        ..TokenizerConfig::default()
    })?;
    let split = |s: &str| match unit {
        TokenUnit::Word => ddx_core::metrics::words(s),
        TokenUnit::Grapheme => tok.tokens(s),
    };
    let cand: Vec<Vec<String>> = p.iter().map(|r| split(&r.reply)).collect();
    let refs: Vec<Vec<String>> = g.iter().map(|r| split(&r.reply)).collect();
    let cand_texts: Vec<String> = p.iter().map(|r| r.reply.clone()).collect();
    let ref_texts: Vec<String> = g.iter().map(|r| r.reply.clone()).collect();
    let per_dialogue = p
        .iter()
        .zip(&g)
        .map(|(a, b)| DialogueEval {
            id: a.id.clone(),
            predicted: a.diseases.iter().cloned().collect::<BTreeSet<_>>(),
            gold: b.diseases.iter().cloned().collect(),
            turns: 1,
        })
        .collect();
    Ok(build_report(EvalInputs {
        candidates: &cand,
        references: &refs,
        candidate_texts: &cand_texts,
        reference_texts: &ref_texts,
        lexicon,
        per_dialogue,
    })?)
}

fn chat(a: ChatArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<()> {
    let e = a.engine.load()?;
    let (mut state, mut log) = match &a.session {
        Some(p) if p.exists() => {
            let r = session_log::replay(&e, p)?;
            (r.state, Some(SessionLog::reopen(p, r.records)?))
        }
        Some(p) => {
            let state = e.session("chat");
            let log = SessionLog::create(p, &state)?;
            (state, Some(log))
        }
        None => (e.session("chat"), None),
    };
    writeln!(out, "Describe your symptoms. Commands: :state, :quit")?;
    let mut line = String::new();
    loop {
        write!(out, "patient> ")?;
        out.flush()?;
        line.clear();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        let text = line.trim();
        match text {
            "" => continue,
            ":quit" | ":q" => break,
            ":state" => {
                emit(out, &state)?;
                continue;
            }
            _ => {}
        }
        match run_turn(&e, &mut state, text) {
            Ok((reply, trace)) => {
                if let Some(log) = &mut log {
                    log.turn(&Utterance::patient(text), &trace)?;
                }
                writeln!(out, "doctor> {reply}")?;
                if let Some(r) = &trace.refined {
                    let names = e.disease_names();
                    let parts: Vec<String> = r
                        .selected
                        .iter()
                        .map(|d| format!("{} ({:.2})", names.get(d).map_or(d.as_str(), String::as_str), r.probabilities.get(d).copied().unwrap_or(0.0)))
                        .collect();
                    writeln!(out, "  differential: {}", parts.join(", "))?;
                }
                if let Some(p) = trace.paths.first() {
                    writeln!(out, "  path: {}", p.render())?;
                }
            }
            Err(err) => writeln!(out, "  error: {err}")?,
        }
    }
    Ok(())
}
