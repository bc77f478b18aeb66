//! Seeded synthetic consultations over a generated disease world.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    ActCatalogue, CorpusError, Dialogue, DialogueSet, DiseaseDocument, LexiconEntry, PatientCase, SoapLexicon,
    SoapSection, Speaker, Split, Utterance,
};
use crate::dog::{DogEntity, DogGraph, EntityKind};
use crate::generation::{compose_plan, render, ActAspectMap, KnowledgePassage, TemplatePack};
use crate::metrics::EntityLexicon;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub systems: usize,
    pub organs: usize,
    pub diseases: usize,
    pub symptoms: usize,
    pub min_symptoms_per_disease: usize,
    pub max_symptoms_per_disease: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    /// Probability that a dialogue has a second gold disease.
    pub multi_disease_rate: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            systems: 3,
            organs: 6,
            diseases: 12,
            symptoms: 30,
            min_symptoms_per_disease: 3,
            max_symptoms_per_disease: 6,
            train: 300,
            valid: 50,
            test: 50,
            multi_disease_rate: 0.25,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InfeasibleSpec(m));
        if self.systems == 0 || self.organs == 0 || self.diseases == 0 || self.symptoms == 0 {
            return bad("all entity counts must be at least 1".into());
        }
        if self.train + self.valid + self.test == 0 {
            return bad("no dialogues requested".into());
        }
        if self.organs < self.systems {
            return bad(alloc::format!("{} organs cannot cover {} systems", self.organs, self.systems));
        }
        if self.organs > self.systems * 4 {
            return bad(alloc::format!(
                "{} organs exceed the {} system slots (4 per system)",
                self.organs,
                self.systems * 4
            ));
        }
        let (lo, hi) = (self.min_symptoms_per_disease, self.max_symptoms_per_disease);
        if lo == 0 || lo > hi {
            return bad(alloc::format!("invalid symptoms-per-disease range {lo}..={hi}"));
        }
        if self.symptoms < self.diseases + hi - 1 {
            return bad(alloc::format!(
                "{} symptoms cannot give {} diseases a unique symptom plus {} shared ones",
                self.symptoms,
                self.diseases,
                hi - 1
            ));
        }
        if !(0.0..=1.0).contains(&self.multi_disease_rate) || (self.diseases < 2 && self.multi_disease_rate > 0.0) {
            return bad("multi-disease rate needs a value in [0, 1] and at least 2 diseases".into());
        }
        Ok(())
    }
}

/// Everything the engine consumes, generated from one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    pub dialogues: DialogueSet,
    pub graph: DogGraph,
    pub documents: Vec<DiseaseDocument>,
    pub cases: Vec<PatientCase>,
    pub lexicon: SoapLexicon,
    pub entity_lexicon: EntityLexicon,
    pub acts: ActCatalogue,
    /// Symptom ids of each disease, signature symptom first.
    pub disease_symptoms: BTreeMap<String, Vec<String>>,
}

const ONSET: [&str; 4] = ["two", "three", "five", "seven"];

/// Patient cue kinds and the doctor acts each one elicits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Cue {
    Opening,
    Detail,
    Onset,
    AskDiagnosis,
    AskExam,
    AskMedicine,
    Closing,
}

impl Cue {
    fn acts(self) -> &'static [&'static str] {
        match self {
            Cue::Opening => &["greeting", "inquire_present_illness"],
            Cue::Detail => &["inquire_onset"],
            Cue::Onset => &["inquire_medical_history"],
            Cue::AskDiagnosis => &["state_diagnosis", "reassure"],
            Cue::AskExam => &["recommend_examination"],
            Cue::AskMedicine => &["recommend_medicine", "lifestyle_advice"],
            Cue::Closing => &["farewell"],
        }
    }
}

struct Names {
    rng: ChaCha8Rng,
    used: BTreeSet<String>,
}

impl Names {
    fn word(&mut self, syllables: usize, suffix: &str) -> String {
        const C: &[u8] = b"bdfgklmnprstvz";
        const V: &[u8] = b"aeiou";
        loop {
            let mut w = String::new();
            for _ in 0..syllables {
                w.push(C[self.rng.gen_range(0..C.len())] as char);
                w.push(V[self.rng.gen_range(0..V.len())] as char);
            }
            w.push_str(suffix);
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

fn join_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => alloc::format!("{} and {}", init.join(", "), last),
    }
}

struct World {
    systems: Vec<(String, String)>,
    organs: Vec<(String, String, usize)>,
    diseases: Vec<DiseaseInfo>,
    symptoms: Vec<(String, String)>,
}

struct DiseaseInfo {
    id: String,
    name: String,
    organ: usize,
    symptoms: Vec<usize>,
    drug: String,
    exam: String,
    cause: String,
}

fn build_world(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> World {
    let mut names = Names {
        rng: ChaCha8Rng::seed_from_u64(rng.gen()),
        used: BTreeSet::new(),
    };
    let systems: Vec<(String, String)> = (0..spec.systems)
        .map(|i| (alloc::format!("sys-{:02}", i + 1), alloc::format!("{} system", names.word(2, "ic"))))
        .collect();
    let organs: Vec<(String, String, usize)> = (0..spec.organs)
        .map(|i| (alloc::format!("org-{:02}", i + 1), names.word(2, "um"), i % spec.systems))
        .collect();
    let symptoms: Vec<(String, String)> = (0..spec.symptoms)
        .map(|i| (alloc::format!("sym-{:02}", i + 1), names.word(3, "")))
        .collect();
    let shared: Vec<usize> = (spec.diseases..spec.symptoms).collect();
    let mut diseases = Vec::with_capacity(spec.diseases);
    for i in 0..spec.diseases {
        let total = rng.gen_range(spec.min_symptoms_per_disease..=spec.max_symptoms_per_disease);
        let mut syms = alloc::vec![i];
        syms.extend(shared.choose_multiple(rng, total - 1).copied());
        let organ = if i < spec.organs { i } else { rng.gen_range(0..spec.organs) };
        diseases.push(DiseaseInfo {
            id: alloc::format!("dis-{:02}", i + 1),
            name: names.word(2, "itis"),
            organ,
            symptoms: syms,
            drug: names.word(2, "ol"),
            exam: names.word(2, "graphy"),
            cause: names.word(2, "ine"),
        });
    }
    World {
        systems,
        organs,
        diseases,
        symptoms,
    }
}

impl World {
    fn graph(&self) -> DogGraph {
        let mut entities = Vec::new();
        let mut edges = Vec::new();
        let ent = |id: &str, kind, name: &str| DogEntity {
            id: id.into(),
            kind,
            name: name.into(),
        };
        for (id, name) in &self.systems {
            entities.push(ent(id, EntityKind::System, name));
        }
        for (id, name, sys) in &self.organs {
            entities.push(ent(id, EntityKind::Organ, name));
            edges.push((self.systems[*sys].0.clone(), id.clone()));
        }
        for d in &self.diseases {
            entities.push(ent(&d.id, EntityKind::Disease, &d.name));
            edges.push((self.organs[d.organ].0.clone(), d.id.clone()));
            for &s in &d.symptoms {
                edges.push((d.id.clone(), self.symptoms[s].0.clone()));
            }
        }
        for (id, name) in &self.symptoms {
            entities.push(ent(id, EntityKind::Symptom, name));
        }
        DogGraph::from_parts(entities, &edges).expect("synthetic graph is tetrapartite")
    }

    fn document(&self, d: &DiseaseInfo) -> DiseaseDocument {
        let organ = &self.organs[d.organ];
        let system = &self.systems[organ.2].1;
        let syms: Vec<String> = d.symptoms.iter().map(|&s| self.symptoms[s].1.clone()).collect();
        let mut sorted = syms.clone();
        sorted.sort();
        DiseaseDocument {
            id: d.id.clone(),
            name: d.name.clone(),
            overview: alloc::format!("{} is a disorder of the {} in the {}.", d.name, organ.1, system),
            etiology: alloc::format!("It is usually caused by {} acting on the {}.", d.cause, organ.1),
            symptoms: syms,
            manifestations: alloc::format!("Typical manifestations include {}.", join_list(&sorted)),
            examinations: alloc::format!("a {} of the {} is recommended.", d.exam, organ.1),
            treatment: alloc::format!("take {} twice a day.", d.drug),
        }
    }

    fn lexicon(&self) -> SoapLexicon {
        let e = |p: &str, s| LexiconEntry {
            pattern: p.to_string(),
            section: s,
        };
        let mut entries: Vec<LexiconEntry> = self.symptoms.iter().map(|(_, n)| e(n, SoapSection::S)).collect();
        entries.push(e("temperature", SoapSection::O));
        for d in &self.diseases {
            entries.push(e(&d.name, SoapSection::A));
            entries.push(e(&d.drug, SoapSection::P));
            entries.push(e(&d.exam, SoapSection::P));
        }
        SoapLexicon::new(entries)
    }

    fn entity_lexicon(&self) -> EntityLexicon {
        let mut map = BTreeMap::new();
        for (id, n) in &self.symptoms {
            map.insert(n.clone(), id.clone());
        }
        for d in &self.diseases {
            map.insert(d.name.clone(), d.id.clone());
            map.insert(d.drug.clone(), alloc::format!("{}#drug", d.id));
            map.insert(d.exam.clone(), alloc::format!("{}#exam", d.id));
        }
        EntityLexicon(map)
    }
}

struct Renderer<'a> {
    docs: BTreeMap<String, &'a DiseaseDocument>,
    names: BTreeMap<String, String>,
    map: ActAspectMap,
    pack: TemplatePack,
}

impl Renderer<'_> {
    /// Gold reply: each medical act quotes its aspect passage of the
    /// primary disease.
    fn reply(&self, acts: &[String], gold: &[String]) -> String {
        let primary = &gold[0];
        let doc = self.docs[primary];
        let passages: Vec<KnowledgePassage> = crate::generation::passages_from_documents(core::slice::from_ref(doc));
        let plan = compose_plan(core::slice::from_ref(primary), acts, &passages, &self.map, &self.names)
            .expect("acts are non-empty and mapped");
        render(&plan, &self.pack).expect("default pack covers the catalogue").text
    }
}

/// Builds the synthetic world and its dialogues. Identical seeds give
/// identical corpora.
pub fn generate_synthetic_corpus(seed: u64, spec: &SynthSpec) -> Result<SyntheticCorpus, CorpusError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let world = build_world(spec, &mut rng);
    let graph = world.graph();
    let documents: Vec<DiseaseDocument> = world.diseases.iter().map(|d| world.document(d)).collect();
    let lexicon = world.lexicon();
    let renderer = Renderer {
        docs: documents.iter().map(|d| (d.id.clone(), d)).collect(),
        names: documents.iter().map(|d| (d.id.clone(), d.name.clone())).collect(),
        map: ActAspectMap::default(),
        pack: TemplatePack::default(),
    };

    let mut dialogues = Vec::new();
    let splits = [(Split::Train, spec.train), (Split::Valid, spec.valid), (Split::Test, spec.test)];
    for (split, count) in splits {
        for _ in 0..count {
            let id = alloc::format!("dlg-{:04}", dialogues.len() + 1);
            dialogues.push(synth_dialogue(&world, &renderer, &mut rng, spec, id, split));
        }
    }

    let cases = dialogues
        .iter()
        .filter(|d| d.split == Split::Train)
        .map(|d| PatientCase {
            id: alloc::format!("case-{}", d.id),
            diseases: d.gold_diseases.clone(),
            soap: d
                .turns
                .iter()
                .enumerate()
                .flat_map(|(i, u)| u.soap_segments(&lexicon, i))
                .collect(),
            source_dialogue: Some(d.id.clone()),
        })
        .collect();

    Ok(SyntheticCorpus {
        dialogues: DialogueSet { dialogues },
        graph,
        documents,
        cases,
        entity_lexicon: world.entity_lexicon(),
        lexicon,
        acts: ActCatalogue::default(),
        disease_symptoms: world
            .diseases
            .iter()
            .map(|d| (d.id.clone(), d.symptoms.iter().map(|&s| world.symptoms[s].0.clone()).collect()))
            .collect(),
    })
}

fn synth_dialogue(world: &World, renderer: &Renderer<'_>, rng: &mut ChaCha8Rng, spec: &SynthSpec, id: String, split: Split) -> Dialogue {
    let n = world.diseases.len();
    let first = rng.gen_range(0..n);
    let mut gold = alloc::vec![first];
    if rng.gen_bool(spec.multi_disease_rate) {
        let mut second = rng.gen_range(0..n - 1);
        if second >= first {
            second += 1;
        }
        gold.push(second);
    }

    // Every gold disease contributes its signature plus a random subset of
    // its other symptoms.
    let mut mentioned: Vec<usize> = Vec::new();
    for &g in &gold {
        let syms = &world.diseases[g].symptoms;
        let extra = rng.gen_range(0..syms.len());
        let mut picked: Vec<usize> = syms[1..].choose_multiple(rng, extra).copied().collect();
        picked.push(syms[0]);
        for s in picked {
            if !mentioned.contains(&s) {
                mentioned.push(s);
            }
        }
    }
    mentioned.shuffle(rng);

    let mut cues = alloc::vec![Cue::Opening];
    let details = rng.gen_range(0..=2usize).min(mentioned.len().saturating_sub(1));
    for _ in 0..details {
        cues.push(if rng.gen_bool(0.5) { Cue::Detail } else { Cue::Onset });
    }
    let mut questions = alloc::vec![Cue::AskDiagnosis, Cue::AskExam, Cue::AskMedicine];
    questions.shuffle(rng);
    let asked = rng.gen_range(1..=2);
    cues.extend(questions.into_iter().take(asked));
    if rng.gen_bool(0.5) {
        cues.push(Cue::Closing);
    }

    // Split mentions across the opening and detail turns.
    let symptom_turns = 1 + details;
    let mut chunks: Vec<Vec<String>> = alloc::vec![Vec::new(); symptom_turns];
    for (i, &s) in mentioned.iter().enumerate() {
        let slot = if i < 2 { 0 } else { 1 + (i - 2) % symptom_turns.max(2).saturating_sub(1) };
        chunks[slot.min(symptom_turns - 1)].push(world.symptoms[s].1.clone());
    }

    let gold_ids: Vec<String> = gold.iter().map(|&g| world.diseases[g].id.clone()).collect();
    let mut turns = Vec::new();
    for (t, cue) in cues.iter().enumerate() {
        let symptoms = chunks.get(t).map(|c| join_list(c)).unwrap_or_default();
        let text = match cue {
            Cue::Opening => alloc::format!("hello doctor, i have {symptoms}."),
            Cue::Detail => {
                let temp = if rng.gen_bool(0.3) {
                    alloc::format!(", my temperature is 3{}.{}", rng.gen_range(7..=9), rng.gen_range(0..10))
                } else {
                    String::new()
                };
                alloc::format!("yes, i also have {symptoms}{temp}.")
            }
            Cue::Onset => alloc::format!(
                "it started {} days ago, and i also have {symptoms}.",
                ONSET[rng.gen_range(0..ONSET.len())]
            ),
            Cue::AskDiagnosis => "what is wrong with me?".to_string(),
            Cue::AskExam => "do i need an examination?".to_string(),
            Cue::AskMedicine => "what medicine should i take?".to_string(),
            Cue::Closing => "thank you doctor, bye.".to_string(),
        };
        turns.push(Utterance::patient(text));
        let acts: Vec<String> = cue.acts().iter().map(|a| a.to_string()).collect();
        let reply = renderer.reply(&acts, &gold_ids);
        turns.push(Utterance::doctor(reply, acts));
    }
    debug_assert!(turns.iter().step_by(2).all(|u| u.speaker == Speaker::Patient));
    Dialogue {
        id,
        split,
        gold_diseases: gold_ids,
        turns,
    }
}

/// Minimum-cardinality sets of diseases whose symptoms cover `observed`,
/// found by exhaustive search (smallest first, lexicographic within a
/// size). Intended for small worlds.
pub fn minimal_disease_covers(disease_symptoms: &BTreeMap<String, Vec<String>>, observed: &BTreeSet<String>) -> Vec<BTreeSet<String>> {
    let ids: Vec<&String> = disease_symptoms.keys().collect();
    let n = ids.len();
    assert!(n < 24, "exhaustive cover search limited to small worlds");
    let mut best: Vec<BTreeSet<String>> = Vec::new();
    let mut best_size = usize::MAX;
    for mask in 1u32..(1u32 << n) {
        let size = mask.count_ones() as usize;
        if size > best_size {
            continue;
        }
        let mut covered: BTreeSet<&String> = BTreeSet::new();
        for (i, id) in ids.iter().enumerate() {
            if mask & (1 << i) != 0 {
                covered.extend(disease_symptoms[*id].iter());
            }
        }
        if observed.iter().all(|s| covered.contains(s)) {
            let set: BTreeSet<String> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ids[i].clone()).collect();
            if size < best_size {
                best_size = size;
                best.clear();
            }
            best.push(set);
        }
    }
    best
}
