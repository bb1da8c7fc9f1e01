//! Synthetic corpora shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use fcm::{AnnotatedSentence, EmbeddingTable, EntityMention, RelationInstance, Token, UnkPolicy};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LABELS: [&str; 4] = ["R0", "R1", "R2", "R3"];
const TYPES: [&str; 4] = ["PER", "ORG", "LOC", "GPE"];
const DIM: usize = 16;
const WORDS_PER_CLUSTER: usize = 8;
const NAMES: usize = 40;

pub struct Synthetic {
    pub train: Vec<RelationInstance>,
    pub dev: Vec<RelationInstance>,
    pub embeddings: EmbeddingTable,
}

fn cluster_word(c: usize, w: usize) -> String {
    format!("c{c}w{w}")
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; good enough for test data.
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

fn embeddings(rng: &mut ChaCha8Rng) -> EmbeddingTable {
    let mut rows = Vec::new();
    for c in 0..LABELS.len() {
        let centroid: Vec<f64> = (0..DIM).map(|_| gaussian(rng) / (DIM as f64).sqrt() * 2.0).collect();
        for w in 0..WORDS_PER_CLUSTER {
            let v = centroid.iter().map(|x| x + 0.15 * gaussian(rng)).collect();
            rows.push((cluster_word(c, w), v));
        }
    }
    for n in 0..NAMES {
        rows.push((format!("name{n}"), (0..DIM).map(|_| gaussian(rng) / (DIM as f64).sqrt() * 2.0).collect()));
    }
    EmbeddingTable::from_rows(DIM, rows, UnkPolicy::MeanVector).unwrap()
}

fn token(form: String, head: Option<usize>) -> Token {
    Token {
        form,
        pos: "NN".into(),
        netag: "O".into(),
        head,
        deprel: "dep".into(),
    }
}

fn mention(id: &str, at: usize, etype: &str) -> EntityMention {
    EntityMention {
        id: id.into(),
        start: at,
        end: at + 1,
        head: at,
        etype: etype.into(),
    }
}

/// One sentence whose label is the cluster of the trigger on the path
/// between the two heads. Heads are label-independent names with random
/// types; distractor words from random clusters sit between the heads and
/// around them but off the path.
fn instance(rng: &mut ChaCha8Rng, id: usize) -> RelationInstance {
    let label = rng.gen_range(0..LABELS.len());
    let distractor = |rng: &mut ChaCha8Rng| cluster_word(rng.gen_range(0..LABELS.len()), rng.gen_range(0..WORDS_PER_CLUSTER));
    // Token layout: [pre] h1 [b1] trig [b2] h2 [post]; None marks a slot left out.
    let pre = rng.gen_bool(0.5).then(|| distractor(rng));
    let b1 = rng.gen_bool(0.7).then(|| distractor(rng));
    let b2 = rng.gen_bool(0.7).then(|| distractor(rng));
    let post = rng.gen_bool(0.5).then(|| distractor(rng));
    let h1 = format!("name{}", rng.gen_range(0..NAMES));
    let h2 = format!("name{}", rng.gen_range(0..NAMES));
    let trig = cluster_word(label, rng.gen_range(0..WORDS_PER_CLUSTER));

    #[derive(Clone, Copy, PartialEq)]
    enum Role {
        Pre,
        H1,
        B1,
        Trig,
        B2,
        H2,
        Post,
    }
    let mut slots: Vec<(Role, String)> = Vec::new();
    if let Some(w) = pre {
        slots.push((Role::Pre, w));
    }
    slots.push((Role::H1, h1));
    if let Some(w) = b1 {
        slots.push((Role::B1, w));
    }
    slots.push((Role::Trig, trig));
    if let Some(w) = b2 {
        slots.push((Role::B2, w));
    }
    slots.push((Role::H2, h2));
    if let Some(w) = post {
        slots.push((Role::Post, w));
    }
    let pos = |r: Role| slots.iter().position(|(x, _)| *x == r).unwrap();
    let (ph1, ptrig, ph2) = (pos(Role::H1), pos(Role::Trig), pos(Role::H2));
    let tokens = slots
        .iter()
        .map(|(role, form)| {
            let head = match role {
                Role::Trig => None,
                Role::H1 | Role::H2 => Some(ptrig),
                Role::Pre | Role::B1 => Some(ph1),
                Role::B2 | Role::Post => Some(ph2),
            };
            token(form.clone(), head)
        })
        .collect();
    let sentence = AnnotatedSentence::new(format!("syn{id}"), tokens).unwrap();
    RelationInstance {
        sentence: Arc::new(sentence),
        m1: mention("m1", ph1, TYPES.choose(rng).unwrap()),
        m2: mention("m2", ph2, TYPES.choose(rng).unwrap()),
        label: Some(LABELS[label].to_string()),
    }
}

/// `total` instances split 80/20 into train and dev.
pub fn on_path_corpus(seed: u64, total: usize) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let embeddings = embeddings(&mut rng);
    let mut all: Vec<RelationInstance> = (0..total).map(|i| instance(&mut rng, i)).collect();
    let dev = all.split_off(total * 4 / 5);
    Synthetic {
        train: all,
        dev,
        embeddings,
    }
}

pub fn accuracy(pred: &[String], gold: &[RelationInstance]) -> f64 {
    let hits = pred
        .iter()
        .zip(gold)
        .filter(|(p, g)| Some(p.as_str()) == g.label.as_deref())
        .count();
    hits as f64 / gold.len().max(1) as f64
}
