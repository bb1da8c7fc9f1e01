//! Annotated sentences, entity mentions, relation instances and label sets.
//!
//! Files use 1-based token indices (CoNLL style); everything in memory is
//! 0-based. Mention spans are half-open in both.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON, line {line}: {message}")]
    Json { line: usize, message: String },
    #[error("unknown schema version {found}, line {line} (supported: {SCHEMA_VERSION})")]
    Schema { line: usize, found: u32 },
    #[error("{message}, line {line} ({field})")]
    Invalid {
        line: usize,
        field: String,
        message: String,
    },
    #[error("sentence {sentence}: relation references unknown mention {mention:?}")]
    MissingMention { sentence: String, mention: String },
    #[error("sentence {sentence}: mentions {m1:?} and {m2:?} share head token {head}")]
    SharedHead {
        sentence: String,
        m1: String,
        m2: String,
        head: usize,
    },
    #[error("all-pairs instance generation needs a NIL label")]
    MissingNil,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub form: String,
    pub pos: String,
    /// Named-entity tag, WordNet supersense or word-cluster id; may be empty.
    pub netag: String,
    /// 0-based index of the syntactic head; `None` for the root.
    pub head: Option<usize>,
    pub deprel: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedSentence {
    pub id: String,
    pub tokens: Vec<Token>,
    depth: Vec<usize>,
}

/// Why a token list is not a dependency tree. Token indices are 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeError {
    Empty,
    HeadOutOfRange { token: usize, head: usize },
    SelfLoop { token: usize },
    RootCount(usize),
    Cycle { token: usize },
}

impl std::fmt::Display for TreeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TreeError::Empty => write!(f, "sentence has no tokens"),
            TreeError::HeadOutOfRange { head, .. } => write!(f, "dep_head out of range ({head})"),
            TreeError::SelfLoop { .. } => write!(f, "dep_head points at its own token"),
            TreeError::RootCount(n) => write!(f, "expected exactly one root token, found {n}"),
            TreeError::Cycle { .. } => write!(f, "dependency heads form a cycle"),
        }
    }
}

impl AnnotatedSentence {
    /// Validates the tree property and precomputes depths.
    pub fn new(id: impl Into<String>, tokens: Vec<Token>) -> Result<Self, TreeError> {
        let n = tokens.len();
        if n == 0 {
            return Err(TreeError::Empty);
        }
        for (i, t) in tokens.iter().enumerate() {
            match t.head {
                Some(h) if h >= n => return Err(TreeError::HeadOutOfRange { token: i, head: h + 1 }),
                Some(h) if h == i => return Err(TreeError::SelfLoop { token: i }),
                _ => {}
            }
        }
        let roots = tokens.iter().filter(|t| t.head.is_none()).count();
        if roots != 1 {
            return Err(TreeError::RootCount(roots));
        }
        const UNSET: usize = usize::MAX;
        let mut depth = vec![UNSET; n];
        for start in 0..n {
            let mut chain = Vec::new();
            let mut cur = start;
            let base = loop {
                if depth[cur] != UNSET {
                    break depth[cur];
                }
                if chain.len() > n {
                    return Err(TreeError::Cycle { token: start });
                }
                chain.push(cur);
                match tokens[cur].head {
                    Some(h) => cur = h,
                    None => {
                        let root = chain.pop().expect("just pushed");
                        depth[root] = 0;
                        break 0;
                    }
                }
            };
            for (k, &node) in chain.iter().rev().enumerate() {
                depth[node] = base + k + 1;
            }
        }
        Ok(AnnotatedSentence {
            id: id.into(),
            tokens,
            depth,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn depth(&self, i: usize) -> usize {
        self.depth[i]
    }

    /// Shortest path between tokens `i` and `j` in the undirected tree,
    /// inclusive of both endpoints, walking up from each side to their
    /// lowest common ancestor.
    pub fn dependency_path(&self, i: usize, j: usize) -> Vec<usize> {
        let (mut a, mut b) = (i, j);
        let mut up = vec![a];
        let mut down = vec![b];
        while self.depth[a] > self.depth[b] {
            a = self.tokens[a].head.expect("non-root has a head");
            up.push(a);
        }
        while self.depth[b] > self.depth[a] {
            b = self.tokens[b].head.expect("non-root has a head");
            down.push(b);
        }
        while a != b {
            a = self.tokens[a].head.expect("distinct nodes at equal depth are not root");
            b = self.tokens[b].head.expect("distinct nodes at equal depth are not root");
            up.push(a);
            down.push(b);
        }
        down.pop();
        up.extend(down.into_iter().rev());
        up
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityMention {
    pub id: String,
    pub start: usize,
    pub end: usize,
    pub head: usize,
    /// Entity type; may be a placeholder when types are unknown.
    pub etype: String,
}

#[derive(Debug, Clone)]
pub struct RelationInstance {
    pub sentence: Arc<AnnotatedSentence>,
    pub m1: EntityMention,
    pub m2: EntityMention,
    pub label: Option<String>,
}

impl RelationInstance {
    /// Instance identity used by prediction and evaluation files.
    pub fn key(&self) -> InstanceKey {
        InstanceKey {
            sentence: self.sentence.id.clone(),
            m1: self.m1.id.clone(),
            m2: self.m2.id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InstanceKey {
    pub sentence: String,
    pub m1: String,
    pub m2: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub m1: String,
    pub m2: String,
    pub label: String,
}

/// One JSONL line: a sentence with its mentions and annotated relations.
#[derive(Debug, Clone)]
pub struct Document {
    pub sentence: Arc<AnnotatedSentence>,
    pub mentions: Vec<EntityMention>,
    pub relations: Vec<LabeledPair>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelSet {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    directed: bool,
    nil_label: Option<String>,
}

impl LabelSet {
    /// Labels in first-seen order; `nil` is appended when not already present.
    pub fn from_labels<I, S>(labels: I, nil: Option<&str>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = LabelSet {
            directed: false,
            nil_label: nil.map(str::to_string),
            ..Default::default()
        };
        for l in labels {
            set.insert(l.as_ref());
        }
        if let Some(nil) = nil {
            set.insert(nil);
        }
        set.directed = set.labels.iter().any(|l| split_direction(l).1.is_some());
        set
    }

    /// Expands each relation type into `Rel(M1,M2)` and `Rel(M2,M1)`.
    pub fn directed<I, S>(types: I, nil: Option<&str>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut labels = Vec::new();
        for t in types {
            let t = t.as_ref();
            labels.push(format!("{t}(M1,M2)"));
            labels.push(format!("{t}(M2,M1)"));
        }
        let mut set = Self::from_labels(labels, nil);
        set.directed = true;
        set
    }

    fn insert(&mut self, label: &str) {
        if !self.index.contains_key(label) {
            self.index.insert(label.to_string(), self.labels.len());
            self.labels.push(label.to_string());
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn nil_label(&self) -> Option<&str> {
        self.nil_label.as_deref()
    }
}

/// Splits `Type(arg1,arg2)` into `("Type", Some("arg1,arg2"))`.
pub fn split_direction(label: &str) -> (&str, Option<&str>) {
    if let Some(open) = label.rfind('(') {
        if label.ends_with(')') && open > 0 {
            return (&label[..open], Some(&label[open + 1..label.len() - 1]));
        }
    }
    (label, None)
}

/// The undirected relation type of a label.
pub fn relation_type(label: &str) -> &str {
    split_direction(label).0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairMode {
    /// Every ordered mention pair; unannotated pairs get the NIL label.
    AllPairs,
    /// Only the annotated pairs.
    GivenPairs,
}

/// Builds relation instances from one document.
pub fn generate_instances(
    doc: &Document,
    mode: PairMode,
    nil_label: Option<&str>,
    max_intervening: Option<usize>,
) -> Result<Vec<RelationInstance>, CorpusError> {
    let by_id: HashMap<&str, &EntityMention> =
        doc.mentions.iter().map(|m| (m.id.as_str(), m)).collect();
    let find = |id: &str| {
        by_id.get(id).copied().ok_or_else(|| CorpusError::MissingMention {
            sentence: doc.sentence.id.clone(),
            mention: id.to_string(),
        })
    };
    let mut gold: HashMap<(&str, &str), &str> = HashMap::new();
    for rel in &doc.relations {
        let m1 = find(&rel.m1)?;
        let m2 = find(&rel.m2)?;
        if m1.head == m2.head {
            return Err(CorpusError::SharedHead {
                sentence: doc.sentence.id.clone(),
                m1: m1.id.clone(),
                m2: m2.id.clone(),
                head: m1.head + 1,
            });
        }
        gold.insert((m1.id.as_str(), m2.id.as_str()), rel.label.as_str());
    }
    let make = |m1: &EntityMention, m2: &EntityMention, label: Option<String>| RelationInstance {
        sentence: Arc::clone(&doc.sentence),
        m1: m1.clone(),
        m2: m2.clone(),
        label,
    };

    match mode {
        PairMode::GivenPairs => doc
            .relations
            .iter()
            .map(|rel| Ok(make(find(&rel.m1)?, find(&rel.m2)?, Some(rel.label.clone()))))
            .collect(),
        PairMode::AllPairs => {
            let nil = nil_label.ok_or(CorpusError::MissingNil)?;
            let mut heads: Vec<usize> = doc.mentions.iter().map(|m| m.head).collect();
            heads.sort_unstable();
            let intervening = |a: usize, b: usize| {
                let (lo, hi) = (a.min(b), a.max(b));
                heads.iter().filter(|&&h| h > lo && h < hi).count()
            };
            let mut out = Vec::new();
            for m1 in &doc.mentions {
                for m2 in &doc.mentions {
                    if std::ptr::eq(m1, m2) {
                        continue;
                    }
                    if m1.head == m2.head {
                        log::warn!(
                            "sentence {}: mentions {} and {} share a head; pair skipped",
                            doc.sentence.id,
                            m1.id,
                            m2.id
                        );
                        continue;
                    }
                    if max_intervening.is_some_and(|k| intervening(m1.head, m2.head) > k) {
                        continue;
                    }
                    let label = gold
                        .get(&(m1.id.as_str(), m2.id.as_str()))
                        .copied()
                        .unwrap_or(nil);
                    out.push(make(m1, m2, Some(label.to_string())));
                }
            }
            Ok(out)
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawToken {
    form: String,
    #[serde(default)]
    pos: String,
    #[serde(default)]
    ne: String,
    head: i64,
    #[serde(default)]
    deprel: String,
}

#[derive(Debug, Deserialize)]
struct RawMention {
    id: String,
    start: i64,
    end: i64,
    head: i64,
    #[serde(default, rename = "type")]
    etype: String,
}

#[derive(Debug, Deserialize)]
struct RawDocument {
    id: String,
    tokens: Vec<RawToken>,
    #[serde(default)]
    mentions: Vec<RawMention>,
    #[serde(default)]
    relations: Vec<LabeledPair>,
    schema: u32,
}

fn invalid(line: usize, field: impl Into<String>, message: impl Into<String>) -> CorpusError {
    CorpusError::Invalid {
        line,
        field: field.into(),
        message: message.into(),
    }
}

/// Parses and validates one JSONL line (`line` is used in error messages).
pub fn parse_document(text: &str, line: usize) -> Result<Document, CorpusError> {
    let raw: RawDocument = serde_json::from_str(text).map_err(|e| CorpusError::Json {
        line,
        message: e.to_string(),
    })?;
    if raw.schema != SCHEMA_VERSION {
        return Err(CorpusError::Schema {
            line,
            found: raw.schema,
        });
    }
    let n = raw.tokens.len();
    if n == 0 {
        return Err(invalid(line, "tokens", "sentence has no tokens"));
    }
    let mut tokens = Vec::with_capacity(n);
    for (i, t) in raw.tokens.into_iter().enumerate() {
        let field = format!("tokens[{i}].head");
        if t.head < 0 || t.head as usize > n {
            return Err(invalid(
                line,
                field,
                format!("dep_head out of range ({} for {n} tokens)", t.head),
            ));
        }
        if t.head as usize == i + 1 {
            return Err(invalid(line, field, "dep_head points at its own token"));
        }
        tokens.push(Token {
            form: t.form,
            pos: t.pos,
            netag: t.ne,
            head: (t.head > 0).then(|| t.head as usize - 1),
            deprel: t.deprel,
        });
    }
    let sentence = AnnotatedSentence::new(raw.id, tokens).map_err(|e| {
        let field = match &e {
            TreeError::Cycle { token } => format!("tokens[{token}].head"),
            _ => "tokens".to_string(),
        };
        invalid(line, field, e.to_string())
    })?;

    let mut mentions = Vec::with_capacity(raw.mentions.len());
    let mut ids = HashMap::new();
    for (k, m) in raw.mentions.into_iter().enumerate() {
        let field = |f: &str| format!("mentions[{k}].{f}");
        if !(1 <= m.start && m.start < m.end && m.end as usize <= n + 1) {
            return Err(invalid(
                line,
                field("start"),
                format!("mention span [{}, {}) outside sentence of {n} tokens", m.start, m.end),
            ));
        }
        if !(m.start <= m.head && m.head < m.end) {
            return Err(invalid(line, field("head"), "mention head outside its span"));
        }
        if ids.insert(m.id.clone(), k).is_some() {
            return Err(invalid(line, field("id"), format!("duplicate mention id {:?}", m.id)));
        }
        mentions.push(EntityMention {
            id: m.id,
            start: m.start as usize - 1,
            end: m.end as usize - 1,
            head: m.head as usize - 1,
            etype: m.etype,
        });
    }
    for (k, r) in raw.relations.iter().enumerate() {
        for (f, id) in [("m1", &r.m1), ("m2", &r.m2)] {
            if !ids.contains_key(id) {
                return Err(invalid(
                    line,
                    format!("relations[{k}].{f}"),
                    format!("unknown mention id {id:?}"),
                ));
            }
        }
        if mentions[ids[&r.m1]].head == mentions[ids[&r.m2]].head {
            return Err(invalid(
                line,
                format!("relations[{k}]"),
                "relation arguments share a head token",
            ));
        }
    }
    Ok(Document {
        sentence: Arc::new(sentence),
        mentions,
        relations: raw.relations,
    })
}

/// Loaded corpus plus the labels it uses, in first-seen order.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub labels: LabelSet,
}

impl Corpus {
    pub fn instances(
        &self,
        mode: PairMode,
        nil_label: Option<&str>,
        max_intervening: Option<usize>,
    ) -> Result<Vec<RelationInstance>, CorpusError> {
        let mut out = Vec::new();
        for doc in &self.documents {
            out.extend(generate_instances(doc, mode, nil_label, max_intervening)?);
        }
        Ok(out)
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut documents = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        documents.push(parse_document(&line, idx + 1)?);
    }
    let labels = LabelSet::from_labels(
        documents
            .iter()
            .flat_map(|d| d.relations.iter().map(|r| r.label.as_str())),
        None,
    );
    Ok(Corpus { documents, labels })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Builds a sentence from 1-based heads (0 = root).
    pub(crate) fn sentence_from_heads(heads: &[usize]) -> AnnotatedSentence {
        let tokens = heads
            .iter()
            .enumerate()
            .map(|(i, &h)| Token {
                form: format!("w{}", i + 1),
                pos: "NN".into(),
                netag: String::new(),
                head: h.checked_sub(1),
                deprel: "dep".into(),
            })
            .collect();
        AnnotatedSentence::new("s", tokens).unwrap()
    }

    fn one_based(path: Vec<usize>) -> Vec<usize> {
        path.into_iter().map(|i| i + 1).collect()
    }

    #[test]
    fn path_on_star_tree() {
        let s = sentence_from_heads(&[3, 3, 0, 3, 3]);
        assert_eq!(one_based(s.dependency_path(0, 4)), vec![1, 3, 5]);
        assert_eq!(one_based(s.dependency_path(2, 2)), vec![3]);
    }

    #[test]
    fn path_on_chain() {
        let s = sentence_from_heads(&[0, 1, 2, 3, 4]);
        assert_eq!(one_based(s.dependency_path(1, 4)), vec![2, 3, 4, 5]);
        assert_eq!(one_based(s.dependency_path(4, 1)), vec![5, 4, 3, 2]);
    }

    #[test]
    fn rejects_non_trees() {
        let tok = |h: Option<usize>| Token {
            form: "x".into(),
            pos: String::new(),
            netag: String::new(),
            head: h,
            deprel: String::new(),
        };
        assert_eq!(
            AnnotatedSentence::new("s", vec![tok(Some(1)), tok(Some(0)), tok(None)]),
            Err(TreeError::Cycle { token: 0 })
        );
        assert_eq!(
            AnnotatedSentence::new("s", vec![tok(None), tok(None)]),
            Err(TreeError::RootCount(2))
        );
        assert_eq!(AnnotatedSentence::new("s", vec![]), Err(TreeError::Empty));
    }

    const LINE: &str = r#"{"id":"s1","schema":1,
        "tokens":[{"form":"A","pos":"DT","ne":"O","head":2,"deprel":"det"},
                  {"form":"man","pos":"NN","ne":"PER","head":3,"deprel":"nsubj"},
                  {"form":"drove","pos":"VBD","ne":"O","head":0,"deprel":"root"},
                  {"form":"a","pos":"DT","ne":"O","head":5,"deprel":"det"},
                  {"form":"cab","pos":"NN","ne":"VEH","head":3,"deprel":"dobj"}],
        "mentions":[{"id":"m1","start":1,"end":3,"head":2,"type":"PER"},
                    {"id":"m2","start":4,"end":6,"head":5,"type":"VEH"}],
        "relations":[{"m1":"m1","m2":"m2","label":"ART(M1,M2)"}]}"#;

    #[test]
    fn parses_fixture_line() {
        let doc = parse_document(&LINE.replace('\n', " "), 1).unwrap();
        assert_eq!(doc.sentence.len(), 5);
        assert_eq!(doc.mentions[0].head, 1);
        assert_eq!(doc.mentions[1].start, 3);
        assert_eq!(doc.sentence.tokens[0].head, Some(1));
        let inst = generate_instances(&doc, PairMode::GivenPairs, None, None).unwrap();
        assert_eq!(inst.len(), 1);
        assert_eq!(inst[0].label.as_deref(), Some("ART(M1,M2)"));
        let all = generate_instances(&doc, PairMode::AllPairs, Some("NIL"), None).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[1].label.as_deref(), Some("NIL"));
    }

    #[test]
    fn head_out_of_range_names_line() {
        let bad = LINE.replace('\n', " ").replace(r#""head":5,"deprel":"det""#, r#""head":99,"deprel":"det""#);
        let err = parse_document(&bad, 1).unwrap_err().to_string();
        assert!(err.contains("dep_head out of range"), "{err}");
        assert!(err.contains("line 1"), "{err}");
        assert!(err.contains("tokens[3].head"), "{err}");
    }

    #[test]
    fn schema_and_json_errors() {
        let v2 = LINE.replace('\n', " ").replace(r#""schema":1"#, r#""schema":2"#);
        assert!(matches!(parse_document(&v2, 4), Err(CorpusError::Schema { line: 4, found: 2 })));
        assert!(matches!(parse_document("{not json", 2), Err(CorpusError::Json { line: 2, .. })));
        let missing = LINE.replace('\n', " ").replace(r#""m2":"m2""#, r#""m2":"m9""#);
        let err = parse_document(&missing, 1).unwrap_err().to_string();
        assert!(err.contains("relations[0].m2"), "{err}");
    }

    fn doc_with_heads(heads: &[usize], relations: Vec<LabeledPair>) -> Document {
        let n = heads.iter().max().unwrap() + 1;
        let sentence = sentence_from_heads(&(0..n).map(|i| if i == 0 { 0 } else { 1 }).collect::<Vec<_>>());
        Document {
            sentence: Arc::new(sentence),
            mentions: heads
                .iter()
                .enumerate()
                .map(|(k, &h)| EntityMention {
                    id: format!("m{k}"),
                    start: h,
                    end: h + 1,
                    head: h,
                    etype: "T".into(),
                })
                .collect(),
            relations,
        }
    }

    #[test]
    fn all_pairs_counts() {
        let doc = doc_with_heads(&[0, 2, 4], vec![]);
        let inst = generate_instances(&doc, PairMode::AllPairs, Some("NIL"), None).unwrap();
        assert_eq!(inst.len(), 6);
        assert!(matches!(
            generate_instances(&doc, PairMode::AllPairs, None, None),
            Err(CorpusError::MissingNil)
        ));
    }

    #[test]
    fn intervening_cap() {
        let doc = doc_with_heads(&[0, 1, 2, 3, 4, 5], vec![]);
        let inst = generate_instances(&doc, PairMode::AllPairs, Some("NIL"), Some(3)).unwrap();
        let has = |a: &str, b: &str| inst.iter().any(|i| i.m1.id == a && i.m2.id == b);
        assert!(!has("m0", "m5"));
        assert!(!has("m5", "m0"));
        assert!(has("m0", "m4"));
        // Enumerated: 30 ordered pairs minus the two (m0, m5) directions.
        assert_eq!(inst.len(), 28);
    }

    #[test]
    fn given_pairs_no_nil_padding() {
        let rel = LabeledPair {
            m1: "m2".into(),
            m2: "m0".into(),
            label: "Cause-Effect(e2,e1)".into(),
        };
        let doc = doc_with_heads(&[0, 2, 4], vec![rel.clone()]);
        let inst = generate_instances(&doc, PairMode::GivenPairs, None, None).unwrap();
        assert_eq!(inst.len(), 1);
        assert_eq!(inst[0].m1.id, "m2");
        let bad = doc_with_heads(
            &[0, 2],
            vec![LabeledPair {
                m1: "m0".into(),
                m2: "zz".into(),
                label: "x".into(),
            }],
        );
        assert!(matches!(
            generate_instances(&bad, PairMode::GivenPairs, None, None),
            Err(CorpusError::MissingMention { .. })
        ));
    }

    #[test]
    fn label_sets() {
        let l = LabelSet::directed(["ART", "PHYS"], Some("NIL"));
        assert_eq!(l.labels(), &["ART(M1,M2)", "ART(M2,M1)", "PHYS(M1,M2)", "PHYS(M2,M1)", "NIL"]);
        assert!(l.is_directed());
        assert_eq!(l.index_of("NIL"), Some(4));
        let l = LabelSet::from_labels(["b", "a", "b"], None);
        assert_eq!(l.labels(), &["b", "a"]);
        assert_eq!(relation_type("Cause-Effect(e1,e2)"), "Cause-Effect");
        assert_eq!(relation_type("Other"), "Other");
    }

    pub(crate) fn arb_tree() -> impl Strategy<Value = Vec<usize>> {
        // Random parent pointers into earlier positions, then a random relabelling.
        (2usize..12)
            .prop_flat_map(|n| {
                let parents: Vec<_> = (1..n).map(|i| 0..i).collect();
                (parents, Just((0..n).collect::<Vec<usize>>()).prop_shuffle())
            })
            .prop_map(|(parents, perm)| {
                let n = perm.len();
                let mut heads = vec![0; n];
                for (child, &p) in parents.iter().enumerate() {
                    heads[perm[child + 1]] = perm[p] + 1;
                }
                heads
            })
    }

    proptest! {
        #[test]
        fn path_properties(heads in arb_tree(), a in 0usize..64, b in 0usize..64) {
            let s = sentence_from_heads(&heads);
            let (i, j) = (a % s.len(), b % s.len());
            let p = s.dependency_path(i, j);
            let mut q = s.dependency_path(j, i);
            q.reverse();
            prop_assert_eq!(&p, &q);
            prop_assert_eq!(p[0], i);
            prop_assert_eq!(*p.last().unwrap(), j);
            for w in p.windows(2) {
                let linked = s.tokens[w[0]].head == Some(w[1]) || s.tokens[w[1]].head == Some(w[0]);
                prop_assert!(linked);
            }
            let mut sorted = p.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), p.len());
        }

        #[test]
        fn all_pairs_is_m_times_m_minus_one(m in 1usize..8) {
            let heads: Vec<usize> = (0..m).collect();
            let doc = doc_with_heads(&heads, vec![]);
            let inst = generate_instances(&doc, PairMode::AllPairs, Some("NIL"), None).unwrap();
            prop_assert_eq!(inst.len(), m * (m - 1));
        }
    }
}
