//! Per-word sparse binary features and the feature vocabulary.
//!
//! Each word of an instance gets indicator features describing its role
//! relative to the two mention heads: being a head, being adjacent to a head,
//! lying between the heads, lying on the dependency path between them. All but
//! the adjacency indicators are also conjoined with the entity types of the
//! two heads.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::RelationInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TemplateSet {
    HeadEmb,
    Context,
    InBetween,
    OnPath,
}

impl TemplateSet {
    pub const ALL: [TemplateSet; 4] = [
        TemplateSet::HeadEmb,
        TemplateSet::Context,
        TemplateSet::InBetween,
        TemplateSet::OnPath,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateSet::HeadEmb => "HeadEmb",
            TemplateSet::Context => "Context",
            TemplateSet::InBetween => "InBetween",
            TemplateSet::OnPath => "OnPath",
        }
    }
}

impl std::str::FromStr for TemplateSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "heademb" => Ok(TemplateSet::HeadEmb),
            "context" => Ok(TemplateSet::Context),
            "inbetween" => Ok(TemplateSet::InBetween),
            "onpath" => Ok(TemplateSet::OnPath),
            _ => Err(format!("unknown template set {s:?} (expected heademb, context, inbetween, onpath)")),
        }
    }
}

/// Where the entity types of the two heads come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TypeSource {
    /// The mention's `type` field.
    Gold,
    /// The head token's `ne` field.
    NE,
    /// The head token's `ne` field holding a WordNet supersense.
    WordNetSupersense,
    /// The first `k` characters of a cluster bit-string in the head's `ne` field.
    ClusterPrefix(usize),
    None,
}

impl std::str::FromStr for TypeSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "gold" => Ok(TypeSource::Gold),
            "ne" => Ok(TypeSource::NE),
            "supersense" | "wordnet" => Ok(TypeSource::WordNetSupersense),
            "none" => Ok(TypeSource::None),
            _ => lower
                .strip_prefix("cluster")
                .and_then(|k| k.parse().ok())
                .filter(|&k| k > 0)
                .map(TypeSource::ClusterPrefix)
                .ok_or_else(|| format!("unknown entity-type source {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub templates: Vec<TemplateSet>,
    pub use_entity_types: bool,
    pub type_source: TypeSource,
    /// Whether the dependency path includes the two head tokens.
    pub path_inclusive: bool,
    /// Always-on feature for every word.
    pub bias: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            templates: TemplateSet::ALL.to_vec(),
            use_entity_types: true,
            type_source: TypeSource::Gold,
            path_inclusive: true,
            bias: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FeatureError {
    #[error("at least one feature template set must be enabled")]
    NoTemplates,
    #[error("feature index {index} out of range for {size} features")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("malformed vocabulary line {line}: {message}")]
    VocabFormat { line: usize, message: String },
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.templates.is_empty() && !self.bias {
            return Err(FeatureError::NoTemplates);
        }
        Ok(())
    }

    pub fn enabled(&self, set: TemplateSet) -> bool {
        self.templates.contains(&set)
    }

    pub fn with_templates(&self, templates: &[TemplateSet]) -> FeatureConfig {
        FeatureConfig {
            templates: templates.to_vec(),
            ..self.clone()
        }
    }

    fn types_active(&self) -> bool {
        self.use_entity_types && self.type_source != TypeSource::None
    }
}

/// Feature-string ↔ index map. Grows until frozen; afterwards unknown
/// strings are dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureVocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
    frozen: bool,
}

impl FeatureVocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// |F|.
    pub fn dimension(&self) -> usize {
        self.names.len()
    }

    pub fn get(&self, feature: &str) -> Option<usize> {
        self.index.get(feature).copied()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Index of `feature`, allocating one if the vocab is still open.
    pub fn intern(&mut self, feature: &str) -> Option<usize> {
        if let Some(&i) = self.index.get(feature) {
            return Some(i);
        }
        if self.frozen {
            return None;
        }
        let i = self.names.len();
        self.names.push(feature.to_string());
        self.index.insert(feature.to_string(), i);
        Some(i)
    }

    /// Maps strings through the vocab, growing it unless frozen.
    pub fn map<S: AsRef<str>>(&mut self, features: &[S]) -> SparseFeatureVector {
        SparseFeatureVector::from_indices(features.iter().filter_map(|f| self.intern(f.as_ref())))
    }

    /// Maps strings without growth; unknown strings are dropped.
    pub fn map_frozen<S: AsRef<str>>(&self, features: &[S]) -> SparseFeatureVector {
        SparseFeatureVector::from_indices(features.iter().filter_map(|f| self.get(f.as_ref())))
    }

    /// `index<TAB>feature` lines.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, name) in self.names.iter().enumerate() {
            writeln!(out, "{i}\t{name}")?;
        }
        Ok(())
    }

    /// Reads `index<TAB>feature` lines into a frozen vocab.
    pub fn read_tsv<R: BufRead>(input: R) -> Result<Self, FeatureError> {
        let mut vocab = FeatureVocab::new();
        for (k, line) in input.lines().enumerate() {
            let bad = |message: String| FeatureError::VocabFormat { line: k + 1, message };
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let (idx, name) = line
                .split_once('\t')
                .ok_or_else(|| bad("missing tab separator".into()))?;
            let idx: usize = idx.parse().map_err(|_| bad(format!("bad index {idx:?}")))?;
            if idx != vocab.dimension() {
                return Err(bad(format!("expected index {}, found {idx}", vocab.dimension())));
            }
            if vocab.get(name).is_some() {
                return Err(bad(format!("duplicate feature {name:?}")));
            }
            vocab.intern(name);
        }
        vocab.freeze();
        Ok(vocab)
    }
}

/// Binary feature vector: strictly increasing indices, implicit value 1.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct SparseFeatureVector {
    indices: Vec<usize>,
}

impl SparseFeatureVector {
    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        let mut indices: Vec<usize> = indices.into_iter().collect();
        indices.sort_unstable();
        indices.dedup();
        SparseFeatureVector { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    pub fn check_bounds(&self, size: usize) -> Result<(), FeatureError> {
        match self.indices.last() {
            Some(&index) if index >= size => Err(FeatureError::IndexOutOfRange { index, size }),
            _ => Ok(()),
        }
    }
}

fn strip_bio(tag: &str) -> &str {
    tag.strip_prefix("B-")
        .or_else(|| tag.strip_prefix("I-"))
        .unwrap_or(tag)
}

/// Entity type of a mention's head under `source`. Empty values become `_`.
pub fn entity_type(instance: &RelationInstance, second: bool, source: TypeSource) -> String {
    let m = if second { &instance.m2 } else { &instance.m1 };
    let netag = || instance.sentence.tokens[m.head].netag.as_str();
    let t = match source {
        TypeSource::Gold => m.etype.as_str(),
        TypeSource::NE | TypeSource::WordNetSupersense => strip_bio(netag()),
        TypeSource::ClusterPrefix(k) => {
            let tag = netag();
            tag.char_indices().nth(k).map_or(tag, |(i, _)| &tag[..i])
        }
        TypeSource::None => "",
    };
    if t.is_empty() {
        "_".to_string()
    } else {
        t.to_string()
    }
}

/// Per-instance facts shared by all words: head positions, types, path.
#[derive(Debug, Clone)]
pub struct InstanceContext {
    pub h1: usize,
    pub h2: usize,
    /// `[φ, t1, t2, t1⊕t2]` suffixes, or just `[φ]` without types.
    type_suffixes: Vec<String>,
    on_path: Vec<bool>,
}

impl InstanceContext {
    pub fn new(instance: &RelationInstance, config: &FeatureConfig) -> Self {
        let (h1, h2) = (instance.m1.head, instance.m2.head);
        let mut type_suffixes = vec![String::new()];
        if config.types_active() {
            let t1 = entity_type(instance, false, config.type_source);
            let t2 = entity_type(instance, true, config.type_source);
            type_suffixes.push(format!("&t1={t1}"));
            type_suffixes.push(format!("&t2={t2}"));
            type_suffixes.push(format!("&t1t2={t1}|{t2}"));
        }
        let mut on_path = vec![false; instance.sentence.len()];
        if config.enabled(TemplateSet::OnPath) {
            for i in instance.sentence.dependency_path(h1, h2) {
                on_path[i] = true;
            }
            if !config.path_inclusive {
                on_path[h1] = false;
                on_path[h2] = false;
            }
        }
        InstanceContext {
            h1,
            h2,
            type_suffixes,
            on_path,
        }
    }

    fn crossed(&self, base: &str, out: &mut Vec<String>) {
        for suffix in &self.type_suffixes {
            let mut s = String::with_capacity(base.len() + suffix.len());
            let _ = write!(s, "{base}{suffix}");
            out.push(s);
        }
    }

    /// Feature strings for token `i` (0-based).
    pub fn word_features(&self, i: usize, config: &FeatureConfig) -> Vec<String> {
        let (h1, h2) = (self.h1, self.h2);
        let mut out = Vec::new();
        if config.bias {
            out.push("Bias".to_string());
        }
        if config.enabled(TemplateSet::HeadEmb) {
            if i == h1 {
                self.crossed("HeadEmb:h1", &mut out);
            }
            if i == h2 {
                self.crossed("HeadEmb:h2", &mut out);
            }
        }
        if config.enabled(TemplateSet::Context) {
            for (head, name) in [(h1, "h1"), (h2, "h2")] {
                if i + 1 == head {
                    out.push(format!("Context:{name}-1"));
                }
                if i == head + 1 {
                    out.push(format!("Context:{name}+1"));
                }
            }
        }
        if config.enabled(TemplateSet::InBetween) && h1.min(h2) < i && i < h1.max(h2) {
            self.crossed("InBetween", &mut out);
        }
        if config.enabled(TemplateSet::OnPath) && self.on_path[i] {
            self.crossed("OnPath", &mut out);
        }
        out
    }
}

/// Feature strings for word `i` of `instance`.
pub fn word_feature_strings(instance: &RelationInstance, i: usize, config: &FeatureConfig) -> Vec<String> {
    InstanceContext::new(instance, config).word_features(i, config)
}

/// Extracts word `i`'s feature vector, growing `vocab` unless it is frozen.
pub fn extract_word_features(
    instance: &RelationInstance,
    i: usize,
    config: &FeatureConfig,
    vocab: &mut FeatureVocab,
) -> SparseFeatureVector {
    vocab.map(&word_feature_strings(instance, i, config))
}

/// Feature vectors for every word of the instance, in token order.
pub fn extract_instance(
    instance: &RelationInstance,
    config: &FeatureConfig,
    vocab: &mut FeatureVocab,
) -> Vec<SparseFeatureVector> {
    let ctx = InstanceContext::new(instance, config);
    (0..instance.sentence.len())
        .map(|i| vocab.map(&ctx.word_features(i, config)))
        .collect()
}

/// Like [`extract_instance`] against a frozen vocab (no mutation).
pub fn extract_instance_frozen(
    instance: &RelationInstance,
    config: &FeatureConfig,
    vocab: &FeatureVocab,
) -> Vec<SparseFeatureVector> {
    let ctx = InstanceContext::new(instance, config);
    (0..instance.sentence.len())
        .map(|i| vocab.map_frozen(&ctx.word_features(i, config)))
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::{AnnotatedSentence, EntityMention, Token};
    use std::collections::BTreeSet;
    use std::sync::Arc;

    /// "A man driving what appeared taxicab"; driving heads man and taxicab.
    pub(crate) fn driving_instance() -> RelationInstance {
        let forms = ["A", "man", "driving", "what", "appeared", "taxicab"];
        let heads = [2, 3, 0, 5, 3, 3];
        let tokens = forms
            .iter()
            .zip(heads)
            .map(|(f, h)| Token {
                form: f.to_string(),
                pos: "X".into(),
                netag: String::new(),
                head: (h as usize).checked_sub(1),
                deprel: "dep".into(),
            })
            .collect();
        let sentence = Arc::new(AnnotatedSentence::new("t1", tokens).unwrap());
        let mention = |id: &str, h: usize, t: &str| EntityMention {
            id: id.into(),
            start: h,
            end: h + 1,
            head: h,
            etype: t.into(),
        };
        RelationInstance {
            sentence,
            m1: mention("m1", 1, "PER"),
            m2: mention("m2", 5, "VEH"),
            label: Some("ART(M1,M2)".into()),
        }
    }

    fn set(v: Vec<String>) -> BTreeSet<String> {
        v.into_iter().collect()
    }

    #[test]
    fn path_word_between_heads() {
        let inst = driving_instance();
        assert_eq!(
            inst.sentence.dependency_path(1, 5),
            vec![1, 2, 5],
            "fixture path P = [2, 3, 6] in 1-based indices"
        );
        let got = set(word_feature_strings(&inst, 2, &FeatureConfig::default()));
        let want: BTreeSet<String> = [
            "Context:h1+1",
            "InBetween",
            "InBetween&t1=PER",
            "InBetween&t2=VEH",
            "InBetween&t1t2=PER|VEH",
            "OnPath",
            "OnPath&t1=PER",
            "OnPath&t2=VEH",
            "OnPath&t1t2=PER|VEH",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn head_word_features() {
        let inst = driving_instance();
        let got = word_feature_strings(&inst, 1, &FeatureConfig::default());
        assert_eq!(got.len(), 8);
        assert_eq!(got.iter().filter(|s| s.starts_with("HeadEmb:h1")).count(), 4);
        assert_eq!(got.iter().filter(|s| s.starts_with("OnPath")).count(), 4);
        assert!(!got.iter().any(|s| s.starts_with("InBetween")));
    }

    #[test]
    fn unrelated_word_is_empty() {
        let inst = driving_instance();
        // "A" is left of h1 (Context:h1-1 fires); with Context off nothing fires.
        let cfg = FeatureConfig::default().with_templates(&[
            TemplateSet::HeadEmb,
            TemplateSet::InBetween,
            TemplateSet::OnPath,
        ]);
        assert!(word_feature_strings(&inst, 0, &cfg).is_empty());
        assert_eq!(
            word_feature_strings(&inst, 0, &FeatureConfig::default()),
            vec!["Context:h1-1"]
        );
    }

    #[test]
    fn exclusive_path_drops_heads() {
        let inst = driving_instance();
        let cfg = FeatureConfig {
            path_inclusive: false,
            ..FeatureConfig::default()
        };
        let got = word_feature_strings(&inst, 1, &cfg);
        assert!(!got.iter().any(|s| s.starts_with("OnPath")));
        assert!(word_feature_strings(&inst, 2, &cfg).iter().any(|s| s == "OnPath"));
    }

    #[test]
    fn untyped_is_phi_subset() {
        let inst = driving_instance();
        let typed = FeatureConfig::default();
        let untyped = FeatureConfig {
            use_entity_types: false,
            ..typed.clone()
        };
        for i in 0..inst.sentence.len() {
            let a = set(word_feature_strings(&inst, i, &untyped));
            let b = set(word_feature_strings(&inst, i, &typed));
            let phi: BTreeSet<String> = b.into_iter().filter(|s| !s.contains('&')).collect();
            assert_eq!(a, phi);
        }
    }

    #[test]
    fn in_between_silent_for_adjacent_heads() {
        let mut inst = driving_instance();
        inst.m2.head = 2;
        for i in 0..inst.sentence.len() {
            assert!(!word_feature_strings(&inst, i, &FeatureConfig::default())
                .iter()
                .any(|s| s.starts_with("InBetween")));
        }
    }

    #[test]
    fn type_sources() {
        let mut inst = driving_instance();
        Arc::get_mut(&mut inst.sentence).unwrap().tokens[1].netag = "B-noun.person".into();
        Arc::get_mut(&mut inst.sentence).unwrap().tokens[5].netag = "0110101".into();
        assert_eq!(entity_type(&inst, false, TypeSource::Gold), "PER");
        assert_eq!(entity_type(&inst, false, TypeSource::WordNetSupersense), "noun.person");
        assert_eq!(entity_type(&inst, true, TypeSource::ClusterPrefix(5)), "01101");
        assert_eq!("cluster5".parse::<TypeSource>().unwrap(), TypeSource::ClusterPrefix(5));
        assert!("cluster0".parse::<TypeSource>().is_err());
    }

    #[test]
    fn vocab_freeze_and_dimension() {
        let inst = driving_instance();
        let mut vocab = FeatureVocab::new();
        assert_eq!(vocab.dimension(), 0);
        let f = extract_word_features(&inst, 2, &FeatureConfig::default(), &mut vocab);
        assert_eq!(f.len(), 9);
        assert!(vocab.dimension() >= 9);
        vocab.freeze();
        vocab.freeze();
        let before = vocab.dimension();
        let f = vocab.map(&["OnPath", "NeverSeen"]);
        assert_eq!(f.len(), 1);
        assert_eq!(vocab.dimension(), before);
    }

    #[test]
    fn vocab_tsv_round_trip() {
        let mut vocab = FeatureVocab::new();
        vocab.map(&["b", "a", "OnPath&t1t2=PER|VEH"]);
        let mut buf = Vec::new();
        vocab.write_tsv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().next(), Some("0\tb"));
        let back = FeatureVocab::read_tsv(&buf[..]).unwrap();
        assert_eq!(back.names(), vocab.names());
        assert!(back.is_frozen());
        assert!(FeatureVocab::read_tsv(&b"1\tx\n"[..]).is_err());
    }

    #[test]
    fn extraction_is_deterministic() {
        let inst = driving_instance();
        let cfg = FeatureConfig::default();
        for i in 0..inst.sentence.len() {
            assert_eq!(word_feature_strings(&inst, i, &cfg), word_feature_strings(&inst, i, &cfg));
        }
    }

    fn random_instance(heads: &[usize], a: usize, b: usize, types: (&str, &str)) -> Option<RelationInstance> {
        let sentence = crate::corpus::tests::sentence_from_heads(heads);
        let (h1, h2) = (a % sentence.len(), b % sentence.len());
        if h1 == h2 {
            return None;
        }
        let m = |id: &str, h: usize, t: &str| EntityMention {
            id: id.into(),
            start: h,
            end: h + 1,
            head: h,
            etype: t.into(),
        };
        Some(RelationInstance {
            sentence: Arc::new(sentence),
            m1: m("a", h1, types.0),
            m2: m("b", h2, types.1),
            label: None,
        })
    }

    proptest::proptest! {
        #[test]
        fn template_properties(
            heads in crate::corpus::tests::arb_tree(),
            a in 0usize..64,
            b in 0usize..64,
            t1 in "[A-Z]{1,3}",
            t2 in "[A-Z]{1,3}",
        ) {
            let Some(inst) = random_instance(&heads, a, b, (&t1, &t2)) else { return Ok(()) };
            let typed = FeatureConfig::default();
            let untyped = FeatureConfig { use_entity_types: false, ..typed.clone() };
            let (h1, h2) = (inst.m1.head, inst.m2.head);
            let mut head_emb_words = 0;
            for i in 0..inst.sentence.len() {
                let f = word_feature_strings(&inst, i, &typed);
                proptest::prop_assert_eq!(&f, &word_feature_strings(&inst, i, &typed));
                if f.iter().any(|s| s.starts_with("HeadEmb")) {
                    head_emb_words += 1;
                    proptest::prop_assert!(i == h1 || i == h2);
                }
                if h1.abs_diff(h2) == 1 {
                    proptest::prop_assert!(!f.iter().any(|s| s.starts_with("InBetween")));
                }
                let u = set(word_feature_strings(&inst, i, &untyped));
                let phi: BTreeSet<String> = set(f).into_iter().filter(|s| !s.contains('&')).collect();
                proptest::prop_assert_eq!(u, phi);
            }
            proptest::prop_assert_eq!(head_emb_words, 2);
            for h in [h1, h2] {
                let f = word_feature_strings(&inst, h, &typed);
                proptest::prop_assert!(f.iter().any(|s| s.starts_with("OnPath")));
            }
        }
    }
}
