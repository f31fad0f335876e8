//! Shared domain model: tokens, sentences, paragraphs, morphosyntactic tags
//! and task samples. Nothing in here performs I/O.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while constructing or validating domain values.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("duplicate feature key `{0}`")]
    DuplicateKey(String),
    #[error("empty feature key in `{0}`")]
    EmptyKey(String),
    #[error("token {0}: form is empty")]
    EmptyForm(usize),
    #[error("token indices must be 1..n consecutive, found {found} at position {position}")]
    BadIndex { position: usize, found: usize },
    #[error("token {index}: head {head} is out of range")]
    HeadOutOfRange { index: usize, head: usize },
    #[error("token {0}: head points to itself")]
    SelfLoop(usize),
}

/// A bundle of morphosyntactic features.
///
/// Keys are kept in lexicographic order so that the rendered string is
/// canonical. A feature with an empty value renders as the bare key; this is
/// how reserved whole-tag markers such as `MANTRA` are represented.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MorphTag {
    features: BTreeMap<String, String>,
}

/// Reserved tag that replaces POS and morphology of masked Vedic citations.
pub const MANTRA_TAG: &str = "MANTRA";

impl MorphTag {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a tag from key/value pairs, rejecting duplicate keys.
    pub fn from_pairs<I, K, V>(pairs: I) -> Result<Self, ValidationError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut features = BTreeMap::new();
        for (k, v) in pairs {
            let k = k.into();
            if k.is_empty() {
                return Err(ValidationError::EmptyKey(k));
            }
            if features.insert(k.clone(), v.into()).is_some() {
                return Err(ValidationError::DuplicateKey(k));
            }
        }
        Ok(MorphTag { features })
    }

    /// The whole-tag marker used for masked mantras.
    pub fn mantra() -> Self {
        let mut features = BTreeMap::new();
        features.insert(MANTRA_TAG.to_string(), String::new());
        MorphTag { features }
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.features.get(key).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.features.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Canonical rendering: `Key=Value` pairs sorted by key and joined by
    /// `|`; the empty bundle renders as `_`.
    pub fn canonical(&self) -> String {
        if self.features.is_empty() {
            return "_".to_string();
        }
        let mut out = String::new();
        for (i, (k, v)) in self.features.iter().enumerate() {
            if i > 0 {
                out.push('|');
            }
            out.push_str(k);
            if !v.is_empty() {
                out.push('=');
                out.push_str(v);
            }
        }
        out
    }
}

/// Renders a tag in canonical form.
pub fn canonical_tag_string(tag: &MorphTag) -> String {
    tag.canonical()
}

impl fmt::Display for MorphTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

impl FromStr for MorphTag {
    type Err = ValidationError;

    /// Parses a CoNLL-U style FEATS value. Feature order in the input does
    /// not matter.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s == "_" {
            return Ok(MorphTag::empty());
        }
        MorphTag::from_pairs(s.split('|').map(|item| match item.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => (item.to_string(), String::new()),
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    /// 1-based position in the sentence.
    pub index: usize,
    /// The string as it appears in running text; empty when the token is
    /// fused into the preceding token's surface string.
    pub surface: String,
    /// Unsandhied word form.
    pub form: String,
    pub lemma: Option<String>,
    pub morph: MorphTag,
    pub upos: Option<String>,
    /// Head index, 0 for the root.
    pub head: Option<usize>,
    pub deprel: Option<String>,
    /// The unsandhied form was supplied heuristically, not by an annotator.
    pub reconstructed: bool,
    /// MISC items not interpreted by this crate, kept verbatim.
    pub misc: Vec<String>,
}

impl Token {
    pub fn new(index: usize, form: impl Into<String>) -> Self {
        let form = form.into();
        Token {
            index,
            surface: form.clone(),
            form,
            lemma: None,
            morph: MorphTag::empty(),
            upos: None,
            head: None,
            deprel: None,
            reconstructed: false,
            misc: Vec::new(),
        }
    }

    pub fn with_lemma(mut self, lemma: impl Into<String>) -> Self {
        self.lemma = Some(lemma.into());
        self
    }

    pub fn with_morph(mut self, morph: MorphTag) -> Self {
        self.morph = morph;
        self
    }

    pub fn with_upos(mut self, upos: impl Into<String>) -> Self {
        self.upos = Some(upos.into());
        self
    }

    pub fn with_dep(mut self, head: usize, deprel: impl Into<String>) -> Self {
        self.head = Some(head);
        self.deprel = Some(deprel.into());
        self
    }

    pub fn with_surface(mut self, surface: impl Into<String>) -> Self {
        self.surface = surface.into();
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub sent_id: Option<String>,
    pub text_id: String,
    pub category: Option<String>,
    /// Sandhied running text in IAST.
    pub raw_text: String,
    pub is_mantra: bool,
    /// Multiword-token or empty-node lines kept verbatim, anchored after the
    /// given number of ordinary tokens.
    pub preserved: Vec<(usize, String)>,
}

impl Sentence {
    pub fn new(text_id: impl Into<String>, raw_text: impl Into<String>, tokens: Vec<Token>) -> Self {
        Sentence {
            tokens,
            text_id: text_id.into(),
            raw_text: raw_text.into(),
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn has_reconstructed(&self) -> bool {
        self.tokens.iter().any(|t| t.reconstructed)
    }

    pub fn char_len(&self) -> usize {
        self.raw_text.chars().count()
    }

    /// Checks the structural token invariants: consecutive indices, non-empty
    /// forms, in-range heads, no self loops.
    pub fn check(&self) -> Result<(), ValidationError> {
        let n = self.tokens.len();
        for (pos, t) in self.tokens.iter().enumerate() {
            if t.index != pos + 1 {
                return Err(ValidationError::BadIndex { position: pos + 1, found: t.index });
            }
            if t.form.is_empty() {
                return Err(ValidationError::EmptyForm(t.index));
            }
            if let Some(h) = t.head {
                if h > n {
                    return Err(ValidationError::HeadOutOfRange { index: t.index, head: h });
                }
                if h == t.index {
                    return Err(ValidationError::SelfLoop(t.index));
                }
            }
        }
        Ok(())
    }
}

/// A corpus-contiguous run of sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub sentences: Vec<Sentence>,
    /// Characters of the raw texts joined by single spaces.
    pub char_len: usize,
}

impl Paragraph {
    pub fn raw_text(&self) -> String {
        self.sentences.iter().map(|s| s.raw_text.as_str()).collect::<Vec<_>>().join(" ")
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences.iter().flat_map(|s| s.tokens.iter())
    }
}

/// Task letters used as prompt prefixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    Segment,
    Lemmatize,
    Morph,
    Ocr,
}

impl Task {
    pub fn letter(self) -> char {
        match self {
            Task::Segment => 'S',
            Task::Lemmatize => 'L',
            Task::Morph => 'M',
            Task::Ocr => 'O',
        }
    }

    pub fn from_letter(c: char) -> Option<Task> {
        match c {
            'S' => Some(Task::Segment),
            'L' => Some(Task::Lemmatize),
            'M' => Some(Task::Morph),
            'O' => Some(Task::Ocr),
            _ => None,
        }
    }
}

/// A canonical-ordered set of tasks. `O` never combines with other tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSet {
    segment: bool,
    lemmatize: bool,
    morph: bool,
    ocr: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid task prefix `{0}`")]
pub struct TaskPrefixError(pub String);

impl TaskSet {
    pub fn new(tasks: &[Task]) -> Result<Self, TaskPrefixError> {
        let mut set = TaskSet { segment: false, lemmatize: false, morph: false, ocr: false };
        for t in tasks {
            match t {
                Task::Segment => set.segment = true,
                Task::Lemmatize => set.lemmatize = true,
                Task::Morph => set.morph = true,
                Task::Ocr => set.ocr = true,
            }
        }
        let n = set.segment as u8 + set.lemmatize as u8 + set.morph as u8;
        if (set.ocr && n > 0) || (!set.ocr && n == 0) {
            return Err(TaskPrefixError(tasks.iter().map(|t| t.letter()).collect()));
        }
        Ok(set)
    }

    pub fn contains(&self, task: Task) -> bool {
        match task {
            Task::Segment => self.segment,
            Task::Lemmatize => self.lemmatize,
            Task::Morph => self.morph,
            Task::Ocr => self.ocr,
        }
    }

    /// Prefix letters in canonical order S < L < M.
    pub fn prefix(&self) -> String {
        [Task::Segment, Task::Lemmatize, Task::Morph, Task::Ocr]
            .into_iter()
            .filter(|t| self.contains(*t))
            .map(Task::letter)
            .collect()
    }
}

impl FromStr for TaskSet {
    type Err = TaskPrefixError;

    /// Accepts `S`, `LM`, `S+L+M`, `s,l,m` and similar spellings; the
    /// letters must not repeat.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut tasks = Vec::new();
        for c in s.chars().filter(|c| !matches!(c, '+' | ',' | ' ')) {
            let t = Task::from_letter(c.to_ascii_uppercase()).ok_or_else(|| TaskPrefixError(s.to_string()))?;
            if tasks.contains(&t) {
                return Err(TaskPrefixError(s.to_string()));
            }
            tasks.push(t);
        }
        TaskSet::new(&tasks).map_err(|_| TaskPrefixError(s.to_string()))
    }
}

impl fmt::Display for TaskSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.prefix())
    }
}

/// One (source, target) pair for a sequence generation model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSample {
    pub tasks: TaskSet,
    pub source: String,
    pub target: String,
    pub reconstructed_flag: bool,
}

/// Flag prepended to sources of units that contain reconstructed forms.
pub const RECONSTRUCTED_FLAG: &str = "R";

/// Splits a sample source into (reconstructed flag, prefix, text). Returns
/// `None` if the source does not start with a known prefix followed by a
/// space (or end of string).
pub fn split_source(source: &str) -> Option<(bool, &str, &str)> {
    let (flag, rest) = match source.strip_prefix("R ") {
        Some(rest) => (true, rest),
        None => (false, source),
    };
    let (prefix, text) = match rest.split_once(' ') {
        Some((p, t)) => (p, t),
        None => (rest, ""),
    };
    if !is_known_prefix(prefix) {
        return None;
    }
    Some((flag, prefix, text))
}

/// Prefixes understood by the toolkit: any canonical S/L/M combination, `O`
/// for OCR correction and `D` for dependency parsing.
pub fn is_known_prefix(prefix: &str) -> bool {
    matches!(prefix, "S" | "L" | "M" | "SL" | "SM" | "LM" | "SLM" | "O" | "D")
}

/// Structural report on a sentence's head graph.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct TreeReport {
    /// Every token has a head.
    pub complete: bool,
    pub acyclic: bool,
    /// Every token reaches the artificial root 0.
    pub connected: bool,
    /// Number of tokens attached directly to 0.
    pub root_count: usize,
    pub notes: Vec<String>,
}

impl TreeReport {
    /// A single UD tree: complete, acyclic, connected, exactly one root.
    pub fn passes(&self) -> bool {
        self.is_rooted_tree() && self.root_count == 1
    }

    /// A tree over the token nodes plus the artificial root 0, which may have
    /// several children. Concatenated training sentences and repaired
    /// predictions have this shape.
    pub fn is_rooted_tree(&self) -> bool {
        self.complete && self.acyclic && self.connected
    }
}

/// Checks acyclicity, connectivity and root uniqueness of the head graph.
pub fn validate_tree(sentence: &Sentence) -> TreeReport {
    validate_heads(&sentence.tokens.iter().map(|t| t.head).collect::<Vec<_>>())
}

/// Same as [`validate_tree`] on a bare head vector (`heads[i]` is the head of
/// token `i + 1`).
pub fn validate_heads(heads: &[Option<usize>]) -> TreeReport {
    let n = heads.len();
    let mut report = TreeReport { complete: true, acyclic: true, connected: true, ..Default::default() };
    for (i, h) in heads.iter().enumerate() {
        match h {
            None => {
                report.complete = false;
                report.notes.push(format!("token {} has no head", i + 1));
            }
            Some(h) if *h > n || *h == i + 1 => {
                report.complete = false;
                report.notes.push(format!("token {} has invalid head {}", i + 1, h));
            }
            Some(0) => report.root_count += 1,
            _ => {}
        }
    }
    if !report.complete {
        report.connected = false;
        return report;
    }

    // 0 = unvisited, 1 = on current path, 2 = reaches root
    let mut state = vec![0u8; n + 1];
    state[0] = 2;
    for start in 1..=n {
        let mut path = Vec::new();
        let mut node = start;
        while state[node] == 0 {
            state[node] = 1;
            path.push(node);
            node = heads[node - 1].unwrap();
        }
        if state[node] == 1 {
            report.acyclic = false;
            report.connected = false;
            report.notes.push(format!("cycle through token {node}"));
            for p in &path {
                state[*p] = 3;
            }
        } else if state[node] == 3 {
            report.connected = false;
            for p in &path {
                state[*p] = 3;
            }
        } else {
            for p in &path {
                state[*p] = 2;
            }
        }
    }
    if report.root_count == 0 && n > 0 {
        report.notes.push("no token attached to root".into());
    } else if report.root_count > 1 {
        report.notes.push(format!("{} tokens attached to root", report.root_count));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonical_sorts_keys() {
        let t = MorphTag::from_pairs([("Number", "Sing"), ("Case", "Nom")]).unwrap();
        assert_eq!(canonical_tag_string(&t), "Case=Nom|Number=Sing");
    }

    #[test]
    fn empty_tag_renders_underscore() {
        assert_eq!(canonical_tag_string(&MorphTag::empty()), "_");
        assert_eq!("_".parse::<MorphTag>().unwrap(), MorphTag::empty());
    }

    #[test]
    fn singletons_render_differently() {
        let gen = MorphTag::from_pairs([("Case", "Gen")]).unwrap();
        let abl = MorphTag::from_pairs([("Case", "Abl")]).unwrap();
        assert_ne!(gen.canonical(), abl.canonical());
    }

    #[test]
    fn duplicate_key_rejected() {
        assert_eq!(
            MorphTag::from_pairs([("Case", "Nom"), ("Case", "Acc")]),
            Err(ValidationError::DuplicateKey("Case".into()))
        );
        assert!("Case=Nom|Case=Acc".parse::<MorphTag>().is_err());
    }

    #[test]
    fn mantra_tag_renders_bare() {
        assert_eq!(MorphTag::mantra().canonical(), "MANTRA");
        assert_eq!("MANTRA".parse::<MorphTag>().unwrap(), MorphTag::mantra());
    }

    #[test]
    fn task_prefix_order() {
        assert_eq!("M+L".parse::<TaskSet>().unwrap().prefix(), "LM");
        assert_eq!("s,l,m".parse::<TaskSet>().unwrap().prefix(), "SLM");
        assert!("SO".parse::<TaskSet>().is_err());
        assert!("SS".parse::<TaskSet>().is_err());
        assert!("".parse::<TaskSet>().is_err());
    }

    #[test]
    fn split_source_handles_flag() {
        assert_eq!(split_source("R S abc d"), Some((true, "S", "abc d")));
        assert_eq!(split_source("LM x"), Some((false, "LM", "x")));
        assert_eq!(split_source("Q x"), None);
    }

    fn heads(v: &[usize]) -> Vec<Option<usize>> {
        v.iter().map(|h| Some(*h)).collect()
    }

    #[test]
    fn chain_passes() {
        // 1 -> 2 -> 3 -> root
        assert!(validate_heads(&heads(&[2, 3, 0])).passes());
    }

    #[test]
    fn two_cycle_fails() {
        let r = validate_heads(&heads(&[2, 1]));
        assert!(!r.acyclic);
        assert!(!r.passes());
    }

    #[test]
    fn multi_root_is_rooted_tree_but_not_ud_tree() {
        let r = validate_heads(&heads(&[0, 0, 1]));
        assert!(r.is_rooted_tree());
        assert_eq!(r.root_count, 2);
        assert!(!r.passes());
    }

    /// Brute-force oracle: a head vector is a UD tree iff exactly one token
    /// attaches to 0 and following head pointers from every token reaches 0
    /// within n steps.
    fn brute_force_is_tree(h: &[usize]) -> bool {
        let n = h.len();
        if h.iter().filter(|&&x| x == 0).count() != 1 {
            return false;
        }
        (1..=n).all(|start| {
            let mut node = start;
            for _ in 0..n {
                if node == 0 {
                    break;
                }
                node = h[node - 1];
            }
            node == 0
        })
    }

    #[test]
    fn exhaustive_three_token_head_assignments() {
        let n = 3;
        let mut trees = 0;
        for a in 0..=n {
            for b in 0..=n {
                for c in 0..=n {
                    let h = [a, b, c];
                    if h.iter().enumerate().any(|(i, &x)| x == i + 1) {
                        continue;
                    }
                    let expected = brute_force_is_tree(&h);
                    assert_eq!(validate_heads(&heads(&h)).passes(), expected, "{h:?}");
                    trees += expected as usize;
                }
            }
        }
        // rooted labelled trees on 3 nodes: 3^(3-1)
        assert_eq!(trees, 9);
    }

    #[test]
    fn missing_head_is_incomplete() {
        let r = validate_heads(&[Some(0), None]);
        assert!(!r.complete);
        assert!(!r.passes());
    }

    #[test]
    fn sentence_check_catches_bad_indices() {
        let s = Sentence::new("t", "a b", vec![Token::new(1, "a"), Token::new(3, "b")]);
        assert!(matches!(s.check(), Err(ValidationError::BadIndex { .. })));
        let s = Sentence::new("t", "a", vec![Token::new(1, "a").with_dep(1, "root")]);
        assert_eq!(s.check(), Err(ValidationError::SelfLoop(1)));
    }

    proptest! {
        #[test]
        fn canonical_is_injective(
            a in proptest::collection::btree_map("[A-Z][a-z]{0,5}", "[A-Za-z0-9]{1,4}", 0..5),
            b in proptest::collection::btree_map("[A-Z][a-z]{0,5}", "[A-Za-z0-9]{1,4}", 0..5),
        ) {
            let ta = MorphTag::from_pairs(a.clone()).unwrap();
            let tb = MorphTag::from_pairs(b.clone()).unwrap();
            prop_assert_eq!(a == b, ta.canonical() == tb.canonical());
            prop_assert_eq!(ta.canonical().parse::<MorphTag>().unwrap(), ta);
        }
    }
}
