//! Dependency trees as sequence-generation samples.
//!
//! Source: `D` followed by one unit per token (the form, or with all features
//! `form_UPOS_code`). Target: one `head:rel` unit per token, heads as absolute
//! 1-based indices, 0 for the root.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tagcodec::{CodecError, Codebook};
use crate::types::{validate_heads, validate_tree, MorphTag, Sentence, Token, MANTRA_TAG};

pub const DEP_PREFIX: &str = "D";
pub const FORMAT_HEADER: &str = "#format=dep-v1";
/// Relation used for repaired attachments.
pub const REPAIR_REL: &str = "dep";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepFeatures {
    None,
    All,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepSampleConfig {
    pub features: DepFeatures,
    pub joiner: char,
    /// Codes for morphological tags, needed for `DepFeatures::All`.
    pub tag_codebook: Option<Codebook>,
    /// Optional short codes for relation labels.
    pub label_codebook: Option<Codebook>,
}

impl Default for DepSampleConfig {
    fn default() -> Self {
        DepSampleConfig { features: DepFeatures::None, joiner: '_', tag_codebook: None, label_codebook: None }
    }
}

#[derive(Debug, Error)]
pub enum DepError {
    #[error("not a tree: {0}")]
    InvalidTree(String),
    #[error("token {index}: missing {what}")]
    Missing { index: usize, what: &'static str },
    #[error("token {index}: `{text}` contains whitespace or the joiner")]
    BadField { index: usize, text: String },
    #[error("all-features samples need a tag codebook")]
    NoCodebook,
    #[error(transparent)]
    Codec(#[from] CodecError),
}

fn clean_field(index: usize, text: &str, joiner: Option<char>) -> Result<(), DepError> {
    if text.is_empty() || text.chars().any(|c| c.is_whitespace() || Some(c) == joiner) {
        return Err(DepError::BadField { index, text: text.to_string() });
    }
    Ok(())
}

fn tag_code<'a>(morph: &MorphTag, cb: &'a Codebook) -> Result<&'a str, DepError> {
    if *morph == MorphTag::mantra() {
        return Ok(MANTRA_TAG);
    }
    Ok(cb.encode(morph)?)
}

/// Serializes one tree. Several tokens may attach to 0 (concatenated
/// training sentences).
pub fn linearize(s: &Sentence, config: &DepSampleConfig) -> Result<(String, String), DepError> {
    let report = validate_tree(s);
    if !report.is_rooted_tree() {
        return Err(DepError::InvalidTree(report.notes.join("; ")));
    }
    let mut source = String::from(DEP_PREFIX);
    let mut target = Vec::with_capacity(s.tokens.len());
    let mut j = [0u8; 4];
    let joiner = config.joiner.encode_utf8(&mut j);
    for t in &s.tokens {
        source.push(' ');
        match config.features {
            DepFeatures::None => {
                clean_field(t.index, &t.form, None)?;
                source.push_str(&t.form);
            }
            DepFeatures::All => {
                let cb = config.tag_codebook.as_ref().ok_or(DepError::NoCodebook)?;
                let upos = t.upos.as_deref().ok_or(DepError::Missing { index: t.index, what: "upos" })?;
                clean_field(t.index, &t.form, Some(config.joiner))?;
                clean_field(t.index, upos, Some(config.joiner))?;
                source.push_str(&[t.form.as_str(), upos, tag_code(&t.morph, cb)?].join(joiner));
            }
        }
        let rel = t.deprel.as_deref().ok_or(DepError::Missing { index: t.index, what: "deprel" })?;
        clean_field(t.index, rel, None)?;
        let rel = match &config.label_codebook {
            Some(cb) => cb.encode_str(rel)?,
            None => rel,
        };
        target.push(format!("{}:{rel}", t.head.expect("complete tree")));
    }
    Ok((source, target.join(" ")))
}

/// Counts of repairs applied to a prediction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairReport {
    /// Tokens without a target unit, attached to the root.
    pub missing_units: usize,
    /// Target units beyond the token count, dropped.
    pub extra_units: usize,
    /// Units without `head:rel` shape or with a non-integer head.
    pub malformed_units: usize,
    pub out_of_range: usize,
    pub self_loops: usize,
    pub unknown_labels: usize,
    pub cycles_broken: usize,
}

impl RepairReport {
    pub fn total(&self) -> usize {
        self.missing_units + self.extra_units + self.malformed_units + self.out_of_range + self.self_loops + self.unknown_labels + self.cycles_broken
    }

    pub fn add(&mut self, o: &RepairReport) {
        self.missing_units += o.missing_units;
        self.extra_units += o.extra_units;
        self.malformed_units += o.malformed_units;
        self.out_of_range += o.out_of_range;
        self.self_loops += o.self_loops;
        self.unknown_labels += o.unknown_labels;
        self.cycles_broken += o.cycles_broken;
    }
}

/// Parses a predicted target against its source. Never fails: anything
/// malformed is attached to the root and counted, so the result is always a
/// tree over the source tokens.
pub fn delinearize(source: &str, target: &str, config: &DepSampleConfig) -> (Sentence, RepairReport) {
    let text = source.strip_prefix(DEP_PREFIX).filter(|r| r.is_empty() || r.starts_with(' ')).unwrap_or(source);
    let units: Vec<&str> = text.split_whitespace().collect();
    let forms: Vec<&str> = units
        .iter()
        .map(|u| match config.features {
            DepFeatures::All => u.split(config.joiner).next().filter(|f| !f.is_empty()).unwrap_or(u),
            DepFeatures::None => u,
        })
        .collect();
    let n = forms.len();
    let mut rep = RepairReport::default();
    let predicted: Vec<&str> = target.split_whitespace().collect();
    rep.extra_units = predicted.len().saturating_sub(n);

    let mut heads = Vec::with_capacity(n);
    let mut rels = Vec::with_capacity(n);
    for i in 0..n {
        let Some(unit) = predicted.get(i) else {
            rep.missing_units += 1;
            heads.push(0);
            rels.push(REPAIR_REL.to_string());
            continue;
        };
        let parsed = unit.split_once(':').and_then(|(h, r)| Some((h.parse::<usize>().ok()?, r)));
        let Some((head, rel)) = parsed.filter(|(_, r)| !r.is_empty()) else {
            rep.malformed_units += 1;
            heads.push(0);
            rels.push(REPAIR_REL.to_string());
            continue;
        };
        let head = if head > n {
            rep.out_of_range += 1;
            0
        } else if head == i + 1 {
            rep.self_loops += 1;
            0
        } else {
            head
        };
        let rel = match &config.label_codebook {
            Some(cb) => match cb.decode(rel) {
                Ok(r) => r.to_string(),
                Err(_) => {
                    rep.unknown_labels += 1;
                    rel.to_string()
                }
            },
            None => rel.to_string(),
        };
        heads.push(head);
        rels.push(rel);
    }
    rep.cycles_broken = break_cycles(&mut heads);

    let tokens = forms
        .iter()
        .zip(heads.iter().zip(rels))
        .enumerate()
        .map(|(i, (form, (&h, rel)))| Token::new(i + 1, *form).with_dep(h, rel))
        .collect();
    let sentence = Sentence::new("", text.trim(), tokens);
    debug_assert!(validate_heads(&sentence.tokens.iter().map(|t| t.head).collect::<Vec<_>>()).is_rooted_tree());
    (sentence, rep)
}

/// Reattaches one node of every cycle to the root; returns how many.
fn break_cycles(heads: &mut [usize]) -> usize {
    // 0 unvisited, 1 on current path, 2 done
    let mut state = vec![0u8; heads.len() + 1];
    state[0] = 2;
    let mut broken = 0;
    for start in 1..=heads.len() {
        let mut path = Vec::new();
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = heads[v - 1];
        }
        if state[v] == 1 {
            heads[v - 1] = 0;
            broken += 1;
        }
        for p in path {
            state[p] = 2;
        }
    }
    broken
}

/// Writes linearized trees with the format header.
pub fn write_dep_samples<W: Write>(out: &mut W, samples: &[(String, String)]) -> io::Result<()> {
    writeln!(out, "{FORMAT_HEADER}")?;
    for (s, t) in samples {
        writeln!(out, "{s}\t{t}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::validate_tree;
    use proptest::prelude::*;

    fn chain() -> Sentence {
        let t = vec![Token::new(1, "x").with_dep(2, "a"), Token::new(2, "y").with_dep(0, "root"), Token::new(3, "z").with_dep(2, "b")];
        Sentence::new("T", "x y z", t)
    }

    fn same_tree(a: &Sentence, b: &Sentence) -> bool {
        a.tokens.len() == b.tokens.len()
            && a.tokens.iter().zip(&b.tokens).all(|(x, y)| x.form == y.form && x.head == y.head && x.deprel == y.deprel)
    }

    #[test]
    fn single_token() {
        let s = Sentence::new("T", "x", vec![Token::new(1, "x").with_dep(0, "root")]);
        assert_eq!(linearize(&s, &DepSampleConfig::default()).unwrap(), ("D x".into(), "0:root".into()));
    }

    #[test]
    fn chain_roundtrip() {
        let cfg = DepSampleConfig::default();
        let (src, tgt) = linearize(&chain(), &cfg).unwrap();
        assert_eq!(tgt, "2:a 0:root 2:b");
        let (back, rep) = delinearize(&src, &tgt, &cfg);
        assert!(same_tree(&back, &chain()));
        assert_eq!(rep.total(), 0);
    }

    #[test]
    fn out_of_range_and_missing() {
        let cfg = DepSampleConfig::default();
        let (s, rep) = delinearize("D x y z", "9:a 0:root 2:b", &cfg);
        assert_eq!(s.tokens[0].head, Some(0));
        assert_eq!((rep.out_of_range, rep.total()), (1, 1));
        let (s, rep) = delinearize("D x y z", "2:a 0:root", &cfg);
        assert_eq!(s.tokens[2].head, Some(0));
        assert_eq!((rep.missing_units, rep.total()), (1, 1));
    }

    #[test]
    fn cycles_and_self_loops() {
        let cfg = DepSampleConfig::default();
        let (s, rep) = delinearize("D a b c", "2:x 3:x 1:x", &cfg);
        assert_eq!(rep.cycles_broken, 1);
        assert!(validate_tree(&s).is_rooted_tree());
        let (_, rep) = delinearize("D a", "1:x", &cfg);
        assert_eq!(rep.self_loops, 1);
    }

    #[test]
    fn all_features() {
        let tag: MorphTag = "Case=Nom".parse().unwrap();
        let freq = [(tag.canonical(), 1u64)].into_iter().collect();
        let cb = Codebook::build(&freq, crate::tagcodec::DEFAULT_ALPHABET).unwrap();
        let cfg = DepSampleConfig { features: DepFeatures::All, tag_codebook: Some(cb), ..Default::default() };
        let mut s = chain();
        assert!(matches!(linearize(&s, &cfg), Err(DepError::Missing { index: 1, what: "upos" })));
        for t in &mut s.tokens {
            t.upos = Some("NOUN".into());
            t.morph = tag.clone();
        }
        s.tokens[2].morph = MorphTag::mantra();
        let (src, tgt) = linearize(&s, &cfg).unwrap();
        assert_eq!(src, "D x_NOUN_f y_NOUN_f z_NOUN_MANTRA");
        let (back, rep) = delinearize(&src, &tgt, &cfg);
        assert!(same_tree(&back, &s) && rep.total() == 0);
    }

    #[test]
    fn label_codebook() {
        let freq = [("root".to_string(), 3u64), ("a".into(), 2), ("b".into(), 1)].into_iter().collect();
        let cb = Codebook::build(&freq, crate::tagcodec::DEFAULT_ALPHABET).unwrap();
        let cfg = DepSampleConfig { label_codebook: Some(cb), ..Default::default() };
        let (src, tgt) = linearize(&chain(), &cfg).unwrap();
        assert_eq!(tgt, "2:q 0:f 2:w");
        assert!(same_tree(&delinearize(&src, &tgt, &cfg).0, &chain()));
    }

    #[test]
    fn rejects_cyclic_input() {
        let t = vec![Token::new(1, "x").with_dep(2, "a"), Token::new(2, "y").with_dep(1, "a")];
        assert!(matches!(linearize(&Sentence::new("T", "x y", t), &DepSampleConfig::default()), Err(DepError::InvalidTree(_))));
    }

    proptest! {
        #[test]
        fn delinearize_total(src in "\\PC{0,40}", tgt in "\\PC{0,60}") {
            let (s, _) = delinearize(&src, &tgt, &DepSampleConfig::default());
            prop_assert!(validate_tree(&s).is_rooted_tree());
            prop_assert!(s.check().is_ok());
        }

        #[test]
        fn numeric_noise_yields_trees(heads in proptest::collection::vec(0usize..12, 1..10), extra in 0usize..3) {
            let n = heads.len().saturating_sub(extra).max(1);
            let src = format!("D {}", (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" "));
            let tgt = heads.iter().map(|h| format!("{h}:r")).collect::<Vec<_>>().join(" ");
            let (s, _) = delinearize(&src, &tgt, &DepSampleConfig::default());
            prop_assert_eq!(s.tokens.len(), n);
            prop_assert!(validate_tree(&s).is_rooted_tree());
        }
    }
}
