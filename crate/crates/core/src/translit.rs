//! Transliteration between Devanagari, IAST and SLP1.
//!
//! All three scripts are mapped through a shared phoneme sequence derived from
//! one master table (see `data/translit.tsv`). IAST input is NFC-normalized
//! before parsing. Characters outside a script's repertoire that are not
//! letters (digits, punctuation, whitespace) pass through unchanged.
//!
//! Two IAST spellings keep the mapping lossless where plain IAST is
//! ambiguous: a diaeresis marks vowel hiatus (`aï`, `aü`) and a middle dot
//! separates a stop from a following `h` (`k·h` as opposed to `kh`).

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

const MASTER_TABLE: &str = include_str!("../data/translit.tsv");

const VIRAMA: char = '\u{094D}';
const HIATUS_I: char = 'ï';
const HIATUS_U: char = 'ü';
const CLUSTER_SEP: char = '·';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Script {
    Devanagari,
    Iast,
    Slp1,
}

impl FromStr for Script {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "devanagari" | "deva" | "dev" => Ok(Script::Devanagari),
            "iast" => Ok(Script::Iast),
            "slp1" | "slp" => Ok(Script::Slp1),
            other => Err(format!("unknown script `{other}`")),
        }
    }
}

impl fmt::Display for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Script::Devanagari => "Devanagari",
            Script::Iast => "IAST",
            Script::Slp1 => "SLP1",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranslitError {
    #[error("{script}: cannot map `{ch}` (U+{:04X}) at codepoint offset {offset}", *ch as u32)]
    Unmappable { script: Script, offset: usize, ch: char },
    #[error("transliteration table line {line}: {msg}")]
    Table { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Vowel,
    Consonant,
    Sign,
}

#[derive(Debug, Clone)]
struct Entry {
    dev: String,
    iast: String,
    slp1: String,
    sign: Option<String>,
    kind: Kind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unit {
    Phoneme(usize),
    Pass(char),
}

/// Longest-match lookup from strings to entry indices.
#[derive(Debug, Clone, Default)]
struct Matcher {
    map: HashMap<String, usize>,
    max_chars: usize,
}

impl Matcher {
    fn insert(&mut self, key: &str, idx: usize) {
        self.max_chars = self.max_chars.max(key.chars().count());
        self.map.insert(key.to_string(), idx);
    }

    /// Longest key that prefixes `chars[at..]`, with its length in chars.
    fn longest(&self, chars: &[char], at: usize) -> Option<(usize, usize)> {
        let avail = (chars.len() - at).min(self.max_chars);
        let mut buf = String::new();
        let mut best = None;
        for (n, c) in chars[at..at + avail].iter().enumerate() {
            buf.push(*c);
            if let Some(idx) = self.map.get(&buf) {
                best = Some((*idx, n + 1));
            }
        }
        best
    }
}

/// A loaded transliteration table; cheap to share, read-only after load.
#[derive(Debug, Clone)]
pub struct Transliterator {
    entries: Vec<Entry>,
    iast: Matcher,
    slp1: Matcher,
    dev: HashMap<char, usize>,
    dev_signs: HashMap<char, usize>,
    vowel_a: usize,
    vowel_i: usize,
    vowel_u: usize,
    cons_h: usize,
    unaspirated_stops: Vec<usize>,
}

fn dev_kind(c: char) -> Kind {
    match c {
        '\u{0904}'..='\u{0914}' | '\u{0960}' | '\u{0961}' => Kind::Vowel,
        '\u{0915}'..='\u{0939}' | '\u{0958}'..='\u{095F}' => Kind::Consonant,
        _ => Kind::Sign,
    }
}

impl Transliterator {
    /// Parses a master table: Devanagari, IAST, SLP1 and an optional dependent
    /// vowel sign per row; `#` starts a comment line.
    pub fn from_tsv(text: &str) -> Result<Self, TranslitError> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 3 || cols.len() > 4 || cols[..3].iter().any(|c| c.is_empty()) {
                return Err(TranslitError::Table { line: line_no, msg: "expected 3 or 4 non-empty columns".into() });
            }
            let dev: String = cols[0].nfc().collect();
            let first = dev.chars().next().unwrap();
            let kind = dev_kind(first);
            let sign = cols.get(3).map(|s| s.to_string()).filter(|s| !s.is_empty());
            if sign.is_some() && kind != Kind::Vowel {
                return Err(TranslitError::Table { line: line_no, msg: "vowel sign on a non-vowel row".into() });
            }
            entries.push(Entry { dev, iast: cols[1].nfc().collect(), slp1: cols[2].to_string(), sign, kind });
        }

        let mut iast = Matcher::default();
        let mut slp1 = Matcher::default();
        let mut dev = HashMap::new();
        let mut dev_signs = HashMap::new();
        for (idx, e) in entries.iter().enumerate() {
            if iast.map.contains_key(&e.iast) || slp1.map.contains_key(&e.slp1) {
                return Err(TranslitError::Table { line: 0, msg: format!("duplicate mapping for `{}`", e.iast) });
            }
            iast.insert(&e.iast, idx);
            slp1.insert(&e.slp1, idx);
            let mut chars = e.dev.chars();
            let c = chars.next().unwrap();
            if chars.next().is_some() {
                return Err(TranslitError::Table { line: 0, msg: format!("Devanagari grapheme `{}` must be one codepoint", e.dev) });
            }
            dev.insert(c, idx);
            if let Some(s) = &e.sign {
                dev_signs.insert(s.chars().next().unwrap(), idx);
            }
        }
        let find = |s: &str| {
            iast.map.get(s).copied().ok_or_else(|| TranslitError::Table { line: 0, msg: format!("table lacks `{s}`") })
        };
        let vowel_a = find("a")?;
        let vowel_i = find("i")?;
        let vowel_u = find("u")?;
        let cons_h = find("h")?;
        let unaspirated_stops = ["k", "g", "c", "j", "ṭ", "ḍ", "t", "d", "p", "b"]
            .iter()
            .filter_map(|s| iast.map.get(*s).copied())
            .collect();
        Ok(Transliterator { entries, iast, slp1, dev, dev_signs, vowel_a, vowel_i, vowel_u, cons_h, unaspirated_stops })
    }

    /// The table shipped with the crate.
    pub fn builtin() -> &'static Transliterator {
        static T: OnceLock<Transliterator> = OnceLock::new();
        T.get_or_init(|| Transliterator::from_tsv(MASTER_TABLE).expect("builtin table is valid"))
    }

    pub fn transliterate(&self, text: &str, from: Script, to: Script) -> Result<String, TranslitError> {
        let units = match from {
            Script::Iast => self.parse_iast(text)?,
            Script::Slp1 => self.parse_slp1(text)?,
            Script::Devanagari => self.parse_dev(text)?,
        };
        Ok(match to {
            Script::Iast => self.render_iast(&units),
            Script::Slp1 => self.render_slp1(&units),
            Script::Devanagari => self.render_dev(&units),
        })
    }

    fn parse_iast(&self, text: &str) -> Result<Vec<Unit>, TranslitError> {
        let chars: Vec<char> = text.nfc().collect();
        let mut out = Vec::with_capacity(chars.len());
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c == HIATUS_I || c == HIATUS_U {
                out.push(Unit::Phoneme(if c == HIATUS_I { self.vowel_i } else { self.vowel_u }));
                i += 1;
                continue;
            }
            if c == CLUSTER_SEP
                && chars.get(i + 1) == Some(&'h')
                && matches!(out.last(), Some(Unit::Phoneme(p)) if self.unaspirated_stops.contains(p))
            {
                i += 1;
                continue;
            }
            if let Some((idx, len)) = self.iast.longest(&chars, i) {
                out.push(Unit::Phoneme(idx));
                i += len;
                continue;
            }
            if c.is_alphabetic() || is_combining(c) {
                return Err(TranslitError::Unmappable { script: Script::Iast, offset: i, ch: c });
            }
            out.push(Unit::Pass(c));
            i += 1;
        }
        Ok(out)
    }

    fn parse_slp1(&self, text: &str) -> Result<Vec<Unit>, TranslitError> {
        let chars: Vec<char> = text.chars().collect();
        let mut out = Vec::with_capacity(chars.len());
        let mut i = 0;
        while i < chars.len() {
            if let Some((idx, len)) = self.slp1.longest(&chars, i) {
                out.push(Unit::Phoneme(idx));
                i += len;
                continue;
            }
            let c = chars[i];
            if c.is_alphabetic() || is_combining(c) {
                return Err(TranslitError::Unmappable { script: Script::Slp1, offset: i, ch: c });
            }
            out.push(Unit::Pass(c));
            i += 1;
        }
        Ok(out)
    }

    fn parse_dev(&self, text: &str) -> Result<Vec<Unit>, TranslitError> {
        let chars: Vec<char> = text.chars().collect();
        let mut out = Vec::with_capacity(chars.len() * 2);
        let mut i = 0;
        let err = |offset: usize, ch: char| TranslitError::Unmappable { script: Script::Devanagari, offset, ch };
        while i < chars.len() {
            let c = chars[i];
            match self.dev.get(&c) {
                Some(&idx) if self.entries[idx].kind == Kind::Consonant => {
                    out.push(Unit::Phoneme(idx));
                    match chars.get(i + 1) {
                        Some(&VIRAMA) => i += 2,
                        Some(next) if self.dev_signs.contains_key(next) => {
                            out.push(Unit::Phoneme(self.dev_signs[next]));
                            i += 2;
                        }
                        _ => {
                            out.push(Unit::Phoneme(self.vowel_a));
                            i += 1;
                        }
                    }
                }
                Some(&idx) => {
                    out.push(Unit::Phoneme(idx));
                    i += 1;
                }
                None if ('\u{0966}'..='\u{096F}').contains(&c) => {
                    out.push(Unit::Pass(c));
                    i += 1;
                }
                None if ('\u{0900}'..='\u{097F}').contains(&c) => return Err(err(i, c)),
                None => {
                    out.push(Unit::Pass(c));
                    i += 1;
                }
            }
        }
        Ok(out)
    }

    fn render_iast(&self, units: &[Unit]) -> String {
        let mut out = String::new();
        for (k, u) in units.iter().enumerate() {
            match *u {
                Unit::Pass(c) => out.push(c),
                Unit::Phoneme(idx) => {
                    let prev = if k > 0 { Some(units[k - 1]) } else { None };
                    if prev == Some(Unit::Phoneme(self.vowel_a)) && idx == self.vowel_i {
                        out.push(HIATUS_I);
                    } else if prev == Some(Unit::Phoneme(self.vowel_a)) && idx == self.vowel_u {
                        out.push(HIATUS_U);
                    } else if idx == self.cons_h
                        && matches!(prev, Some(Unit::Phoneme(p)) if self.unaspirated_stops.contains(&p))
                    {
                        out.push(CLUSTER_SEP);
                        out.push_str(&self.entries[idx].iast);
                    } else {
                        out.push_str(&self.entries[idx].iast);
                    }
                }
            }
        }
        out
    }

    fn render_slp1(&self, units: &[Unit]) -> String {
        let mut out = String::new();
        for u in units {
            match *u {
                Unit::Pass(c) => out.push(c),
                Unit::Phoneme(idx) => out.push_str(&self.entries[idx].slp1),
            }
        }
        out
    }

    fn render_dev(&self, units: &[Unit]) -> String {
        let mut out = String::new();
        let mut k = 0;
        while k < units.len() {
            match units[k] {
                Unit::Pass(c) => out.push(c),
                Unit::Phoneme(idx) => {
                    let e = &self.entries[idx];
                    out.push_str(&e.dev);
                    if e.kind == Kind::Consonant {
                        match units.get(k + 1) {
                            Some(Unit::Phoneme(v)) if *v == self.vowel_a => k += 1,
                            Some(Unit::Phoneme(v)) if self.entries[*v].sign.is_some() => {
                                out.push_str(self.entries[*v].sign.as_deref().unwrap());
                                k += 1;
                            }
                            _ => out.push(VIRAMA),
                        }
                    }
                }
            }
            k += 1;
        }
        out
    }
}

fn is_combining(c: char) -> bool {
    matches!(c, '\u{0300}'..='\u{036F}' | '\u{1AB0}'..='\u{1AFF}' | '\u{1DC0}'..='\u{1DFF}' | '\u{20D0}'..='\u{20FF}')
}

/// Transliterates with the builtin table.
pub fn transliterate(text: &str, from: Script, to: Script) -> Result<String, TranslitError> {
    Transliterator::builtin().transliterate(text, from, to)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ByteStats {
    pub chars: usize,
    pub utf8_bytes: usize,
}

/// Codepoint and UTF-8 byte counts. The script is informational only; the
/// counts do not depend on it.
pub fn byte_stats(text: &str, _script: Script) -> ByteStats {
    ByteStats { chars: text.chars().count(), utf8_bytes: text.len() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_script_rejected_in_iast() {
        let err = transliterate("मata", Script::Iast, Script::Slp1).unwrap_err();
        assert_eq!(err, TranslitError::Unmappable { script: Script::Iast, offset: 0, ch: 'म' });
    }

    #[test]
    fn iast_to_slp1_long_vowels() {
        assert_eq!(transliterate("mātā", Script::Iast, Script::Slp1).unwrap(), "mAtA");
        assert_eq!(transliterate("mAtA", Script::Slp1, Script::Iast).unwrap(), "mātā");
    }

    #[test]
    fn ascii_passes_through_devanagari() {
        let s = "Hello, world 123!";
        assert_eq!(transliterate(s, Script::Devanagari, Script::Iast).unwrap(), s);
    }

    #[test]
    fn devanagari_words() {
        let dev = "युवोर्हि मातादितिः";
        let iast = transliterate(dev, Script::Devanagari, Script::Iast).unwrap();
        assert_eq!(iast, "yuvorhi mātāditiḥ");
        assert_eq!(transliterate(&iast, Script::Iast, Script::Devanagari).unwrap(), dev);
        assert_eq!(transliterate(&iast, Script::Iast, Script::Slp1).unwrap(), "yuvorhi mAtAditiH");
    }

    #[test]
    fn hiatus_and_cluster_marks() {
        // ka + independent i, and k + virama + h
        let dev = "कइ क्ह";
        let iast = transliterate(dev, Script::Devanagari, Script::Iast).unwrap();
        assert_eq!(iast, "kaï k·ha");
        assert_eq!(transliterate(&iast, Script::Iast, Script::Devanagari).unwrap(), dev);
        assert_eq!(transliterate("kai", Script::Iast, Script::Devanagari).unwrap(), "कै");
    }

    #[test]
    fn decomposed_iast_is_normalized() {
        let decomposed = "ma\u{0304}ta\u{0304}";
        assert_eq!(transliterate(decomposed, Script::Iast, Script::Slp1).unwrap(), "mAtA");
    }

    #[test]
    fn stray_vowel_sign_is_an_error() {
        let err = transliterate("अ\u{093F}", Script::Devanagari, Script::Iast).unwrap_err();
        assert!(matches!(err, TranslitError::Unmappable { offset: 1, .. }));
    }

    #[test]
    fn danda_and_avagraha() {
        let dev = "सो ऽपि ॥";
        let iast = transliterate(dev, Script::Devanagari, Script::Iast).unwrap();
        assert_eq!(iast, "so 'pi ||");
        assert_eq!(transliterate(&iast, Script::Iast, Script::Devanagari).unwrap(), dev);
    }

    #[test]
    fn byte_stats_counts() {
        assert_eq!(byte_stats("", Script::Iast), ByteStats { chars: 0, utf8_bytes: 0 });
        assert_eq!(byte_stats("a", Script::Iast), ByteStats { chars: 1, utf8_bytes: 1 });
        // U+0101 encodes as C4 81
        assert_eq!("ā".as_bytes(), &[0xC4, 0x81]);
        assert_eq!(byte_stats("ā", Script::Iast), ByteStats { chars: 1, utf8_bytes: 2 });
    }

    #[test]
    fn table_errors_are_reported() {
        assert!(matches!(Transliterator::from_tsv("क\tk\n"), Err(TranslitError::Table { line: 1, .. })));
    }

    use proptest::prelude::*;

    const SYLLABLES: [&str; 24] = ["ka", "kha", "gā", "ṅi", "cī", "ju", "ñū", "ṭṛ", "ḍe", "ṇai", "to", "dau", "na", "pi", "bh", "ma", "ya", "ra", "la", "va", "śa", "ṣa", "sa", "ha"];
    const FINALS: [&str; 4] = ["", "ḥ", "ṃ", "t"];

    fn word() -> impl Strategy<Value = String> {
        (proptest::collection::vec(proptest::sample::select(&SYLLABLES[..]), 1..5), proptest::sample::select(&FINALS[..]))
            .prop_map(|(s, f)| format!("{}{f}", s.concat()))
    }

    proptest! {
        #[test]
        fn iast_round_trips(words in proptest::collection::vec(word(), 1..5)) {
            let text = words.join(" ");
            for via in [Script::Slp1, Script::Devanagari] {
                let there = transliterate(&text, Script::Iast, via).unwrap();
                prop_assert_eq!(transliterate(&there, via, Script::Iast).unwrap(), text.clone());
            }
            let slp = transliterate(&text, Script::Iast, Script::Slp1).unwrap();
            prop_assert!(slp.is_ascii());
        }
    }
}
