//! Whole-tag compression: each canonical morphological tag gets a short code
//! spelled with letters that never occur in IAST text.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, BufRead, Write};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::types::{MorphTag, Sentence};

pub const DEFAULT_ALPHABET: &str = "fqwxzFQWXZ";
pub const MAX_CODE_LEN: usize = 4;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("{tags} tags do not fit into codes of length <= {max_len} over {alphabet} letters (capacity {capacity})")]
    Capacity { tags: usize, alphabet: usize, max_len: usize, capacity: usize },
    #[error("invalid reserved alphabet: {0}")]
    Alphabet(String),
    #[error("unknown tag `{0}`")]
    UnknownTag(String),
    #[error("unknown code `{0}`")]
    UnknownCode(String),
    #[error("compression ratio of an empty corpus is undefined")]
    EmptyCorpus,
    #[error("codebook line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Bijective tag/code table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    alphabet: Vec<char>,
    /// (code, canonical tag) in rank order.
    entries: Vec<(String, String)>,
    by_tag: HashMap<String, usize>,
    by_code: HashMap<String, usize>,
    version: String,
}

fn check_alphabet(alphabet: &str) -> Result<Vec<char>, CodecError> {
    let chars: Vec<char> = alphabet.chars().collect();
    if chars.is_empty() {
        return Err(CodecError::Alphabet("empty".into()));
    }
    for (i, c) in chars.iter().enumerate() {
        if c.is_whitespace() || *c == '\t' {
            return Err(CodecError::Alphabet("whitespace is not allowed".into()));
        }
        if chars[..i].contains(c) {
            return Err(CodecError::Alphabet(format!("`{c}` appears twice")));
        }
    }
    Ok(chars)
}

/// Number of distinct codes of length 1..=max_len.
pub fn capacity(alphabet_len: usize, max_len: usize) -> usize {
    (1..=max_len as u32).map(|k| alphabet_len.saturating_pow(k)).fold(0usize, usize::saturating_add)
}

/// The `rank`-th code: shorter codes first, then lexicographic in alphabet
/// order.
fn nth_code(alphabet: &[char], mut rank: usize) -> String {
    let n = alphabet.len();
    let mut len = 1;
    let mut block = n;
    while rank >= block {
        rank -= block;
        len += 1;
        block *= n;
    }
    let mut digits = vec![0usize; len];
    for d in digits.iter_mut().rev() {
        *d = rank % n;
        rank /= n;
    }
    digits.into_iter().map(|d| alphabet[d]).collect()
}

/// Token frequency of each canonical tag.
pub fn tag_frequencies<'a, I>(sentences: I) -> BTreeMap<String, u64>
where
    I: IntoIterator<Item = &'a Sentence>,
{
    let mut freq = BTreeMap::new();
    for s in sentences {
        for t in &s.tokens {
            *freq.entry(t.morph.canonical()).or_insert(0) += 1;
        }
    }
    freq
}

impl Codebook {
    /// Assigns codes in descending frequency (ties by tag string).
    pub fn build(freq: &BTreeMap<String, u64>, alphabet: &str) -> Result<Self, CodecError> {
        let chars = check_alphabet(alphabet)?;
        let cap = capacity(chars.len(), MAX_CODE_LEN);
        if freq.len() > cap {
            return Err(CodecError::Capacity { tags: freq.len(), alphabet: chars.len(), max_len: MAX_CODE_LEN, capacity: cap });
        }
        let mut ranked: Vec<(&String, &u64)> = freq.iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        let entries = ranked.into_iter().enumerate().map(|(rank, (tag, _))| (nth_code(&chars, rank), tag.clone())).collect();
        Self::from_entries(chars, entries, None)
    }

    fn from_entries(alphabet: Vec<char>, entries: Vec<(String, String)>, line_of: Option<&[usize]>) -> Result<Self, CodecError> {
        let mut by_tag = HashMap::with_capacity(entries.len());
        let mut by_code = HashMap::with_capacity(entries.len());
        for (i, (code, tag)) in entries.iter().enumerate() {
            let line = line_of.map_or(i + 1, |l| l[i]);
            let bad = |msg: String| CodecError::Format { line, msg };
            if code.is_empty() || code.chars().count() > MAX_CODE_LEN {
                return Err(bad(format!("code `{code}` must have 1 to {MAX_CODE_LEN} characters")));
            }
            if let Some(c) = code.chars().find(|c| !alphabet.contains(c)) {
                return Err(bad(format!("code `{code}` uses `{c}` outside the reserved alphabet")));
            }
            if tag.is_empty() || tag.contains(char::is_whitespace) {
                return Err(bad(format!("bad tag `{tag}`")));
            }
            if by_code.insert(code.clone(), i).is_some() {
                return Err(bad(format!("code `{code}` assigned twice")));
            }
            if by_tag.insert(tag.clone(), i).is_some() {
                return Err(bad(format!("tag `{tag}` has two codes")));
            }
        }
        let alphabet_str: String = alphabet.iter().collect();
        let mut h = Sha256::new();
        h.update(alphabet_str.as_bytes());
        h.update(b"\n");
        for (code, tag) in &entries {
            h.update(code.as_bytes());
            h.update(b"\t");
            h.update(tag.as_bytes());
            h.update(b"\n");
        }
        let version = h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect();
        Ok(Codebook { alphabet, entries, by_tag, by_code, version })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn alphabet(&self) -> String {
        self.alphabet.iter().collect()
    }

    pub fn is_reserved(&self, c: char) -> bool {
        self.alphabet.contains(&c)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// (code, canonical tag) pairs in rank order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(c, t)| (c.as_str(), t.as_str()))
    }

    pub fn encode_str(&self, canonical: &str) -> Result<&str, CodecError> {
        self.by_tag.get(canonical).map(|&i| self.entries[i].0.as_str()).ok_or_else(|| CodecError::UnknownTag(canonical.to_string()))
    }

    pub fn encode(&self, tag: &MorphTag) -> Result<&str, CodecError> {
        self.encode_str(&tag.canonical())
    }

    pub fn decode(&self, code: &str) -> Result<&str, CodecError> {
        self.by_code.get(code).map(|&i| self.entries[i].1.as_str()).ok_or_else(|| CodecError::UnknownCode(code.to_string()))
    }

    /// TSV `code<TAB>tag` after a header with version and alphabet.
    pub fn write<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "# codebook version={} alphabet={}", self.version, self.alphabet())?;
        for (code, tag) in &self.entries {
            writeln!(out, "{code}\t{tag}")?;
        }
        Ok(())
    }

    /// Reads a codebook file. Hand edits are fine as long as the table stays
    /// bijective; the version is recomputed from the content.
    pub fn read<R: BufRead>(input: R) -> Result<Self, CodecError> {
        let mut alphabet = None;
        let mut stated_version = None;
        let mut entries = Vec::new();
        let mut lines = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let line_no = n + 1;
            if let Some(header) = line.strip_prefix('#') {
                for kv in header.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("alphabet", a)) => alphabet = Some(check_alphabet(a)?),
                        Some(("version", v)) => stated_version = Some(v.to_string()),
                        _ => {}
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let (code, tag) = line.split_once('\t').ok_or_else(|| CodecError::Format { line: line_no, msg: "expected code<TAB>tag".into() })?;
            entries.push((code.to_string(), tag.to_string()));
            lines.push(line_no);
        }
        let alphabet = match alphabet {
            Some(a) => a,
            None => check_alphabet(DEFAULT_ALPHABET)?,
        };
        let book = Self::from_entries(alphabet, entries, Some(&lines))?;
        if let Some(v) = stated_version {
            if v != book.version {
                log::warn!("codebook header says version {v}, content hashes to {}", book.version);
            }
        }
        Ok(book)
    }
}

/// Occurrences of reserved characters in corpus text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ReservedScan {
    pub occurrences: usize,
    /// Up to ten (sentence ordinal, offending string) examples.
    pub examples: Vec<(usize, String)>,
}

/// Scans surfaces, forms, lemmas and raw text for reserved characters.
pub fn scan_reserved(sentences: &[Sentence], alphabet: &str) -> ReservedScan {
    let reserved: Vec<char> = alphabet.chars().collect();
    let mut scan = ReservedScan::default();
    for (i, s) in sentences.iter().enumerate() {
        let fields = std::iter::once(s.raw_text.as_str()).chain(
            s.tokens.iter().flat_map(|t| [t.surface.as_str(), t.form.as_str(), t.lemma.as_deref().unwrap_or("")]),
        );
        for f in fields {
            let hits = f.chars().filter(|c| reserved.contains(c)).count();
            if hits > 0 {
                scan.occurrences += hits;
                if scan.examples.len() < 10 {
                    scan.examples.push((i, f.to_string()));
                }
            }
        }
    }
    scan
}

/// Token-weighted tag length accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CompressionStats {
    pub tokens: u64,
    pub tag_chars: u64,
    pub code_chars: u64,
}

impl CompressionStats {
    pub fn ratio(&self) -> Result<f64, CodecError> {
        if self.tag_chars == 0 {
            return Err(CodecError::EmptyCorpus);
        }
        Ok(self.code_chars as f64 / self.tag_chars as f64)
    }

    pub fn mean_tag_len(&self) -> Result<f64, CodecError> {
        if self.tokens == 0 {
            return Err(CodecError::EmptyCorpus);
        }
        Ok(self.tag_chars as f64 / self.tokens as f64)
    }
}

pub fn compression_stats<'a, I>(tags: I, codebook: &Codebook) -> Result<CompressionStats, CodecError>
where
    I: IntoIterator<Item = &'a MorphTag>,
{
    let mut st = CompressionStats::default();
    for tag in tags {
        let canonical = tag.canonical();
        let code = codebook.encode_str(&canonical)?;
        st.tokens += 1;
        st.tag_chars += canonical.chars().count() as u64;
        st.code_chars += code.chars().count() as u64;
    }
    Ok(st)
}

/// Total code characters over total canonical tag characters.
pub fn compression_ratio<'a, I>(tags: I, codebook: &Codebook) -> Result<f64, CodecError>
where
    I: IntoIterator<Item = &'a MorphTag>,
{
    compression_stats(tags, codebook)?.ratio()
}
