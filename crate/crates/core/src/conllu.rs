//! CoNLL-U reading and writing with the conventions of the Digital Corpus of
//! Sanskrit, plus order-preserving train/dev/test splits.
//!
//! The FORM column carries the sandhied surface string (`_` when the token is
//! fused into its predecessor); the unsandhied form lives in a MISC key when
//! it differs from the surface. Heuristically reconstructed forms are flagged
//! by another MISC key. Both key names are configurable.

use std::collections::HashSet;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{MorphTag, Sentence, Token, ValidationError};

#[derive(Debug, Error)]
pub enum ConlluError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: expected 10 tab-separated columns, found {found}")]
    Columns { line: usize, found: usize },
    #[error("line {line}: invalid token id `{value}`")]
    Id { line: usize, value: String },
    #[error("line {line}: head `{value}` is not an integer")]
    Head { line: usize, value: String },
    #[error("line {line}: {source}")]
    Feats { line: usize, source: ValidationError },
    #[error("sentence ending at line {line}: {source}")]
    Sentence { line: usize, source: ValidationError },
    #[error("line {line}: tab character in sentence text")]
    TabInText { line: usize },
}

/// Field names for corpus-specific conventions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConlluOptions {
    /// MISC key holding the unsandhied form.
    pub unsandhied_key: String,
    /// MISC key marking a heuristically reconstructed form.
    pub reconstructed_key: String,
    /// Sentence comment key marking an embedded Vedic citation.
    pub mantra_key: String,
    pub text_id_key: String,
    pub category_key: String,
    /// Keep multiword-token and empty-node lines instead of skipping them.
    pub preserve_special: bool,
    /// text_id for sentences without a text_id comment.
    pub default_text_id: String,
}

impl Default for ConlluOptions {
    fn default() -> Self {
        ConlluOptions {
            unsandhied_key: "Unsandhied".into(),
            reconstructed_key: "Reconstructed".into(),
            mantra_key: "mantra".into(),
            text_id_key: "text_id".into(),
            category_key: "category".into(),
            preserve_special: false,
            default_text_id: String::new(),
        }
    }
}

fn truthy(v: &str) -> bool {
    matches!(v.to_ascii_lowercase().as_str(), "yes" | "true" | "1" | "y")
}

fn opt(field: &str) -> Option<String> {
    (field != "_").then(|| field.to_string())
}

/// Counts of lines that were not turned into tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ReadStats {
    pub sentences: usize,
    pub tokens: usize,
    pub skipped_multiword: usize,
    pub skipped_empty_nodes: usize,
}

/// Streaming sentence reader.
pub struct ConlluReader<R> {
    input: R,
    opts: ConlluOptions,
    line_no: usize,
    stats: ReadStats,
    buf: String,
}

impl<R: BufRead> ConlluReader<R> {
    pub fn new(input: R, opts: ConlluOptions) -> Self {
        ConlluReader { input, opts, line_no: 0, stats: ReadStats::default(), buf: String::new() }
    }

    pub fn stats(&self) -> ReadStats {
        self.stats
    }

    fn parse_token(&self, cols: &[&str]) -> Result<Token, ConlluError> {
        let line = self.line_no;
        let index = cols[0].parse::<usize>().map_err(|_| ConlluError::Id { line, value: cols[0].into() })?;
        let head = match cols[6] {
            "_" => None,
            h => Some(h.parse::<usize>().map_err(|_| ConlluError::Head { line, value: h.into() })?),
        };
        let morph = MorphTag::from_str(cols[5]).map_err(|source| ConlluError::Feats { line, source })?;
        let mut unsandhied = None;
        let mut reconstructed = false;
        let mut misc = Vec::new();
        if cols[9] != "_" {
            for item in cols[9].split('|') {
                match item.split_once('=') {
                    Some((k, v)) if k == self.opts.unsandhied_key => unsandhied = Some(v.to_string()),
                    Some((k, v)) if k == self.opts.reconstructed_key => reconstructed = truthy(v),
                    _ => misc.push(item.to_string()),
                }
            }
        }
        let (surface, form) = match unsandhied {
            Some(form) if cols[1] == "_" => (String::new(), form),
            Some(form) => (cols[1].to_string(), form),
            None => (cols[1].to_string(), cols[1].to_string()),
        };
        Ok(Token {
            index,
            surface,
            form,
            lemma: opt(cols[2]),
            morph,
            upos: opt(cols[3]),
            head,
            deprel: opt(cols[7]),
            reconstructed,
            misc,
        })
    }

    fn next_sentence(&mut self) -> Result<Option<Sentence>, ConlluError> {
        let mut sent = Sentence { text_id: self.opts.default_text_id.clone(), ..Default::default() };
        let mut has_text = false;
        let mut started = false;
        loop {
            self.buf.clear();
            let n = self.input.read_line(&mut self.buf)?;
            if n == 0 {
                break;
            }
            self.line_no += 1;
            let line = self.buf.trim_end_matches(['\n', '\r']);
            if line.trim().is_empty() {
                if started {
                    break;
                }
                // a block of comments only, e.g. a file header
                sent = Sentence { text_id: self.opts.default_text_id.clone(), ..Default::default() };
                has_text = false;
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((k, v)) = comment.split_once('=') {
                    let (k, v) = (k.trim(), v.trim());
                    if k == "text" {
                        if v.contains('\t') {
                            return Err(ConlluError::TabInText { line: self.line_no });
                        }
                        sent.raw_text = v.to_string();
                        has_text = true;
                    } else if k == "sent_id" {
                        sent.sent_id = Some(v.to_string());
                    } else if k == self.opts.text_id_key {
                        sent.text_id = v.to_string();
                    } else if k == self.opts.category_key {
                        sent.category = Some(v.to_string());
                    } else if k == self.opts.mantra_key {
                        sent.is_mantra = truthy(v);
                    }
                }
                continue;
            }
            started = true;
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 10 {
                return Err(ConlluError::Columns { line: self.line_no, found: cols.len() });
            }
            if cols[0].contains('-') || cols[0].contains('.') {
                if cols[0].contains('-') {
                    self.stats.skipped_multiword += 1;
                } else {
                    self.stats.skipped_empty_nodes += 1;
                }
                if self.opts.preserve_special {
                    sent.preserved.push((sent.tokens.len(), line.to_string()));
                }
                continue;
            }
            let token = self.parse_token(&cols)?;
            sent.tokens.push(token);
        }
        if !started {
            return Ok(None);
        }
        sent.check().map_err(|source| ConlluError::Sentence { line: self.line_no, source })?;
        if !has_text {
            sent.raw_text = sent.tokens.iter().map(|t| t.surface.as_str()).filter(|s| !s.is_empty()).collect::<Vec<_>>().join(" ");
        }
        self.stats.sentences += 1;
        self.stats.tokens += sent.tokens.len();
        Ok(Some(sent))
    }
}

impl<R: BufRead> Iterator for ConlluReader<R> {
    type Item = Result<Sentence, ConlluError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_sentence().transpose()
    }
}

/// Reads a whole stream.
pub fn read_conllu<R: BufRead>(input: R, opts: &ConlluOptions) -> Result<(Vec<Sentence>, ReadStats), ConlluError> {
    let mut reader = ConlluReader::new(input, opts.clone());
    let sentences = reader.by_ref().collect::<Result<Vec<_>, _>>()?;
    Ok((sentences, reader.stats()))
}

fn or_blank(s: Option<&str>) -> &str {
    match s {
        Some(s) if !s.is_empty() => s,
        _ => "_",
    }
}

/// Writes sentences so that [`read_conllu`] with the same options
/// reproduces them.
pub fn write_conllu<W: Write>(out: &mut W, sentences: &[Sentence], opts: &ConlluOptions) -> io::Result<()> {
    for s in sentences {
        if let Some(id) = &s.sent_id {
            writeln!(out, "# sent_id = {id}")?;
        }
        if !s.text_id.is_empty() && s.text_id != opts.default_text_id {
            writeln!(out, "# {} = {}", opts.text_id_key, s.text_id)?;
        }
        if let Some(c) = &s.category {
            writeln!(out, "# {} = {c}", opts.category_key)?;
        }
        if s.is_mantra {
            writeln!(out, "# {} = yes", opts.mantra_key)?;
        }
        writeln!(out, "# text = {}", s.raw_text)?;
        let mut preserved = s.preserved.iter().peekable();
        for (k, t) in s.tokens.iter().enumerate() {
            while let Some((_, line)) = preserved.next_if(|(anchor, _)| *anchor <= k) {
                writeln!(out, "{line}")?;
            }
            let mut misc = Vec::new();
            if t.form != t.surface {
                misc.push(format!("{}={}", opts.unsandhied_key, t.form));
            }
            if t.reconstructed {
                misc.push(format!("{}=Yes", opts.reconstructed_key));
            }
            misc.extend(t.misc.iter().cloned());
            let head = t.head.map(|h| h.to_string());
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t_\t{}\t{}\t{}\t_\t{}",
                t.index,
                or_blank(Some(&t.surface)),
                or_blank(t.lemma.as_deref()),
                or_blank(t.upos.as_deref()),
                t.morph.canonical(),
                or_blank(head.as_deref()),
                or_blank(t.deprel.as_deref()),
                if misc.is_empty() { "_".to_string() } else { misc.join("|") },
            )?;
        }
        for (_, line) in preserved {
            writeln!(out, "{line}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub split: Split,
    pub text_id: String,
    /// 0-based position in the input corpus.
    pub ordinal: usize,
}

/// Record of which sentences were held out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub corpus_size: usize,
    /// Held-out sentences in corpus order, dev entries first.
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("dev ({dev}) + test ({test}) must be smaller than the corpus ({corpus})")]
    TooLarge { dev: usize, test: usize, corpus: usize },
    #[error("need {needed} eligible sentences for dev+test but only {available} qualify (short by {})", needed - available)]
    Shortfall { needed: usize, available: usize },
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
    #[error("manifest does not match corpus: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl SplitManifest {
    pub fn dev_count(&self) -> usize {
        self.entries.iter().filter(|e| e.split == Split::Dev).count()
    }

    pub fn test_count(&self) -> usize {
        self.entries.iter().filter(|e| e.split == Split::Test).count()
    }

    /// `split<TAB>text_id<TAB>ordinal` lines after a `#` header.
    pub fn write<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "# seed={} corpus_size={} dev={} test={}", self.seed, self.corpus_size, self.dev_count(), self.test_count())?;
        for e in &self.entries {
            writeln!(out, "{}\t{}\t{}", e.split, e.text_id, e.ordinal)?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self, SplitError> {
        let mut m = SplitManifest { seed: 0, corpus_size: 0, entries: Vec::new() };
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let line_no = n + 1;
            if let Some(header) = line.strip_prefix('#') {
                for kv in header.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("seed", v)) => m.seed = v.parse().map_err(|_| SplitError::Manifest { line: line_no, msg: "bad seed".into() })?,
                        Some(("corpus_size", v)) => {
                            m.corpus_size = v.parse().map_err(|_| SplitError::Manifest { line: line_no, msg: "bad corpus_size".into() })?
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(SplitError::Manifest { line: line_no, msg: format!("expected 3 columns, found {}", cols.len()) });
            }
            let split = cols[0].parse::<Split>().map_err(|msg| SplitError::Manifest { line: line_no, msg })?;
            if split == Split::Train {
                return Err(SplitError::Manifest { line: line_no, msg: "train sentences are not listed".into() });
            }
            let ordinal = cols[2].parse().map_err(|_| SplitError::Manifest { line: line_no, msg: format!("bad ordinal `{}`", cols[2]) })?;
            m.entries.push(ManifestEntry { split, text_id: cols[1].to_string(), ordinal });
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
    pub test: Vec<Sentence>,
    pub manifest: SplitManifest,
}

/// Seeded choice of held-out positions from an eligibility mask. Returns
/// sorted dev and test positions.
pub fn select_held_out(eligible: &[bool], dev_size: usize, test_size: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>), SplitError> {
    if dev_size + test_size >= eligible.len() {
        return Err(SplitError::TooLarge { dev: dev_size, test: test_size, corpus: eligible.len() });
    }
    let pool: Vec<usize> = eligible.iter().enumerate().filter(|(_, e)| **e).map(|(i, _)| i).collect();
    let needed = dev_size + test_size;
    if pool.len() < needed {
        return Err(SplitError::Shortfall { needed, available: pool.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index::sample(&mut rng, pool.len(), needed).into_vec();
    let mut dev: Vec<usize> = picked[..dev_size].iter().map(|&i| pool[i]).collect();
    let mut test: Vec<usize> = picked[dev_size..].iter().map(|&i| pool[i]).collect();
    dev.sort_unstable();
    test.sort_unstable();
    Ok((dev, test))
}

/// Splits a corpus, drawing dev and test only from sentences without
/// reconstructed tokens that are not excluded. Positions of the held-out
/// sentences are random under `seed`; every split keeps corpus order.
pub fn make_splits<F>(sentences: Vec<Sentence>, dev_size: usize, test_size: usize, exclude: F, seed: u64) -> Result<CorpusSplit, SplitError>
where
    F: Fn(&Sentence) -> bool,
{
    let eligible: Vec<bool> = sentences.iter().map(|s| !s.has_reconstructed() && !exclude(s)).collect();
    let (dev, test) = select_held_out(&eligible, dev_size, test_size, seed)?;
    let mut entries = Vec::with_capacity(dev.len() + test.len());
    entries.extend(dev.iter().map(|&i| ManifestEntry { split: Split::Dev, text_id: sentences[i].text_id.clone(), ordinal: i }));
    entries.extend(test.iter().map(|&i| ManifestEntry { split: Split::Test, text_id: sentences[i].text_id.clone(), ordinal: i }));
    let manifest = SplitManifest { seed, corpus_size: sentences.len(), entries };
    apply_manifest(sentences, &manifest)
}

/// Replays a manifest on a corpus. Fails if the manifest does not fit the
/// corpus (size, ordinals, text ids) or would put a reconstructed sentence
/// into dev or test.
pub fn apply_manifest(sentences: Vec<Sentence>, manifest: &SplitManifest) -> Result<CorpusSplit, SplitError> {
    if manifest.corpus_size != sentences.len() {
        return Err(SplitError::Mismatch(format!("manifest is for {} sentences, corpus has {}", manifest.corpus_size, sentences.len())));
    }
    let mut assign = vec![Split::Train; sentences.len()];
    let mut used = HashSet::new();
    for e in &manifest.entries {
        let s = sentences.get(e.ordinal).ok_or_else(|| SplitError::Mismatch(format!("ordinal {} out of range", e.ordinal)))?;
        if s.text_id != e.text_id {
            return Err(SplitError::Mismatch(format!("ordinal {} has text_id `{}`, manifest says `{}`", e.ordinal, s.text_id, e.text_id)));
        }
        if s.has_reconstructed() {
            return Err(SplitError::Mismatch(format!("ordinal {} contains reconstructed forms", e.ordinal)));
        }
        if !used.insert(e.ordinal) {
            return Err(SplitError::Mismatch(format!("ordinal {} listed twice", e.ordinal)));
        }
        assign[e.ordinal] = e.split;
    }
    let mut split = CorpusSplit { train: Vec::new(), dev: Vec::new(), test: Vec::new(), manifest: manifest.clone() };
    for (s, a) in sentences.into_iter().zip(assign) {
        match a {
            Split::Train => split.train.push(s),
            Split::Dev => split.dev.push(s),
            Split::Test => split.test.push(s),
        }
    }
    Ok(split)
}
