//! Multitask sample generation: task prefixes, compressed tags, pseudo-
//! paragraphs, the reconstructed-form flag, OCR pairs and the dependency
//! training augmentations.

use std::io::{self, Write};
use std::ops::Range;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sandhi::RuleTable;
use crate::tagcodec::{CodecError, Codebook};
use crate::types::{MorphTag, Paragraph, Sentence, Task, TaskSample, TaskSet, Token, MANTRA_TAG, RECONSTRUCTED_FLAG};

pub const DEFAULT_BUDGET: usize = 512;
pub const DEFAULT_JOINER: char = '_';
pub const OCR_MAX_CHARS: usize = 512;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("token {index} (`{form}`) has no {what}")]
    Missing { index: usize, form: String, what: &'static str },
    #[error("joiner `{joiner}` occurs in `{text}`; choose another joiner")]
    JoinerConflict { joiner: char, text: String },
    #[error("whitespace inside token field `{0}`")]
    Whitespace(String),
    #[error("task M needs a codebook")]
    NoCodebook,
    #[error("OCR samples are built with make_ocr_sample")]
    OcrSpec,
    #[error("OCR sample with empty clean text")]
    EmptyClean,
    #[error("unit has no tokens")]
    EmptyUnit,
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Sentence,
    Paragraph,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub tasks: TaskSet,
    pub granularity: Granularity,
    pub include_reconstructed: bool,
    pub joiner: char,
}

impl TaskSpec {
    pub fn new(tasks: TaskSet) -> Self {
        TaskSpec { tasks, granularity: Granularity::Sentence, include_reconstructed: true, joiner: DEFAULT_JOINER }
    }

    pub fn paragraphs(mut self) -> Self {
        self.granularity = Granularity::Paragraph;
        self
    }
}

fn fits(len: usize, next: usize, budget: usize) -> bool {
    len + 1 + next <= budget
}

/// Greedy packing of sentence positions; a paragraph never crosses a text_id
/// change or an index where `keep` is false.
pub fn paragraph_ranges<F>(sentences: &[Sentence], budget: usize, keep: F) -> Vec<Range<usize>>
where
    F: Fn(&Sentence) -> bool,
{
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut len = 0;
    for (i, s) in sentences.iter().enumerate() {
        if !keep(s) {
            if let Some(st) = start.take() {
                out.push(st..i);
            }
            continue;
        }
        let n = s.char_len();
        match start {
            Some(_) if sentences[i - 1].text_id == s.text_id && fits(len, n, budget) => len += 1 + n,
            Some(st) => {
                out.push(st..i);
                start = Some(i);
                len = n;
            }
            None => {
                start = Some(i);
                len = n;
            }
        }
    }
    if let Some(st) = start {
        out.push(st..sentences.len());
    }
    out
}

/// Pseudo-paragraphs: adjacent sentences of one text packed up to `budget`
/// characters (single-space joins counted). Longer sentences stand alone.
pub fn build_paragraphs(sentences: &[Sentence], budget: usize) -> Vec<Paragraph> {
    paragraph_ranges(sentences, budget, |_| true).into_iter().map(|r| to_paragraph(&sentences[r])).collect()
}

pub fn to_paragraph(sentences: &[Sentence]) -> Paragraph {
    let char_len = sentences.iter().map(Sentence::char_len).sum::<usize>() + sentences.len().saturating_sub(1);
    Paragraph { sentences: sentences.to_vec(), char_len }
}

fn field<'a>(t: &'a Token, value: Option<&'a str>, what: &'static str) -> Result<&'a str, TaskError> {
    value.filter(|v| !v.is_empty()).ok_or_else(|| TaskError::Missing { index: t.index, form: t.form.clone(), what })
}

fn check_unit(text: &str, joiner: char, joined: bool) -> Result<(), TaskError> {
    if text.chars().any(char::is_whitespace) {
        return Err(TaskError::Whitespace(text.to_string()));
    }
    if joined && text.contains(joiner) {
        return Err(TaskError::JoinerConflict { joiner, text: text.to_string() });
    }
    Ok(())
}

fn target_unit(t: &Token, spec: &TaskSpec, codebook: Option<&Codebook>) -> Result<String, TaskError> {
    let joined = spec.tasks.prefix().len() > 1;
    let mut parts: Vec<&str> = Vec::with_capacity(3);
    if spec.tasks.contains(Task::Segment) {
        parts.push(&t.form);
    }
    if spec.tasks.contains(Task::Lemmatize) {
        parts.push(field(t, t.lemma.as_deref(), "lemma")?);
    }
    for p in &parts {
        check_unit(p, spec.joiner, joined)?;
    }
    let code;
    if spec.tasks.contains(Task::Morph) {
        let cb = codebook.ok_or(TaskError::NoCodebook)?;
        code = cb.encode(&t.morph)?;
        parts.push(code);
    }
    let mut j = [0u8; 4];
    Ok(parts.join(spec.joiner.encode_utf8(&mut j)))
}

/// One sample from a unit of one or more consecutive sentences.
pub fn make_sample(unit: &[Sentence], spec: &TaskSpec, codebook: Option<&Codebook>) -> Result<TaskSample, TaskError> {
    if spec.tasks.contains(Task::Ocr) {
        return Err(TaskError::OcrSpec);
    }
    let tokens: Vec<&Token> = unit.iter().flat_map(|s| &s.tokens).collect();
    if tokens.is_empty() {
        return Err(TaskError::EmptyUnit);
    }
    let target = tokens.iter().map(|t| target_unit(t, spec, codebook)).collect::<Result<Vec<_>, _>>()?.join(" ");
    let flag = spec.include_reconstructed && tokens.iter().any(|t| t.reconstructed);
    let text = unit.iter().map(|s| s.raw_text.as_str()).collect::<Vec<_>>().join(" ");
    let source = if flag {
        format!("{RECONSTRUCTED_FLAG} {} {text}", spec.tasks.prefix())
    } else {
        format!("{} {text}", spec.tasks.prefix())
    };
    Ok(TaskSample { tasks: spec.tasks, source, target, reconstructed_flag: flag })
}

pub fn make_sentence_sample(s: &Sentence, spec: &TaskSpec, codebook: Option<&Codebook>) -> Result<TaskSample, TaskError> {
    make_sample(std::slice::from_ref(s), spec, codebook)
}

pub fn make_paragraph_sample(p: &Paragraph, spec: &TaskSpec, codebook: Option<&Codebook>) -> Result<TaskSample, TaskError> {
    make_sample(&p.sentences, spec, codebook)
}

/// Cuts `text` to at most `max` characters at the last whitespace that
/// fits; a single over-long word is cut hard.
pub fn truncate_at_whitespace(text: &str, max: usize) -> &str {
    match text.char_indices().nth(max) {
        None => text,
        Some((cut, _)) => {
            let head = &text[..cut];
            // Keep the whole head if the next char is itself a break.
            if text[cut..].starts_with(char::is_whitespace) {
                return head.trim_end();
            }
            match head.rfind(char::is_whitespace) {
                Some(ws) => head[..ws].trim_end(),
                None => head,
            }
        }
    }
}

pub fn make_ocr_sample(noisy: &str, clean: &str) -> Result<TaskSample, TaskError> {
    if clean.trim().is_empty() {
        return Err(TaskError::EmptyClean);
    }
    let tasks = TaskSet::new(&[Task::Ocr]).expect("O alone is valid");
    Ok(TaskSample { tasks, source: format!("O {noisy}"), target: clean.to_string(), reconstructed_flag: false })
}

/// OCR pair whose source (prefix included) and target each stay within
/// `max_chars`, cut at whitespace.
pub fn make_ocr_sample_truncated(noisy: &str, clean: &str, max_chars: usize) -> Result<TaskSample, TaskError> {
    let noisy = truncate_at_whitespace(noisy, max_chars.saturating_sub(2));
    let clean = truncate_at_whitespace(clean, max_chars);
    make_ocr_sample(noisy, clean)
}

/// Replaces POS and morphology of mantra sentences with the reserved tag.
pub fn mask_mantras(mut s: Sentence) -> Sentence {
    if s.is_mantra {
        for t in &mut s.tokens {
            t.upos = Some(MANTRA_TAG.to_string());
            t.morph = MorphTag::mantra();
        }
    }
    s
}

/// Concatenates sentences into one, shifting indices and heads. Each part
/// keeps its root attached to 0.
pub fn concat_sentences(parts: &[&Sentence]) -> Sentence {
    let mut tokens = Vec::new();
    for s in parts {
        let offset = tokens.len();
        for t in &s.tokens {
            let mut t = t.clone();
            t.index += offset;
            t.head = t.head.map(|h| if h == 0 { 0 } else { h + offset });
            tokens.push(t);
        }
    }
    let first = parts.first().copied();
    Sentence {
        tokens,
        sent_id: None,
        text_id: first.map(|s| s.text_id.clone()).unwrap_or_default(),
        category: first.and_then(|s| s.category.clone()),
        raw_text: parts.iter().map(|s| s.raw_text.as_str()).collect::<Vec<_>>().join(" "),
        is_mantra: false,
        preserved: Vec::new(),
    }
}

/// Returns the input followed by one synthetic sentence per input sentence,
/// each the concatenation of k distinct, uniformly drawn sentences with k
/// uniform in 2..=max_concat.
pub fn augment_dep_training(sentences: &[Sentence], max_concat: usize, seed: u64) -> Vec<Sentence> {
    let mut out = sentences.to_vec();
    let max_k = max_concat.min(sentences.len());
    if max_k < 2 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in 0..sentences.len() {
        let k = rng.random_range(2..=max_k);
        let picks = index::sample(&mut rng, sentences.len(), k);
        let parts: Vec<&Sentence> = picks.iter().map(|i| &sentences[i]).collect();
        let mut s = concat_sentences(&parts);
        s.sent_id = Some(format!("aug-{}", n + 1));
        out.push(s);
    }
    out
}

/// What happened while generating a sample file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GenerationReport {
    pub units: usize,
    pub samples: usize,
    pub flagged: usize,
    /// Units dropped because they contain reconstructed forms.
    pub dropped_reconstructed: usize,
    /// Segmentation samples whose forms do not re-synthesize to the text.
    pub sandhi_inconsistent: usize,
    pub inconsistent_examples: Vec<String>,
}

/// Units of the corpus under `spec`. Without reconstructed forms, paragraphs
/// are packed over the remaining contiguous runs.
pub fn units<'a>(sentences: &'a [Sentence], spec: &TaskSpec, budget: usize) -> (Vec<&'a [Sentence]>, usize) {
    let keep = |s: &Sentence| spec.include_reconstructed || !s.has_reconstructed();
    let dropped = sentences.iter().filter(|s| !keep(s)).count();
    let units = match spec.granularity {
        Granularity::Sentence => sentences.iter().filter(|s| keep(s)).map(std::slice::from_ref).collect(),
        Granularity::Paragraph => paragraph_ranges(sentences, budget, keep).into_iter().map(|r| &sentences[r]).collect(),
    };
    (units, dropped)
}

/// Builds all samples for a corpus, in corpus order, using up to `jobs`
/// threads. With a rule table, segmentation targets are checked against the
/// sandhied text and mismatches are counted (the samples are kept).
pub fn generate_samples(
    sentences: &[Sentence],
    spec: &TaskSpec,
    budget: usize,
    codebook: Option<&Codebook>,
    rules: Option<&RuleTable>,
    jobs: usize,
) -> Result<(Vec<TaskSample>, GenerationReport), TaskError> {
    let (units, dropped) = units(sentences, spec, budget);
    let check = rules.filter(|_| spec.tasks.contains(Task::Segment));
    let work = |chunk: &[&[Sentence]]| -> Result<Vec<(TaskSample, bool)>, TaskError> {
        chunk
            .iter()
            .map(|u| {
                let sample = make_sample(u, spec, codebook)?;
                let consistent = check.is_none_or(|r| {
                    u.iter().all(|s| r.validate_segmentation(&s.raw_text, &s.tokens.iter().map(|t| t.form.as_str()).collect::<Vec<_>>()))
                });
                Ok((sample, consistent))
            })
            .collect()
    };
    let jobs = jobs.max(1);
    let chunk = units.len().div_ceil(jobs).max(1);
    let results: Vec<Result<Vec<(TaskSample, bool)>, TaskError>> = if jobs == 1 {
        vec![work(&units)]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = units.chunks(chunk).map(|c| scope.spawn(move || work(c))).collect();
            handles.into_iter().map(|h| h.join().expect("sample worker panicked")).collect()
        })
    };
    let mut report = GenerationReport { units: units.len(), dropped_reconstructed: dropped, ..Default::default() };
    let mut samples = Vec::with_capacity(units.len());
    for part in results {
        for (sample, consistent) in part? {
            if !consistent {
                report.sandhi_inconsistent += 1;
                if report.inconsistent_examples.len() < 20 {
                    report.inconsistent_examples.push(sample.source.clone());
                }
            }
            report.flagged += sample.reconstructed_flag as usize;
            samples.push(sample);
        }
    }
    report.samples = samples.len();
    if report.sandhi_inconsistent > 0 {
        log::warn!("{} of {} samples have forms that do not re-synthesize to the surface text", report.sandhi_inconsistent, report.samples);
    }
    Ok((samples, report))
}

/// `source<TAB>target` lines, LF terminated.
pub fn write_samples<W: Write>(out: &mut W, samples: &[TaskSample]) -> io::Result<()> {
    for s in samples {
        writeln!(out, "{}\t{}", s.source, s.target)?;
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum SampleFileError {
    #[error("line {line}: expected source<TAB>target")]
    Format { line: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Reads `source<TAB>target` lines; `#` lines are headers.
pub fn read_samples<R: io::BufRead>(input: R) -> Result<Vec<(String, String)>, SampleFileError> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let (s, t) = line.split_once('\t').ok_or(SampleFileError::Format { line: n + 1 })?;
        if t.contains('\t') {
            return Err(SampleFileError::Format { line: n + 1 });
        }
        out.push((s.to_string(), t.to_string()));
    }
    Ok(out)
}
