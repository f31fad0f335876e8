//! Evaluation metrics and the structural diff report.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::deplin::RepairReport;
use crate::types::{split_source, Sentence};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("{pred} predictions for {gold} references")]
    LengthMismatch { pred: usize, gold: usize },
    #[error("sentence {sentence}: {pred} predicted tokens for {gold} gold tokens")]
    TokenCountMismatch { sentence: usize, pred: usize, gold: usize },
    #[error("{0}: nothing to score")]
    Empty(&'static str),
}

/// One metric with the counts it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    /// Percentage.
    pub value: f64,
    pub numerator: u64,
    pub denominator: u64,
    /// (numerator, denominator) per corpus category.
    pub by_category: BTreeMap<String, (u64, u64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repairs: Option<RepairReport>,
}

#[derive(Debug, Default)]
struct Tally {
    num: u64,
    den: u64,
    cats: BTreeMap<String, (u64, u64)>,
}

impl Tally {
    fn add(&mut self, category: Option<&str>, num: u64, den: u64) {
        self.num += num;
        self.den += den;
        if let Some(c) = category {
            let e = self.cats.entry(c.to_string()).or_default();
            e.0 += num;
            e.1 += den;
        }
    }

    fn report(self, metric: &'static str) -> Result<EvalReport, MetricError> {
        if self.den == 0 {
            return Err(MetricError::Empty(metric));
        }
        Ok(EvalReport {
            metric: metric.to_string(),
            value: 100.0 * self.num as f64 / self.den as f64,
            numerator: self.num,
            denominator: self.den,
            by_category: self.cats,
            repairs: None,
        })
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<8} {:>7.2}  ({}/{})", self.metric, self.value, self.numerator, self.denominator)?;
        for (c, (n, d)) in &self.by_category {
            write!(f, "\n  {c:<14} {:>7.2}  ({n}/{d})", 100.0 * *n as f64 / *d as f64)?;
        }
        if let Some(r) = &self.repairs {
            write!(f, "\n  repairs {}", r.total())?;
        }
        Ok(())
    }
}

/// `metric.key=value` lines for a set of reports.
pub fn render_kv(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let m = r.metric.to_lowercase();
        let _ = writeln!(out, "{m}.value={:.4}", r.value);
        let _ = writeln!(out, "{m}.numerator={}", r.numerator);
        let _ = writeln!(out, "{m}.denominator={}", r.denominator);
        for (c, (n, d)) in &r.by_category {
            let _ = writeln!(out, "{m}.category.{c}={n}/{d}");
        }
        if let Some(rep) = &r.repairs {
            let _ = writeln!(out, "{m}.repairs={}", rep.total());
        }
    }
    out
}

fn check_len(pred: usize, gold: usize) -> Result<(), MetricError> {
    if pred != gold {
        return Err(MetricError::LengthMismatch { pred, gold });
    }
    Ok(())
}

/// NFC, trimmed, whitespace runs collapsed to one space.
pub fn normalize(s: &str) -> String {
    s.nfc().collect::<String>().split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PmOptions {
    pub normalize: bool,
}

impl Default for PmOptions {
    fn default() -> Self {
        PmOptions { normalize: true }
    }
}

/// Share of exactly matching strings. `categories`, if given, is aligned
/// with the inputs.
pub fn perfect_match<S: AsRef<str>>(pred: &[S], gold: &[S], categories: Option<&[Option<String>]>, opts: PmOptions) -> Result<EvalReport, MetricError> {
    check_len(pred.len(), gold.len())?;
    let mut t = Tally::default();
    for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
        let hit = if opts.normalize { normalize(p.as_ref()) == normalize(g.as_ref()) } else { p.as_ref() == g.as_ref() };
        t.add(categories.and_then(|c| c.get(i)?.as_deref()), hit as u64, 1);
    }
    t.report("PM")
}

/// Unlabeled and labeled attachment scores, micro-averaged over tokens.
pub fn uas_las(pred: &[Sentence], gold: &[Sentence]) -> Result<(EvalReport, EvalReport), MetricError> {
    check_len(pred.len(), gold.len())?;
    let mut uas = Tally::default();
    let mut las = Tally::default();
    for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.tokens.len() != g.tokens.len() {
            return Err(MetricError::TokenCountMismatch { sentence: i, pred: p.tokens.len(), gold: g.tokens.len() });
        }
        let (mut u, mut l) = (0, 0);
        for (pt, gt) in p.tokens.iter().zip(&g.tokens) {
            if pt.head.is_some() && pt.head == gt.head {
                u += 1;
                l += (pt.deprel == gt.deprel) as u64;
            }
        }
        let cat = g.category.as_deref();
        uas.add(cat, u, g.tokens.len() as u64);
        las.add(cat, l, g.tokens.len() as u64);
    }
    Ok((uas.report("UAS")?, las.report("LAS")?))
}

/// Edit distance with unit costs, two rows.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.len() < b.len() {
        return levenshtein(b, a);
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + (x != y) as usize;
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Character and word error rates over NFC strings, ×100.
pub fn cer_wer<S: AsRef<str>>(pred: &[S], gold: &[S]) -> Result<(EvalReport, EvalReport), MetricError> {
    check_len(pred.len(), gold.len())?;
    let mut cer = Tally::default();
    let mut wer = Tally::default();
    for (p, g) in pred.iter().zip(gold) {
        let pc: Vec<char> = p.as_ref().nfc().collect();
        let gc: Vec<char> = g.as_ref().nfc().collect();
        cer.add(None, levenshtein(&pc, &gc) as u64, gc.len() as u64);
        let ps: String = pc.iter().collect();
        let gs: String = gc.iter().collect();
        let pw: Vec<&str> = ps.split_whitespace().collect();
        let gw: Vec<&str> = gs.split_whitespace().collect();
        wer.add(None, levenshtein(&pw, &gw) as u64, gw.len() as u64);
    }
    Ok((cer.report("CER")?, wer.report("WER")?))
}

/// Share of exactly matching lemmas over aligned token sequences.
pub fn lemma_accuracy<S: AsRef<str>>(pred: &[S], gold: &[S]) -> Result<EvalReport, MetricError> {
    check_len(pred.len(), gold.len())?;
    let mut t = Tally::default();
    for (p, g) in pred.iter().zip(gold) {
        t.add(None, (p.as_ref() == g.as_ref()) as u64, 1);
    }
    t.report("LemmaAcc")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffCategory {
    SegmentationMismatch,
    MissingWord,
    AddedWord,
    LemmaMismatch,
    TagMismatch,
}

impl fmt::Display for DiffCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiffCategory::SegmentationMismatch => "segmentation-mismatch",
            DiffCategory::MissingWord => "missing-word",
            DiffCategory::AddedWord => "added-word",
            DiffCategory::LemmaMismatch => "lemma-mismatch",
            DiffCategory::TagMismatch => "tag-mismatch",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffEntry {
    /// Position of the sample in the input.
    pub sample: usize,
    /// Index of the first gold unit involved (or the insertion point).
    pub position: usize,
    pub category: DiffCategory,
    pub gold: String,
    pub pred: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffReport {
    pub entries: Vec<DiffEntry>,
    pub counts: BTreeMap<DiffCategory, usize>,
}

impl DiffReport {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn push(&mut self, e: DiffEntry) {
        *self.counts.entry(e.category).or_default() += 1;
        self.entries.push(e);
    }

    /// Counts followed by one tab-separated line per entry.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (c, n) in &self.counts {
            let _ = writeln!(out, "# {c}={n}");
        }
        for e in &self.entries {
            let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", e.sample, e.position, e.category, e.gold, e.pred);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Form,
    Lemma,
    Tag,
}

fn fields_for(prefix: &str) -> Vec<Field> {
    let mut f = Vec::new();
    if prefix.contains('S') {
        f.push(Field::Form);
    }
    if prefix.contains('L') {
        f.push(Field::Lemma);
    }
    if prefix.contains('M') {
        f.push(Field::Tag);
    }
    if f.is_empty() {
        f.push(Field::Form);
    }
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Match,
    Sub,
    Del,
    Ins,
}

/// Minimum-cost alignment of gold `a` to predicted `b`; ties prefer
/// diagonal, then deletion.
fn align<T: PartialEq>(a: &[T], b: &[T]) -> Vec<Op> {
    let (n, m) = (a.len(), b.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            d[i][j] = (d[i - 1][j - 1] + (a[i - 1] != b[j - 1]) as usize).min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + (a[i - 1] != b[j - 1]) as usize {
            ops.push(if a[i - 1] == b[j - 1] { Op::Match } else { Op::Sub });
            i -= 1;
            j -= 1;
        } else if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            ops.push(Op::Del);
            i -= 1;
        } else {
            ops.push(Op::Ins);
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

fn diff_pair(report: &mut DiffReport, sample: usize, prefix: &str, gold: &str, pred: &str, joiner: char) {
    let fields = fields_for(prefix);
    let g: Vec<&str> = gold.split_whitespace().collect();
    let p: Vec<&str> = pred.split_whitespace().collect();
    let key = |u: &&str| u.split(joiner).next().unwrap_or("").to_string();
    let gk: Vec<String> = g.iter().map(key).collect();
    let pk: Vec<String> = p.iter().map(key).collect();
    let ops = align(&gk, &pk);

    let (mut i, mut j) = (0, 0);
    let mut k = 0;
    while k < ops.len() {
        if ops[k] == Op::Match {
            compare_fields(report, sample, i, g[i], p[j], &fields, joiner);
            i += 1;
            j += 1;
            k += 1;
            continue;
        }
        let (gi, pj) = (i, j);
        while k < ops.len() && ops[k] != Op::Match {
            match ops[k] {
                Op::Sub => {
                    i += 1;
                    j += 1;
                }
                Op::Del => i += 1,
                Op::Ins => j += 1,
                Op::Match => unreachable!(),
            }
            k += 1;
        }
        let (gs, ps) = (&g[gi..i], &p[pj..j]);
        if ps.is_empty() {
            for (n, u) in gs.iter().enumerate() {
                report.push(DiffEntry { sample, position: gi + n, category: DiffCategory::MissingWord, gold: u.to_string(), pred: String::new() });
            }
        } else if gs.is_empty() {
            for u in ps {
                report.push(DiffEntry { sample, position: gi, category: DiffCategory::AddedWord, gold: String::new(), pred: u.to_string() });
            }
        } else if gs.len() == ps.len() {
            let category = match fields[0] {
                Field::Form => DiffCategory::SegmentationMismatch,
                Field::Lemma => DiffCategory::LemmaMismatch,
                Field::Tag => DiffCategory::TagMismatch,
            };
            for (n, (a, b)) in gs.iter().zip(ps).enumerate() {
                report.push(DiffEntry { sample, position: gi + n, category, gold: a.to_string(), pred: b.to_string() });
            }
        } else {
            report.push(DiffEntry {
                sample,
                position: gi,
                category: DiffCategory::SegmentationMismatch,
                gold: gs.join(" "),
                pred: ps.join(" "),
            });
        }
    }
}

fn compare_fields(report: &mut DiffReport, sample: usize, position: usize, gold: &str, pred: &str, fields: &[Field], joiner: char) {
    if gold == pred {
        return;
    }
    let gf: Vec<&str> = gold.split(joiner).collect();
    let pf: Vec<&str> = pred.split(joiner).collect();
    for (n, f) in fields.iter().enumerate().skip(1) {
        if gf.get(n) != pf.get(n) {
            let category = if *f == Field::Lemma { DiffCategory::LemmaMismatch } else { DiffCategory::TagMismatch };
            report.push(DiffEntry { sample, position, category, gold: gold.to_string(), pred: pred.to_string() });
        }
    }
}

/// Aligns the word units of predicted and gold S/L/M targets and lists every
/// difference. `sources` gives the task prefix of each pair.
pub fn diff_report<S: AsRef<str>>(sources: &[S], pred: &[S], gold: &[S], joiner: char) -> Result<DiffReport, MetricError> {
    check_len(pred.len(), gold.len())?;
    check_len(sources.len(), gold.len())?;
    let mut report = DiffReport::default();
    for (n, ((s, p), g)) in sources.iter().zip(pred).zip(gold).enumerate() {
        let prefix = split_source(s.as_ref()).map_or("S", |(_, p, _)| p);
        if matches!(prefix, "O" | "D") {
            continue;
        }
        diff_pair(&mut report, n, prefix, g.as_ref(), p.as_ref(), joiner);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Token;
    use proptest::prelude::*;

    fn full_matrix<T: PartialEq>(a: &[T], b: &[T]) -> usize {
        let mut d = vec![vec![0; b.len() + 1]; a.len() + 1];
        for i in 0..=a.len() {
            for j in 0..=b.len() {
                d[i][j] = if i == 0 {
                    j
                } else if j == 0 {
                    i
                } else {
                    (d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1])).min(d[i - 1][j] + 1).min(d[i][j - 1] + 1)
                };
            }
        }
        d[a.len()][b.len()]
    }

    #[test]
    fn pm_examples() {
        let a = ["x", "y", "z", "w"];
        assert_eq!(perfect_match(&a, &a, None, PmOptions::default()).unwrap().value, 100.0);
        let b = ["x", "y", "z", "q"];
        assert_eq!(perfect_match(&b, &a, None, PmOptions::default()).unwrap().value, 75.0);
        assert_eq!(perfect_match(&["a  b"], &["a b"], None, PmOptions::default()).unwrap().value, 100.0);
        assert_eq!(perfect_match(&["a  b"], &["a b"], None, PmOptions { normalize: false }).unwrap().value, 0.0);
        assert!(matches!(perfect_match(&["a"], &["a", "b"], None, PmOptions::default()), Err(MetricError::LengthMismatch { .. })));
        assert!(matches!(perfect_match::<&str>(&[], &[], None, PmOptions::default()), Err(MetricError::Empty(_))));
    }

    #[test]
    fn pm_categories() {
        let cats = vec![Some("Epic".to_string()), Some("Vedic".to_string())];
        let r = perfect_match(&["a", "b"], &["a", "c"], Some(&cats), PmOptions::default()).unwrap();
        assert_eq!(r.by_category["Epic"], (1, 1));
        assert_eq!(r.by_category["Vedic"], (0, 1));
    }

    fn tree(heads: &[usize], rels: &[&str]) -> Sentence {
        let t = heads.iter().zip(rels).enumerate().map(|(i, (h, r))| Token::new(i + 1, "w").with_dep(*h, *r)).collect();
        Sentence::new("T", "w", t)
    }

    #[test]
    fn attachment_scores() {
        let gold = tree(&[2, 0, 2, 2], &["a", "root", "b", "c"]);
        let (u, l) = uas_las(std::slice::from_ref(&gold), std::slice::from_ref(&gold)).unwrap();
        assert_eq!((u.value, l.value), (100.0, 100.0));
        let one_label = tree(&[2, 0, 2, 2], &["a", "root", "b", "x"]);
        let (u, l) = uas_las(&[one_label], std::slice::from_ref(&gold)).unwrap();
        assert_eq!((u.value, l.value), (100.0, 75.0));
        let wrong = tree(&[3, 3, 0, 3], &["a", "root", "b", "c"]);
        let (u, l) = uas_las(&[wrong], std::slice::from_ref(&gold)).unwrap();
        assert_eq!((u.value, l.value), (0.0, 0.0));
        let short = tree(&[0], &["root"]);
        assert!(matches!(uas_las(&[short], &[gold]), Err(MetricError::TokenCountMismatch { .. })));
    }

    #[test]
    fn error_rates() {
        let (c, w) = cer_wer(&["abc"], &["abc"]).unwrap();
        assert_eq!((c.value, w.value), (0.0, 0.0));
        assert_eq!(cer_wer(&["abed"], &["abcd"]).unwrap().0.value, 25.0);
        assert_eq!(cer_wer(&["a"], &["a b"]).unwrap().1.value, 50.0);
        assert!(matches!(cer_wer(&[""], &[""]), Err(MetricError::Empty(_))));
    }

    #[test]
    fn lemma_scores() {
        assert_eq!(lemma_accuracy(&["a", "b"], &["a", "b"]).unwrap().value, 100.0);
        assert_eq!(lemma_accuracy(&["a", "x"], &["a", "b"]).unwrap().value, 50.0);
        assert!(lemma_accuracy::<&str>(&[], &[]).is_err());
    }

    #[test]
    fn diff_identical_is_empty() {
        let t = ["yuvoḥ hi mātā aditiḥ"];
        assert!(diff_report(&["S x"], &t, &t, '_').unwrap().is_empty());
    }

    #[test]
    fn diff_missing_word() {
        let r = diff_report(&["S x"], &["yuvoḥ mātā aditiḥ"], &["yuvoḥ hi mātā aditiḥ"], '_').unwrap();
        assert_eq!(r.entries.len(), 1);
        assert_eq!(r.entries[0].category, DiffCategory::MissingWord);
        assert_eq!((r.entries[0].gold.as_str(), r.entries[0].position), ("hi", 1));
    }

    #[test]
    fn diff_segmentation_of_compound() {
        let r = diff_report(&["S x"], &["sa ādi karaḥ"], &["sa ādikaraḥ"], '_').unwrap();
        assert_eq!(r.entries.len(), 1);
        assert_eq!(r.entries[0].category, DiffCategory::SegmentationMismatch);
        assert_eq!((r.entries[0].gold.as_str(), r.entries[0].pred.as_str()), ("ādikaraḥ", "ādi karaḥ"));
    }

    #[test]
    fn diff_lemma_and_tag() {
        let r = diff_report(&["SLM x"], &["a_b_f c_x_q"], &["a_b_q c_d_q"], '_').unwrap();
        let cats: Vec<_> = r.entries.iter().map(|e| e.category).collect();
        assert_eq!(cats, [DiffCategory::TagMismatch, DiffCategory::LemmaMismatch]);
        let r = diff_report(&["L x"], &["b x"], &["b y"], '_').unwrap();
        assert_eq!(r.entries[0].category, DiffCategory::LemmaMismatch);
        let r = diff_report(&["S x"], &["a b c"], &["a b"], '_').unwrap();
        assert_eq!(r.counts[&DiffCategory::AddedWord], 1);
    }

    #[test]
    fn kv_rendering() {
        let r = perfect_match(&["a"], &["a"], None, PmOptions::default()).unwrap();
        assert_eq!(render_kv(&[r]), "pm.value=100.0000\npm.numerator=1\npm.denominator=1\n");
    }

    proptest! {
        #[test]
        fn levenshtein_matches_oracle(a in "[abcā ]{0,12}", b in "[abcā ]{0,12}") {
            let ac: Vec<char> = a.chars().collect();
            let bc: Vec<char> = b.chars().collect();
            prop_assert_eq!(levenshtein(&ac, &bc), full_matrix(&ac, &bc));
        }

        #[test]
        fn pm_reflexive_and_normalization_idempotent(xs in proptest::collection::vec("\\PC{0,20}", 1..8)) {
            prop_assert_eq!(perfect_match(&xs, &xs, None, PmOptions::default()).unwrap().value, 100.0);
            let once: Vec<String> = xs.iter().map(|x| normalize(x)).collect();
            let twice: Vec<String> = once.iter().map(|x| normalize(x)).collect();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn uas_at_least_las(h in proptest::collection::vec((0usize..5, 0usize..5, 0u8..2, 0u8..2), 1..5)) {
            let n = h.len();
            let gold = Sentence::new("T", "w", h.iter().enumerate().map(|(i, x)| Token::new(i + 1, "w").with_dep(x.0 % (n + 1), ["a", "b"][x.2 as usize])).collect());
            let pred = Sentence::new("T", "w", h.iter().enumerate().map(|(i, x)| Token::new(i + 1, "w").with_dep(x.1 % (n + 1), ["a", "b"][x.3 as usize])).collect());
            let (u, l) = uas_las(&[pred], &[gold]).unwrap();
            prop_assert!(u.value >= l.value);
        }
    }
}
