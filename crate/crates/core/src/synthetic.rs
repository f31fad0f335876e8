//! Seeded generator for corpora shaped like the Digital Corpus of Sanskrit:
//! inflected words from a random lexicon with UD features, sandhied running
//! text built with the rule table, dependency trees, genre categories,
//! mantra citations and heuristically reconstructed forms.
//!
//! Used for tests and benchmarks when the real corpus is not at hand.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::sandhi::RuleTable;
use crate::types::{MorphTag, Sentence, Token};

/// Categories with weights roughly proportional to corpus size.
pub const CATEGORIES: [(&str, u32); 7] =
    [("Epics", 98), ("Vedic", 72), ("Science", 63), ("Purāṇa", 47), ("Poetry", 20), ("Buddhist", 18), ("other", 27)];

/// text_id prefix of Rigvedic texts.
pub const RIGVEDA_PREFIX: &str = "ṚV";

const ONSETS: [&str; 29] = [
    "k", "kh", "g", "gh", "c", "ch", "j", "jh", "ṭ", "ḍ", "t", "th", "d", "dh", "n", "p", "ph", "b", "bh", "m", "y", "r", "l", "v", "ś", "ṣ", "s", "h", "",
];
const NUCLEI: [&str; 10] = ["a", "a", "a", "ā", "i", "ī", "u", "ū", "ṛ", "e"];

const CASES: [&str; 8] = ["Nom", "Acc", "Ins", "Dat", "Abl", "Gen", "Loc", "Voc"];
const NUMBERS: [&str; 3] = ["Sing", "Dual", "Plur"];

// Endings indexed [case][number].
const MASC_A: [[&str; 3]; 8] = [
    ["aḥ", "au", "āḥ"],
    ["am", "au", "ān"],
    ["ena", "ābhyām", "aiḥ"],
    ["āya", "ābhyām", "ebhyaḥ"],
    ["āt", "ābhyām", "ebhyaḥ"],
    ["asya", "ayoḥ", "ānām"],
    ["e", "ayoḥ", "eṣu"],
    ["a", "au", "āḥ"],
];
const FEM_A: [[&str; 3]; 8] = [
    ["ā", "e", "āḥ"],
    ["ām", "e", "āḥ"],
    ["ayā", "ābhyām", "ābhiḥ"],
    ["āyai", "ābhyām", "ābhyaḥ"],
    ["āyāḥ", "ābhyām", "ābhyaḥ"],
    ["āyāḥ", "ayoḥ", "ānām"],
    ["āyām", "ayoḥ", "āsu"],
    ["e", "e", "āḥ"],
];
const NEUT_A: [[&str; 3]; 8] = [
    ["am", "e", "āni"],
    ["am", "e", "āni"],
    ["ena", "ābhyām", "aiḥ"],
    ["āya", "ābhyām", "ebhyaḥ"],
    ["āt", "ābhyām", "ebhyaḥ"],
    ["asya", "ayoḥ", "ānām"],
    ["e", "ayoḥ", "eṣu"],
    ["a", "e", "āni"],
];
// [voice][person - 1][number]
const VERB: [[[&str; 3]; 3]; 2] = [
    [["āmi", "āvaḥ", "āmaḥ"], ["asi", "athaḥ", "atha"], ["ati", "ataḥ", "anti"]],
    [["e", "āvahe", "āmahe"], ["ase", "ethe", "adhve"], ["ate", "ete", "ante"]],
];

const INDECLINABLES: [(&str, &str, &str); 12] = [
    ("ca", "CCONJ", "cc"),
    ("vā", "CCONJ", "cc"),
    ("iti", "PART", "mark"),
    ("eva", "PART", "advmod"),
    ("hi", "PART", "discourse"),
    ("api", "PART", "advmod"),
    ("tu", "PART", "discourse"),
    ("na", "PART", "advmod"),
    ("atha", "ADV", "advmod"),
    ("tathā", "ADV", "advmod"),
    ("yathā", "ADV", "advmod"),
    ("sadā", "ADV", "advmod"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Noun,
    Adj,
    Participle,
    Verb,
    Pron,
    Indecl,
}

/// One inflected word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub morph: MorphTag,
    kind: Kind,
}

pub struct Lexicon {
    stems: Vec<String>,
    roots: Vec<String>,
}

fn syllable(rng: &mut ChaCha8Rng) -> String {
    format!("{}{}", ONSETS.choose(rng).unwrap(), NUCLEI.choose(rng).unwrap())
}

fn stem(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..=3);
    let mut s: String = (0..n).map(|_| syllable(rng)).collect();
    // stems end in a consonant so that endings attach cleanly
    s.push_str(["r", "n", "t", "k", "v", "m", "s", "d", "p", "l"].choose(rng).unwrap());
    s
}

fn tag(pairs: &[(&str, &str)]) -> MorphTag {
    MorphTag::from_pairs(pairs.iter().copied()).expect("distinct feature keys")
}

impl Lexicon {
    pub fn new(stems: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let roots_n = (stems / 4).max(1);
        let stems = (0..stems.max(1)).map(|_| stem(&mut rng)).collect();
        let roots = (0..roots_n).map(|_| stem(&mut rng)).collect();
        Lexicon { stems, roots }
    }

    /// A random inflected word.
    pub fn word(&self, rng: &mut ChaCha8Rng) -> Word {
        let kind = match rng.random_range(0..100) {
            0..38 => Kind::Noun,
            38..46 => Kind::Adj,
            46..58 => Kind::Participle,
            58..80 => Kind::Verb,
            80..88 => Kind::Pron,
            _ => Kind::Indecl,
        };
        let case = rng.random_range(0..8);
        let number = rng.random_range(0..3);
        let gender = rng.random_range(0..3);
        let (table, gname, lemma_end) = match gender {
            0 => (&MASC_A, "Masc", "a"),
            1 => (&FEM_A, "Fem", "ā"),
            _ => (&NEUT_A, "Neut", "a"),
        };
        let nominal = [("Case", CASES[case]), ("Gender", gname), ("Number", NUMBERS[number])];
        match kind {
            Kind::Noun | Kind::Adj => {
                let s = self.stems.choose(rng).unwrap();
                let upos = if kind == Kind::Noun { "NOUN" } else { "ADJ" };
                Word { form: format!("{s}{}", table[case][number]), lemma: format!("{s}{lemma_end}"), upos: upos.into(), morph: tag(&nominal), kind }
            }
            Kind::Participle => {
                let r = self.roots.choose(rng).unwrap();
                let mut f = nominal.to_vec();
                f.extend([("Tense", "Past"), ("VerbForm", "Part")]);
                Word { form: format!("{r}it{}", table[case][number]), lemma: r.clone(), upos: "VERB".into(), morph: tag(&f), kind }
            }
            Kind::Verb => {
                let r = self.roots.choose(rng).unwrap();
                let voice = rng.random_range(0..2);
                let person = rng.random_range(0..3);
                let f = [
                    ("Mood", "Ind"),
                    ("Number", NUMBERS[number]),
                    ("Person", ["1", "2", "3"][person]),
                    ("Tense", "Pres"),
                    ("VerbForm", "Fin"),
                    ("Voice", ["Act", "Mid"][voice]),
                ];
                Word { form: format!("{r}{}", VERB[voice][person][number]), lemma: r.clone(), upos: "VERB".into(), morph: tag(&f), kind }
            }
            Kind::Pron => {
                let form = format!("t{}", table[case][number]);
                let mut f = nominal.to_vec();
                f.push(("PronType", "Dem"));
                Word { form, lemma: "tad".into(), upos: "PRON".into(), morph: tag(&f), kind }
            }
            Kind::Indecl => {
                let (form, upos, _) = *INDECLINABLES.choose(rng).unwrap();
                Word { form: form.into(), lemma: form.into(), upos: upos.into(), morph: MorphTag::empty(), kind }
            }
        }
    }
}

fn deprel(w: &Word, rng: &mut ChaCha8Rng) -> String {
    let pick = |opts: &[&str], rng: &mut ChaCha8Rng| opts.choose(rng).unwrap().to_string();
    match w.kind {
        Kind::Noun => pick(&["nsubj", "obj", "obl", "nmod", "conj"], rng),
        Kind::Adj => "amod".into(),
        Kind::Participle => pick(&["acl", "advcl", "amod"], rng),
        Kind::Verb => pick(&["advcl", "ccomp", "conj"], rng),
        Kind::Pron => pick(&["det", "nsubj", "obj"], rng),
        Kind::Indecl => INDECLINABLES.iter().find(|(f, _, _)| *f == w.form).map_or("advmod", |x| x.2).into(),
    }
}

/// Random tree with a single root: nodes are attached in random order to an
/// already attached node.
fn random_heads(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (1..=n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut heads = vec![0; n];
    for k in 1..n {
        heads[order[k] - 1] = order[rng.random_range(0..k)];
    }
    heads
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub texts: usize,
    pub sentences_per_text: (usize, usize),
    pub words_per_sentence: (usize, usize),
    /// Share of non-Vedic sentences whose unsandhied forms are reconstructed.
    pub reconstructed_rate: f64,
    /// The same for Vedic texts.
    pub vedic_reconstructed_rate: f64,
    /// Share of non-Vedic sentences that quote a mantra.
    pub mantra_rate: f64,
    pub lexicon_size: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            texts: 40,
            sentences_per_text: (50, 400),
            words_per_sentence: (3, 14),
            reconstructed_rate: 0.75,
            vedic_reconstructed_rate: 0.08,
            mantra_rate: 0.02,
            lexicon_size: 3000,
            seed: 1,
        }
    }
}

fn pick_category(rng: &mut ChaCha8Rng) -> &'static str {
    let total: u32 = CATEGORIES.iter().map(|c| c.1).sum();
    let mut x = rng.random_range(0..total);
    for (name, w) in CATEGORIES {
        if x < w {
            return name;
        }
        x -= w;
    }
    unreachable!()
}

/// Builds one annotated sentence from words: sandhied text, surfaces (the
/// first token of each merged chunk carries it, the rest are empty), tree.
pub fn assemble(words: &[Word], rules: &RuleTable, rng: &mut ChaCha8Rng) -> (String, Vec<Token>) {
    let mut text = String::new();
    let mut chunk_of = Vec::with_capacity(words.len());
    let mut chunk = 0;
    for (i, w) in words.iter().enumerate() {
        if i == 0 {
            text = w.form.clone();
        } else {
            let j = rules.synth_detailed(&text, &w.form);
            if j.rule.is_none() {
                chunk += 1;
            }
            text = j.text;
        }
        chunk_of.push(chunk);
    }
    let chunks: Vec<&str> = text.split(' ').collect();
    let heads = random_heads(words.len(), rng);
    let mut tokens = Vec::with_capacity(words.len());
    for (i, w) in words.iter().enumerate() {
        let first = i == 0 || chunk_of[i - 1] != chunk_of[i];
        let surface = if first { chunks[chunk_of[i]].to_string() } else { String::new() };
        let rel = if heads[i] == 0 { "root".to_string() } else { deprel(w, rng) };
        let t = Token::new(i + 1, w.form.clone())
            .with_surface(surface)
            .with_lemma(w.lemma.clone())
            .with_upos(w.upos.clone())
            .with_morph(w.morph.clone())
            .with_dep(heads[i], rel);
        tokens.push(t);
    }
    (text, tokens)
}

/// A full synthetic corpus in corpus order.
pub fn generate(config: &GenConfig) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lex = Lexicon::new(config.lexicon_size, config.seed);
    let rules = RuleTable::builtin();
    let mut out = Vec::new();
    for t in 0..config.texts {
        let category = pick_category(&mut rng);
        let vedic = category == "Vedic";
        let text_id = if vedic && t % 3 == 0 { format!("{RIGVEDA_PREFIX}-{t:03}") } else { format!("T{t:03}") };
        let n = rng.random_range(config.sentences_per_text.0..=config.sentences_per_text.1);
        for _ in 0..n {
            let len = rng.random_range(config.words_per_sentence.0..=config.words_per_sentence.1);
            let words: Vec<Word> = (0..len).map(|_| lex.word(&mut rng)).collect();
            let (raw, mut tokens) = assemble(&words, rules, &mut rng);
            let rate = if vedic { config.vedic_reconstructed_rate } else { config.reconstructed_rate };
            if rng.random_bool(rate) {
                for tok in &mut tokens {
                    tok.reconstructed = rng.random_bool(0.9);
                }
                tokens[0].reconstructed = true;
            }
            let mut s = Sentence::new(text_id.clone(), raw, tokens);
            s.sent_id = Some((out.len() + 1).to_string());
            s.category = Some(category.to_string());
            s.is_mantra = !vedic && rng.random_bool(config.mantra_rate);
            out.push(s);
        }
    }
    out
}

/// A large corpus of one-word sentences for split bookkeeping at full scale.
pub fn minimal_corpus(sentences: usize, texts: usize, reconstructed_rate: f64, seed: u64) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_text = sentences.div_ceil(texts.max(1));
    (0..sentences)
        .map(|i| {
            let t = i / per_text;
            let text_id = if t.is_multiple_of(50) { format!("{RIGVEDA_PREFIX}-{t}") } else { format!("T{t}") };
            let mut tok = Token::new(1, "ca").with_dep(0, "root");
            tok.reconstructed = rng.random_bool(reconstructed_rate);
            Sentence::new(text_id, "ca", vec![tok])
        })
        .collect()
}

/// Distinct inflected forms for sandhi experiments.
pub fn word_forms(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lex = Lexicon::new(500, seed);
    (0..n).map(|_| lex.word(&mut rng).form).collect()
}
