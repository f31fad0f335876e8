//! Shared inputs for the benchmarks.

use sktkit::sandhi::RuleTable;
use sktkit::synthetic::{generate, word_forms, GenConfig};
use sktkit::tagcodec::{tag_frequencies, Codebook, DEFAULT_ALPHABET};
use sktkit::Sentence;

pub struct Fixture {
    pub corpus: Vec<Sentence>,
    pub codebook: Codebook,
    /// (merged chunk, junction position, left, right)
    pub junctions: Vec<(String, usize, String, String)>,
}

pub fn fixture(texts: usize) -> Fixture {
    let corpus = generate(&GenConfig { texts, seed: 7, ..Default::default() });
    let codebook = Codebook::build(&tag_frequencies(&corpus), DEFAULT_ALPHABET).expect("non-empty corpus");
    let rules = RuleTable::builtin();
    let forms = word_forms(2000, 7);
    let junctions = forms
        .chunks(2)
        .map(|p| {
            let j = rules.synth_detailed(&p[0], &p[1]);
            (j.text, j.position, p[0].clone(), p[1].clone())
        })
        .collect();
    Fixture { corpus, codebook, junctions }
}
