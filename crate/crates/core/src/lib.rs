//! Corpus processing, serialization and evaluation for multitask Sanskrit
//! NLP: sandhi, transliteration, CoNLL-U, tag compression, task samples,
//! dependency linearization, metrics and model backends.

pub mod backend;
pub mod conllu;
pub mod deplin;
pub mod metrics;
pub mod sandhi;
pub mod synthetic;
pub mod tagcodec;
pub mod taskgen;
pub mod translit;
pub mod types;

pub use types::{
    validate_heads, validate_tree, MorphTag, Paragraph, Sentence, Task, TaskSample, TaskSet, Token, TreeReport, ValidationError,
};
