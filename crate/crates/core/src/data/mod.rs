//! Documents, corpora and the deterministic helpers that produce them.

mod doc;
mod segment;
mod synth;
mod toy;

pub use doc::{
    pad_or_truncate, pad_to_mask, Corpus, EmbeddedDoc, Label, PaddedDoc, VariantKind,
    DEFAULT_DIM,
};
pub use segment::{segment_sentences, SentenceSeq, TERMINATORS};
pub use synth::{synth_corpus, SynthConfig, DOMAIN_NAMES};
pub use toy::toy_embed;
