//! Triples, tokenization, vocabulary, grouped splits and image features.

mod features;
mod split;
mod tokenize;
mod triples;
mod vocab;

pub use features::{
    load_image_features, FeatureStore, DEFAULT_FEATURE_DIM, FEATURE_MAGIC, FEATURE_VERSION,
};
pub use split::{group_and_split, group_triples, SplitSpec, Splits};
pub use tokenize::{is_punctuation_token, tokenize, PUNCTUATION};
pub use triples::{merge_references, read_triples, write_triples, Triple};
pub use vocab::{build_vocab, Vocabulary, BOS, EOS, PAD, RESERVED, UNK};

/// A triple mapped to vocabulary indices. Every sequence is wrapped in BOS/EOS.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedExample {
    pub pair_id: String,
    pub image_id: String,
    pub premise: Vec<usize>,
    pub hypotheses: Vec<Vec<usize>>,
}

pub fn wrap(indices: Vec<usize>) -> Vec<usize> {
    let mut out = Vec::with_capacity(indices.len() + 2);
    out.push(BOS);
    out.extend(indices);
    out.push(EOS);
    out
}

pub fn encode_example(triple: &Triple, vocab: &Vocabulary) -> EncodedExample {
    let enc = |s: &str| wrap(vocab.encode(&tokenize(s)));
    EncodedExample {
        pair_id: triple.pair_id.clone(),
        image_id: triple.image_id.clone(),
        premise: enc(&triple.premise),
        hypotheses: triple.hypotheses.iter().map(|h| enc(h)).collect(),
    }
}
