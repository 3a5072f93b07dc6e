//! Caption tokenization, vocabulary construction, and sentence vectorization.

mod encode;
mod tokenize;
mod vocab;

pub use encode::{
    bow_counts, concat_multiscale, encode_bow, encode_mean_embedding, CaptionInput, Segment, SegmentLayout,
    SegmentSlot, SentenceEncoder, SentenceVector,
};
pub use tokenize::{tokenize, TokenSequence};
pub use vocab::Vocabulary;
