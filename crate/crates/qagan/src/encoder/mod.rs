//! Tokenizer, input assembly, and the sequence encoder.

pub mod input;
pub mod tokenizer;
pub mod transformer;

pub use input::{encode_pair, encode_tokens, TokenizedInput};
pub use tokenizer::{tokenize, Token, Vocab, CLS_ID, PAD_ID, SEP_ID, UNK_ID};
pub use transformer::{
    Activation, Dropout, EncoderConfig, FixedEncoder, Hidden, NormPlacement, SequenceEncoder,
    TransformerEncoder,
};
