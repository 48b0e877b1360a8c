//! Model input assembly: [CLS] question [SEP] context-slice [SEP] [PAD]...

use super::tokenizer::{tokenize, Token, Vocab, CLS_ID, PAD_ID, SEP_ID};
use crate::error::{Error, Result};

/// A windowed, tokenized (question, context-slice) pair padded to the
/// model length. `offsets` maps context positions back to byte spans in
/// the source context; non-context positions hold `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedInput {
    pub ids: Vec<usize>,
    pub attention_mask: Vec<u8>,
    /// [begin, end) of context tokens inside `ids`.
    pub context_range: (usize, usize),
    pub offsets: Vec<Option<(usize, usize)>>,
}

impl TokenizedInput {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn is_context(&self, pos: usize) -> bool {
        pos >= self.context_range.0 && pos < self.context_range.1
    }

    /// 0/1 mask over positions a predicted span may use (context only).
    pub fn context_mask(&self) -> Vec<u8> {
        (0..self.ids.len()).map(|p| u8::from(self.is_context(p))).collect()
    }
}

/// Assemble an input from already tokenized question and context tokens.
/// Context token spans must point into the source context string.
pub fn encode_tokens(
    question: &[Token],
    context: &[Token],
    max_seq_len: usize,
    vocab: &Vocab,
) -> Result<TokenizedInput> {
    let needed = question.len() + context.len() + 3;
    if needed > max_seq_len {
        return Err(Error::contract(format!(
            "sequence of {needed} tokens exceeds max_seq_len {max_seq_len}; window the context first"
        )));
    }

    let mut ids = Vec::with_capacity(max_seq_len);
    let mut offsets: Vec<Option<(usize, usize)>> = Vec::with_capacity(max_seq_len);

    ids.push(CLS_ID);
    offsets.push(None);
    for t in question {
        ids.push(vocab.id(&t.text));
        offsets.push(None);
    }
    ids.push(SEP_ID);
    offsets.push(None);

    let ctx_begin = ids.len();
    for t in context {
        ids.push(vocab.id(&t.text));
        offsets.push(Some(t.span));
    }
    let ctx_end = ids.len();

    ids.push(SEP_ID);
    offsets.push(None);

    let used = ids.len();
    ids.resize(max_seq_len, PAD_ID);
    offsets.resize(max_seq_len, None);

    let mut attention_mask = vec![0u8; max_seq_len];
    attention_mask[..used].fill(1);

    Ok(TokenizedInput {
        ids,
        attention_mask,
        context_range: (ctx_begin, ctx_end),
        offsets,
    })
}

/// Tokenize and assemble a (question, context-slice) pair.
pub fn encode_pair(
    question: &str,
    context_slice: &str,
    max_seq_len: usize,
    vocab: &Vocab,
) -> Result<TokenizedInput> {
    encode_tokens(&tokenize(question), &tokenize(context_slice), max_seq_len, vocab)
}
