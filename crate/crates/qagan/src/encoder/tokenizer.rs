//! Word-level tokenizer and vocabulary.
//!
//! Lowercased tokens split on whitespace, with every punctuation character
//! its own token. Byte spans into the source text ride along so any token
//! range can be mapped back to the exact original substring.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

/// One token: lowercased text plus its byte span in the source.
#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub text: String,
    pub span: (usize, usize),
}

/// Split `text` into lowercased word/punctuation tokens with byte offsets.
/// Alphanumeric runs form one token; any other non-whitespace character is
/// a single-character token.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut run_start: Option<usize> = None;

    let flush = |tokens: &mut Vec<Token>, start: usize, end: usize, text: &str| {
        tokens.push(Token {
            text: text[start..end].to_lowercase(),
            span: (start, end),
        });
    };

    for (i, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            if run_start.is_none() {
                run_start = Some(i);
            }
        } else {
            if let Some(start) = run_start.take() {
                flush(&mut tokens, start, i, text);
            }
            if !ch.is_whitespace() {
                flush(&mut tokens, i, i + ch.len_utf8(), text);
            }
        }
    }
    if let Some(start) = run_start {
        flush(&mut tokens, start, text.len(), text);
    }
    tokens
}

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;
pub const SEP_ID: usize = 3;
pub const RESERVED: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

/// Token-string to id map with fixed reserved entries on ids 0..=3.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    pub fn new() -> Self {
        let mut v = Vocab { tokens: Vec::new(), ids: HashMap::new() };
        for t in RESERVED {
            v.push(t.to_string());
        }
        v
    }

    fn push(&mut self, token: String) -> usize {
        let id = self.tokens.len();
        self.ids.insert(token.clone(), id);
        self.tokens.push(token);
        id
    }

    /// Insert a token if absent; returns its id either way.
    pub fn add(&mut self, token: &str) -> usize {
        match self.ids.get(token) {
            Some(&id) => id,
            None => self.push(token.to_string()),
        }
    }

    /// Build from texts in order; first occurrence fixes the id.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Vocab::new();
        for text in texts {
            for tok in tokenize(text) {
                v.add(&tok.text);
            }
        }
        v
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved entries always present
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Vocabulary file: UTF-8, one token per line, line number = id,
    /// reserved tokens on lines 0-3.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for t in &self.tokens {
            let _ = writeln!(out, "{t}");
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| Error::data_at(path, None, e.to_string()))?;
        let mut v = Vocab { tokens: Vec::new(), ids: HashMap::new() };
        for (lineno, line) in body.lines().enumerate() {
            if lineno < RESERVED.len() && line != RESERVED[lineno] {
                return Err(Error::data_at(
                    path,
                    Some(lineno),
                    format!("expected reserved token {:?}, found {line:?}", RESERVED[lineno]),
                ));
            }
            if v.ids.contains_key(line) {
                return Err(Error::data_at(path, Some(lineno), format!("duplicate token {line:?}")));
            }
            v.push(line.to_string());
        }
        if v.tokens.len() < RESERVED.len() {
            return Err(Error::data_at(path, None, "vocabulary missing reserved tokens"));
        }
        Ok(v)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut v = Vocab { tokens: Vec::new(), ids: HashMap::new() };
        for (i, t) in tokens.into_iter().enumerate() {
            if i < RESERVED.len() && t != RESERVED[i] {
                return Err(Error::data(format!("reserved token slot {i} holds {t:?}")));
            }
            if v.ids.contains_key(&t) {
                return Err(Error::data(format!("duplicate token {t:?}")));
            }
            v.push(t);
        }
        if v.tokens.len() < RESERVED.len() {
            return Err(Error::data("vocabulary missing reserved tokens"));
        }
        Ok(v)
    }
}
