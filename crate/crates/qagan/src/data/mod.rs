//! Dataset records, manifest-driven loading, sliding-window chunking, and
//! the synthetic corpus generator.
//!
//! Dataset files are UTF-8 JSON lines, one record per (context, question)
//! pair. Answer spans are byte offsets into the context, end-exclusive.
//! Each file carries a single domain; a manifest of `path<TAB>domain-name`
//! lines assigns domain ids in order of first appearance.

pub mod synth;

use crate::encoder::{encode_tokens, tokenize, TokenizedInput, Vocab};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Original,
    Augmented,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    /// [start, end) byte span into the context.
    pub span: (usize, usize),
}

/// One (context, question, answers) record with its domain label.
#[derive(Debug, Clone, PartialEq)]
pub struct QAExample {
    pub id: String,
    pub context: String,
    pub question: String,
    pub answers: Vec<Answer>,
    pub domain_id: usize,
    pub split: Split,
    pub provenance: Provenance,
}

impl QAExample {
    /// Every answer must be a verbatim substring of the context at its span.
    pub fn spans_agree(&self) -> bool {
        self.answers.iter().all(|a| {
            self.context.is_char_boundary(a.span.0)
                && self.context.is_char_boundary(a.span.1)
                && a.span.0 <= a.span.1
                && a.span.1 <= self.context.len()
                && &self.context[a.span.0..a.span.1] == a.text
        })
    }
}

/// On-disk record shape (domain id comes from the manifest, not the file).
#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    context: String,
    question: String,
    answers: Vec<Answer>,
    split: Split,
    #[serde(default)]
    provenance: Provenance,
}

#[derive(Debug, Default)]
pub struct LoadReport {
    pub examples: Vec<QAExample>,
    /// Records dropped for span/text disagreement or missing train answers.
    pub rejected: usize,
}

/// Load one dataset file, labeling every record with `domain_id`.
pub fn load_dataset(path: &Path, domain_id: usize) -> Result<LoadReport> {
    let body = std::fs::read_to_string(path)
        .map_err(|e| Error::data_at(path, None, e.to_string()))?;
    let mut report = LoadReport::default();
    for (i, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line)
            .map_err(|e| Error::data_at(path, Some(i + 1), format!("malformed record: {e}")))?;
        let ex = QAExample {
            id: rec.id,
            context: rec.context,
            question: rec.question,
            answers: rec.answers,
            domain_id,
            split: rec.split,
            provenance: rec.provenance,
        };
        if !ex.spans_agree() || (ex.split == Split::Train && ex.answers.is_empty()) {
            report.rejected += 1;
            continue;
        }
        report.examples.push(ex);
    }
    Ok(report)
}

pub fn save_dataset(path: &Path, examples: &[QAExample]) -> Result<()> {
    let mut out = String::new();
    for ex in examples {
        let rec = Record {
            id: ex.id.clone(),
            context: ex.context.clone(),
            question: ex.question.clone(),
            answers: ex.answers.clone(),
            split: ex.split,
            provenance: ex.provenance,
        };
        let _ = writeln!(out, "{}", serde_json::to_string(&rec).expect("record serializes"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Manifest: `path<TAB>domain-name` per line; `#` comments allowed.
/// Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub entries: Vec<(PathBuf, String)>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| Error::data_at(path, None, e.to_string()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut entries = Vec::new();
        for (i, line) in body.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (file, name) = line.split_once('\t').ok_or_else(|| {
                Error::data_at(path, Some(i + 1), "expected `path<TAB>domain-name`")
            })?;
            let file = Path::new(file);
            let resolved = if file.is_absolute() { file.to_path_buf() } else { base.join(file) };
            entries.push((resolved, name.trim().to_string()));
        }
        Ok(Manifest { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (file, name) in &self.entries {
            let _ = writeln!(out, "{}\t{}", file.display(), name);
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct Corpus {
    pub examples: Vec<QAExample>,
    /// Domain id -> name, in first-appearance order.
    pub domain_names: Vec<String>,
    pub rejected: usize,
}

/// Load every manifest file into a fresh corpus; domain ids follow first
/// appearance of each domain name.
pub fn load_manifest_corpus(manifest: &Manifest) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    extend_corpus(&mut corpus, manifest)?;
    Ok(corpus)
}

/// Merge another manifest into an existing corpus. Known domain names keep
/// their ids; new names extend the id space.
pub fn extend_corpus(corpus: &mut Corpus, manifest: &Manifest) -> Result<()> {
    for (file, name) in &manifest.entries {
        let domain_id = match corpus.domain_names.iter().position(|n| n == name) {
            Some(id) => id,
            None => {
                corpus.domain_names.push(name.clone());
                corpus.domain_names.len() - 1
            }
        };
        let report = load_dataset(file, domain_id)?;
        corpus.rejected += report.rejected;
        corpus.examples.extend(report.examples);
    }
    Ok(())
}

// ── chunking ────────────────────────────────────────────────────────────

/// A windowed training unit: tokenized input plus gold token positions.
/// Gold (0, 0) marks the CLS no-answer convention for windows that do not
/// fully contain the answer.
#[derive(Debug, Clone)]
pub struct Chunk {
    pub parent_id: String,
    pub input: TokenizedInput,
    pub gold_start: usize,
    pub gold_end: usize,
    pub domain_id: usize,
}

/// Window start offsets: fixed step of `capacity - stride` until a window
/// reaches the end of the context.
pub fn window_starts(n_tokens: usize, capacity: usize, stride: usize) -> Vec<usize> {
    assert!(capacity > stride, "window capacity must exceed stride");
    let mut starts = vec![0];
    let mut s = 0;
    while s + capacity < n_tokens {
        s += capacity - stride;
        starts.push(s);
    }
    starts
}

/// Split one example into padded chunks of `max_seq_len` with overlapping
/// context windows.
pub fn chunk_example(
    ex: &QAExample,
    max_seq_len: usize,
    stride: usize,
    vocab: &Vocab,
) -> Result<Vec<Chunk>> {
    let q_tokens = tokenize(&ex.question);
    let ctx_tokens = tokenize(&ex.context);
    let overhead = q_tokens.len() + 3;
    if max_seq_len < overhead + stride + 1 {
        return Err(Error::contract(format!(
            "question of {} tokens leaves context capacity below stride+1 (max_seq_len {max_seq_len}, stride {stride})",
            q_tokens.len()
        )));
    }
    let capacity = max_seq_len - overhead;

    // Token indexes covering the first answer, if any.
    let gold_tokens = ex.answers.first().and_then(|ans| {
        let (a, b) = ans.span;
        let ts = ctx_tokens.iter().position(|t| t.span.1 > a)?;
        let te = ctx_tokens.iter().rposition(|t| t.span.0 < b)?;
        (ts <= te).then_some((ts, te))
    });

    let mut chunks = Vec::new();
    for start in window_starts(ctx_tokens.len(), capacity, stride) {
        let end = usize::min(start + capacity, ctx_tokens.len());
        let window = &ctx_tokens[start..end];
        let input = encode_tokens(&q_tokens, window, max_seq_len, vocab)?;
        let ctx_begin = input.context_range.0;
        let (gold_start, gold_end) = match gold_tokens {
            Some((ts, te)) if ts >= start && te < end => {
                (ctx_begin + (ts - start), ctx_begin + (te - start))
            }
            _ => (0, 0),
        };
        chunks.push(Chunk {
            parent_id: ex.id.clone(),
            input,
            gold_start,
            gold_end,
            domain_id: ex.domain_id,
        });
    }
    Ok(chunks)
}
