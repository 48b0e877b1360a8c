//! Span prediction heads: a plain per-token linear head, a linear
//! conditional head whose end logits consume the start logit channel, and
//! a self-attention conditional head. Plus span decoding and cross-chunk
//! aggregation.

use crate::data::Chunk;
use crate::encoder::{Hidden, TokenizedInput};
use crate::error::{Error, Result};
use crate::numerics::{Bound, Graph, ParamGroup, ParamHandle, Scalar, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Mlp,
    Cmlp,
    Csat,
}

impl std::str::FromStr for HeadKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(HeadKind::Mlp),
            "cmlp" => Ok(HeadKind::Cmlp),
            "csat" => Ok(HeadKind::Csat),
            other => Err(Error::config(format!("unknown head kind `{other}`"))),
        }
    }
}

const INIT_STD: Scalar = 0.02;

struct MlpHandles {
    w_hidden: ParamHandle,
    b_hidden: ParamHandle,
    w_out: ParamHandle,
    b_out: ParamHandle,
}

struct AttnHandles {
    wq: ParamHandle,
    bq: ParamHandle,
    wk: ParamHandle,
    bk: ParamHandle,
    wv: ParamHandle,
    bv: ParamHandle,
}

enum HeadParams {
    Mlp {
        w: ParamHandle,
        b: ParamHandle,
    },
    Cmlp {
        start_mlp: MlpHandles,
        end_mlp: MlpHandles,
    },
    Csat {
        attn1: AttnHandles,
        start_mlp: MlpHandles,
        attn2: AttnHandles,
        end_mlp: MlpHandles,
    },
}

/// Per-token start/end logit vectors on the graph (1xT rows).
#[derive(Debug, Clone, Copy)]
pub struct SpanLogits {
    pub start: Var,
    pub end: Var,
}

impl SpanLogits {
    pub fn extract(&self, g: &Graph, input: &TokenizedInput) -> SpanPrediction {
        SpanPrediction {
            start_logits: g.value(self.start).data().to_vec(),
            end_logits: g.value(self.end).data().to_vec(),
            valid_mask: input.context_mask(),
        }
    }
}

/// Concrete logits for one chunk; `valid_mask` marks context positions.
#[derive(Debug, Clone)]
pub struct SpanPrediction {
    pub start_logits: Vec<Scalar>,
    pub end_logits: Vec<Scalar>,
    pub valid_mask: Vec<u8>,
}

pub struct SpanHead {
    kind: HeadKind,
    d_model: usize,
    /// Condition the end path on softmaxed start logits instead of the raw
    /// logit channel.
    pub cond_softmax: bool,
    params: HeadParams,
}

fn init_mlp(group: &mut ParamGroup, prefix: &str, d_in: usize, d_hidden: usize, rng: &mut impl Rng) -> MlpHandles {
    MlpHandles {
        w_hidden: group.add_normal(format!("{prefix}.w_hidden"), d_in, d_hidden, INIT_STD, rng),
        b_hidden: group.add_zeros(format!("{prefix}.b_hidden"), 1, d_hidden),
        w_out: group.add_normal(format!("{prefix}.w_out"), d_hidden, 1, INIT_STD, rng),
        b_out: group.add_zeros(format!("{prefix}.b_out"), 1, 1),
    }
}

fn init_attn(group: &mut ParamGroup, prefix: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) -> AttnHandles {
    AttnHandles {
        wq: group.add_normal(format!("{prefix}.wq"), d_in, d_out, INIT_STD, rng),
        bq: group.add_zeros(format!("{prefix}.bq"), 1, d_out),
        wk: group.add_normal(format!("{prefix}.wk"), d_in, d_out, INIT_STD, rng),
        bk: group.add_zeros(format!("{prefix}.bk"), 1, d_out),
        wv: group.add_normal(format!("{prefix}.wv"), d_in, d_out, INIT_STD, rng),
        bv: group.add_zeros(format!("{prefix}.bv"), 1, d_out),
    }
}

impl SpanHead {
    pub fn init(kind: HeadKind, d_model: usize, group: &mut ParamGroup, rng: &mut impl Rng) -> Self {
        let params = match kind {
            HeadKind::Mlp => HeadParams::Mlp {
                w: group.add_normal("head.w", d_model, 2, INIT_STD, rng),
                b: group.add_zeros("head.b", 1, 2),
            },
            HeadKind::Cmlp => HeadParams::Cmlp {
                start_mlp: init_mlp(group, "head.start", d_model, d_model, rng),
                end_mlp: init_mlp(group, "head.end", d_model + 1, d_model, rng),
            },
            HeadKind::Csat => HeadParams::Csat {
                attn1: init_attn(group, "head.attn1", d_model, d_model, rng),
                start_mlp: init_mlp(group, "head.start", d_model, d_model, rng),
                attn2: init_attn(group, "head.attn2", 2 * d_model, d_model, rng),
                end_mlp: init_mlp(group, "head.end", d_model, d_model, rng),
            },
        };
        SpanHead { kind, d_model, cond_softmax: false, params }
    }

    pub fn kind(&self) -> HeadKind {
        self.kind
    }

    pub fn d_model(&self) -> usize {
        self.d_model
    }

    fn mlp(g: &mut Graph, bound: &Bound, h: &MlpHandles, x: Var) -> Var {
        let pre = g.matmul(x, bound.var(h.w_hidden));
        let pre = g.add_row(pre, bound.var(h.b_hidden));
        let act = g.gelu(pre);
        let out = g.matmul(act, bound.var(h.w_out));
        g.add_row(out, bound.var(h.b_out))
    }

    fn attention(g: &mut Graph, bound: &Bound, h: &AttnHandles, x: Var, key_mask: Var, d_out: usize) -> Var {
        let q = g.matmul(x, bound.var(h.wq));
        let q = g.add_row(q, bound.var(h.bq));
        let k = g.matmul(x, bound.var(h.wk));
        let k = g.add_row(k, bound.var(h.bk));
        let v = g.matmul(x, bound.var(h.wv));
        let v = g.add_row(v, bound.var(h.bv));
        let kt = g.transpose(k);
        let scores = g.matmul(q, kt);
        let scaled = g.scale(scores, 1.0 / (d_out as Scalar).sqrt());
        let probs = g.softmax_rows(scaled, Some(key_mask));
        g.matmul(probs, v)
    }

    /// Start/end logits for one chunk's hidden states.
    pub fn forward(
        &self,
        g: &mut Graph,
        bound: &Bound,
        hidden: &Hidden,
        input: &TokenizedInput,
    ) -> Result<SpanLogits> {
        let (t_len, d) = g.shape(hidden.seq);
        if d != self.d_model {
            return Err(Error::contract(format!(
                "head expects d_model {}, got {d}",
                self.d_model
            )));
        }
        if t_len != input.len() {
            return Err(Error::contract("head: sequence/input length mismatch"));
        }

        let logits = match &self.params {
            HeadParams::Mlp { w, b } => {
                let joint = g.matmul(hidden.seq, bound.var(*w));
                let joint = g.add_row(joint, bound.var(*b));
                let start_col = g.slice_cols(joint, 0, 1);
                let end_col = g.slice_cols(joint, 1, 1);
                SpanLogits {
                    start: g.transpose(start_col),
                    end: g.transpose(end_col),
                }
            }
            HeadParams::Cmlp { start_mlp, end_mlp } => {
                let start_col = Self::mlp(g, bound, start_mlp, hidden.seq);
                let cond = if self.cond_softmax {
                    let row = g.transpose(start_col);
                    let mask = g.constant(span_candidate_mask(input));
                    let sm = g.softmax_rows(row, Some(mask));
                    g.transpose(sm)
                } else {
                    start_col
                };
                let cat = g.concat_cols(&[hidden.seq, cond]);
                let end_col = Self::mlp(g, bound, end_mlp, cat);
                SpanLogits {
                    start: g.transpose(start_col),
                    end: g.transpose(end_col),
                }
            }
            HeadParams::Csat { attn1, start_mlp, attn2, end_mlp } => {
                let key_mask = g.constant(attention_mask_row(input));
                let a1 = Self::attention(g, bound, attn1, hidden.seq, key_mask, self.d_model);
                let start_col = Self::mlp(g, bound, start_mlp, a1);
                let cat = g.concat_cols(&[hidden.seq, a1]);
                let a2 = Self::attention(g, bound, attn2, cat, key_mask, self.d_model);
                let end_col = Self::mlp(g, bound, end_mlp, a2);
                SpanLogits {
                    start: g.transpose(start_col),
                    end: g.transpose(end_col),
                }
            }
        };
        if let Some(err) = g.numeric_error() {
            return Err(err);
        }
        Ok(logits)
    }
}

/// 1xT 0/1 mask of non-PAD positions.
pub fn attention_mask_row(input: &TokenizedInput) -> Tensor {
    Tensor::row_vec(input.attention_mask.iter().map(|&m| Scalar::from(m)).collect())
}

/// 1xT 0/1 mask of positions a span probability may use: context tokens
/// plus the CLS no-answer slot.
pub fn span_candidate_mask(input: &TokenizedInput) -> Tensor {
    let mut data: Vec<Scalar> = input.context_mask().iter().map(|&m| Scalar::from(m)).collect();
    data[0] = 1.0;
    Tensor::row_vec(data)
}

/// Best (start, end, score) with both ends on valid positions, start <=
/// end, and span length capped. Ties prefer the smaller start, then the
/// smaller end; with no valid position the CLS pair is the no-answer
/// sentinel.
pub fn decode_span(pred: &SpanPrediction, max_answer_len: usize) -> Result<(usize, usize, Scalar)> {
    if max_answer_len == 0 {
        return Err(Error::contract("decode_span: max_answer_len must be >= 1"));
    }
    let t = pred.start_logits.len();
    if pred.end_logits.len() != t || pred.valid_mask.len() != t {
        return Err(Error::contract("decode_span: ragged prediction vectors"));
    }
    let mut best: Option<(usize, usize, Scalar)> = None;
    for s in 0..t {
        if pred.valid_mask[s] == 0 {
            continue;
        }
        for e in s..t.min(s + max_answer_len) {
            if pred.valid_mask[e] == 0 {
                continue;
            }
            let score = pred.start_logits[s] + pred.end_logits[e];
            if best.map_or(true, |(_, _, b)| score > b) {
                best = Some((s, e, score));
            }
        }
    }
    Ok(best.unwrap_or((0, 0, pred.start_logits[0] + pred.end_logits[0])))
}

/// Decode every chunk of one example, take the globally best span, and map
/// it back to the source context text. The CLS sentinel maps to the empty
/// string.
pub fn aggregate_chunks(
    context: &str,
    items: &[(&Chunk, &SpanPrediction)],
    max_answer_len: usize,
) -> Result<String> {
    if items.is_empty() {
        return Err(Error::contract("aggregate_chunks: no chunks"));
    }
    debug_assert!(items.windows(2).all(|w| w[0].0.parent_id == w[1].0.parent_id));

    let mut best: Option<(Scalar, &Chunk, usize, usize)> = None;
    for (chunk, pred) in items {
        let (s, e, score) = decode_span(pred, max_answer_len)?;
        if best.as_ref().map_or(true, |(b, ..)| score > *b) {
            best = Some((score, chunk, s, e));
        }
    }
    let (_, chunk, s, e) = best.expect("nonempty items");
    match (chunk.input.offsets[s], chunk.input.offsets[e]) {
        (Some(so), Some(eo)) => Ok(context[so.0..eo.1].to_string()),
        _ => Ok(String::new()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{chunk_example, Answer, Provenance, QAExample, Split};
    use crate::encoder::{encode_pair, Vocab};
    use crate::numerics::grad_check_group;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const T: usize = 16;
    const D: usize = 4;

    fn test_input(vocab: &Vocab) -> TokenizedInput {
        encode_pair("which word", "alpha beta gamma delta epsilon", T, vocab).unwrap()
    }

    fn rand_hidden(g: &mut Graph, seed: u64) -> Hidden {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..T * D).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let seq = g.constant(Tensor::new(T, D, data));
        let cls = g.slice_rows(seq, 0, 1);
        Hidden { seq, cls }
    }

    fn build_head(kind: HeadKind, seed: u64) -> (SpanHead, ParamGroup) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut group = ParamGroup::new();
        let head = SpanHead::init(kind, D, &mut group, &mut rng);
        (head, group)
    }

    #[test]
    fn all_kinds_emit_full_length_logits() {
        let vocab = Vocab::build(["alpha beta gamma delta epsilon which word"]);
        let input = test_input(&vocab);
        for kind in [HeadKind::Mlp, HeadKind::Cmlp, HeadKind::Csat] {
            let (head, group) = build_head(kind, 1);
            let mut g = Graph::new();
            let bound = group.bind(&mut g);
            let hidden = rand_hidden(&mut g, 2);
            let logits = head.forward(&mut g, &bound, &hidden, &input).unwrap();
            assert_eq!(g.shape(logits.start), (1, T));
            assert_eq!(g.shape(logits.end), (1, T));
        }
    }

    #[test]
    fn cmlp_zeroed_condition_channel_matches_unconditioned_mlp() {
        let vocab = Vocab::build(["alpha beta gamma delta epsilon which word"]);
        let input = test_input(&vocab);
        let (head, mut group) = build_head(HeadKind::Cmlp, 3);

        // Zero the concat channel's row of the end MLP hidden weights.
        let w = group.find("head.end.w_hidden").unwrap().clone();
        let (rows, cols) = w.shape();
        assert_eq!(rows, D + 1);
        let mut zeroed = w.clone();
        for j in 0..cols {
            zeroed.set(D, j, 0.0);
        }
        let handle = group.handle_of("head.end.w_hidden").unwrap();
        group.set(handle, zeroed);

        let mut g = Graph::new();
        let bound = group.bind(&mut g);
        let hidden = rand_hidden(&mut g, 4);
        let logits = head.forward(&mut g, &bound, &hidden, &input).unwrap();
        let got = g.value(logits.end).clone();

        // Oracle: the end MLP applied to seq alone (first D weight rows).
        let seq = g.value(hidden.seq).clone();
        let wh = group.find("head.end.w_hidden").unwrap();
        let bh = group.find("head.end.b_hidden").unwrap();
        let wo = group.find("head.end.w_out").unwrap();
        let bo = group.find("head.end.b_out").unwrap();
        let gelu = |x: Scalar| {
            let s = (2.0 / std::f64::consts::PI).sqrt() as Scalar;
            0.5 * x * (1.0 + (s * (x + 0.044715 * x * x * x)).tanh())
        };
        for t in 0..T {
            let mut out = bo.get(0, 0);
            for h in 0..cols {
                let mut pre = bh.get(0, h);
                for i in 0..D {
                    pre += seq.get(t, i) * wh.get(i, h);
                }
                out += gelu(pre) * wo.get(h, 0);
            }
            assert!((got.get(0, t) - out).abs() < 1e-12, "position {t}");
        }
    }

    #[test]
    fn csat_matches_dense_oracle_on_toy_sequence() {
        // Three positions, all valid context: tiny hand-checkable setup.
        let input = TokenizedInput {
            ids: vec![5, 6, 7],
            attention_mask: vec![1, 1, 1],
            context_range: (0, 3),
            offsets: vec![Some((0, 1)), Some((2, 3)), Some((4, 5))],
        };
        let (head, group) = build_head(HeadKind::Csat, 5);
        let mut g = Graph::new();
        let bound = group.bind(&mut g);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let seq_t = Tensor::new(3, D, (0..3 * D).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let seq = g.constant(seq_t.clone());
        let cls = g.slice_rows(seq, 0, 1);
        let logits = head
            .forward(&mut g, &bound, &Hidden { seq, cls }, &input)
            .unwrap();

        // Dense oracle with plain loops.
        let get = |name: &str| group.find(name).unwrap();
        let gelu = |x: Scalar| {
            let s = (2.0 / std::f64::consts::PI).sqrt() as Scalar;
            0.5 * x * (1.0 + (s * (x + 0.044715 * x * x * x)).tanh())
        };
        let linear = |x: &Vec<Vec<Scalar>>, w: &Tensor, b: &Tensor| -> Vec<Vec<Scalar>> {
            x.iter()
                .map(|row| {
                    (0..w.cols())
                        .map(|j| {
                            row.iter().enumerate().map(|(i, v)| v * w.get(i, j)).sum::<Scalar>()
                                + b.get(0, j)
                        })
                        .collect()
                })
                .collect()
        };
        let attn = |x: &Vec<Vec<Scalar>>, pfx: &str| -> Vec<Vec<Scalar>> {
            let q = linear(x, get(&format!("{pfx}.wq")), get(&format!("{pfx}.bq")));
            let k = linear(x, get(&format!("{pfx}.wk")), get(&format!("{pfx}.bk")));
            let v = linear(x, get(&format!("{pfx}.wv")), get(&format!("{pfx}.bv")));
            let scale = 1.0 / (D as Scalar).sqrt();
            (0..3)
                .map(|i| {
                    let scores: Vec<Scalar> = (0..3)
                        .map(|j| (0..D).map(|c| q[i][c] * k[j][c]).sum::<Scalar>() * scale)
                        .collect();
                    let max = scores.iter().cloned().fold(Scalar::NEG_INFINITY, Scalar::max);
                    let exps: Vec<Scalar> = scores.iter().map(|s| (s - max).exp()).collect();
                    let z: Scalar = exps.iter().sum();
                    (0..D)
                        .map(|c| (0..3).map(|j| exps[j] / z * v[j][c]).sum::<Scalar>())
                        .collect()
                })
                .collect()
        };
        let mlp = |x: &Vec<Vec<Scalar>>, pfx: &str| -> Vec<Scalar> {
            let wh = get(&format!("{pfx}.w_hidden"));
            let bh = get(&format!("{pfx}.b_hidden"));
            let wo = get(&format!("{pfx}.w_out"));
            let bo = get(&format!("{pfx}.b_out"));
            x.iter()
                .map(|row| {
                    let mut out = bo.get(0, 0);
                    for h in 0..wh.cols() {
                        let mut pre = bh.get(0, h);
                        for (i, v) in row.iter().enumerate() {
                            pre += v * wh.get(i, h);
                        }
                        out += gelu(pre) * wo.get(h, 0);
                    }
                    out
                })
                .collect()
        };

        let x: Vec<Vec<Scalar>> = (0..3).map(|t| seq_t.row(t).to_vec()).collect();
        let a1 = attn(&x, "head.attn1");
        let want_start = mlp(&a1, "head.start");
        let cat: Vec<Vec<Scalar>> = x
            .iter()
            .zip(&a1)
            .map(|(a, b)| a.iter().chain(b).cloned().collect())
            .collect();
        let a2 = attn(&cat, "head.attn2");
        let want_end = mlp(&a2, "head.end");

        for t in 0..3 {
            assert!((g.value(logits.start).get(0, t) - want_start[t]).abs() < 1e-10);
            assert!((g.value(logits.end).get(0, t) - want_end[t]).abs() < 1e-10);
        }
    }

    #[test]
    fn conditional_heads_have_live_start_to_end_path() {
        let vocab = Vocab::build(["alpha beta gamma delta epsilon which word"]);
        let input = test_input(&vocab);
        for kind in [HeadKind::Cmlp, HeadKind::Csat] {
            let (head, group) = build_head(kind, 7);
            let run = |grp: &ParamGroup| {
                let mut g = Graph::new();
                let bound = grp.bind(&mut g);
                let hidden = rand_hidden(&mut g, 8);
                let logits = head.forward(&mut g, &bound, &hidden, &input).unwrap();
                g.value(logits.end).clone()
            };
            let base = run(&group);
            let mut nudged = group.clone();
            // The start pathway feeding the end logits: the start-logit
            // channel for cmlp, the first self-attention for csat.
            let target = match kind {
                HeadKind::Cmlp => "head.start.w_hidden",
                HeadKind::Csat => "head.attn1.wq",
                HeadKind::Mlp => unreachable!(),
            };
            let idx = group.handle_of(target).unwrap();
            nudged.get_mut(idx).data_mut()[0] += 0.05;
            let moved = run(&nudged);
            let delta: Scalar = base
                .data()
                .iter()
                .zip(moved.data())
                .map(|(a, b)| (a - b).abs())
                .sum();
            assert!(delta > 0.0, "{kind:?}: end logits ignore the start path");
        }
    }

    #[test]
    fn gradient_check_every_head_kind() {
        let vocab = Vocab::build(["alpha beta gamma delta epsilon which word"]);
        let input = test_input(&vocab);
        for kind in [HeadKind::Mlp, HeadKind::Cmlp, HeadKind::Csat] {
            let (head, group) = build_head(kind, 9);
            let mut rng = ChaCha8Rng::seed_from_u64(10);
            let w_start = Tensor::new(1, T, (0..T).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let w_end = Tensor::new(1, T, (0..T).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let seq_t = Tensor::new(T, D, (0..T * D).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let err = grad_check_group(
                |g, bound| {
                    let seq = g.constant(seq_t.clone());
                    let cls = g.slice_rows(seq, 0, 1);
                    let logits = head.forward(g, bound, &Hidden { seq, cls }, &input)?;
                    let ws = g.constant(w_start.clone());
                    let we = g.constant(w_end.clone());
                    let s = g.mul(logits.start, ws);
                    let e = g.mul(logits.end, we);
                    let s = g.sum_all(s);
                    let e = g.sum_all(e);
                    Ok(g.add(s, e))
                },
                &group,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{kind:?}: rel err {err}");
        }
    }

    #[test]
    fn decode_examples_from_contract() {
        let pred = SpanPrediction {
            start_logits: vec![0.0, 5.0, 0.0],
            end_logits: vec![0.0, 0.0, 5.0],
            valid_mask: vec![1, 1, 1],
        };
        assert_eq!(decode_span(&pred, 3).unwrap(), (1, 2, 10.0));
        assert_eq!(decode_span(&pred, 1).unwrap(), (1, 1, 5.0));

        let flat = SpanPrediction {
            start_logits: vec![0.5; 4],
            end_logits: vec![0.5; 4],
            valid_mask: vec![0, 1, 1, 1],
        };
        assert_eq!(decode_span(&flat, 4).unwrap(), (1, 1, 1.0));
    }

    #[test]
    fn decode_falls_back_to_cls_sentinel() {
        let pred = SpanPrediction {
            start_logits: vec![1.5, 2.0, 3.0],
            end_logits: vec![0.5, 2.0, 3.0],
            valid_mask: vec![0, 0, 0],
        };
        assert_eq!(decode_span(&pred, 5).unwrap(), (0, 0, 2.0));
    }

    fn brute_force(pred: &SpanPrediction, max_len: usize) -> (usize, usize, Scalar) {
        let t = pred.start_logits.len();
        let mut best: Option<(usize, usize, Scalar)> = None;
        for s in 0..t {
            for e in 0..t {
                let ok = pred.valid_mask[s] == 1
                    && pred.valid_mask[e] == 1
                    && s <= e
                    && e - s < max_len;
                if !ok {
                    continue;
                }
                let score = pred.start_logits[s] + pred.end_logits[e];
                let better = match best {
                    None => true,
                    Some((bs, be, bv)) => {
                        score > bv || (score == bv && (s < bs || (s == bs && e < be)))
                    }
                };
                if better {
                    best = Some((s, e, score));
                }
            }
        }
        best.unwrap_or((0, 0, pred.start_logits[0] + pred.end_logits[0]))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn decode_matches_quadratic_brute_force(
            logits in proptest::collection::vec(-8.0f64..8.0, 2..24),
            ends in proptest::collection::vec(-8.0f64..8.0, 2..24),
            mask_bits in proptest::collection::vec(0u8..2, 2..24),
            max_len in 1usize..6,
        ) {
            let t = logits.len().min(ends.len()).min(mask_bits.len());
            let pred = SpanPrediction {
                start_logits: logits[..t].iter().map(|&v| v as Scalar).collect(),
                end_logits: ends[..t].iter().map(|&v| v as Scalar).collect(),
                valid_mask: mask_bits[..t].to_vec(),
            };
            prop_assert_eq!(decode_span(&pred, max_len).unwrap(), brute_force(&pred, max_len));
        }

        #[test]
        fn decoded_span_stays_inside_context(
            seed in 0u64..500,
        ) {
            let vocab = Vocab::build(["alpha beta gamma delta epsilon which word"]);
            let input = encode_pair("which word", "alpha beta gamma delta epsilon", T, &vocab).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pred = SpanPrediction {
                start_logits: (0..T).map(|_| rng.gen_range(-5.0..5.0)).collect(),
                end_logits: (0..T).map(|_| rng.gen_range(-5.0..5.0)).collect(),
                valid_mask: input.context_mask(),
            };
            let (s, e, _) = decode_span(&pred, 30).unwrap();
            prop_assert!(input.is_context(s) && input.is_context(e));
        }
    }

    fn chunked_example() -> (QAExample, Vec<Chunk>, Vocab) {
        let toks: Vec<String> = (0..22).map(|i| format!("w{i}")).collect();
        let context = toks.join(" ");
        let answer = "w14";
        let start = context.find(answer).unwrap();
        let ex = QAExample {
            id: "agg".into(),
            context: context.clone(),
            question: "what is it".into(),
            answers: vec![Answer { text: answer.into(), span: (start, start + answer.len()) }],
            domain_id: 0,
            split: Split::Train,
            provenance: Provenance::Original,
        };
        let vocab = Vocab::build([context.as_str(), "what is it"]);
        let chunks = chunk_example(&ex, 16, 4, &vocab).unwrap();
        assert_eq!(chunks.len(), 3);
        (ex, chunks, vocab)
    }

    fn one_hot_pred(chunk: &Chunk, value: Scalar) -> SpanPrediction {
        let t = chunk.input.len();
        let mut pred = SpanPrediction {
            start_logits: vec![0.0; t],
            end_logits: vec![0.0; t],
            valid_mask: chunk.input.context_mask(),
        };
        if chunk.gold_start > 0 {
            pred.start_logits[chunk.gold_start] = value;
            pred.end_logits[chunk.gold_end] = value;
        }
        pred
    }

    #[test]
    fn aggregate_singleton_equals_decode_plus_offsets() {
        let (ex, chunks, _) = chunked_example();
        let with_gold: Vec<&Chunk> = chunks.iter().filter(|c| c.gold_start > 0).collect();
        let chunk = with_gold[0];
        let pred = one_hot_pred(chunk, 4.0);
        let text = aggregate_chunks(&ex.context, &[(chunk, &pred)], 30).unwrap();
        assert_eq!(text, "w14");
    }

    #[test]
    fn aggregate_prefers_higher_scoring_chunk() {
        let (ex, chunks, _) = chunked_example();
        // Give a wrong span in chunk 0 a low score and the true span in a
        // later chunk a high score.
        let mut preds: Vec<SpanPrediction> = chunks.iter().map(|c| one_hot_pred(c, 4.0)).collect();
        let (b, _) = chunks[0].input.context_range;
        preds[0].start_logits[b] = 1.0;
        preds[0].end_logits[b] = 1.0;
        let items: Vec<(&Chunk, &SpanPrediction)> = chunks.iter().zip(preds.iter()).collect();
        assert_eq!(aggregate_chunks(&ex.context, &items, 30).unwrap(), "w14");
    }

    #[test]
    fn overlapping_chunks_yield_identical_text_for_same_answer() {
        let (ex, chunks, _) = chunked_example();
        let holders: Vec<&Chunk> = chunks.iter().filter(|c| c.gold_start > 0).collect();
        assert!(holders.len() >= 2, "answer should sit in the overlap");
        for holder in &holders {
            let pred = one_hot_pred(holder, 4.0);
            let text = aggregate_chunks(&ex.context, &[(holder, &pred)], 30).unwrap();
            assert_eq!(text, "w14");
        }
    }

    #[test]
    fn aggregate_rejects_empty_input() {
        assert!(aggregate_chunks("ctx", &[], 30).is_err());
    }
}
