//! Small transformer encoder standing in for a pretrained sequence
//! encoder: learned token + position embeddings, multi-head attention with
//! key masking, and a feed-forward block per layer.

use super::input::TokenizedInput;
use crate::error::{Error, Result};
use crate::numerics::{Bound, Graph, ParamGroup, ParamHandle, Scalar, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormPlacement {
    Pre,
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
    Relu,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub vocab_size: usize,
    #[serde(default = "default_norm")]
    pub norm: NormPlacement,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    /// Dropout probability on sublayer outputs; 0 disables it.
    #[serde(default)]
    pub dropout: Scalar,
}

fn default_norm() -> NormPlacement {
    NormPlacement::Post
}

fn default_activation() -> Activation {
    Activation::Gelu
}

impl EncoderConfig {
    pub fn toy(vocab_size: usize) -> Self {
        EncoderConfig {
            n_layers: 2,
            n_heads: 4,
            d_model: 64,
            d_ff: 128,
            max_seq_len: 384,
            vocab_size,
            norm: NormPlacement::Post,
            activation: Activation::Gelu,
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model % self.n_heads != 0 {
            return Err(Error::config(format!(
                "d_model {} must be divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.max_seq_len < 16 {
            return Err(Error::config("max_seq_len must be at least 16"));
        }
        if self.n_layers == 0 || self.d_ff == 0 || self.vocab_size < 4 {
            return Err(Error::config("degenerate encoder configuration"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Encoder output: per-token hidden states plus the CLS summary row.
#[derive(Debug, Clone, Copy)]
pub struct Hidden {
    /// T x d_model sequence states.
    pub seq: Var,
    /// 1 x d_model view of the row at the CLS position.
    pub cls: Var,
}

/// Optional dropout context for a training-mode forward pass.
pub struct Dropout<'a> {
    pub p: Scalar,
    pub rng: &'a mut dyn rand::RngCore,
}

/// Anything that can map a tokenized input to hidden states. Downstream
/// modules (heads, discriminator, trainer) only see this contract, so a
/// pretrained encoder can be slotted in behind it.
pub trait SequenceEncoder {
    fn d_model(&self) -> usize;
    fn encode(
        &self,
        g: &mut Graph,
        params: &Bound,
        input: &TokenizedInput,
        dropout: Option<&mut Dropout>,
    ) -> Result<Hidden>;
}

struct LayerHandles {
    wq: ParamHandle,
    bq: ParamHandle,
    wk: ParamHandle,
    bk: ParamHandle,
    wv: ParamHandle,
    bv: ParamHandle,
    wo: ParamHandle,
    bo: ParamHandle,
    ln1_g: ParamHandle,
    ln1_b: ParamHandle,
    w1: ParamHandle,
    b1: ParamHandle,
    w2: ParamHandle,
    b2: ParamHandle,
    ln2_g: ParamHandle,
    ln2_b: ParamHandle,
}

pub struct TransformerEncoder {
    cfg: EncoderConfig,
    tok_emb: ParamHandle,
    pos_emb: ParamHandle,
    layers: Vec<LayerHandles>,
    final_ln: Option<(ParamHandle, ParamHandle)>,
}

const LN_EPS: Scalar = 1e-5;
const INIT_STD: Scalar = 0.02;

impl TransformerEncoder {
    /// Allocate parameters into `group`: normal(0, 0.02) weights, zero
    /// biases, unit layer-norm gains.
    pub fn init(cfg: EncoderConfig, group: &mut ParamGroup, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let tok_emb = group.add_normal("enc.tok_emb", cfg.vocab_size, d, INIT_STD, rng);
        let pos_emb = group.add_normal("enc.pos_emb", cfg.max_seq_len, d, INIT_STD, rng);
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let p = |s: &str| format!("enc.l{l}.{s}");
            layers.push(LayerHandles {
                wq: group.add_normal(p("wq"), d, d, INIT_STD, rng),
                bq: group.add_zeros(p("bq"), 1, d),
                wk: group.add_normal(p("wk"), d, d, INIT_STD, rng),
                bk: group.add_zeros(p("bk"), 1, d),
                wv: group.add_normal(p("wv"), d, d, INIT_STD, rng),
                bv: group.add_zeros(p("bv"), 1, d),
                wo: group.add_normal(p("wo"), d, d, INIT_STD, rng),
                bo: group.add_zeros(p("bo"), 1, d),
                ln1_g: group.add_ones(p("ln1_g"), 1, d),
                ln1_b: group.add_zeros(p("ln1_b"), 1, d),
                w1: group.add_normal(p("w1"), d, cfg.d_ff, INIT_STD, rng),
                b1: group.add_zeros(p("b1"), 1, cfg.d_ff),
                w2: group.add_normal(p("w2"), cfg.d_ff, d, INIT_STD, rng),
                b2: group.add_zeros(p("b2"), 1, d),
                ln2_g: group.add_ones(p("ln2_g"), 1, d),
                ln2_b: group.add_zeros(p("ln2_b"), 1, d),
            });
        }
        let final_ln = match cfg.norm {
            NormPlacement::Pre => Some((
                group.add_ones("enc.lnf_g", 1, d),
                group.add_zeros("enc.lnf_b", 1, d),
            )),
            NormPlacement::Post => None,
        };
        Ok(TransformerEncoder { cfg, tok_emb, pos_emb, layers, final_ln })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    fn activation(&self, g: &mut Graph, x: Var) -> Var {
        match self.cfg.activation {
            Activation::Gelu => g.gelu(x),
            Activation::Relu => g.relu(x),
        }
    }

    fn linear(g: &mut Graph, x: Var, w: Var, b: Var) -> Var {
        let xw = g.matmul(x, w);
        g.add_row(xw, b)
    }

    /// Multi-head attention over the full padded sequence; `key_mask` is a
    /// 1xT 0/1 row excluding PAD keys from every query's softmax.
    fn attention(
        &self,
        g: &mut Graph,
        layer: &LayerHandles,
        params: &Bound,
        x: Var,
        key_mask: Var,
    ) -> Var {
        let d = self.cfg.d_model;
        let dk = d / self.cfg.n_heads;
        let scale = 1.0 / (dk as Scalar).sqrt();

        let q = Self::linear(g, x, params.var(layer.wq), params.var(layer.bq));
        let k = Self::linear(g, x, params.var(layer.wk), params.var(layer.bk));
        let v = Self::linear(g, x, params.var(layer.wv), params.var(layer.bv));

        let mut heads = Vec::with_capacity(self.cfg.n_heads);
        for h in 0..self.cfg.n_heads {
            let qh = g.slice_cols(q, h * dk, dk);
            let kh = g.slice_cols(k, h * dk, dk);
            let vh = g.slice_cols(v, h * dk, dk);
            let kt = g.transpose(kh);
            let scores = g.matmul(qh, kt);
            let scaled = g.scale(scores, scale);
            let probs = g.softmax_rows(scaled, Some(key_mask));
            heads.push(g.matmul(probs, vh));
        }
        let cat = g.concat_cols(&heads);
        Self::linear(g, cat, params.var(layer.wo), params.var(layer.bo))
    }
}

/// Sample an inverted-dropout mask as a graph constant.
fn dropout_mask(g: &mut Graph, rows: usize, cols: usize, d: &mut Dropout) -> Var {
    let keep = 1.0 - d.p;
    let data = (0..rows * cols)
        .map(|_| {
            let u: f64 = rand::Rng::gen(&mut d.rng);
            if (u as Scalar) < d.p {
                0.0
            } else {
                1.0 / keep
            }
        })
        .collect();
    g.constant(Tensor::new(rows, cols, data))
}

impl SequenceEncoder for TransformerEncoder {
    fn d_model(&self) -> usize {
        self.cfg.d_model
    }

    fn encode(
        &self,
        g: &mut Graph,
        params: &Bound,
        input: &TokenizedInput,
        mut dropout: Option<&mut Dropout>,
    ) -> Result<Hidden> {
        let t_len = input.ids.len();
        if t_len != self.cfg.max_seq_len {
            return Err(Error::contract(format!(
                "input length {t_len} does not match max_seq_len {}",
                self.cfg.max_seq_len
            )));
        }

        let key_mask = g.constant(Tensor::row_vec(
            input.attention_mask.iter().map(|&m| Scalar::from(m)).collect(),
        ));

        let tok = g.embedding(params.var(self.tok_emb), &input.ids);
        let pos_ids: Vec<usize> = (0..t_len).collect();
        let pos = g.embedding(params.var(self.pos_emb), &pos_ids);
        let mut x = g.add(tok, pos);

        for (li, layer) in self.layers.iter().enumerate() {
            x = match self.cfg.norm {
                NormPlacement::Post => {
                    let mut attn = self.attention(g, layer, params, x, key_mask);
                    if let Some(d) = dropout.as_deref_mut() {
                        let m = dropout_mask(g, t_len, self.cfg.d_model, d);
                        attn = g.mul(attn, m);
                    }
                    let res = g.add(x, attn);
                    let x1 = g.layer_norm(res, params.var(layer.ln1_g), params.var(layer.ln1_b), LN_EPS);

                    let h = Self::linear(g, x1, params.var(layer.w1), params.var(layer.b1));
                    let h = self.activation(g, h);
                    let mut ffn = Self::linear(g, h, params.var(layer.w2), params.var(layer.b2));
                    if let Some(d) = dropout.as_deref_mut() {
                        let m = dropout_mask(g, t_len, self.cfg.d_model, d);
                        ffn = g.mul(ffn, m);
                    }
                    let res2 = g.add(x1, ffn);
                    g.layer_norm(res2, params.var(layer.ln2_g), params.var(layer.ln2_b), LN_EPS)
                }
                NormPlacement::Pre => {
                    let n1 = g.layer_norm(x, params.var(layer.ln1_g), params.var(layer.ln1_b), LN_EPS);
                    let mut attn = self.attention(g, layer, params, n1, key_mask);
                    if let Some(d) = dropout.as_deref_mut() {
                        let m = dropout_mask(g, t_len, self.cfg.d_model, d);
                        attn = g.mul(attn, m);
                    }
                    let x1 = g.add(x, attn);

                    let n2 = g.layer_norm(x1, params.var(layer.ln2_g), params.var(layer.ln2_b), LN_EPS);
                    let h = Self::linear(g, n2, params.var(layer.w1), params.var(layer.b1));
                    let h = self.activation(g, h);
                    let mut ffn = Self::linear(g, h, params.var(layer.w2), params.var(layer.b2));
                    if let Some(d) = dropout.as_deref_mut() {
                        let m = dropout_mask(g, t_len, self.cfg.d_model, d);
                        ffn = g.mul(ffn, m);
                    }
                    g.add(x1, ffn)
                }
            };
            if g.numeric_error().is_some() {
                return Err(Error::numeric_at("encoder", format!("layer {li}")));
            }
        }

        if let Some((gm, bt)) = self.final_ln {
            x = g.layer_norm(x, params.var(gm), params.var(bt), LN_EPS);
        }

        let cls = g.slice_rows(x, 0, 1);
        Ok(Hidden { seq: x, cls })
    }
}

/// Test double: returns a fixed tensor regardless of parameters, which
/// exercises the pretrained-adapter seam downstream modules rely on.
pub struct FixedEncoder {
    pub states: Tensor,
}

impl SequenceEncoder for FixedEncoder {
    fn d_model(&self) -> usize {
        self.states.cols()
    }

    fn encode(
        &self,
        g: &mut Graph,
        _params: &Bound,
        input: &TokenizedInput,
        _dropout: Option<&mut Dropout>,
    ) -> Result<Hidden> {
        if input.ids.len() != self.states.rows() {
            return Err(Error::contract("fixed encoder: input length mismatch"));
        }
        let seq = g.constant(self.states.clone());
        let cls = g.slice_rows(seq, 0, 1);
        Ok(Hidden { seq, cls })
    }
}
