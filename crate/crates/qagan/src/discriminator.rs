//! Domain classifier over encoder representations: either the CLS vector
//! or a mask-aware mean-pool of the full hidden states, through a small
//! GELU MLP to log-probabilities over domains.

use crate::encoder::{Hidden, TokenizedInput};
use crate::error::{Error, Result};
use crate::numerics::{Bound, Graph, ParamGroup, ParamHandle, Scalar, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscInput {
    Cls,
    Hidden,
}

impl std::str::FromStr for DiscInput {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cls" => Ok(DiscInput::Cls),
            "hidden" => Ok(DiscInput::Hidden),
            other => Err(Error::config(format!("unknown discriminator input `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub input: DiscInput,
    pub n_domains: usize,
    /// Hidden layer widths; defaults to two layers of d_model.
    pub hidden: Vec<usize>,
}

impl DiscriminatorConfig {
    pub fn new(input: DiscInput, n_domains: usize, d_model: usize) -> Self {
        DiscriminatorConfig { input, n_domains, hidden: vec![d_model, d_model] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_domains < 2 {
            return Err(Error::config("discriminator needs at least 2 domains"));
        }
        Ok(())
    }
}

pub struct Discriminator {
    cfg: DiscriminatorConfig,
    layers: Vec<(ParamHandle, ParamHandle)>,
    w_out: ParamHandle,
    b_out: ParamHandle,
}

const INIT_STD: Scalar = 0.02;

impl Discriminator {
    pub fn init(
        cfg: DiscriminatorConfig,
        d_model: usize,
        group: &mut ParamGroup,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut layers = Vec::new();
        let mut d_in = d_model;
        for (i, &width) in cfg.hidden.iter().enumerate() {
            layers.push((
                group.add_normal(format!("disc.l{i}.w"), d_in, width, INIT_STD, rng),
                group.add_zeros(format!("disc.l{i}.b"), 1, width),
            ));
            d_in = width;
        }
        let w_out = group.add_normal("disc.out.w", d_in, cfg.n_domains, INIT_STD, rng);
        let b_out = group.add_zeros("disc.out.b", 1, cfg.n_domains);
        Ok(Discriminator { cfg, layers, w_out, b_out })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.cfg
    }

    pub fn n_domains(&self) -> usize {
        self.cfg.n_domains
    }

    /// Log-probabilities (1xK) for one chunk's representation.
    pub fn forward(
        &self,
        g: &mut Graph,
        bound: &Bound,
        hidden: &Hidden,
        input: &TokenizedInput,
    ) -> Result<Var> {
        let mut x = match self.cfg.input {
            DiscInput::Cls => hidden.cls,
            DiscInput::Hidden => {
                let count: usize = input.attention_mask.iter().map(|&m| usize::from(m)).sum();
                if count == 0 {
                    return Err(Error::contract("discriminator: all positions are masked"));
                }
                let mask = g.constant(Tensor::row_vec(
                    input.attention_mask.iter().map(|&m| Scalar::from(m)).collect(),
                ));
                let summed = g.matmul(mask, hidden.seq);
                g.scale(summed, 1.0 / count as Scalar)
            }
        };
        for (w, b) in &self.layers {
            x = g.matmul(x, bound.var(*w));
            x = g.add_row(x, bound.var(*b));
            x = g.gelu(x);
        }
        let logits = g.matmul(x, bound.var(self.w_out));
        let logits = g.add_row(logits, bound.var(self.b_out));
        let logp = g.log_softmax_rows(logits);
        if let Some(err) = g.numeric_error() {
            return Err(err);
        }
        Ok(logp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{encode_pair, Vocab};
    use crate::numerics::grad_check_group;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const T: usize = 16;
    const D: usize = 4;

    fn test_input(vocab: &Vocab) -> TokenizedInput {
        encode_pair("which word", "alpha beta gamma delta", T, vocab).unwrap()
    }

    fn build(input_kind: DiscInput, seed: u64) -> (Discriminator, ParamGroup) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut group = ParamGroup::new();
        let disc = Discriminator::init(
            DiscriminatorConfig::new(input_kind, 3, D),
            D,
            &mut group,
            &mut rng,
        )
        .unwrap();
        (disc, group)
    }

    fn rand_states(seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(T, D, (0..T * D).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    fn hidden_from(g: &mut Graph, states: Tensor) -> Hidden {
        let seq = g.constant(states);
        let cls = g.slice_rows(seq, 0, 1);
        Hidden { seq, cls }
    }

    fn zero_group(group: &mut ParamGroup) {
        let names: Vec<String> = group.params().iter().map(|p| p.name.clone()).collect();
        for name in names {
            let h = group.handle_of(&name).unwrap();
            let (r, c) = group.get(h).shape();
            group.set(h, Tensor::zeros(r, c));
        }
    }

    #[test]
    fn zero_parameters_give_uniform_log_probs() {
        let vocab = Vocab::build(["alpha beta gamma delta which word"]);
        let input = test_input(&vocab);
        let (disc, mut group) = build(DiscInput::Cls, 1);
        zero_group(&mut group);
        let mut g = Graph::new();
        let bound = group.bind(&mut g);
        let hidden = hidden_from(&mut g, rand_states(2));
        let logp = disc.forward(&mut g, &bound, &hidden, &input).unwrap();
        for k in 0..3 {
            let v = g.value(logp).get(0, k);
            assert!((v - (1.0f64 / 3.0).ln()).abs() < 1e-12, "entry {k} = {v}");
        }
    }

    #[test]
    fn log_probs_exponentiate_to_one() {
        let vocab = Vocab::build(["alpha beta gamma delta which word"]);
        let input = test_input(&vocab);
        for kind in [DiscInput::Cls, DiscInput::Hidden] {
            let (disc, group) = build(kind, 3);
            let mut g = Graph::new();
            let bound = group.bind(&mut g);
            let hidden = hidden_from(&mut g, rand_states(4));
            let logp = disc.forward(&mut g, &bound, &hidden, &input).unwrap();
            let sum: Scalar = g.value(logp).data().iter().map(|v| v.exp()).sum();
            assert!((sum - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn hidden_mode_equals_cls_mode_when_all_tokens_match_cls() {
        let vocab = Vocab::build(["alpha beta gamma delta which word"]);
        let input = test_input(&vocab);
        // Every valid row equals the CLS row, so the masked mean is the
        // CLS vector itself.
        let mut states = Tensor::zeros(T, D);
        let row: Vec<Scalar> = vec![0.3, -0.7, 1.1, 0.25];
        for t in 0..T {
            if input.attention_mask[t] == 1 {
                for (j, v) in row.iter().enumerate() {
                    states.set(t, j, *v);
                }
            } else {
                for j in 0..D {
                    states.set(t, j, 9.0); // PAD garbage, must be ignored
                }
            }
        }
        let (disc_cls, group) = build(DiscInput::Cls, 5);
        let run = |disc: &Discriminator| {
            let mut g = Graph::new();
            let bound = group.bind(&mut g);
            let hidden = hidden_from(&mut g, states.clone());
            let logp = disc.forward(&mut g, &bound, &hidden, &input).unwrap();
            g.value(logp).clone()
        };
        let a = run(&disc_cls);
        // Same parameters, hidden-input mode.
        let disc_hidden = Discriminator {
            cfg: DiscriminatorConfig::new(DiscInput::Hidden, 3, D),
            layers: disc_cls.layers.clone(),
            w_out: disc_cls.w_out,
            b_out: disc_cls.b_out,
        };
        let b = run(&disc_hidden);
        for k in 0..3 {
            assert!((a.get(0, k) - b.get(0, k)).abs() < 1e-12);
        }
    }

    #[test]
    fn hidden_mode_ignores_pad_values() {
        let vocab = Vocab::build(["alpha beta gamma delta which word"]);
        let input = test_input(&vocab);
        let (disc, group) = build(DiscInput::Hidden, 6);
        let mut base = rand_states(7);
        let run = |states: Tensor| {
            let mut g = Graph::new();
            let bound = group.bind(&mut g);
            let hidden = hidden_from(&mut g, states);
            let logp = disc.forward(&mut g, &bound, &hidden, &input).unwrap();
            g.value(logp).clone()
        };
        let a = run(base.clone());
        for t in 0..T {
            if input.attention_mask[t] == 0 {
                for j in 0..D {
                    base.set(t, j, -123.0);
                }
            }
        }
        let b = run(base);
        assert_eq!(a, b);
    }

    #[test]
    fn all_masked_sequence_is_rejected_in_hidden_mode() {
        let vocab = Vocab::build(["alpha beta gamma delta which word"]);
        let mut input = test_input(&vocab);
        input.attention_mask.fill(0);
        let (disc, group) = build(DiscInput::Hidden, 8);
        let mut g = Graph::new();
        let bound = group.bind(&mut g);
        let hidden = hidden_from(&mut g, rand_states(9));
        assert!(disc.forward(&mut g, &bound, &hidden, &input).is_err());
    }

    #[test]
    fn gradient_check_both_input_modes() {
        let vocab = Vocab::build(["alpha beta gamma delta which word"]);
        let input = test_input(&vocab);
        for kind in [DiscInput::Cls, DiscInput::Hidden] {
            let (disc, group) = build(kind, 10);
            let states = rand_states(11);
            let err = grad_check_group(
                |g, bound| {
                    let hidden = hidden_from(g, states.clone());
                    let logp = disc.forward(g, bound, &hidden, &input)?;
                    let picked = g.gather(logp, &[(0, 1)]);
                    let s = g.sum_all(picked);
                    Ok(g.neg(s))
                },
                &group,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{kind:?}: rel err {err}");
        }
    }
}
