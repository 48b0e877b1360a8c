//! Adversarial QA training: span NLL, the adversarial and discriminator
//! objectives with their alternation schedule, heated tanh annealing, the
//! hidden-state normality regularizer, and fine-tuning.

use crate::data::{chunk_example, Chunk, QAExample, Split};
use crate::discriminator::{DiscInput, Discriminator, DiscriminatorConfig};
use crate::encoder::{
    Dropout, EncoderConfig, Hidden, SequenceEncoder, TokenizedInput, TransformerEncoder, Vocab,
};
use crate::error::{Error, Result};
use crate::eval::{metric_report, MetricReport};
use crate::heads::{aggregate_chunks, span_candidate_mask, HeadKind, SpanHead, SpanLogits};
use crate::numerics::{AdamParams, AdamState, Bound, Graph, ParamGroup, Scalar, Var};
use crate::rng::RunRng;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscObjective {
    Nll,
    Kld,
}

impl std::str::FromStr for DiscObjective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nll" => Ok(DiscObjective::Nll),
            "kld" => Ok(DiscObjective::Kld),
            other => Err(Error::config(format!("unknown discriminator objective `{other}`"))),
        }
    }
}

/// Whether the run trains the adversarial pair or just the QA model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Qagan,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub head: HeadKind,
    pub disc_input: DiscInput,
    pub disc_objective: DiscObjective,
    pub anneal: bool,
    /// Ablation toggle: also weight the discriminator loss by the anneal
    /// schedule.
    pub anneal_disc: bool,
    pub h_kld: bool,
    pub lambda1: Scalar,
    pub lambda2: Scalar,
    pub lambda_kld: Scalar,
    /// None resolves to 0.4% of the planned step count.
    pub n_ws: Option<usize>,
    /// None resolves to the planned step count.
    pub n_max: Option<usize>,
    pub n_td: usize,
    pub n_fd: usize,
    pub lr: Scalar,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub max_answer_len: usize,
    pub stride: usize,
    pub cond_softmax: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            head: HeadKind::Cmlp,
            disc_input: DiscInput::Cls,
            disc_objective: DiscObjective::Nll,
            anneal: true,
            anneal_disc: false,
            h_kld: false,
            lambda1: 0.5,
            lambda2: 0.5,
            lambda_kld: 0.01,
            n_ws: None,
            n_max: None,
            n_td: 1,
            n_fd: 2,
            lr: 3e-5,
            epochs: 3,
            batch_size: 8,
            seed: 7,
            max_answer_len: 30,
            stride: 128,
            cond_softmax: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_td < 1 || self.n_fd < 1 {
            return Err(Error::config("n_td and n_fd must be >= 1"));
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 || self.lambda_kld < 0.0 {
            return Err(Error::config("loss weights must be nonnegative"));
        }
        if let (Some(ws), Some(mx)) = (self.n_ws, self.n_max) {
            if ws >= mx {
                return Err(Error::config("n_ws must be below n_max"));
            }
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::config("batch_size and epochs must be positive"));
        }
        if self.lr < 0.0 {
            return Err(Error::config("learning rate must be nonnegative"));
        }
        if self.max_answer_len == 0 {
            return Err(Error::config("max_answer_len must be >= 1"));
        }
        Ok(())
    }
}

// ── loss terms ──────────────────────────────────────────────────────────

/// Mean over the batch of -[log P(start=gold_s) + log P(end=gold_e)],
/// with each probability a softmax over the chunk's context positions plus
/// the CLS no-answer slot.
pub fn qa_loss(
    g: &mut Graph,
    items: &[(SpanLogits, &TokenizedInput, (usize, usize))],
) -> Result<Var> {
    if items.is_empty() {
        return Err(Error::contract("qa_loss: empty batch"));
    }
    let mut terms = Vec::with_capacity(items.len() * 4);
    for (logits, input, (gold_s, gold_e)) in items {
        for &gold in [gold_s, gold_e].iter() {
            let ok = *gold == 0 || input.is_context(*gold);
            if !ok {
                return Err(Error::contract(format!(
                    "qa_loss: gold position {gold} is masked out and not CLS"
                )));
            }
        }
        let mask = g.constant(span_candidate_mask(input));
        for (row, gold) in [(logits.start, *gold_s), (logits.end, *gold_e)] {
            let lse = g.logsumexp_rows(row, Some(mask));
            let picked = g.gather(row, &[(0, gold)]);
            let npicked = g.neg(picked);
            terms.push(g.add(lse, npicked));
        }
    }
    let stacked = g.concat_rows(&terms);
    let summed = g.sum_all(stacked);
    Ok(g.scale(summed, 1.0 / items.len() as Scalar))
}

/// Adversarial term over a batch of discriminator log-probs: NLL against
/// freshly sampled random domain labels, or KL to the uniform distribution.
pub fn adv_loss(
    g: &mut Graph,
    log_probs: &[Var],
    objective: DiscObjective,
    rng: &mut impl Rng,
) -> Result<Var> {
    if log_probs.is_empty() {
        return Err(Error::contract("adv_loss: empty batch"));
    }
    let k = g.shape(log_probs[0]).1;
    if k < 2 {
        return Err(Error::contract("adv_loss: need at least 2 domains"));
    }
    let mut terms = Vec::with_capacity(log_probs.len());
    match objective {
        DiscObjective::Nll => {
            for &lp in log_probs {
                let label = rng.gen_range(0..k);
                let picked = g.gather(lp, &[(0, label)]);
                terms.push(g.neg(picked));
            }
        }
        DiscObjective::Kld => {
            // KL(P || Uniform) = sum_c p_c * (log p_c + ln K); the
            // per-term form cancels exactly at the uniform distribution.
            let ln_k = (k as Scalar).ln();
            for &lp in log_probs {
                let p = g.exp(lp);
                let shifted = g.add_scalar(lp, ln_k);
                let plp = g.mul(p, shifted);
                terms.push(g.sum_all(plp));
            }
        }
    }
    let stacked = g.concat_rows(&terms);
    let summed = g.sum_all(stacked);
    Ok(g.scale(summed, 1.0 / log_probs.len() as Scalar))
}

/// lambda2-scaled mean NLL of the true domain labels.
pub fn disc_loss(g: &mut Graph, log_probs: &[Var], domains: &[usize], lambda2: Scalar) -> Result<Var> {
    if log_probs.is_empty() || log_probs.len() != domains.len() {
        return Err(Error::contract("disc_loss: batch shape mismatch"));
    }
    let k = g.shape(log_probs[0]).1;
    let mut terms = Vec::with_capacity(log_probs.len());
    for (&lp, &dom) in log_probs.iter().zip(domains) {
        if dom >= k {
            return Err(Error::contract(format!("disc_loss: domain id {dom} out of range 0..{k}")));
        }
        let picked = g.gather(lp, &[(0, dom)]);
        terms.push(g.neg(picked));
    }
    let stacked = g.concat_rows(&terms);
    let summed = g.sum_all(stacked);
    Ok(g.scale(summed, lambda2 / log_probs.len() as Scalar))
}

/// Heated tanh annealing weight at step `z`; z beyond n_max saturates.
pub fn anneal_weight(z: usize, n_ws: usize, n_max: usize) -> Result<Scalar> {
    if n_ws >= n_max {
        return Err(Error::contract("anneal_weight: n_ws must be below n_max"));
    }
    let z = z.min(n_max) as Scalar;
    let n_ws = n_ws as Scalar;
    let n_max = n_max as Scalar;
    let arg = 2.0 * (2.0 * z - n_max - n_ws) / (n_max - n_ws);
    Ok((arg.tanh() + 1.0) / 2.0)
}

/// KL of the batch-fitted diagonal Gaussian of CLS vectors from the
/// standard normal: mean over dims of (mu^2 + var - ln var - 1) / 2 with
/// unbiased variance, floored at 1e-8 before the log.
pub fn hidden_kld(g: &mut Graph, cls_batch: Var) -> Result<Var> {
    let (b, d) = g.shape(cls_batch);
    if b < 2 {
        return Err(Error::contract("hidden_kld: need a batch of at least 2"));
    }
    let ones = g.constant(crate::numerics::Tensor::filled(1, b, 1.0));
    let mean = {
        let s = g.matmul(ones, cls_batch);
        g.scale(s, 1.0 / b as Scalar)
    };
    let neg_mean = g.neg(mean);
    let centered = g.add_row(cls_batch, neg_mean);
    let sq = g.mul(centered, centered);
    let ssq = g.matmul(ones, sq);
    let var = g.scale(ssq, 1.0 / (b - 1) as Scalar);
    let var = g.clamp_min(var, 1e-8);
    let ln_var = g.ln(var);
    let mean_sq = g.mul(mean, mean);
    let sum = g.add(mean_sq, var);
    let neg_ln = g.neg(ln_var);
    let sum = g.add(sum, neg_ln);
    let sum = g.add_scalar(sum, -1.0);
    let total = g.sum_all(sum);
    Ok(g.scale(total, 0.5 / d as Scalar))
}

// ── model bundle and state ──────────────────────────────────────────────

/// Encoder plus prediction head sharing one optimizer group.
pub struct QaModel {
    pub group: ParamGroup,
    pub encoder: TransformerEncoder,
    pub head: SpanHead,
}

impl QaModel {
    pub fn init(
        enc_cfg: EncoderConfig,
        head_kind: HeadKind,
        cond_softmax: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut group = ParamGroup::new();
        let encoder = TransformerEncoder::init(enc_cfg, &mut group, rng)?;
        let mut head = SpanHead::init(head_kind, encoder.config().d_model, &mut group, rng);
        head.cond_softmax = cond_softmax;
        Ok(QaModel { group, encoder, head })
    }

    /// Inference: chunk, encode, decode, aggregate to answer text.
    pub fn predict(
        &self,
        ex: &QAExample,
        vocab: &Vocab,
        stride: usize,
        max_answer_len: usize,
    ) -> Result<String> {
        let chunks = chunk_example(ex, self.encoder.config().max_seq_len, stride, vocab)?;
        let mut g = Graph::new();
        let bound = self.group.bind_frozen(&mut g);
        let mut preds = Vec::with_capacity(chunks.len());
        for ch in &chunks {
            let hidden = self.encoder.encode(&mut g, &bound, &ch.input, None)?;
            let logits = self.head.forward(&mut g, &bound, &hidden, &ch.input)?;
            preds.push(logits.extract(&g, &ch.input));
        }
        let items: Vec<(&Chunk, &crate::heads::SpanPrediction)> =
            chunks.iter().zip(preds.iter()).collect();
        aggregate_chunks(&ex.context, &items, max_answer_len)
    }

    /// CLS embedding of the first chunk of an example (frozen forward).
    pub fn cls_embedding(&self, ex: &QAExample, vocab: &Vocab, stride: usize) -> Result<Vec<Scalar>> {
        let chunks = chunk_example(ex, self.encoder.config().max_seq_len, stride, vocab)?;
        let ch = chunks.first().ok_or_else(|| Error::contract("no chunks"))?;
        let mut g = Graph::new();
        let bound = self.group.bind_frozen(&mut g);
        let hidden = self.encoder.encode(&mut g, &bound, &ch.input, None)?;
        Ok(g.value(hidden.cls).data().to_vec())
    }
}

/// One line of the per-step metrics log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub l_qa: Scalar,
    pub l_adv: Option<Scalar>,
    pub w: Scalar,
    pub l_d: Option<Scalar>,
    pub h_kld: Option<Scalar>,
    pub lr: Scalar,
    pub total: Scalar,
}

pub trait StepSink {
    fn record(&mut self, rec: &StepRecord) -> Result<()>;
}

impl StepSink for Vec<StepRecord> {
    fn record(&mut self, rec: &StepRecord) -> Result<()> {
        self.push(rec.clone());
        Ok(())
    }
}

/// Append-only JSONL writer for the metrics log.
pub struct JsonlSink<W: std::io::Write> {
    out: W,
}

impl<W: std::io::Write> JsonlSink<W> {
    pub fn new(out: W) -> Self {
        JsonlSink { out }
    }
}

impl<W: std::io::Write> StepSink for JsonlSink<W> {
    fn record(&mut self, rec: &StepRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, rec)
            .map_err(|e| Error::data(format!("metrics log: {e}")))?;
        self.out.write_all(b"\n")?;
        Ok(())
    }
}

pub struct NullSink;

impl StepSink for NullSink {
    fn record(&mut self, _rec: &StepRecord) -> Result<()> {
        Ok(())
    }
}

pub struct TrainState {
    pub model: QaModel,
    pub disc: Option<(Discriminator, ParamGroup)>,
    pub adam_qa: AdamState,
    pub adam_disc: Option<AdamState>,
    /// Global QA step count.
    pub z: usize,
    pub n_ws: usize,
    pub n_max: usize,
    pub history: Vec<StepRecord>,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub state: TrainState,
    adv_rng: ChaCha8Rng,
    dropout_rng: ChaCha8Rng,
    data_rng: ChaCha8Rng,
}

impl Trainer {
    /// Build a trainer. `n_domains` sizes the discriminator;
    /// `planned_steps` resolves the annealing schedule when n_ws/n_max are
    /// left to their desk-scale defaults.
    pub fn new(
        cfg: TrainConfig,
        enc_cfg: EncoderConfig,
        n_domains: usize,
        mode: Mode,
        planned_steps: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        let run = RunRng::new(cfg.seed);

        let mut qa_rng = run.stream("init-qa");
        let model = QaModel::init(enc_cfg, cfg.head, cfg.cond_softmax, &mut qa_rng)?;
        let adam_qa = AdamState::new(AdamParams::with_lr(cfg.lr), &model.group)?;

        let disc = match mode {
            Mode::Baseline => None,
            Mode::Qagan => {
                let mut disc_rng = run.stream("init-disc");
                let mut group = ParamGroup::new();
                let d = Discriminator::init(
                    DiscriminatorConfig::new(cfg.disc_input, n_domains, model.encoder.config().d_model),
                    model.encoder.config().d_model,
                    &mut group,
                    &mut disc_rng,
                )?;
                Some((d, group))
            }
        };
        let adam_disc = disc
            .as_ref()
            .map(|(_, group)| AdamState::new(AdamParams::with_lr(cfg.lr), group))
            .transpose()?;

        let n_max = cfg.n_max.unwrap_or_else(|| planned_steps.max(2));
        let n_ws = cfg
            .n_ws
            .unwrap_or_else(|| usize::max(1, (n_max as f64 * 0.004).round() as usize));
        if n_ws >= n_max {
            return Err(Error::config(format!("n_ws {n_ws} must be below n_max {n_max}")));
        }

        Ok(Trainer {
            adv_rng: run.stream("adv-labels"),
            dropout_rng: run.stream("dropout"),
            data_rng: run.stream("data-order"),
            cfg,
            state: TrainState {
                model,
                disc,
                adam_qa,
                adam_disc,
                z: 0,
                n_ws,
                n_max,
                history: Vec::new(),
            },
        })
    }

    fn numeric_at_step(&self, err: Error) -> Error {
        match err {
            Error::Numeric { op, .. } => Error::numeric_at(op, format!("step {}", self.state.z)),
            other => other,
        }
    }

    /// One optimization step on a batch of chunks: QA (+ annealed
    /// adversarial term, + hidden-state regularizer) on the QA group, then
    /// the discriminator objective on its own group per the n_td schedule.
    pub fn train_step(&mut self, batch: &[&Chunk], sink: &mut dyn StepSink) -> Result<StepRecord> {
        if batch.is_empty() {
            return Err(Error::contract("train_step: empty batch"));
        }
        let z = self.state.z;
        let cfg = &self.cfg;
        let dropout_p = self.state.model.encoder.config().dropout;

        let mut g = Graph::new();
        let qa_bound = self.state.model.group.bind(&mut g);

        let mut hiddens: Vec<Hidden> = Vec::with_capacity(batch.len());
        let mut qa_items: Vec<(SpanLogits, &TokenizedInput, (usize, usize))> =
            Vec::with_capacity(batch.len());
        for chunk in batch {
            let hidden = if dropout_p > 0.0 {
                let mut ctx = Dropout { p: dropout_p, rng: &mut self.dropout_rng };
                self.state
                    .model
                    .encoder
                    .encode(&mut g, &qa_bound, &chunk.input, Some(&mut ctx))
            } else {
                self.state.model.encoder.encode(&mut g, &qa_bound, &chunk.input, None)
            }
            .map_err(|e| self.numeric_at_step(e))?;
            let logits = self
                .state
                .model
                .head
                .forward(&mut g, &qa_bound, &hidden, &chunk.input)
                .map_err(|e| self.numeric_at_step(e))?;
            qa_items.push((logits, &chunk.input, (chunk.gold_start, chunk.gold_end)));
            hiddens.push(hidden);
        }

        let l_qa = qa_loss(&mut g, &qa_items)?;
        let mut total = l_qa;

        let w = if cfg.anneal {
            anneal_weight(z, self.state.n_ws, self.state.n_max)?
        } else {
            1.0
        };

        let adv_active =
            self.state.disc.is_some() && cfg.lambda1 > 0.0 && z % cfg.n_fd == 0;
        let mut l_adv_var = None;
        if adv_active {
            let (disc, disc_group) = self.state.disc.as_ref().expect("disc present");
            let frozen = disc_group.bind_frozen(&mut g);
            let mut log_probs = Vec::with_capacity(batch.len());
            for (hidden, chunk) in hiddens.iter().zip(batch) {
                log_probs.push(disc.forward(&mut g, &frozen, hidden, &chunk.input)?);
            }
            let adv = adv_loss(&mut g, &log_probs, cfg.disc_objective, &mut self.adv_rng)?;
            let scaled = g.scale(adv, cfg.lambda1 * w);
            total = g.add(total, scaled);
            l_adv_var = Some(adv);
        }

        let mut h_kld_var = None;
        if cfg.h_kld && batch.len() >= 2 {
            let cls_rows: Vec<Var> = hiddens.iter().map(|h| h.cls).collect();
            let cls_batch = g.concat_rows(&cls_rows);
            let hk = hidden_kld(&mut g, cls_batch)?;
            let scaled = g.scale(hk, cfg.lambda_kld);
            total = g.add(total, scaled);
            h_kld_var = Some(hk);
        }

        let grads = g.backward(total).map_err(|e| self.numeric_at_step(e))?;
        let qa_grads = qa_bound.gradients(&self.state.model.group, &grads);
        if self.cfg.lr > 0.0 {
            self.state.adam_qa.step(&mut self.state.model.group, &qa_grads)?;
        }

        // Discriminator update on detached encoder outputs.
        let mut l_d_val = None;
        if self.state.disc.is_some() && z % cfg.n_td == 0 {
            let k = self.state.disc.as_ref().expect("disc present").0.n_domains();
            let eligible: Vec<usize> = (0..batch.len())
                .filter(|&i| batch[i].domain_id < k)
                .collect();
            if !eligible.is_empty() {
                let (disc, disc_group) = self.state.disc.as_ref().expect("disc present");
                let live = disc_group.bind(&mut g);
                let mut log_probs = Vec::with_capacity(eligible.len());
                let mut domains = Vec::with_capacity(eligible.len());
                for &i in &eligible {
                    let seq = g.detach(hiddens[i].seq);
                    let cls = g.detach(hiddens[i].cls);
                    let detached = Hidden { seq, cls };
                    log_probs.push(disc.forward(&mut g, &live, &detached, &batch[i].input)?);
                    domains.push(batch[i].domain_id);
                }
                let mut ld = disc_loss(&mut g, &log_probs, &domains, cfg.lambda2)?;
                if cfg.anneal_disc {
                    ld = g.scale(ld, w);
                }
                let d_grads_all = g.backward(ld).map_err(|e| self.numeric_at_step(e))?;
                let disc_group = &mut self.state.disc.as_mut().expect("disc present").1;
                let d_grads = live.gradients(disc_group, &d_grads_all);
                if self.cfg.lr > 0.0 {
                    self.state
                        .adam_disc
                        .as_mut()
                        .expect("adam state present")
                        .step(disc_group, &d_grads)?;
                }
                l_d_val = Some(g.scalar_value(ld)?);
            }
        }

        let record = StepRecord {
            step: z,
            l_qa: g.scalar_value(l_qa)?,
            l_adv: l_adv_var.map(|v| g.scalar_value(v)).transpose()?,
            w,
            l_d: l_d_val,
            h_kld: h_kld_var.map(|v| g.scalar_value(v)).transpose()?,
            lr: cfg.lr,
            total: g.scalar_value(total)?,
        };
        self.state.z += 1;
        self.state.history.push(record.clone());
        sink.record(&record)?;
        Ok(record)
    }

    /// Shuffled mini-batch epochs over a chunk set.
    pub fn run_epochs(
        &mut self,
        chunks: &[Chunk],
        epochs: usize,
        sink: &mut dyn StepSink,
    ) -> Result<()> {
        if chunks.is_empty() {
            return Err(Error::contract("run_epochs: no training chunks"));
        }
        for _ in 0..epochs {
            let mut order: Vec<usize> = (0..chunks.len()).collect();
            order.shuffle(&mut self.data_rng);
            for batch_ids in order.chunks(self.cfg.batch_size) {
                let batch: Vec<&Chunk> = batch_ids.iter().map(|&i| &chunks[i]).collect();
                self.train_step(&batch, sink)?;
            }
        }
        Ok(())
    }

    /// Continue training on an out-of-domain set: same objective and
    /// switches, fresh epoch counter, z carries on. Chunks from domains
    /// the discriminator does not know are excluded from its update only.
    pub fn finetune(
        &mut self,
        ood_chunks: &[Chunk],
        epochs: usize,
        sink: &mut dyn StepSink,
    ) -> Result<()> {
        if ood_chunks.is_empty() {
            return Err(Error::contract("finetune: empty dataset"));
        }
        for _ in 0..epochs {
            let mut order: Vec<usize> = (0..ood_chunks.len()).collect();
            order.shuffle(&mut self.data_rng);
            for batch_ids in order.chunks(self.cfg.batch_size) {
                let batch: Vec<&Chunk> = batch_ids.iter().map(|&i| &ood_chunks[i]).collect();
                self.train_step(&batch, sink)?;
            }
        }
        Ok(())
    }
}

/// Chunk the training split of a corpus.
pub fn chunk_corpus(
    examples: &[QAExample],
    split: Split,
    max_seq_len: usize,
    stride: usize,
    vocab: &Vocab,
) -> Result<Vec<Chunk>> {
    let mut out = Vec::new();
    for ex in examples.iter().filter(|e| e.split == split) {
        out.extend(chunk_example(ex, max_seq_len, stride, vocab)?);
    }
    Ok(out)
}

/// Predict the given examples and score them, grouped by domain name.
pub fn evaluate_model(
    model: &QaModel,
    examples: &[QAExample],
    domain_names: &[String],
    vocab: &Vocab,
    stride: usize,
    max_answer_len: usize,
) -> Result<MetricReport> {
    let mut rows: Vec<(String, String, Vec<String>)> = Vec::new();
    for ex in examples {
        let pred = model.predict(ex, vocab, stride, max_answer_len)?;
        let golds: Vec<String> = ex.answers.iter().map(|a| a.text.clone()).collect();
        let name = domain_names
            .get(ex.domain_id)
            .cloned()
            .unwrap_or_else(|| format!("domain{}", ex.domain_id));
        rows.push((name, pred, golds));
    }
    metric_report(
        rows.iter()
            .map(|(n, p, g)| (n.as_str(), p.as_str(), g.iter().map(String::as_str).collect())),
    )
}
