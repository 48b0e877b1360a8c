//! Frozen-probe domain accuracy: a softmax-regression classifier trained
//! on fixed embeddings measures how much domain information they retain.

use crate::error::{Error, Result};
use crate::numerics::Scalar;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const ITERS: usize = 400;
const LR: Scalar = 0.5;
const L2: Scalar = 1e-4;

/// Train a fresh probe on a stratified 70% split of the embeddings and
/// report held-out accuracy. Deterministic under `split_seed`; the
/// embeddings themselves are never touched.
pub fn probe_domain_accuracy(
    embeddings: &[Vec<Scalar>],
    labels: &[usize],
    split_seed: u64,
) -> Result<Scalar> {
    if embeddings.len() != labels.len() {
        return Err(Error::contract("probe: embeddings/labels length mismatch"));
    }
    if embeddings.is_empty() {
        return Err(Error::contract("probe: empty input"));
    }
    let d = embeddings[0].len();
    if embeddings.iter().any(|e| e.len() != d) {
        return Err(Error::contract("probe: ragged embedding dimensions"));
    }
    let k = labels.iter().max().copied().unwrap_or(0) + 1;
    if k < 2 {
        return Err(Error::contract("probe: need at least 2 domains"));
    }
    for class in 0..k {
        if labels.iter().filter(|&&l| l == class).count() < 2 {
            return Err(Error::contract(format!("probe: class {class} has fewer than 2 samples")));
        }
    }

    // Stratified split keeps every class represented on both sides.
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for class in 0..k {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n_train = usize::max(1, (idx.len() as f64 * 0.7).floor() as usize);
        train_idx.extend_from_slice(&idx[..n_train]);
        test_idx.extend_from_slice(&idx[n_train..]);
    }

    // Standardize features with train-split statistics.
    let mut mean = vec![0.0; d];
    for &i in &train_idx {
        for j in 0..d {
            mean[j] += embeddings[i][j];
        }
    }
    for m in &mut mean {
        *m /= train_idx.len() as Scalar;
    }
    let mut std = vec![0.0; d];
    for &i in &train_idx {
        for j in 0..d {
            let c = embeddings[i][j] - mean[j];
            std[j] += c * c;
        }
    }
    for s in &mut std {
        *s = (*s / train_idx.len() as Scalar).sqrt().max(1e-8);
    }
    let feat = |i: usize| -> Vec<Scalar> {
        (0..d).map(|j| (embeddings[i][j] - mean[j]) / std[j]).collect()
    };

    // Full-batch gradient descent on softmax regression from zeros.
    let mut w = vec![0.0; d * k];
    let mut b = vec![0.0; k];
    let n = train_idx.len() as Scalar;
    let mut logits = vec![0.0; k];
    for _ in 0..ITERS {
        let mut gw = vec![0.0; d * k];
        let mut gb = vec![0.0; k];
        for &i in &train_idx {
            let x = feat(i);
            for (c, l) in logits.iter_mut().enumerate() {
                *l = b[c] + (0..d).map(|j| x[j] * w[j * k + c]).sum::<Scalar>();
            }
            let maxl = logits.iter().copied().fold(Scalar::NEG_INFINITY, Scalar::max);
            let z: Scalar = logits.iter().map(|l| (l - maxl).exp()).sum();
            for c in 0..k {
                let p = (logits[c] - maxl).exp() / z;
                let delta = p - Scalar::from(u8::from(labels[i] == c));
                gb[c] += delta;
                for j in 0..d {
                    gw[j * k + c] += delta * x[j];
                }
            }
        }
        for c in 0..k {
            b[c] -= LR * gb[c] / n;
        }
        for j in 0..d * k {
            w[j] -= LR * (gw[j] / n + L2 * w[j]);
        }
    }

    let mut correct = 0usize;
    for &i in &test_idx {
        let x = feat(i);
        let mut best = 0;
        let mut best_v = Scalar::NEG_INFINITY;
        for c in 0..k {
            let l = b[c] + (0..d).map(|j| x[j] * w[j * k + c]).sum::<Scalar>();
            if l > best_v {
                best_v = l;
                best = c;
            }
        }
        correct += usize::from(best == labels[i]);
    }
    Ok(correct as Scalar / test_idx.len() as Scalar)
}
