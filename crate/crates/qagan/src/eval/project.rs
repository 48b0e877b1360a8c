//! 2-D projection of embeddings: PCA via covariance eigendecomposition and
//! exact symmetric t-SNE, plus the silhouette score used to quantify
//! cluster separation of the projected points.

use crate::error::{Error, Result};
use crate::numerics::Scalar;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMethod {
    Pca,
    Tsne,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TsneParams {
    pub perplexity: Scalar,
    pub iters: usize,
    /// None picks max(n/12, 10), which stays stable at desk-scale sample
    /// counts.
    pub learning_rate: Option<Scalar>,
    pub early_exaggeration: Scalar,
    pub exaggeration_iters: usize,
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TsneParams {
    fn default() -> Self {
        TsneParams {
            perplexity: 30.0,
            iters: 1000,
            learning_rate: None,
            early_exaggeration: 4.0,
            exaggeration_iters: 100,
            checkpoint_every: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub coords: Vec<[Scalar; 2]>,
    /// KL(P||Q) recorded at fixed intervals after the exaggeration phase
    /// (empty for PCA).
    pub kl_checkpoints: Vec<Scalar>,
}

pub fn project_2d(
    embeddings: &[Vec<Scalar>],
    method: ProjectionMethod,
    params: &TsneParams,
) -> Result<Projection> {
    let n = embeddings.len();
    if n < 3 {
        return Err(Error::contract("project_2d: need at least 3 samples"));
    }
    let d = embeddings[0].len();
    if embeddings.iter().any(|e| e.len() != d) {
        return Err(Error::contract("project_2d: ragged embedding dimensions"));
    }
    match method {
        ProjectionMethod::Pca => Ok(Projection { coords: pca_2d(embeddings, d)?, kl_checkpoints: Vec::new() }),
        ProjectionMethod::Tsne => {
            if n > 5000 {
                return Err(Error::contract("project_2d: exact t-SNE capped at 5000 samples"));
            }
            if 3.0 * params.perplexity > (n - 1) as Scalar {
                return Err(Error::config(format!(
                    "perplexity {} too large for {n} samples",
                    params.perplexity
                )));
            }
            tsne_2d(embeddings, params)
        }
    }
}

// ── PCA ─────────────────────────────────────────────────────────────────

/// Jacobi eigendecomposition of a symmetric matrix (row-major d x d).
/// Returns (eigenvalues, eigenvectors as columns).
fn jacobi_eigen(mut a: Vec<Scalar>, d: usize) -> (Vec<Scalar>, Vec<Scalar>) {
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += a[p * d + q] * a[p * d + q];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..d {
                    let aip = a[i * d + p];
                    let aiq = a[i * d + q];
                    a[i * d + p] = c * aip - s * aiq;
                    a[i * d + q] = s * aip + c * aiq;
                }
                for j in 0..d {
                    let apj = a[p * d + j];
                    let aqj = a[q * d + j];
                    a[p * d + j] = c * apj - s * aqj;
                    a[q * d + j] = s * apj + c * aqj;
                }
                for i in 0..d {
                    let vip = v[i * d + p];
                    let viq = v[i * d + q];
                    v[i * d + p] = c * vip - s * viq;
                    v[i * d + q] = s * vip + c * viq;
                }
            }
        }
    }
    let eig = (0..d).map(|i| a[i * d + i]).collect();
    (eig, v)
}

fn pca_2d(embeddings: &[Vec<Scalar>], d: usize) -> Result<Vec<[Scalar; 2]>> {
    let n = embeddings.len();
    let mut mean = vec![0.0; d];
    for e in embeddings {
        for j in 0..d {
            mean[j] += e[j];
        }
    }
    for m in &mut mean {
        *m /= n as Scalar;
    }

    let mut cov = vec![0.0; d * d];
    for e in embeddings {
        for i in 0..d {
            let ci = e[i] - mean[i];
            for j in i..d {
                cov[i * d + j] += ci * (e[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i * d + j] /= (n - 1) as Scalar;
            cov[j * d + i] = cov[i * d + j];
        }
    }

    let (eig, vecs) = jacobi_eigen(cov, d);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig[b].partial_cmp(&eig[a]).unwrap_or(std::cmp::Ordering::Equal));
    if eig[order[0]] <= 1e-12 {
        return Err(Error::data("pca: degenerate rank-0 data"));
    }

    // Deterministic sign: the largest-magnitude loading is positive.
    let mut components: Vec<Vec<Scalar>> = vec![vec![0.0; d]; 2];
    for (c, comp) in components.iter_mut().enumerate() {
        let col = order[c.min(d - 1)];
        for j in 0..d {
            comp[j] = vecs[j * d + col];
        }
        let mut best = 0;
        for j in 1..d {
            if comp[j].abs() > comp[best].abs() {
                best = j;
            }
        }
        if comp[best] < 0.0 {
            for v in comp.iter_mut() {
                *v = -*v;
            }
        }
    }

    Ok(embeddings
        .iter()
        .map(|e| {
            let mut out = [0.0; 2];
            for (c, comp) in components.iter().enumerate() {
                out[c] = (0..d).map(|j| (e[j] - mean[j]) * comp[j]).sum();
            }
            out
        })
        .collect())
}

// ── t-SNE ───────────────────────────────────────────────────────────────

fn squared_distances(x: &[Vec<Scalar>]) -> Vec<Scalar> {
    let n = x.len();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: Scalar = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            out[i * n + j] = d2;
            out[j * n + i] = d2;
        }
    }
    out
}

/// Conditional P(j|i) rows whose entropy matches ln(perplexity), found by
/// binary search over the Gaussian precision per point.
fn conditional_p(dist2: &[Scalar], n: usize, perplexity: Scalar) -> Vec<Scalar> {
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let mut beta: Scalar = 1.0;
        let mut beta_min = Scalar::NEG_INFINITY;
        let mut beta_max = Scalar::INFINITY;
        for _ in 0..64 {
            let mut sum = 0.0;
            for j in 0..n {
                if j != i {
                    p[i * n + j] = (-beta * dist2[i * n + j]).exp();
                    sum += p[i * n + j];
                } else {
                    p[i * n + j] = 0.0;
                }
            }
            let sum = sum.max(1e-300);
            let mut entropy = 0.0;
            for j in 0..n {
                if j != i {
                    let pj = p[i * n + j] / sum;
                    if pj > 1e-14 {
                        entropy -= pj * pj.ln();
                    }
                    p[i * n + j] = pj;
                }
            }
            let diff = entropy - target;
            if diff.abs() < 1e-7 {
                break;
            }
            if diff > 0.0 {
                beta_min = beta;
                beta = if beta_max.is_infinite() { beta * 2.0 } else { (beta + beta_max) / 2.0 };
            } else {
                beta_max = beta;
                beta = if beta_min.is_infinite() { beta / 2.0 } else { (beta + beta_min) / 2.0 };
            }
        }
    }
    p
}

fn tsne_2d(x: &[Vec<Scalar>], params: &TsneParams) -> Result<Projection> {
    let n = x.len();
    let d = x[0].len();

    // Center and scale to unit max-abs; keeps the gradient magnitudes in
    // the regime the default learning rate expects.
    let mut mean = vec![0.0; d];
    for xi in x {
        for j in 0..d {
            mean[j] += xi[j];
        }
    }
    for m in &mut mean {
        *m /= n as Scalar;
    }
    let mut scale: Scalar = 0.0;
    for xi in x {
        for j in 0..d {
            scale = scale.max((xi[j] - mean[j]).abs());
        }
    }
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let x: Vec<Vec<Scalar>> = x
        .iter()
        .map(|xi| (0..d).map(|j| (xi[j] - mean[j]) / scale).collect())
        .collect();

    let dist2 = squared_distances(&x);
    let pc = conditional_p(&dist2, n, params.perplexity);

    // Symmetrized joint P, floored for numeric stability.
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = ((pc[i * n + j] + pc[j * n + i]) / (2.0 * n as Scalar)).max(1e-12);
        }
    }

    let learning_rate = params
        .learning_rate
        .unwrap_or_else(|| Scalar::max(n as Scalar / 12.0, 10.0));

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut y: Vec<[Scalar; 2]> = (0..n)
        .map(|_| [rng.gen_range(-1e-4..1e-4), rng.gen_range(-1e-4..1e-4)])
        .collect();
    let mut vel: Vec<[Scalar; 2]> = vec![[0.0; 2]; n];
    let mut gains: Vec<[Scalar; 2]> = vec![[1.0; 2]; n];
    let mut q_unnorm = vec![0.0; n * n];
    let mut checkpoints = Vec::new();

    for iter in 0..params.iters {
        // Student-t affinities in the embedding.
        let mut z = 0.0;
        for i in 0..n {
            q_unnorm[i * n + i] = 0.0;
            for j in (i + 1)..n {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let q = 1.0 / (1.0 + dx * dx + dy * dy);
                q_unnorm[i * n + j] = q;
                q_unnorm[j * n + i] = q;
                z += 2.0 * q;
            }
        }
        let z = z.max(1e-300);

        let exag = if iter < params.exaggeration_iters { params.early_exaggeration } else { 1.0 };
        let momentum = if iter < 250 { 0.5 } else { 0.8 };

        let mut grads: Vec<[Scalar; 2]> = vec![[0.0; 2]; n];
        for i in 0..n {
            let g = &mut grads[i];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let qu = q_unnorm[i * n + j];
                let factor = 4.0 * (exag * p[i * n + j] - qu / z) * qu;
                g[0] += factor * (y[i][0] - y[j][0]);
                g[1] += factor * (y[i][1] - y[j][1]);
            }
        }
        for i in 0..n {
            for c in 0..2 {
                let same_sign = grads[i][c].signum() == vel[i][c].signum();
                gains[i][c] = if same_sign {
                    (gains[i][c] * 0.8).max(0.01)
                } else {
                    (gains[i][c] + 0.2).min(10.0)
                };
                vel[i][c] = momentum * vel[i][c] - learning_rate * gains[i][c] * grads[i][c];
                y[i][c] += vel[i][c];
            }
        }

        // Recenter.
        let mut mean = [0.0; 2];
        for yi in &y {
            mean[0] += yi[0];
            mean[1] += yi[1];
        }
        mean[0] /= n as Scalar;
        mean[1] /= n as Scalar;
        for yi in &mut y {
            yi[0] -= mean[0];
            yi[1] -= mean[1];
        }

        let done = iter + 1;
        if done > params.exaggeration_iters && done % params.checkpoint_every == 0 {
            let mut kl = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        let q = (q_unnorm[i * n + j] / z).max(1e-12);
                        kl += p[i * n + j] * (p[i * n + j] / q).ln();
                    }
                }
            }
            checkpoints.push(kl);
        }
    }

    Ok(Projection { coords: y, kl_checkpoints: checkpoints })
}

// ── silhouette ──────────────────────────────────────────────────────────

/// Mean silhouette coefficient of 2-D points under the given labels.
pub fn silhouette(coords: &[[Scalar; 2]], labels: &[usize]) -> Result<Scalar> {
    let n = coords.len();
    if n != labels.len() || n < 2 {
        return Err(Error::contract("silhouette: bad input sizes"));
    }
    let k = labels.iter().max().copied().unwrap_or(0) + 1;
    let dist = |a: &[Scalar; 2], b: &[Scalar; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();

    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for j in 0..n {
            if i != j {
                sums[labels[j]] += dist(&coords[i], &coords[j]);
                counts[labels[j]] += 1;
            }
        }
        let own = labels[i];
        if counts[own] == 0 {
            continue; // singleton cluster contributes 0
        }
        let a = sums[own] / counts[own] as Scalar;
        let mut b = Scalar::INFINITY;
        for c in 0..k {
            if c != own && counts[c] > 0 {
                b = b.min(sums[c] / counts[c] as Scalar);
            }
        }
        if b.is_finite() {
            total += (b - a) / a.max(b);
        }
    }
    Ok(total / n as Scalar)
}

/// Quantitative domain-gap scores plus projected coordinates per sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapReport {
    pub probe_accuracy: Scalar,
    pub silhouette: Scalar,
    pub points: Vec<GapPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapPoint {
    pub id: String,
    pub x: Scalar,
    pub y: Scalar,
    pub domain: usize,
}
