//! Central-difference gradient verification.

use super::graph::{Graph, Var};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Max relative error between analytic and central-difference gradients of
/// a scalar-valued graph function at `x`.
///
/// The builder re-runs from scratch for every probe, so it must be a pure
/// function of its input tensor. Error metric per coordinate:
/// |analytic - fd| / max(1, |analytic|, |fd|).
pub fn grad_check<F>(build: F, x: &Tensor, eps: Scalar) -> Result<Scalar>
where
    F: Fn(&mut Graph, Var) -> Var,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::contract("grad_check: eps must be in (0, 1e-2]"));
    }

    let eval = |t: &Tensor| -> Result<Scalar> {
        let mut g = Graph::new();
        let leaf = g.leaf(t.clone());
        let out = build(&mut g, leaf);
        g.scalar_value(out)
    };

    // Analytic pass.
    let mut g = Graph::new();
    let leaf = g.leaf(x.clone());
    let out = build(&mut g, leaf);
    g.scalar_value(out)?;
    let grads = g.backward(out)?;
    let analytic = grads.get_or_zeros(leaf, x.rows(), x.cols());

    let mut worst: Scalar = 0.0;
    for i in 0..x.numel() {
        let mut lo = x.clone();
        let mut hi = x.clone();
        lo.data_mut()[i] -= eps;
        hi.data_mut()[i] += eps;
        let fd = (eval(&hi)? - eval(&lo)?) / (2.0 * eps);
        let a = analytic.data()[i];
        let denom = Scalar::max(1.0, Scalar::max(a.abs(), fd.abs()));
        let rel = (a - fd).abs() / denom;
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}

/// Central-difference check of a scalar objective against every parameter
/// in a group. `build` must be pure in the group values.
pub fn grad_check_group<F>(build: F, group: &super::params::ParamGroup, eps: Scalar) -> Result<Scalar>
where
    F: Fn(&mut Graph, &super::params::Bound) -> Result<Var>,
{
    let eval = |grp: &super::params::ParamGroup| -> Result<Scalar> {
        let mut g = Graph::new();
        let bound = grp.bind(&mut g);
        let out = build(&mut g, &bound)?;
        g.scalar_value(out)
    };

    let mut g = Graph::new();
    let bound = group.bind(&mut g);
    let out = build(&mut g, &bound)?;
    g.scalar_value(out)?;
    let grads = g.backward(out)?;
    let analytic = bound.gradients(group, &grads);

    let mut work = group.clone();
    let mut worst: Scalar = 0.0;
    for pi in 0..group.len() {
        let h = super::params::handle_at(pi);
        for i in 0..group.params()[pi].value.numel() {
            let orig = group.params()[pi].value.data()[i];
            work.get_mut(h).data_mut()[i] = orig + eps;
            let f_hi = eval(&work)?;
            work.get_mut(h).data_mut()[i] = orig - eps;
            let f_lo = eval(&work)?;
            work.get_mut(h).data_mut()[i] = orig;
            let fd = (f_hi - f_lo) / (2.0 * eps);
            let a = analytic[pi].data()[i];
            let denom = Scalar::max(1.0, Scalar::max(a.abs(), fd.abs()));
            let rel = (a - fd).abs() / denom;
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}

/// Gradient-check every differentiable op on `trials` random inputs each.
/// Returns (op label, worst relative error). Kinked ops (relu, clamp_min)
/// are probed away from their kink so the central difference is valid.
pub fn op_gradient_suite(seed: u64, trials: usize) -> Result<Vec<(String, Scalar)>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    let rand_t = |rows: usize, cols: usize, lo: Scalar, hi: Scalar, rng: &mut rand_chacha::ChaCha8Rng| {
        let data = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
        Tensor::new(rows, cols, data)
    };

    // Weight the output sum so no coordinate cancels out of the objective.
    fn weighted(g: &mut Graph, v: Var, w: &Tensor) -> Var {
        let wv = g.constant(w.clone());
        let m = g.mul(v, wv);
        g.sum_all(m)
    }

    type Case = (&'static str, Box<dyn Fn(&mut Graph, Var) -> Var>, Tensor, Scalar);
    let mut cases: Vec<Case> = Vec::new();
    let mut results: Vec<(String, Scalar)> = Vec::new();

    for trial in 0..trials {
        cases.clear();
        let w34 = rand_t(3, 4, -1.0, 1.0, &mut rng);
        let other34 = rand_t(3, 4, -1.0, 1.0, &mut rng);
        let row14 = rand_t(1, 4, -1.0, 1.0, &mut rng);
        let b45 = rand_t(4, 5, -1.0, 1.0, &mut rng);
        let w35 = rand_t(3, 5, -1.0, 1.0, &mut rng);
        let w43 = rand_t(4, 3, -1.0, 1.0, &mut rng);
        let w31 = rand_t(3, 1, -1.0, 1.0, &mut rng);
        let mask = Tensor::row_vec(vec![1.0, 0.0, 1.0, 1.0]);
        let gamma = rand_t(1, 4, 0.5, 1.5, &mut rng);
        let beta = rand_t(1, 4, -0.5, 0.5, &mut rng);
        let w22 = rand_t(2, 2, -1.0, 1.0, &mut rng);
        let w43e = rand_t(4, 3, -1.0, 1.0, &mut rng);

        let x34 = rand_t(3, 4, -2.0, 2.0, &mut rng);
        let x34_pos = rand_t(3, 4, 0.5, 2.0, &mut rng);
        let mut x34_off = rand_t(3, 4, 0.3, 2.0, &mut rng);
        for (i, v) in x34_off.data_mut().iter_mut().enumerate() {
            // Alternate signs, magnitude kept >= 0.3 away from the kink.
            if i % 2 == 0 {
                *v = -*v;
            }
        }
        let x45 = rand_t(4, 5, -2.0, 2.0, &mut rng);
        let table = rand_t(5, 3, -1.0, 1.0, &mut rng);

        {
            let w = w34.clone();
            let o = other34.clone();
            cases.push((
                "add",
                Box::new(move |g, x| {
                    let c = g.constant(o.clone());
                    let y = g.add(x, c);
                    weighted(g, y, &w)
                }),
                x34.clone(),
                1e-5,
            ));
        }
        {
            let w = w34.clone();
            let r = row14.clone();
            cases.push((
                "add_row(x)",
                Box::new(move |g, x| {
                    let c = g.constant(r.clone());
                    let y = g.add_row(x, c);
                    weighted(g, y, &w)
                }),
                x34.clone(),
                1e-5,
            ));
        }
        {
            let w = w34.clone();
            let base = other34.clone();
            cases.push((
                "add_row(row)",
                Box::new(move |g, x| {
                    let c = g.constant(base.clone());
                    let y = g.add_row(c, x);
                    weighted(g, y, &w)
                }),
                row14.clone(),
                1e-5,
            ));
        }
        {
            let w = w34.clone();
            cases.push((
                "add_scalar",
                Box::new(move |g, x| {
                    let y = g.add_scalar(x, 0.7);
                    weighted(g, y, &w)
                }),
                x34.clone(),
                1e-5,
            ));
        }
        {
            let w = w34.clone();
            cases.push((
                "scale",
                Box::new(move |g, x| {
                    let y = g.scale(x, -1.3);
                    weighted(g, y, &w)
                }),
                x34.clone(),
                1e-5,
            ));
        }
        {
            let w = w34.clone();
            let o = other34.clone();
            cases.push((
                "mul",
                Box::new(move |g, x| {
                    let c = g.constant(o.clone());
                    let y = g.mul(x, c);
                    weighted(g, y, &w)
                }),
                x34.clone(),
                1e-5,
            ));
        }
        {
            let w = w35.clone();
            let b = b45.clone();
            cases.push((
                "matmul(lhs)",
                Box::new(move |g, x| {
                    let c = g.constant(b.clone());
                    let y = g.matmul(x, c);
                    weighted(g, y, &w)
                }),
                x34.clone(),
                1e-5,
            ));
        }
        {
            let w = w35.clone();
            let a = x34.clone();
            cases.push((
                "matmul(rhs)",
                Box::new(move |g, x| {
                    let c = g.constant(a.clone());
                    let y = g.matmul(c, x);
                    weighted(g, y, &w)
                }),
                x45.clone(),
                1e-5,
            ));
        }
        {
            let w = w43.clone();
            cases.push((
                "transpose",
                Box::new(move |g, x| {
                    let y = g.transpose(x);
                    weighted(g, y, &w)
                }),
                x34.clone(),
                1e-5,
            ));
        }
        for (name, f) in [
            ("tanh", Graph::tanh as fn(&mut Graph, Var) -> Var),
            ("gelu", Graph::gelu),
            ("exp", Graph::exp),
        ] {
            let w = w34.clone();
            cases.push((
                name,
                Box::new(move |g, x| {
                    let y = f(g, x);
                    weighted(g, y, &w)
                }),
                x34.clone(),
                1e-5,
            ));
        }
        {
            let w = w34.clone();
            cases.push((
                "relu",
                Box::new(move |g, x| {
                    let y = g.relu(x);
                    weighted(g, y, &w)
                }),
                x34_off.clone(),
                1e-5,
            ));
        }
        {
            let w = w34.clone();
            cases.push((
                "ln",
                Box::new(move |g, x| {
                    let y = g.ln(x);
                    weighted(g, y, &w)
                }),
                x34_pos.clone(),
                1e-5,
            ));
        }
        {
            let w = w34.clone();
            cases.push((
                "clamp_min",
                Box::new(move |g, x| {
                    let y = g.clamp_min(x, 0.0);
                    weighted(g, y, &w)
                }),
                x34_off.clone(),
                1e-5,
            ));
        }
        {
            let w = w34.clone();
            cases.push((
                "softmax_rows",
                Box::new(move |g, x| {
                    let y = g.softmax_rows(x, None);
                    weighted(g, y, &w)
                }),
                x34.clone(),
                1e-5,
            ));
        }
        {
            let w = w34.clone();
            let m = mask.clone();
            cases.push((
                "softmax_rows(masked)",
                Box::new(move |g, x| {
                    let mv = g.constant(m.clone());
                    let y = g.softmax_rows(x, Some(mv));
                    weighted(g, y, &w)
                }),
                x34.clone(),
                1e-5,
            ));
        }
        {
            let w = w34.clone();
            cases.push((
                "log_softmax_rows",
                Box::new(move |g, x| {
                    let y = g.log_softmax_rows(x);
                    weighted(g, y, &w)
                }),
                x34.clone(),
                1e-5,
            ));
        }
        {
            let w = w31.clone();
            let m = mask.clone();
            cases.push((
                "logsumexp_rows(masked)",
                Box::new(move |g, x| {
                    let mv = g.constant(m.clone());
                    let y = g.logsumexp_rows(x, Some(mv));
                    weighted(g, y, &w)
                }),
                x34.clone(),
                1e-5,
            ));
        }
        {
            let w = w34.clone();
            let ga = gamma.clone();
            let be = beta.clone();
            cases.push((
                "layer_norm(x)",
                Box::new(move |g, x| {
                    let gv = g.constant(ga.clone());
                    let bv = g.constant(be.clone());
                    let y = g.layer_norm(x, gv, bv, 1e-5);
                    weighted(g, y, &w)
                }),
                x34.clone(),
                1e-5,
            ));
        }
        {
            let w = w34.clone();
            let xs = x34.clone();
            let be = beta.clone();
            cases.push((
                "layer_norm(gamma)",
                Box::new(move |g, x| {
                    let xv = g.constant(xs.clone());
                    let bv = g.constant(be.clone());
                    let y = g.layer_norm(xv, x, bv, 1e-5);
                    weighted(g, y, &w)
                }),
                gamma.clone(),
                1e-5,
            ));
        }
        {
            let w = w34.clone();
            let xs = x34.clone();
            let ga = gamma.clone();
            cases.push((
                "layer_norm(beta)",
                Box::new(move |g, x| {
                    let xv = g.constant(xs.clone());
                    let gv = g.constant(ga.clone());
                    let y = g.layer_norm(xv, gv, x, 1e-5);
                    weighted(g, y, &w)
                }),
                beta.clone(),
                1e-5,
            ));
        }
        {
            let w = rand_t(3, 8, -1.0, 1.0, &mut rng);
            let o = other34.clone();
            cases.push((
                "concat_cols",
                Box::new(move |g, x| {
                    let c = g.constant(o.clone());
                    let y = g.concat_cols(&[x, c]);
                    weighted(g, y, &w)
                }),
                x34.clone(),
                1e-5,
            ));
        }
        {
            let w = rand_t(6, 4, -1.0, 1.0, &mut rng);
            let o = other34.clone();
            cases.push((
                "concat_rows",
                Box::new(move |g, x| {
                    let c = g.constant(o.clone());
                    let y = g.concat_rows(&[c, x]);
                    weighted(g, y, &w)
                }),
                x34.clone(),
                1e-5,
            ));
        }
        {
            let w = rand_t(2, 4, -1.0, 1.0, &mut rng);
            cases.push((
                "slice_rows",
                Box::new(move |g, x| {
                    let y = g.slice_rows(x, 1, 2);
                    weighted(g, y, &w)
                }),
                x34.clone(),
                1e-5,
            ));
        }
        {
            let w = w22.clone();
            cases.push((
                "slice_cols",
                Box::new(move |g, x| {
                    let y = g.slice_cols(x, 1, 2);
                    let y2 = g.slice_rows(y, 0, 2);
                    weighted(g, y2, &w)
                }),
                x34.clone(),
                1e-5,
            ));
        }
        {
            let w = rand_t(3, 1, -1.0, 1.0, &mut rng);
            cases.push((
                "gather",
                Box::new(move |g, x| {
                    let y = g.gather(x, &[(0, 1), (2, 3), (0, 1)]);
                    weighted(g, y, &w)
                }),
                x34.clone(),
                1e-5,
            ));
        }
        {
            cases.push((
                "sum_all",
                Box::new(move |g, x| g.sum_all(x)),
                x34.clone(),
                1e-5,
            ));
        }
        {
            let w = w43e.clone();
            cases.push((
                "embedding",
                Box::new(move |g, x| {
                    let y = g.embedding(x, &[0, 2, 4, 2]);
                    weighted(g, y, &w)
                }),
                table.clone(),
                1e-5,
            ));
        }

        for (name, build, x, eps) in cases.drain(..) {
            let err = grad_check(&build, &x, eps)?;
            match results.iter_mut().find(|(n, _)| n == name) {
                Some((_, worst)) => {
                    if err > *worst {
                        *worst = err;
                    }
                }
                None => results.push((name.to_string(), err)),
            }
        }
        let _ = trial;
    }

    Ok(results)
}

