//! Named parameter groups and their per-step lease into a graph.

use super::graph::{Gradients, Graph, Var};
use super::tensor::{Scalar, Tensor};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Index of a parameter within its group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamHandle(usize);

impl ParamHandle {
    pub fn index(&self) -> usize {
        self.0
    }
}

pub(crate) fn handle_at(index: usize) -> ParamHandle {
    ParamHandle(index)
}

/// An ordered set of parameters stepped together by one optimizer.
#[derive(Debug, Clone, Default)]
pub struct ParamGroup {
    params: Vec<Param>,
}

impl ParamGroup {
    pub fn new() -> Self {
        ParamGroup { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamHandle {
        self.params.push(Param { name: name.into(), value });
        ParamHandle(self.params.len() - 1)
    }

    /// Normal(0, std) initialized matrix.
    pub fn add_normal(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        std: Scalar,
        rng: &mut impl Rng,
    ) -> ParamHandle {
        let data = (0..rows * cols).map(|_| normal_sample(rng) * std).collect();
        self.add(name, Tensor::new(rows, cols, data))
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamHandle {
        self.add(name, Tensor::zeros(rows, cols))
    }

    pub fn add_ones(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamHandle {
        self.add(name, Tensor::filled(rows, cols, 1.0))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn get(&self, h: ParamHandle) -> &Tensor {
        &self.params[h.0].value
    }

    pub fn find(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn handle_of(&self, name: &str) -> Option<ParamHandle> {
        self.params.iter().position(|p| p.name == name).map(ParamHandle)
    }

    pub fn get_mut(&mut self, h: ParamHandle) -> &mut Tensor {
        &mut self.params[h.0].value
    }

    pub fn set(&mut self, h: ParamHandle, value: Tensor) {
        assert_eq!(self.params[h.0].value.shape(), value.shape());
        self.params[h.0].value = value;
    }

    /// Lease every parameter into `g` as differentiable leaves.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        Bound {
            vars: self.params.iter().map(|p| g.leaf(p.value.clone())).collect(),
        }
    }

    /// Lease every parameter as constants: values participate in the
    /// forward pass but receive no gradient.
    pub fn bind_frozen(&self, g: &mut Graph) -> Bound {
        Bound {
            vars: self.params.iter().map(|p| g.constant(p.value.clone())).collect(),
        }
    }

    /// Raw bytes of all parameter data in group order (trajectory identity
    /// checks compare these).
    pub fn byte_fingerprint(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for p in &self.params {
            for v in p.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

/// A group's leased graph variables for one forward/backward pass.
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, h: ParamHandle) -> Var {
        self.vars[h.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Collect this group's gradients in group order (zeros where a
    /// parameter was not touched by the objective).
    pub fn gradients(&self, group: &ParamGroup, grads: &Gradients) -> Vec<Tensor> {
        self.vars
            .iter()
            .zip(group.params())
            .map(|(v, p)| grads.get_or_zeros(*v, p.value.rows(), p.value.cols()))
            .collect()
    }
}

/// Box-Muller standard normal draw; two uniforms per sample keeps the
/// stream layout independent of rejection behavior.
fn normal_sample(rng: &mut impl Rng) -> Scalar {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
    z as Scalar
}
