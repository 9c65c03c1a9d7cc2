use rand::Rng;

use super::Graph;
use crate::autograd::{ParamId, ParamStore, Var};
use crate::error::{Error, Result};

/// Affine map `x·Wᵀ + b` over the last axis; `W` is stored `[out × in]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add_uniform(format!("{name}.weight"), &[out_dim, in_dim], in_dim, rng);
        let bias = Some(store.add_constant(format!("{name}.bias"), &[out_dim], 0.0));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn without_bias(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add_uniform(format!("{name}.weight"), &[out_dim, in_dim], in_dim, rng);
        Self {
            weight,
            bias: None,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let last = g.shape(x).last().copied().unwrap_or(0);
        if last != self.in_dim {
            return Err(Error::shape(
                "linear",
                g.shape(x),
                &[self.out_dim, self.in_dim],
            ));
        }
        let w = g.param(self.weight);
        let y = g.matmul_nt(x, w)?;
        match self.bias {
            Some(b) => {
                let b = g.param(b);
                g.add(y, b)
            }
            None => Ok(y),
        }
    }
}
