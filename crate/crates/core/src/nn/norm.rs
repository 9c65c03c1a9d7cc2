use super::Graph;
use crate::autograd::{ParamId, ParamStore, Var};
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Standardisation over the last axis followed by a learned affine map.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub scale: ParamId,
    pub shift: ParamId,
    pub dim: usize,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config(format!("layer norm over {dim} feature(s)")));
        }
        Ok(Self {
            scale: store.add_constant(format!("{name}.scale"), &[dim], 1.0),
            shift: store.add_constant(format!("{name}.shift"), &[dim], 0.0),
            dim,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        if g.shape(x).last() != Some(&self.dim) {
            return Err(Error::shape("layer_norm", g.shape(x), &[self.dim]));
        }
        let z = g.standardize(x, LAYER_NORM_EPS)?;
        let scale = g.param(self.scale);
        let shift = g.param(self.shift);
        let y = g.mul(z, scale)?;
        g.add(y, shift)
    }
}
