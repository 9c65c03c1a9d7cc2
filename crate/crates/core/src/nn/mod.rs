//! Layers shared by the three forecasters.
//!
//! Every layer stores [`ParamId`](crate::autograd::ParamId)s into a
//! [`ParamStore`] and records its forward pass on a [`Graph`].

mod attention;
mod grn;
mod linear;
mod lstm;
mod norm;
mod positional;
mod selection;

use std::ops::{Deref, DerefMut};

use crate::autograd::{ParamId, ParamStore, Tape, Var};

pub use attention::{scaled_dot_product_attention, AttentionMask, MultiHeadAttention, MASK_FILL};
pub use grn::{GateAddNorm, Glu, Grn};
pub use linear::Linear;
pub use lstm::{Lstm, LstmCell, LstmState};
pub use norm::{LayerNorm, LAYER_NORM_EPS};
pub use positional::positional_encoding;
pub use selection::{StaticContexts, StaticCovariateEncoder, VariableEmbedding, VariableSelection};

/// A tape paired with the parameter values it reads.
pub struct Graph<'t, 's> {
    tape: &'t mut Tape,
    store: &'s ParamStore,
}

impl<'t, 's> Graph<'t, 's> {
    pub fn new(tape: &'t mut Tape, store: &'s ParamStore) -> Self {
        Self { tape, store }
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.tape.param(self.store, id)
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }
}

impl Deref for Graph<'_, '_> {
    type Target = Tape;

    fn deref(&self) -> &Tape {
        self.tape
    }
}

impl DerefMut for Graph<'_, '_> {
    fn deref_mut(&mut self) -> &mut Tape {
        self.tape
    }
}
