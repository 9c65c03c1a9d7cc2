use rand::Rng;

use super::{Graph, Grn, Linear};
use crate::autograd::{ParamStore, Tensor, Var};
use crate::error::{Error, Result};

/// One `1 → d_model` linear map per scalar input variable.
#[derive(Clone, Debug)]
pub struct VariableEmbedding {
    pub maps: Vec<Linear>,
    pub d_model: usize,
}

impl VariableEmbedding {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        n_vars: usize,
        d_model: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let maps = (0..n_vars)
            .map(|j| Linear::new(store, &format!("{name}.v{j}"), 1, d_model, rng))
            .collect();
        Self { maps, d_model }
    }

    pub fn num_params(n_vars: usize, d_model: usize) -> usize {
        2 * n_vars * d_model
    }

    /// `x: [..., m]` → `m` tensors of shape `[..., d_model]`.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Vec<Var>> {
        let shape = g.shape(x).to_vec();
        if shape.last() != Some(&self.maps.len()) {
            return Err(Error::shape(
                "variable embedding",
                &shape,
                &[self.maps.len()],
            ));
        }
        let axis = shape.len() - 1;
        self.maps
            .iter()
            .enumerate()
            .map(|(j, map)| {
                let col = g.slice(x, axis, j..j + 1)?;
                map.forward(g, col)
            })
            .collect()
    }
}

/// Variable selection network: a softmax over `GRN(flatten(ξ), c_s)` weights
/// the per-variable `GRN_j(ξ_j)` outputs.
#[derive(Clone, Debug)]
pub struct VariableSelection {
    /// Absent when there is a single variable, whose weight is always 1.
    pub weight_grn: Option<Grn>,
    pub var_grns: Vec<Grn>,
    pub d_model: usize,
}

impl VariableSelection {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        n_vars: usize,
        d_model: usize,
        d_context: Option<usize>,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if n_vars == 0 {
            return Err(Error::Contract(
                "variable selection over zero variables".into(),
            ));
        }
        let weight_grn = if n_vars > 1 {
            Some(Grn::new(
                store,
                &format!("{name}.weights"),
                n_vars * d_model,
                d_model,
                n_vars,
                d_context,
                dropout,
                rng,
            )?)
        } else {
            None
        };
        let var_grns = (0..n_vars)
            .map(|j| {
                Grn::new(
                    store,
                    &format!("{name}.v{j}"),
                    d_model,
                    d_model,
                    d_model,
                    None,
                    dropout,
                    rng,
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            weight_grn,
            var_grns,
            d_model,
        })
    }

    pub fn num_params(n_vars: usize, d_model: usize, d_context: Option<usize>) -> usize {
        let weights = if n_vars > 1 {
            Grn::num_params(n_vars * d_model, d_model, n_vars, d_context)
        } else {
            0
        };
        weights + n_vars * Grn::num_params(d_model, d_model, d_model, None)
    }

    pub fn n_vars(&self) -> usize {
        self.var_grns.len()
    }

    /// Each `xs[j]` is `[..., d_model]`. Returns the combined `[..., d_model]`
    /// representation and the selection weights `[..., m]`.
    pub fn forward(&self, g: &mut Graph, xs: &[Var], context: Option<Var>) -> Result<(Var, Var)> {
        let m = self.var_grns.len();
        if xs.len() != m {
            return Err(Error::Contract(format!(
                "variable selection built for {m} variables, got {}",
                xs.len()
            )));
        }
        let lead = g.shape(xs[0]).to_vec();
        let axis = lead.len() - 1;
        let mut unit = lead.clone();
        unit.insert(axis, 1);

        let weights = match &self.weight_grn {
            Some(grn) => {
                let flat = g.concat(xs, axis)?;
                let logits = grn.forward(g, flat, context)?;
                g.softmax(logits, axis)?
            }
            None => {
                let mut shape = lead.clone();
                shape[axis] = 1;
                g.constant(Tensor::full(&shape, 1.0))
            }
        };

        let mut processed = Vec::with_capacity(m);
        for (grn, &x) in self.var_grns.iter().zip(xs) {
            let y = grn.forward(g, x, None)?;
            processed.push(g.reshape(y, &unit)?);
        }
        let stacked = if m == 1 {
            processed[0]
        } else {
            g.concat(&processed, axis)?
        };
        let mut wshape = lead;
        wshape[axis] = m;
        wshape.push(1);
        let w = g.reshape(weights, &wshape)?;
        let weighted = g.mul(stacked, w)?;
        let combined = g.sum(weighted, axis)?;
        Ok((combined, weights))
    }
}

/// Context vectors derived from the static embedding `ζ`.
#[derive(Clone, Copy, Debug)]
pub struct StaticContexts {
    /// Context for temporal variable selection.
    pub c_s: Var,
    /// Context for static enrichment.
    pub c_e: Var,
    /// Initial encoder cell state.
    pub c_c: Var,
    /// Initial encoder hidden state.
    pub c_h: Var,
}

/// Four independent context-free GRNs over `ζ`.
#[derive(Clone, Debug)]
pub struct StaticCovariateEncoder {
    pub selection: Grn,
    pub enrichment: Grn,
    pub cell: Grn,
    pub hidden: Grn,
}

impl StaticCovariateEncoder {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut grn = |tag: &str| {
            Grn::new(
                store,
                &format!("{name}.{tag}"),
                d_model,
                d_model,
                d_model,
                None,
                dropout,
                rng,
            )
        };
        Ok(Self {
            selection: grn("c_s")?,
            enrichment: grn("c_e")?,
            cell: grn("c_c")?,
            hidden: grn("c_h")?,
        })
    }

    pub fn num_params(d_model: usize) -> usize {
        4 * Grn::num_params(d_model, d_model, d_model, None)
    }

    pub fn forward(&self, g: &mut Graph, zeta: Var) -> Result<StaticContexts> {
        Ok(StaticContexts {
            c_s: self.selection.forward(g, zeta, None)?,
            c_e: self.enrichment.forward(g, zeta, None)?,
            c_c: self.cell.forward(g, zeta, None)?,
            c_h: self.hidden.forward(g, zeta, None)?,
        })
    }
}
