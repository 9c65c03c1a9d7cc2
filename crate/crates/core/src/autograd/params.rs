use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to one trainable array in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
struct ParamEntry {
    name: String,
    value: Tensor,
    grad: Vec<f64>,
}

/// Name/shape pair describing one parameter array, in storage order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Owns every trainable array of a model together with its accumulated gradient.
///
/// Gradients accumulate across backward passes; callers zero them between
/// optimizer steps.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let grad = vec![0.0; value.numel()];
        self.entries.push(ParamEntry {
            name: name.into(),
            value,
            grad,
        });
        ParamId(self.entries.len() - 1)
    }

    /// Weight matrix drawn from `U(-1/√fan_in, 1/√fan_in)`.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        self.add(
            name,
            Tensor::new(shape.to_vec(), data).expect("shape/data agree"),
        )
    }

    pub fn add_constant(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        value: f64,
    ) -> ParamId {
        self.add(name, Tensor::full(shape, value))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.numel()).sum()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        self.entries[id.0].value.data_mut()
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.entries[id.0].grad
    }

    /// Mutable view of value and gradient of one parameter.
    pub fn value_and_grad_mut(&mut self, id: ParamId) -> (&mut [f64], &mut [f64]) {
        let e = &mut self.entries[id.0];
        (e.value.data_mut(), &mut e.grad)
    }

    pub fn zero_grad(&mut self) {
        for e in &mut self.entries {
            e.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Adds gradients produced by a backward pass.
    pub fn accumulate(&mut self, grads: &[(ParamId, Vec<f64>)]) {
        for (id, g) in grads {
            let dst = &mut self.entries[id.0].grad;
            for (d, s) in dst.iter_mut().zip(g) {
                *d += s;
            }
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|e| e.grad.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for e in &mut self.entries {
            e.grad.iter_mut().for_each(|g| *g *= factor);
        }
    }

    pub fn grads_finite(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.grad.iter().all(|g| g.is_finite()))
    }

    /// All parameter values concatenated in storage order.
    pub fn flat_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for e in &self.entries {
            out.extend_from_slice(e.value.data());
        }
        out
    }

    pub fn set_flat_values(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_scalars() {
            return Err(Error::Contract(format!(
                "expected {} parameter values, got {}",
                self.num_scalars(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for e in &mut self.entries {
            let n = e.value.numel();
            e.value
                .data_mut()
                .copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for e in &self.entries {
            out.extend_from_slice(&e.grad);
        }
        out
    }

    pub fn manifest(&self) -> Vec<ParamManifestEntry> {
        self.entries
            .iter()
            .map(|e| ParamManifestEntry {
                name: e.name.clone(),
                shape: e.value.shape().to_vec(),
            })
            .collect()
    }

    /// SHA-256 over the little-endian bytes of every value, hex encoded.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for e in &self.entries {
            for v in e.value.data() {
                hasher.update(v.to_le_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
