use crate::autograd::Tensor;
use crate::error::{Error, Result};

/// Sinusoidal position table `[seq_len × d_model]`:
/// `PE[p, 2i] = sin(p / 10000^(2i/d))`, `PE[p, 2i+1] = cos(p / 10000^(2i/d))`.
pub fn positional_encoding(seq_len: usize, d_model: usize) -> Result<Tensor> {
    if d_model == 0 || d_model % 2 != 0 {
        return Err(Error::Config(format!(
            "positional encoding needs an even d_model, got {d_model}"
        )));
    }
    let mut data = Vec::with_capacity(seq_len * d_model);
    for pos in 0..seq_len {
        for i in 0..d_model / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
            data.push(angle.sin());
            data.push(angle.cos());
        }
    }
    Tensor::new(vec![seq_len, d_model], data)
}
