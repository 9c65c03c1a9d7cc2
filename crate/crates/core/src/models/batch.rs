use super::InputDims;
use crate::autograd::Tensor;
use crate::error::{Error, Result};

/// A minibatch of forecast samples.
///
/// Each window spans the `lookback + 1` days ending on the forecast day. The
/// columns are the dynamic forcings followed by the target; the target cell of
/// the final row is the quantity being forecast and no model reads it.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `[B, lookback + 1, n_dynamic + 1]`.
    pub windows: Tensor,
    /// `[B, n_static]`, absent when there are no static variables.
    pub statics: Option<Tensor>,
    /// `[B, n_known]` known-future inputs of the forecast day.
    pub known: Tensor,
    /// Normalized targets, one per sample.
    pub targets: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.windows.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self, dims: &InputDims, lookback: usize) -> Result<()> {
        let b = self.len();
        let expect = [b, lookback + 1, dims.n_past()];
        if self.windows.shape() != expect {
            return Err(Error::Contract(format!(
                "window shape {:?} does not match lookback {lookback} and {} past variables",
                self.windows.shape(),
                dims.n_past()
            )));
        }
        match (&self.statics, dims.n_static) {
            (None, 0) => {}
            (Some(s), n) if s.shape() == [b, n] => {}
            (s, n) => {
                return Err(Error::Contract(format!(
                    "static shape {:?} does not match {n} static variables",
                    s.as_ref().map(|t| t.shape().to_vec())
                )))
            }
        }
        if self.known.shape() != [b, dims.n_known] {
            return Err(Error::shape(
                "known inputs",
                self.known.shape(),
                &[b, dims.n_known],
            ));
        }
        if !self.targets.is_empty() && self.targets.len() != b {
            return Err(Error::Contract(format!(
                "{} targets for {b} samples",
                self.targets.len()
            )));
        }
        Ok(())
    }

    fn static_row(&self, b: usize) -> &[f64] {
        match &self.statics {
            Some(s) => {
                let n = s.shape()[1];
                &s.data()[b * n..(b + 1) * n]
            }
            None => &[],
        }
    }

    /// Rows `rows` of every window, restricted to the first `cols` columns,
    /// with statics appended to every row.
    fn gather(&self, rows: std::ops::Range<usize>, cols: usize) -> Tensor {
        let (b, t, p) = (self.len(), self.windows.shape()[1], self.windows.shape()[2]);
        let s = self.statics.as_ref().map_or(0, |s| s.shape()[1]);
        let w = self.windows.data();
        let mut data = Vec::with_capacity(b * rows.len() * (cols + s));
        for i in 0..b {
            for r in rows.clone() {
                let base = (i * t + r) * p;
                data.extend_from_slice(&w[base..base + cols]);
                data.extend_from_slice(self.static_row(i));
            }
        }
        Tensor::new(vec![b, rows.len(), cols + s], data).expect("gather shape")
    }

    /// LSTM sequence `[B, lookback, n_dynamic + 1 + n_static]`: the forcings
    /// of each day in `(τ − lookback, τ]`, the previous day's target and the
    /// statics.
    pub fn lstm_inputs(&self) -> Tensor {
        let (b, t, p) = (self.len(), self.windows.shape()[1], self.windows.shape()[2]);
        let s = self.statics.as_ref().map_or(0, |s| s.shape()[1]);
        let w = self.windows.data();
        let width = p + s;
        let mut data = Vec::with_capacity(b * (t - 1) * width);
        for i in 0..b {
            for r in 1..t {
                let row = (i * t + r) * p;
                let prev = (i * t + r - 1) * p;
                data.extend_from_slice(&w[row..row + p - 1]);
                data.push(w[prev + p - 1]);
                data.extend_from_slice(self.static_row(i));
            }
        }
        Tensor::new(vec![b, t - 1, width], data).expect("lstm input shape")
    }

    /// Transformer encoder input `[B, lookback − 1, n_dynamic + 1 + n_static]`:
    /// the days strictly between the first window day and the forecast day.
    pub fn encoder_inputs(&self) -> Tensor {
        let (t, p) = (self.windows.shape()[1], self.windows.shape()[2]);
        self.gather(1..t - 1, p)
    }

    /// Transformer decoder input `[B, 1, n_dynamic + n_static]`: the forecast
    /// day without its target.
    pub fn decoder_inputs(&self) -> Tensor {
        let (t, p) = (self.windows.shape()[1], self.windows.shape()[2]);
        self.gather(t - 1..t, p - 1)
    }

    /// TFT past inputs `[B, lookback, n_dynamic + 1]`: the days before the
    /// forecast day.
    pub fn past_inputs(&self) -> Tensor {
        let (b, t, p) = (self.len(), self.windows.shape()[1], self.windows.shape()[2]);
        let data = (0..b)
            .flat_map(|i| {
                self.windows.data()[i * t * p..(i * t + t - 1) * p]
                    .iter()
                    .copied()
            })
            .collect();
        Tensor::new(vec![b, t - 1, p], data).expect("past input shape")
    }

    /// TFT known-future inputs `[B, 1, n_known]`.
    pub fn future_inputs(&self) -> Tensor {
        let (b, k) = (self.known.shape()[0], self.known.shape()[1]);
        self.known
            .clone()
            .reshape(&[b, 1, k])
            .expect("future input shape")
    }

    /// Copy of the batch with the forecast-day target cell overwritten.
    pub fn with_hidden_target(&self, value: f64) -> Batch {
        let mut out = self.clone();
        let (b, t, p) = (self.len(), self.windows.shape()[1], self.windows.shape()[2]);
        for i in 0..b {
            out.windows.data_mut()[(i * t + t - 1) * p + p - 1] = value;
        }
        out
    }
}
