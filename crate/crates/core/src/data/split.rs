use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RATIOS: (f64, f64, f64) = (0.7, 0.1, 0.2);

/// Chronological sample ranges of the three splits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Floors the train and validation sizes and gives the remainder to test.
///
/// A tolerance of 1e-9 guards the floor against products such as
/// `0.7 × 10 = 6.999…` in binary floating point.
pub fn split(n_samples: usize, ratios: (f64, f64, f64)) -> Result<SplitRanges> {
    let (tr, va, te) = ratios;
    if [tr, va, te].iter().any(|r| !(0.0..=1.0).contains(r)) || (tr + va + te - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios {ratios:?} must be in [0, 1] and sum to 1"
        )));
    }
    let floor = |r: f64| (r * n_samples as f64 + 1e-9).floor() as usize;
    let n_train = floor(tr);
    let n_val = floor(va);
    let n_test = n_samples.saturating_sub(n_train + n_val);
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::Config(format!(
            "{n_samples} samples give an empty split ({n_train}/{n_val}/{n_test})"
        )));
    }
    Ok(SplitRanges {
        train: 0..n_train,
        val: n_train..n_train + n_val,
        test: n_train + n_val..n_samples,
    })
}
