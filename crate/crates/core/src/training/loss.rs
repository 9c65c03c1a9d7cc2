use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Quantile,
    Mse,
}

/// Pinball loss of one sample averaged over the quantile levels.
pub fn quantile_loss(pred: &[f64], y: f64, levels: &[f64]) -> Result<f64> {
    if pred.len() != levels.len() || levels.is_empty() {
        return Err(Error::shape(
            "quantile_loss",
            &[pred.len()],
            &[levels.len()],
        ));
    }
    let total: f64 = pred
        .iter()
        .zip(levels)
        .map(|(p, q)| {
            let e = y - p;
            (q * e).max((q - 1.0) * e)
        })
        .sum();
    Ok(total / levels.len() as f64)
}

/// Pinball loss of each level separately, averaged over samples.
/// `pred` is row-major `[n, levels.len()]`.
pub fn quantile_loss_per_level(pred: &[f64], y: &[f64], levels: &[f64]) -> Result<Vec<f64>> {
    let q = levels.len();
    if q == 0 || pred.len() != y.len() * q || y.is_empty() {
        return Err(Error::shape(
            "quantile_loss_per_level",
            &[pred.len()],
            &[y.len(), q],
        ));
    }
    let mut out = vec![0.0; q];
    for (row, &target) in pred.chunks(q).zip(y) {
        for ((acc, p), l) in out.iter_mut().zip(row).zip(levels) {
            let e = target - p;
            *acc += (l * e).max((l - 1.0) * e);
        }
    }
    Ok(out.into_iter().map(|s| s / y.len() as f64).collect())
}

/// Squared error averaged over samples.
pub fn mse_loss(pred: &[f64], y: &[f64]) -> Result<f64> {
    if pred.len() != y.len() || y.is_empty() {
        return Err(Error::shape("mse_loss", &[pred.len()], &[y.len()]));
    }
    Ok(pred
        .iter()
        .zip(y)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / y.len() as f64)
}

/// Batch-mean pinball loss on the tape. `pred` is `[B, Q]`.
///
/// With `d = ŷ − y`, `max(q(y − ŷ), (q − 1)(y − ŷ)) = relu(d) − q·d`.
pub fn quantile_loss_var(
    tape: &mut Tape,
    pred: Var,
    targets: &[f64],
    levels: &[f64],
) -> Result<Var> {
    let b = targets.len();
    if tape.shape(pred) != [b, levels.len()] {
        return Err(Error::shape(
            "quantile_loss",
            tape.shape(pred),
            &[b, levels.len()],
        ));
    }
    let y = tape.constant(Tensor::new(vec![b, 1], targets.to_vec())?);
    let q = tape.constant(Tensor::new(vec![levels.len()], levels.to_vec())?);
    let d = tape.sub(pred, y)?;
    let hinge = tape.relu(d);
    let qd = tape.mul(d, q)?;
    let loss = tape.sub(hinge, qd)?;
    tape.mean_all(loss)
}

/// Batch-mean squared error on the tape. `pred` is `[B, 1]`.
pub fn mse_loss_var(tape: &mut Tape, pred: Var, targets: &[f64]) -> Result<Var> {
    let b = targets.len();
    if tape.shape(pred) != [b, 1] {
        return Err(Error::shape("mse_loss", tape.shape(pred), &[b, 1]));
    }
    let y = tape.constant(Tensor::new(vec![b, 1], targets.to_vec())?);
    let d = tape.sub(pred, y)?;
    let sq = tape.mul(d, d)?;
    tape.mean_all(sq)
}
