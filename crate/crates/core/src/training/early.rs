use serde::{Deserialize, Serialize};

/// Smallest decrease of the validation loss that counts as improvement.
pub const IMPROVEMENT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Continue,
    /// Stop and restore the parameters of `best_epoch` (1-based).
    Stop {
        best_epoch: usize,
    },
}

/// Tracks the running minimum of the validation loss.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    tolerance: f64,
    best: f64,
    best_epoch: usize,
    epochs: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, tolerance: f64) -> Self {
        Self {
            patience,
            tolerance,
            best: f64::INFINITY,
            best_epoch: 0,
            epochs: 0,
            stale: 0,
        }
    }

    /// Records the next epoch's validation loss.
    pub fn observe(&mut self, loss: f64) -> Decision {
        self.epochs += 1;
        if loss < self.best - self.tolerance {
            self.best = loss;
            self.best_epoch = self.epochs;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        if self.stale >= self.patience {
            Decision::Stop {
                best_epoch: self.best_epoch,
            }
        } else {
            Decision::Continue
        }
    }

    /// Whether the last observed epoch set a new minimum.
    pub fn improved(&self) -> bool {
        self.best_epoch == self.epochs
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

/// Decision after the whole `history` of validation losses.
pub fn early_stopping(history: &[f64], patience: usize) -> Decision {
    let mut tracker = EarlyStopping::new(patience, IMPROVEMENT_TOLERANCE);
    let mut decision = Decision::Continue;
    for &loss in history {
        decision = tracker.observe(loss);
        if decision != Decision::Continue {
            break;
        }
    }
    decision
}
