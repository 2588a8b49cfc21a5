//! Gated and plain perceptron models and their training procedures.
//!
//! A gated perceptron is an ordinary perceptron with one extra input: the
//! product of all of its inputs, carrying its own weight. With the gate
//! disabled the same type is the plain perceptron baseline.
//!
//! Three trainers are provided:
//!
//! - [`train_binary`]: sigmoid output, delta rule with the sigmoid derivative,
//!   per-epoch binary cross-entropy trace.
//! - [`train_region`]: raw weighted sum driven toward `+1`/`-1` region
//!   targets with perceptron-style corrections (two inputs only).
//! - [`train_softmax`]: one linear unit per class combined with softmax.

mod gated;
mod softmax;
mod train;

pub use gated::{sigmoid, BinaryStep, GatedModel};
pub use softmax::{softmax, train_softmax, SoftmaxModel};
pub use train::{region_mistakes, train_binary, train_region};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Weight magnitude past which training is considered divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Probability clamp applied before taking logarithms in loss traces.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: model expects {expected} inputs, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("label {label} at row {row} is outside the expected range")]
    Label { row: usize, label: i32 },
    #[error("training diverged at epoch {epoch}: weights are non-finite or exceed 1e12")]
    Diverged { epoch: usize },
    #[error("malformed model file: {0}")]
    Parse(String),
}

/// Hyperparameters shared by every trainer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, epochs: usize, seed: u64) -> Result<Self, ModelError> {
        let cfg = Self {
            learning_rate,
            epochs,
            seed,
            shuffle_each_epoch: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ModelError::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(ModelError::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Mean training loss recorded after every epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    pub per_epoch_loss: Vec<f64>,
}

impl LossTrace {
    pub fn len(&self) -> usize {
        self.per_epoch_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_epoch_loss.is_empty()
    }

    pub fn first(&self) -> Option<f64> {
        self.per_epoch_loss.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.per_epoch_loss.last().copied()
    }

    /// `epoch,loss` CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (i, loss) in self.per_epoch_loss.iter().enumerate() {
            out.push_str(&format!("{},{:.17e}\n", i + 1, loss));
        }
        out
    }
}

// Independent ChaCha streams keyed by the same seed, so that a gated and a
// plain model trained with one seed share input-weight init and sample order.
const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;

pub(crate) fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    rng
}

pub(crate) fn shuffle_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SHUFFLE_STREAM);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_zero_epochs_and_bad_rates() {
        assert!(TrainConfig::new(0.5, 0, 1).is_err());
        assert!(TrainConfig::new(0.0, 10, 1).is_err());
        assert!(TrainConfig::new(-1.0, 10, 1).is_err());
        assert!(TrainConfig::new(f64::NAN, 10, 1).is_err());
        assert!(TrainConfig::new(0.05, 40, 1).is_ok());
    }

    #[test]
    fn loss_csv_has_one_row_per_epoch() {
        let trace = LossTrace {
            per_epoch_loss: vec![0.5, 0.25],
        };
        let csv = trace.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("epoch,loss\n1,"));
    }
}
