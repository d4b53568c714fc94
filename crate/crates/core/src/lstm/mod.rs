//! Single-layer LSTM sequence classifier, written from scratch.
//!
//! The network reads a `(cx, cy, w, h)` sequence, feeds the last hidden state
//! through a dense layer with a selectable activation, inverted dropout and a
//! linear projection to `K` logits. Gradients are derived by hand
//! (backpropagation through time) and checked against finite differences in
//! the tests.

pub mod backward;
pub mod forward;
pub mod io;
pub mod optim;
pub mod params;
pub mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use backward::{backward, Gradients};
pub use forward::{
    argmax, head_forward, head_infer, loss_and_grad, lstm_forward, predict, softmax, HeadTrace,
    LstmTrace,
};
pub use io::{load_model, save_model};
pub use optim::OptimizerState;
pub use params::{HeadParams, LstmModel, LstmParams};
pub use train::{accuracy, train, EpochRecord, History, TrainingSample};

/// Candidate pools from the evaluated hyperparameter table, in table order.
pub const HIDDEN_UNITS_POOL: [usize; 4] = [60, 128, 256, 512];
pub const BATCH_SIZE_POOL: [usize; 4] = [5, 10, 50, 100];
pub const OPTIMIZER_POOL: [OptimizerKind; 3] = [
    OptimizerKind::Adam,
    OptimizerKind::RmsProp,
    OptimizerKind::AdaDelta,
];
pub const ACTIVATION_POOL: [Activation; 3] =
    [Activation::Relu, Activation::Sigmoid, Activation::Tanh];
pub const DROPOUT_POOL: [f64; 3] = [0.0, 0.25, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptimizerKind {
    Adam,
    RmsProp,
    AdaDelta,
}

impl OptimizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::RmsProp => "rmsprop",
            OptimizerKind::AdaDelta => "adadelta",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(OptimizerKind::Adam),
            "rmsprop" => Ok(OptimizerKind::RmsProp),
            "adadelta" => Ok(OptimizerKind::AdaDelta),
            other => Err(Error::config(format!("unknown optimizer {other:?}"))),
        }
    }
}

/// Weight initialization. Biases start at zero except the forget gate at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitScheme {
    /// Uniform `±sqrt(6 / (fan_in + fan_out))` per weight matrix, with the
    /// four gate blocks counted as one `4H`-wide output.
    #[default]
    Glorot,
    /// Uniform `±0.08` everywhere.
    Uniform,
}

impl InitScheme {
    pub fn name(&self) -> &'static str {
        match self {
            InitScheme::Glorot => "glorot",
            InitScheme::Uniform => "uniform",
        }
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "glorot" => Ok(InitScheme::Glorot),
            "uniform" => Ok(InitScheme::Uniform),
            other => Err(Error::config(format!("unknown init scheme {other:?}"))),
        }
    }
}

/// Activation of the dense head layer. Gate nonlinearities are fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    pub fn derivative(&self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::config(format!("unknown activation {other:?}"))),
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    pub hidden_units: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub activation: Activation,
    pub dropout: f64,
    /// Allows values outside the evaluated pools.
    #[serde(default)]
    pub custom: bool,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            hidden_units: 60,
            batch_size: 10,
            optimizer: OptimizerKind::Adam,
            activation: Activation::Tanh,
            dropout: 0.0,
            custom: false,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_units == 0 || self.batch_size == 0 {
            return Err(Error::config("hidden_units and batch_size must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if !self.custom {
            if !HIDDEN_UNITS_POOL.contains(&self.hidden_units) {
                return Err(Error::config(format!(
                    "hidden_units {} not in {HIDDEN_UNITS_POOL:?} (set custom = true to allow)",
                    self.hidden_units
                )));
            }
            if !BATCH_SIZE_POOL.contains(&self.batch_size) {
                return Err(Error::config(format!(
                    "batch_size {} not in {BATCH_SIZE_POOL:?} (set custom = true to allow)",
                    self.batch_size
                )));
            }
            if !DROPOUT_POOL.contains(&self.dropout) {
                return Err(Error::config(format!(
                    "dropout {} not in {DROPOUT_POOL:?} (set custom = true to allow)",
                    self.dropout
                )));
            }
        }
        Ok(())
    }

    /// Free-form hyperparameters for small test networks.
    pub fn custom(
        hidden_units: usize,
        batch_size: usize,
        optimizer: OptimizerKind,
        activation: Activation,
        dropout: f64,
    ) -> Self {
        Hyperparameters {
            hidden_units,
            batch_size,
            optimizer,
            activation,
            dropout,
            custom: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Step size for Adam and RMSProp; AdaDelta ignores it.
    pub learning_rate: f64,
    pub seed: u64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    pub init: InitScheme,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            learning_rate: 1e-3,
            seed: 0,
            early_stop_patience: 10,
            init: InitScheme::Glorot,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}
