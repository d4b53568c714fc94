//! Parameter tensors. All matrices are row-major `Vec<f64>`.
//!
//! Gate blocks are stacked in the order input, forget, candidate, output, so
//! row `g * H + j` of `w`, `u` and `b` belongs to gate `g`, unit `j`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, Hyperparameters, InitScheme};
use crate::error::{Error, Result};
use crate::features::FEATURES;
use crate::trackdata::ClassSet;

/// Half-width of the [`InitScheme::Uniform`] range.
pub const INIT_SCALE: f64 = 0.08;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub hidden: usize,
    /// `4H x 4`
    pub w: Vec<f64>,
    /// `4H x H`
    pub u: Vec<f64>,
    /// `4H`
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub activation: Activation,
    /// `H x H`
    pub dense_w: Vec<f64>,
    pub dense_b: Vec<f64>,
    /// `K x H`
    pub out_w: Vec<f64>,
    pub out_b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub class_set: ClassSet,
    pub seq_len: usize,
    pub hyper: Hyperparameters,
    pub lstm: LstmParams,
    pub head: HeadParams,
}

impl LstmParams {
    pub fn zeros(hidden: usize) -> Self {
        LstmParams {
            hidden,
            w: vec![0.0; 4 * hidden * FEATURES],
            u: vec![0.0; 4 * hidden * hidden],
            b: vec![0.0; 4 * hidden],
        }
    }
}

impl HeadParams {
    pub fn zeros(hidden: usize, classes: usize, activation: Activation) -> Self {
        HeadParams {
            activation,
            dense_w: vec![0.0; hidden * hidden],
            dense_b: vec![0.0; hidden],
            out_w: vec![0.0; classes * hidden],
            out_b: vec![0.0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.out_b.len()
    }
}

impl LstmModel {
    pub fn zeros(class_set: ClassSet, seq_len: usize, hyper: Hyperparameters) -> Self {
        let h = hyper.hidden_units;
        let head = HeadParams::zeros(h, class_set.len(), hyper.activation);
        LstmModel {
            class_set,
            seq_len,
            lstm: LstmParams::zeros(h),
            head,
            hyper,
        }
    }

    /// [`Self::init_with`] using the default scheme.
    pub fn init(
        class_set: ClassSet,
        seq_len: usize,
        hyper: Hyperparameters,
        seed: u64,
    ) -> Result<Self> {
        Self::init_with(class_set, seq_len, hyper, seed, InitScheme::default())
    }

    /// Seeded random weights, zero biases except the forget gate at 1.
    pub fn init_with(
        class_set: ClassSet,
        seq_len: usize,
        hyper: Hyperparameters,
        seed: u64,
        scheme: InitScheme,
    ) -> Result<Self> {
        hyper.validate()?;
        if seq_len < 2 {
            return Err(Error::config(format!(
                "sequence length must be >= 2, got {seq_len}"
            )));
        }
        let mut m = Self::zeros(class_set, seq_len, hyper);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = m.hidden();
        let k = m.classes();
        let glorot = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
        let scales = match scheme {
            InitScheme::Glorot => [
                glorot(FEATURES, 4 * h),
                glorot(h, 4 * h),
                glorot(h, h),
                glorot(h, k),
            ],
            InitScheme::Uniform => [INIT_SCALE; 4],
        };
        let tensors = [
            &mut m.lstm.w,
            &mut m.lstm.u,
            &mut m.head.dense_w,
            &mut m.head.out_w,
        ];
        for (t, scale) in tensors.into_iter().zip(scales) {
            for v in t.iter_mut() {
                *v = rng.random_range(-scale..scale);
            }
        }
        for v in &mut m.lstm.b[h..2 * h] {
            *v = 1.0;
        }
        Ok(m)
    }

    pub fn hidden(&self) -> usize {
        self.lstm.hidden
    }

    pub fn classes(&self) -> usize {
        self.head.classes()
    }

    pub fn tensors(&self) -> [&[f64]; 7] {
        [
            &self.lstm.w,
            &self.lstm.u,
            &self.lstm.b,
            &self.head.dense_w,
            &self.head.dense_b,
            &self.head.out_w,
            &self.head.out_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 7] {
        [
            &mut self.lstm.w,
            &mut self.lstm.u,
            &mut self.lstm.b,
            &mut self.head.dense_w,
            &mut self.head.dense_b,
            &mut self.head.out_w,
            &mut self.head.out_b,
        ]
    }

    /// `(name, rows, cols)` for each entry of [`tensors`](Self::tensors).
    pub fn tensor_shapes(&self) -> [(&'static str, usize, usize); 7] {
        let (h, k) = (self.hidden(), self.classes());
        [
            ("lstm.w", 4 * h, FEATURES),
            ("lstm.u", 4 * h, h),
            ("lstm.b", 4 * h, 1),
            ("dense.w", h, h),
            ("dense.b", h, 1),
            ("out.w", k, h),
            ("out.b", k, 1),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Checks tensor sizes against the declared dimensions.
    pub fn validate(&self) -> Result<()> {
        if self.hidden() != self.hyper.hidden_units {
            return Err(Error::validation(
                "hidden size disagrees with hyperparameters",
            ));
        }
        if self.classes() != self.class_set.len() {
            return Err(Error::validation("output size disagrees with class set"));
        }
        if self.head.activation != self.hyper.activation {
            return Err(Error::validation(
                "head activation disagrees with hyperparameters",
            ));
        }
        for ((name, r, c), t) in self.tensor_shapes().into_iter().zip(self.tensors()) {
            if t.len() != r * c {
                return Err(Error::validation(format!(
                    "tensor {name} has {} values, expected {r}x{c}",
                    t.len()
                )));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!(
                    "tensor {name} has non-finite values"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_ranges_and_forget_bias() {
        let hp = Hyperparameters::default();
        let u = LstmModel::init_with(ClassSet::SidedCutIn, 30, hp.clone(), 7, InitScheme::Uniform)
            .unwrap();
        assert!(u
            .tensors()
            .iter()
            .flat_map(|t| t.iter())
            .all(|v| v.abs() <= 1.0 && (*v == 1.0 || v.abs() <= INIT_SCALE)));
        let m = LstmModel::init(ClassSet::SidedCutIn, 30, hp, 7).unwrap();
        assert!(m.validate().is_ok());
        // H = 60: input block ±sqrt(6/244), recurrent ±sqrt(6/300), head ±sqrt(6/120), output ±sqrt(6/63).
        let within = |t: &[f64], b: f64| {
            t.iter().all(|v| v.abs() <= b) && t.iter().any(|v| v.abs() > 0.9 * b)
        };
        assert!(within(&m.lstm.w, (6.0f64 / 244.0).sqrt()));
        assert!(within(&m.lstm.u, (6.0f64 / 300.0).sqrt()));
        assert!(within(&m.head.dense_w, (6.0f64 / 120.0).sqrt()));
        assert!(within(&m.head.out_w, (6.0f64 / 63.0).sqrt()));
        let h = m.hidden();
        assert!(m.lstm.b[..h].iter().all(|&v| v == 0.0));
        assert!(m.lstm.b[h..2 * h].iter().all(|&v| v == 1.0));
        assert_eq!(m.classes(), 3);
        // 4H(4 + H + 1) + H(H + 1) + K(H + 1)
        assert_eq!(m.parameter_count(), 240 * 65 + 60 * 61 + 3 * 61);
    }

    #[test]
    fn init_is_seeded() {
        let hp = Hyperparameters::default();
        let a = LstmModel::init(ClassSet::CutInLanePass, 15, hp.clone(), 1).unwrap();
        let b = LstmModel::init(ClassSet::CutInLanePass, 15, hp.clone(), 1).unwrap();
        let c = LstmModel::init(ClassSet::CutInLanePass, 15, hp, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
