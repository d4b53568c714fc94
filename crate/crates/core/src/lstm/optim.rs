//! First-order optimizers with fixed constants.

use super::OptimizerKind;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const RMSPROP_RHO: f64 = 0.9;
pub const RMSPROP_EPS: f64 = 1e-8;
pub const ADADELTA_RHO: f64 = 0.95;
pub const ADADELTA_EPS: f64 = 1e-6;

/// Per-parameter moment buffers.
///
/// Adam keeps first and second moments, RMSProp only the squared-gradient
/// average (in `second`), AdaDelta the squared-gradient average (`second`)
/// and the squared-update average (`first`).
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64, shapes: &[usize]) -> Self {
        OptimizerState {
            kind,
            learning_rate,
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Applies one update in place.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::input("optimizer tensor count mismatch"));
        }
        self.step += 1;
        let lr = self.learning_rate;
        let t = self.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        for (ti, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.first[ti].len() {
                return Err(Error::input(format!("optimizer tensor {ti} size mismatch")));
            }
            let m = &mut self.first[ti];
            let v = &mut self.second[ti];
            match self.kind {
                OptimizerKind::Adam => {
                    for i in 0..p.len() {
                        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                        p[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + ADAM_EPS);
                    }
                }
                OptimizerKind::RmsProp => {
                    for i in 0..p.len() {
                        v[i] = RMSPROP_RHO * v[i] + (1.0 - RMSPROP_RHO) * g[i] * g[i];
                        p[i] -= lr * g[i] / (v[i].sqrt() + RMSPROP_EPS);
                    }
                }
                OptimizerKind::AdaDelta => {
                    for i in 0..p.len() {
                        v[i] = ADADELTA_RHO * v[i] + (1.0 - ADADELTA_RHO) * g[i] * g[i];
                        let dx =
                            -((m[i] + ADADELTA_EPS).sqrt() / (v[i] + ADADELTA_EPS).sqrt()) * g[i];
                        m[i] = ADADELTA_RHO * m[i] + (1.0 - ADADELTA_RHO) * dx * dx;
                        p[i] += dx;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_step(kind: OptimizerKind, lr: f64, theta: f64, g: f64) -> f64 {
        let mut st = OptimizerState::new(kind, lr, &[1]);
        let mut p = [theta];
        st.update(&mut [&mut p[..]], &[&[g][..]]).unwrap();
        p[0]
    }

    #[test]
    fn adam_first_step_oracle() {
        // Bias-corrected moments after one step are exactly g and g², so the
        // update is lr * g / (|g| + eps).
        let (lr, g) = (0.01, 0.3f64);
        let expected = 1.0 - lr * g / (g.abs() + ADAM_EPS);
        assert!((one_step(OptimizerKind::Adam, lr, 1.0, g) - expected).abs() < 1e-15);
    }

    #[test]
    fn adam_second_step_oracle() {
        let (lr, g1, g2) = (0.01, 0.3f64, -0.1f64);
        let m = 0.9 * (0.1 * g1) + 0.1 * g2;
        let v = 0.999 * (0.001 * g1 * g1) + 0.001 * g2 * g2;
        let mut theta = 1.0 - lr * g1 / (g1.abs() + ADAM_EPS);
        theta -= lr * (m / (1.0 - 0.81)) / ((v / (1.0 - 0.999f64.powi(2))).sqrt() + ADAM_EPS);

        let mut st = OptimizerState::new(OptimizerKind::Adam, lr, &[1]);
        let mut p = [1.0];
        st.update(&mut [&mut p[..]], &[&[g1][..]]).unwrap();
        st.update(&mut [&mut p[..]], &[&[g2][..]]).unwrap();
        assert!((p[0] - theta).abs() < 1e-15);
    }

    #[test]
    fn rmsprop_and_adadelta_first_step() {
        let g: f64 = 0.5;
        let v = 0.1 * g * g;
        let expected = -1e-3 * g / (v.sqrt() + RMSPROP_EPS);
        assert!((one_step(OptimizerKind::RmsProp, 1e-3, 0.0, g) - expected).abs() < 1e-15);

        let v = 0.05 * g * g;
        let expected = -(ADADELTA_EPS.sqrt() / (v + ADADELTA_EPS).sqrt()) * g;
        // AdaDelta ignores the learning rate.
        assert!((one_step(OptimizerKind::AdaDelta, 123.0, 0.0, g) - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        for kind in [
            OptimizerKind::Adam,
            OptimizerKind::RmsProp,
            OptimizerKind::AdaDelta,
        ] {
            assert_eq!(one_step(kind, 0.1, 0.7, 0.0), 0.7);
        }
    }

    #[test]
    fn size_mismatch_is_an_error() {
        let mut st = OptimizerState::new(OptimizerKind::Adam, 0.1, &[2]);
        let mut p = [0.0];
        assert!(st.update(&mut [&mut p[..]], &[&[1.0][..]]).is_err());
    }

    proptest! {
        #[test]
        fn first_update_opposes_gradient(g in -10.0f64..10.0, kind_idx in 0usize..3) {
            prop_assume!(g.abs() > 1e-6);
            let kind = [OptimizerKind::Adam, OptimizerKind::RmsProp, OptimizerKind::AdaDelta][kind_idx];
            let delta = one_step(kind, 1e-3, 0.0, g);
            prop_assert!(delta * g < 0.0);
        }
    }
}
