//! Forward pass, softmax cross-entropy and inference.

use rand::Rng;

use super::params::{HeadParams, LstmModel, LstmParams};
use super::sigmoid;
use crate::error::{Error, Result};
use crate::features::{FeatureSequence, FEATURES};

/// Values kept from the recurrent pass for backpropagation.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    pub hidden: usize,
    pub inputs: Vec<[f64; FEATURES]>,
    /// Post-activation gates per step, `L x 4H` in order i, f, g, o.
    pub gates: Vec<f64>,
    /// Cell states `c_0..c_L`, `(L + 1) x H`; `c_0` is zero.
    pub cells: Vec<f64>,
    /// Hidden states `h_0..h_L`, `(L + 1) x H`; `h_0` is zero.
    pub hiddens: Vec<f64>,
}

impl LstmTrace {
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn hidden_at(&self, t: usize) -> &[f64] {
        &self.hiddens[t * self.hidden..(t + 1) * self.hidden]
    }

    pub fn cell_at(&self, t: usize) -> &[f64] {
        &self.cells[t * self.hidden..(t + 1) * self.hidden]
    }

    pub fn final_hidden(&self) -> &[f64] {
        self.hidden_at(self.steps())
    }
}

#[derive(Debug, Clone)]
pub struct HeadTrace {
    pub pre: Vec<f64>,
    pub act: Vec<f64>,
    /// Inverted-dropout multipliers: 0 or `1 / (1 - p)`, all 1 at inference.
    pub mask: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Runs the recurrence from zero state over `inputs`.
pub fn lstm_forward(p: &LstmParams, inputs: &[[f64; FEATURES]]) -> Result<LstmTrace> {
    let h = p.hidden;
    let l = inputs.len();
    let mut gates = vec![0.0; l * 4 * h];
    let mut cells = vec![0.0; (l + 1) * h];
    let mut hiddens = vec![0.0; (l + 1) * h];
    let mut z = vec![0.0; 4 * h];
    for (t, x) in inputs.iter().enumerate() {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite input at step {t}")));
        }
        let (prev, cur) = hiddens.split_at_mut((t + 1) * h);
        let h_prev = &prev[t * h..];
        for (r, zr) in z.iter_mut().enumerate() {
            let wr = &p.w[r * FEATURES..(r + 1) * FEATURES];
            let ur = &p.u[r * h..(r + 1) * h];
            let mut acc = p.b[r];
            for k in 0..FEATURES {
                acc += wr[k] * x[k];
            }
            for m in 0..h {
                acc += ur[m] * h_prev[m];
            }
            *zr = acc;
        }
        let g_t = &mut gates[t * 4 * h..(t + 1) * 4 * h];
        let (c_prev, c_cur) = cells.split_at_mut((t + 1) * h);
        let c_prev = &c_prev[t * h..];
        let h_cur = &mut cur[..h];
        for j in 0..h {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[h + j]);
            let g = z[2 * h + j].tanh();
            let o = sigmoid(z[3 * h + j]);
            let c = f * c_prev[j] + i * g;
            let hv = o * c.tanh();
            if !hv.is_finite() || !c.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite activation at step {t}"
                )));
            }
            g_t[j] = i;
            g_t[h + j] = f;
            g_t[2 * h + j] = g;
            g_t[3 * h + j] = o;
            c_cur[j] = c;
            h_cur[j] = hv;
        }
    }
    Ok(LstmTrace {
        hidden: h,
        inputs: inputs.to_vec(),
        gates,
        cells,
        hiddens,
    })
}

/// Dense layer, dropout and output projection. Pass `dropout = None` for
/// inference; `Some((p, rng))` draws a fresh mask.
pub fn head_forward<R: Rng + ?Sized>(
    head: &HeadParams,
    hidden: &[f64],
    dropout: Option<(f64, &mut R)>,
) -> HeadTrace {
    let h = hidden.len();
    let k = head.classes();
    let mut pre = vec![0.0; h];
    for (j, pj) in pre.iter_mut().enumerate() {
        let row = &head.dense_w[j * h..(j + 1) * h];
        *pj = head.dense_b[j] + row.iter().zip(hidden).map(|(a, b)| a * b).sum::<f64>();
    }
    let act: Vec<f64> = pre.iter().map(|&x| head.activation.apply(x)).collect();
    let mask = match dropout {
        Some((p, rng)) if p > 0.0 => {
            let keep = 1.0 - p;
            (0..h)
                .map(|_| {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
                .collect()
        }
        _ => vec![1.0; h],
    };
    let mut logits = vec![0.0; k];
    for (c, lc) in logits.iter_mut().enumerate() {
        let row = &head.out_w[c * h..(c + 1) * h];
        let mut acc = head.out_b[c];
        for j in 0..h {
            acc += row[j] * act[j] * mask[j];
        }
        *lc = acc;
    }
    HeadTrace {
        pre,
        act,
        mask,
        logits,
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of `softmax(logits)` against `label` and its gradient with
/// respect to the logits.
pub fn loss_and_grad(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::input(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    let loss = lse - logits[label];
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    if !loss.is_finite() {
        return Err(Error::Numerical("non-finite loss".into()));
    }
    Ok((loss, grad))
}

/// Class probabilities for one sequence, without dropout.
pub fn predict(model: &LstmModel, seq: &FeatureSequence) -> Result<Vec<f64>> {
    if seq.len() != model.seq_len {
        return Err(Error::input(format!(
            "sequence length {} does not match model length {}",
            seq.len(),
            model.seq_len
        )));
    }
    let trace = lstm_forward(&model.lstm, &seq.values)?;
    Ok(softmax(
        &head_infer(&model.head, trace.final_hidden()).logits,
    ))
}

/// [`head_forward`] without dropout.
pub fn head_infer(head: &HeadParams, hidden: &[f64]) -> HeadTrace {
    head_forward::<rand_chacha::ChaCha8Rng>(head, hidden, None)
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::{Activation, Hyperparameters, OptimizerKind};
    use crate::trackdata::ClassSet;

    #[test]
    fn uniform_logits_give_log_k() {
        let (loss, grad) = loss_and_grad(&[0.0, 0.0, 0.0], 1).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-15);
        assert!((grad[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((grad[1] + 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_handles_large_logits() {
        let p = softmax(&[1000.0, 0.0]);
        assert_eq!(p[0], 1.0);
        let (loss, _) = loss_and_grad(&[1000.0, -1000.0], 1).unwrap();
        assert!((loss - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn label_out_of_range() {
        assert!(loss_and_grad(&[0.0, 0.0], 2).is_err());
    }

    #[test]
    fn argmax_ties_take_lowest() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn zero_weights_single_step() {
        // All-zero parameters: gates are 0.5, candidate 0, so c = h = 0.
        let m = LstmModel::zeros(
            ClassSet::CutInLanePass,
            2,
            Hyperparameters::custom(3, 1, OptimizerKind::Adam, Activation::Tanh, 0.0),
        );
        let tr = lstm_forward(&m.lstm, &[[0.1, 0.2, 0.3, 0.4]]).unwrap();
        assert!(tr.gates[..3].iter().all(|&g| g == 0.5));
        assert!(tr.final_hidden().iter().all(|&h| h == 0.0));
    }

    #[test]
    fn scalar_cell_oracle() {
        // H = 1 with hand-picked weights, evaluated independently.
        let mut p = LstmParams::zeros(1);
        p.w = vec![
            0.5, 0.0, 0.0, 0.0, -0.3, 0.0, 0.0, 0.0, 0.8, 0.0, 0.0, 0.0, 0.2, 0.0, 0.0, 0.0,
        ];
        p.u = vec![0.1, 0.4, -0.2, 0.3];
        p.b = vec![0.0, 1.0, 0.0, 0.0];
        let xs = [[1.0, 0.0, 0.0, 0.0], [-0.5, 0.0, 0.0, 0.0]];
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (mut h, mut c) = (0.0f64, 0.0f64);
        for x in xs {
            let i = s(0.5 * x[0] + 0.1 * h);
            let f = s(-0.3 * x[0] + 0.4 * h + 1.0);
            let g = (0.8 * x[0] - 0.2 * h).tanh();
            let o = s(0.2 * x[0] + 0.3 * h);
            c = f * c + i * g;
            h = o * c.tanh();
        }
        let tr = lstm_forward(&p, &xs).unwrap();
        assert!((tr.final_hidden()[0] - h).abs() < 1e-15);
        assert!((tr.cell_at(2)[0] - c).abs() < 1e-15);
    }

    #[test]
    fn non_finite_input_names_step() {
        let p = LstmParams::zeros(2);
        let err = lstm_forward(&p, &[[0.0; 4], [f64::NAN, 0.0, 0.0, 0.0]]).unwrap_err();
        assert!(err.to_string().contains("step 1"));
    }

    #[test]
    fn saturated_gates_with_zero_candidate() {
        let h = 3;
        let mut p = LstmParams::zeros(h);
        for j in 0..h {
            p.b[j] = 10.0;
            p.b[h + j] = 10.0;
            p.b[3 * h + j] = 10.0;
        }
        let tr = lstm_forward(&p, &[[1.0; 4]; 6]).unwrap();
        for t in 0..6 {
            let g = &tr.gates[t * 4 * h..(t + 1) * 4 * h];
            for j in 0..h {
                assert!(g[j] > 0.9999 && g[h + j] > 0.9999 && g[3 * h + j] > 0.9999);
                assert_eq!(g[2 * h + j], 0.0);
            }
        }
        assert!(tr.cells.iter().chain(&tr.hiddens).all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_head_and_dropout_free_training_path() {
        use rand::SeedableRng;
        let m = LstmModel::zeros(
            ClassSet::SidedCutIn,
            2,
            Hyperparameters::custom(4, 1, OptimizerKind::Adam, Activation::Relu, 0.0),
        );
        assert_eq!(
            head_infer(&m.head, &[0.3, -0.2, 0.5, 1.0]).logits,
            vec![0.0; 3]
        );
        let init = LstmModel::init(ClassSet::SidedCutIn, 2, m.hyper.clone(), 4).unwrap();
        let hidden = [0.3, -0.2, 0.5, 1.0];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            head_forward(&init.head, &hidden, Some((0.0, &mut rng))).logits,
            head_infer(&init.head, &hidden).logits
        );
    }

    #[test]
    fn fresh_model_loss_near_log_k() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for set in [ClassSet::CutInLanePass, ClassSet::SidedCutIn] {
            let m = LstmModel::init(set, 30, Hyperparameters::default(), 7).unwrap();
            let mut total = 0.0;
            for _ in 0..50 {
                let seq: Vec<[f64; 4]> = (0..30)
                    .map(|_| std::array::from_fn(|_| rng.random_range(0.0..1.0)))
                    .collect();
                let tr = lstm_forward(&m.lstm, &seq).unwrap();
                let label = rng.random_range(0..set.len());
                total += loss_and_grad(&head_infer(&m.head, tr.final_hidden()).logits, label)
                    .unwrap()
                    .0;
            }
            let k = (set.len() as f64).ln();
            assert!(
                (total / 50.0 - k).abs() < 0.1 * k,
                "{set:?}: {}",
                total / 50.0
            );
        }
    }

    proptest::proptest! {
        #[test]
        fn hidden_and_forward_are_bounded_and_pure(seed in 0u64..1000, scale in 0.1f64..5.0, x in -3.0f64..3.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut p = LstmParams::zeros(5);
            for v in p.w.iter_mut().chain(p.u.iter_mut()).chain(p.b.iter_mut()) {
                *v = rng.random_range(-scale..scale);
            }
            let seq: Vec<[f64; 4]> = (0..8).map(|t| [x, x * t as f64 / 8.0, rng.random_range(0.0..1.0), 0.5]).collect();
            let a = lstm_forward(&p, &seq).unwrap();
            proptest::prop_assert!(a.hiddens.iter().all(|h| h.abs() <= 1.0));
            let b = lstm_forward(&p, &seq).unwrap();
            proptest::prop_assert!(a.hiddens.iter().zip(&b.hiddens).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }

    #[test]
    fn predict_rejects_wrong_length() {
        let m =
            LstmModel::init(ClassSet::CutInLanePass, 15, Hyperparameters::default(), 0).unwrap();
        let seq = FeatureSequence {
            clip_id: "a".into(),
            values: vec![[0.5; 4]; 30],
        };
        assert!(matches!(predict(&m, &seq), Err(Error::Input(_))));
    }
}
