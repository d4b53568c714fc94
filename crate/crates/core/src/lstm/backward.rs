//! Backpropagation through time for the LSTM and its head.

use rand::Rng;

use super::forward::{head_forward, loss_and_grad, lstm_forward, HeadTrace, LstmTrace};
use super::params::LstmModel;
use crate::error::Result;
use crate::features::FEATURES;

/// Gradient buffers laid out like [`LstmModel::tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: [Vec<f64>; 7],
}

impl Gradients {
    pub fn zeros_like(model: &LstmModel) -> Self {
        Gradients {
            tensors: model.tensors().map(|t| vec![0.0; t.len()]),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.tensors {
            for v in t.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn as_slices(&self) -> [&[f64]; 7] {
        [
            &self.tensors[0],
            &self.tensors[1],
            &self.tensors[2],
            &self.tensors[3],
            &self.tensors[4],
            &self.tensors[5],
            &self.tensors[6],
        ]
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Adds the gradient of one sample's loss to `grads` given its traces and
/// the logit gradient.
fn accumulate(
    model: &LstmModel,
    lt: &LstmTrace,
    ht: &HeadTrace,
    dlogits: &[f64],
    grads: &mut Gradients,
) {
    let h = model.hidden();
    let hidden = lt.final_hidden();
    let [gw, gu, gb, gdw, gdb, gow, gob] = &mut grads.tensors;

    // Output projection and dropout.
    let mut d_act = vec![0.0; h];
    for (c, &dl) in dlogits.iter().enumerate() {
        gob[c] += dl;
        let row = &model.head.out_w[c * h..(c + 1) * h];
        let grow = &mut gow[c * h..(c + 1) * h];
        for j in 0..h {
            let dropped = ht.act[j] * ht.mask[j];
            grow[j] += dl * dropped;
            d_act[j] += dl * row[j] * ht.mask[j];
        }
    }

    // Dense layer.
    let mut dh = vec![0.0; h];
    for j in 0..h {
        let dpre = d_act[j] * model.head.activation.derivative(ht.pre[j], ht.act[j]);
        if dpre == 0.0 {
            continue;
        }
        gdb[j] += dpre;
        let row = &model.head.dense_w[j * h..(j + 1) * h];
        let grow = &mut gdw[j * h..(j + 1) * h];
        for m in 0..h {
            grow[m] += dpre * hidden[m];
            dh[m] += dpre * row[m];
        }
    }

    // Recurrence, newest step first.
    let p = &model.lstm;
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    for t in (0..lt.steps()).rev() {
        let gates = &lt.gates[t * 4 * h..(t + 1) * 4 * h];
        let c_t = lt.cell_at(t + 1);
        let c_prev = lt.cell_at(t);
        let h_prev = lt.hidden_at(t);
        let x = &lt.inputs[t];
        for j in 0..h {
            let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            let tc = c_t[j].tanh();
            let dc = dc_next[j] + dh[j] * o * (1.0 - tc * tc);
            dz[j] = dc * g * i * (1.0 - i);
            dz[h + j] = dc * c_prev[j] * f * (1.0 - f);
            dz[2 * h + j] = dc * i * (1.0 - g * g);
            dz[3 * h + j] = dh[j] * tc * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        for v in dh.iter_mut() {
            *v = 0.0;
        }
        for (r, &d) in dz.iter().enumerate() {
            gb[r] += d;
            let gwr = &mut gw[r * FEATURES..(r + 1) * FEATURES];
            for k in 0..FEATURES {
                gwr[k] += d * x[k];
            }
            let ur = &p.u[r * h..(r + 1) * h];
            let gur = &mut gu[r * h..(r + 1) * h];
            for m in 0..h {
                gur[m] += d * h_prev[m];
                dh[m] += d * ur[m];
            }
        }
    }
}

/// Mean loss and mean gradient over `batch` of `(sequence, label)` pairs.
///
/// Samples are processed in order, so the floating-point summation is
/// reproducible. With `dropout = Some((p, rng))` one mask per sample is drawn
/// from `rng` in batch order.
pub fn backward<R: Rng + ?Sized>(
    model: &LstmModel,
    batch: &[(&[[f64; FEATURES]], usize)],
    mut dropout: Option<(f64, &mut R)>,
) -> Result<(f64, Gradients)> {
    let mut grads = Gradients::zeros_like(model);
    let mut total = 0.0;
    for &(inputs, label) in batch {
        let lt = lstm_forward(&model.lstm, inputs)?;
        let ht = match dropout.as_mut() {
            Some((p, rng)) => head_forward(&model.head, lt.final_hidden(), Some((*p, &mut **rng))),
            None => head_forward::<R>(&model.head, lt.final_hidden(), None),
        };
        let (loss, dlogits) = loss_and_grad(&ht.logits, label)?;
        total += loss;
        accumulate(model, &lt, &ht, &dlogits, &mut grads);
    }
    let n = batch.len().max(1) as f64;
    grads.scale(1.0 / n);
    Ok((total / n, grads))
}
