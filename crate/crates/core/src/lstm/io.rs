//! JSON model files.
//!
//! Floats are written with shortest round-trip formatting, so a loaded model
//! produces bit-identical predictions.

use serde::{Deserialize, Serialize};

use super::params::{HeadParams, LstmModel, LstmParams};
use super::Hyperparameters;
use crate::error::{Error, Result};
use crate::trackdata::ClassSet;

pub const MODEL_FORMAT: &str = "cutin-lstm";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorRecord {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ModelRecord {
    format: String,
    version: u32,
    class_set: ClassSet,
    seq_len: usize,
    hyperparameters: Hyperparameters,
    tensors: Vec<TensorRecord>,
}

impl ModelRecord {
    pub(crate) fn from_model(model: &LstmModel) -> Self {
        let tensors = model
            .tensor_shapes()
            .into_iter()
            .zip(model.tensors())
            .map(|((name, rows, cols), t)| TensorRecord {
                name: name.into(),
                rows,
                cols,
                data: t.to_vec(),
            })
            .collect();
        ModelRecord {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            class_set: model.class_set,
            seq_len: model.seq_len,
            hyperparameters: model.hyper.clone(),
            tensors,
        }
    }

    pub(crate) fn into_model(self) -> Result<LstmModel> {
        if self.format != MODEL_FORMAT {
            return Err(Error::validation(format!(
                "not a model file (format {:?})",
                self.format
            )));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::validation(format!(
                "unsupported model version {}",
                self.version
            )));
        }
        let hyper = self.hyperparameters;
        let mut model = LstmModel {
            class_set: self.class_set,
            seq_len: self.seq_len,
            lstm: LstmParams::zeros(hyper.hidden_units),
            head: HeadParams::zeros(hyper.hidden_units, self.class_set.len(), hyper.activation),
            hyper,
        };
        let shapes = model.tensor_shapes();
        if self.tensors.len() != shapes.len() {
            return Err(Error::validation(format!(
                "expected {} tensors, found {}",
                shapes.len(),
                self.tensors.len()
            )));
        }
        for ((slot, (name, rows, cols)), rec) in model
            .tensors_mut()
            .into_iter()
            .zip(shapes)
            .zip(self.tensors)
        {
            if rec.name != name
                || rec.rows != rows
                || rec.cols != cols
                || rec.data.len() != rows * cols
            {
                return Err(Error::validation(format!(
                    "tensor {:?} ({}x{}, {} values) does not match expected {name} ({rows}x{cols})",
                    rec.name,
                    rec.rows,
                    rec.cols,
                    rec.data.len()
                )));
            }
            slot.copy_from_slice(&rec.data);
        }
        model.validate()?;
        Ok(model)
    }
}

pub fn save_model(model: &LstmModel) -> Result<String> {
    serde_json::to_string(&ModelRecord::from_model(model)).map_err(|e| Error::Serde(e.to_string()))
}

pub fn load_model(text: &str) -> Result<LstmModel> {
    let rec: ModelRecord = serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
    rec.into_model()
}
