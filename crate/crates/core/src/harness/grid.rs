use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, Metrics};
use crate::error::{Error, Result};
use crate::lstm::{
    Activation, Hyperparameters, OptimizerKind, TrainConfig, ACTIVATION_POOL, BATCH_SIZE_POOL,
    DROPOUT_POOL, HIDDEN_UNITS_POOL, OPTIMIZER_POOL,
};
use crate::strategies::{train_strategy, Strategy, StrategyKind};
use crate::trackdata::LabeledClip;

/// Hyperparameter pools. Candidates are enumerated with `hidden` outermost
/// and `dropout` innermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub hidden_units: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub optimizer: Vec<OptimizerKind>,
    pub activation: Vec<Activation>,
    pub dropout: Vec<f64>,
}

impl GridSpec {
    /// The full evaluated table: 4 x 4 x 3 x 3 x 3 = 432 candidates.
    pub fn full() -> Self {
        GridSpec {
            hidden_units: HIDDEN_UNITS_POOL.to_vec(),
            batch_size: BATCH_SIZE_POOL.to_vec(),
            optimizer: OPTIMIZER_POOL.to_vec(),
            activation: ACTIVATION_POOL.to_vec(),
            dropout: DROPOUT_POOL.to_vec(),
        }
    }

    /// Single candidate.
    pub fn single(h: &Hyperparameters) -> Self {
        GridSpec {
            hidden_units: vec![h.hidden_units],
            batch_size: vec![h.batch_size],
            optimizer: vec![h.optimizer],
            activation: vec![h.activation],
            dropout: vec![h.dropout],
        }
    }

    pub fn len(&self) -> usize {
        self.hidden_units.len()
            * self.batch_size.len()
            * self.optimizer.len()
            * self.activation.len()
            * self.dropout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cartesian product in enumeration order. Values outside the standard
    /// pools are marked `custom`.
    pub fn candidates(&self) -> Vec<Hyperparameters> {
        let mut out = Vec::with_capacity(self.len());
        for &hidden_units in &self.hidden_units {
            for &batch_size in &self.batch_size {
                for &optimizer in &self.optimizer {
                    for &activation in &self.activation {
                        for &dropout in &self.dropout {
                            let mut h = Hyperparameters {
                                hidden_units,
                                batch_size,
                                optimizer,
                                activation,
                                dropout,
                                custom: false,
                            };
                            h.custom = h.validate().is_err();
                            out.push(h);
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub index: usize,
    pub hyper: Hyperparameters,
    pub seed: u64,
    /// `None` when training failed.
    pub val_accuracy: Option<f64>,
    pub train_seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    /// In enumeration order.
    pub candidates: Vec<CandidateResult>,
    /// Candidate indices, best first; failed candidates last in index order.
    pub leaderboard: Vec<usize>,
    pub best_index: Option<usize>,
    pub best: Option<Strategy>,
}

impl GridResult {
    /// `rank,index,hidden_units,batch_size,optimizer,activation,dropout,val_accuracy,status`.
    /// Timing is left out so the table is reproducible.
    pub fn leaderboard_csv(&self) -> String {
        let mut s = String::from(
            "rank,index,hidden_units,batch_size,optimizer,activation,dropout,val_accuracy,status\n",
        );
        for (rank, &i) in self.leaderboard.iter().enumerate() {
            let c = &self.candidates[i];
            let h = &c.hyper;
            let acc = c
                .val_accuracy
                .map(|a| format!("{a:.4}"))
                .unwrap_or_default();
            let status = c
                .error
                .as_deref()
                .map(|e| format!("failed: {}", e.replace([',', '\n'], ";")))
                .unwrap_or("ok".into());
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{acc},{status}\n",
                rank + 1,
                c.index,
                h.hidden_units,
                h.batch_size,
                h.optimizer,
                h.activation,
                h.dropout
            ));
        }
        s
    }
}

/// `a` ranks above `b`: higher accuracy, then lower index.
fn better(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Trains every candidate and keeps the one with the best validation
/// accuracy. Candidate `i` trains with seed `config.seed ^ i`, so results do
/// not depend on `workers` or completion order. A failed candidate is
/// recorded and skipped.
pub fn grid_search(
    kind: StrategyKind,
    train: &[&LabeledClip],
    val: &[&LabeledClip],
    length: usize,
    grid: &GridSpec,
    config: &TrainConfig,
    workers: usize,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::config("grid has an empty pool"));
    }
    let candidates = grid.candidates();
    let selection = if val.is_empty() { train } else { val };
    let best: Mutex<Option<(f64, usize, Strategy)>> = Mutex::new(None);

    let run = |index: usize, hyper: &Hyperparameters| -> CandidateResult {
        let seed = config.seed ^ index as u64;
        let cfg = TrainConfig {
            seed,
            ..config.clone()
        };
        let start = Instant::now();
        let outcome = train_strategy(kind, train, val, length, hyper, &cfg)
            .and_then(|s| evaluate(&s, selection).map(|m| (m.accuracy, s)));
        let train_seconds = start.elapsed().as_secs_f64();
        match outcome {
            Ok((acc, strategy)) => {
                let mut guard = best.lock().unwrap();
                if guard
                    .as_ref()
                    .is_none_or(|(a, i, _)| better((acc, index), (*a, *i)))
                {
                    *guard = Some((acc, index, strategy));
                }
                log::info!("candidate {index}: val accuracy {acc:.4}");
                CandidateResult {
                    index,
                    hyper: hyper.clone(),
                    seed,
                    val_accuracy: Some(acc),
                    train_seconds,
                    error: None,
                }
            }
            Err(e) => {
                log::warn!("candidate {index} failed: {e}");
                CandidateResult {
                    index,
                    hyper: hyper.clone(),
                    seed,
                    val_accuracy: None,
                    train_seconds,
                    error: Some(e.to_string()),
                }
            }
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<CandidateResult> = pool.install(|| {
        candidates
            .par_iter()
            .enumerate()
            .map(|(i, h)| run(i, h))
            .collect()
    });

    let mut leaderboard: Vec<usize> = (0..results.len()).collect();
    leaderboard.sort_by(
        |&a, &b| match (results[a].val_accuracy, results[b].val_accuracy) {
            (Some(x), Some(y)) => y.total_cmp(&x).then(a.cmp(&b)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.cmp(&b),
        },
    );
    let best = best.into_inner().unwrap();
    Ok(GridResult {
        best_index: best.as_ref().map(|b| b.1),
        best: best.map(|b| b.2),
        leaderboard,
        candidates: results,
    })
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub length: usize,
    /// Clips dropped because their track is shorter than `length`.
    pub excluded: usize,
    pub best_index: Option<usize>,
    pub best_hyper: Option<Hyperparameters>,
    /// `None` when no candidate trained or no test clip remained.
    pub metrics: Option<Metrics>,
}

/// Grid search and test evaluation, independently per sequence length.
#[allow(clippy::too_many_arguments)]
pub fn sweep_lengths(
    kind: StrategyKind,
    train: &[&LabeledClip],
    val: &[&LabeledClip],
    test: &[&LabeledClip],
    lengths: &[usize],
    grid: &GridSpec,
    config: &TrainConfig,
    workers: usize,
) -> Result<Vec<SweepRow>> {
    if lengths.is_empty() {
        log::warn!("no sequence lengths requested");
        return Ok(vec![]);
    }
    fn keep<'a>(set: &[&'a LabeledClip], length: usize) -> Vec<&'a LabeledClip> {
        set.iter()
            .copied()
            .filter(|c| c.track.len() >= length)
            .collect()
    }
    let mut rows = Vec::with_capacity(lengths.len());
    for &length in lengths {
        let (tr, va, te) = (keep(train, length), keep(val, length), keep(test, length));
        let excluded = train.len() + val.len() + test.len() - tr.len() - va.len() - te.len();
        if excluded > 0 {
            log::warn!(
                "length {length}: excluded {excluded} clip(s) shorter than {length} observations"
            );
        }
        if tr.is_empty() {
            rows.push(SweepRow {
                length,
                excluded,
                best_index: None,
                best_hyper: None,
                metrics: None,
            });
            continue;
        }
        let result = grid_search(kind, &tr, &va, length, grid, config, workers)?;
        let metrics = match (&result.best, te.is_empty()) {
            (Some(s), false) => Some(evaluate(s, &te)?),
            _ => None,
        };
        rows.push(SweepRow {
            length,
            excluded,
            best_hyper: result
                .best_index
                .map(|i| result.candidates[i].hyper.clone()),
            best_index: result.best_index,
            metrics,
        });
    }
    Ok(rows)
}
