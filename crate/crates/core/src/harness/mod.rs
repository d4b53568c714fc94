//! Experiment harness: metrics, grid search, length sweeps and timing.

mod grid;
mod timing;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::strategies::Strategy;
use crate::trackdata::{ClassSet, LabeledClip, ManeuverClass};

pub use grid::{grid_search, sweep_lengths, CandidateResult, GridResult, GridSpec, SweepRow};
pub use timing::{timing_report, TimingReport};

/// Confusion-matrix metrics. Rows are true classes, columns predictions, both
/// in class-set order. Precision or recall with a zero denominator is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub class_set: ClassSet,
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub precision: Vec<Option<f64>>,
    pub recall: Vec<Option<f64>>,
}

impl Metrics {
    pub fn from_confusion(class_set: ClassSet, confusion: Vec<Vec<u64>>) -> Result<Self> {
        let k = class_set.len();
        if confusion.len() != k || confusion.iter().any(|r| r.len() != k) {
            return Err(Error::input(format!("confusion matrix must be {k}x{k}")));
        }
        let total: u64 = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::config("empty test set"));
        }
        let diag: u64 = (0..k).map(|i| confusion[i][i]).sum();
        let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
        let precision = (0..k)
            .map(|j| ratio(confusion[j][j], (0..k).map(|i| confusion[i][j]).sum()))
            .collect();
        let recall = (0..k)
            .map(|i| ratio(confusion[i][i], confusion[i].iter().sum()))
            .collect();
        Ok(Metrics {
            class_set,
            accuracy: diag as f64 / total as f64,
            precision,
            recall,
            confusion,
        })
    }

    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    /// Folds a sided cut-in confusion matrix onto CutIn / LanePass, so a
    /// three-class model can be compared with the two-class strategies.
    /// Other class sets are returned unchanged.
    pub fn merged_cut_in(&self) -> Metrics {
        if self.class_set != ClassSet::SidedCutIn {
            return self.clone();
        }
        let map = |i: usize| if i < 2 { 0 } else { 1 };
        let mut c = vec![vec![0u64; 2]; 2];
        for (i, row) in self.confusion.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                c[map(i)][map(j)] += v;
            }
        }
        Metrics::from_confusion(ClassSet::CutInLanePass, c).expect("non-empty by construction")
    }

    /// Comma-separated rows `class,precision,recall,support`; absent values
    /// are left empty.
    pub fn per_class_csv(&self) -> String {
        let mut s = String::from("class,precision,recall,support\n");
        for (i, c) in self.class_set.classes().iter().enumerate() {
            let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
            let support: u64 = self.confusion[i].iter().sum();
            s.push_str(&format!(
                "{c},{},{},{support}\n",
                f(self.precision[i]),
                f(self.recall[i])
            ));
        }
        s
    }
}

/// Classifies every clip and scores against its label mapped into the
/// strategy's class set.
pub fn evaluate(strategy: &Strategy, clips: &[&LabeledClip]) -> Result<Metrics> {
    if clips.is_empty() {
        return Err(Error::config("empty test set"));
    }
    let set = strategy.class_set();
    let k = set.len();
    let mut confusion = vec![vec![0u64; k]; k];
    for clip in clips {
        let truth = strategy.target_label(clip.label)?;
        let predicted = strategy.classify(&clip.track, &clip.scene)?.class;
        confusion[index(set, truth)?][index(set, predicted)?] += 1;
    }
    Metrics::from_confusion(set, confusion)
}

fn index(set: ClassSet, c: ManeuverClass) -> Result<usize> {
    set.index_of(c)
        .ok_or_else(|| Error::validation(format!("class {c} not in {}", set.name())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_confusion() {
        let m = Metrics::from_confusion(ClassSet::CutInLanePass, vec![vec![45, 5], vec![10, 40]])
            .unwrap();
        assert!((m.accuracy - 0.85).abs() < 1e-12);
        assert!((m.precision[0].unwrap() - 45.0 / 55.0).abs() < 1e-12);
        assert!((m.recall[0].unwrap() - 0.9).abs() < 1e-12);
        assert!((m.precision[1].unwrap() - 40.0 / 45.0).abs() < 1e-12);
        assert!((m.recall[1].unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn constant_predictor_has_absent_precision() {
        let m = Metrics::from_confusion(ClassSet::CutInLanePass, vec![vec![50, 0], vec![50, 0]])
            .unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.recall[1], Some(0.0));
        assert_eq!(m.precision[1], None);
        assert!(m.per_class_csv().contains("LanePass,,0.0000,50"));
    }

    #[test]
    fn perfect_predictions() {
        let m = Metrics::from_confusion(
            ClassSet::SidedCutIn,
            vec![vec![3, 0, 0], vec![0, 4, 0], vec![0, 0, 5]],
        )
        .unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert!(m.precision.iter().chain(&m.recall).all(|v| *v == Some(1.0)));
    }

    #[test]
    fn merge_sided_cut_ins() {
        let m = Metrics::from_confusion(
            ClassSet::SidedCutIn,
            vec![vec![8, 1, 1], vec![2, 7, 1], vec![0, 3, 17]],
        )
        .unwrap();
        let two = m.merged_cut_in();
        assert_eq!(two.confusion, vec![vec![18, 2], vec![3, 17]]);
        assert_eq!(two.total(), m.total());
    }

    #[test]
    fn bad_shapes() {
        assert!(Metrics::from_confusion(ClassSet::CutInLanePass, vec![vec![1, 0]]).is_err());
        assert!(
            Metrics::from_confusion(ClassSet::CutInLanePass, vec![vec![0, 0], vec![0, 0]]).is_err()
        );
    }
}
