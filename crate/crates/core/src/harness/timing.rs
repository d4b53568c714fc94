use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{featurize, side_of, FeatureSequence, Side};
use crate::strategies::{Classification, Strategy};
use crate::trackdata::{LabeledClip, Track};
use crate::tracker::{track_sequence, TrackerConfig};

/// Per-sequence stage times in milliseconds, each the median over
/// repetitions of the per-repetition mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub sequences: usize,
    pub repetitions: usize,
    pub tracking_ms: f64,
    pub features_ms: f64,
    pub classification_ms: f64,
    /// Sum of the three stage medians.
    pub total_ms: f64,
    /// Median absolute deviation of the summed per-repetition stage times,
    /// as a noise figure for `total_ms`.
    pub noise_ms: f64,
}

impl TimingReport {
    pub fn to_csv(&self) -> String {
        format!(
            "stage,ms_per_sequence\ntracking,{:.4}\nfeatures,{:.4}\nclassification,{:.4}\ntotal,{:.4}\nnoise,{:.4}\n",
            self.tracking_ms, self.features_ms, self.classification_ms, self.total_ms, self.noise_ms
        )
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Times tracking (the clip's boxes replayed as per-frame detections),
/// featurization and classification for every clip.
///
/// Also returns the classifications of the last repetition; the pipeline is
/// pure, so every repetition produces the same ones.
pub fn timing_report(
    strategy: &Strategy,
    clips: &[&LabeledClip],
    repetitions: usize,
    tracker: &TrackerConfig,
) -> Result<(TimingReport, Vec<Classification>)> {
    if repetitions == 0 {
        return Err(Error::config("repetitions must be >= 1"));
    }
    if clips.is_empty() {
        return Err(Error::config("no clips to time"));
    }
    let frames: Vec<Vec<Vec<_>>> = clips
        .iter()
        .map(|c| c.track.observations.iter().map(|d| vec![*d]).collect())
        .collect();
    let n = clips.len() as f64;
    let (mut tr, mut fe, mut cl, mut tot) = (vec![], vec![], vec![], vec![]);
    let mut outputs = vec![];
    for _ in 0..repetitions {
        let t0 = Instant::now();
        let tracks: Vec<Vec<Track>> = frames
            .iter()
            .map(|f| track_sequence(f, tracker))
            .collect::<Result<_>>()?;
        let t1 = Instant::now();
        let feats: Vec<(FeatureSequence, Side)> = clips
            .iter()
            .zip(&tracks)
            .map(|(c, t)| {
                // Fall back to the labeled track if the tracker split or lost it.
                let track = t
                    .iter()
                    .max_by_key(|t| t.len())
                    .filter(|t| t.len() >= strategy.seq_len())
                    .unwrap_or(&c.track);
                Ok((
                    featurize(track, &c.scene, strategy.seq_len(), &c.clip_id)?,
                    side_of(track, &c.scene),
                ))
            })
            .collect::<Result<_>>()?;
        let t2 = Instant::now();
        outputs = feats
            .iter()
            .map(|(f, s)| strategy.classify_features(f, *s))
            .collect::<Result<_>>()?;
        let t3 = Instant::now();
        let ms = |a: Instant, b: Instant| (b - a).as_secs_f64() * 1e3 / n;
        tr.push(ms(t0, t1));
        fe.push(ms(t1, t2));
        cl.push(ms(t2, t3));
        tot.push(ms(t0, t3));
    }
    let (tracking_ms, features_ms, classification_ms) =
        (median(&mut tr), median(&mut fe), median(&mut cl));
    let mid = median(&mut tot.clone());
    let mut dev: Vec<f64> = tot.iter().map(|t| (t - mid).abs()).collect();
    let report = TimingReport {
        sequences: clips.len(),
        repetitions,
        tracking_ms,
        features_ms,
        classification_ms,
        total_ms: tracking_ms + features_ms + classification_ms,
        noise_ms: median(&mut dev),
    };
    Ok((report, outputs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
