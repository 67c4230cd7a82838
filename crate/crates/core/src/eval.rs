//! Point-tracking metrics: position accuracy `δ_avg`, average Jaccard and
//! occlusion accuracy, plus the strided query protocol.
//!
//! Distances are measured after rescaling both tracks from `frame_size` to
//! `eval_resolution`. The query frame never counts towards any tally.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{sqrt, Vec2};
use crate::track::{Query, Track};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroundTruthTrack {
    pub points: Vec<Vec2>,
    pub visible: Vec<bool>,
}

impl GroundTruthTrack {
    pub fn new(points: Vec<Vec2>, visible: Vec<bool>) -> Result<Self> {
        let gt = GroundTruthTrack { points, visible };
        gt.validate()?;
        Ok(gt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.visible.len() {
            return Err(Error::DimensionMismatch {
                what: "ground-truth visibility length",
                expected: self.points.len(),
                found: self.visible.len(),
            });
        }
        let bad = self.points.iter().zip(&self.visible).any(|(p, &v)| v && !(p[0].is_finite() && p[1].is_finite()));
        if bad {
            return Err(Error::invalid("ground truth", "visible points must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalConfig {
    /// Pixel radii at `eval_resolution`, ascending.
    pub thresholds: Vec<f64>,
    pub stride: usize,
    pub eval_resolution: (usize, usize),
    /// Size of the frames the tracks are expressed in.
    pub frame_size: (usize, usize),
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            thresholds: alloc::vec![1.0, 2.0, 4.0, 8.0, 16.0],
            stride: 5,
            eval_resolution: (256, 256),
            frame_size: (256, 256),
        }
    }
}

impl EvalConfig {
    pub fn for_frames(width: usize, height: usize) -> Self {
        EvalConfig {
            frame_size: (width, height),
            ..EvalConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::Empty("thresholds"));
        }
        let ascending = self.thresholds.windows(2).all(|w| w[0] < w[1]);
        if !ascending || !(self.thresholds[0] > 0.0) || !self.thresholds.iter().all(|t| t.is_finite()) {
            return Err(Error::invalid("thresholds", "must be positive, finite and strictly ascending"));
        }
        if self.stride == 0 {
            return Err(Error::invalid("stride", "must be at least 1"));
        }
        let sizes = [self.eval_resolution.0, self.eval_resolution.1, self.frame_size.0, self.frame_size.1];
        if sizes.contains(&0) {
            return Err(Error::invalid("resolution", "sizes must be positive"));
        }
        Ok(())
    }

    /// Distance between two frame-space points at evaluation resolution.
    pub fn distance(&self, a: Vec2, b: Vec2) -> f64 {
        let sx = self.eval_resolution.0 as f64 / self.frame_size.0 as f64;
        let sy = self.eval_resolution.1 as f64 / self.frame_size.1 as f64;
        let dx = (a[0] - b[0]) * sx;
        let dy = (a[1] - b[1]) * sy;
        sqrt(dx * dx + dy * dy)
    }
}

fn check_pair(pred: &Track, gt: &GroundTruthTrack) -> Result<()> {
    gt.validate()?;
    if pred.points.len() != gt.len() || pred.visible.len() != gt.len() {
        return Err(Error::DimensionMismatch {
            what: "track length",
            expected: gt.len(),
            found: pred.points.len(),
        });
    }
    if pred.query.t >= gt.len() {
        return Err(Error::FrameOutOfRange {
            t: pred.query.t,
            limit: gt.len(),
        });
    }
    Ok(())
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in values {
        sum += v;
        n += 1;
    }
    sum / n as f64
}

/// Mean over thresholds of the fraction of ground-truth-visible frames
/// predicted within the threshold. `None` if no frame is visible.
pub fn delta_avg(pred: &Track, gt: &GroundTruthTrack, config: &EvalConfig) -> Result<Option<f64>> {
    config.validate()?;
    check_pair(pred, gt)?;
    let dists: Vec<f64> = (0..gt.len())
        .filter(|&t| t != pred.query.t && gt.visible[t])
        .map(|t| config.distance(pred.points[t], gt.points[t]))
        .collect();
    if dists.is_empty() {
        return Ok(None);
    }
    Ok(Some(mean(config.thresholds.iter().map(|&thr| {
        dists.iter().filter(|&&d| d <= thr).count() as f64 / dists.len() as f64
    }))))
}

/// Mean over thresholds of `TP / (TP + FP + FN)`. `None` if nothing is
/// visible in either track.
pub fn average_jaccard(pred: &Track, gt: &GroundTruthTrack, config: &EvalConfig) -> Result<Option<f64>> {
    config.validate()?;
    check_pair(pred, gt)?;
    let frames: Vec<usize> = (0..gt.len()).filter(|&t| t != pred.query.t).collect();
    let mut per_threshold = Vec::with_capacity(config.thresholds.len());
    for &thr in &config.thresholds {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for &t in &frames {
            let close = config.distance(pred.points[t], gt.points[t]) <= thr;
            match (gt.visible[t], pred.visible[t]) {
                (true, true) if close => tp += 1,
                (true, true) => {
                    fp += 1;
                    fn_ += 1;
                }
                (true, false) => fn_ += 1,
                (false, true) => fp += 1,
                (false, false) => {}
            }
        }
        let total = tp + fp + fn_;
        if total == 0 {
            return Ok(None);
        }
        per_threshold.push(tp as f64 / total as f64);
    }
    Ok(Some(mean(per_threshold)))
}

/// Fraction of frames whose visibility flags agree. `None` for a
/// single-frame track.
pub fn occlusion_accuracy(pred: &Track, gt: &GroundTruthTrack) -> Result<Option<f64>> {
    check_pair(pred, gt)?;
    let frames = gt.len() - 1;
    if frames == 0 {
        return Ok(None);
    }
    let agree = (0..gt.len())
        .filter(|&t| t != pred.query.t && pred.visible[t] == gt.visible[t])
        .count();
    Ok(Some(agree as f64 / frames as f64))
}

/// One query per stride-grid frame at which the ground truth is visible.
pub fn strided_queries(gt: &GroundTruthTrack, config: &EvalConfig) -> Vec<Query> {
    (0..gt.len())
        .step_by(config.stride.max(1))
        .filter(|&t| gt.visible[t])
        .map(|t| Query::new(t, gt.points[t]))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    /// `None` when undefined for every pair.
    pub average_jaccard: Option<f64>,
    pub delta_avg: Option<f64>,
    pub occlusion_accuracy: Option<f64>,
    /// Number of (track, ground truth) pairs.
    pub pairs: usize,
}

/// Mean of each metric over all pairs, skipping undefined values.
///
/// Defined values are summed in ascending order, so the result does not
/// depend on the order of the pairs.
pub fn evaluate(tracks: &[Track], gts: &[GroundTruthTrack], config: &EvalConfig) -> Result<EvalReport> {
    if tracks.is_empty() {
        return Err(Error::Empty("track list"));
    }
    if tracks.len() != gts.len() {
        return Err(Error::DimensionMismatch {
            what: "ground-truth track count",
            expected: tracks.len(),
            found: gts.len(),
        });
    }
    let mut aj = Vec::new();
    let mut da = Vec::new();
    let mut oa = Vec::new();
    for (pred, gt) in tracks.iter().zip(gts) {
        aj.extend(average_jaccard(pred, gt, config)?);
        da.extend(delta_avg(pred, gt, config)?);
        oa.extend(occlusion_accuracy(pred, gt)?);
    }
    Ok(EvalReport {
        average_jaccard: sorted_mean(aj),
        delta_avg: sorted_mean(da),
        occlusion_accuracy: sorted_mean(oa),
        pairs: tracks.len(),
    })
}

fn sorted_mean(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(mean(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn track(points: Vec<Vec2>, visible: Vec<bool>) -> Track {
        Track {
            query: Query::new(0, points[0]),
            points,
            visible,
            anchor_set: vec![0],
        }
    }

    fn line(k: usize) -> Vec<Vec2> {
        (0..k).map(|t| [t as f64, 10.0]).collect()
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let gt = GroundTruthTrack::new(line(10), vec![true; 10]).unwrap();
        let pred = track(line(10), vec![true; 10]);
        let cfg = EvalConfig::default();
        let report = evaluate(&[pred.clone(), pred.clone()], &[gt.clone(), gt.clone()], &cfg).unwrap();
        assert_eq!(report.average_jaccard, Some(1.0));
        assert_eq!(report.delta_avg, Some(1.0));
        assert_eq!(report.occlusion_accuracy, Some(1.0));
        assert_eq!(evaluate(&[pred], &[gt], &cfg).unwrap().delta_avg, Some(1.0));
    }

    #[test]
    fn far_off_and_occluded_predictions_score_zero() {
        let gt = GroundTruthTrack::new(line(10), vec![true; 10]).unwrap();
        let mut far = line(10);
        far.iter_mut().skip(1).for_each(|p| p[1] += 20.0);
        let cfg = EvalConfig::default();
        assert_eq!(delta_avg(&track(far, vec![true; 10]), &gt, &cfg).unwrap(), Some(0.0));
        let hidden = track(line(10), vec![false; 10]);
        assert_eq!(average_jaccard(&hidden, &gt, &cfg).unwrap(), Some(0.0));
        assert_eq!(occlusion_accuracy(&hidden, &gt).unwrap(), Some(0.0));
    }

    #[test]
    fn three_mismatches_one_on_the_query_frame() {
        let gt = GroundTruthTrack::new(line(10), vec![true; 10]).unwrap();
        let mut flags = vec![true; 10];
        flags[0] = false;
        flags[5] = false;
        flags[9] = false;
        assert_eq!(occlusion_accuracy(&track(line(10), flags), &gt).unwrap(), Some(7.0 / 9.0));
    }

    #[test]
    fn nothing_visible_is_undefined() {
        let gt = GroundTruthTrack::new(line(4), vec![false; 4]).unwrap();
        let pred = track(line(4), vec![false; 4]);
        let cfg = EvalConfig::default();
        assert_eq!(delta_avg(&pred, &gt, &cfg).unwrap(), None);
        assert_eq!(average_jaccard(&pred, &gt, &cfg).unwrap(), None);
        let report = evaluate(&[pred], &[gt], &cfg).unwrap();
        assert_eq!((report.delta_avg, report.occlusion_accuracy), (None, Some(1.0)));
    }

    #[test]
    fn strided_query_grid() {
        let cfg = EvalConfig::default();
        let gt = GroundTruthTrack::new(line(16), vec![true; 16]).unwrap();
        let ts: Vec<usize> = strided_queries(&gt, &cfg).iter().map(|q| q.t).collect();
        assert_eq!(ts, vec![0, 5, 10, 15]);
        let mut only7 = vec![false; 16];
        only7[7] = true;
        assert!(strided_queries(&GroundTruthTrack::new(line(16), only7).unwrap(), &cfg).is_empty());
    }

    #[test]
    fn rescaling_to_eval_resolution() {
        let cfg = EvalConfig::for_frames(64, 64);
        assert_eq!(cfg.distance([0.0, 0.0], [1.0, 0.0]), 4.0);
        assert!(evaluate(&[], &[], &cfg).is_err());
        assert!(EvalConfig { stride: 0, ..cfg }.validate().is_err());
    }
}
