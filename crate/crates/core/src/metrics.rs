//! Tracking accuracy against ground truth.

use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::geometry::Vec2;
use crate::scene::GroundTruth;
use crate::tracker::TrackSet;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("coverage mismatch: {0}")]
    Coverage(CoverageMismatch),
    #[error("max threshold must be at least 1")]
    InvalidThreshold,
}

/// `(frame, target)` pairs present on only one side.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoverageMismatch {
    pub missing: Vec<(usize, usize)>,
    pub extra: Vec<(usize, usize)>,
}

impl fmt::Display for CoverageMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} pairs missing from tracks", self.missing.len())?;
        for (fr, t) in self.missing.iter().take(10) {
            write!(f, " (frame {fr}, target {t})")?;
        }
        if self.missing.len() > 10 {
            write!(f, " ...")?;
        }
        write!(f, "; {} pairs not in ground truth", self.extra.len())?;
        for (fr, t) in self.extra.iter().take(10) {
            write!(f, " (frame {fr}, target {t})")?;
        }
        Ok(())
    }
}

/// `accuracy[i]` is the accuracy at `thresholds[i]` pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyCurve {
    pub thresholds: Vec<u32>,
    pub accuracy: Vec<f64>,
}

impl AccuracyCurve {
    /// Accuracy at an integer threshold, if it is on the curve.
    pub fn at(&self, threshold: u32) -> Option<f64> {
        self.thresholds.iter().position(|&t| t == threshold).map(|i| self.accuracy[i])
    }
}

fn check_coverage(tracks: &[Vec<Vec2>], gt: &[Vec<Vec2>]) -> Result<(), MetricsError> {
    let mut mm = CoverageMismatch::default();
    for f in 0..tracks.len().max(gt.len()) {
        let a = tracks.get(f).map_or(0, Vec::len);
        let b = gt.get(f).map_or(0, Vec::len);
        mm.missing.extend((a..b).map(|t| (f, t)));
        mm.extra.extend((b..a).map(|t| (f, t)));
    }
    if mm.missing.is_empty() && mm.extra.is_empty() {
        Ok(())
    } else {
        Err(MetricsError::Coverage(mm))
    }
}

/// Fraction of `(frame, target)` pairs within `t` pixels, for `t = 1..=max_threshold`.
pub fn accuracy_curve(tracks: &TrackSet, gt: &GroundTruth, max_threshold: u32) -> Result<AccuracyCurve, MetricsError> {
    if max_threshold == 0 {
        return Err(MetricsError::InvalidThreshold);
    }
    check_coverage(&tracks.positions, &gt.positions)?;
    let mut errors: Vec<f64> =
        tracks.positions.iter().zip(&gt.positions).flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| p.dist(*q))).collect();
    errors.sort_by(f64::total_cmp);
    let total = errors.len().max(1) as f64;
    let thresholds: Vec<u32> = (1..=max_threshold).collect();
    let accuracy = thresholds
        .iter()
        .map(|&t| errors.partition_point(|&e| e <= t as f64) as f64 / total)
        .collect();
    Ok(AccuracyCurve { thresholds, accuracy })
}

/// Counts identity switches: each track is matched per frame to the nearest
/// ground-truth target within `radius`, and a switch is a change of the
/// matched identity. Frames without a match keep the previous identity.
/// Tracks start matched to their own index.
pub fn identity_switches(tracks: &TrackSet, gt: &GroundTruth, radius: f64) -> Result<usize, MetricsError> {
    check_coverage(&tracks.positions, &gt.positions)?;
    let n = gt.n_targets();
    let mut current: Vec<usize> = (0..n).collect();
    let mut switches = 0;
    for (est, truth) in tracks.positions.iter().zip(&gt.positions) {
        for (i, p) in est.iter().enumerate() {
            let best = truth
                .iter()
                .enumerate()
                .map(|(j, q)| (j, p.dist(*q)))
                .filter(|&(_, d)| d <= radius)
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            if let Some((j, _)) = best {
                if j != current[i] {
                    switches += 1;
                    current[i] = j;
                }
            }
        }
    }
    Ok(switches)
}
