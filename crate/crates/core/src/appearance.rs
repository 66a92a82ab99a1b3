//! Per-target appearance models.
//!
//! The discriminative model is a linear ridge regressor on mean-subtracted
//! colour patches, trained on shifted copies of the target patch with a
//! Gaussian regression target peaked at zero shift. A normalised
//! cross-correlation template is provided as the generative baseline.

use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::Point;
use crate::linalg::{cholesky, cholesky_solve, dot, DenseMatrix};
use crate::raster::Frame;

#[derive(Debug, Error, PartialEq)]
pub enum AppearanceError {
    #[error("patch size {w}x{h} has zero area")]
    EmptyPatch { w: usize, h: usize },
    #[error("ridge parameter must be positive, got {0}")]
    InvalidRidge(f64),
    #[error("training samples contain non-finite values")]
    NonFiniteSamples,
    #[error("training set has {rows} samples but {labels} labels")]
    LabelMismatch { rows: usize, labels: usize },
    #[error("patch sizes differ: {a:?} vs {b:?}")]
    SizeMismatch { a: PatchSize, b: PatchSize },
    #[error("interpolation factor {0} outside [0, 1]")]
    InvalidRate(f64),
    #[error("ridge system is not positive definite")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSize {
    pub w: usize,
    pub h: usize,
}

impl PatchSize {
    pub const fn new(w: usize, h: usize) -> Self {
        Self { w, h }
    }

    pub const fn square(side: usize) -> Self {
        Self { w: side, h: side }
    }

    pub fn feature_len(self) -> usize {
        3 * self.w * self.h
    }
}

/// Mean-subtracted RGB values in `[0, 1]` units, pixel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchFeature {
    pub values: Vec<f64>,
    pub size: PatchSize,
}

impl PatchFeature {
    /// Sum of squares per channel.
    pub fn channel_energy(&self) -> [f64; 3] {
        let mut e = [0.0; 3];
        for px in self.values.chunks_exact(3) {
            for c in 0..3 {
                e[c] += px[c] * px[c];
            }
        }
        e
    }
}

/// Extracts the patch centred on `center`. Pixels outside the frame
/// replicate the nearest edge pixel.
pub fn extract_patch_features(frame: &Frame, center: Point, size: PatchSize) -> Result<PatchFeature, AppearanceError> {
    if size.w == 0 || size.h == 0 {
        return Err(AppearanceError::EmptyPatch { w: size.w, h: size.h });
    }
    let x0 = center.x as i64 - (size.w / 2) as i64;
    let y0 = center.y as i64 - (size.h / 2) as i64;
    let mut values = Vec::with_capacity(size.feature_len());
    let mut mean = [0.0; 3];
    for dy in 0..size.h as i64 {
        for dx in 0..size.w as i64 {
            let px = frame.pixel_clamped(x0 + dx, y0 + dy);
            for c in 0..3 {
                let v = px[c] as f64 / 255.0;
                mean[c] += v;
                values.push(v);
            }
        }
    }
    let count = (size.w * size.h) as f64;
    mean.iter_mut().for_each(|m| *m /= count);
    for px in values.chunks_exact_mut(3) {
        for c in 0..3 {
            px[c] -= mean[c];
        }
    }
    Ok(PatchFeature { values, size })
}

/// Shifted samples around one location with their regression targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub samples: DenseMatrix,
    pub labels: Vec<f64>,
}

impl TrainingSet {
    pub fn new(samples: DenseMatrix, labels: Vec<f64>) -> Result<Self, AppearanceError> {
        if samples.rows != labels.len() {
            return Err(AppearanceError::LabelMismatch { rows: samples.rows, labels: labels.len() });
        }
        Ok(Self { samples, labels })
    }

    /// Patches at every integer shift within `+-size/2` of `center`,
    /// labelled `exp(-|shift|^2 / (2 (size/10)^2))` per axis.
    pub fn around(frame: &Frame, center: Point, size: PatchSize) -> Result<Self, AppearanceError> {
        let (hx, hy) = ((size.w / 2) as i32, (size.h / 2) as i32);
        let (sx, sy) = (size.w as f64 / 10.0, size.h as f64 / 10.0);
        let n = ((2 * hx + 1) * (2 * hy + 1)) as usize;
        let mut samples = DenseMatrix::zeros(n, size.feature_len());
        let mut labels = Vec::with_capacity(n);
        let mut r = 0;
        for dy in -hy..=hy {
            for dx in -hx..=hx {
                let f = extract_patch_features(frame, Point::new(center.x + dx, center.y + dy), size)?;
                samples.data[r * samples.cols..(r + 1) * samples.cols].copy_from_slice(&f.values);
                let (fx, fy) = (dx as f64 / sx, dy as f64 / sy);
                labels.push(libm::exp(-0.5 * (fx * fx + fy * fy)));
                r += 1;
            }
        }
        Ok(Self { samples, labels })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressorModel {
    pub weights: Vec<f64>,
    pub ridge: f64,
    pub patch_size: PatchSize,
    pub learning_rate: f64,
}

pub const DEFAULT_LEARNING_RATE: f64 = 0.05;

fn validate_training(t: &TrainingSet, ridge: f64) -> Result<(), AppearanceError> {
    if !(ridge > 0.0) || !ridge.is_finite() {
        return Err(AppearanceError::InvalidRidge(ridge));
    }
    if t.samples.data.iter().chain(&t.labels).any(|v| !v.is_finite()) {
        return Err(AppearanceError::NonFiniteSamples);
    }
    if t.samples.rows != t.labels.len() {
        return Err(AppearanceError::LabelMismatch { rows: t.samples.rows, labels: t.labels.len() });
    }
    Ok(())
}

/// `w = (Z^T Z + ridge I)^-1 Z^T y`
pub fn train_primal(t: &TrainingSet, ridge: f64) -> Result<Vec<f64>, AppearanceError> {
    validate_training(t, ridge)?;
    let g = t.samples.gram_cols(ridge);
    let l = cholesky(&g).ok_or(AppearanceError::Singular)?;
    Ok(cholesky_solve(&l, &t.samples.tr_mul_vec(&t.labels)))
}

/// `w = Z^T (Z Z^T + ridge I)^-1 y`, identical to the primal solution.
pub fn train_dual(t: &TrainingSet, ridge: f64) -> Result<Vec<f64>, AppearanceError> {
    validate_training(t, ridge)?;
    let g = t.samples.gram_rows(ridge);
    let l = cholesky(&g).ok_or(AppearanceError::Singular)?;
    let alpha = cholesky_solve(&l, &t.labels);
    Ok(t.samples.tr_mul_vec(&alpha))
}

/// Exact ridge solution, through whichever normal system is smaller.
pub fn train_regressor(t: &TrainingSet, ridge: f64, patch_size: PatchSize) -> Result<RegressorModel, AppearanceError> {
    let weights = if t.samples.rows < t.samples.cols { train_dual(t, ridge)? } else { train_primal(t, ridge)? };
    Ok(RegressorModel { weights, ridge, patch_size, learning_rate: DEFAULT_LEARNING_RATE })
}

/// `w . phi(candidate)` for every candidate.
pub fn score_candidates(m: &RegressorModel, frame: &Frame, candidates: &[Point]) -> Result<Vec<f64>, AppearanceError> {
    candidates
        .iter()
        .map(|&c| extract_patch_features(frame, c, m.patch_size).map(|f| dot(&m.weights, &f.values)))
        .collect()
}

fn check_rate(gamma: f64) -> Result<(), AppearanceError> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(AppearanceError::InvalidRate(gamma))
    }
}

fn lerp(old: &[f64], fresh: &[f64], gamma: f64) -> Vec<f64> {
    old.iter().zip(fresh).map(|(o, f)| (1.0 - gamma) * o + gamma * f).collect()
}

/// `w <- (1 - gamma) w_old + gamma w_fresh`
pub fn update_model(old: &RegressorModel, fresh: &RegressorModel, gamma: f64) -> Result<RegressorModel, AppearanceError> {
    check_rate(gamma)?;
    if old.patch_size != fresh.patch_size || old.weights.len() != fresh.weights.len() {
        return Err(AppearanceError::SizeMismatch { a: old.patch_size, b: fresh.patch_size });
    }
    Ok(RegressorModel { weights: lerp(&old.weights, &fresh.weights, gamma), ..old.clone() })
}

/// Normalised cross-correlation template.
#[derive(Debug, Clone, PartialEq)]
pub struct NccTemplate {
    pub template: PatchFeature,
}

impl NccTemplate {
    pub fn capture(frame: &Frame, center: Point, size: PatchSize) -> Result<Self, AppearanceError> {
        Ok(Self { template: extract_patch_features(frame, center, size)? })
    }

    /// Correlation coefficient in `[-1, 1]` per candidate; flat patches score 0.
    pub fn score(&self, frame: &Frame, candidates: &[Point]) -> Result<Vec<f64>, AppearanceError> {
        let t = &self.template.values;
        let tn = libm::sqrt(dot(t, t));
        candidates
            .iter()
            .map(|&c| {
                let f = extract_patch_features(frame, c, self.template.size)?;
                let fn_ = libm::sqrt(dot(&f.values, &f.values));
                Ok(if tn > 1e-12 && fn_ > 1e-12 { dot(t, &f.values) / (tn * fn_) } else { 0.0 })
            })
            .collect()
    }

    pub fn update(&self, fresh: &NccTemplate, gamma: f64) -> Result<NccTemplate, AppearanceError> {
        check_rate(gamma)?;
        if self.template.size != fresh.template.size {
            return Err(AppearanceError::SizeMismatch { a: self.template.size, b: fresh.template.size });
        }
        Ok(NccTemplate {
            template: PatchFeature { values: lerp(&self.template.values, &fresh.template.values, gamma), size: self.template.size },
        })
    }
}

/// Which appearance model the tracker keeps per target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppearanceBackend {
    Ridge,
    Ncc,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AppearanceModel {
    Ridge(RegressorModel),
    Ncc(NccTemplate),
}

impl AppearanceModel {
    pub fn train(
        backend: AppearanceBackend,
        frame: &Frame,
        center: Point,
        size: PatchSize,
        ridge: f64,
    ) -> Result<Self, AppearanceError> {
        Ok(match backend {
            AppearanceBackend::Ridge => {
                let t = TrainingSet::around(frame, center, size)?;
                AppearanceModel::Ridge(train_regressor(&t, ridge, size)?)
            }
            AppearanceBackend::Ncc => AppearanceModel::Ncc(NccTemplate::capture(frame, center, size)?),
        })
    }

    pub fn score(&self, frame: &Frame, candidates: &[Point]) -> Result<Vec<f64>, AppearanceError> {
        match self {
            AppearanceModel::Ridge(m) => score_candidates(m, frame, candidates),
            AppearanceModel::Ncc(t) => t.score(frame, candidates),
        }
    }

    pub fn blend(&self, fresh: &AppearanceModel, gamma: f64) -> Result<Self, AppearanceError> {
        match (self, fresh) {
            (AppearanceModel::Ridge(a), AppearanceModel::Ridge(b)) => Ok(AppearanceModel::Ridge(update_model(a, b, gamma)?)),
            (AppearanceModel::Ncc(a), AppearanceModel::Ncc(b)) => Ok(AppearanceModel::Ncc(a.update(b, gamma)?)),
            (a, _) => {
                let size = match a {
                    AppearanceModel::Ridge(m) => m.patch_size,
                    AppearanceModel::Ncc(t) => t.template.size,
                };
                Err(AppearanceError::SizeMismatch { a: size, b: size })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn uniform_frame_gives_zero_features() {
        let f = Frame::filled(10, 10, [128, 128, 128]);
        let p = extract_patch_features(&f, Point::new(5, 5), PatchSize::square(5)).unwrap();
        assert!(p.values.iter().all(|&v| v.abs() < 1e-15));
        assert_eq!(p.values.len(), 75);
    }

    #[test]
    fn corner_patch_replicates_edges() {
        let mut f = Frame::filled(4, 4, [0, 0, 0]);
        f.set_pixel(0, 0, [255, 0, 0]);
        let p = extract_patch_features(&f, Point::new(0, 0), PatchSize::square(3)).unwrap();
        // top-left 2x2 of the patch all replicate pixel (0,0)
        let reds: Vec<f64> = p.values.chunks(3).map(|c| c[0]).collect();
        assert_eq!(reds[0], reds[1]);
        assert_eq!(reds[0], reds[3]);
        assert_eq!(reds[0], reds[4]);
        assert!(reds[0] > 0.0 && reds[8] < 0.0);
    }

    #[test]
    fn zero_area_patch_is_an_error() {
        let f = Frame::new(4, 4);
        assert_eq!(
            extract_patch_features(&f, Point::new(1, 1), PatchSize::new(0, 3)),
            Err(AppearanceError::EmptyPatch { w: 0, h: 3 })
        );
    }

    #[test]
    fn scalar_ridge_closed_form() {
        let t = TrainingSet::new(DenseMatrix::from_rows(&[vec![2.0]]), vec![0.5]).unwrap();
        let m = train_regressor(&t, 0.1, PatchSize::square(1)).unwrap();
        assert!((m.weights[0] - 2.0 * 0.5 / (4.0 + 0.1)).abs() < 1e-15);
        assert_eq!(train_primal(&t, 0.0), Err(AppearanceError::InvalidRidge(0.0)));
        let bad = TrainingSet::new(DenseMatrix::from_rows(&[vec![f64::NAN]]), vec![0.5]).unwrap();
        assert_eq!(train_dual(&bad, 1.0), Err(AppearanceError::NonFiniteSamples));
    }

    #[test]
    fn shrinkage_is_monotone_in_ridge() {
        let t = TrainingSet::new(
            DenseMatrix::from_rows(&[vec![1.0, 0.5, -0.2], vec![0.3, -1.0, 0.8]]),
            vec![1.0, 0.2],
        )
        .unwrap();
        let mut last = f64::INFINITY;
        for ridge in [1e-3, 1e-1, 1.0, 10.0, 1e3, 1e6] {
            let w = train_dual(&t, ridge).unwrap();
            let norm = libm::sqrt(dot(&w, &w));
            assert!(norm < last);
            last = norm;
        }
        assert!(last < 1e-5);
    }

    #[test]
    fn scores_are_linear_in_weights() {
        let mut f = Frame::filled(12, 12, [30, 30, 30]);
        f.set_pixel(6, 6, [200, 10, 10]);
        let size = PatchSize::square(5);
        let m = RegressorModel { weights: (0..75).map(|i| libm::sin(i as f64 * 0.37)).collect(), ridge: 1.0, patch_size: size, learning_rate: 0.05 };
        let c = [Point::new(5, 5), Point::new(6, 6), Point::new(0, 11)];
        let s1 = score_candidates(&m, &f, &c).unwrap();
        let m2 = RegressorModel { weights: m.weights.iter().map(|w| 2.0 * w).collect(), ..m.clone() };
        let s2 = score_candidates(&m2, &f, &c).unwrap();
        for (a, b) in s1.iter().zip(&s2) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
        let zero = RegressorModel { weights: vec![0.0; 75], ..m };
        assert!(score_candidates(&zero, &f, &c).unwrap().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn update_interpolates() {
        let size = PatchSize::square(1);
        let a = RegressorModel { weights: vec![0.0, 2.0, 4.0], ridge: 1.0, patch_size: size, learning_rate: 0.05 };
        let b = RegressorModel { weights: vec![2.0, 2.0, 0.0], ..a.clone() };
        assert_eq!(update_model(&a, &b, 0.0).unwrap().weights, a.weights);
        assert_eq!(update_model(&a, &b, 1.0).unwrap().weights, b.weights);
        assert_eq!(update_model(&a, &b, 0.5).unwrap().weights, vec![1.0, 2.0, 2.0]);
        let c = RegressorModel { patch_size: PatchSize::square(2), ..b };
        assert!(matches!(update_model(&a, &c, 0.5), Err(AppearanceError::SizeMismatch { .. })));
        assert_eq!(update_model(&a, &a, 1.5), Err(AppearanceError::InvalidRate(1.5)));
    }

    #[test]
    fn ncc_peaks_on_template_location() {
        let mut f = Frame::filled(16, 16, [20, 20, 20]);
        for (x, y) in [(7, 7), (8, 7), (7, 8)] {
            f.set_pixel(x, y, [220, 40, 40]);
        }
        let size = PatchSize::square(5);
        let t = NccTemplate::capture(&f, Point::new(7, 7), size).unwrap();
        let cands: Vec<Point> = (4..11).flat_map(|y| (4..11).map(move |x| Point::new(x, y))).collect();
        let s = t.score(&f, &cands).unwrap();
        let best = (0..s.len()).max_by(|&a, &b| s[a].partial_cmp(&s[b]).unwrap()).unwrap();
        assert_eq!(cands[best], Point::new(7, 7));
        assert!((s[best] - 1.0).abs() < 1e-12);
    }
}
