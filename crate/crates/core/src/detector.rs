//! Reconstruction-error detection of adversarial inputs.
//!
//! An input is scored by `RE(x) = || r - D(r) ||_p` where `r` is the input
//! in the detector's representation and `D` a reconstruction network trained
//! on clean data. The rejection threshold is calibrated on clean validation
//! data so that at most a `t_fp` fraction of it is rejected.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::frequency::{to_representation, RepresentationMode};
use crate::models::ReconstructionModel;
use crate::parallel::map_ordered;

/// Anything that maps a representation to its reconstruction.
pub trait Reconstructor: Sync {
    /// Representation the reconstructor operates on.
    fn mode(&self) -> RepresentationMode;
    fn reconstruct(&self, rep: &Array2<f64>) -> Result<Array2<f64>>;
}

impl Reconstructor for ReconstructionModel {
    fn mode(&self) -> RepresentationMode {
        self.mode
    }

    fn reconstruct(&self, rep: &Array2<f64>) -> Result<Array2<f64>> {
        ReconstructionModel::reconstruct(self, rep)
    }
}

/// `||v||_p`, with `p = inf` giving the maximum magnitude.
pub fn p_norm<'a>(values: impl IntoIterator<Item = &'a f64>, p: f64) -> f64 {
    if p.is_infinite() {
        values.into_iter().fold(0.0, |m, v| m.max(v.abs()))
    } else if p == 2.0 {
        values.into_iter().map(|v| v * v).sum::<f64>().sqrt()
    } else {
        values.into_iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorBundle<R = ReconstructionModel> {
    pub model: R,
    pub norm_p: f64,
    threshold: Option<f64>,
}

impl<R: Reconstructor> DetectorBundle<R> {
    /// Uncalibrated detector using the 2-norm.
    pub fn new(model: R) -> Self {
        Self { model, norm_p: 2.0, threshold: None }
    }

    pub fn with_norm(mut self, p: f64) -> Result<Self> {
        if !(p >= 1.0) {
            return Err(Error::Parameter(format!("norm order must be >= 1, got {p}")));
        }
        self.norm_p = p;
        Ok(self)
    }

    pub fn mode(&self) -> RepresentationMode {
        self.model.mode()
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    /// Set `t_re` directly (e.g. when restoring a saved calibration).
    pub fn set_threshold(&mut self, t_re: f64) -> Result<()> {
        if !(t_re >= 0.0) {
            return Err(Error::Parameter(format!("threshold must be non-negative, got {t_re}")));
        }
        self.threshold = Some(t_re);
        Ok(())
    }

    pub fn reconstruction_error(&self, image: &Array2<f64>) -> Result<f64> {
        let rep = to_representation(image, self.mode())?;
        let rec = self.model.reconstruct(&rep)?;
        if rec.dim() != rep.dim() {
            return Err(Error::Shape(format!("reconstruction {:?} vs input {:?}", rec.dim(), rep.dim())));
        }
        let diff: Vec<f64> = rep.iter().zip(rec.iter()).map(|(a, b)| a - b).collect();
        Ok(p_norm(&diff, self.norm_p))
    }

    /// Scores for a batch, in input order.
    pub fn scores(&self, images: &[Array2<f64>]) -> Result<Vec<f64>> {
        map_ordered(images, |img| self.reconstruction_error(img)).into_iter().collect()
    }

    /// Calibrate `t_re` on clean validation data for a target false-positive rate.
    pub fn calibrate(&mut self, clean_val: &Dataset, t_fp: f64) -> Result<CalibrationResult> {
        if clean_val.is_empty() {
            return Err(Error::Parameter("calibration set is empty".into()));
        }
        let scores = self.scores(&clean_val.images())?;
        let result = calibrate_from_scores(&scores, t_fp)?;
        self.threshold = Some(result.threshold_t_re);
        Ok(result)
    }

    /// Indices with `RE <= t_re` (in input order) and every score.
    pub fn detect(&self, images: &[Array2<f64>]) -> Result<(Vec<usize>, Vec<f64>)> {
        let t_re = self.threshold.ok_or_else(|| Error::State("detector has not been calibrated".into()))?;
        let scores = self.scores(images)?;
        Ok((passing_indices(&scores, t_re), scores))
    }
}

/// Free-function form of [`DetectorBundle::reconstruction_error`].
pub fn reconstruction_error<R: Reconstructor>(bundle: &DetectorBundle<R>, image: &Array2<f64>) -> Result<f64> {
    bundle.reconstruction_error(image)
}

/// Free-function form of [`DetectorBundle::calibrate`].
pub fn calibrate_threshold<R: Reconstructor>(bundle: &mut DetectorBundle<R>, clean_val: &Dataset, t_fp: f64) -> Result<CalibrationResult> {
    bundle.calibrate(clean_val, t_fp)
}

/// Free-function form of [`DetectorBundle::detect`].
pub fn detect<R: Reconstructor>(bundle: &DetectorBundle<R>, images: &[Array2<f64>]) -> Result<(Vec<usize>, Vec<f64>)> {
    bundle.detect(images)
}

pub fn passing_indices(scores: &[f64], t_re: f64) -> Vec<usize> {
    scores.iter().enumerate().filter(|(_, s)| **s <= t_re).map(|(i, _)| i).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub threshold_t_re: f64,
    pub target_t_fp: f64,
    pub achieved_fpr: f64,
    /// Validation scores, ascending.
    pub validation_errors: Vec<f64>,
}

/// The on-disk summary of a calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub threshold: f64,
    pub t_fp: f64,
    pub achieved_fpr: f64,
    pub count: usize,
}

impl CalibrationResult {
    pub fn record(&self) -> CalibrationRecord {
        CalibrationRecord {
            threshold: self.threshold_t_re,
            t_fp: self.target_t_fp,
            achieved_fpr: self.achieved_fpr,
            count: self.validation_errors.len(),
        }
    }
}

impl CalibrationRecord {
    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("calibration record: {e}")))
    }
}

/// Smallest observed score `r*` whose exceedance fraction `#{s > r*} / n`
/// is at most `t_fp`. Scores equal to the threshold are accepted.
pub fn calibrate_from_scores(scores: &[f64], t_fp: f64) -> Result<CalibrationResult> {
    if !(t_fp > 0.0 && t_fp < 1.0) {
        return Err(Error::Parameter(format!("t_fp must lie in (0, 1), got {t_fp}")));
    }
    if scores.is_empty() {
        return Err(Error::Parameter("no validation scores".into()));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite() || **s < 0.0) {
        return Err(Error::Numeric(format!("invalid reconstruction error {s}")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    for i in 0..n {
        // Only the last member of a tie group can be a threshold candidate.
        if i + 1 < n && sorted[i + 1] == sorted[i] {
            continue;
        }
        let fpr = (n - i - 1) as f64 / n as f64;
        if fpr <= t_fp {
            return Ok(CalibrationResult {
                threshold_t_re: sorted[i],
                target_t_fp: t_fp,
                achieved_fpr: fpr,
                validation_errors: sorted,
            });
        }
    }
    unreachable!("the largest score always has zero exceedances")
}

#[cfg(test)]
pub(crate) mod stubs {
    use super::*;

    /// `D(r) = r`.
    #[derive(Debug, Clone, PartialEq)]
    pub struct Identity(pub RepresentationMode);

    impl Reconstructor for Identity {
        fn mode(&self) -> RepresentationMode {
            self.0
        }
        fn reconstruct(&self, rep: &Array2<f64>) -> Result<Array2<f64>> {
            Ok(rep.clone())
        }
    }

    /// `D(r) = 0`, so `RE = ||r||`.
    #[derive(Debug, Clone, PartialEq)]
    pub struct Zero;

    impl Reconstructor for Zero {
        fn mode(&self) -> RepresentationMode {
            RepresentationMode::Spatial
        }
        fn reconstruct(&self, rep: &Array2<f64>) -> Result<Array2<f64>> {
            Ok(Array2::zeros(rep.dim()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::stubs::{Identity, Zero};
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn identity_has_zero_error() {
        let b = DetectorBundle::new(Identity(RepresentationMode::ShiftFrequency));
        let img = Array2::from_shape_fn((8, 8), |(y, x)| ((x * 3 + y) % 5) as f64 / 5.0);
        assert_eq!(b.reconstruction_error(&img).unwrap(), 0.0);
    }

    #[test]
    fn zero_reconstructor_gives_the_norm() {
        let b = DetectorBundle::new(Zero);
        let img = array![[0.3, 0.4], [0.0, 0.0]];
        assert!((b.reconstruction_error(&img).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn norm_orders() {
        let d = [0.1, -0.3, 0.2];
        assert!((p_norm(&d, f64::INFINITY) - 0.3).abs() < 1e-15);
        assert!((p_norm(&d, 1.0) - 0.6).abs() < 1e-15);
        assert!((p_norm(&d, 2.0) - 0.14f64.sqrt()).abs() < 1e-15);
        assert!((p_norm(&d, 3.0) - 0.036f64.cbrt()).abs() < 1e-15);
    }

    #[test]
    fn calibration_examples() {
        let scores: Vec<f64> = (1..=10).map(f64::from).collect();
        let r = calibrate_from_scores(&scores, 0.1).unwrap();
        assert_eq!((r.threshold_t_re, r.achieved_fpr), (9.0, 0.1));
        let r = calibrate_from_scores(&scores, 0.05).unwrap();
        assert_eq!((r.threshold_t_re, r.achieved_fpr), (10.0, 0.0));
        let r = calibrate_from_scores(&[0.7; 6], 0.2).unwrap();
        assert_eq!((r.threshold_t_re, r.achieved_fpr), (0.7, 0.0));
        assert!(matches!(calibrate_from_scores(&scores, 1.0), Err(Error::Parameter(_))));
        assert!(matches!(calibrate_from_scores(&scores, 0.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn detect_requires_calibration() {
        let b = DetectorBundle::new(Zero);
        assert!(matches!(b.detect(&[]), Err(Error::State(_))));
    }

    #[test]
    fn detect_boundaries() {
        let mut b = DetectorBundle::new(Identity(RepresentationMode::Spatial));
        b.set_threshold(0.0).unwrap();
        assert_eq!(b.detect(&[]).unwrap(), (vec![], vec![]));
        let imgs = vec![Array2::from_elem((4, 4), 0.2); 3];
        assert_eq!(b.detect(&imgs).unwrap().0, vec![0, 1, 2]);
        assert_eq!(passing_indices(&[0.5, 1.5, 1.0], 1.0), vec![0, 2]);
    }

    #[test]
    fn bundle_calibration_stores_threshold() {
        let imgs: Vec<Array2<f64>> = (1..=10).map(|k| Array2::from_elem((1, 1), k as f64 / 10.0)).collect();
        let samples = imgs
            .iter()
            .enumerate()
            .map(|(i, im)| crate::data::ImageSample { id: format!("v{i}"), image: im.clone(), label: Array2::zeros((1, 1)) })
            .collect();
        let val = Dataset::new("val", 2, samples).unwrap();
        let mut b = DetectorBundle::new(Zero);
        let r = calibrate_threshold(&mut b, &val, 0.1).unwrap();
        assert!((r.threshold_t_re - 0.9).abs() < 1e-12);
        assert_eq!(b.threshold(), Some(r.threshold_t_re));
        let (pass, _) = detect(&b, &val.images()).unwrap();
        assert_eq!(pass.len(), 9);
        let rec = CalibrationRecord::from_text(&r.record().to_text()).unwrap();
        assert_eq!(rec, r.record());
    }

    proptest! {
        #[test]
        fn calibration_contract(raw in prop::collection::vec(0u16..50, 1..60), t_fp in 0.01f64..0.99) {
            let scores: Vec<f64> = raw.iter().map(|v| *v as f64 / 10.0).collect();
            let r = calibrate_from_scores(&scores, t_fp).unwrap();
            let n = scores.len() as f64;
            let rejected = scores.iter().filter(|s| **s > r.threshold_t_re).count() as f64;
            prop_assert!(rejected / n <= t_fp);
            prop_assert_eq!(rejected / n, r.achieved_fpr);
            // A looser rate never raises the threshold.
            let looser = calibrate_from_scores(&scores, (t_fp + 0.1).min(0.999)).unwrap();
            prop_assert!(looser.threshold_t_re <= r.threshold_t_re);
        }

        #[test]
        fn pass_set_permutes_with_input(raw in prop::collection::vec(0u16..20, 1..30), t in 0u16..20, rot in 0usize..30) {
            let scores: Vec<f64> = raw.iter().map(|v| *v as f64).collect();
            let k = rot % scores.len();
            let mut rotated = scores.clone();
            rotated.rotate_left(k);
            let n = scores.len();
            let mut a: Vec<usize> = passing_indices(&scores, t as f64);
            let mut b: Vec<usize> = passing_indices(&rotated, t as f64).into_iter().map(|i| (i + k) % n).collect();
            a.sort_unstable();
            b.sort_unstable();
            prop_assert_eq!(a, b);
        }
    }
}
