//! Spatial/frequency conversion and the detector input representations.
//!
//! Arrays are indexed `[row, column]`, so a spectrum coefficient `F(u, v)`
//! with horizontal frequency `u` and vertical frequency `v` lives at
//! `[v, u]`. The forward transform carries the `1 / (W H)` factor, the
//! inverse carries none.

use ndarray::{Array2, Axis};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest imaginary component tolerated when inverting back to a real image.
pub const IMAGINARY_TOLERANCE: f64 = 1e-6;

/// Complex 2D spectrum together with its zero-frequency placement.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub coefficients: Array2<Complex64>,
    pub shifted: bool,
}

impl Spectrum {
    pub fn dim(&self) -> (usize, usize) {
        self.coefficients.dim()
    }

    pub fn energy(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// What a detector sees: the raw image or a log-magnitude spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RepresentationMode {
    Spatial,
    Frequency,
    ShiftFrequency,
}

impl RepresentationMode {
    pub const ALL: [RepresentationMode; 3] = [Self::Spatial, Self::Frequency, Self::ShiftFrequency];

    /// Short name used in model and table labels.
    pub fn label(self) -> &'static str {
        match self {
            Self::Spatial => "spatial",
            Self::Frequency => "frequency",
            Self::ShiftFrequency => "shiftFrequency",
        }
    }
}

impl std::fmt::Display for RepresentationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for RepresentationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', '-'], "").as_str() {
            "spatial" => Ok(Self::Spatial),
            "frequency" => Ok(Self::Frequency),
            "shiftfrequency" => Ok(Self::ShiftFrequency),
            _ => Err(Error::Parameter(format!("unknown representation mode '{s}'"))),
        }
    }
}

fn check_finite(image: &Array2<f64>) -> Result<()> {
    if image.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric("image contains non-finite values".into()))
    }
}

/// In-place 1D transforms along both axes.
fn fft_both_axes(data: &mut Array2<Complex64>, inverse: bool) {
    let (h, w) = data.dim();
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    let mut buf = vec![Complex64::default(); w.max(h)];
    for mut row in data.axis_iter_mut(Axis(0)) {
        let line = &mut buf[..w];
        line.iter_mut().zip(row.iter()).for_each(|(b, v)| *b = *v);
        row_fft.process(line);
        row.iter_mut().zip(line.iter()).for_each(|(v, b)| *v = *b);
    }
    for mut col in data.axis_iter_mut(Axis(1)) {
        let line = &mut buf[..h];
        line.iter_mut().zip(col.iter()).for_each(|(b, v)| *b = *v);
        col_fft.process(line);
        col.iter_mut().zip(line.iter()).for_each(|(v, b)| *v = *b);
    }
}

/// Normalized forward 2D DFT of a real image.
pub fn dft2(image: &Array2<f64>) -> Result<Spectrum> {
    let (h, w) = image.dim();
    if h == 0 || w == 0 {
        return Err(Error::Shape("image must be at least 1x1".into()));
    }
    check_finite(image)?;
    let mut data = image.mapv(|v| Complex64::new(v, 0.0));
    fft_both_axes(&mut data, false);
    let scale = 1.0 / (h * w) as f64;
    data.mapv_inplace(|c| c * scale);
    Ok(Spectrum { coefficients: data, shifted: false })
}

/// Inverse of [`dft2`]. The spectrum must be unshifted and describe a real image.
pub fn idft2(spec: &Spectrum) -> Result<Array2<f64>> {
    if spec.shifted {
        return Err(Error::State("spectrum is shifted; unshift it before inverting".into()));
    }
    let mut data = spec.coefficients.clone();
    fft_both_axes(&mut data, true);
    let worst = data.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    if !(worst <= IMAGINARY_TOLERANCE) {
        return Err(Error::Numeric(format!("imaginary residue {worst:e} exceeds {IMAGINARY_TOLERANCE:e}")));
    }
    Ok(data.mapv(|c| c.re))
}

/// Circularly rotate rows down by `dy` and columns right by `dx`.
fn roll<T: Clone>(a: &Array2<T>, dy: usize, dx: usize) -> Array2<T> {
    let (h, w) = a.dim();
    Array2::from_shape_fn((h, w), |(y, x)| a[((y + h - dy) % h, (x + w - dx) % w)].clone())
}

/// Move the zero-frequency coefficient to `(H/2, W/2)` (floored).
pub fn shift(spec: &Spectrum) -> Result<Spectrum> {
    if spec.shifted {
        return Err(Error::State("spectrum is already shifted".into()));
    }
    let (h, w) = spec.dim();
    Ok(Spectrum { coefficients: roll(&spec.coefficients, h / 2, w / 2), shifted: true })
}

/// Exact inverse of [`shift`].
pub fn unshift(spec: &Spectrum) -> Result<Spectrum> {
    if !spec.shifted {
        return Err(Error::State("spectrum is not shifted".into()));
    }
    let (h, w) = spec.dim();
    Ok(Spectrum { coefficients: roll(&spec.coefficients, h - h / 2, w - w / 2), shifted: false })
}

/// Apply the shift rotation to a real-valued map (e.g. a log-magnitude).
pub fn shift_real(a: &Array2<f64>) -> Array2<f64> {
    let (h, w) = a.dim();
    roll(a, h / 2, w / 2)
}

/// `ln(1 + N |F|) / ln(1 + N)` for every coefficient, with `N = H * W`.
///
/// `N |F|` is the magnitude of the unnormalized transform, so the log
/// compresses the large low-frequency terms while small high-frequency
/// terms stay well above rounding. No coefficient of a `[0, 1]` image
/// exceeds 1 under the normalized transform, so the output lies in
/// `[0, 1]` with a scale that depends only on the image size.
pub fn log_magnitude(spec: &Spectrum) -> Array2<f64> {
    let (h, w) = spec.dim();
    let n = (h * w) as f64;
    let scale = n.ln_1p();
    spec.coefficients.mapv(|c| (n * c.norm()).ln_1p() / scale)
}

/// Detector input for `image` under `mode`.
pub fn to_representation(image: &Array2<f64>, mode: RepresentationMode) -> Result<Array2<f64>> {
    check_finite(image)?;
    match mode {
        RepresentationMode::Spatial => Ok(image.clone()),
        RepresentationMode::Frequency => Ok(log_magnitude(&dft2(image)?)),
        RepresentationMode::ShiftFrequency => Ok(log_magnitude(&shift(&dft2(image)?)?)),
    }
}

/// Mean scaled log-magnitude of the shifted spectrum over entries farther
/// than `min(H, W) / 4` from the center.
pub fn high_frequency_log_magnitude(image: &Array2<f64>) -> Result<f64> {
    let rep = to_representation(image, RepresentationMode::ShiftFrequency)?;
    let (h, w) = rep.dim();
    let (cy, cx) = ((h / 2) as f64, (w / 2) as f64);
    let radius = h.min(w) as f64 / 4.0;
    let (sum, n) = rep
        .indexed_iter()
        .filter(|((y, x), _)| ((*y as f64 - cy).powi(2) + (*x as f64 - cx).powi(2)).sqrt() > radius)
        .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
    if n == 0 {
        return Err(Error::Shape("image too small to have a high-frequency band".into()));
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((h, w), |_| rng.random::<f64>())
    }

    /// Direct double sum of the normalized DFT definition.
    fn brute_force_dft(f: &Array2<f64>) -> Array2<Complex64> {
        let (h, w) = f.dim();
        Array2::from_shape_fn((h, w), |(v, u)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let phase = -2.0 * PI * (u as f64 * x as f64 / w as f64 + v as f64 * y as f64 / h as f64);
                    acc += f[(y, x)] * Complex64::from_polar(1.0, phase);
                }
            }
            acc / (w * h) as f64
        })
    }

    #[test]
    fn constant_image_is_dc_only() {
        let img = Array2::from_elem((6, 10), 0.37);
        let s = dft2(&img).unwrap();
        for ((v, u), c) in s.coefficients.indexed_iter() {
            let expect = if (v, u) == (0, 0) { 0.37 } else { 0.0 };
            assert!((c - Complex64::new(expect, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn cosine_row_pattern_splits_into_two_bins() {
        let (h, w, c) = (8, 16, 0.6);
        let img = Array2::from_shape_fn((h, w), |(_, x)| c * (2.0 * PI * x as f64 / w as f64).cos());
        let s = dft2(&img).unwrap();
        for ((v, u), z) in s.coefficients.indexed_iter() {
            let expect = if v == 0 && (u == 1 || u == w - 1) { c / 2.0 } else { 0.0 };
            assert!((z.norm() - expect).abs() < 1e-9, "({v},{u}) = {z}");
        }
    }

    #[test]
    fn matches_direct_double_sum() {
        for seed in 0..4 {
            let img = random_image(8, 8, seed);
            let fast = dft2(&img).unwrap();
            let slow = brute_force_dft(&img);
            for (a, b) in fast.coefficients.iter().zip(slow.iter()) {
                assert!((a - b).norm() < 1e-9);
            }
        }
        let img = random_image(5, 7, 9);
        let fast = dft2(&img).unwrap();
        for (a, b) in fast.coefficients.iter().zip(brute_force_dft(&img).iter()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn inverse_round_trip() {
        let img = random_image(64, 64, 1);
        let back = idft2(&dft2(&img).unwrap()).unwrap();
        let err = (&back - &img).iter().map(|d| d.abs()).fold(0.0, f64::max);
        assert!(err < 1e-6);
    }

    #[test]
    fn dc_only_spectrum_inverts_to_constant() {
        let mut coeffs = Array2::zeros((4, 6));
        coeffs[(0, 0)] = Complex64::new(0.25, 0.0);
        let img = idft2(&Spectrum { coefficients: coeffs, shifted: false }).unwrap();
        assert!(img.iter().all(|v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn state_errors() {
        let s = dft2(&random_image(4, 4, 0)).unwrap();
        let sh = shift(&s).unwrap();
        assert!(matches!(idft2(&sh), Err(Error::State(_))));
        assert!(matches!(shift(&sh), Err(Error::State(_))));
        assert!(matches!(unshift(&s), Err(Error::State(_))));
    }

    #[test]
    fn complex_residue_is_rejected() {
        let mut coeffs = Array2::zeros((4, 4));
        coeffs[(0, 1)] = Complex64::new(0.5, 0.0);
        let r = idft2(&Spectrum { coefficients: coeffs, shifted: false });
        assert!(matches!(r, Err(Error::Numeric(_))));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut img = random_image(4, 4, 0);
        img[(1, 1)] = f64::NAN;
        assert!(matches!(dft2(&img), Err(Error::Numeric(_))));
        assert!(matches!(to_representation(&img, RepresentationMode::Spatial), Err(Error::Numeric(_))));
    }

    #[test]
    fn shift_moves_dc_to_center() {
        let mut coeffs = Array2::zeros((4, 4));
        coeffs[(0, 0)] = Complex64::new(1.0, 0.0);
        let s = shift(&Spectrum { coefficients: coeffs, shifted: false }).unwrap();
        assert!(s.shifted);
        assert_eq!(s.coefficients[(2, 2)], Complex64::new(1.0, 0.0));
        assert_eq!(s.coefficients.iter().filter(|c| c.norm() > 0.0).count(), 1);
    }

    #[test]
    fn odd_dimension_round_trip_is_exact() {
        let s = dft2(&random_image(5, 5, 3)).unwrap();
        let sh = shift(&s).unwrap();
        assert_eq!(sh.coefficients[(2, 2)], s.coefficients[(0, 0)]);
        assert_eq!(unshift(&sh).unwrap(), s);
        let img = random_image(5, 5, 3);
        let back = idft2(&unshift(&shift(&dft2(&img).unwrap()).unwrap()).unwrap()).unwrap();
        assert!((&back - &img).iter().all(|d| d.abs() < 1e-6));
    }

    #[test]
    fn shift_frequency_of_constant_is_single_center_pixel() {
        let rep = to_representation(&Array2::from_elem((8, 6), 0.5), RepresentationMode::ShiftFrequency).unwrap();
        let peak = 24.0f64.ln_1p() / 48.0f64.ln_1p();
        for ((y, x), v) in rep.indexed_iter() {
            let expect = if (y, x) == (4, 3) { peak } else { 0.0 };
            assert!((v - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn frequency_modes_are_rotations_of_each_other() {
        let img = random_image(9, 12, 4);
        let plain = to_representation(&img, RepresentationMode::Frequency).unwrap();
        let shifted = to_representation(&img, RepresentationMode::ShiftFrequency).unwrap();
        assert_eq!(shift_real(&plain), shifted);
        assert_eq!(to_representation(&img, RepresentationMode::Spatial).unwrap(), img);
    }

    #[test]
    fn noise_raises_high_frequency_magnitude() {
        let ds = crate::synthetic::generate_synthetic_dataset(4, 64, 64, 4, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for s in ds.samples() {
            let noisy = s.image.mapv(|v| v + rng.random_range(-0.05..0.05));
            assert!(high_frequency_log_magnitude(&noisy).unwrap() > high_frequency_log_magnitude(&s.image).unwrap());
        }
    }

    #[test]
    fn mode_names_parse() {
        for m in RepresentationMode::ALL {
            assert_eq!(m.label().parse::<RepresentationMode>().unwrap(), m);
        }
        assert_eq!("SHIFT_FREQUENCY".parse::<RepresentationMode>().unwrap(), RepresentationMode::ShiftFrequency);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn parseval_and_conjugate_symmetry(h in 1usize..12, w in 1usize..12, seed in any::<u64>()) {
            let img = random_image(h, w, seed);
            let s = dft2(&img).unwrap();
            let spatial: f64 = img.iter().map(|v| v * v).sum();
            let freq = (w * h) as f64 * s.energy();
            prop_assert!((spatial - freq).abs() <= 1e-6 * spatial.max(1e-300));
            for ((v, u), c) in s.coefficients.indexed_iter() {
                let mirror = s.coefficients[((h - v) % h, (w - u) % w)].conj();
                prop_assert!((c - mirror).norm() <= 1e-9 * c.norm().max(1.0));
            }
        }

        #[test]
        fn shift_is_an_energy_preserving_permutation(h in 1usize..10, w in 1usize..10, seed in any::<u64>()) {
            let s = dft2(&random_image(h, w, seed)).unwrap();
            let sh = shift(&s).unwrap();
            prop_assert!((sh.energy() - s.energy()).abs() <= 1e-12 * s.energy().max(1e-300));
            let mut a: Vec<(f64, f64)> = s.coefficients.iter().map(|c| (c.re, c.im)).collect();
            let mut b: Vec<(f64, f64)> = sh.coefficients.iter().map(|c| (c.re, c.im)).collect();
            a.sort_by(|x, y| x.partial_cmp(y).unwrap());
            b.sort_by(|x, y| x.partial_cmp(y).unwrap());
            prop_assert_eq!(a, b);
            prop_assert_eq!(unshift(&sh).unwrap(), s);
        }
    }
}
