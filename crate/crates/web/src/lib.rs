//! WebAssembly bindings for the static demo page in `www/`.
//!
//! The page can draw a synthetic scan, show it in any representation mode,
//! and add a bounded random-sign perturbation to compare spectra. The plain
//! functions below carry the logic; the exported types only wrap them.

use freqshield::frequency::{high_frequency_log_magnitude, to_representation, RepresentationMode};
use freqshield::synthetic::{generate, SyntheticConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

const PALETTE: [[u8; 3]; 6] = [[20, 20, 28], [230, 90, 60], [70, 170, 90], [70, 120, 220], [220, 190, 60], [170, 90, 200]];

/// One synthetic image and its label map.
pub fn synthetic_image(size: usize, classes: usize, contrast: f64, seed: u64) -> freqshield::Result<(Array2<f64>, Array2<u16>)> {
    let cfg = SyntheticConfig { count: 1, height: size, width: size, num_classes: classes, contrast, seed, ..SyntheticConfig::default() };
    let sample = generate(&cfg)?.into_samples().remove(0);
    Ok((sample.image, sample.label))
}

/// `image + epsilon * s` clipped to `[0, 1]`, with `s` a seeded field of ±1.
pub fn sign_perturbation(image: &Array2<f64>, epsilon: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    image.mapv(|v| {
        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        (v + epsilon * s).clamp(0.0, 1.0)
    })
}

/// Grayscale RGBA, stretched so the largest value is white.
pub fn gray_rgba(values: &Array2<f64>) -> Vec<u8> {
    let max = values.iter().cloned().fold(0.0, f64::max);
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    values
        .iter()
        .flat_map(|&v| {
            let g = (v.max(0.0) * scale).round().min(255.0) as u8;
            [g, g, g, 255]
        })
        .collect()
}

pub fn label_rgba(label: &Array2<u16>) -> Vec<u8> {
    label
        .iter()
        .flat_map(|&c| {
            let [r, g, b] = PALETTE[c as usize % PALETTE.len()];
            [r, g, b, 255]
        })
        .collect()
}

fn js<E: std::fmt::Display>(e: E) -> JsError {
    JsError::new(&e.to_string())
}

fn view(image: &Array2<f64>, mode: &str) -> Result<Vec<u8>, JsError> {
    let mode: RepresentationMode = mode.parse().map_err(js)?;
    Ok(gray_rgba(&to_representation(image, mode).map_err(js)?))
}

#[wasm_bindgen]
pub struct Scan {
    image: Array2<f64>,
    label: Array2<u16>,
}

#[wasm_bindgen]
impl Scan {
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize, classes: usize, contrast: f64, seed: u64) -> Result<Scan, JsError> {
        let (image, label) = synthetic_image(size, classes, contrast, seed).map_err(js)?;
        Ok(Scan { image, label })
    }

    pub fn size(&self) -> usize {
        self.image.nrows()
    }

    /// `mode` is one of `spatial`, `frequency`, `shift_frequency`.
    pub fn view(&self, mode: &str) -> Result<Vec<u8>, JsError> {
        view(&self.image, mode)
    }

    pub fn label(&self) -> Vec<u8> {
        label_rgba(&self.label)
    }

    pub fn high_frequency(&self) -> Result<f64, JsError> {
        high_frequency_log_magnitude(&self.image).map_err(js)
    }

    pub fn perturb(&self, epsilon: f64, seed: u64) -> Perturbed {
        Perturbed { image: sign_perturbation(&self.image, epsilon, seed), clean: self.image.clone() }
    }
}

#[wasm_bindgen]
pub struct Perturbed {
    image: Array2<f64>,
    clean: Array2<f64>,
}

#[wasm_bindgen]
impl Perturbed {
    pub fn view(&self, mode: &str) -> Result<Vec<u8>, JsError> {
        view(&self.image, mode)
    }

    /// Absolute difference from the clean image, stretched for display.
    pub fn difference(&self) -> Vec<u8> {
        gray_rgba(&(&self.image - &self.clean).mapv(f64::abs))
    }

    pub fn high_frequency(&self) -> Result<f64, JsError> {
        high_frequency_log_magnitude(&self.image).map_err(js)
    }
}
