//! Synthetic stand-in for 2D MRI slices.
//!
//! Every image has a dim background (class 0) carrying a faint periodic
//! grating, so its spectrum shows a few dominating directions, and `C - 1`
//! soft-edged elliptical blobs, one per foreground class. Blob intensity
//! rises with the class id, which keeps segmentation learnable.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{quantize_intensity, Dataset, ImageSample};
use crate::error::{Error, Result};

/// Knobs of the generator. `Default` gives the 64x64, 4-class setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    pub seed: u64,
    /// Mean background intensity.
    pub background: f64,
    /// Peak amplitude of the background grating.
    pub texture_amplitude: f64,
    /// Standard deviation of additive acquisition noise.
    pub noise_std: f64,
    /// Width of the blob edge transition, in pixels.
    pub edge_softness: f64,
    /// Intensity step from background to the brightest class.
    pub contrast: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            count: 200,
            height: 64,
            width: 64,
            num_classes: 4,
            seed: 0,
            background: 0.15,
            texture_amplitude: 0.04,
            noise_std: 0.004,
            edge_softness: 1.0,
            contrast: 0.15,
        }
    }
}

/// Generate `n` samples of size `height x width` with `num_classes` classes.
pub fn generate_synthetic_dataset(n: usize, height: usize, width: usize, num_classes: usize, seed: u64) -> Result<Dataset> {
    generate(&SyntheticConfig { count: n, height, width, num_classes, seed, ..SyntheticConfig::default() })
}

pub fn generate(cfg: &SyntheticConfig) -> Result<Dataset> {
    if cfg.count < 1 {
        return Err(Error::Parameter("synthetic dataset needs at least one sample".into()));
    }
    if cfg.height < 16 || cfg.width < 16 {
        return Err(Error::Parameter(format!("images must be at least 16x16, got {}x{}", cfg.height, cfg.width)));
    }
    if cfg.num_classes < 2 {
        return Err(Error::Parameter(format!("need at least 2 classes, got {}", cfg.num_classes)));
    }
    if cfg.noise_std < 0.0 || cfg.texture_amplitude < 0.0 || cfg.edge_softness <= 0.0 || cfg.contrast <= 0.0 {
        return Err(Error::Parameter("noise, texture, softness and contrast must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples = (0..cfg.count)
        .map(|i| {
            let (image, label) = draw_sample(cfg, &mut rng);
            ImageSample { id: format!("syn{:05}", i), image, label }
        })
        .collect();
    Dataset::new(format!("synthetic-{}", cfg.seed), cfg.num_classes, samples)
}

struct Blob {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    angle: f64,
}

impl Blob {
    /// Signed distance-like coordinate: negative inside, scaled to pixels.
    fn edge_distance(&self, y: f64, x: f64) -> f64 {
        let (s, c) = self.angle.sin_cos();
        let dy = y - self.cy;
        let dx = x - self.cx;
        let u = (c * dx + s * dy) / self.rx;
        let v = (-s * dx + c * dy) / self.ry;
        ((u * u + v * v).sqrt() - 1.0) * self.rx.min(self.ry)
    }
}

fn draw_sample(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> (Array2<f64>, Array2<u16>) {
    let (h, w) = (cfg.height, cfg.width);
    let hf = h as f64;
    let wf = w as f64;
    let min_dim = hf.min(wf);
    let min_pixels = (h * w / 200).max(4);

    // Background grating with one or two dominating directions on exact DFT bins.
    let gratings: Vec<(f64, f64, f64)> = (0..rng.random_range(1..=2))
        .map(|_| {
            let ky = rng.random_range(-6i32..=6) as f64;
            let kx = rng.random_range(3i32..=8) as f64;
            (ky, kx, rng.random_range(0.0..2.0 * PI))
        })
        .collect();

    loop {
        let mut blobs: Vec<Blob> = (1..cfg.num_classes)
            .map(|_| {
                let big = rng.random_range(0.12..0.26) * min_dim;
                Blob {
                    cy: rng.random_range(0.22..0.78) * hf,
                    cx: rng.random_range(0.22..0.78) * wf,
                    ry: big,
                    rx: big * rng.random_range(0.6..1.0),
                    angle: rng.random_range(0.0..PI),
                }
            })
            .collect();
        // Larger blobs first so later ones rarely swallow them.
        let mut order: Vec<usize> = (0..blobs.len()).collect();
        order.sort_by(|&a, &b| (blobs[b].rx * blobs[b].ry).total_cmp(&(blobs[a].rx * blobs[a].ry)));
        let classes: Vec<u16> = (1..cfg.num_classes as u16).collect();
        let shading = rng.random_range(-0.03..0.03);

        let mut image = Array2::from_shape_fn((h, w), |(y, x)| {
            let (yf, xf) = (y as f64, x as f64);
            let tex: f64 = gratings
                .iter()
                .map(|(ky, kx, ph)| (2.0 * PI * (ky * yf / hf + kx * xf / wf) + ph).sin())
                .sum::<f64>()
                / gratings.len() as f64;
            cfg.background + shading * (yf / hf - 0.5) + cfg.texture_amplitude * tex
        });
        let mut label = Array2::<u16>::zeros((h, w));
        for &bi in &order {
            let class = classes[bi];
            let level = cfg.background + cfg.contrast * class as f64 / (cfg.num_classes - 1) as f64;
            let blob = &blobs[bi];
            for ((y, x), px) in image.indexed_iter_mut() {
                let d = blob.edge_distance(y as f64, x as f64);
                let m = 1.0 / (1.0 + (d / cfg.edge_softness).exp());
                // Slight interior shading keeps blobs from being flat plateaus.
                let interior = level + 0.03 * ((y as f64 - blob.cy) / blob.ry);
                *px = *px * (1.0 - m) + interior * m;
                if m > 0.5 {
                    label[(y, x)] = class;
                }
            }
        }
        let mut counts = vec![0usize; cfg.num_classes];
        label.iter().for_each(|&c| counts[c as usize] += 1);
        if counts.iter().any(|&c| c < min_pixels) {
            blobs.clear();
            continue;
        }
        if cfg.noise_std > 0.0 {
            let noise = Normal::new(0.0, cfg.noise_std).expect("finite std");
            image.mapv_inplace(|v| v + noise.sample(rng));
        }
        image.mapv_inplace(quantize_intensity);
        return (image, label);
    }
}
