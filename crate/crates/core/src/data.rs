//! Datasets of 2D grayscale images with per-pixel class labels.
//!
//! A dataset on disk is a UTF-8 manifest whose first line is `C=<classes>`,
//! followed by one `<id>\t<image_path>\t<label_path>` line per sample.
//! Relative paths are resolved against the manifest's directory. Images are
//! 8- or 16-bit grayscale rasters (PNG or PGM) rescaled to `[0, 1]` by their
//! maximum representable value; labels store raw class ids.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of quantization levels used when storing intensities as 16-bit rasters.
pub const INTENSITY_LEVELS: f64 = 65535.0;

/// Snap an intensity onto the 16-bit storage grid so that it survives a
/// write/read cycle unchanged.
pub fn quantize_intensity(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * INTENSITY_LEVELS).round() / INTENSITY_LEVELS
}

/// One grayscale image with its label map.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub id: String,
    pub image: Array2<f64>,
    pub label: Array2<u16>,
}

impl ImageSample {
    pub fn height(&self) -> usize {
        self.image.nrows()
    }

    pub fn width(&self) -> usize {
        self.image.ncols()
    }

    /// Check the sample against a class count.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let fail = |reason: String| Error::Validation { id: self.id.clone(), reason };
        if self.image.dim() != self.label.dim() {
            return Err(fail(format!(
                "image is {:?} but label is {:?}",
                self.image.dim(),
                self.label.dim()
            )));
        }
        if let Some(v) = self.image.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(fail(format!("intensity {v} outside [0, 1]")));
        }
        if let Some(c) = self.label.iter().find(|&&c| c as usize >= num_classes) {
            return Err(fail(format!("label value {c} >= class count {num_classes}")));
        }
        Ok(())
    }
}

/// An ordered collection of samples sharing dimensions and class count.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub num_classes: usize,
    samples: Vec<ImageSample>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, num_classes: usize, samples: Vec<ImageSample>) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Parameter(format!("need at least 2 classes, got {num_classes}")));
        }
        let mut ids = HashSet::new();
        let dim = samples.first().map(|s| s.image.dim());
        for s in &samples {
            s.validate(num_classes)?;
            if Some(s.image.dim()) != dim {
                return Err(Error::Validation {
                    id: s.id.clone(),
                    reason: format!("dimensions {:?} differ from dataset {:?}", s.image.dim(), dim.unwrap()),
                });
            }
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Validation { id: s.id.clone(), reason: "duplicate sample id".into() });
            }
        }
        Ok(Self { name: name.into(), num_classes, samples })
    }

    pub fn samples(&self) -> &[ImageSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(height, width)` of every sample, or `None` when empty.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.samples.first().map(|s| s.image.dim())
    }

    pub fn images(&self) -> Vec<Array2<f64>> {
        self.samples.iter().map(|s| s.image.clone()).collect()
    }

    pub fn into_samples(self) -> Vec<ImageSample> {
        self.samples
    }

    /// Per-class pixel counts over every label map.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for s in &self.samples {
            for &c in s.label.iter() {
                counts[c as usize] += 1;
            }
        }
        counts
    }
}

/// Fractions for a train/validation/test partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.7, val_fraction: 0.15, test_fraction: 0.15, seed: 0 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_fraction, self.val_fraction, self.test_fraction];
        if fr.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::Parameter(format!("split fractions must lie in (0, 1), got {fr:?}")));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!("split fractions must sum to 1, got {fr:?}")));
        }
        Ok(())
    }
}

/// Shuffle sample positions with the split seed, then slice off validation
/// and test; the rounding remainder goes to train. Each part keeps the input
/// order of its samples.
pub fn split_dataset(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    spec.validate()?;
    let n = ds.len();
    let n_val = (n as f64 * spec.val_fraction + 1e-9).floor() as usize;
    let n_test = (n as f64 * spec.test_fraction + 1e-9).floor() as usize;
    let n_train = n.saturating_sub(n_val + n_test);
    if n_val == 0 || n_test == 0 || n_train == 0 {
        return Err(Error::Split(format!(
            "{n} samples give an empty split (train {n_train}, val {n_val}, test {n_test})"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let part = |mut idx: Vec<usize>, suffix: &str| {
        idx.sort_unstable();
        let samples = idx.into_iter().map(|i| ds.samples[i].clone()).collect();
        Dataset::new(format!("{}-{suffix}", ds.name), ds.num_classes, samples)
    };
    let val = part(order[..n_val].to_vec(), "val")?;
    let test = part(order[n_val..n_val + n_test].to_vec(), "test")?;
    let train = part(order[n_val + n_test..].to_vec(), "train")?;
    Ok((train, val, test))
}

fn load_err(path: &Path, reason: impl ToString) -> Error {
    Error::Load { path: path.to_path_buf(), reason: reason.to_string() }
}

fn open_raster(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(load_err(path, "file does not exist"));
    }
    image::open(path).map_err(|e| load_err(path, e))
}

/// Read a grayscale raster as intensities in `[0, 1]`.
pub fn read_intensity_raster(path: &Path) -> Result<Array2<f64>> {
    match open_raster(path)? {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            Ok(Array2::from_shape_fn((h as usize, w as usize), |(y, x)| {
                buf.get_pixel(x as u32, y as u32)[0] as f64 / 255.0
            }))
        }
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            Ok(Array2::from_shape_fn((h as usize, w as usize), |(y, x)| {
                buf.get_pixel(x as u32, y as u32)[0] as f64 / INTENSITY_LEVELS
            }))
        }
        other => Err(load_err(path, format!("expected 8/16-bit grayscale, found {:?}", other.color()))),
    }
}

/// Read a raster of raw class ids.
pub fn read_label_raster(path: &Path) -> Result<Array2<u16>> {
    match open_raster(path)? {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            Ok(Array2::from_shape_fn((h as usize, w as usize), |(y, x)| {
                buf.get_pixel(x as u32, y as u32)[0] as u16
            }))
        }
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            Ok(Array2::from_shape_fn((h as usize, w as usize), |(y, x)| buf.get_pixel(x as u32, y as u32)[0]))
        }
        other => Err(load_err(path, format!("expected 8/16-bit grayscale labels, found {:?}", other.color()))),
    }
}

/// Write intensities as a 16-bit grayscale PNG.
pub fn write_intensity_raster(path: &Path, image: &Array2<f64>) -> Result<()> {
    let (h, w) = image.dim();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let v = image[(y as usize, x as usize)].clamp(0.0, 1.0);
        Luma([(v * INTENSITY_LEVELS).round() as u16])
    });
    buf.save(path).map_err(|e| load_err(path, e))
}

/// Write class ids as an 8-bit PNG (16-bit when ids exceed 255).
pub fn write_label_raster(path: &Path, label: &Array2<u16>) -> Result<()> {
    let (h, w) = label.dim();
    let wide = label.iter().any(|&c| c > u8::MAX as u16);
    let res = if wide {
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_fn(w as u32, h as u32, |x, y| Luma([label[(y as usize, x as usize)]]));
        buf.save(path)
    } else {
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
            ImageBuffer::from_fn(w as u32, h as u32, |x, y| Luma([label[(y as usize, x as usize)] as u8]));
        buf.save(path)
    };
    res.map_err(|e| load_err(path, e))
}

fn check_id(id: &str) -> Result<()> {
    let ok = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
    if ok {
        Ok(())
    } else {
        Err(Error::Validation { id: id.to_string(), reason: "ids must be non-empty [A-Za-z0-9._-]".into() })
    }
}

/// Load a dataset from its manifest.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(manifest_path).map_err(|e| load_err(manifest_path, e))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| load_err(manifest_path, "empty manifest"))?;
    let num_classes: usize = header
        .trim()
        .strip_prefix("C=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| load_err(manifest_path, format!("bad header line '{header}', expected C=<classes>")))?;

    let resolve = |p: &str| {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let mut samples = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [id, img, lbl] = fields[..] else {
            return Err(load_err(manifest_path, format!("line {}: expected 3 tab-separated fields", lineno + 2)));
        };
        let sample = ImageSample {
            id: id.to_string(),
            image: read_intensity_raster(&resolve(img))?,
            label: read_label_raster(&resolve(lbl))?,
        };
        sample.validate(num_classes)?;
        samples.push(sample);
    }
    let name = manifest_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Dataset::new(name, num_classes, samples)
}

/// Export a dataset as rasters under `dir` plus a manifest named
/// `<manifest_name>`; returns the manifest path.
pub fn write_dataset(ds: &Dataset, dir: &Path, manifest_name: &str) -> Result<PathBuf> {
    let img_dir = dir.join("images");
    let lbl_dir = dir.join("labels");
    fs::create_dir_all(&img_dir)?;
    fs::create_dir_all(&lbl_dir)?;
    let mut manifest = format!("C={}\n", ds.num_classes);
    for s in ds.samples() {
        check_id(&s.id)?;
        let img_rel = format!("images/{}.png", s.id);
        let lbl_rel = format!("labels/{}.png", s.id);
        write_intensity_raster(&dir.join(&img_rel), &s.image)?;
        write_label_raster(&dir.join(&lbl_rel), &s.label)?;
        manifest.push_str(&format!("{}\t{img_rel}\t{lbl_rel}\n", s.id));
    }
    let path = dir.join(manifest_name);
    fs::write(&path, manifest)?;
    Ok(path)
}
