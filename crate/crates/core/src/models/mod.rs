//! Segmenters, reconstruction networks and their training.
//!
//! Architectures are desk-scale versions of the families compared in the
//! experiments. They differ by skip structure:
//!
//! * `SegNet`: encoder/decoder, no skips.
//! * `UNet`: concatenation skips at every scale.
//! * `DenseNet`: dense blocks (short-range) plus encoder/decoder skips (long-range).
//! * `Autoencoder I` / `Autoencoder II`: plain encoder/decoders used as the
//!   low-capacity reconstruction baselines (3 and 2 pooling stages).

mod io;
mod loss;
pub(crate) mod train;

pub use io::{load_model, load_reconstructor, load_segmenter, save_model, MODEL_MAGIC};
pub use loss::{inverse_frequency_weights, segmentation_loss, segmentation_loss_grad, PROB_FLOOR};
pub use train::{train_reconstructor, train_segmenter, TrainConfig, TrainHistory};

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frequency::RepresentationMode;
use crate::nn::{GraphBuilder, Network, NodeId, Tensor};

/// Growth rate of the dense blocks.
pub const DENSE_GROWTH: usize = 8;
/// Layers per dense block.
pub const DENSE_LAYERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Family {
    Unet,
    Segnet,
    Densenet,
    AutoencoderI,
    AutoencoderIi,
}

impl Family {
    pub const ALL: [Family; 5] = [Self::Unet, Self::Segnet, Self::Densenet, Self::AutoencoderI, Self::AutoencoderIi];

    pub fn label(self) -> &'static str {
        match self {
            Self::Unet => "UNet",
            Self::Segnet => "SegNet",
            Self::Densenet => "DenseNet",
            Self::AutoencoderI => "Autoencoder I",
            Self::AutoencoderIi => "Autoencoder II",
        }
    }

    pub fn is_autoencoder(self) -> bool {
        matches!(self, Self::AutoencoderI | Self::AutoencoderIi)
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', '-', ' '], "").as_str() {
            "unet" => Ok(Self::Unet),
            "segnet" => Ok(Self::Segnet),
            "densenet" => Ok(Self::Densenet),
            "autoencoderi" | "ae1" | "aei" => Ok(Self::AutoencoderI),
            "autoencoderii" | "ae2" | "aeii" => Ok(Self::AutoencoderIi),
            _ => Err(Error::Config(format!("unknown architecture family '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Purpose {
    Segment,
    Reconstruct,
}

impl std::fmt::Display for Purpose {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Segment => "SEGMENT",
            Self::Reconstruct => "RECONSTRUCT",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub family: Family,
    pub in_channels: usize,
    pub out_channels: usize,
    pub base_width: usize,
    pub depth: usize,
}

impl ArchitectureSpec {
    /// Single-channel spec with the default desk-scale width and depth.
    pub fn new(family: Family, out_channels: usize) -> Self {
        Self { family, in_channels: 1, out_channels, base_width: 16, depth: 4 }
    }

    pub fn with_size(mut self, base_width: usize, depth: usize) -> Self {
        self.base_width = base_width;
        self.depth = depth;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels < 1 || self.out_channels < 1 {
            return Err(Error::Config("channel counts must be at least 1".into()));
        }
        if self.depth < 2 {
            return Err(Error::Config(format!("depth must be at least 2, got {}", self.depth)));
        }
        if self.base_width < 4 {
            return Err(Error::Config(format!("base width must be at least 4, got {}", self.base_width)));
        }
        Ok(())
    }

    fn width(&self, level: usize) -> usize {
        self.base_width << level
    }
}

fn dense_block(b: &mut GraphBuilder, mut h: NodeId) -> NodeId {
    for _ in 0..DENSE_LAYERS {
        let n = b.conv_relu(h, DENSE_GROWTH);
        h = b.concat(h, n);
    }
    h
}

fn transition(b: &mut GraphBuilder, h: NodeId, width: usize) -> NodeId {
    let t = b.conv(h, width, 1);
    b.relu(t)
}

/// Wire up the graph for `spec`. The output is linear for both purposes:
/// logits for segmenters, an unbounded map for reconstructors that
/// [`ReconstructionModel::reconstruct`] clamps to `[0, 1]`.
fn build_network(spec: &ArchitectureSpec, seed: u64) -> Network {
    let mut b = GraphBuilder::new();
    let x = b.input(spec.in_channels);
    let top = match spec.family {
        Family::Unet | Family::Segnet => {
            let skips = spec.family == Family::Unet;
            let mut h = x;
            let mut enc = Vec::new();
            for level in 0..spec.depth {
                h = b.conv_relu(h, spec.width(level));
                h = b.conv_relu(h, spec.width(level));
                if level + 1 < spec.depth {
                    enc.push(h);
                    h = b.max_pool(h);
                }
            }
            for level in (0..spec.depth - 1).rev() {
                h = b.upsample(h);
                if skips {
                    h = b.concat(h, enc[level]);
                }
                h = b.conv_relu(h, spec.width(level));
                h = b.conv_relu(h, spec.width(level));
            }
            h
        }
        Family::Densenet => {
            let mut h = b.conv_relu(x, spec.width(0));
            let mut enc = Vec::new();
            for level in 0..spec.depth {
                if level > 0 {
                    h = transition(&mut b, h, spec.width(level));
                }
                h = dense_block(&mut b, h);
                if level + 1 < spec.depth {
                    enc.push(h);
                    h = b.max_pool(h);
                }
            }
            for level in (0..spec.depth - 1).rev() {
                h = b.upsample(h);
                h = b.concat(h, enc[level]);
                h = transition(&mut b, h, spec.width(level));
                h = dense_block(&mut b, h);
            }
            h
        }
        Family::AutoencoderI | Family::AutoencoderIi => {
            let (stages, width) = match spec.family {
                Family::AutoencoderI => (3, 2 * spec.base_width),
                _ => (2, spec.base_width),
            };
            let mut h = x;
            for _ in 0..stages {
                h = b.conv_relu(h, width);
                h = b.max_pool(h);
            }
            for _ in 0..stages {
                h = b.upsample(h);
                h = b.conv_relu(h, width);
            }
            h
        }
    };
    let out = b.conv(top, spec.out_channels, 1);
    b.finish(out, seed)
}

pub(crate) fn image_tensor(image: &Array2<f64>) -> Tensor {
    let (h, w) = image.dim();
    Tensor::from_vec(1, h, w, image.iter().map(|&v| v as f32).collect())
}

/// Per-pixel softmax of `(C, H, W)` logits into an `H x W x C` array.
pub fn softmax_probs(logits: &Tensor) -> Array3<f64> {
    let (c, h, w) = (logits.channels, logits.height, logits.width);
    let plane = h * w;
    let mut out = Array3::zeros((h, w, c));
    for i in 0..plane {
        let max = (0..c).map(|k| logits.data[k * plane + i] as f64).fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for k in 0..c {
            let e = (logits.data[k * plane + i] as f64 - max).exp();
            out[(i / w, i % w, k)] = e;
            z += e;
        }
        for k in 0..c {
            out[(i / w, i % w, k)] /= z;
        }
    }
    out
}

/// Argmax over the class axis of an `H x W x C` array.
pub fn argmax_labels(probs: &Array3<f64>) -> Array2<u16> {
    let (h, w, c) = probs.dim();
    Array2::from_shape_fn((h, w), |(y, x)| {
        (0..c).fold(0usize, |best, k| if probs[(y, x, k)] > probs[(y, x, best)] { k } else { best }) as u16
    })
}

/// A pixel classifier producing `num_classes` logits per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmenterModel {
    pub architecture: ArchitectureSpec,
    pub num_classes: usize,
    pub(crate) net: Network,
}

impl SegmenterModel {
    pub fn new(architecture: ArchitectureSpec, num_classes: usize, seed: u64) -> Result<Self> {
        match build_model(architecture, Purpose::Segment, num_classes, seed)? {
            Model::Segmenter(m) => Ok(m),
            Model::Reconstructor(_) => unreachable!(),
        }
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn logits(&self, image: &Array2<f64>) -> Result<Tensor> {
        self.net.forward(&image_tensor(image))
    }

    /// `H x W x C` class probabilities.
    pub fn predict_probs(&self, image: &Array2<f64>) -> Result<Array3<f64>> {
        Ok(softmax_probs(&self.logits(image)?))
    }

    pub fn predict_labels(&self, image: &Array2<f64>) -> Result<Array2<u16>> {
        Ok(argmax_labels(&self.predict_probs(image)?))
    }
}

/// A map from a representation back to itself, with outputs in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionModel {
    pub architecture: ArchitectureSpec,
    /// Representation the model was (or will be) trained on.
    pub mode: RepresentationMode,
    pub(crate) net: Network,
}

impl ReconstructionModel {
    pub fn new(architecture: ArchitectureSpec, mode: RepresentationMode, seed: u64) -> Result<Self> {
        match build_model(architecture, Purpose::Reconstruct, architecture.in_channels, seed)? {
            Model::Reconstructor(m) => Ok(ReconstructionModel { mode, ..m }),
            Model::Segmenter(_) => unreachable!(),
        }
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    /// `D(r)` for a single-channel representation `r`, clamped to `[0, 1]`.
    ///
    /// Training sees the unclamped output; a sigmoid head saturated there
    /// and stopped learning. Targets lie in `[0, 1]`, so the clamp never
    /// increases a pixel's error.
    pub fn reconstruct(&self, rep: &Array2<f64>) -> Result<Array2<f64>> {
        let (h, w) = rep.dim();
        let out = self.net.forward(&image_tensor(rep))?;
        Ok(Array2::from_shape_vec((h, w), out.data.into_iter().map(|v| (v as f64).clamp(0.0, 1.0)).collect()).expect("output shape"))
    }
}

/// A freshly initialized model of either purpose.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Segmenter(SegmenterModel),
    Reconstructor(ReconstructionModel),
}

impl Model {
    pub fn purpose(&self) -> Purpose {
        match self {
            Model::Segmenter(_) => Purpose::Segment,
            Model::Reconstructor(_) => Purpose::Reconstruct,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Model::Segmenter(m) => m.net.param_count(),
            Model::Reconstructor(m) => m.net.param_count(),
        }
    }

    pub fn into_segmenter(self) -> Result<SegmenterModel> {
        match self {
            Model::Segmenter(m) => Ok(m),
            Model::Reconstructor(_) => Err(Error::PurposeMismatch { expected: "SEGMENT".into(), found: "RECONSTRUCT".into() }),
        }
    }

    pub fn into_reconstructor(self) -> Result<ReconstructionModel> {
        match self {
            Model::Reconstructor(m) => Ok(m),
            Model::Segmenter(_) => Err(Error::PurposeMismatch { expected: "RECONSTRUCT".into(), found: "SEGMENT".into() }),
        }
    }
}

/// Initialize a model; `num_classes` is only consulted for segmenters.
/// Reconstructors start out tagged with the spatial representation.
pub fn build_model(spec: ArchitectureSpec, purpose: Purpose, num_classes: usize, seed: u64) -> Result<Model> {
    spec.validate()?;
    match purpose {
        Purpose::Segment => {
            if spec.family.is_autoencoder() {
                return Err(Error::Config(format!("{} is not a segmentation architecture", spec.family)));
            }
            if num_classes < 2 || spec.out_channels != num_classes {
                return Err(Error::Config(format!(
                    "segmenter needs out_channels == classes (>= 2), got {} for {num_classes} classes",
                    spec.out_channels
                )));
            }
            let net = build_network(&spec, seed);
            Ok(Model::Segmenter(SegmenterModel { architecture: spec, num_classes, net }))
        }
        Purpose::Reconstruct => {
            if spec.out_channels != spec.in_channels {
                return Err(Error::Config(format!(
                    "reconstructor needs out_channels == in_channels, got {} vs {}",
                    spec.out_channels, spec.in_channels
                )));
            }
            let net = build_network(&spec, seed);
            Ok(Model::Reconstructor(ReconstructionModel { architecture: spec, mode: RepresentationMode::Spatial, net }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((h, w), |_| rng.random())
    }

    #[test]
    fn unet_segmenter_outputs_distributions() {
        let m = SegmenterModel::new(ArchitectureSpec::new(Family::Unet, 4), 4, 1).unwrap();
        let p = m.predict_probs(&random_image(64, 64, 0)).unwrap();
        assert_eq!(p.dim(), (64, 64, 4));
        for y in 0..64 {
            for x in 0..64 {
                let s: f64 = (0..4).map(|k| p[(y, x, k)]).sum();
                assert!((s - 1.0).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn every_segmenter_family_normalizes() {
        for fam in [Family::Segnet, Family::Densenet] {
            let m = SegmenterModel::new(ArchitectureSpec::new(fam, 3).with_size(4, 3), 3, 2).unwrap();
            let p = m.predict_probs(&random_image(16, 24, 1)).unwrap();
            assert!(p.sum_axis(ndarray::Axis(2)).iter().all(|s| (s - 1.0).abs() < 1e-5));
        }
    }

    #[test]
    fn autoencoder_shape_and_range() {
        let m = ReconstructionModel::new(ArchitectureSpec::new(Family::AutoencoderIi, 1), RepresentationMode::Spatial, 0).unwrap();
        let out = m.reconstruct(&random_image(32, 32, 3)).unwrap();
        assert_eq!(out.dim(), (32, 32));
        assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn incompatible_specs_are_configuration_errors() {
        let r = build_model(ArchitectureSpec::new(Family::Unet, 1), Purpose::Segment, 4, 0);
        assert!(matches!(r, Err(Error::Config(_))));
        let r = build_model(ArchitectureSpec::new(Family::Unet, 2), Purpose::Reconstruct, 2, 0);
        assert!(matches!(r, Err(Error::Config(_))));
        let r = build_model(ArchitectureSpec::new(Family::Unet, 4).with_size(16, 1), Purpose::Segment, 4, 0);
        assert!(matches!(r, Err(Error::Config(_))));
        let r = build_model(ArchitectureSpec::new(Family::AutoencoderI, 4), Purpose::Segment, 4, 0);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn input_size_must_fit_pooling() {
        let m = SegmenterModel::new(ArchitectureSpec::new(Family::Unet, 2), 2, 0).unwrap();
        assert!(matches!(m.logits(&random_image(20, 20, 0)), Err(Error::Shape(_))));
    }

    #[test]
    fn autoencoders_are_the_smallest_models() {
        let count = |fam: Family, purpose: Purpose| {
            let out = if purpose == Purpose::Segment { 4 } else { 1 };
            build_model(ArchitectureSpec::new(fam, out), purpose, 4, 0).unwrap().param_count()
        };
        let ae2 = count(Family::AutoencoderIi, Purpose::Reconstruct);
        let ae1 = count(Family::AutoencoderI, Purpose::Reconstruct);
        assert!(ae2 < ae1);
        for fam in [Family::Segnet, Family::Unet, Family::Densenet] {
            assert!(ae1 < count(fam, Purpose::Segment), "{fam}");
            assert!(ae1 < count(fam, Purpose::Reconstruct), "{fam}");
        }
        assert!(count(Family::Segnet, Purpose::Segment) < count(Family::Unet, Purpose::Segment));
    }

    #[test]
    fn family_names_parse() {
        for f in Family::ALL {
            assert_eq!(f.label().parse::<Family>().unwrap(), f);
        }
    }
}
