//! Mini-batch Adam training for segmenters and reconstruction networks.

use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{inverse_frequency_weights, segmentation_loss_grad};
use super::{argmax_labels, image_tensor, softmax_probs, ReconstructionModel, SegmenterModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::frequency::{to_representation, RepresentationMode};
use crate::metrics::dice_score;
use crate::nn::{Adam, Network, Tensor};
use crate::parallel::map_ordered;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// L2 regularization strength added to every gradient.
    pub weight_decay: f64,
    pub seed: u64,
    /// Per-class loss weights; inverse class frequency of the training set when unset.
    pub class_weights: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.001, epochs: 30, batch_size: 8, weight_decay: 1e-5, seed: 0, class_weights: None }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::Config("epochs and batch size must be at least 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight decay must be non-negative, got {}", self.weight_decay)));
        }
        Ok(())
    }
}

/// Per-epoch losses; `val_dice` is only filled for segmenters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_dice: Vec<f64>,
}

/// One optimization run. `sample_grad` returns a sample's loss and parameter
/// gradient; `validate` scores the network after every epoch.
fn fit<G, V>(net: &mut Network, n_train: usize, cfg: &TrainConfig, sample_grad: G, validate: V) -> Result<TrainHistory>
where
    G: Fn(&Network, usize) -> Result<(f64, Vec<f32>)> + Sync + Send,
    V: Fn(&Network) -> Result<(f64, Option<f64>)>,
{
    let mut opt = Adam::new(net.param_count(), cfg.learning_rate as f32, cfg.weight_decay as f32);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut history = TrainHistory::default();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results = map_ordered(batch, |&i| sample_grad(net, i));
            let mut total = vec![0.0f32; net.param_count()];
            for r in results {
                let (loss, grad) = r?;
                if !loss.is_finite() {
                    return Err(Error::Training { epoch, reason: format!("non-finite training loss {loss}") });
                }
                epoch_loss += loss;
                total.iter_mut().zip(&grad).for_each(|(t, g)| *t += g);
            }
            let scale = 1.0 / batch.len() as f32;
            total.iter_mut().for_each(|g| *g *= scale);
            opt.step(&mut net.params, &total);
        }
        let (val_loss, val_dice) = validate(net)?;
        if !val_loss.is_finite() || net.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Training { epoch, reason: format!("non-finite validation loss {val_loss}") });
        }
        history.train_loss.push(epoch_loss / n_train as f64);
        history.val_loss.push(val_loss);
        if let Some(d) = val_dice {
            history.val_dice.push(d);
        }
    }
    Ok(history)
}

/// Gradient of the loss with respect to `(C, H, W)` logits, given its
/// gradient with respect to the softmax probabilities.
pub(crate) fn softmax_backward(probs: &Array3<f64>, grad_probs: &Array3<f64>) -> Tensor {
    let (h, w, c) = probs.dim();
    let mut out = Tensor::zeros(c, h, w);
    let plane = h * w;
    for y in 0..h {
        for x in 0..w {
            let dot: f64 = (0..c).map(|k| probs[(y, x, k)] * grad_probs[(y, x, k)]).sum();
            for k in 0..c {
                out.data[k * plane + y * w + x] = (probs[(y, x, k)] * (grad_probs[(y, x, k)] - dot)) as f32;
            }
        }
    }
    out
}

fn check_sets(train: &Dataset, val: &Dataset, num_classes: usize, net: &Network) -> Result<()> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Parameter("training and validation sets must be non-empty".into()));
    }
    for ds in [train, val] {
        if ds.num_classes != num_classes {
            return Err(Error::Config(format!("dataset has {} classes, model expects {num_classes}", ds.num_classes)));
        }
        let (h, w) = ds.dims().expect("non-empty");
        net.check_input(&Tensor::zeros(net.in_channels(), h, w))?;
    }
    Ok(())
}

/// Per-sample segmentation loss and parameter gradient.
pub(crate) fn segmenter_sample_grad(
    net: &Network,
    image: &ndarray::Array2<f64>,
    label: &ndarray::Array2<u16>,
    weights: &[f64],
) -> Result<(f64, Vec<f32>)> {
    let trace = net.forward_trace(&image_tensor(image))?;
    let probs = softmax_probs(net.output_of(&trace));
    let (loss, grad_probs) = segmentation_loss_grad(&probs, label, weights)?;
    let mut pg = vec![0.0f32; net.param_count()];
    net.backward(&trace, softmax_backward(&probs, &grad_probs), &mut pg);
    Ok((loss, pg))
}

/// Train a segmenter with the combined logistic + Dice loss.
pub fn train_segmenter(model: SegmenterModel, train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<(SegmenterModel, TrainHistory)> {
    cfg.validate()?;
    let SegmenterModel { architecture, num_classes, mut net } = model;
    check_sets(train, val, num_classes, &net)?;
    let weights = match &cfg.class_weights {
        Some(w) if w.len() != num_classes => {
            return Err(Error::Config(format!("{} class weights for {num_classes} classes", w.len())));
        }
        Some(w) => w.clone(),
        None => inverse_frequency_weights(&train.class_counts()),
    };
    let samples = train.samples();
    let history = fit(
        &mut net,
        samples.len(),
        cfg,
        |net, i| segmenter_sample_grad(net, &samples[i].image, &samples[i].label, &weights),
        |net| {
            let scored = map_ordered(val.samples(), |s| -> Result<(f64, f64)> {
                let probs = softmax_probs(&net.forward(&image_tensor(&s.image))?);
                let loss = super::segmentation_loss(&probs, &s.label, &weights)?;
                let dice = dice_score(&argmax_labels(&probs), &s.label, num_classes)?;
                Ok((loss, dice))
            });
            let mut sums = (0.0, 0.0);
            for r in scored {
                let (l, d) = r?;
                sums.0 += l;
                sums.1 += d;
            }
            let n = val.len() as f64;
            Ok((sums.0 / n, Some(sums.1 / n)))
        },
    )?;
    Ok((SegmenterModel { architecture, num_classes, net }, history))
}

/// Unsquared 2-norm reconstruction loss and its gradient w.r.t. the output.
fn reconstruction_loss(target: &Tensor, output: &Tensor) -> (f64, Tensor) {
    let diff: Vec<f64> = output.data.iter().zip(&target.data).map(|(o, t)| *o as f64 - *t as f64).collect();
    let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    let grad = if norm > 0.0 { diff.iter().map(|d| (d / norm) as f32).collect() } else { vec![0.0; diff.len()] };
    (norm, Tensor::from_vec(output.channels, output.height, output.width, grad))
}

/// Train `model` to reproduce `to_representation(image, mode)` for clean
/// images, minimizing the mean unsquared 2-norm reconstruction error. The
/// returned model is tagged with `mode`.
pub fn train_reconstructor(
    model: ReconstructionModel,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    mode: RepresentationMode,
) -> Result<(ReconstructionModel, TrainHistory)> {
    cfg.validate()?;
    let ReconstructionModel { architecture, mut net, .. } = model;
    check_sets(train, val, train.num_classes, &net)?;
    let reps = |ds: &Dataset| -> Result<Vec<Tensor>> {
        ds.samples().iter().map(|s| Ok(image_tensor(&to_representation(&s.image, mode)?))).collect()
    };
    let train_reps = reps(train)?;
    let val_reps = reps(val)?;
    let history = fit(
        &mut net,
        train_reps.len(),
        cfg,
        |net, i| {
            let trace = net.forward_trace(&train_reps[i])?;
            let (loss, grad) = reconstruction_loss(&train_reps[i], net.output_of(&trace));
            let mut pg = vec![0.0f32; net.param_count()];
            net.backward(&trace, grad, &mut pg);
            Ok((loss, pg))
        },
        |net| {
            // Validation scores the clamped output that inference returns.
            let losses = map_ordered(&val_reps, |r| {
                net.forward(r).map(|mut out| {
                    out.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
                    reconstruction_loss(r, &out).0
                })
            });
            let mut sum = 0.0;
            for l in losses {
                sum += l?;
            }
            Ok((sum / val_reps.len() as f64, None))
        },
    )?;
    Ok((ReconstructionModel { architecture, mode, net }, history))
}
