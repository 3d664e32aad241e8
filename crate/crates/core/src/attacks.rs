//! White-box attacks on segmenters and mixed clean/adversarial sets.
//!
//! The dense attack drives every correctly classified pixel toward a
//! per-pixel target class by ascending `logit_target - logit_true` with
//! L∞-normalized steps. FGSM takes one signed-gradient step on the training
//! loss. Both keep the perturbation inside an L∞ ball of radius `epsilon`,
//! keep pixels in `[0, 1]`, and snap the result onto the 16-bit storage grid
//! so adversarial sets survive a write/read cycle bit for bit.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, write_dataset, Dataset, ImageSample, INTENSITY_LEVELS};
use crate::error::{Error, Result};
use crate::metrics::dice_score;
use crate::models::train::softmax_backward;
use crate::models::{argmax_labels, image_tensor, segmentation_loss_grad, softmax_probs, SegmenterModel};
use crate::nn::Tensor;
use crate::parallel::map_ordered;

/// Largest admissible perturbation budget.
pub const MAX_EPSILON: f64 = 0.1;
/// Slack allowed by budget checks for floating-point rounding.
pub const BUDGET_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AttackKind {
    Dag,
    Fgsm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TargetPolicy {
    /// The class with the lowest clean logit other than the true one.
    LeastLikely,
    /// A uniformly drawn class other than the true one.
    RandomOther,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// L∞ radius of the perturbation.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Per-iteration step of the dense attack.
    pub step_gamma: f64,
    pub target_policy: TargetPolicy,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self { kind: AttackKind::Dag, epsilon: 0.03, max_iterations: 50, step_gamma: 0.005, target_policy: TargetPolicy::LeastLikely, seed: 0 }
    }
}

impl AttackConfig {
    pub fn dag(epsilon: f64) -> Self {
        Self { epsilon, ..Self::default() }
    }

    pub fn fgsm(epsilon: f64) -> Self {
        Self { kind: AttackKind::Fgsm, epsilon, max_iterations: 1, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=MAX_EPSILON).contains(&self.epsilon) {
            return Err(Error::Parameter(format!("epsilon must lie in [0, {MAX_EPSILON}], got {}", self.epsilon)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Parameter("max_iterations must be at least 1".into()));
        }
        if !(self.step_gamma > 0.0 && self.step_gamma.is_finite()) {
            return Err(Error::Parameter(format!("step_gamma must be positive, got {}", self.step_gamma)));
        }
        Ok(())
    }

    /// Short name such as `dag_eps0.03`.
    pub fn name(&self) -> String {
        let kind = match self.kind {
            AttackKind::Dag => "dag",
            AttackKind::Fgsm => "fgsm",
        };
        format!("{kind}_eps{}", self.epsilon)
    }

    fn expect(&self, kind: AttackKind) -> Result<()> {
        self.validate()?;
        if self.kind != kind {
            return Err(Error::Config(format!("attack config is {:?}, expected {kind:?}", self.kind)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialSample {
    pub clean: ImageSample,
    pub adversarial_image: Array2<f64>,
    pub source_model_id: String,
    pub attack: AttackConfig,
    /// Clean Dice minus adversarial Dice of the source model on this sample.
    pub achieved_dice_drop: f64,
}

impl AdversarialSample {
    /// Identifier of the adversarial image: `<clean id>__<model id>`.
    pub fn id(&self) -> String {
        format!("{}__{}", self.clean.id, sanitize(&self.source_model_id))
    }

    pub fn linf(&self) -> f64 {
        linf_distance(&self.clean.image, &self.adversarial_image)
    }

    pub fn within_budget(&self) -> bool {
        within_budget(&self.clean.image, &self.adversarial_image, self.attack.epsilon)
    }
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-') { c } else { '_' }).collect()
}

pub fn linf_distance(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `||adv - clean||_∞ <= epsilon` and every pixel in `[0, 1]`.
pub fn within_budget(clean: &Array2<f64>, adv: &Array2<f64>, epsilon: f64) -> bool {
    clean.dim() == adv.dim()
        && linf_distance(clean, adv) <= epsilon + BUDGET_TOLERANCE
        && adv.iter().all(|v| (0.0..=1.0).contains(v))
}

/// Clip `adv` into the budget around `clean` and into `[0, 1]`.
fn project(clean: &Array2<f64>, adv: &mut Array2<f64>, epsilon: f64) {
    adv.zip_mut_with(clean, |a, &c| *a = a.clamp(c - epsilon, c + epsilon).clamp(0.0, 1.0));
}

/// Snap each pixel onto the 16-bit grid, choosing the nearest grid value
/// that stays inside the budget (the clean value itself as a last resort).
fn quantize_in_budget(clean: &Array2<f64>, adv: &Array2<f64>, epsilon: f64) -> Array2<f64> {
    let mut out = adv.clone();
    out.zip_mut_with(clean, |a, &c| {
        let scaled = *a * INTENSITY_LEVELS;
        let (lo, hi) = (scaled.floor() / INTENSITY_LEVELS, scaled.ceil() / INTENSITY_LEVELS);
        let ok = |q: f64| (q - c).abs() <= epsilon + BUDGET_TOLERANCE && (0.0..=1.0).contains(&q);
        let (near, far) = if *a - lo <= hi - *a { (lo, hi) } else { (hi, lo) };
        *a = if ok(near) {
            near
        } else if ok(far) {
            far
        } else {
            c
        };
    });
    out
}

fn check_sample(model: &SegmenterModel, sample: &ImageSample) -> Result<()> {
    sample
        .validate(model.num_classes)
        .map_err(|e| Error::Config(format!("sample '{}' does not fit a {}-class model: {e}", sample.id, model.num_classes)))
}

fn dice_drop(model: &SegmenterModel, sample: &ImageSample, adv: &Array2<f64>) -> Result<f64> {
    let clean = dice_score(&model.predict_labels(&sample.image)?, &sample.label, model.num_classes)?;
    let attacked = dice_score(&model.predict_labels(adv)?, &sample.label, model.num_classes)?;
    Ok(clean - attacked)
}

/// Deterministic per-sample stream so results do not depend on scheduling.
fn sample_rng(seed: u64, id: &str) -> ChaCha8Rng {
    // FNV-1a over the id, mixed with the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(h ^ seed.rotate_left(17))
}

/// Per-pixel adversarial targets, fixed before the first step.
fn choose_targets(logits: &Tensor, label: &Array2<u16>, policy: TargetPolicy, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let (c, plane, w) = (logits.channels, logits.plane(), logits.width);
    (0..plane)
        .map(|i| {
            let truth = label[(i / w, i % w)] as usize;
            match policy {
                TargetPolicy::LeastLikely => (0..c)
                    .filter(|&k| k != truth)
                    .min_by(|&a, &b| logits.data[a * plane + i].total_cmp(&logits.data[b * plane + i]))
                    .expect("at least two classes"),
                TargetPolicy::RandomOther => {
                    let k = rng.random_range(0..c - 1);
                    if k >= truth { k + 1 } else { k }
                }
            }
        })
        .collect()
}

fn correct_pixels(logits: &Tensor, label: &Array2<u16>) -> Vec<bool> {
    let labels = argmax_labels(&softmax_probs(logits));
    labels.iter().zip(label.iter()).map(|(p, t)| p == t).collect()
}

/// Outcome of the dense attack before quantization, with progress diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DagTrace {
    pub image: Array2<f64>,
    /// Active-set size before each iteration, then after the last one.
    pub active_counts: Vec<usize>,
}

/// The dense attack's inner loop. A pixel leaves the active set the first
/// time it is misclassified and never rejoins it.
pub fn dag_trace(model: &SegmenterModel, sample: &ImageSample, cfg: &AttackConfig) -> Result<DagTrace> {
    cfg.expect(AttackKind::Dag)?;
    check_sample(model, sample)?;
    let net = model.network();
    let clean = &sample.image;
    let (h, w) = clean.dim();
    let mut x = clean.clone();
    let logits = model.logits(&x)?;
    let mut rng = sample_rng(cfg.seed, &sample.id);
    let targets = choose_targets(&logits, &sample.label, cfg.target_policy, &mut rng);
    let mut active = correct_pixels(&logits, &sample.label);
    let mut counts = vec![active.iter().filter(|a| **a).count()];
    if cfg.epsilon == 0.0 {
        return Ok(DagTrace { image: x, active_counts: counts });
    }
    let plane = h * w;
    let mut scratch = vec![0.0f32; net.param_count()];
    for _ in 0..cfg.max_iterations {
        if *counts.last().expect("non-empty") == 0 {
            break;
        }
        let trace = net.forward_trace(&image_tensor(&x))?;
        let mut grad_out = Tensor::zeros(model.num_classes, h, w);
        for (i, _) in active.iter().enumerate().filter(|(_, a)| **a) {
            let truth = sample.label[(i / w, i % w)] as usize;
            grad_out.data[targets[i] * plane + i] += 1.0;
            grad_out.data[truth * plane + i] -= 1.0;
        }
        let g = net.backward(&trace, grad_out, &mut scratch);
        let scale = g.data.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            break;
        }
        for (v, d) in x.iter_mut().zip(&g.data) {
            *v += cfg.step_gamma * (*d / scale) as f64;
        }
        project(clean, &mut x, cfg.epsilon);
        let now = correct_pixels(&model.logits(&x)?, &sample.label);
        active.iter_mut().zip(now).for_each(|(a, c)| *a &= c);
        counts.push(active.iter().filter(|a| **a).count());
    }
    Ok(DagTrace { image: x, active_counts: counts })
}

fn finish(model: &SegmenterModel, model_id: &str, sample: &ImageSample, cfg: &AttackConfig, raw: &Array2<f64>) -> Result<AdversarialSample> {
    let adversarial_image = quantize_in_budget(&sample.image, raw, cfg.epsilon);
    debug_assert!(within_budget(&sample.image, &adversarial_image, cfg.epsilon));
    let achieved_dice_drop = dice_drop(model, sample, &adversarial_image)?;
    Ok(AdversarialSample {
        clean: sample.clone(),
        adversarial_image,
        source_model_id: model_id.to_string(),
        attack: cfg.clone(),
        achieved_dice_drop,
    })
}

/// Dense adversary generation against `model`; the source id defaults to the
/// model's family label.
pub fn dag_attack(model: &SegmenterModel, sample: &ImageSample, cfg: &AttackConfig) -> Result<AdversarialSample> {
    dag_attack_as(model, model.architecture.family.label(), sample, cfg)
}

pub fn dag_attack_as(model: &SegmenterModel, model_id: &str, sample: &ImageSample, cfg: &AttackConfig) -> Result<AdversarialSample> {
    let trace = dag_trace(model, sample, cfg)?;
    finish(model, model_id, sample, cfg, &trace.image)
}

/// Gradient of the unit-weighted segmentation loss with respect to the image.
pub fn loss_input_gradient(model: &SegmenterModel, image: &Array2<f64>, label: &Array2<u16>) -> Result<Array2<f64>> {
    let net = model.network();
    let trace = net.forward_trace(&image_tensor(image))?;
    let probs = softmax_probs(net.output_of(&trace));
    let weights = vec![1.0; model.num_classes];
    let (_, grad_probs) = segmentation_loss_grad(&probs, label, &weights)?;
    let mut scratch = vec![0.0f32; net.param_count()];
    let g = net.backward(&trace, softmax_backward(&probs, &grad_probs), &mut scratch);
    Ok(Array2::from_shape_vec(image.dim(), g.data.into_iter().map(f64::from).collect()).expect("gradient shape"))
}

/// `clip(x + step * sign(∇L), 0, 1)` for a signed step.
pub fn fgsm_step(model: &SegmenterModel, image: &Array2<f64>, label: &Array2<u16>, step: f64) -> Result<Array2<f64>> {
    let g = loss_input_gradient(model, image, label)?;
    let mut out = image.clone();
    out.zip_mut_with(&g, |x, d| {
        let s = if *d > 0.0 {
            1.0
        } else if *d < 0.0 {
            -1.0
        } else {
            0.0
        };
        *x = (*x + step * s).clamp(0.0, 1.0);
    });
    Ok(out)
}

pub fn fgsm_attack(model: &SegmenterModel, sample: &ImageSample, cfg: &AttackConfig) -> Result<AdversarialSample> {
    fgsm_attack_as(model, model.architecture.family.label(), sample, cfg)
}

pub fn fgsm_attack_as(model: &SegmenterModel, model_id: &str, sample: &ImageSample, cfg: &AttackConfig) -> Result<AdversarialSample> {
    cfg.expect(AttackKind::Fgsm)?;
    check_sample(model, sample)?;
    let raw = fgsm_step(model, &sample.image, &sample.label, cfg.epsilon)?;
    finish(model, model_id, sample, cfg, &raw)
}

/// Run whichever attack `cfg` names.
pub fn attack_sample(model: &SegmenterModel, model_id: &str, sample: &ImageSample, cfg: &AttackConfig) -> Result<AdversarialSample> {
    match cfg.kind {
        AttackKind::Dag => dag_attack_as(model, model_id, sample, cfg),
        AttackKind::Fgsm => fgsm_attack_as(model, model_id, sample, cfg),
    }
}

/// Adversarial samples crafted from one clean set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialSet {
    pub name: String,
    pub num_classes: usize,
    pub samples: Vec<AdversarialSample>,
}

impl AdversarialSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples crafted against one model.
    pub fn for_model<'a>(&'a self, model_id: &'a str) -> impl Iterator<Item = &'a AdversarialSample> + 'a {
        self.samples.iter().filter(move |s| s.source_model_id == model_id)
    }

    pub fn model_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = Vec::new();
        for s in &self.samples {
            if !ids.contains(&s.source_model_id) {
                ids.push(s.source_model_id.clone());
            }
        }
        ids
    }

    /// The adversarial images with their clean labels as a plain dataset.
    pub fn to_dataset(&self) -> Result<Dataset> {
        self.subset_dataset(|_| true)
    }

    pub fn model_dataset(&self, model_id: &str) -> Result<Dataset> {
        self.subset_dataset(|s| s.source_model_id == model_id)
    }

    fn subset_dataset(&self, keep: impl Fn(&AdversarialSample) -> bool) -> Result<Dataset> {
        let samples = self
            .samples
            .iter()
            .filter(|s| keep(s))
            .map(|s| ImageSample { id: s.id(), image: s.adversarial_image.clone(), label: s.clean.label.clone() })
            .collect();
        Dataset::new(self.name.clone(), self.num_classes, samples)
    }
}

/// One adversarial sample per (model, clean sample), models outermost.
pub fn craft_attack_set(models: &[(&str, &SegmenterModel)], clean: &Dataset, cfg: &AttackConfig) -> Result<AdversarialSet> {
    if models.is_empty() {
        return Err(Error::Parameter("no models to attack".into()));
    }
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..models.len()).flat_map(|m| (0..clean.len()).map(move |s| (m, s))).collect();
    let results = map_ordered(&jobs, |&(m, s)| {
        let (id, model) = models[m];
        let sample = &clean.samples()[s];
        attack_sample(model, id, sample, cfg).map_err(|e| Error::Attack { sample_id: sample.id.clone(), source: Box::new(e) })
    });
    let samples = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(AdversarialSet { name: format!("{}_{}", clean.name, cfg.name()), num_classes: clean.num_classes, samples })
}

/// Sidecar metadata stored next to each adversarial image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetadata {
    pub id: String,
    pub clean_id: String,
    pub source_model_id: String,
    pub attack: AttackConfig,
    pub achieved_dice_drop: f64,
    pub linf: f64,
    pub within_budget: bool,
}

/// Write the adversarial images as a dataset manifest plus one JSON
/// sidecar per sample under `meta/`. Returns the manifest path.
pub fn write_adversarial_set(set: &AdversarialSet, dir: &Path, manifest_name: &str) -> Result<PathBuf> {
    let manifest = write_dataset(&set.to_dataset()?, dir, manifest_name)?;
    let meta_dir = dir.join("meta");
    fs::create_dir_all(&meta_dir)?;
    for s in &set.samples {
        let meta = SampleMetadata {
            id: s.id(),
            clean_id: s.clean.id.clone(),
            source_model_id: s.source_model_id.clone(),
            attack: s.attack.clone(),
            achieved_dice_drop: s.achieved_dice_drop,
            linf: s.linf(),
            within_budget: s.within_budget(),
        };
        let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(meta_dir.join(format!("{}.json", meta.id)), text + "\n")?;
    }
    Ok(manifest)
}

/// Inverse of [`write_adversarial_set`]; `clean` supplies the source images.
pub fn load_adversarial_set(manifest: &Path, clean: &Dataset) -> Result<AdversarialSet> {
    let ds = load_dataset(manifest)?;
    let meta_dir = manifest.parent().unwrap_or(Path::new(".")).join("meta");
    let by_id: HashMap<&str, &ImageSample> = clean.samples().iter().map(|s| (s.id.as_str(), s)).collect();
    let name = ds.name.clone();
    let num_classes = ds.num_classes;
    let mut samples = Vec::with_capacity(ds.len());
    for adv in ds.into_samples() {
        let path = meta_dir.join(format!("{}.json", adv.id));
        let text = fs::read_to_string(&path).map_err(|e| Error::Load { path: path.clone(), reason: e.to_string() })?;
        let meta: SampleMetadata = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let source = by_id
            .get(meta.clean_id.as_str())
            .ok_or_else(|| Error::Validation { id: adv.id.clone(), reason: format!("clean source '{}' not found", meta.clean_id) })?;
        samples.push(AdversarialSample {
            clean: (*source).clone(),
            adversarial_image: adv.image,
            source_model_id: meta.source_model_id,
            attack: meta.attack,
            achieved_dice_drop: meta.achieved_dice_drop,
        });
    }
    Ok(AdversarialSet { name, num_classes, samples })
}

/// A shuffled union of clean and adversarial images; `flags[i]` is true for
/// adversarial samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedSet {
    pub dataset: Dataset,
    pub flags: Vec<bool>,
}

impl MixedSet {
    pub fn positives(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }
}

/// Largest `(clean, adversarial)` counts matching `ratio` = adversarial share.
fn mixed_counts(n_clean: usize, n_adv: usize, ratio: f64) -> Option<(usize, usize)> {
    let cap = ((n_adv as f64 / ratio).min(n_clean as f64 / (1.0 - ratio)) + 1e-9).floor() as usize;
    (2..=cap).rev().find_map(|total| {
        let adv = (ratio * total as f64).round() as usize;
        let cl = total - adv;
        (adv >= 1 && cl >= 1 && adv <= n_adv && cl <= n_clean).then_some((cl, adv))
    })
}

pub fn build_mixed_set(clean: &Dataset, adversarial: &Dataset, ratio: f64, seed: u64) -> Result<MixedSet> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Parameter(format!("ratio must lie in (0, 1), got {ratio}")));
    }
    if clean.is_empty() || adversarial.is_empty() {
        return Err(Error::Composition("both clean and adversarial sets must be non-empty".into()));
    }
    if clean.num_classes != adversarial.num_classes {
        return Err(Error::Composition(format!("class counts differ: {} vs {}", clean.num_classes, adversarial.num_classes)));
    }
    let (n_clean, n_adv) = mixed_counts(clean.len(), adversarial.len(), ratio).ok_or_else(|| {
        Error::Composition(format!("cannot reach ratio {ratio} with {} clean and {} adversarial samples", clean.len(), adversarial.len()))
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |ds: &Dataset, k: usize, flag: bool| -> Vec<(ImageSample, bool)> {
        let mut idx: Vec<usize> = (0..ds.len()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(k);
        idx.sort_unstable();
        idx.into_iter().map(|i| (ds.samples()[i].clone(), flag)).collect()
    };
    let mut entries = pick(clean, n_clean, false);
    entries.extend(pick(adversarial, n_adv, true));
    entries.shuffle(&mut rng);
    let (samples, flags): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
    let dataset = Dataset::new(format!("{}+{}", clean.name, adversarial.name), clean.num_classes, samples)?;
    Ok(MixedSet { dataset, flags })
}

pub const FLAGS_FILE: &str = "flags.tsv";

/// Writes the images as a dataset manifest and the flags to `flags.tsv`.
pub fn write_mixed_set(set: &MixedSet, dir: &Path, manifest_name: &str) -> Result<PathBuf> {
    let manifest = write_dataset(&set.dataset, dir, manifest_name)?;
    let mut text = String::from("id\tadversarial\n");
    for (s, f) in set.dataset.samples().iter().zip(&set.flags) {
        text.push_str(&format!("{}\t{}\n", s.id, u8::from(*f)));
    }
    fs::write(dir.join(FLAGS_FILE), text)?;
    Ok(manifest)
}

pub fn load_mixed_set(manifest: &Path) -> Result<MixedSet> {
    let dataset = load_dataset(manifest)?;
    let path = manifest.parent().unwrap_or(Path::new(".")).join(FLAGS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::Load { path: path.clone(), reason: e.to_string() })?;
    let mut flags_by_id = HashMap::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let (id, flag) = line.split_once('\t').ok_or_else(|| Error::Format(format!("bad flags line '{line}'")))?;
        let flag = match flag.trim() {
            "0" => false,
            "1" => true,
            other => return Err(Error::Format(format!("bad flag '{other}' for '{id}'"))),
        };
        flags_by_id.insert(id.to_string(), flag);
    }
    let flags = dataset
        .samples()
        .iter()
        .map(|s| flags_by_id.get(&s.id).copied().ok_or_else(|| Error::Format(format!("no flag for '{}'", s.id))))
        .collect::<Result<Vec<_>>>()?;
    Ok(MixedSet { dataset, flags })
}
