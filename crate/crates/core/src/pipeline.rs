//! The assembled defense (detect, reform, segment) and its evaluation.

use std::collections::HashMap;
use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::attacks::{AdversarialSet, MixedSet};
use crate::data::Dataset;
use crate::detector::{calibrate_from_scores, passing_indices, DetectorBundle, Reconstructor};
use crate::error::{Error, Result};
use crate::frequency::RepresentationMode;
use crate::metrics::{dice_score, roc_auc};
use crate::models::{ArchitectureSpec, ReconstructionModel, SegmenterModel};
use crate::parallel::map_ordered;
use crate::reformer::ReformerBundle;

/// Display name of a detector: autoencoders by family alone, other
/// networks as `<family>_<representation>`.
pub fn detector_name(spec: &ArchitectureSpec, mode: RepresentationMode) -> String {
    if spec.family.is_autoencoder() {
        spec.family.label().to_string()
    } else {
        format!("{}_{}", spec.family.label(), mode.label())
    }
}

/// The sixteen numbered detector/reformer pairings of the reference study.
pub const STANDARD_COMBINATIONS: [(&str, &str); 16] = [
    ("Autoencoder I", "Autoencoder I"),
    ("Autoencoder I", "Autoencoder II"),
    ("Autoencoder II", "Autoencoder I"),
    ("Autoencoder II", "Autoencoder II"),
    ("Autoencoder I", "UNet"),
    ("Autoencoder I", "DenseNet"),
    ("Autoencoder II", "UNet"),
    ("Autoencoder II", "DenseNet"),
    ("UNet_frequency", "UNet"),
    ("UNet_frequency", "DenseNet"),
    ("DenseNet_frequency", "UNet"),
    ("DenseNet_frequency", "DenseNet"),
    ("UNet_shiftFrequency", "UNet"),
    ("UNet_shiftFrequency", "DenseNet"),
    ("DenseNet_shiftFrequency", "UNet"),
    ("DenseNet_shiftFrequency", "DenseNet"),
];

/// 1-based number of a standard pairing.
pub fn standard_number(detector: &str, reformer: &str) -> Option<usize> {
    STANDARD_COMBINATIONS.iter().position(|(d, r)| *d == detector && *r == reformer).map(|i| i + 1)
}

/// `"13: UNet_shiftFrequency + UNet"` for standard pairings, otherwise
/// `"UNet_spatial + UNet"`.
pub fn combination_id(detector: &str, reformer: &str) -> String {
    match standard_number(detector, reformer) {
        Some(n) => format!("{n}: {detector} + {reformer}"),
        None => format!("{detector} + {reformer}"),
    }
}

/// Detector, reformer and target segmenter wired together.
#[derive(Debug, Clone)]
pub struct DefenseAssembly<D = ReconstructionModel, F = ReconstructionModel> {
    pub id: String,
    pub detector: DetectorBundle<D>,
    pub reformer: ReformerBundle<F>,
    pub segmenter: SegmenterModel,
}

/// Result of running images through an assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct DefenseOutput {
    /// One label map per passed image, in pass order.
    pub predictions: Vec<Array2<u16>>,
    pub pass_indices: Vec<usize>,
    /// Reconstruction errors of every input.
    pub scores: Vec<f64>,
}

impl<D: Reconstructor, F: Reconstructor> DefenseAssembly<D, F> {
    /// Checks calibration and pushes a blank `dims`-sized probe through every
    /// component so inconsistencies surface here rather than at inference.
    pub fn new(
        id: impl Into<String>,
        detector: DetectorBundle<D>,
        reformer: ReformerBundle<F>,
        segmenter: SegmenterModel,
        dims: (usize, usize),
    ) -> Result<Self> {
        let id = id.into();
        if detector.threshold().is_none() {
            return Err(Error::Assembly(format!("{id}: detector is not calibrated")));
        }
        let probe = Array2::zeros(dims);
        let wrap = |stage: &str, e: Error| Error::Assembly(format!("{id}: {stage} rejects {}x{} inputs: {e}", dims.0, dims.1));
        detector.reconstruction_error(&probe).map_err(|e| wrap("detector", e))?;
        let reformed = reformer.reform_one(&probe).map_err(|e| wrap("reformer", e))?;
        segmenter.logits(&reformed).map_err(|e| wrap("segmenter", e))?;
        Ok(Self { id, detector, reformer, segmenter })
    }

    /// Detect on the detector's representation, reform the passed spatial
    /// images, then segment them by per-pixel argmax.
    pub fn defend_and_segment(&self, images: &[Array2<f64>]) -> Result<DefenseOutput> {
        let (pass_indices, scores) = self.detector.detect(images)?;
        let passed: Vec<Array2<f64>> = pass_indices.iter().map(|&i| images[i].clone()).collect();
        let reformed = self.reformer.reform(&passed)?;
        let predictions = segment_all(&self.segmenter, &reformed)?;
        Ok(DefenseOutput { predictions, pass_indices, scores })
    }
}

/// Free-function form of [`DefenseAssembly::defend_and_segment`].
pub fn defend_and_segment<D: Reconstructor, F: Reconstructor>(assembly: &DefenseAssembly<D, F>, images: &[Array2<f64>]) -> Result<DefenseOutput> {
    assembly.defend_and_segment(images)
}

/// Undefended label maps.
pub fn segment_all(model: &SegmenterModel, images: &[Array2<f64>]) -> Result<Vec<Array2<u16>>> {
    map_ordered(images, |x| model.predict_labels(x)).into_iter().collect()
}

/// Mean Dice of `preds` against the labels of `truth[indices[i]]`; NaN
/// when there is nothing to score.
pub fn mean_dice_at(preds: &[Array2<u16>], truth: &Dataset, indices: &[usize]) -> Result<f64> {
    if preds.len() != indices.len() {
        return Err(Error::Shape(format!("{} predictions for {} indices", preds.len(), indices.len())));
    }
    if preds.is_empty() {
        return Ok(f64::NAN);
    }
    let mut sum = 0.0;
    for (p, &i) in preds.iter().zip(indices) {
        sum += dice_score(p, &truth.samples()[i].label, truth.num_classes)?;
    }
    Ok(sum / preds.len() as f64)
}

/// Mean Dice of the undefended segmenter over a whole dataset.
pub fn undefended_dice(model: &SegmenterModel, ds: &Dataset) -> Result<f64> {
    let preds = segment_all(model, &ds.images())?;
    mean_dice_at(&preds, ds, &(0..ds.len()).collect::<Vec<_>>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MetricKind {
    Dice,
    RocAuc,
    Fpr,
    PassRate,
}

impl MetricKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::Dice => "DICE",
            Self::RocAuc => "ROC_AUC",
            Self::Fpr => "FPR",
            Self::PassRate => "PASS_RATE",
        }
    }
}

/// Where a metric came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub combination: String,
    pub detector: String,
    pub reformer: String,
    pub segmenter: String,
    pub attack: String,
    pub dataset: String,
    pub t_fp: f64,
    pub seed: u64,
}

/// One metric value. A Dice over zero passed images is NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: MetricKind,
    pub value: f64,
    pub provenance: Provenance,
}

/// ROC-AUC of a detector's reconstruction errors on a flagged mixed set.
pub fn evaluate_detector<R: Reconstructor>(bundle: &DetectorBundle<R>, mixed: &MixedSet) -> Result<MetricRecord> {
    let scores = bundle.scores(&mixed.dataset.images())?;
    let value = roc_auc(&scores, &mixed.flags)?;
    Ok(MetricRecord {
        metric: MetricKind::RocAuc,
        value,
        provenance: Provenance { dataset: mixed.dataset.name.clone(), ..Provenance::default() },
    })
}

pub struct NamedDetector<R = ReconstructionModel> {
    pub name: String,
    pub bundle: DetectorBundle<R>,
}

pub struct NamedReformer<R = ReconstructionModel> {
    pub name: String,
    pub bundle: ReformerBundle<R>,
}

pub struct NamedSegmenter {
    pub name: String,
    pub model: SegmenterModel,
}

/// Which (detector, reformer) pairs to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub enum GridPlan {
    /// Every detector with every reformer.
    CrossProduct,
    /// The numbered standard pairings whose components are present.
    Standard,
    /// Explicit `(detector index, reformer index)` pairs.
    Pairs(Vec<(usize, usize)>),
}

pub struct GridInputs<'a> {
    /// Clean data for threshold calibration.
    pub clean_val: &'a Dataset,
    pub clean_test: &'a Dataset,
    /// Adversarial sets; each segmenter is evaluated on the samples crafted
    /// against it (matched by name).
    pub attack_sets: &'a [AdversarialSet],
    pub t_fp: f64,
    pub seed: u64,
}

/// One combination (or the no-defense baseline) on one target and attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub combination: String,
    /// Standard pairing number; `None` for baselines and custom pairings.
    pub number: Option<usize>,
    pub detector: String,
    pub reformer: String,
    pub segmenter: String,
    pub attack: String,
    pub adversarial_dice: f64,
    pub adversarial_pass_rate: f64,
    pub clean_dice: f64,
    pub clean_pass_rate: f64,
    /// Rejection rate on the calibration set.
    pub validation_fpr: f64,
}

impl GridRow {
    pub fn is_baseline(&self) -> bool {
        self.detector == NO_DEFENSE
    }
}

pub const NO_DEFENSE: &str = "none";
pub const BASELINE_ID: &str = "0: no defense";

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub rows: Vec<GridRow>,
    pub t_fp: f64,
    pub seed: u64,
}

struct Scored {
    dice: Vec<f64>,
}

/// Per-image Dice of `model` on `images` (labels from `truth`).
fn per_image_dice(model: &SegmenterModel, images: &[Array2<f64>], truth: &Dataset) -> Result<Scored> {
    let preds = segment_all(model, images)?;
    let dice = preds
        .iter()
        .zip(truth.samples())
        .map(|(p, s)| dice_score(p, &s.label, truth.num_classes))
        .collect::<Result<Vec<_>>>()?;
    Ok(Scored { dice })
}

fn mean_over(values: &[f64], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return f64::NAN;
    }
    idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64
}

fn mean(values: &[f64]) -> f64 {
    mean_over(values, &(0..values.len()).collect::<Vec<_>>())
}

/// Calibrate every detector at `t_fp` and evaluate the planned
/// combinations on every segmenter and attack set, plus one no-defense
/// baseline per (segmenter, attack). Rows are sorted by combination.
///
/// Detector scores, reformed images and per-image Dice are computed once
/// per component and shared across cells; each cell equals running
/// [`DefenseAssembly::defend_and_segment`] on the test images.
pub fn run_combination_grid<D: Reconstructor, F: Reconstructor>(
    detectors: &mut [NamedDetector<D>],
    reformers: &[NamedReformer<F>],
    segmenters: &[NamedSegmenter],
    inputs: &GridInputs<'_>,
    plan: &GridPlan,
) -> Result<GridResult> {
    if segmenters.is_empty() || inputs.attack_sets.is_empty() {
        return Err(Error::Parameter("grid needs at least one segmenter and one attack set".into()));
    }
    let pairs: Vec<(usize, usize)> = match plan {
        GridPlan::CrossProduct => (0..detectors.len()).flat_map(|d| (0..reformers.len()).map(move |r| (d, r))).collect(),
        GridPlan::Standard => {
            let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
            for (d, det) in detectors.iter().enumerate() {
                for (r, rf) in reformers.iter().enumerate() {
                    if let Some(n) = standard_number(&det.name, &rf.name) {
                        pairs.push((n, d, r));
                    }
                }
            }
            pairs.sort_unstable();
            pairs.into_iter().map(|(_, d, r)| (d, r)).collect()
        }
        GridPlan::Pairs(p) => p.clone(),
    };
    if let Some(&(d, r)) = pairs.iter().find(|(d, r)| *d >= detectors.len() || *r >= reformers.len()) {
        return Err(Error::Parameter(format!("pair ({d}, {r}) refers to a missing component")));
    }

    let clean_images = inputs.clean_test.images();
    let mut adv_sets: Vec<(String, String, Dataset)> = Vec::new();
    for set in inputs.attack_sets {
        let attack = set.samples.first().map(|s| s.attack.name()).unwrap_or_else(|| set.name.clone());
        for seg in segmenters {
            let ds = set.model_dataset(&seg.name)?;
            if ds.is_empty() {
                return Err(Error::Parameter(format!("attack set '{}' has no samples crafted against '{}'", set.name, seg.name)));
            }
            adv_sets.push((attack.clone(), seg.name.clone(), ds));
        }
    }

    // Calibrated thresholds and scores per detector.
    let mut fprs = Vec::with_capacity(detectors.len());
    let mut clean_pass: Vec<Vec<usize>> = Vec::new();
    let mut adv_pass: Vec<Vec<Vec<usize>>> = Vec::new();
    let used_detectors: Vec<bool> = (0..detectors.len()).map(|d| pairs.iter().any(|p| p.0 == d)).collect();
    for (d, det) in detectors.iter_mut().enumerate() {
        if !used_detectors[d] {
            fprs.push(f64::NAN);
            clean_pass.push(Vec::new());
            adv_pass.push(Vec::new());
            continue;
        }
        let val_scores = det.bundle.scores(&inputs.clean_val.images())?;
        let cal = calibrate_from_scores(&val_scores, inputs.t_fp)?;
        det.bundle.set_threshold(cal.threshold_t_re)?;
        fprs.push(cal.achieved_fpr);
        clean_pass.push(passing_indices(&det.bundle.scores(&clean_images)?, cal.threshold_t_re));
        let mut per_set = Vec::with_capacity(adv_sets.len());
        for (_, _, ds) in &adv_sets {
            per_set.push(passing_indices(&det.bundle.scores(&ds.images())?, cal.threshold_t_re));
        }
        adv_pass.push(per_set);
    }

    // Per-image Dice after each used reformer, keyed by (reformer, set) where set
    // usize::MAX is the clean test set.
    let used_reformers: Vec<bool> = (0..reformers.len()).map(|r| pairs.iter().any(|p| p.1 == r)).collect();
    let mut reformed_dice: HashMap<(usize, usize, usize), Vec<f64>> = HashMap::new();
    for (r, rf) in reformers.iter().enumerate().filter(|(r, _)| used_reformers[*r]) {
        let clean_reformed = rf.bundle.reform(&clean_images)?;
        for (s, seg) in segmenters.iter().enumerate() {
            reformed_dice.insert((r, s, usize::MAX), per_image_dice(&seg.model, &clean_reformed, inputs.clean_test)?.dice);
        }
        for (k, (_, seg_name, ds)) in adv_sets.iter().enumerate() {
            let s = segmenters.iter().position(|g| &g.name == seg_name).expect("set built from segmenters");
            let reformed = rf.bundle.reform(&ds.images())?;
            reformed_dice.insert((r, s, k), per_image_dice(&segmenters[s].model, &reformed, ds)?.dice);
        }
    }

    let mut rows = Vec::new();
    for (s, seg) in segmenters.iter().enumerate() {
        let clean_plain = per_image_dice(&seg.model, &clean_images, inputs.clean_test)?.dice;
        for (k, (attack, seg_name, ds)) in adv_sets.iter().enumerate() {
            if seg_name != &seg.name {
                continue;
            }
            let adv_plain = per_image_dice(&seg.model, &ds.images(), ds)?.dice;
            rows.push(GridRow {
                combination: BASELINE_ID.to_string(),
                number: None,
                detector: NO_DEFENSE.into(),
                reformer: NO_DEFENSE.into(),
                segmenter: seg.name.clone(),
                attack: attack.clone(),
                adversarial_dice: mean(&adv_plain),
                adversarial_pass_rate: 1.0,
                clean_dice: mean(&clean_plain),
                clean_pass_rate: 1.0,
                validation_fpr: 0.0,
            });
            for &(d, r) in &pairs {
                let (det, rf) = (&detectors[d], &reformers[r]);
                let adv_idx = &adv_pass[d][k];
                let clean_idx = &clean_pass[d];
                rows.push(GridRow {
                    combination: combination_id(&det.name, &rf.name),
                    number: standard_number(&det.name, &rf.name),
                    detector: det.name.clone(),
                    reformer: rf.name.clone(),
                    segmenter: seg.name.clone(),
                    attack: attack.clone(),
                    adversarial_dice: mean_over(&reformed_dice[&(r, s, k)], adv_idx),
                    adversarial_pass_rate: adv_idx.len() as f64 / ds.len() as f64,
                    clean_dice: mean_over(&reformed_dice[&(r, s, usize::MAX)], clean_idx),
                    clean_pass_rate: clean_idx.len() as f64 / inputs.clean_test.len() as f64,
                    validation_fpr: fprs[d],
                });
            }
        }
    }
    rows.sort_by(|a, b| {
        (a.segmenter.as_str(), a.attack.as_str(), a.number.unwrap_or(if a.is_baseline() { 0 } else { usize::MAX }), a.combination.as_str()).cmp(&(
            b.segmenter.as_str(),
            b.attack.as_str(),
            b.number.unwrap_or(if b.is_baseline() { 0 } else { usize::MAX }),
            b.combination.as_str(),
        ))
    });
    Ok(GridResult { rows, t_fp: inputs.t_fp, seed: inputs.seed })
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.6}")
    }
}

impl GridResult {
    /// Long-form metric records, one per (row, metric).
    pub fn records(&self) -> Vec<MetricRecord> {
        let mut out = Vec::new();
        for row in &self.rows {
            let prov = |dataset: &str| Provenance {
                combination: row.combination.clone(),
                detector: row.detector.clone(),
                reformer: row.reformer.clone(),
                segmenter: row.segmenter.clone(),
                attack: row.attack.clone(),
                dataset: dataset.to_string(),
                t_fp: self.t_fp,
                seed: self.seed,
            };
            let mut push = |metric, value, dataset: &str| out.push(MetricRecord { metric, value, provenance: prov(dataset) });
            push(MetricKind::Dice, row.adversarial_dice, "adversarial");
            push(MetricKind::PassRate, row.adversarial_pass_rate, "adversarial");
            push(MetricKind::Dice, row.clean_dice, "clean");
            push(MetricKind::PassRate, row.clean_pass_rate, "clean");
            push(MetricKind::Fpr, row.validation_fpr, "validation");
        }
        out
    }

    /// Tab-separated long-form table with a header line.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("combination\tdetector\treformer\tsegmenter\tattack\tdataset\tmetric\tvalue\tt_fp\tseed\n");
        for r in self.records() {
            let p = &r.provenance;
            writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                p.combination,
                p.detector,
                p.reformer,
                p.segmenter,
                p.attack,
                p.dataset,
                r.metric.label(),
                fmt_value(r.value),
                p.t_fp,
                p.seed
            )
            .expect("write to string");
        }
        s
    }

    /// Per-combination bar-chart data as CSV.
    pub fn plot_csv(&self) -> String {
        let mut s = String::from("segmenter,attack,combination,adversarial_dice,adversarial_pass_rate,clean_dice\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{},\"{}\",{},{},{}",
                r.segmenter,
                r.attack,
                r.combination,
                fmt_value(r.adversarial_dice),
                fmt_value(r.adversarial_pass_rate),
                fmt_value(r.clean_dice)
            )
            .expect("write to string");
        }
        s
    }

    /// Combination with the highest adversarial Dice for a segmenter.
    pub fn best_for(&self, segmenter: &str) -> Option<&GridRow> {
        self.rows
            .iter()
            .filter(|r| r.segmenter == segmenter && !r.is_baseline() && !r.adversarial_dice.is_nan())
            .max_by(|a, b| a.adversarial_dice.total_cmp(&b.adversarial_dice))
    }
}

/// Detector ROC-AUC against each target's mixed set, plus the average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucRow {
    pub detector: String,
    pub per_target: Vec<(String, f64)>,
}

impl AucRow {
    pub fn average(&self) -> f64 {
        mean(&self.per_target.iter().map(|(_, v)| *v).collect::<Vec<_>>())
    }
}

/// Detectors as rows, targets as columns, then the average.
pub fn auc_table_tsv(rows: &[AucRow]) -> String {
    let mut s = String::from("detector");
    if let Some(first) = rows.first() {
        for (t, _) in &first.per_target {
            s.push('\t');
            s.push_str(t);
        }
    }
    s.push_str("\taverage\n");
    for r in rows {
        s.push_str(&r.detector);
        for (_, v) in &r.per_target {
            s.push('\t');
            s.push_str(&fmt_value(*v));
        }
        writeln!(s, "\t{}", fmt_value(r.average())).expect("write to string");
    }
    s
}
