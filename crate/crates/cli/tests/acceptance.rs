//! Acceptance criteria 1-11. Runs as a plain binary so every criterion
//! prints one PASS/FAIL line; exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use freqshield::attacks::load_adversarial_set;
use freqshield::data::{load_dataset, Dataset, ImageSample};
use freqshield::detector::{calibrate_threshold, DetectorBundle, Reconstructor};
use freqshield::frequency::{dft2, high_frequency_log_magnitude, idft2, shift, unshift, RepresentationMode, Spectrum};
use freqshield::metrics::{dice_score, roc_auc};
use freqshield::models::{load_segmenter, segmentation_loss, segmentation_loss_grad};
use freqshield::pipeline::{undefended_dice, GridRow};
use freqshield_cli::stages::{Role, RunReport};
use freqshield_cli::{cmd_all, ExperimentConfig, Layout};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Array2<f64> {
    Array2::from_shape_fn((h, w), |_| rng.random::<f64>())
}

// 1. DFT against the direct double sum, round trip, Parseval.

fn brute_dft(f: &Array2<f64>) -> Array2<Complex64> {
    let (h, w) = f.dim();
    Array2::from_shape_fn((h, w), |(v, u)| {
        let mut acc = Complex64::new(0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                let phase = -2.0 * PI * (u as f64 * x as f64 / w as f64 + v as f64 * y as f64 / h as f64);
                acc += f[(y, x)] * Complex64::from_polar(1.0, phase);
            }
        }
        acc / (h * w) as f64
    })
}

fn criterion_dft() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let img = random_image(&mut rng, 8, 8);
        let got = dft2(&img).unwrap().coefficients;
        let want = brute_dft(&img);
        worst = worst.max(got.iter().zip(want.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
    }
    let mut round = 0.0f64;
    let mut parseval = 0.0f64;
    for _ in 0..5 {
        let img = random_image(&mut rng, 64, 64);
        let spec = dft2(&img).unwrap();
        let back = idft2(&spec).unwrap();
        round = round.max(back.iter().zip(img.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        let spatial: f64 = img.iter().map(|v| v * v).sum();
        let spectral = (64.0 * 64.0) * spec.coefficients.iter().map(|c| c.norm_sqr()).sum::<f64>();
        parseval = parseval.max((spatial - spectral).abs() / spatial);
    }
    outcome(
        worst <= 1e-9 && round <= 1e-6 && parseval <= 1e-6,
        format!("max coefficient error {worst:.1e}, round trip {round:.1e}, Parseval relative {parseval:.1e}"),
    )
}

// 2. Shift and unshift.

fn criterion_shift() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut exact = true;
    for (h, w) in [(8, 8), (7, 9), (5, 6), (1, 4), (9, 1)] {
        let coefficients = Array2::from_shape_fn((h, w), |_| Complex64::new(rng.random(), rng.random()));
        let spec = Spectrum { coefficients, shifted: false };
        let s = shift(&spec).unwrap();
        exact &= unshift(&s).unwrap() == spec;
        exact &= shift(&unshift(&s).unwrap()).unwrap() == s;
    }
    let mut centered = true;
    for (h, w) in [(8, 8), (7, 9), (6, 5)] {
        let s = shift(&dft2(&Array2::from_elem((h, w), 0.7)).unwrap()).unwrap();
        let peak = s.coefficients.indexed_iter().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())).unwrap().0;
        centered &= peak == (h / 2, w / 2);
        centered &= s.coefficients.iter().filter(|c| c.norm() > 1e-12).count() == 1;
    }
    outcome(exact && centered, format!("inverse pairs exact: {exact}, DC at center: {centered}"))
}

// 3. Loss value and gradient.

fn criterion_loss() -> Outcome {
    let n = 4;
    let probs = Array3::from_elem((n, n, 2), 0.5);
    let labels = Array2::from_shape_fn((n, n), |(y, _)| (y % 2) as u16);
    let value = segmentation_loss(&probs, &labels, &[1.0, 1.0]).unwrap();
    let expected = 2.0f64.ln() - 4.0 / 3.0;
    let value_err = (value - expected).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let step = 1e-4;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let probs = Array3::from_shape_fn((4, 4, 3), |_| rng.random_range(0.05..1.0));
        let labels = Array2::from_shape_fn((4, 4), |_| rng.random_range(0..3u16));
        let weights: Vec<f64> = (0..3).map(|_| rng.random_range(0.5..2.0)).collect();
        let (_, grad) = segmentation_loss_grad(&probs, &labels, &weights).unwrap();
        for idx in ndarray::indices((4, 4, 3)) {
            let mut plus = probs.clone();
            let mut minus = probs.clone();
            plus[idx] += step;
            minus[idx] -= step;
            let fd = (segmentation_loss(&plus, &labels, &weights).unwrap() - segmentation_loss(&minus, &labels, &weights).unwrap()) / (2.0 * step);
            let scale = grad[idx].abs().max(fd.abs()).max(1e-8);
            worst = worst.max((grad[idx] - fd).abs() / scale);
        }
    }
    outcome(value_err <= 1e-6 && worst <= 1e-3, format!("|L - (ln 2 - 4/3)| = {value_err:.1e}, worst gradient relative error {worst:.1e}"))
}

// 4. Threshold calibration.

/// Reconstructs nothing, so a 1x1 image's error is its own value.
struct ZeroReconstructor;

impl Reconstructor for ZeroReconstructor {
    fn mode(&self) -> RepresentationMode {
        RepresentationMode::Spatial
    }
    fn reconstruct(&self, rep: &Array2<f64>) -> freqshield::Result<Array2<f64>> {
        Ok(Array2::zeros(rep.dim()))
    }
}

fn score_dataset(scores: &[f64]) -> Dataset {
    let samples = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| ImageSample { id: format!("s{i}"), image: Array2::from_elem((1, 1), s), label: Array2::zeros((1, 1)) })
        .collect();
    Dataset::new("scores", 2, samples).unwrap()
}

fn brute_threshold(scores: &[f64], t_fp: f64) -> f64 {
    let n = scores.len() as f64;
    scores
        .iter()
        .copied()
        .filter(|&r| scores.iter().filter(|&&s| s > r).count() as f64 / n <= t_fp)
        .fold(f64::INFINITY, f64::min)
}

fn criterion_calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    let mut over_budget = 0;
    for i in 0..200 {
        let n = rng.random_range(1..120);
        // Every fourth set draws from a coarse grid to force ties.
        let scores: Vec<f64> =
            (0..n).map(|_| if i % 4 == 0 { rng.random_range(0..6) as f64 / 8.0 } else { (rng.random::<f64>() * 65535.0).round() / 65535.0 }).collect();
        let ds = score_dataset(&scores);
        for t_fp in [0.01, 0.05, 0.1] {
            let mut bundle = DetectorBundle::new(ZeroReconstructor);
            let r = calibrate_threshold(&mut bundle, &ds, t_fp).unwrap();
            if r.threshold_t_re != brute_threshold(&scores, t_fp) {
                mismatches += 1;
            }
            let rejected = scores.iter().filter(|&&s| s > r.threshold_t_re).count() as f64 / n as f64;
            if rejected > t_fp || r.achieved_fpr != rejected {
                over_budget += 1;
            }
        }
    }
    outcome(mismatches == 0 && over_budget == 0, format!("{mismatches} threshold mismatches, {over_budget} budget violations over 600 cases"))
}

// 5. ROC-AUC.

fn brute_auc(scores: &[f64], flags: &[bool]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0.0;
    for (i, &fi) in flags.iter().enumerate() {
        for (j, &fj) in flags.iter().enumerate() {
            if fi && !fj {
                pairs += 1.0;
                total += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    total / pairs
}

fn criterion_auc() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let n = rng.random_range(2..=50);
        let mut flags: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        flags[0] = true;
        flags[1] = false;
        let scores: Vec<f64> = (0..n).map(|_| if i % 3 == 0 { rng.random_range(0..4) as f64 } else { rng.random() }).collect();
        worst = worst.max((roc_auc(&scores, &flags).unwrap() - brute_auc(&scores, &flags)).abs());
    }
    outcome(worst <= 1e-12, format!("max deviation from pair enumeration {worst:.1e}"))
}

// 6. Dice.

fn brute_dice(pred: &Array2<u16>, truth: &Array2<u16>, c: usize) -> f64 {
    use std::collections::BTreeSet;
    let mut sum = 0.0;
    let mut present = 0;
    for k in 0..c as u16 {
        let p: BTreeSet<(usize, usize)> = pred.indexed_iter().filter(|(_, &v)| v == k).map(|(i, _)| i).collect();
        let g: BTreeSet<(usize, usize)> = truth.indexed_iter().filter(|(_, &v)| v == k).map(|(i, _)| i).collect();
        if p.is_empty() && g.is_empty() {
            continue;
        }
        present += 1;
        sum += 2.0 * p.intersection(&g).count() as f64 / (p.len() + g.len()) as f64;
    }
    sum / present as f64
}

fn criterion_dice() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let c = rng.random_range(2..6);
        let pred = Array2::from_shape_fn((8, 8), |_| rng.random_range(0..c as u16));
        let truth = Array2::from_shape_fn((8, 8), |_| rng.random_range(0..c as u16));
        worst = worst.max((dice_score(&pred, &truth, c).unwrap() - brute_dice(&pred, &truth, c)).abs());
    }
    let a = Array2::from_shape_fn((8, 8), |(y, x)| ((y + x) % 3) as u16);
    let identity = dice_score(&a, &a, 3).unwrap();
    let disjoint = dice_score(&Array2::zeros((8, 8)), &Array2::from_elem((8, 8), 1u16), 2).unwrap();
    outcome(worst <= 1e-12 && identity == 1.0 && disjoint == 0.0, format!("max deviation {worst:.1e}, identity {identity}, disjoint {disjoint}"))
}

// 7-11 share two full runs of the desk configuration.

fn desk_config(out: &Path) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    let mut cfg = ExperimentConfig::load(&path).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

struct Run {
    cfg: ExperimentConfig,
    report: RunReport,
}

impl Run {
    fn layout(&self) -> Layout {
        Layout::new(&self.cfg.output_dir)
    }

    fn attack_name(&self) -> String {
        self.cfg.attacks()[0].name()
    }

    fn auc(&self, detector: &str) -> f64 {
        let row = self.report.evaluation.auc[0].rows.iter().find(|r| r.detector == detector).unwrap();
        row.average()
    }

    fn row(&self, detector: &str, reformer: &str) -> &GridRow {
        self.report.evaluation.grid.rows.iter().find(|r| r.detector == detector && r.reformer == reformer && r.segmenter == "UNet").unwrap()
    }
}

fn run_desk(dir: &Path) -> Run {
    let cfg = desk_config(dir);
    let started = std::time::Instant::now();
    let report = cmd_all(&cfg).unwrap();
    println!("desk run in {} took {:.0} s", dir.display(), started.elapsed().as_secs_f64());
    Run { cfg, report }
}

fn criterion_attack(run: &Run) -> Outcome {
    let layout = run.layout();
    let test = load_dataset(&layout.manifest("test")).unwrap();
    let unet = load_segmenter(&layout.model(Role::Segmenter, "UNet")).unwrap();
    let adv = load_adversarial_set(&layout.attack_manifest(&run.attack_name()), &test).unwrap();
    let clean = undefended_dice(&unet, &test).unwrap();
    let attacked = undefended_dice(&unet, &adv.model_dataset("UNet").unwrap()).unwrap();
    let in_budget = adv.samples.iter().filter(|s| s.within_budget()).count();
    let ratio = attacked / clean;
    outcome(
        ratio <= 0.6 && in_budget == adv.len(),
        format!("clean Dice {clean:.3}, attacked {attacked:.3}, ratio {ratio:.3}; {in_budget}/{} within budget", adv.len()),
    )
}

fn criterion_spectrum(run: &Run) -> Outcome {
    let layout = run.layout();
    let test = load_dataset(&layout.manifest("test")).unwrap();
    let adv = load_adversarial_set(&layout.attack_manifest(&run.attack_name()), &test).unwrap();
    let wins = adv
        .samples
        .iter()
        .filter(|s| high_frequency_log_magnitude(&s.adversarial_image).unwrap() > high_frequency_log_magnitude(&s.clean.image).unwrap())
        .count();
    let frac = wins as f64 / adv.len() as f64;
    outcome(frac >= 0.8, format!("{wins}/{} pairs gain high-frequency magnitude ({frac:.2})", adv.len()))
}

fn criterion_ordering(run: &Run) -> Outcome {
    let shifted = run.auc("UNet_shiftFrequency");
    let unshifted = run.auc("UNet_frequency");
    let ae = run.auc("Autoencoder I");
    outcome(
        shifted > unshifted && shifted > ae && shifted >= 0.85,
        format!("AUC shifted {shifted:.4}, unshifted {unshifted:.4}, Autoencoder I {ae:.4}"),
    )
}

fn criterion_pipeline(run: &Run) -> Outcome {
    let defended = run.row("UNet_shiftFrequency", "UNet");
    let baseline = run.row("none", "none");
    // Dice is averaged over passed inputs only, so it is NaN when the
    // detector rejects every adversarial input and the comparison fails.
    let gain = defended.adversarial_dice > baseline.adversarial_dice;
    let clean_gap = (defended.clean_dice - baseline.clean_dice).abs();
    outcome(
        gain && clean_gap <= 0.05 && defended.clean_pass_rate >= 0.90,
        format!(
            "adversarial Dice {:.3} (passed {:.2}) vs undefended {:.3}; clean Dice {:.3} vs {:.3}; clean pass rate {:.2}",
            defended.adversarial_dice,
            defended.adversarial_pass_rate,
            baseline.adversarial_dice,
            defended.clean_dice,
            baseline.clean_dice,
            defended.clean_pass_rate
        ),
    )
}

fn tree_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn close(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || (a - b).abs() <= 0.02
}

fn criterion_determinism(a: &Run, b: &Run) -> Outcome {
    let (la, lb) = (a.layout(), b.layout());
    let data_same = tree_bytes(&la.data_dir()) == tree_bytes(&lb.data_dir());
    let attack_same = tree_bytes(&la.attack_dir(&a.attack_name())) == tree_bytes(&lb.attack_dir(&b.attack_name()));
    let mut metrics_close = a.report.evaluation.grid.rows.len() == b.report.evaluation.grid.rows.len();
    for (x, y) in a.report.evaluation.grid.rows.iter().zip(&b.report.evaluation.grid.rows) {
        metrics_close &= x.combination == y.combination
            && close(x.adversarial_dice, y.adversarial_dice)
            && close(x.adversarial_pass_rate, y.adversarial_pass_rate)
            && close(x.clean_dice, y.clean_dice)
            && close(x.clean_pass_rate, y.clean_pass_rate);
    }
    for (x, y) in a.report.evaluation.auc[0].rows.iter().zip(&b.report.evaluation.auc[0].rows) {
        metrics_close &= close(x.average(), y.average());
    }
    outcome(
        data_same && attack_same && metrics_close,
        format!("prepare identical: {data_same}, attack identical: {attack_same}, metrics within 0.02: {metrics_close}"),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "DFT correctness", criterion_dft()),
        (2, "shift correctness", criterion_shift()),
        (3, "loss and gradient", criterion_loss()),
        (4, "threshold calibration oracle", criterion_calibration()),
        (5, "ROC-AUC oracle", criterion_auc()),
        (6, "Dice oracle", criterion_dice()),
    ];
    let tmp = tempfile::tempdir().unwrap();
    let first = run_desk(&tmp.path().join("first"));
    results.push((7, "attack effectiveness", criterion_attack(&first)));
    results.push((8, "high-frequency signature", criterion_spectrum(&first)));
    results.push((9, "detector AUC ordering", criterion_ordering(&first)));
    results.push((10, "defended pipeline trend", criterion_pipeline(&first)));
    let second = run_desk(&tmp.path().join("second"));
    results.push((11, "determinism", criterion_determinism(&first, &second)));

    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n:>2} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {}/{} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
