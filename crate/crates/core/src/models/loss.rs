//! Weighted multi-class logistic loss combined with a soft Dice term.
//!
//! `L = -(1/N) sum_x w(x) log p_{l(x)}(x) - sum_l 2 sum_x p_l g_l / (sum_x p_l^2 + sum_x g_l^2)`
//! where `g` is the one-hot label map and `w(x)` the weight of the pixel's class.

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

/// Probabilities are clamped below at this value before the logarithm.
pub const PROB_FLOOR: f64 = 1e-7;

fn check(probs: &Array3<f64>, labels: &Array2<u16>, class_weights: &[f64]) -> Result<()> {
    let (h, w, c) = probs.dim();
    if class_weights.len() != c {
        return Err(Error::Config(format!("{} class weights for {c} classes", class_weights.len())));
    }
    if labels.dim() != (h, w) {
        return Err(Error::Shape(format!("labels {:?} vs probabilities {:?}", labels.dim(), (h, w))));
    }
    if let Some(l) = labels.iter().find(|&&l| l as usize >= c) {
        return Err(Error::Parameter(format!("label {l} out of range for {c} classes")));
    }
    Ok(())
}

struct Terms {
    logistic: f64,
    dice: f64,
    /// Per class: (sum p g, sum p^2 + sum g^2).
    per_class: Vec<(f64, f64)>,
}

fn terms(probs: &Array3<f64>, labels: &Array2<u16>, class_weights: &[f64]) -> Terms {
    let (h, w, c) = probs.dim();
    let n = (h * w) as f64;
    let mut logistic = 0.0;
    let mut per_class = vec![(0.0, 0.0); c];
    for ((y, x), &l) in labels.indexed_iter() {
        let l = l as usize;
        logistic -= class_weights[l] * probs[(y, x, l)].max(PROB_FLOOR).ln();
        for (k, pc) in per_class.iter_mut().enumerate() {
            let p = probs[(y, x, k)];
            pc.1 += p * p;
            if k == l {
                pc.0 += p;
                pc.1 += 1.0;
            }
        }
    }
    let dice = per_class.iter().map(|&(a, b)| if b > 0.0 { 2.0 * a / b } else { 0.0 }).sum();
    Terms { logistic: logistic / n, dice, per_class }
}

pub fn segmentation_loss(probs: &Array3<f64>, labels: &Array2<u16>, class_weights: &[f64]) -> Result<f64> {
    check(probs, labels, class_weights)?;
    let t = terms(probs, labels, class_weights);
    Ok(t.logistic - t.dice)
}

/// Loss and its gradient with respect to every probability.
pub fn segmentation_loss_grad(probs: &Array3<f64>, labels: &Array2<u16>, class_weights: &[f64]) -> Result<(f64, Array3<f64>)> {
    check(probs, labels, class_weights)?;
    let t = terms(probs, labels, class_weights);
    let (h, w, c) = probs.dim();
    let n = (h * w) as f64;
    let mut grad = Array3::zeros((h, w, c));
    for ((y, x), &l) in labels.indexed_iter() {
        let l = l as usize;
        for k in 0..c {
            let p = probs[(y, x, k)];
            let g = if k == l { 1.0 } else { 0.0 };
            let (a, b) = t.per_class[k];
            let mut d = 0.0;
            if b > 0.0 {
                d -= 2.0 * g / b - 4.0 * a * p / (b * b);
            }
            if k == l && p > PROB_FLOOR {
                d -= class_weights[l] / (n * p);
            }
            grad[(y, x, k)] = d;
        }
    }
    Ok((t.logistic - t.dice, grad))
}

/// `w_c = N / (C * N_c)`; classes never seen get weight 1.
pub fn inverse_frequency_weights(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    let c = counts.len() as f64;
    counts
        .iter()
        .map(|&n| if n == 0 { 1.0 } else { total as f64 / (c * n as f64) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_hot(labels: &Array2<u16>, c: usize) -> Array3<f64> {
        let (h, w) = labels.dim();
        Array3::from_shape_fn((h, w, c), |(y, x, k)| if labels[(y, x)] as usize == k { 1.0 } else { 0.0 })
    }

    #[test]
    fn perfect_prediction_scores_minus_c() {
        let labels = Array2::from_shape_fn((4, 6), |(y, x)| ((x + 2 * y) % 3) as u16);
        let l = segmentation_loss(&one_hot(&labels, 3), &labels, &[1.0; 3]).unwrap();
        assert!((l + 3.0).abs() < 1e-5);
    }

    #[test]
    fn uniform_binary_prediction_closed_form() {
        let labels = Array2::from_shape_fn((4, 4), |(_, x)| (x % 2) as u16);
        let probs = Array3::from_elem((4, 4, 2), 0.5);
        let l = segmentation_loss(&probs, &labels, &[1.0, 1.0]).unwrap();
        let expected = std::f64::consts::LN_2 - 4.0 / 3.0;
        assert!((l - expected).abs() < 1e-12);
    }

    #[test]
    fn weights_scale_only_the_logistic_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let labels = Array2::from_shape_fn((5, 5), |_| rng.random_range(0..3u16));
        let mut probs = Array3::from_shape_fn((5, 5, 3), |_| rng.random_range(0.05..1.0));
        let sums = probs.sum_axis(ndarray::Axis(2));
        probs.indexed_iter_mut().for_each(|((y, x, _), p)| *p /= sums[(y, x)]);
        let w = [0.5, 1.5, 2.0];
        let w2 = [1.0, 3.0, 4.0];
        let (t1, t2) = (terms(&probs, &labels, &w), terms(&probs, &labels, &w2));
        assert!((t2.logistic - 2.0 * t1.logistic).abs() < 1e-12);
        assert_eq!(t1.dice, t2.dice);
        let l1 = segmentation_loss(&probs, &labels, &w).unwrap();
        let l2 = segmentation_loss(&probs, &labels, &w2).unwrap();
        assert!((l2 - l1 - t1.logistic).abs() < 1e-12);
    }

    #[test]
    fn wrong_weight_count_is_a_configuration_error() {
        let labels = Array2::zeros((2, 2));
        let probs = Array3::from_elem((2, 2, 2), 0.5);
        assert!(matches!(segmentation_loss(&probs, &labels, &[1.0]), Err(Error::Config(_))));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let labels = Array2::from_shape_fn((4, 4), |_| rng.random_range(0..3u16));
            let probs = Array3::from_shape_fn((4, 4, 3), |_| rng.random_range(0.05..1.0));
            let w: Vec<f64> = (0..3).map(|_| rng.random_range(0.5..2.0)).collect();
            let (_, grad) = segmentation_loss_grad(&probs, &labels, &w).unwrap();
            let h = 1e-4;
            for idx in ndarray::indices((4, 4, 3)) {
                let mut p = probs.clone();
                p[idx] += h;
                let up = segmentation_loss(&p, &labels, &w).unwrap();
                p[idx] -= 2.0 * h;
                let down = segmentation_loss(&p, &labels, &w).unwrap();
                let fd = (up - down) / (2.0 * h);
                assert!((fd - grad[idx]).abs() <= 1e-3 * fd.abs().max(1e-3), "{idx:?}: {fd} vs {}", grad[idx]);
            }
        }
    }

    #[test]
    fn inverse_frequency() {
        let w = inverse_frequency_weights(&[60, 20, 20, 0]);
        assert_eq!(w, vec![100.0 / 240.0, 100.0 / 80.0, 100.0 / 80.0, 1.0]);
    }
}
