//! Segmentation overlap and detector ranking metrics.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Mean per-class Dice `2|P ∩ G| / (|P| + |G|)` over the classes present in
/// either map; classes absent from both are skipped. Two maps with no
/// classes at all (empty) score 1.
pub fn dice_score(pred: &Array2<u16>, truth: &Array2<u16>, num_classes: usize) -> Result<f64> {
    if pred.dim() != truth.dim() {
        return Err(Error::Shape(format!("prediction {:?} vs truth {:?}", pred.dim(), truth.dim())));
    }
    let mut inter = vec![0usize; num_classes];
    let mut p_count = vec![0usize; num_classes];
    let mut t_count = vec![0usize; num_classes];
    for (&p, &t) in pred.iter().zip(truth.iter()) {
        let (p, t) = (p as usize, t as usize);
        if p >= num_classes || t >= num_classes {
            return Err(Error::Parameter(format!("class id {} out of range for {num_classes} classes", p.max(t))));
        }
        p_count[p] += 1;
        t_count[t] += 1;
        if p == t {
            inter[p] += 1;
        }
    }
    let scores: Vec<f64> = (0..num_classes)
        .filter(|&c| p_count[c] + t_count[c] > 0)
        .map(|c| 2.0 * inter[c] as f64 / (p_count[c] + t_count[c]) as f64)
        .collect();
    if scores.is_empty() {
        return Ok(1.0);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Area under the ROC curve via the normalized Mann-Whitney statistic.
/// `flags[i]` marks a positive (adversarial) sample; higher scores are more
/// adversarial; ties count one half.
pub fn roc_auc(scores: &[f64], flags: &[bool]) -> Result<f64> {
    if scores.len() != flags.len() {
        return Err(Error::Shape(format!("{} scores vs {} flags", scores.len(), flags.len())));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!("non-finite score {s}")));
    }
    let n_pos = flags.iter().filter(|&&f| f).count();
    let n_neg = flags.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateInput(format!("need both classes, got {n_pos} positive and {n_neg} negative")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of midranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| flags[k]).count() as f64 * midrank;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}
