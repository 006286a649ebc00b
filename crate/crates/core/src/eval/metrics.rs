//! Classification metrics: accuracy, AUROC (pairwise concordance with half
//! credit for ties), and the Matthews correlation coefficient.

use super::EvalError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn from_predictions(preds: &[u8], labels: &[u8]) -> Result<Confusion, EvalError> {
        if preds.len() != labels.len() {
            return Err(EvalError::Domain(format!(
                "{} predictions for {} labels",
                preds.len(),
                labels.len()
            )));
        }
        let mut c = Confusion::default();
        for (&p, &y) in preds.iter().zip(labels) {
            match (p, y) {
                (1, 1) => c.tp += 1,
                (0, 0) => c.tn += 1,
                (1, 0) => c.fp += 1,
                (0, 1) => c.fn_ += 1,
                _ => return Err(EvalError::Domain("labels must be 0/1".into())),
            }
        }
        Ok(c)
    }
}

pub fn accuracy(preds: &[u8], labels: &[u8]) -> Result<f64, EvalError> {
    let c = Confusion::from_predictions(preds, labels)?;
    let total = c.tp + c.tn + c.fp + c.fn_;
    if total == 0 {
        return Err(EvalError::UndefinedMetric("no samples".into()));
    }
    Ok((c.tp + c.tn) as f64 / total as f64)
}

/// Pairwise concordance probability with ties counted half, computed via
/// average ranks (identical to the trapezoidal ROC area).
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::Domain(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::UndefinedMetric(
            "AUROC needs both classes".into(),
        ));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(EvalError::Domain("labels must be 0/1".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Average ranks over tie groups (1-based ranks).
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let n_pos_f = n_pos as f64;
    Ok((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// (tp*tn - fp*fn) / sqrt((tp+fp)(tp+fn)(tn+fp)(tn+fn)); zero when any
/// factor of the denominator vanishes.
pub fn mcc(c: Confusion) -> f64 {
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let denom_sq = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom_sq == 0.0 {
        return 0.0;
    }
    (tp * tn - fp * fn_) / denom_sq.sqrt()
}
