//! Per-group metric breakdown over out-of-fold predictions. Groups with a
//! single class are flagged rather than scored.

use std::collections::BTreeMap;

use super::metrics::{accuracy, auroc, mcc, Confusion};
use super::EvalError;

#[derive(Clone, Debug)]
pub enum GroupOutcome {
    Scored {
        n: usize,
        accuracy: f64,
        auroc: f64,
        mcc: f64,
    },
    /// One class only; AUROC/MCC are undefined.
    Undefined { n: usize },
}

#[derive(Clone, Debug, Default)]
pub struct SubgroupReport {
    pub groups: BTreeMap<String, GroupOutcome>,
}

/// `groups[i]` tags sample i; untagged samples fall into "(untagged)".
/// The overall row is keyed "(all)".
pub fn subgroup_report(
    scores: &[f64],
    preds: &[u8],
    labels: &[u8],
    groups: &[Option<String>],
) -> Result<SubgroupReport, EvalError> {
    if scores.len() != labels.len() || preds.len() != labels.len() || groups.len() != labels.len()
    {
        return Err(EvalError::Domain("mismatched report inputs".into()));
    }
    if labels.is_empty() {
        return Err(EvalError::Domain("no samples".into()));
    }
    let mut buckets: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    buckets.insert("(all)".into(), (0..labels.len()).collect());
    for (i, g) in groups.iter().enumerate() {
        let key = g.clone().unwrap_or_else(|| "(untagged)".into());
        buckets.entry(key).or_default().push(i);
    }
    let mut out = SubgroupReport::default();
    for (key, idx) in buckets {
        let has_both =
            idx.iter().any(|&i| labels[i] == 0) && idx.iter().any(|&i| labels[i] == 1);
        let outcome = if !has_both {
            GroupOutcome::Undefined { n: idx.len() }
        } else {
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let p: Vec<u8> = idx.iter().map(|&i| preds[i]).collect();
            let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            GroupOutcome::Scored {
                n: idx.len(),
                accuracy: accuracy(&p, &y)?,
                auroc: auroc(&s, &y)?,
                mcc: mcc(Confusion::from_predictions(&p, &y)?),
            }
        };
        out.groups.insert(key, outcome);
    }
    Ok(out)
}

impl SubgroupReport {
    pub fn to_text(&self) -> String {
        let mut out = String::from("group\tn\taccuracy\tauroc\tmcc\n");
        for (key, outcome) in &self.groups {
            match outcome {
                GroupOutcome::Scored {
                    n,
                    accuracy,
                    auroc,
                    mcc,
                } => out.push_str(&format!(
                    "{key}\t{n}\t{accuracy:.6}\t{auroc:.6}\t{mcc:.6}\n"
                )),
                GroupOutcome::Undefined { n } => {
                    out.push_str(&format!("{key}\t{n}\tundefined\tundefined\tundefined\n"))
                }
            }
        }
        out
    }
}
