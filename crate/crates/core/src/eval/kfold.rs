//! Stratified k-fold assignment: within each class, shuffled indices deal
//! round-robin into folds, so every sample validates exactly once and each
//! fold mirrors the class ratio within one sample.

use crate::diff::CounterRng;

use super::EvalError;

pub fn kfold_split(labels: &[u8], folds: usize, seed: u64) -> Result<Vec<usize>, EvalError> {
    if folds < 2 {
        return Err(EvalError::Stratification(format!("{folds} folds")));
    }
    let root = CounterRng::new(seed).derive_str("kfold");
    let mut assignment = vec![usize::MAX; labels.len()];
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < folds {
            return Err(EvalError::Stratification(format!(
                "class {class} has {} samples for {folds} folds",
                idx.len()
            )));
        }
        let mut rng = root.derive(class as u64);
        rng.shuffle(&mut idx);
        for (pos, i) in idx.into_iter().enumerate() {
            assignment[i] = pos % folds;
        }
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(EvalError::Domain("labels must be 0/1".into()));
    }
    Ok(assignment)
}
