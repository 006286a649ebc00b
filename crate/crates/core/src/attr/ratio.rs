//! Attribution-ratio metrics: the share of salient timesteps per lead, and
//! the share of a lead's salient points falling inside each wave's windows.

use std::collections::BTreeMap;

use crate::signal::{BeatWindows, Wave, WAVES};

/// Min-max normalization of signed attribution scores to [0, 1]; a
/// degenerate constant vector maps to all zeros (no point distinguished).
pub fn normalize_minmax(alpha: &[f64]) -> Vec<f64> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in alpha {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi > lo) {
        return vec![0.0; alpha.len()];
    }
    let span = hi - lo;
    alpha.iter().map(|&v| (v - lo) / span).collect()
}

/// Indices with normalized attribution at or above the threshold.
pub fn salient_set(alpha_norm: &[f64], tau: f64) -> Vec<usize> {
    (0..alpha_norm.len())
        .filter(|&i| alpha_norm[i] >= tau)
        .collect()
}

/// Percentage of timesteps that are salient:
/// 100 * |{i : normalized alpha_i >= tau}| / L. Degenerate (constant)
/// attributions score 0.
pub fn lead_ratio(alpha: &[f64], tau: f64) -> f64 {
    if alpha.is_empty() {
        return 0.0;
    }
    let norm = normalize_minmax(alpha);
    if norm.iter().all(|&v| v == 0.0) && alpha.windows(2).all(|w| w[0] == w[1]) {
        return 0.0;
    }
    100.0 * salient_set(&norm, tau).len() as f64 / alpha.len() as f64
}

/// Per-wave share of a lead's salient points. `None` when the salient set
/// is empty (the ratio is undefined for that lead).
pub fn wave_ratios(
    alpha: &[f64],
    beats: &[BeatWindows],
    tau: f64,
) -> Option<BTreeMap<Wave, f64>> {
    let norm = normalize_minmax(alpha);
    let salient = salient_set(&norm, tau);
    if salient.is_empty() || norm.iter().all(|&v| v == 0.0) {
        return None;
    }
    let mut out = BTreeMap::new();
    for wave in WAVES {
        let windows: Vec<(usize, usize)> = beats
            .iter()
            .flat_map(|b| b.iter())
            .filter(|w| w.wave == wave)
            .map(|w| (w.start, w.end))
            .collect();
        let inside = salient
            .iter()
            .filter(|&&i| windows.iter().any(|&(s, e)| i >= s && i <= e))
            .count();
        out.insert(wave, 100.0 * inside as f64 / salient.len() as f64);
    }
    Some(out)
}

/// Default salience threshold.
pub const TAU_DEFAULT: f64 = 0.75;
