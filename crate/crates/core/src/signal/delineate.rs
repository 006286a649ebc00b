//! P/Q/R/S/T delineation on preprocessed (filtered, standardized) records.
//!
//! R peaks come from a squared-derivative energy detector with an adaptive
//! threshold of half the rolling 2 s maximum. Q and S are the nearest local
//! minima within 60 ms of R; P is the maximum in the 200-60 ms span before
//! Q; T is the maximum 80-400 ms after S. Wave windows are +-40 ms around
//! each center, clipped so they never overlap.

use super::record::EcgRecord;
use super::segments::{BeatWindows, WaveSegments};
use super::synth::clip_windows;
use super::SignalError;

const ENERGY_WINDOW_S: f64 = 0.120;
const ROLLING_MAX_S: f64 = 2.0;
const REFRACTORY_S: f64 = 0.250;
const QS_SPAN_S: f64 = 0.060;
const P_NEAR_S: f64 = 0.060;
const P_FAR_S: f64 = 0.200;
const T_NEAR_S: f64 = 0.080;
const T_FAR_S: f64 = 0.400;
const WINDOW_HALF_S: f64 = 0.040;
const ENERGY_FLOOR: f64 = 1e-9;

pub fn delineate(record: &EcgRecord) -> Result<WaveSegments, SignalError> {
    let mut segments = WaveSegments::default();
    for (i, name) in record.lead_names.iter().enumerate() {
        let beats = delineate_lead(record.lead(i), record.sample_rate_hz)?;
        segments.per_lead.insert(name.clone(), beats);
    }
    segments.validate(record.len())?;
    Ok(segments)
}

pub fn delineate_lead(x: &[f64], rate: f64) -> Result<Vec<BeatWindows>, SignalError> {
    let r_peaks = detect_r_peaks(x, rate)?;
    let half = (WINDOW_HALF_S * rate) as usize;
    let mut beats: Vec<BeatWindows> = Vec::with_capacity(r_peaks.len());
    for &r in &r_peaks {
        let Some(centers) = wave_centers(x, rate, r) else {
            continue;
        };
        // Ordering is structural; skip beats where a search window collapsed.
        if centers.windows(2).any(|w| w[0] >= w[1]) {
            continue;
        }
        beats.push(clip_windows(&centers, half, x.len()));
    }
    // Clip T of one beat against P of the next.
    for b in 1..beats.len() {
        let prev_t = beats[b - 1][4];
        let p = &mut beats[b][0];
        if p.start <= prev_t.end {
            if prev_t.end + 1 > p.center {
                // Collapsed inter-beat gap; drop by marking and filtering below.
                p.start = p.center;
            } else {
                p.start = prev_t.end + 1;
            }
        }
    }
    if beats.is_empty() {
        return Err(SignalError::DelineationFailure(
            "no beats survived delineation".into(),
        ));
    }
    Ok(beats)
}

/// Squared-derivative energy with moving-average smoothing and an adaptive
/// threshold of `0.5 * rolling max over 2 s`.
fn detect_r_peaks(x: &[f64], rate: f64) -> Result<Vec<usize>, SignalError> {
    let n = x.len();
    if n < 8 {
        return Err(SignalError::DelineationFailure("signal too short".into()));
    }
    let mut energy = vec![0.0f64; n];
    for i in 1..n - 1 {
        let d = (x[i + 1] - x[i - 1]) * 0.5;
        energy[i] = d * d;
    }
    let smooth_w = ((ENERGY_WINDOW_S * rate) as usize).max(1);
    let energy = moving_average(&energy, smooth_w);

    let peak = energy.iter().cloned().fold(0.0, f64::max);
    if peak <= ENERGY_FLOOR {
        return Err(SignalError::DelineationFailure(
            "no derivative energy above floor".into(),
        ));
    }

    let max_w = ((ROLLING_MAX_S * rate) as usize).max(1);
    let rolling = centered_rolling_max(&energy, max_w);

    // Contiguous supra-threshold regions become R candidates.
    let mut candidates: Vec<usize> = Vec::new();
    let search = (WINDOW_HALF_S * rate) as usize;
    let mut i = 0;
    while i < n {
        if energy[i] >= 0.5 * rolling[i] && energy[i] > ENERGY_FLOOR {
            let start = i;
            while i < n && energy[i] >= 0.5 * rolling[i] && energy[i] > ENERGY_FLOOR {
                i += 1;
            }
            let end = i - 1;
            // R is the signal maximum around the energy burst.
            let lo = start.saturating_sub(search);
            let hi = (end + search).min(n - 1);
            let r = argmax(&x[lo..=hi]) + lo;
            candidates.push(r);
        } else {
            i += 1;
        }
    }
    if candidates.is_empty() {
        return Err(SignalError::DelineationFailure("no R peaks found".into()));
    }

    // Refractory merge: peaks closer than 250 ms keep the taller one.
    let refractory = (REFRACTORY_S * rate) as usize;
    let mut peaks: Vec<usize> = Vec::with_capacity(candidates.len());
    for r in candidates {
        match peaks.last() {
            Some(&prev) if r.saturating_sub(prev) < refractory => {
                if x[r] > x[prev] {
                    *peaks.last_mut().expect("nonempty") = r;
                }
            }
            _ => peaks.push(r),
        }
    }
    Ok(peaks)
}

/// P, Q, R, S, T centers for one beat, or None when a search span is empty.
fn wave_centers(x: &[f64], rate: f64, r: usize) -> Option<Vec<usize>> {
    let n = x.len();
    let qs = (QS_SPAN_S * rate) as usize;

    let q_lo = r.saturating_sub(qs);
    let q = nearest_local_min(x, q_lo, r.checked_sub(1)?, r)?;

    let s_hi = (r + qs).min(n - 1);
    let s = nearest_local_min(x, r + 1, s_hi, r)?;

    let p_hi = q.checked_sub((P_NEAR_S * rate) as usize)?;
    let p_lo = q.saturating_sub((P_FAR_S * rate) as usize);
    if p_lo >= p_hi {
        return None;
    }
    let p = argmax(&x[p_lo..=p_hi]) + p_lo;

    let t_lo = s + (T_NEAR_S * rate) as usize;
    let t_hi = (s + (T_FAR_S * rate) as usize).min(n - 1);
    if t_lo >= t_hi {
        return None;
    }
    let t = argmax(&x[t_lo..=t_hi]) + t_lo;

    Some(vec![p, q, r, s, t])
}

/// Local minimum nearest to `anchor` in `[lo, hi]`; falls back to the
/// span's argmin when no interior local minimum exists.
fn nearest_local_min(x: &[f64], lo: usize, hi: usize, anchor: usize) -> Option<usize> {
    if lo > hi || hi >= x.len() {
        return None;
    }
    let mut best: Option<usize> = None;
    for i in lo.max(1)..=hi.min(x.len() - 2) {
        if x[i] <= x[i - 1] && x[i] <= x[i + 1] {
            let better = match best {
                None => true,
                Some(b) => anchor.abs_diff(i) < anchor.abs_diff(b),
            };
            if better {
                best = Some(i);
            }
        }
    }
    best.or_else(|| {
        let off = argmin(&x[lo..=hi]);
        Some(lo + off)
    })
}

fn moving_average(x: &[f64], w: usize) -> Vec<f64> {
    let n = x.len();
    let half = w / 2;
    let mut prefix = vec![0.0f64; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + x[i];
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64
        })
        .collect()
}

/// Max over a centered window, via a monotonic deque in O(n).
fn centered_rolling_max(x: &[f64], w: usize) -> Vec<f64> {
    let n = x.len();
    let half = w / 2;
    let mut out = vec![0.0f64; n];
    let mut deque: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    let mut right = 0usize;
    for i in 0..n {
        let hi = (i + half).min(n - 1);
        while right <= hi {
            while let Some(&back) = deque.back() {
                if x[back] <= x[right] {
                    deque.pop_back();
                } else {
                    break;
                }
            }
            deque.push_back(right);
            right += 1;
        }
        let lo = i.saturating_sub(half);
        while let Some(&front) = deque.front() {
            if front < lo {
                deque.pop_front();
            } else {
                break;
            }
        }
        out[i] = x[*deque.front().expect("window nonempty")];
    }
    out
}

fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if *v > x[best] {
            best = i;
        }
    }
    best
}

fn argmin(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if *v < x[best] {
            best = i;
        }
    }
    best
}
