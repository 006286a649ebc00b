//! Synthetic multi-lead ECG generator.
//!
//! Each beat is a sum of five Gaussian bumps (P, Q, R, S, T) at fixed
//! offsets around the R center, scaled per lead. An optional class effect
//! rescales one wave of one lead for class-1 records, planting a learnable
//! binary signal. Ground-truth wave windows are returned alongside.

use crate::diff::CounterRng;

use super::record::EcgRecord;
use super::segments::{BeatWindows, Wave, WaveSegments, WaveWindow, WAVES};
use super::SignalError;

/// Canonical wave offsets/widths/amplitudes relative to the R center, in
/// seconds at a resting beat period of at least 0.6 s; compressed
/// proportionally for faster rhythms so beats never collide.
const WAVE_OFFSET_S: [f64; 5] = [-0.180, -0.040, 0.0, 0.040, 0.280];
const WAVE_SIGMA_S: [f64; 5] = [0.030, 0.010, 0.012, 0.010, 0.045];
const WAVE_AMPLITUDE: [f64; 5] = [0.15, -0.12, 1.0, -0.25, 0.35];

/// Half-width of a ground-truth wave window, seconds.
pub const WINDOW_HALF_S: f64 = 0.040;

/// Multiplies one wave's amplitude in one lead by `1 + scale` for class-1
/// records.
#[derive(Clone, Debug)]
pub struct ClassEffect {
    pub lead: String,
    pub wave: Wave,
    pub scale: f64,
}

#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub heart_rate_bpm: f64,
    /// (lead name, overall amplitude scale) per generated lead.
    pub lead_scales: Vec<(String, f64)>,
    pub noise_std: f64,
    pub class_effect: Option<ClassEffect>,
    /// Binary class of this record; the class effect applies when 1.
    pub label: i32,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<(), SignalError> {
        let total = self.duration_s * self.sample_rate_hz;
        if total <= 0.0 || (total.round() - total).abs() > 1e-9 {
            return Err(SignalError::Spec(format!(
                "duration * rate = {total} is not a whole sample count"
            )));
        }
        if (total.round() as usize) % 8 != 0 {
            return Err(SignalError::Spec(format!(
                "sample count {total} not divisible by 8"
            )));
        }
        if !(30.0..=200.0).contains(&self.heart_rate_bpm) {
            return Err(SignalError::Spec(format!(
                "heart rate {} outside [30, 200]",
                self.heart_rate_bpm
            )));
        }
        if self.lead_scales.is_empty() {
            return Err(SignalError::Spec("no leads requested".into()));
        }
        if self.noise_std < 0.0 {
            return Err(SignalError::Spec("negative noise std".into()));
        }
        if !matches!(self.label, 0 | 1) {
            return Err(SignalError::Spec(format!("label {} not binary", self.label)));
        }
        Ok(())
    }
}

/// Beat period and R centers; centers are placed so the beat count is
/// exactly `round(heart_rate * duration / 60)`.
fn beat_centers_s(spec: &SynthSpec) -> (f64, Vec<f64>) {
    let n_beats = (spec.heart_rate_bpm * spec.duration_s / 60.0).round().max(1.0);
    let period = spec.duration_s / n_beats;
    let centers = (0..n_beats as usize)
        .map(|k| (k as f64 + 0.5) * period)
        .collect();
    (period, centers)
}

pub fn synthesize_record(spec: &SynthSpec) -> Result<(EcgRecord, WaveSegments), SignalError> {
    spec.validate()?;
    let len = (spec.duration_s * spec.sample_rate_hz).round() as usize;
    let rate = spec.sample_rate_hz;
    let (period, centers) = beat_centers_s(spec);
    let squeeze = (period / 0.6).min(1.0);

    let rng = CounterRng::new(spec.seed);
    let mut leads = Vec::with_capacity(spec.lead_scales.len());
    for (lead_name, lead_scale) in &spec.lead_scales {
        let mut samples = vec![0.0f64; len];
        for &center in &centers {
            for w in 0..5 {
                let mut amp = WAVE_AMPLITUDE[w] * lead_scale;
                if spec.label == 1 {
                    if let Some(effect) = &spec.class_effect {
                        if effect.lead == *lead_name && effect.wave == WAVES[w] {
                            amp *= 1.0 + effect.scale;
                        }
                    }
                }
                let mu = center + WAVE_OFFSET_S[w] * squeeze;
                let sigma = WAVE_SIGMA_S[w] * squeeze;
                // Only evaluate within 4 sigma of the bump.
                let lo = (((mu - 4.0 * sigma) * rate).floor().max(0.0)) as usize;
                let hi = ((((mu + 4.0 * sigma) * rate).ceil()) as usize).min(len - 1);
                for (i, v) in samples.iter_mut().enumerate().take(hi + 1).skip(lo) {
                    let t = i as f64 / rate;
                    let z = (t - mu) / sigma;
                    *v += amp * (-0.5 * z * z).exp();
                }
            }
        }
        if spec.noise_std > 0.0 {
            let mut noise = rng.derive_str(lead_name);
            for v in &mut samples {
                *v += spec.noise_std * noise.standard_normal();
            }
        }
        leads.push(samples);
    }

    let record = EcgRecord::new(
        format!("synth-{}", spec.seed),
        rate,
        spec.lead_scales.iter().map(|(n, _)| n.clone()).collect(),
        leads,
    )?
    .with_label(spec.label);

    // Ground-truth windows share the generator's timing in every lead.
    let beats = truth_windows(&centers, squeeze, rate, len);
    let mut segments = WaveSegments::default();
    for (lead_name, _) in &spec.lead_scales {
        segments.per_lead.insert(lead_name.clone(), beats.clone());
    }
    segments.validate(len)?;
    Ok((record, segments))
}

fn truth_windows(centers: &[f64], squeeze: f64, rate: f64, len: usize) -> Vec<BeatWindows> {
    let mut beats = Vec::with_capacity(centers.len());
    for &center in centers {
        let wave_centers: Vec<usize> = WAVE_OFFSET_S
            .iter()
            .map(|off| {
                (((center + off * squeeze) * rate).round() as isize).clamp(0, len as isize - 1)
                    as usize
            })
            .collect();
        beats.push(clip_windows(&wave_centers, (WINDOW_HALF_S * squeeze * rate) as usize, len));
    }
    // Neighboring beats: clip T against the next beat's P.
    for b in 1..beats.len() {
        let prev_t_end = beats[b - 1][4].end;
        let p = &mut beats[b][0];
        if p.start <= prev_t_end {
            p.start = prev_t_end + 1;
        }
    }
    beats
}

/// Symmetric windows around the wave centers, clipped to midpoints between
/// neighbors so windows never overlap, and to the record bounds.
pub(crate) fn clip_windows(wave_centers: &[usize], half: usize, len: usize) -> BeatWindows {
    let mut out = [WaveWindow {
        wave: Wave::P,
        center: 0,
        start: 0,
        end: 0,
    }; 5];
    for w in 0..5 {
        let c = wave_centers[w];
        let mut start = c.saturating_sub(half);
        let mut end = (c + half).min(len - 1);
        if w > 0 {
            let mid = (wave_centers[w - 1] + c) / 2;
            start = start.max(mid + 1);
        }
        if w < 4 {
            let mid = (c + wave_centers[w + 1]).div_ceil(2);
            end = end.min(mid.saturating_sub(1));
        }
        out[w] = WaveWindow {
            wave: WAVES[w],
            center: c,
            start: start.min(c),
            end: end.max(c),
        };
    }
    out
}

/// Whole-corpus generation: balanced binary labels (exact counts,
/// shuffled), per-record heart rates, optional two-way group tags, and the
/// class effect applied to class-1 records.
#[derive(Clone, Debug)]
pub struct CorpusSpec {
    pub n: usize,
    /// Samples per lead; must be a multiple of 8.
    pub length: usize,
    pub sample_rate_hz: f64,
    pub lead_scales: Vec<(String, f64)>,
    pub noise_std: f64,
    pub class_effect: Option<ClassEffect>,
    /// Fraction of class-1 records (exact count, rounded).
    pub class_balance: f64,
    pub heart_rate_range: (f64, f64),
    /// Two tags split evenly across records when present.
    pub group_tags: Option<(String, String)>,
    pub seed: u64,
}

impl CorpusSpec {
    pub fn balanced(n: usize, length: usize, sample_rate_hz: f64, seed: u64) -> CorpusSpec {
        CorpusSpec {
            n,
            length,
            sample_rate_hz,
            lead_scales: default_lead_scales(12),
            noise_std: 0.05,
            class_effect: Some(ClassEffect {
                lead: "II".into(),
                wave: Wave::S,
                scale: DEFAULT_CLASS_EFFECT,
            }),
            class_balance: 0.5,
            heart_rate_range: (55.0, 85.0),
            group_tags: Some(("A".into(), "B".into())),
            seed,
        }
    }
}

/// Default S-wave deepening factor for the planted binary task.
pub const DEFAULT_CLASS_EFFECT: f64 = 0.8;

/// Positive per-lead amplitude scales for the first `n` standard leads.
pub fn default_lead_scales(n: usize) -> Vec<(String, f64)> {
    const SCALES: [f64; 12] = [0.9, 1.1, 0.5, 0.7, 0.45, 0.8, 0.6, 1.3, 1.25, 1.2, 1.0, 0.85];
    crate::signal::record::LEADS_12
        .iter()
        .take(n)
        .zip(SCALES)
        .map(|(name, s)| (name.to_string(), s))
        .collect()
}

pub fn synthesize_corpus(
    spec: &CorpusSpec,
) -> Result<Vec<(EcgRecord, WaveSegments)>, SignalError> {
    if spec.n == 0 {
        return Err(SignalError::Spec("empty corpus requested".into()));
    }
    if !(0.0..=1.0).contains(&spec.class_balance) {
        return Err(SignalError::Spec(format!(
            "class balance {} outside [0, 1]",
            spec.class_balance
        )));
    }
    let root = CounterRng::new(spec.seed);
    let n_pos = (spec.class_balance * spec.n as f64).round() as usize;
    let mut labels: Vec<i32> = (0..spec.n).map(|i| i32::from(i < n_pos)).collect();
    root.derive_str("labels").shuffle(&mut labels);
    let mut groups: Vec<usize> = (0..spec.n).map(|i| i % 2).collect();
    root.derive_str("groups").shuffle(&mut groups);

    let duration_s = spec.length as f64 / spec.sample_rate_hz;
    let width = spec.n.to_string().len().max(3);
    let mut out = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let mut hr_rng = root.derive_str("hr").derive(i as u64);
        let heart_rate = hr_rng.uniform_in(spec.heart_rate_range.0, spec.heart_rate_range.1);
        let record_spec = SynthSpec {
            duration_s,
            sample_rate_hz: spec.sample_rate_hz,
            heart_rate_bpm: heart_rate,
            lead_scales: spec.lead_scales.clone(),
            noise_std: spec.noise_std,
            class_effect: spec.class_effect.clone(),
            label: labels[i],
            seed: root.derive_str("record").derive(i as u64).next_key(),
        };
        let (mut record, segments) = synthesize_record(&record_spec)?;
        record.record_id = format!("synth-{i:0width$}");
        if let Some((a, b)) = &spec.group_tags {
            record.group_tag = Some(if groups[i] == 0 { a.clone() } else { b.clone() });
        }
        out.push((record, segments));
    }
    Ok(out)
}
