use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use super::SignalError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Wave {
    P,
    Q,
    R,
    S,
    T,
}

pub const WAVES: [Wave; 5] = [Wave::P, Wave::Q, Wave::R, Wave::S, Wave::T];

impl fmt::Display for Wave {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Wave::P => "P",
            Wave::Q => "Q",
            Wave::R => "R",
            Wave::S => "S",
            Wave::T => "T",
        };
        f.write_str(s)
    }
}

/// Inclusive sample-index window around one wave of one beat.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WaveWindow {
    pub wave: Wave,
    pub center: usize,
    pub start: usize,
    pub end: usize,
}

/// Per beat: one window per wave, ordered P, Q, R, S, T.
pub type BeatWindows = [WaveWindow; 5];

/// Wave windows per lead and beat.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WaveSegments {
    pub per_lead: BTreeMap<String, Vec<BeatWindows>>,
}

impl WaveSegments {
    /// Checks the structural invariants: windows inside `[0, len)`, wave
    /// centers ordered P < Q < R < S < T within a beat, and windows within a
    /// lead non-overlapping.
    pub fn validate(&self, len: usize) -> Result<(), SignalError> {
        for (lead, beats) in &self.per_lead {
            let mut prev_end: Option<usize> = None;
            for (b, beat) in beats.iter().enumerate() {
                for (w, win) in beat.iter().enumerate() {
                    if win.wave != WAVES[w] {
                        return Err(SignalError::Spec(format!(
                            "{lead} beat {b}: wave order broken"
                        )));
                    }
                    if win.start > win.end || win.end >= len || win.center < win.start
                        || win.center > win.end
                    {
                        return Err(SignalError::Spec(format!(
                            "{lead} beat {b} {}: window [{}, {}] center {} out of range",
                            win.wave, win.start, win.end, win.center
                        )));
                    }
                    if w > 0 && beat[w - 1].center >= win.center {
                        return Err(SignalError::Spec(format!(
                            "{lead} beat {b}: centers not increasing at {}",
                            win.wave
                        )));
                    }
                    if let Some(pe) = prev_end {
                        if win.start <= pe {
                            return Err(SignalError::Spec(format!(
                                "{lead} beat {b} {}: window overlaps previous",
                                win.wave
                            )));
                        }
                    }
                    prev_end = Some(win.end);
                }
            }
        }
        Ok(())
    }

    /// Union of windows for one wave of one lead.
    pub fn windows_for(&self, lead: &str, wave: Wave) -> Vec<(usize, usize)> {
        self.per_lead
            .get(lead)
            .map(|beats| {
                beats
                    .iter()
                    .flat_map(|b| b.iter())
                    .filter(|w| w.wave == wave)
                    .map(|w| (w.start, w.end))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn num_beats(&self, lead: &str) -> usize {
        self.per_lead.get(lead).map(|b| b.len()).unwrap_or(0)
    }
}

/// Tab-separated export: record_id, lead, beat, wave, start, end.
pub fn write_segments(
    segments: &WaveSegments,
    record_id: &str,
    path: &Path,
) -> Result<(), SignalError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "record_id\tlead\tbeat\twave\tstart\tend")?;
    for (lead, beats) in &segments.per_lead {
        for (b, beat) in beats.iter().enumerate() {
            for win in beat {
                writeln!(
                    w,
                    "{record_id}\t{lead}\t{b}\t{}\t{}\t{}",
                    win.wave, win.start, win.end
                )?;
            }
        }
    }
    Ok(())
}
