//! Corpus-level attribution report: mean and std of the lead-level ratio
//! per lead, and of the per-wave shares within each lead — the data behind
//! nested lead/wave contribution charts.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::eval::FinetunedModel;
use crate::exec;
use crate::signal::{delineate, EcgRecord, Wave, WaveSegments, WAVES};

use super::ig::integrated_gradients;
use super::ratio::{lead_ratio, normalize_minmax, salient_set, wave_ratios};
use super::AttrError;

/// Per-lead attribution of one record with derived salient structure.
#[derive(Clone, Debug)]
pub struct LeadAttribution {
    pub lead: String,
    pub alpha: Vec<f64>,
    pub alpha_norm: Vec<f64>,
    pub salient: Vec<usize>,
    /// Subsets of `salient` inside each wave's windows.
    pub wave_salient: BTreeMap<Wave, Vec<usize>>,
}

#[derive(Clone, Debug)]
pub struct AttributionMap {
    pub record_id: String,
    pub tau: f64,
    pub leads: Vec<LeadAttribution>,
}

/// Attribution map for one record, with wave structure from the provided
/// segments (typically this record's delineation).
pub fn attribution_map(
    model: &FinetunedModel,
    record: &EcgRecord,
    segments: &WaveSegments,
    tau: f64,
    steps: usize,
) -> Result<AttributionMap, AttrError> {
    let alphas = integrated_gradients(model, record, None, steps)?;
    let mut leads = Vec::with_capacity(alphas.len());
    for (lead, alpha) in alphas {
        let alpha_norm = normalize_minmax(&alpha);
        let salient = salient_set(&alpha_norm, tau);
        let mut wave_salient = BTreeMap::new();
        if let Some(beats) = segments.per_lead.get(&lead) {
            for wave in WAVES {
                let windows: Vec<(usize, usize)> = beats
                    .iter()
                    .flat_map(|b| b.iter())
                    .filter(|w| w.wave == wave)
                    .map(|w| (w.start, w.end))
                    .collect();
                wave_salient.insert(
                    wave,
                    salient
                        .iter()
                        .copied()
                        .filter(|&i| windows.iter().any(|&(s, e)| i >= s && i <= e))
                        .collect(),
                );
            }
        }
        leads.push(LeadAttribution {
            lead,
            alpha,
            alpha_norm,
            salient,
            wave_salient,
        });
    }
    Ok(AttributionMap {
        record_id: record.record_id.clone(),
        tau,
        leads,
    })
}

#[derive(Clone, Copy, Debug, Default)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

fn mean_std(values: &[f64]) -> MeanStd {
    if values.is_empty() {
        return MeanStd::default();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MeanStd {
        mean,
        std: var.sqrt(),
        n: values.len(),
    }
}

#[derive(Clone, Debug, Default)]
pub struct AttrReport {
    pub tau: f64,
    pub steps: usize,
    /// Lead-level salient-coverage percentage per lead.
    pub per_lead: BTreeMap<String, MeanStd>,
    /// Within-lead wave shares.
    pub per_wave: BTreeMap<String, BTreeMap<Wave, MeanStd>>,
    /// Records whose salient set was empty for a lead (ratio undefined).
    pub undefined: BTreeMap<String, usize>,
    /// Records skipped because delineation failed.
    pub skipped_records: usize,
}

/// Attribution ratios averaged over a corpus; per-record work fans out in
/// parallel. Sequential twin: [`igar_report_seq`].
pub fn igar_report(
    model: &FinetunedModel,
    corpus: &[EcgRecord],
    tau: f64,
    steps: usize,
) -> Result<AttrReport, AttrError> {
    let per_record = exec::map_items(corpus, |_, rec| record_ratios(model, rec, tau, steps));
    aggregate(per_record, tau, steps)
}

pub fn igar_report_seq(
    model: &FinetunedModel,
    corpus: &[EcgRecord],
    tau: f64,
    steps: usize,
) -> Result<AttrReport, AttrError> {
    let per_record = exec::map_items_seq(corpus, |_, rec| record_ratios(model, rec, tau, steps));
    aggregate(per_record, tau, steps)
}

type RecordRatios = (
    Vec<(String, f64)>,
    Vec<(String, BTreeMap<Wave, f64>)>,
    Vec<String>,
);

/// Lead ratios, wave ratios, and undefined leads for one record; `None`
/// when the record cannot be delineated.
fn record_ratios(
    model: &FinetunedModel,
    record: &EcgRecord,
    tau: f64,
    steps: usize,
) -> Result<Option<RecordRatios>, AttrError> {
    let segments = match delineate(record) {
        Ok(s) => s,
        Err(_) => return Ok(None),
    };
    let alphas = integrated_gradients(model, record, None, steps)?;
    let mut lead_levels = Vec::with_capacity(alphas.len());
    let mut wave_levels = Vec::new();
    let mut undefined = Vec::new();
    for (lead, alpha) in alphas {
        lead_levels.push((lead.clone(), lead_ratio(&alpha, tau)));
        let beats = segments.per_lead.get(&lead).cloned().unwrap_or_default();
        match wave_ratios(&alpha, &beats, tau) {
            Some(r) => wave_levels.push((lead, r)),
            None => undefined.push(lead),
        }
    }
    Ok(Some((lead_levels, wave_levels, undefined)))
}

fn aggregate(
    per_record: Vec<Result<Option<RecordRatios>, AttrError>>,
    tau: f64,
    steps: usize,
) -> Result<AttrReport, AttrError> {
    let mut lead_values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut wave_values: BTreeMap<String, BTreeMap<Wave, Vec<f64>>> = BTreeMap::new();
    let mut undefined: BTreeMap<String, usize> = BTreeMap::new();
    let mut skipped = 0usize;
    for item in per_record {
        match item? {
            None => skipped += 1,
            Some((leads, waves, undef)) => {
                for (lead, v) in leads {
                    lead_values.entry(lead).or_default().push(v);
                }
                for (lead, ratios) in waves {
                    let slot = wave_values.entry(lead).or_default();
                    for (wave, v) in ratios {
                        slot.entry(wave).or_default().push(v);
                    }
                }
                for lead in undef {
                    *undefined.entry(lead).or_default() += 1;
                }
            }
        }
    }
    let mut report = AttrReport {
        tau,
        steps,
        skipped_records: skipped,
        undefined,
        ..AttrReport::default()
    };
    for (lead, values) in lead_values {
        report.per_lead.insert(lead, mean_std(&values));
    }
    for (lead, waves) in wave_values {
        let entry = report.per_wave.entry(lead).or_default();
        for (wave, values) in waves {
            entry.insert(wave, mean_std(&values));
        }
    }
    Ok(report)
}

impl AttrReport {
    /// Rows: lead, wave ("-" for the lead-level row), mean %, std %, n.
    pub fn to_text(&self) -> String {
        let mut out = format!("# tau={} steps={}\n", self.tau, self.steps);
        out.push_str("lead\twave\tmean_pct\tstd_pct\tn\n");
        for (lead, ms) in &self.per_lead {
            out.push_str(&format!(
                "{lead}\t-\t{:.4}\t{:.4}\t{}\n",
                ms.mean, ms.std, ms.n
            ));
        }
        for (lead, waves) in &self.per_wave {
            for (wave, ms) in waves {
                out.push_str(&format!(
                    "{lead}\t{wave}\t{:.4}\t{:.4}\t{}\n",
                    ms.mean, ms.std, ms.n
                ));
            }
        }
        for (lead, n) in &self.undefined {
            out.push_str(&format!("{lead}\tundefined\t-\t-\t{n}\n"));
        }
        out
    }
}

pub fn write_report(report: &AttrReport, path: &Path) -> Result<(), AttrError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(report.to_text().as_bytes())?;
    Ok(())
}

/// Optional per-record attribution dump (lead, index, alpha, normalized).
pub fn write_attribution_dump(
    map: &AttributionMap,
    path: &Path,
) -> Result<(), AttrError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "record_id\tlead\tindex\talpha\talpha_norm")?;
    for lead in &map.leads {
        for (i, (a, n)) in lead.alpha.iter().zip(&lead.alpha_norm).enumerate() {
            writeln!(w, "{}\t{}\t{i}\t{a:e}\t{n:e}", map.record_id, lead.lead)?;
        }
    }
    Ok(())
}
