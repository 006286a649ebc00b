//! Labels file: tab-separated rows of record_id, label, optional group tag.

use std::io::Write;
use std::path::Path;

use super::EvalError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelEntry {
    pub record_id: String,
    pub label: u8,
    pub group_tag: Option<String>,
}

pub fn read_labels_file(path: &Path) -> Result<Vec<LabelEntry>, EvalError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if lineno == 0 && line.starts_with("record_id") {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(EvalError::Domain(format!(
                "labels line {}: expected 2-3 tab-separated fields",
                lineno + 1
            )));
        }
        let label: u8 = fields[1].parse().map_err(|_| {
            EvalError::Domain(format!("labels line {}: bad label {:?}", lineno + 1, fields[1]))
        })?;
        if label > 1 {
            return Err(EvalError::Domain(format!(
                "labels line {}: label must be 0/1",
                lineno + 1
            )));
        }
        out.push(LabelEntry {
            record_id: fields[0].to_string(),
            label,
            group_tag: fields.get(2).map(|s| s.to_string()).filter(|s| !s.is_empty()),
        });
    }
    Ok(out)
}

pub fn write_labels_file(entries: &[LabelEntry], path: &Path) -> Result<(), EvalError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "record_id\tlabel\tgroup")?;
    for e in entries {
        writeln!(
            w,
            "{}\t{}\t{}",
            e.record_id,
            e.label,
            e.group_tag.as_deref().unwrap_or("")
        )?;
    }
    Ok(())
}
