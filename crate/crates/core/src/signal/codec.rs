//! ECGR binary record format and CSV import.
//!
//! Layout (all little-endian):
//!   magic "ECGR" | version u16 | flags u16 | sample_rate f64 |
//!   num_leads u32 | len u32 | record_id (u32 len + utf8) |
//!   [label i32 if flag bit 0] | [group_tag u32+utf8 if flag bit 1] |
//!   lead names (u32+utf8 each) | samples f32, lead-major.
//!
//! Samples are stored as 32-bit floats; a write/read cycle is bit-exact at
//! the f32 level, so writing a just-read record reproduces the bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::record::EcgRecord;
use super::SignalError;

const MAGIC: &[u8; 4] = b"ECGR";
const VERSION: u16 = 1;
const FLAG_LABEL: u16 = 1;
const FLAG_GROUP: u16 = 2;

pub fn write_record(record: &EcgRecord, path: &Path) -> Result<(), SignalError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let mut flags = 0u16;
    if record.label.is_some() {
        flags |= FLAG_LABEL;
    }
    if record.group_tag.is_some() {
        flags |= FLAG_GROUP;
    }
    w.write_all(&flags.to_le_bytes())?;
    w.write_all(&record.sample_rate_hz.to_le_bytes())?;
    w.write_all(&(record.num_leads() as u32).to_le_bytes())?;
    w.write_all(&(record.len() as u32).to_le_bytes())?;
    write_str(&mut w, &record.record_id)?;
    if let Some(label) = record.label {
        w.write_all(&label.to_le_bytes())?;
    }
    if let Some(tag) = &record.group_tag {
        write_str(&mut w, tag)?;
    }
    for name in &record.lead_names {
        write_str(&mut w, name)?;
    }
    for i in 0..record.num_leads() {
        for &v in record.lead(i) {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_record(path: &Path) -> Result<EcgRecord, SignalError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(SignalError::CorruptFile("bad magic".into()));
    }
    let version = read_u16(&mut r)?;
    if version != VERSION {
        return Err(SignalError::CorruptFile(format!(
            "unsupported version {version}"
        )));
    }
    let flags = read_u16(&mut r)?;
    let rate = f64::from_le_bytes(read_array::<8, _>(&mut r)?);
    let num_leads = read_u32(&mut r)? as usize;
    let len = read_u32(&mut r)? as usize;
    let record_id = read_str(&mut r)?;
    let label = if flags & FLAG_LABEL != 0 {
        Some(i32::from_le_bytes(read_array::<4, _>(&mut r)?))
    } else {
        None
    };
    let group_tag = if flags & FLAG_GROUP != 0 {
        Some(read_str(&mut r)?)
    } else {
        None
    };
    let mut lead_names = Vec::with_capacity(num_leads);
    for _ in 0..num_leads {
        lead_names.push(read_str(&mut r)?);
    }
    let mut leads = Vec::with_capacity(num_leads);
    for _ in 0..num_leads {
        let mut lead = Vec::with_capacity(len);
        for _ in 0..len {
            lead.push(f32::from_le_bytes(read_array::<4, _>(&mut r)?) as f64);
        }
        leads.push(lead);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(SignalError::CorruptFile("trailing bytes".into()));
    }
    let mut record = EcgRecord::new(record_id, rate, lead_names, leads)
        .map_err(|e| SignalError::CorruptFile(e.to_string()))?;
    record.label = label;
    record.group_tag = group_tag;
    Ok(record)
}

/// CSV import: header row of lead names, one column per lead.
pub fn read_csv(path: &Path, sample_rate_hz: f64) -> Result<EcgRecord, SignalError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| SignalError::CorruptFile("empty csv".into()))?;
    let lead_names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut leads: Vec<Vec<f64>> = vec![Vec::new(); lead_names.len()];
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != lead_names.len() {
            return Err(SignalError::CorruptFile(format!(
                "csv row {} has {} fields, header has {}",
                lineno + 2,
                fields.len(),
                lead_names.len()
            )));
        }
        for (lead, field) in leads.iter_mut().zip(&fields) {
            let field = field.trim();
            // Empty cells and explicit NaN markers become NaN samples for
            // the interpolation stage.
            let v = if field.is_empty() || field.eq_ignore_ascii_case("nan") {
                f64::NAN
            } else {
                field.parse::<f64>().map_err(|_| {
                    SignalError::CorruptFile(format!("bad csv value {field:?} on row {}", lineno + 2))
                })?
            };
            lead.push(v);
        }
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".to_string());
    EcgRecord::new(stem, sample_rate_hz, lead_names, leads)
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<(), SignalError> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), SignalError> {
    r.read_exact(buf)
        .map_err(|_| SignalError::CorruptFile("truncated file".into()))
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], SignalError> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16, SignalError> {
    Ok(u16::from_le_bytes(read_array::<2, _>(r)?))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, SignalError> {
    Ok(u32::from_le_bytes(read_array::<4, _>(r)?))
}

fn read_str<R: Read>(r: &mut R) -> Result<String, SignalError> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(SignalError::CorruptFile(format!("string length {len}")));
    }
    let mut buf = vec![0u8; len];
    read_exact(r, &mut buf)?;
    String::from_utf8(buf).map_err(|_| SignalError::CorruptFile("non-utf8 string".into()))
}
