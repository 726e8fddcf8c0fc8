//! Click-record files, manifests and atomic output.
//!
//! CSV: header `trigger,T,H,S,R1,R2`, one row per trigger with 0/1 flags.
//! Binary: 11 bytes per trigger, little-endian `u64` trigger, `u16` T,
//! `u8` mask, no header. Either format has a sidecar
//! `<file>.manifest.json`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clicks::Detector;
use crate::error::{Error, Result};
use crate::trialsim::{ClickRecord, RunManifest};

pub const CSV_HEADER: &str = "trigger,T,H,S,R1,R2";
pub const BINARY_RECORD_LEN: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordFormat {
    Csv,
    Binary,
}

impl RecordFormat {
    /// `.bin` selects binary, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => RecordFormat::Binary,
            _ => RecordFormat::Csv,
        }
    }
}

/// Decimal text with 17 significant digits (`%.17g`), trailing zeros dropped.
pub fn format_float(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".to_owned();
    }
    let sci = format!("{:.16e}", x);
    // rounding may carry into the next decade
    let (mantissa, e) = sci.split_once('e').unwrap();
    let e: i32 = e.parse().unwrap();
    if (-5..17).contains(&e) {
        let decimals = (16 - e).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_owned()
        } else {
            s
        }
    } else {
        let m = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{m}e{e}")
    }
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Writes through a temporary file in the destination directory and renames
/// it into place on success.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<&mut File>) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_string_atomic(path: &Path, contents: &str) -> Result<()> {
    write_atomic(path, |w| Ok(w.write_all(contents.as_bytes())?))
}

/// Streaming writer for one record file.
pub struct RecordWriter<'a, W: Write> {
    out: &'a mut W,
    format: RecordFormat,
    last: Option<u64>,
}

impl<'a, W: Write> RecordWriter<'a, W> {
    pub fn new(out: &'a mut W, format: RecordFormat) -> Result<Self> {
        if format == RecordFormat::Csv {
            writeln!(out, "{CSV_HEADER}")?;
        }
        Ok(Self { out, format, last: None })
    }

    pub fn write(&mut self, records: &[ClickRecord]) -> Result<()> {
        for r in records {
            if self.last.is_some_and(|l| r.trigger <= l) {
                return Err(Error::Format(format!("trigger {} not increasing", r.trigger)));
            }
            self.last = Some(r.trigger);
            match self.format {
                RecordFormat::Csv => {
                    let f = |d: Detector| u8::from(r.mask & d.bit() != 0);
                    writeln!(
                        self.out,
                        "{},{},{},{},{},{}",
                        r.trigger,
                        r.delay,
                        f(Detector::H),
                        f(Detector::S),
                        f(Detector::R1),
                        f(Detector::R2)
                    )?;
                }
                RecordFormat::Binary => {
                    let mut buf = [0u8; BINARY_RECORD_LEN];
                    buf[..8].copy_from_slice(&r.trigger.to_le_bytes());
                    buf[8..10].copy_from_slice(&r.delay.to_le_bytes());
                    buf[10] = r.mask;
                    self.out.write_all(&buf)?;
                }
            }
        }
        Ok(())
    }
}

pub fn write_records(path: &Path, records: &[ClickRecord], format: RecordFormat) -> Result<()> {
    write_atomic(path, |w| RecordWriter::new(w, format)?.write(records))
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let mut s = serde_json::to_string_pretty(manifest)?;
    s.push('\n');
    write_string_atomic(&manifest_path(path), &s)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(manifest_path(path))?;
    Ok(serde_json::from_str(&text)?)
}

fn check_order(prev: &mut Option<u64>, r: &ClickRecord, line: usize) -> Result<()> {
    if prev.is_some_and(|p| r.trigger <= p) {
        return Err(Error::Format(format!("record {line}: trigger index not strictly increasing")));
    }
    if r.delay == 0 {
        return Err(Error::Format(format!("record {line}: T must be ≥ 1")));
    }
    *prev = Some(r.trigger);
    Ok(())
}

/// Reads and validates a record file, calling `sink` on batches of records.
pub fn read_records_with<F>(path: &Path, format: RecordFormat, mut sink: F) -> Result<u64>
where
    F: FnMut(&[ClickRecord]) -> Result<()>,
{
    const BATCH: usize = 1 << 16;
    let mut batch = Vec::with_capacity(BATCH);
    let mut prev = None;
    let mut n = 0u64;
    let file = File::open(path)?;
    match format {
        RecordFormat::Csv => {
            let mut lines = BufReader::new(file).lines();
            let header = lines.next().transpose()?;
            if header.as_deref().map(str::trim_end) != Some(CSV_HEADER) {
                return Err(Error::Format(format!("missing header '{CSV_HEADER}'")));
            }
            for (i, line) in lines.enumerate() {
                let line = line?;
                let lineno = i + 2;
                let fields: Vec<&str> = line.trim_end().split(',').collect();
                if fields.len() != 6 {
                    return Err(Error::Format(format!("line {lineno}: expected 6 fields")));
                }
                let bad = |what: &str| Error::Format(format!("line {lineno}: bad {what}"));
                let trigger = fields[0].parse::<u64>().map_err(|_| bad("trigger"))?;
                let delay = fields[1].parse::<u16>().map_err(|_| bad("T"))?;
                let mut mask = 0u8;
                for (f, det) in fields[2..].iter().zip(Detector::ALL) {
                    match *f {
                        "0" => {}
                        "1" => mask |= det.bit(),
                        _ => return Err(bad("flag")),
                    }
                }
                let r = ClickRecord { trigger, delay, mask };
                check_order(&mut prev, &r, lineno)?;
                batch.push(r);
                n += 1;
                if batch.len() == BATCH {
                    sink(&batch)?;
                    batch.clear();
                }
            }
        }
        RecordFormat::Binary => {
            let mut reader = BufReader::new(file);
            let mut buf = [0u8; BINARY_RECORD_LEN];
            loop {
                let mut filled = 0;
                while filled < BINARY_RECORD_LEN {
                    let k = reader.read(&mut buf[filled..])?;
                    if k == 0 {
                        break;
                    }
                    filled += k;
                }
                if filled == 0 {
                    break;
                }
                if filled < BINARY_RECORD_LEN {
                    return Err(Error::Format("truncated binary record".into()));
                }
                let r = ClickRecord {
                    trigger: u64::from_le_bytes(buf[..8].try_into().unwrap()),
                    delay: u16::from_le_bytes([buf[8], buf[9]]),
                    mask: buf[10],
                };
                if r.mask > 0xF {
                    return Err(Error::Format(format!("record {}: mask has unknown bits", n + 1)));
                }
                check_order(&mut prev, &r, n as usize + 1)?;
                batch.push(r);
                n += 1;
                if batch.len() == BATCH {
                    sink(&batch)?;
                    batch.clear();
                }
            }
        }
    }
    if !batch.is_empty() {
        sink(&batch)?;
    }
    Ok(n)
}

pub fn read_records(path: &Path, format: RecordFormat) -> Result<Vec<ClickRecord>> {
    let mut out = Vec::new();
    read_records_with(path, format, |b| {
        out.extend_from_slice(b);
        Ok(())
    })?;
    Ok(out)
}
