//! `MDTS1` binary and CSV serialization of [`TimeSeries`].
//!
//! Layout: the 5 magic bytes `MDTS1`, then little-endian `rate: f64`,
//! `n: u64`, `has_mask: u8`, `n` float32 samples and, when `has_mask` is 1,
//! `n` mask bytes (0 or 1).

use std::fmt::Write as _;
use std::path::Path;

use super::TimeSeries;
use crate::binio::{read_file, write_file, Reader, Writer};
use crate::{Error, Result};

pub const MAGIC: &[u8; 5] = b"MDTS1";

/// Samples are stored as float32, so the round trip is exact only for
/// f32-representable values.
pub fn encode(ts: &TimeSeries) -> Vec<u8> {
    let mut w = Writer::new(MAGIC);
    w.f64(ts.rate());
    w.u64(ts.len() as u64);
    w.u8(ts.silence_mask().is_some() as u8);
    for &v in ts.samples() {
        w.f32(v as f32);
    }
    if let Some(mask) = ts.silence_mask() {
        for &m in mask {
            w.u8(m as u8);
        }
    }
    w.buf
}

pub fn decode(bytes: &[u8]) -> Result<TimeSeries> {
    let mut r = Reader::new(bytes, MAGIC, "MDTS1")?;
    let rate = r.f64()?;
    let n = r.u64()?;
    let has_mask = r.u8()?;
    let n = r.check_len(n, 4)?;
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        samples.push(r.f32()? as f64);
    }
    let mask = match has_mask {
        0 => None,
        1 => {
            let raw = r.bytes(n)?;
            if raw.iter().any(|&b| b > 1) {
                return Err(Error::data("MDTS1 mask bytes must be 0 or 1"));
            }
            Some(raw.iter().map(|&b| b == 1).collect())
        }
        other => return Err(Error::data(format!("MDTS1 has_mask flag {other} is not 0 or 1"))),
    };
    r.finish()?;
    TimeSeries::new(samples, rate)?.with_optional_mask(mask)
}

pub fn write(path: &Path, ts: &TimeSeries) -> Result<()> {
    write_file(path, &encode(ts))
}

pub fn read(path: &Path) -> Result<TimeSeries> {
    decode(&read_file(path)?)
}

/// Debug export with columns `sample_index,value[,mask]`.
pub fn to_csv(ts: &TimeSeries) -> String {
    let mut out = String::new();
    match ts.silence_mask() {
        Some(mask) => {
            out.push_str("sample_index,value,mask\n");
            for (i, (v, m)) in ts.samples().iter().zip(mask).enumerate() {
                let _ = writeln!(out, "{i},{v},{}", *m as u8);
            }
        }
        None => {
            out.push_str("sample_index,value\n");
            for (i, v) in ts.samples().iter().enumerate() {
                let _ = writeln!(out, "{i},{v}");
            }
        }
    }
    out
}

pub fn write_csv(path: &Path, ts: &TimeSeries) -> Result<()> {
    write_file(path, to_csv(ts).as_bytes())
}
