//! Vector persistence: CSV for inspection and MDVEC1 for fast reload.
//!
//! MDVEC1 layout (little-endian): magic, `n_configs: u64`, one `u64` config
//! hash per layout configuration, `n_vectors: u64`, then per vector
//! `subject: u32` followed by `n_configs × 5` f64 values.

use std::path::Path;

use super::{AdjustedNtVector, VectorLayout};
use crate::binio::{read_file, write_file, Reader, Writer};
use crate::synth::SubjectId;
use crate::{Error, Result};

pub const VECTOR_MAGIC: &[u8; 6] = b"MDVEC1";

pub fn vectors_csv_string(layout: &VectorLayout, vectors: &[AdjustedNtVector]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::data(format!("writing vector CSV: {e}"));
    w.write_record([
        "subject_id",
        "index",
        "task",
        "feature",
        "band",
        "decoder_type",
        "max_lag",
        "snr",
        "value",
    ])
    .map_err(err)?;
    for v in vectors {
        if v.values.len() != layout.len() {
            return Err(Error::data(format!("vector of {} does not match the layout", v.subject_id)));
        }
        for (i, x) in v.values.iter().enumerate() {
            let (c, snr) = layout.entry(i);
            w.write_record([
                v.subject_id.to_string(),
                i.to_string(),
                c.task.to_string(),
                c.feature.to_string(),
                c.band.to_string(),
                c.decoder_type.to_string(),
                c.max_lag.to_string(),
                snr.to_string(),
                x.to_string(),
            ])
            .map_err(err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::data(format!("writing vector CSV: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::data(e.to_string()))
}

pub fn write_vectors_csv(path: &Path, layout: &VectorLayout, vectors: &[AdjustedNtVector]) -> Result<()> {
    write_file(path, vectors_csv_string(layout, vectors)?.as_bytes())
}

pub fn encode_vectors(layout: &VectorLayout, vectors: &[AdjustedNtVector]) -> Result<Vec<u8>> {
    let mut w = Writer::new(VECTOR_MAGIC);
    w.u64(layout.configs().len() as u64);
    for c in layout.configs() {
        w.u64(c.hash64());
    }
    w.u64(vectors.len() as u64);
    for v in vectors {
        if v.values.len() != layout.len() {
            return Err(Error::data(format!("vector of {} does not match the layout", v.subject_id)));
        }
        w.u32(v.subject_id.0);
        v.values.iter().for_each(|&x| w.f64(x));
    }
    Ok(w.buf)
}

pub fn decode_vectors(bytes: &[u8], layout: &VectorLayout) -> Result<Vec<AdjustedNtVector>> {
    let mut r = Reader::new(bytes, VECTOR_MAGIC, "MDVEC1")?;
    let n_configs = r.u64()?;
    if n_configs as usize != layout.configs().len() {
        return Err(Error::data(format!(
            "MDVEC1 holds {n_configs} configurations, layout has {}",
            layout.configs().len()
        )));
    }
    for c in layout.configs() {
        if r.u64()? != c.hash64() {
            return Err(Error::data(format!("MDVEC1 layout differs at {c}")));
        }
    }
    let n = r.u64()?;
    let n = r.check_len(n, 4 + 8 * layout.len())?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let subject_id = SubjectId(r.u32()?);
        let values = (0..layout.len()).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        out.push(AdjustedNtVector { subject_id, values });
    }
    r.finish()?;
    Ok(out)
}

pub fn write_vectors(path: &Path, layout: &VectorLayout, vectors: &[AdjustedNtVector]) -> Result<()> {
    write_file(path, &encode_vectors(layout, vectors)?)
}

pub fn read_vectors(path: &Path, layout: &VectorLayout) -> Result<Vec<AdjustedNtVector>> {
    decode_vectors(&read_file(path)?, layout)
}
