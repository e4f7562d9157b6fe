//! On-disk NT cache (CSV plus a JSON sidecar) and the MDW1 weight format.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::{ConfigFilter, DecoderConfig, DecoderWeights, NtTable, NtValue};
use crate::binio::{read_file, write_file, Reader, Writer};
use crate::dsp::BandName;
use crate::{Error, Result};

pub const NT_COLUMNS: [&str; 8] = [
    "subject_id",
    "task",
    "feature",
    "band",
    "decoder_type",
    "max_lag",
    "snr_condition",
    "nt_value",
];

/// The cache as CSV text, rows in canonical order. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn nt_csv_string(table: &NtTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::data(format!("writing NT cache: {e}"));
    w.write_record(NT_COLUMNS).map_err(csv_err)?;
    for v in table.iter() {
        let c = v.config;
        w.write_record([
            v.subject_id.to_string(),
            c.task.to_string(),
            c.feature.to_string(),
            c.band.to_string(),
            c.decoder_type.to_string(),
            c.max_lag.to_string(),
            v.condition.to_string(),
            v.value.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::data(format!("writing NT cache: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::data(format!("NT cache is not UTF-8: {e}")))
}

pub fn write_nt_csv(path: &Path, table: &NtTable) -> Result<()> {
    write_file(path, nt_csv_string(table)?.as_bytes())
}

pub fn parse_nt_csv(text: &str, what: &str) -> Result<NtTable> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let bad = |line: u64, msg: String| Error::data(format!("{what} line {line}: {msg}"));
    let headers = r.headers().map_err(|e| bad(1, e.to_string()))?;
    if headers.iter().ne(NT_COLUMNS) {
        return Err(bad(1, format!("expected columns {}", NT_COLUMNS.join(","))));
    }
    let mut table = NtTable::new();
    for (i, rec) in r.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| bad(line, e.to_string()))?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let parsed = (|| -> Result<NtValue> {
            Ok(NtValue {
                subject_id: field(0).parse()?,
                config: DecoderConfig {
                    task: field(1).parse()?,
                    feature: field(2).parse()?,
                    band: field(3).parse()?,
                    decoder_type: field(4).parse()?,
                    max_lag: field(5)
                        .parse()
                        .map_err(|_| Error::data(format!("bad max_lag {:?}", field(5))))?,
                },
                condition: field(6).parse()?,
                value: field(7)
                    .parse()
                    .map_err(|_| Error::data(format!("bad nt_value {:?}", field(7))))?,
            })
        })()
        .map_err(|e| bad(line, e.to_string()))?;
        table.insert(parsed).map_err(|e| bad(line, e.to_string()))?;
    }
    Ok(table)
}

pub fn read_nt_csv(path: &Path) -> Result<NtTable> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::data(format!("{} is not UTF-8", path.display())))?;
    parse_nt_csv(&text, &path.display().to_string())
}

/// Everything an NT cache depends on besides the cohort content itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheSidecar {
    pub code_version: String,
    pub cohort_hash: String,
    pub lambda_rel: f64,
    pub filter: ConfigFilter,
    pub n_sentences: Option<usize>,
    pub story_samples: Option<usize>,
    /// Bands whose rows are all present, in completion order.
    pub complete_bands: Vec<BandName>,
}

impl CacheSidecar {
    /// Explains why a cache written under `self` cannot be reused for a run
    /// described by `want` (ignoring completion state).
    pub fn incompatibility(&self, want: &CacheSidecar) -> Option<String> {
        if self.code_version != want.code_version {
            return Some(format!(
                "cache was written by {} but this is {}; delete it or use a fresh output directory",
                self.code_version, want.code_version
            ));
        }
        if self.cohort_hash != want.cohort_hash {
            return Some("cache belongs to a different cohort (content hash differs)".into());
        }
        if self.lambda_rel.to_bits() != want.lambda_rel.to_bits() {
            return Some(format!(
                "cache used lambda_rel = {} but this run uses {}",
                self.lambda_rel, want.lambda_rel
            ));
        }
        if self.filter != want.filter || self.n_sentences != want.n_sentences || self.story_samples != want.story_samples {
            return Some("cache was written for a different grid filter or data reduction".into());
        }
        None
    }
}

pub fn write_sidecar(path: &Path, s: &CacheSidecar) -> Result<()> {
    let json = serde_json::to_string_pretty(s).map_err(|e| Error::data(format!("sidecar: {e}")))?;
    write_file(path, json.as_bytes())
}

pub fn read_sidecar(path: &Path) -> Result<CacheSidecar> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

pub const WEIGHTS_MAGIC: &[u8; 4] = b"MDW1";

/// MDW1: `{config hash: u64, λ: f64, length: u64}` then `length` f64 weights.
pub fn encode_weights(w: &DecoderWeights) -> Vec<u8> {
    let mut out = Writer::new(WEIGHTS_MAGIC);
    out.u64(w.config.map_or(0, |c| c.hash64()));
    out.f64(w.lambda);
    out.u64(w.weights.len() as u64);
    for &v in &w.weights {
        out.f64(v);
    }
    out.buf
}

/// Decodes MDW1 bytes for a known configuration and channel count; the
/// stored hash must match the configuration.
pub fn decode_weights(bytes: &[u8], config: &DecoderConfig, n_channels: usize) -> Result<DecoderWeights> {
    let mut r = Reader::new(bytes, WEIGHTS_MAGIC, "MDW1 weights")?;
    let hash = r.u64()?;
    if hash != config.hash64() {
        return Err(Error::data(format!("weights were saved for a different configuration than {config}")));
    }
    let lambda = r.f64()?;
    let len = r.u64()?;
    let n = r.check_len(len, 8)?;
    if n != config.n_weights(n_channels) {
        return Err(Error::data(format!(
            "{n} weights stored but {config} with {n_channels} channels needs {}",
            config.n_weights(n_channels)
        )));
    }
    let weights = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(DecoderWeights {
        weights,
        lambda,
        n_channels,
        max_lag: config.max_lag,
        config: Some(*config),
        condition: None,
    })
}
