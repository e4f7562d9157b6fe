//! Cohort directory layout.
//!
//! ```text
//! cohort.json            spec, master seed, per-subject SRTs, seeds and kernels
//! boundaries.csv         sentence,start,end
//! features/<task>_<feature>.mdts
//! eeg/<subject>_story.mdeeg
//! eeg/<subject>_matrix_<condition>.mdeeg
//! ```
//!
//! `MDEEG1` files hold the 6 magic bytes, little-endian `channels: u32`,
//! `samples: u64`, `rate: f64`, then float32 samples channel-major.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{
    Cohort, CohortSpec, EegRecording, FeatureKind, RecordingTag, SnrCondition, Stimuli, SubjectId,
    SubjectRecord, SyntheticSubjectSpec, Task,
};
use crate::binio::{read_file, write_file, Reader, Writer};
use crate::dsp::{self, TimeSeries};
use crate::{Error, Result};

pub const EEG_MAGIC: &[u8; 6] = b"MDEEG1";

pub fn encode_eeg(rec: &EegRecording) -> Vec<u8> {
    let mut w = Writer::new(EEG_MAGIC);
    w.u32(rec.n_channels() as u32);
    w.u64(rec.n_samples() as u64);
    w.f64(rec.rate());
    for &v in rec.data() {
        w.f32(v as f32);
    }
    w.buf
}

pub fn decode_eeg(bytes: &[u8], tag: RecordingTag) -> Result<EegRecording> {
    let mut r = Reader::new(bytes, EEG_MAGIC, "MDEEG1")?;
    let channels = r.u32()? as usize;
    let samples = r.u64()?;
    let rate = r.f64()?;
    let total = r.check_len(samples.saturating_mul(channels as u64), 4)?;
    let mut data = Vec::with_capacity(total);
    for _ in 0..total {
        data.push(r.f32()? as f64);
    }
    r.finish()?;
    EegRecording::new(tag, channels, rate, data)
}

#[derive(Serialize, Deserialize)]
struct CohortFile {
    code_version: String,
    master_seed: u64,
    spec: CohortSpec,
    subjects: Vec<SubjectEntry>,
}

#[derive(Serialize, Deserialize)]
struct SubjectEntry {
    subject_id: SubjectId,
    spec: SyntheticSubjectSpec,
}

fn feature_file(task: Task, kind: FeatureKind) -> String {
    format!("features/{task}_{kind}.mdts")
}

fn eeg_file(id: SubjectId, task: Task, condition: Option<SnrCondition>) -> String {
    match condition {
        None => format!("eeg/{id}_{task}.mdeeg"),
        Some(c) => format!("eeg/{id}_{task}_{c}.mdeeg"),
    }
}

/// Writes a cohort under `dir`; returns the written paths relative to `dir`,
/// in a fixed order.
pub fn write_cohort(dir: &Path, cohort: &Cohort) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |rel: String, bytes: &[u8]| -> Result<()> {
        write_file(&dir.join(&rel), bytes)?;
        written.push(PathBuf::from(rel));
        Ok(())
    };
    let file = CohortFile {
        code_version: crate::CODE_VERSION.to_string(),
        master_seed: cohort.master_seed,
        spec: cohort.spec.clone(),
        subjects: cohort
            .subjects
            .iter()
            .map(|s| SubjectEntry {
                subject_id: s.subject_id,
                spec: s.spec.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file).expect("cohort metadata serializes");
    put("cohort.json".into(), json.as_bytes())?;

    let mut csv = String::from("sentence,start,end\n");
    for (i, (a, b)) in cohort.stimuli.boundaries.iter().enumerate() {
        let _ = writeln!(csv, "{i},{a},{b}");
    }
    put("boundaries.csv".into(), csv.as_bytes())?;

    for task in Task::ALL {
        for kind in FeatureKind::ALL {
            put(feature_file(task, kind), &dsp::io::encode(cohort.stimuli.feature(task, kind)))?;
        }
    }
    for s in &cohort.subjects {
        put(eeg_file(s.subject_id, Task::Story, None), &encode_eeg(&s.story))?;
        for (&c, rec) in &s.matrix {
            put(eeg_file(s.subject_id, Task::Matrix, Some(c)), &encode_eeg(rec))?;
        }
    }
    Ok(written)
}

fn parse_boundaries(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut lines = text.lines();
    if lines.next() != Some("sentence,start,end") {
        return Err(Error::data("boundaries.csv has an unexpected header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::data(format!("boundaries.csv line {}: {line:?}", i + 2));
            if f.len() != 3 || f[0].parse::<usize>().ok() != Some(i) {
                return Err(bad());
            }
            Ok((f[1].parse().map_err(|_| bad())?, f[2].parse().map_err(|_| bad())?))
        })
        .collect()
}

/// Reads a cohort written by [`write_cohort`].
pub fn read_cohort(dir: &Path) -> Result<Cohort> {
    let meta_path = dir.join("cohort.json");
    let text = String::from_utf8(read_file(&meta_path)?)
        .map_err(|_| Error::data("cohort.json is not UTF-8"))?;
    let file: CohortFile =
        serde_json::from_str(&text).map_err(|e| Error::data(format!("cohort.json: {e}")))?;
    file.spec.validate()?;
    let boundaries_text = String::from_utf8(read_file(&dir.join("boundaries.csv"))?)
        .map_err(|_| Error::data("boundaries.csv is not UTF-8"))?;
    let feature = |task, kind| dsp::io::read(&dir.join(feature_file(task, kind)));
    let stimuli = Stimuli {
        story_envelope: feature(Task::Story, FeatureKind::Envelope)?,
        story_onsets: feature(Task::Story, FeatureKind::Onsets)?,
        matrix_envelope: feature(Task::Matrix, FeatureKind::Envelope)?,
        matrix_onsets: feature(Task::Matrix, FeatureKind::Onsets)?,
        boundaries: parse_boundaries(&boundaries_text)?,
    };
    let eeg = |tag: RecordingTag| -> Result<EegRecording> {
        let path = dir.join(eeg_file(tag.subject_id, tag.task, tag.condition));
        decode_eeg(&read_file(&path)?, tag)
    };
    let subjects = file
        .subjects
        .into_iter()
        .map(|entry| {
            let id = entry.subject_id;
            let story = eeg(RecordingTag {
                subject_id: id,
                task: Task::Story,
                condition: None,
            })?;
            let matrix = SnrCondition::ALL
                .iter()
                .map(|&c| {
                    let tag = RecordingTag {
                        subject_id: id,
                        task: Task::Matrix,
                        condition: Some(c),
                    };
                    Ok((c, eeg(tag)?))
                })
                .collect::<Result<BTreeMap<_, _>>>()?;
            Ok(SubjectRecord {
                subject_id: id,
                spec: entry.spec,
                story,
                matrix,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cohort = Cohort {
        spec: file.spec,
        master_seed: file.master_seed,
        stimuli,
        subjects,
    };
    if cohort.subjects.len() != cohort.spec.n_subjects {
        return Err(Error::data("cohort.json subject list does not match n_subjects"));
    }
    cohort.validate()?;
    Ok(cohort)
}

/// Convenience for tests and tools: one feature stream as a [`TimeSeries`] file.
pub fn read_feature(dir: &Path, task: Task, kind: FeatureKind) -> Result<TimeSeries> {
    dsp::io::read(&dir.join(feature_file(task, kind)))
}
