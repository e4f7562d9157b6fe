//! The full decoder grid, computed from sufficient statistics.
//!
//! Every decoder only needs `XᵀX`, `Xᵀy` and a few sums of its training rows,
//! and those add over recordings and sentences. Columns are lag-major, so
//! the statistics of a window are the leading block of the statistics at the
//! widest window, and so is the Cholesky factor of the ridge system. One
//! factorization per training set therefore serves all 27 windows and both
//! features. Held-out correlations come from the same sums (`wᵀXᵀXw` and
//! friends), or from explicit predictions for sentence folds.
//!
//! Training rows are always those with full context at [`MAX_WINDOW_LAG`]
//! and `λ` comes from the trace at that window, so every window of a
//! training set sees the same rows and the same `λ`.

use faer::Mat;
use rayon::prelude::*;
use std::collections::BTreeMap;

use super::prep::{prepare_features, prepare_subject, BandFeatures, BandPreprocessor, PreparedSubject};
use super::ridge::{relative_lambda, PredictionMoments};
use super::{canonical_windows, ConfigFilter, DecoderConfig, DecoderType, NtTable, NtValue, MAX_WINDOW_LAG};
use crate::dsp::BandName;
use crate::linalg;
use crate::synth::{Cohort, EegRecording, FeatureKind, SnrCondition, SubjectId, Task};
use crate::{Error, Result};

/// Default relative ridge strength.
pub const DEFAULT_LAMBDA_REL: f64 = 0.1;

/// Rows per block when accumulating statistics of long recordings.
const ROW_BLOCK: usize = 1024;

/// What to compute and on how much data.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOptions {
    pub lambda_rel: f64,
    pub filter: ConfigFilter,
    /// Use only the first `n` matrix sentences, for training and testing.
    pub n_sentences: Option<usize>,
    /// Train story decoders on the first `n` story samples only.
    pub story_samples: Option<usize>,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            lambda_rel: DEFAULT_LAMBDA_REL,
            filter: ConfigFilter::default(),
            n_sentences: None,
            story_samples: None,
        }
    }
}

impl GridOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_rel >= 0.0 && self.lambda_rel.is_finite()) {
            return Err(Error::config(format!("lambda_rel must be ≥ 0, got {}", self.lambda_rel)));
        }
        self.filter.validate()?;
        if let Some(n) = self.n_sentences {
            if n < 2 {
                return Err(Error::config(format!(
                    "sentence-wise cross-validation needs at least 2 sentences, got {n}"
                )));
            }
        }
        if let Some(n) = self.story_samples {
            if n < 2 * (MAX_WINDOW_LAG + 1) {
                return Err(Error::config(format!("story truncated to {n} samples is too short")));
            }
        }
        Ok(())
    }

    /// Sentences used under these options.
    pub fn sentences<'a>(&self, boundaries: &'a [(usize, usize)]) -> Result<&'a [(usize, usize)]> {
        let n = self.n_sentences.unwrap_or(boundaries.len());
        if n > boundaries.len() {
            return Err(Error::config(format!(
                "{n} sentences requested but the cohort has {}",
                boundaries.len()
            )));
        }
        if n < 2 {
            return Err(Error::data("sentence-wise cross-validation needs at least 2 sentences"));
        }
        Ok(&boundaries[..n])
    }

    /// Story training rows `0..end` under these options.
    pub fn story_rows_end(&self, story_len: usize) -> Result<usize> {
        let len = self.story_samples.unwrap_or(story_len);
        if len > story_len {
            return Err(Error::config(format!(
                "story truncated to {len} samples but the recording has {story_len}"
            )));
        }
        if len <= MAX_WINDOW_LAG + 1 {
            return Err(Error::data("story recording too short for the widest window"));
        }
        Ok(len - MAX_WINDOW_LAG)
    }
}

/// Sufficient statistics of a set of rows at the widest window.
#[derive(Debug, Clone)]
struct Stats {
    gram: Mat<f64>,
    cross: Mat<f64>,
    col_sum: Vec<f64>,
    n: f64,
    y_sum: [f64; 2],
    y_sq: [f64; 2],
}

impl Stats {
    fn zeros(d: usize) -> Self {
        Self {
            gram: Mat::zeros(d, d),
            cross: Mat::zeros(d, 2),
            col_sum: vec![0.0; d],
            n: 0.0,
            y_sum: [0.0; 2],
            y_sq: [0.0; 2],
        }
    }

    fn dim(&self) -> usize {
        self.gram.nrows()
    }

    fn accumulate(&mut self, x: &Mat<f64>, y: &Mat<f64>) {
        linalg::add_gram(&mut self.gram, x.as_ref());
        linalg::add_cross(&mut self.cross, x.as_ref(), y.as_ref());
        for j in 0..x.ncols() {
            self.col_sum[j] += x.col(j).iter().sum::<f64>();
        }
        for f in 0..2 {
            self.y_sum[f] += y.col(f).iter().sum::<f64>();
            self.y_sq[f] += y.col(f).iter().map(|v| v * v).sum::<f64>();
        }
        self.n += x.nrows() as f64;
    }

    fn add(&mut self, o: &Stats) {
        combine(&mut self.gram, &o.gram, 1.0);
        combine(&mut self.cross, &o.cross, 1.0);
        self.col_sum.iter_mut().zip(&o.col_sum).for_each(|(a, b)| *a += b);
        self.n += o.n;
        for f in 0..2 {
            self.y_sum[f] += o.y_sum[f];
            self.y_sq[f] += o.y_sq[f];
        }
    }

    /// Statistics of this set minus one of its parts (a sentence fold).
    fn without(&self, part: &Stats) -> Stats {
        let mut out = self.clone();
        combine(&mut out.gram, &part.gram, -1.0);
        combine(&mut out.cross, &part.cross, -1.0);
        out.col_sum.iter_mut().zip(&part.col_sum).for_each(|(a, b)| *a -= b);
        out.n -= part.n;
        for f in 0..2 {
            out.y_sum[f] -= part.y_sum[f];
            out.y_sq[f] -= part.y_sq[f];
        }
        out
    }

    fn sum_of<'a>(d: usize, parts: impl Iterator<Item = &'a Stats>) -> Stats {
        let mut s = Stats::zeros(d);
        parts.for_each(|p| s.add(p));
        s
    }
}

fn combine(dst: &mut Mat<f64>, src: &Mat<f64>, sign: f64) {
    for j in 0..dst.ncols() {
        for (a, b) in dst.col_mut(j).iter_mut().zip(src.col(j).iter()) {
            *a += sign * b;
        }
    }
}

/// Lagged block of `eeg` for the contiguous rows `start..end` at the widest
/// window, with the matching target rows.
fn block(eeg: &EegRecording, targets: [&[f64]; 2], start: usize, end: usize) -> (Mat<f64>, Mat<f64>) {
    let c = eeg.n_channels();
    let x = Mat::from_fn(end - start, c * (MAX_WINDOW_LAG + 1), |i, col| {
        eeg.channel(col % c)[start + i + col / c]
    });
    let y = Mat::from_fn(end - start, 2, |i, f| targets[f][start + i]);
    (x, y)
}

fn range_stats(eeg: &EegRecording, targets: [&[f64]; 2], start: usize, end: usize) -> Stats {
    let mut s = Stats::zeros(eeg.n_channels() * (MAX_WINDOW_LAG + 1));
    let mut at = start;
    while at < end {
        let stop = (at + ROW_BLOCK).min(end);
        let (x, y) = block(eeg, targets, at, stop);
        s.accumulate(&x, &y);
        at = stop;
    }
    s
}

/// Ridge solutions for every requested window and both features.
/// Column `f * windows.len() + w` holds feature `f`, window `windows[w]`,
/// zero-padded to the widest window.
fn train_windows(stats: &Stats, lambda_rel: f64, windows: &[usize], n_channels: usize) -> Result<Mat<f64>> {
    let d = stats.dim();
    let trace: f64 = (0..d).map(|i| stats.gram[(i, i)]).sum();
    let lambda = relative_lambda(trace, d, lambda_rel);
    let mut a = stats.gram.clone();
    for i in 0..d {
        a[(i, i)] += lambda;
    }
    let l = linalg::cholesky(a).map_err(|_| {
        Error::numerical(format!(
            "ridge system not positive definite at λ = {lambda:e}; use lambda_rel > 0"
        ))
    })?;
    let mut z = stats.cross.clone();
    linalg::forward_solve(l.as_ref(), &mut z);
    let nw = windows.len();
    let mut w = Mat::zeros(d, 2 * nw);
    for f in 0..2 {
        for (wi, &lag) in windows.iter().enumerate() {
            let k = n_channels * (lag + 1);
            let mut zk = Mat::from_fn(k, 1, |i, _| z[(i, f)]);
            linalg::backward_solve(l.as_ref().submatrix(0, 0, k, k), &mut zk);
            for i in 0..k {
                w[(i, f * nw + wi)] = zk[(i, 0)];
            }
        }
    }
    if (0..w.ncols()).any(|j| w.col(j).iter().any(|v| !v.is_finite())) {
        return Err(Error::numerical("ridge solution is not finite"));
    }
    Ok(w)
}

/// Held-out moments of every weight column on a row set known only through
/// its statistics.
fn test_gram(stats: &Stats, w: &Mat<f64>, nw: usize) -> Vec<PredictionMoments> {
    let gw = linalg::mul(stats.gram.as_ref(), w.as_ref());
    (0..w.ncols())
        .map(|j| {
            let f = j / nw;
            let wj = w.col(j);
            let dot = |v: &mut dyn Iterator<Item = f64>| v.zip(wj.iter()).map(|(a, b)| a * b).sum::<f64>();
            PredictionMoments {
                n: stats.n,
                sum_p: dot(&mut stats.col_sum.iter().copied()),
                sum_pp: dot(&mut gw.col(j).iter().copied()),
                sum_py: dot(&mut stats.cross.col(f).iter().copied()),
                sum_y: stats.y_sum[f],
                sum_yy: stats.y_sq[f],
            }
        })
        .collect()
}

/// Adds explicit held-out predictions of every weight column to `moments`.
fn test_rows(x: &Mat<f64>, y: &Mat<f64>, w: &Mat<f64>, nw: usize, moments: &mut [PredictionMoments]) {
    let p = linalg::mul(x.as_ref(), w.as_ref());
    for (j, m) in moments.iter_mut().enumerate() {
        let f = j / nw;
        for i in 0..x.nrows() {
            m.push(p[(i, j)], y[(i, f)]);
        }
    }
}

struct Job<'a> {
    band: BandName,
    windows: &'a [usize],
    lambda_rel: f64,
    sentences: &'a [(usize, usize)],
    do_story: bool,
    do_matrix: bool,
}

impl Job<'_> {
    fn emit(
        &self,
        out: &mut Vec<NtValue>,
        task: Task,
        decoder_type: DecoderType,
        condition: SnrCondition,
        subject_id: SubjectId,
        moments: &[PredictionMoments],
    ) -> Result<()> {
        let nw = self.windows.len();
        for (j, m) in moments.iter().enumerate() {
            let config = DecoderConfig {
                task,
                feature: FeatureKind::ALL[j / nw],
                band: self.band,
                decoder_type,
                max_lag: self.windows[j % nw],
            };
            let value = m.correlation().map_err(|e| {
                Error::numerical(format!("{config} at {condition} dB for {subject_id}: {e}"))
            })?;
            out.push(NtValue {
                config,
                condition,
                subject_id,
                value,
            });
        }
        Ok(())
    }
}

struct SubjectPass {
    subject_id: SubjectId,
    story: Option<Stats>,
    totals: BTreeMap<SnrCondition, Stats>,
    values: Vec<NtValue>,
}

fn subject_pass(job: &Job<'_>, feats: &BandFeatures, subject: &PreparedSubject, story_end: usize) -> Result<SubjectPass> {
    let c = subject.story.n_channels();
    let nw = job.windows.len();
    let id = subject.subject_id;
    let mut values = Vec::new();

    let matrix_targets = [
        feats.get(Task::Matrix, FeatureKind::Envelope).samples(),
        feats.get(Task::Matrix, FeatureKind::Onsets).samples(),
    ];
    let mut totals = BTreeMap::new();
    for (&cond, rec) in &subject.matrix {
        if let Some(&(_, e)) = job.sentences.last() {
            if e + MAX_WINDOW_LAG > rec.n_samples() {
                return Err(Error::data("last sentence lacks lag context before the recording end"));
            }
        }
        let parts: Vec<(Mat<f64>, Mat<f64>, Stats)> = job
            .sentences
            .iter()
            .map(|&(s, e)| {
                let (x, y) = block(rec, matrix_targets, s, e);
                let mut st = Stats::zeros(x.ncols());
                st.accumulate(&x, &y);
                (x, y, st)
            })
            .collect();
        let total = Stats::sum_of(c * (MAX_WINDOW_LAG + 1), parts.iter().map(|p| &p.2));
        if job.do_matrix {
            let mut moments = vec![PredictionMoments::default(); 2 * nw];
            for (x, y, part) in &parts {
                let w = train_windows(&total.without(part), job.lambda_rel, job.windows, c)?;
                test_rows(x, y, &w, nw, &mut moments);
            }
            job.emit(&mut values, Task::Matrix, DecoderType::SubjectSpecific, cond, id, &moments)?;
        }
        totals.insert(cond, total);
    }

    let story = if job.do_story {
        let targets = [
            feats.get(Task::Story, FeatureKind::Envelope).samples(),
            feats.get(Task::Story, FeatureKind::Onsets).samples(),
        ];
        let st = range_stats(&subject.story, targets, 0, story_end);
        let w = train_windows(&st, job.lambda_rel, job.windows, c)?;
        for (&cond, total) in &totals {
            let m = test_gram(total, &w, nw);
            job.emit(&mut values, Task::Story, DecoderType::SubjectSpecific, cond, id, &m)?;
        }
        Some(st)
    } else {
        None
    };
    Ok(SubjectPass {
        subject_id: id,
        story,
        totals,
        values,
    })
}

/// Subject-independent decoders for held-out subject `h`.
fn si_pass(job: &Job<'_>, passes: &[SubjectPass], h: usize, n_channels: usize) -> Result<Vec<NtValue>> {
    let nw = job.windows.len();
    let d = n_channels * (MAX_WINDOW_LAG + 1);
    let held = &passes[h];
    let others = || passes.iter().enumerate().filter(move |(s, _)| *s != h).map(|(_, p)| p);
    let mut values = Vec::new();
    if job.do_story {
        let train = Stats::sum_of(d, others().map(|p| p.story.as_ref().expect("story statistics")));
        let w = train_windows(&train, job.lambda_rel, job.windows, n_channels)?;
        for (&cond, total) in &held.totals {
            let m = test_gram(total, &w, nw);
            job.emit(&mut values, Task::Story, DecoderType::SubjectIndependent, cond, held.subject_id, &m)?;
        }
    }
    if job.do_matrix {
        for (&cond, total) in &held.totals {
            let train = Stats::sum_of(d, others().map(|p| &p.totals[&cond]));
            let w = train_windows(&train, job.lambda_rel, job.windows, n_channels)?;
            let m = test_gram(total, &w, nw);
            job.emit(&mut values, Task::Matrix, DecoderType::SubjectIndependent, cond, held.subject_id, &m)?;
        }
    }
    Ok(values)
}

/// NT values of every configuration of `band` accepted by the options.
pub fn run_band(cohort: &Cohort, band: BandName, opts: &GridOptions) -> Result<NtTable> {
    opts.validate()?;
    let mut table = NtTable::new();
    if !opts.filter.accepts_band(band) {
        return Ok(table);
    }
    if cohort.subjects.len() < 3 {
        return Err(Error::data("subject-independent decoding needs at least 3 subjects"));
    }
    let windows: Vec<usize> = canonical_windows()
        .into_iter()
        .filter(|w| opts.filter.windows.is_empty() || opts.filter.windows.contains(w))
        .collect();
    let story_end = opts.story_rows_end(cohort.stimuli.story_envelope.len())?;
    let job = Job {
        band,
        windows: &windows,
        lambda_rel: opts.lambda_rel,
        sentences: opts.sentences(&cohort.stimuli.boundaries)?,
        do_story: opts.filter.accepts_task(Task::Story),
        do_matrix: opts.filter.accepts_task(Task::Matrix),
    };
    let pre = BandPreprocessor::new(band)?;
    let feats = prepare_features(&pre, &cohort.stimuli)?;
    let passes = cohort
        .subjects
        .par_iter()
        .map(|s| subject_pass(&job, &feats, &prepare_subject(&pre, s)?, story_end))
        .collect::<Result<Vec<_>>>()?;
    let n_channels = cohort.spec.n_channels;
    let si = (0..passes.len())
        .into_par_iter()
        .map(|h| si_pass(&job, &passes, h, n_channels))
        .collect::<Result<Vec<_>>>()?;
    for v in passes.iter().flat_map(|p| p.values.iter()).chain(si.iter().flatten()) {
        table.insert(*v)?;
    }
    Ok(table)
}

/// NT values of every accepted configuration, band by band.
pub fn run_grid(cohort: &Cohort, opts: &GridOptions) -> Result<NtTable> {
    let mut table = NtTable::new();
    for band in BandName::ALL {
        table.extend(run_band(cohort, band, opts)?);
    }
    Ok(table)
}
