//! Windowing, multi-level aggregation, feature and activity-subset selection
//! and the window-size sweep.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::cv::compact_groups;
use crate::classifiers::{ClassifierError, ClassifierKind, ClassifierSpec, Confusion, CvContext, LabeledMatrix};
use crate::features::{behavioral_columns, extract_window, window_frames, WindowRow, NUM_COLUMNS};
use crate::model::{Activity, Health, LabeledDataset, MonitoringRecord, NUM_ACTIVITIES};

/// Window sizes (seconds) of the standard sweep.
pub const SWEEP_WINDOWS: [f64; 6] = [30.0, 60.0, 120.0, 300.0, 600.0, 1200.0];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("cannot vote over an empty label list")]
    EmptyVote,
    #[error("no window rows to evaluate")]
    NoRows,
    #[error("window length must be positive, got {0}")]
    BadWindow(f64),
    #[error("coverage threshold must lie in [0, 1), got {0}")]
    BadCoverage(f64),
    #[error("predictions ({pred}) do not match rows ({rows})")]
    LengthMismatch { rows: usize, pred: usize },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowingConfig {
    pub window_seconds: f64,
    /// A trailing partial window is kept when at least this fraction of W.
    #[serde(default = "default_keep")]
    pub keep_partial: f64,
    /// Label returned by a tied majority vote.
    #[serde(default = "default_tie")]
    pub tie: Health,
    /// Hour at which a monitoring day (and the first 8-hour span) starts.
    #[serde(default = "default_day_start")]
    pub day_start_hour: u32,
}

fn default_keep() -> f64 {
    0.5
}

fn default_tie() -> Health {
    Health::Weak
}

fn default_day_start() -> u32 {
    6
}

impl WindowingConfig {
    pub fn new(window_seconds: f64) -> Self {
        Self { window_seconds, keep_partial: 0.5, tie: Health::Weak, day_start_hour: 6 }
    }
}

impl Default for WindowingConfig {
    fn default() -> Self {
        Self::new(300.0)
    }
}

/// `[t0, t1)` windows of a record of length `duration`. Full windows start
/// at multiples of `w`; a trailing partial window is kept if it spans at
/// least `keep * w`; a record shorter than that is one whole-record window.
pub fn segment_windows(duration: f64, w: f64, keep: f64) -> Result<Vec<(f64, f64)>, PipelineError> {
    if !(w > 0.0) || !w.is_finite() {
        return Err(PipelineError::BadWindow(w));
    }
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let t0 = k as f64 * w;
        let t1 = (k + 1) as f64 * w;
        if t1 <= duration + 1e-9 {
            out.push((t0, t1));
        } else {
            if duration - t0 >= keep * w - 1e-9 && duration - t0 > 1e-9 {
                out.push((t0, duration));
            }
            break;
        }
        k += 1;
    }
    if out.is_empty() && duration > 0.0 {
        out.push((0.0, duration));
    }
    Ok(out)
}

/// Day key and 8-hour bin (0, 1, 2) of a wall-clock time, where day `d`
/// runs from `day_start_hour` on `d` to `day_start_hour` on `d + 1`.
pub fn span_of(wall_clock: NaiveDateTime, day_start_hour: u32) -> (NaiveDate, u8) {
    let shifted = wall_clock - Duration::hours(i64::from(day_start_hour));
    (shifted.date(), (shifted.hour() / 8) as u8)
}

fn day_number(day: NaiveDate) -> i64 {
    day.signed_duration_since(NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date")).num_days()
}

/// Window rows of one record.
pub fn featurize_record(record: &MonitoringRecord, mirror: bool, cfg: &WindowingConfig) -> Result<Vec<WindowRow>, PipelineError> {
    let (day, _) = span_of(record.wall_clock_start, cfg.day_start_hour);
    let windows = segment_windows(record.duration, cfg.window_seconds, cfg.keep_partial)?;
    let mut rows = Vec::with_capacity(windows.len());
    for (t0, t1) in windows {
        let win = window_frames(&record.frames, t0, t1);
        if win.is_empty() {
            warn!("record {}: no frames in window [{t0}, {t1}); skipped", record.record_id);
            continue;
        }
        rows.push(WindowRow {
            record_id: record.record_id.clone(),
            participant: record.participant_id.clone(),
            window_index: rows.len(),
            t0,
            t1,
            day_index: day_number(day),
            wall_clock_start: record.wall_clock_start,
            activity: record.activity,
            health: record.health,
            features: extract_window(win, &record.env, mirror),
        });
    }
    Ok(rows)
}

/// Window rows of every record, in dataset order.
pub fn featurize_dataset(dataset: &LabeledDataset, cfg: &WindowingConfig) -> Result<Vec<WindowRow>, PipelineError> {
    let per: Vec<Vec<WindowRow>> = dataset
        .records
        .par_iter()
        .map(|r| featurize_record(r, dataset.mirror_for(&r.participant_id), cfg))
        .collect::<Result<_, _>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Most frequent label; an exact tie between normal and weak gives `tie`.
/// Unknown labels are ignored unless nothing else is present.
pub fn majority_vote(labels: &[Health], tie: Health) -> Result<Health, PipelineError> {
    if labels.is_empty() {
        return Err(PipelineError::EmptyVote);
    }
    let weak = labels.iter().filter(|&&h| h == Health::Weak).count();
    let normal = labels.iter().filter(|&&h| h == Health::Normal).count();
    Ok(match weak.cmp(&normal) {
        std::cmp::Ordering::Greater => Health::Weak,
        std::cmp::Ordering::Less => Health::Normal,
        std::cmp::Ordering::Equal if weak == 0 => Health::Unknown,
        std::cmp::Ordering::Equal => tie,
    })
}

/// A record-level label with the information needed to place it in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordLabel {
    pub participant: String,
    pub record_id: String,
    pub wall_clock_start: NaiveDateTime,
    pub health: Health,
}

pub type SpanKey = (String, NaiveDate, u8);
pub type DayKey = (String, NaiveDate);

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpanLabels {
    pub eight_hour: BTreeMap<SpanKey, Health>,
    pub daily: BTreeMap<DayKey, Health>,
}

/// Majority votes of record labels within each participant's 8-hour spans
/// and days.
pub fn aggregate_spans(records: &[RecordLabel], cfg: &WindowingConfig) -> Result<SpanLabels, PipelineError> {
    let mut spans: BTreeMap<SpanKey, Vec<Health>> = BTreeMap::new();
    let mut days: BTreeMap<DayKey, Vec<Health>> = BTreeMap::new();
    for r in records {
        let (day, bin) = span_of(r.wall_clock_start, cfg.day_start_hour);
        spans.entry((r.participant.clone(), day, bin)).or_default().push(r.health);
        days.entry((r.participant.clone(), day)).or_default().push(r.health);
    }
    Ok(SpanLabels {
        eight_hour: spans.into_iter().map(|(k, v)| Ok((k, majority_vote(&v, cfg.tie)?))).collect::<Result<_, PipelineError>>()?,
        daily: days.into_iter().map(|(k, v)| Ok((k, majority_vote(&v, cfg.tie)?))).collect::<Result<_, PipelineError>>()?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Window,
    Record,
    EightHour,
    Day,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::Window, Level::Record, Level::EightHour, Level::Day];

    pub fn name(self) -> &'static str {
        match self {
            Level::Window => "window",
            Level::Record => "record",
            Level::EightHour => "8h",
            Level::Day => "day",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelScore {
    pub level: Level,
    pub n: usize,
    pub f1_micro: f64,
    pub f1_macro: f64,
    pub confusion: Confusion,
}

/// Scores out-of-fold window predictions at every aggregation level. Truth
/// labels are aggregated with the same votes as the predictions.
pub fn evaluate_levels(
    rows: &[WindowRow],
    evaluated: &[usize],
    predictions: &[Health],
    cfg: &WindowingConfig,
) -> Result<Vec<LevelScore>, PipelineError> {
    if evaluated.len() != predictions.len() {
        return Err(PipelineError::LengthMismatch { rows: evaluated.len(), pred: predictions.len() });
    }
    if evaluated.is_empty() {
        return Err(PipelineError::NoRows);
    }
    let truth_w: Vec<Health> = evaluated.iter().map(|&i| rows[i].health).collect();
    let mut per_record: BTreeMap<(&str, &str), (NaiveDateTime, Vec<Health>, Vec<Health>)> = BTreeMap::new();
    for (&i, &p) in evaluated.iter().zip(predictions) {
        let r = &rows[i];
        let e = per_record.entry((r.participant.as_str(), r.record_id.as_str())).or_insert((r.wall_clock_start, Vec::new(), Vec::new()));
        e.1.push(r.health);
        e.2.push(p);
    }
    let mut truth_r = Vec::new();
    let mut pred_r = Vec::new();
    for ((participant, record_id), (wall, t, p)) in &per_record {
        let label = |health| RecordLabel {
            participant: participant.to_string(),
            record_id: record_id.to_string(),
            wall_clock_start: *wall,
            health,
        };
        truth_r.push(label(majority_vote(t, cfg.tie)?));
        pred_r.push(label(majority_vote(p, cfg.tie)?));
    }
    let truth_s = aggregate_spans(&truth_r, cfg)?;
    let pred_s = aggregate_spans(&pred_r, cfg)?;
    let score = |level, t: Vec<Health>, p: Vec<Health>| -> Result<LevelScore, PipelineError> {
        let confusion = Confusion::from_labels(&t, &p)?;
        Ok(LevelScore { level, n: t.len(), f1_micro: confusion.f1_micro(), f1_macro: confusion.f1_macro(), confusion })
    };
    Ok(vec![
        score(Level::Window, truth_w, predictions.to_vec())?,
        score(Level::Record, truth_r.iter().map(|r| r.health).collect(), pred_r.iter().map(|r| r.health).collect())?,
        score(Level::EightHour, truth_s.eight_hour.values().copied().collect(), pred_s.eight_hour.values().copied().collect())?,
        score(Level::Day, truth_s.daily.values().copied().collect(), pred_s.daily.values().copied().collect())?,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionOptions {
    #[serde(default = "default_max_features")]
    pub max_features: usize,
    #[serde(default = "default_coverage")]
    pub coverage_min: f64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Leave the most frequent activity out as a singleton subset.
    #[serde(default = "default_true")]
    pub exclude_top_singleton: bool,
    /// Search activity subsets; when false all activities are used.
    #[serde(default = "default_true")]
    pub search_subsets: bool,
}

fn default_max_features() -> usize {
    30
}

fn default_coverage() -> f64 {
    0.4
}

fn default_folds() -> usize {
    5
}

fn default_true() -> bool {
    true
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self { max_features: 30, coverage_min: 0.4, folds: 5, exclude_top_singleton: true, search_subsets: true }
    }
}

/// Candidate columns for forward selection. The Bayesian network always
/// conditions on the environment nodes, so it selects among behavioral
/// columns only.
pub fn candidate_columns(kind: ClassifierKind) -> Vec<usize> {
    match kind {
        ClassifierKind::BayesNet => behavioral_columns().collect(),
        _ => (0..NUM_COLUMNS).collect(),
    }
}

/// Greedy forward selection trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardTrace {
    /// Columns in order of entry.
    pub order: Vec<usize>,
    /// CV F1-macro after each entry.
    pub f1: Vec<f64>,
    /// Length of the best prefix (shortest among ties).
    pub best_len: usize,
}

impl ForwardTrace {
    pub fn selected(&self) -> &[usize] {
        &self.order[..self.best_len]
    }

    pub fn best_f1(&self) -> f64 {
        if self.best_len == 0 {
            0.0
        } else {
            self.f1[self.best_len - 1]
        }
    }
}

/// Adds, one at a time, the candidate giving the highest CV F1-macro (ties
/// to the lower column) until `max_features` are in or candidates run out.
pub fn forward_select(ctx: &CvContext<'_>, candidates: &[usize], max_features: usize) -> Result<ForwardTrace, PipelineError> {
    let mut remaining: Vec<usize> = candidates.to_vec();
    remaining.sort_unstable();
    remaining.dedup();
    let mut order = Vec::new();
    let mut f1 = Vec::new();
    while !remaining.is_empty() && order.len() < max_features {
        let groups: Vec<Vec<usize>> = remaining.iter().map(|&c| vec![c]).collect();
        let scores = ctx.score_extensions(&order, &groups)?;
        let mut best = 0;
        for i in 1..scores.len() {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        order.push(remaining.remove(best));
        f1.push(scores[best]);
    }
    let mut best_len = 0;
    for (i, &v) in f1.iter().enumerate() {
        if best_len == 0 || v > f1[best_len - 1] {
            best_len = i + 1;
        }
    }
    Ok(ForwardTrace { order, f1, best_len })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetOutcome {
    pub activities: Vec<Activity>,
    pub samples: usize,
    pub coverage: f64,
    pub f1_macro: f64,
    pub n_features: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub activities: Vec<Activity>,
    /// Selected columns, in order of entry.
    pub features: Vec<usize>,
    /// F1-macro after each forward step of the winning subset.
    pub trace: Vec<f64>,
    pub trace_order: Vec<usize>,
    pub f1_macro: f64,
    pub coverage: f64,
    /// No subset met the coverage constraint; all activities were used.
    pub fallback: bool,
    pub subsets: Vec<SubsetOutcome>,
}

fn subset_rows(data: &LabeledMatrix, rows: &[usize], mask: u32) -> Vec<usize> {
    rows.iter()
        .copied()
        .filter(|&r| data.activity[r].index().map(|a| mask & (1 << a) != 0).unwrap_or(false))
        .collect()
}

fn mask_activities(mask: u32) -> Vec<Activity> {
    Activity::ALL.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, &a)| a).collect()
}

/// Both classes present, every row labeled and at least `k` groups.
fn evaluable(data: &LabeledMatrix, rows: &[usize], k: usize) -> bool {
    if rows.iter().any(|&r| data.health[r] == Health::Unknown) {
        return false;
    }
    let (_, groups) = compact_groups(data, rows);
    groups.contains(&Health::Weak) && groups.contains(&Health::Normal) && groups.len() >= k
}

/// Searches activity subsets whose sample coverage exceeds
/// `coverage_min`, running forward selection on each, and keeps the best
/// (F1-macro, then larger coverage, then lexicographically smaller subset).
pub fn search_activity_subsets(
    spec: &ClassifierSpec,
    data: &LabeledMatrix,
    rows: &[usize],
    opts: &SelectionOptions,
) -> Result<SelectionResult, PipelineError> {
    if !(0.0..1.0).contains(&opts.coverage_min) {
        return Err(PipelineError::BadCoverage(opts.coverage_min));
    }
    if rows.is_empty() {
        return Err(PipelineError::NoRows);
    }
    let total = rows.len() as f64;
    let mut counts = [0usize; NUM_ACTIVITIES];
    for &r in rows {
        if let Some(a) = data.activity[r].index() {
            counts[a] += 1;
        }
    }
    let top = (0..NUM_ACTIVITIES).fold(0, |b, a| if counts[a] > counts[b] { a } else { b });
    let all_mask = (1 << NUM_ACTIVITIES) - 1;
    let mut masks: Vec<u32> = Vec::new();
    for mask in 1u32..(1 << NUM_ACTIVITIES) {
        if !opts.search_subsets {
            masks.push(all_mask);
            break;
        }
        if opts.exclude_top_singleton && mask == 1 << top {
            continue;
        }
        let n = subset_rows(data, rows, mask).len();
        if n as f64 / total > opts.coverage_min && (0..NUM_ACTIVITIES).all(|a| mask & (1 << a) == 0 || counts[a] > 0) {
            masks.push(mask);
        }
    }
    let mut fallback = false;
    if masks.is_empty() {
        warn!("no activity subset covers more than {} of the samples; using all activities", opts.coverage_min);
        fallback = true;
        masks.push(all_mask);
    }
    let candidates = candidate_columns(spec.kind);
    let outcomes: Vec<Option<(u32, Vec<usize>, ForwardTrace)>> = masks
        .iter()
        .map(|&mask| {
            let sub = if mask == all_mask { rows.to_vec() } else { subset_rows(data, rows, mask) };
            if !evaluable(data, &sub, opts.folds) {
                return Ok(None);
            }
            let ctx = CvContext::new(spec, data, &sub, opts.folds, spec.seed)?;
            let trace = forward_select(&ctx, &candidates, opts.max_features)?;
            Ok(Some((mask, sub, trace)))
        })
        .collect::<Result<_, PipelineError>>()?;
    let mut best: Option<(u32, usize, &ForwardTrace)> = None;
    let mut subsets = Vec::new();
    for (mask, sub, trace) in outcomes.iter().flatten() {
        subsets.push(SubsetOutcome {
            activities: mask_activities(*mask),
            samples: sub.len(),
            coverage: sub.len() as f64 / total,
            f1_macro: trace.best_f1(),
            n_features: trace.best_len,
        });
        let better = match best {
            None => true,
            Some((bm, bn, bt)) => {
                let (f, bf) = (trace.best_f1(), bt.best_f1());
                f > bf
                    || (f == bf && sub.len() > bn)
                    || (f == bf && sub.len() == bn && subset_key(*mask) < subset_key(bm))
            }
        };
        if better {
            best = Some((*mask, sub.len(), trace));
        }
    }
    let (mask, n, trace) = best.ok_or(PipelineError::Classifier(ClassifierError::SingleClass))?;
    Ok(SelectionResult {
        activities: mask_activities(mask),
        features: trace.selected().to_vec(),
        trace: trace.f1.clone(),
        trace_order: trace.order.clone(),
        f1_macro: trace.best_f1(),
        coverage: n as f64 / total,
        fallback,
        subsets,
    })
}

fn subset_key(mask: u32) -> Vec<usize> {
    (0..NUM_ACTIVITIES).filter(|a| mask & (1 << a) != 0).collect()
}

/// Selection plus multi-level out-of-fold evaluation for one participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantResult {
    pub participant: String,
    pub window_seconds: f64,
    pub windows: usize,
    pub selection: SelectionResult,
    pub levels: Vec<LevelScore>,
}

impl ParticipantResult {
    pub fn level(&self, level: Level) -> &LevelScore {
        self.levels.iter().find(|l| l.level == level).expect("all levels are scored")
    }
}

/// Runs subset search and evaluation on one participant's window rows.
pub fn run_participant(
    spec: &ClassifierSpec,
    rows: &[WindowRow],
    opts: &SelectionOptions,
    cfg: &WindowingConfig,
) -> Result<ParticipantResult, PipelineError> {
    let first = rows.first().ok_or(PipelineError::NoRows)?;
    let data = LabeledMatrix::from_rows(rows);
    let all: Vec<usize> = (0..rows.len()).collect();
    let selection = search_activity_subsets(spec, &data, &all, opts)?;
    let sub = if selection.fallback || !opts.search_subsets {
        all.clone()
    } else {
        all.iter().copied().filter(|&r| selection.activities.contains(&data.activity[r])).collect()
    };
    let ctx = CvContext::new(spec, &data, &sub, opts.folds, spec.seed)?;
    let report = ctx.evaluate(&selection.features)?;
    let levels = evaluate_levels(rows, &report.rows, &report.predictions, cfg)?;
    Ok(ParticipantResult {
        participant: first.participant.clone(),
        window_seconds: cfg.window_seconds,
        windows: rows.len(),
        selection,
        levels,
    })
}

/// Splits rows by participant, preserving order.
pub fn rows_by_participant(rows: Vec<WindowRow>) -> BTreeMap<String, Vec<WindowRow>> {
    let mut out: BTreeMap<String, Vec<WindowRow>> = BTreeMap::new();
    for r in rows {
        out.entry(r.participant.clone()).or_default().push(r);
    }
    out
}

/// One line of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub participant: String,
    pub window_seconds: f64,
    /// Every record was shorter than the partial-window threshold.
    pub whole_records_only: bool,
    pub result: ParticipantResult,
}

/// Sweep over pre-featurized rows, one entry per window size.
pub fn sweep_rows(
    spec: &ClassifierSpec,
    per_window: &[(f64, Vec<WindowRow>)],
    opts: &SelectionOptions,
    cfg: &WindowingConfig,
) -> Result<Vec<SweepRow>, PipelineError> {
    let mut out = Vec::new();
    for (w, rows) in per_window {
        let cfg_w = WindowingConfig { window_seconds: *w, ..*cfg };
        for (participant, prow) in rows_by_participant(rows.clone()) {
            let whole = prow.iter().all(|r| r.window_index == 0 && r.t1 - r.t0 < cfg_w.keep_partial * w);
            if whole {
                warn!("{participant}: W={w}s exceeds every record; whole-record windows used");
            }
            let result = run_participant(spec, &prow, opts, &cfg_w)?;
            out.push(SweepRow { participant, window_seconds: *w, whole_records_only: whole, result });
        }
    }
    Ok(out)
}

/// Featurizes the dataset at each window size and runs the sweep.
pub fn sweep_windows(
    spec: &ClassifierSpec,
    dataset: &LabeledDataset,
    windows: &[f64],
    opts: &SelectionOptions,
    cfg: &WindowingConfig,
) -> Result<Vec<SweepRow>, PipelineError> {
    let per_window = windows
        .iter()
        .map(|&w| Ok((w, featurize_dataset(dataset, &WindowingConfig { window_seconds: w, ..*cfg })?)))
        .collect::<Result<Vec<_>, PipelineError>>()?;
    sweep_rows(spec, &per_window, opts, cfg)
}

/// CSV table: participant, W, level, F1-micro, F1-macro, n.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["participant", "window_seconds", "level", "f1_micro", "f1_macro", "n"]).expect("in-memory write");
    for r in rows {
        for l in &r.result.levels {
            w.write_record([
                r.participant.clone(),
                crate::features::format_float(r.window_seconds),
                l.level.name().to_string(),
                crate::features::format_float(l.f1_micro),
                crate::features::format_float(l.f1_macro),
                l.n.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn at(d: u32, h: u32, m: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2024, 3, d).unwrap().and_hms_opt(h, m, 0).unwrap()
    }

    #[test]
    fn window_examples() {
        assert_eq!(segment_windows(700.0, 300.0, 0.5).unwrap(), vec![(0.0, 300.0), (300.0, 600.0)]);
        assert_eq!(segment_windows(900.0, 300.0, 0.5).unwrap().len(), 3);
        assert_eq!(segment_windows(100.0, 300.0, 0.5).unwrap(), vec![(0.0, 100.0)]);
        assert_eq!(segment_windows(760.0, 300.0, 0.5).unwrap().last(), Some(&(600.0, 760.0)));
        assert!(segment_windows(10.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn votes() {
        use Health::*;
        assert_eq!(majority_vote(&[Weak, Weak, Normal], Weak).unwrap(), Weak);
        assert_eq!(majority_vote(&[Normal, Weak], Weak).unwrap(), Weak);
        assert_eq!(majority_vote(&[Normal, Weak], Normal).unwrap(), Normal);
        assert!(majority_vote(&[], Weak).is_err());
    }

    #[test]
    fn span_bins() {
        assert_eq!(span_of(at(5, 7, 0), 6), span_of(at(5, 13, 0), 6));
        assert_eq!(span_of(at(5, 2, 0), 6), (NaiveDate::from_ymd_opt(2024, 3, 4).unwrap(), 2));
        assert_eq!(span_of(at(5, 22, 0), 6).1, 2);
        assert_eq!(span_of(at(5, 14, 0), 6).1, 1);
        assert_eq!(span_of(at(5, 5, 59), 6).0, NaiveDate::from_ymd_opt(2024, 3, 4).unwrap());
    }

    #[test]
    fn single_record_day() {
        let r = RecordLabel { participant: "p".into(), record_id: "r".into(), wall_clock_start: at(5, 9, 0), health: Health::Weak };
        let s = aggregate_spans(&[r], &WindowingConfig::default()).unwrap();
        assert_eq!(s.daily.values().copied().collect::<Vec<_>>(), vec![Health::Weak]);
    }
}
