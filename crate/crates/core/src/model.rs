//! Monitoring log schema, labels and environment context.
//!
//! A motion log is JSONL: one `{"type":"record",...}` header line followed by
//! that record's `{"type":"frame",...}` lines. Every record is validated
//! against the frame and record invariants as it is read, and errors carry
//! the 1-based line number they were detected on.
//!
//! Quadrant layout inside the human bounding box (image coordinates, y grows
//! downwards):
//!
//! ```text
//!   +-----------+-----------+
//!   |  2 (TL)   |  1 (TR)   |
//!   +-----------+-----------+
//!   |  4 (BL)   |  3 (BR)   |
//!   +-----------+-----------+
//! ```
//!
//! so Top = {1,2}, Right = {1,3}, Left = {2,4}. `quadrant_stats[i]` holds
//! quadrant `i + 1`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NUM_OBJECTS: usize = 20;
pub const NUM_ACTIVITIES: usize = 5;
pub const NUM_QUADRANTS: usize = 4;

/// Axis-aligned pixel box. A box with zero width or height is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub const EMPTY: BBox = BBox { x: 0, y: 0, w: 0, h: 0 };

    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn is_empty(&self) -> bool {
        self.w == 0 || self.h == 0
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    fn right(&self) -> u64 {
        u64::from(self.x) + u64::from(self.w)
    }

    fn bottom(&self) -> u64 {
        u64::from(self.y) + u64::from(self.h)
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains(&self, other: &BBox) -> bool {
        other.x >= self.x && other.y >= self.y && other.right() <= self.right() && other.bottom() <= self.bottom()
    }

    /// Smallest box covering both; empty boxes are ignored.
    pub fn union(&self, other: &BBox) -> BBox {
        match (self.is_empty(), other.is_empty()) {
            (true, _) => *other,
            (_, true) => *self,
            _ => {
                let x = self.x.min(other.x);
                let y = self.y.min(other.y);
                let r = self.right().max(other.right());
                let b = self.bottom().max(other.bottom());
                BBox { x, y, w: (r - u64::from(x)) as u32, h: (b - u64::from(y)) as u32 }
            }
        }
    }

    /// Sub-box for quadrant index `q` (0 = top-right, 1 = top-left,
    /// 2 = bottom-right, 3 = bottom-left). Odd widths give the extra pixel to
    /// the right/bottom halves.
    pub fn quadrant(&self, q: usize) -> BBox {
        let lw = self.w / 2;
        let th = self.h / 2;
        let (x, w) = if q == 0 || q == 2 { (self.x + lw, self.w - lw) } else { (self.x, lw) };
        let (y, h) = if q < 2 { (self.y, th) } else { (self.y + th, self.h - th) };
        BBox { x, y, w, h }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuadrantStats {
    pub movement_pixel_count: u64,
    pub movement_bbox: BBox,
    pub mean_flow_magnitude: f64,
}

/// One per-frame motion measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMotionSummary {
    pub timestamp: f64,
    pub dt: f64,
    pub human_present: bool,
    pub human_bbox: BBox,
    pub human_pixel_count: u64,
    pub movement_pixel_count: u64,
    pub movement_bbox: BBox,
    pub mean_flow_magnitude: f64,
    pub quadrant_stats: [QuadrantStats; NUM_QUADRANTS],
}

impl FrameMotionSummary {
    /// A motionless frame with the given human box.
    pub fn still(timestamp: f64, dt: f64, human_bbox: BBox, human_pixel_count: u64) -> Self {
        Self {
            timestamp,
            dt,
            human_present: true,
            human_bbox,
            human_pixel_count,
            movement_pixel_count: 0,
            movement_bbox: BBox::EMPTY,
            mean_flow_magnitude: 0.0,
            quadrant_stats: [QuadrantStats::default(); NUM_QUADRANTS],
        }
    }

    pub fn is_moving(&self) -> bool {
        self.movement_pixel_count > 0
    }

    /// Checks the single-frame invariants.
    pub fn validate(&self) -> Result<(), Violation> {
        if !self.timestamp.is_finite() || self.timestamp < 0.0 {
            return Err(Violation::new(Invariant::NegativeTimestamp, format!("timestamp {}", self.timestamp)));
        }
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Violation::new(Invariant::NonPositiveDt, format!("dt {}", self.dt)));
        }
        let flows = std::iter::once(self.mean_flow_magnitude)
            .chain(self.quadrant_stats.iter().map(|q| q.mean_flow_magnitude));
        for flow in flows {
            if !flow.is_finite() || flow < 0.0 {
                return Err(Violation::new(Invariant::InvalidFlow, format!("flow magnitude {flow}")));
            }
        }
        if self.human_present && self.movement_pixel_count > self.human_pixel_count {
            return Err(Violation::new(
                Invariant::MovementExceedsHuman,
                format!("{} movement pixels > {} human pixels", self.movement_pixel_count, self.human_pixel_count),
            ));
        }
        let quad_sum: u64 = self.quadrant_stats.iter().map(|q| q.movement_pixel_count).sum();
        if quad_sum != self.movement_pixel_count {
            return Err(Violation::new(
                Invariant::QuadrantSumMismatch,
                format!("quadrants sum to {quad_sum}, frame reports {}", self.movement_pixel_count),
            ));
        }
        if !self.movement_bbox.is_empty() && !self.human_bbox.is_empty() && !self.human_bbox.contains(&self.movement_bbox) {
            return Err(Violation::new(
                Invariant::MovementBoxOutsideHuman,
                format!("{:?} not inside {:?}", self.movement_bbox, self.human_bbox),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TimeOfDay {
    /// 06:00–14:00
    T1,
    /// 14:00–22:00
    T2,
    /// 22:00–06:00
    T3,
}

impl TimeOfDay {
    pub const ALL: [TimeOfDay; 3] = [TimeOfDay::T1, TimeOfDay::T2, TimeOfDay::T3];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Feature encoding 1/2/3.
    pub fn code(self) -> f64 {
        (self.index() + 1) as f64
    }

    pub fn from_code(code: f64) -> Option<Self> {
        match code.round() as i64 {
            1 => Some(TimeOfDay::T1),
            2 => Some(TimeOfDay::T2),
            3 => Some(TimeOfDay::T3),
            _ => None,
        }
    }
}

/// Half-open 8-hour bins anchored at 06:00, 14:00 and 22:00.
pub fn time_of_day_bin(wall_clock: NaiveDateTime) -> TimeOfDay {
    match wall_clock.hour() {
        6..=13 => TimeOfDay::T1,
        14..=21 => TimeOfDay::T2,
        _ => TimeOfDay::T3,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("channel {channel} = {value} outside [0, 255]")]
pub struct LumaDomainError {
    pub channel: char,
    pub value: f64,
}

/// Rec. 601 luma of an RGB triple.
pub fn luma601(r: f64, g: f64, b: f64) -> Result<f64, LumaDomainError> {
    for (channel, value) in [('r', r), ('g', g), ('b', b)] {
        if !(0.0..=255.0).contains(&value) {
            return Err(LumaDomainError { channel, value });
        }
    }
    Ok(0.299 * r + 0.587 * g + 0.114 * b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvContext {
    pub lighting_luma: f64,
    pub time_of_day: TimeOfDay,
    pub weather_suitable: bool,
    pub object_likelihoods: [f64; NUM_OBJECTS],
}

impl EnvContext {
    pub fn validate(&self) -> Result<(), Violation> {
        if !(0.0..=255.0).contains(&self.lighting_luma) {
            return Err(Violation::new(Invariant::LumaOutOfRange, format!("lighting {}", self.lighting_luma)));
        }
        if let Some(p) = self.object_likelihoods.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Violation::new(Invariant::ObjectLikelihoodOutOfRange, format!("likelihood {p}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activity {
    Read,
    #[serde(rename = "pc", alias = "PC")]
    Pc,
    Eat,
    Nap,
    Watch,
    #[serde(alias = "UNKNOWN")]
    Unknown,
}

impl Activity {
    pub const ALL: [Activity; NUM_ACTIVITIES] =
        [Activity::Read, Activity::Pc, Activity::Eat, Activity::Nap, Activity::Watch];

    /// Index into [`Activity::ALL`]; `None` for `Unknown`.
    pub fn index(self) -> Option<usize> {
        match self {
            Activity::Unknown => None,
            a => Some(a as usize),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activity::Read => "read",
            Activity::Pc => "pc",
            Activity::Eat => "eat",
            Activity::Nap => "nap",
            Activity::Watch => "watch",
            Activity::Unknown => "unknown",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "read" => Some(Activity::Read),
            "pc" => Some(Activity::Pc),
            "eat" => Some(Activity::Eat),
            "nap" => Some(Activity::Nap),
            "watch" => Some(Activity::Watch),
            "unknown" => Some(Activity::Unknown),
            _ => None,
        }
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Health label. Same-day and next-day post-workout states both read as `Weak`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Health {
    Normal,
    #[serde(alias = "weakness", alias = "same_day_weak", alias = "next_day_weak")]
    Weak,
    #[serde(alias = "UNKNOWN")]
    Unknown,
}

impl Health {
    pub const BOTH: [Health; 2] = [Health::Normal, Health::Weak];

    pub fn index(self) -> Option<usize> {
        match self {
            Health::Normal => Some(0),
            Health::Weak => Some(1),
            Health::Unknown => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Health::Normal => "normal",
            Health::Weak => "weak",
            Health::Unknown => "unknown",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "normal" => Some(Health::Normal),
            "weak" | "weakness" | "same_day_weak" | "next_day_weak" => Some(Health::Weak),
            "unknown" => Some(Health::Unknown),
            _ => None,
        }
    }
}

impl fmt::Display for Health {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One activity session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitoringRecord {
    pub record_id: String,
    pub participant_id: String,
    pub wall_clock_start: NaiveDateTime,
    pub duration: f64,
    pub activity: Activity,
    pub health: Health,
    pub env: EnvContext,
    pub frames: Vec<FrameMotionSummary>,
}

impl MonitoringRecord {
    /// Record-level invariants. Frame-level checks are reported separately by
    /// the reader so they can carry their own line numbers; this also runs
    /// them, returning the offending frame index.
    pub fn validate(&self) -> Result<(), (Option<usize>, Violation)> {
        self.validate_header().map_err(|v| (None, v))?;
        for (i, frame) in self.frames.iter().enumerate() {
            frame.validate().map_err(|v| (Some(i), v))?;
            if i > 0 && frame.timestamp <= self.frames[i - 1].timestamp {
                return Err((
                    Some(i),
                    Violation::new(
                        Invariant::TimestampsNotIncreasing,
                        format!("{} after {}", frame.timestamp, self.frames[i - 1].timestamp),
                    ),
                ));
            }
        }
        self.validate_extent().map_err(|v| (None, v))
    }

    fn validate_header(&self) -> Result<(), Violation> {
        self.env.validate()?;
        let expected = time_of_day_bin(self.wall_clock_start);
        if expected != self.env.time_of_day {
            return Err(Violation::new(
                Invariant::TimeOfDayMismatch,
                format!("start {} is {:?}, env says {:?}", self.wall_clock_start, expected, self.env.time_of_day),
            ));
        }
        if !self.duration.is_finite() || self.duration <= 0.0 {
            return Err(Violation::new(Invariant::DurationMismatch, format!("duration {}", self.duration)));
        }
        Ok(())
    }

    fn validate_extent(&self) -> Result<(), Violation> {
        let Some(last) = self.frames.last() else {
            return Err(Violation::new(Invariant::EmptyRecord, "record has no frames".into()));
        };
        let end = last.timestamp + last.dt;
        if (self.duration - end).abs() > last.dt {
            return Err(Violation::new(
                Invariant::DurationMismatch,
                format!("duration {} but frames end at {end}", self.duration),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Left,
    Right,
    #[default]
    Unknown,
}

/// Per-participant metadata. `mirror` swaps image Left/Right so that the
/// "Left" features describe the participant's non-dominant side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipantMeta {
    pub id: String,
    #[serde(default)]
    pub handedness: Handedness,
    #[serde(default)]
    pub mirror: bool,
}

impl ParticipantMeta {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into(), handedness: Handedness::Unknown, mirror: false }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledDataset {
    pub records: Vec<MonitoringRecord>,
    pub participants: BTreeMap<String, ParticipantMeta>,
}

impl LabeledDataset {
    /// Builds a dataset, ordering records by (participant, wall clock, id) and
    /// adding default metadata for participants without an entry.
    pub fn new(
        mut records: Vec<MonitoringRecord>,
        mut participants: BTreeMap<String, ParticipantMeta>,
    ) -> Result<Self, LogError> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.record_id.as_str()) {
                return Err(LogError::Validation {
                    line: None,
                    record_id: r.record_id.clone(),
                    violation: Violation::new(Invariant::DuplicateRecordId, format!("'{}' appears twice", r.record_id)),
                });
            }
        }
        records.sort_by(|a, b| {
            (&a.participant_id, a.wall_clock_start, &a.record_id).cmp(&(&b.participant_id, b.wall_clock_start, &b.record_id))
        });
        for r in &records {
            participants.entry(r.participant_id.clone()).or_insert_with(|| ParticipantMeta::new(&r.participant_id));
        }
        Ok(Self { records, participants })
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn participant_ids(&self) -> Vec<String> {
        self.participants.keys().cloned().collect()
    }

    pub fn mirror_for(&self, participant: &str) -> bool {
        self.participants.get(participant).map(|p| p.mirror).unwrap_or(false)
    }

    pub fn records_of<'a>(&'a self, participant: &'a str) -> impl Iterator<Item = &'a MonitoringRecord> + 'a {
        self.records.iter().filter(move |r| r.participant_id == participant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Invariant {
    NegativeTimestamp,
    NonPositiveDt,
    InvalidFlow,
    MovementExceedsHuman,
    QuadrantSumMismatch,
    MovementBoxOutsideHuman,
    TimestampsNotIncreasing,
    LumaOutOfRange,
    ObjectLikelihoodOutOfRange,
    TimeOfDayMismatch,
    DurationMismatch,
    EmptyRecord,
    DuplicateRecordId,
    FrameWithoutRecord,
}

impl Invariant {
    pub fn name(self) -> &'static str {
        match self {
            Invariant::NegativeTimestamp => "timestamp_non_negative",
            Invariant::NonPositiveDt => "dt_positive",
            Invariant::InvalidFlow => "flow_non_negative",
            Invariant::MovementExceedsHuman => "movement_pixels_le_human_pixels",
            Invariant::QuadrantSumMismatch => "quadrant_pixels_sum_to_movement_pixels",
            Invariant::MovementBoxOutsideHuman => "movement_bbox_inside_human_bbox",
            Invariant::TimestampsNotIncreasing => "timestamps_strictly_increasing",
            Invariant::LumaOutOfRange => "lighting_luma_in_range",
            Invariant::ObjectLikelihoodOutOfRange => "object_likelihoods_in_unit_interval",
            Invariant::TimeOfDayMismatch => "time_of_day_matches_wall_clock",
            Invariant::DurationMismatch => "duration_matches_frames",
            Invariant::EmptyRecord => "record_has_frames",
            Invariant::DuplicateRecordId => "record_ids_unique",
            Invariant::FrameWithoutRecord => "frame_follows_record_header",
        }
    }
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub invariant: Invariant,
    pub detail: String,
}

impl Violation {
    pub fn new(invariant: Invariant, detail: String) -> Self {
        Self { invariant, detail }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.invariant, self.detail)
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("{}record '{record_id}': validation failed: {violation}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Validation { line: Option<usize>, record_id: String, violation: Violation },
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
}

impl LogError {
    pub fn invariant(&self) -> Option<Invariant> {
        match self {
            LogError::Validation { violation, .. } => Some(violation.invariant),
            _ => None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordHeader {
    record_id: String,
    participant_id: String,
    wall_clock_start: NaiveDateTime,
    duration: f64,
    activity: Activity,
    health: Health,
    env: EnvContext,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum LogLine {
    Record(RecordHeader),
    Frame(FrameMotionSummary),
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum LogLineRef<'a> {
    Record(RecordHeaderRef<'a>),
    Frame(&'a FrameMotionSummary),
}

#[derive(Serialize)]
struct RecordHeaderRef<'a> {
    record_id: &'a str,
    participant_id: &'a str,
    wall_clock_start: NaiveDateTime,
    duration: f64,
    activity: Activity,
    health: Health,
    env: &'a EnvContext,
}

struct PendingRecord {
    line: usize,
    header: RecordHeader,
    frames: Vec<FrameMotionSummary>,
}

impl PendingRecord {
    fn finish(self) -> Result<MonitoringRecord, LogError> {
        let record = MonitoringRecord {
            record_id: self.header.record_id,
            participant_id: self.header.participant_id,
            wall_clock_start: self.header.wall_clock_start,
            duration: self.header.duration,
            activity: self.header.activity,
            health: self.header.health,
            env: self.header.env,
            frames: self.frames,
        };
        record.validate_extent().map_err(|violation| LogError::Validation {
            line: Some(self.line),
            record_id: record.record_id.clone(),
            violation,
        })?;
        Ok(record)
    }
}

/// Reads and validates a JSONL motion log. Blank lines are skipped; an empty
/// input yields an empty dataset.
pub fn read_log<R: BufRead>(reader: R) -> Result<LabeledDataset, LogError> {
    let mut records = Vec::new();
    let mut pending: Option<PendingRecord> = None;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| LogError::Parse { line: lineno, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine =
            serde_json::from_str(&line).map_err(|e| LogError::Parse { line: lineno, message: e.to_string() })?;
        match parsed {
            LogLine::Record(header) => {
                if let Some(done) = pending.take() {
                    records.push(done.finish()?);
                }
                let invalid = |violation| LogError::Validation {
                    line: Some(lineno),
                    record_id: header.record_id.clone(),
                    violation,
                };
                header.env.validate().map_err(invalid)?;
                let expected = time_of_day_bin(header.wall_clock_start);
                if expected != header.env.time_of_day {
                    return Err(invalid(Violation::new(
                        Invariant::TimeOfDayMismatch,
                        format!("start {} is {:?}, env says {:?}", header.wall_clock_start, expected, header.env.time_of_day),
                    )));
                }
                if !header.duration.is_finite() || header.duration <= 0.0 {
                    return Err(invalid(Violation::new(Invariant::DurationMismatch, format!("duration {}", header.duration))));
                }
                pending = Some(PendingRecord { line: lineno, header, frames: Vec::new() });
            }
            LogLine::Frame(frame) => {
                let Some(current) = pending.as_mut() else {
                    return Err(LogError::Validation {
                        line: Some(lineno),
                        record_id: String::new(),
                        violation: Violation::new(Invariant::FrameWithoutRecord, "frame line before any record line".into()),
                    });
                };
                let invalid = |violation| LogError::Validation {
                    line: Some(lineno),
                    record_id: current.header.record_id.clone(),
                    violation,
                };
                frame.validate().map_err(invalid)?;
                if let Some(prev) = current.frames.last() {
                    if frame.timestamp <= prev.timestamp {
                        return Err(invalid(Violation::new(
                            Invariant::TimestampsNotIncreasing,
                            format!("{} after {}", frame.timestamp, prev.timestamp),
                        )));
                    }
                }
                current.frames.push(frame);
            }
        }
    }
    if let Some(done) = pending.take() {
        records.push(done.finish()?);
    }
    LabeledDataset::new(records, BTreeMap::new())
}

pub fn parse_log(path: &Path) -> Result<LabeledDataset, LogError> {
    let file = File::open(path).map_err(|source| LogError::Io { path: path.to_path_buf(), source })?;
    read_log(BufReader::new(file))
}

/// Writes one record (header line plus frame lines).
pub fn write_record<W: Write>(record: &MonitoringRecord, out: &mut W) -> std::io::Result<()> {
    let header = LogLineRef::Record(RecordHeaderRef {
        record_id: &record.record_id,
        participant_id: &record.participant_id,
        wall_clock_start: record.wall_clock_start,
        duration: record.duration,
        activity: record.activity,
        health: record.health,
        env: &record.env,
    });
    serde_json::to_writer(&mut *out, &header)?;
    out.write_all(b"\n")?;
    for frame in &record.frames {
        serde_json::to_writer(&mut *out, &LogLineRef::Frame(frame))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn serialize_log<'a, W: Write>(
    records: impl IntoIterator<Item = &'a MonitoringRecord>,
    out: &mut W,
) -> std::io::Result<()> {
    for record in records {
        write_record(record, out)?;
    }
    Ok(())
}

pub fn write_log(dataset: &LabeledDataset, path: &Path) -> Result<(), LogError> {
    let io = |source| LogError::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io)?;
    let mut out = BufWriter::new(file);
    serialize_log(&dataset.records, &mut out).map_err(io)?;
    out.flush().map_err(io)
}

/// Dataset manifest: record files (relative to the manifest) plus
/// participant metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub participants: Vec<ParticipantMeta>,
    pub files: Vec<String>,
}

pub const DATASET_MANIFEST: &str = "dataset.json";

/// Loads a dataset from a manifest file, a directory containing
/// `dataset.json`, or a single JSONL log.
pub fn load_dataset(path: &Path) -> Result<LabeledDataset, LogError> {
    let manifest_path = if path.is_dir() {
        path.join(DATASET_MANIFEST)
    } else if path.extension().is_some_and(|e| e == "json") {
        path.to_path_buf()
    } else {
        return parse_log(path);
    };
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|source| LogError::Io { path: manifest_path.clone(), source })?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| LogError::Manifest { path: manifest_path.clone(), message: e.to_string() })?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut records = Vec::new();
    for file in &manifest.files {
        let part = parse_log(&base.join(file))?;
        records.extend(part.records);
    }
    let participants = manifest.participants.into_iter().map(|p| (p.id.clone(), p)).collect();
    LabeledDataset::new(records, participants)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn at(h: u32, m: u32, s: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2024, 3, 4).unwrap().and_hms_opt(h, m, s).unwrap()
    }

    #[test]
    fn time_of_day_boundaries() {
        assert_eq!(time_of_day_bin(at(6, 0, 0)), TimeOfDay::T1);
        assert_eq!(time_of_day_bin(at(5, 59, 59)), TimeOfDay::T3);
        assert_eq!(time_of_day_bin(at(13, 59, 59)), TimeOfDay::T1);
        assert_eq!(time_of_day_bin(at(14, 0, 0)), TimeOfDay::T2);
        assert_eq!(time_of_day_bin(at(21, 59, 59)), TimeOfDay::T2);
        assert_eq!(time_of_day_bin(at(22, 0, 0)), TimeOfDay::T3);
        assert_eq!(time_of_day_bin(at(2, 30, 0)), TimeOfDay::T3);
    }

    #[test]
    fn luma_values() {
        assert_eq!(luma601(255.0, 255.0, 255.0).unwrap(), 255.0);
        assert_eq!(luma601(0.0, 0.0, 0.0).unwrap(), 0.0);
        assert!((luma601(255.0, 0.0, 0.0).unwrap() - 76.245).abs() < 1e-12);
        assert_eq!(luma601(256.0, 0.0, 0.0).unwrap_err().channel, 'r');
        assert!(luma601(0.0, -1.0, 0.0).is_err());
        assert!(luma601(0.0, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn bbox_quadrants_tile_the_box() {
        let b = BBox::new(10, 20, 7, 9);
        let area: u64 = (0..4).map(|q| b.quadrant(q).area()).sum();
        assert_eq!(area, b.area());
        assert!((0..4).all(|q| b.contains(&b.quadrant(q))));
        // quadrant 1 (index 0) is top-right
        assert!(b.quadrant(0).x > b.quadrant(1).x);
        assert!(b.quadrant(0).y < b.quadrant(2).y);
    }

    #[test]
    fn bbox_union_ignores_empty() {
        let a = BBox::new(0, 0, 2, 2);
        assert_eq!(a.union(&BBox::EMPTY), a);
        assert_eq!(BBox::EMPTY.union(&a), a);
        assert_eq!(a.union(&BBox::new(5, 5, 1, 1)), BBox::new(0, 0, 6, 6));
    }

    #[test]
    fn health_aliases_merge_weakness() {
        for raw in ["\"same_day_weak\"", "\"next_day_weak\"", "\"weak\""] {
            let h: Health = serde_json::from_str(raw).unwrap();
            assert_eq!(h, Health::Weak);
        }
        let a: Activity = serde_json::from_str("\"PC\"").unwrap();
        assert_eq!(a, Activity::Pc);
    }

    #[test]
    fn frame_invariants() {
        let hb = BBox::new(0, 0, 100, 100);
        let mut f = FrameMotionSummary::still(0.0, 0.1, hb, 50);
        assert!(f.validate().is_ok());
        f.movement_pixel_count = 60;
        f.quadrant_stats[0].movement_pixel_count = 60;
        assert_eq!(f.validate().unwrap_err().invariant, Invariant::MovementExceedsHuman);
        f.movement_pixel_count = 10;
        assert_eq!(f.validate().unwrap_err().invariant, Invariant::QuadrantSumMismatch);
        f.quadrant_stats[0].movement_pixel_count = 10;
        f.movement_bbox = BBox::new(90, 90, 20, 5);
        assert_eq!(f.validate().unwrap_err().invariant, Invariant::MovementBoxOutsideHuman);
        f.movement_bbox = BBox::new(90, 90, 10, 5);
        assert!(f.validate().is_ok());
        f.dt = 0.0;
        assert_eq!(f.validate().unwrap_err().invariant, Invariant::NonPositiveDt);
    }

    #[test]
    fn empty_input_is_empty_dataset() {
        let ds = read_log("".as_bytes()).unwrap();
        assert!(ds.is_empty());
        let ds = read_log("\n\n".as_bytes()).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn frame_before_header_is_rejected() {
        let frame = FrameMotionSummary::still(0.0, 0.1, BBox::new(0, 0, 4, 4), 8);
        let line = serde_json::to_string(&LogLineRef::Frame(&frame)).unwrap();
        let err = read_log(line.as_bytes()).unwrap_err();
        assert_eq!(err.invariant(), Some(Invariant::FrameWithoutRecord));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = read_log("\n{not json}\n".as_bytes()).unwrap_err();
        match err {
            LogError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
