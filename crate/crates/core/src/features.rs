//! Window feature extraction.
//!
//! A window's frames are split into inactivity segments (motionless runs of at
//! least one second) and movement segments (everything else). The 66 features
//! are laid out in 85 numeric columns: F1–F3, the 20 object likelihoods of F4,
//! then F5–F66.

use std::fmt;
use std::io::Write;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BBox, EnvContext, FrameMotionSummary, NUM_OBJECTS};

pub const NUM_FEATURES: usize = 66;
pub const NUM_COLUMNS: usize = 85;
/// First behavioral column (F5).
pub const BEHAVIORAL_START: usize = 23;
pub const MIN_INACTIVITY_SECONDS: f64 = 1.0;

const EPS_TIME: f64 = 1e-9;

/// Column index of feature `Fk` (k in 1..=66). F4 maps to its first object
/// column.
pub const fn column_of(k: usize) -> usize {
    match k {
        1 => 0,
        2 => 1,
        3 => 2,
        4 => 3,
        _ => k + 18,
    }
}

/// The 1-based feature number owning `column`.
pub const fn feature_of_column(column: usize) -> usize {
    match column {
        0 => 1,
        1 => 2,
        2 => 3,
        3..=22 => 4,
        c => c - 18,
    }
}

/// Columns that make up feature `Fk`.
pub fn columns_of_feature(k: usize) -> Range<usize> {
    if k == 4 {
        3..3 + NUM_OBJECTS
    } else {
        let c = column_of(k);
        c..c + 1
    }
}

pub fn behavioral_columns() -> Range<usize> {
    BEHAVIORAL_START..NUM_COLUMNS
}

/// CSV/column header name: `F1`, `F4_07`, `F31`, ...
pub fn column_name(column: usize) -> String {
    match column {
        3..=22 => format!("F4_{:02}", column - 2),
        c => format!("F{}", feature_of_column(c)),
    }
}

pub fn column_from_name(name: &str) -> Option<usize> {
    let rest = name.strip_prefix('F')?;
    if let Some(obj) = rest.strip_prefix("4_") {
        let i: usize = obj.parse().ok()?;
        return (1..=NUM_OBJECTS).contains(&i).then_some(i + 2);
    }
    let k: usize = rest.parse().ok()?;
    ((1..=NUM_FEATURES).contains(&k) && k != 4).then(|| column_of(k))
}

const LABELS: [&str; NUM_FEATURES] = [
    "Lighting",
    "TimeOfDay",
    "Weather",
    "Objects",
    "Duration",
    "Inact.Ratio",
    "Inact.No.",
    "Move.Duration",
    "Move.Ratio",
    "Pixel",
    "Pixel(MPO)",
    "Density",
    "Density(MPO)",
    "Scale",
    "Scale(MPO)",
    "V",
    "V(MPO)",
    "VSTD(MPO)",
    "Distance",
    "VQ1",
    "VQ2",
    "VQ3",
    "VQ4",
    "VQ1(MPO)",
    "VQ2(MPO)",
    "VQ3(MPO)",
    "VQ4(MPO)",
    "VSTD",
    "V(T-MPO)",
    "V(R-MPO)",
    "V(L-MPO)",
    "Scale(T-MPO)",
    "Scale(R-MPO)",
    "Scale(L-MPO)",
    "Density(T-MPO)",
    "Density(R-MPO)",
    "Density(L-MPO)",
    "V(T)",
    "V(R)",
    "V(L)",
    "Scale(T)",
    "Scale(R)",
    "Scale(L)",
    "Density(T)",
    "Density(R)",
    "Density(L)",
    "Inact.1-2s",
    "Inact.2-5s",
    "Inact.5-10s",
    "Inact.10-30s",
    "Inact.30-60s",
    "Inact.geq60s",
    "Inact.geq2s",
    "Inact.geq5s",
    "Inact.geq10s",
    "Inact.geq30s",
    "Move.1-2s",
    "Move.2-5s",
    "Move.5-10s",
    "Move.10-30s",
    "Move.30-60s",
    "Move.geq60s",
    "Move.geq2s",
    "Move.geq5s",
    "Move.geq10s",
    "Move.geq30s",
];

/// Short human-readable label of feature `Fk`.
pub fn feature_label(k: usize) -> &'static str {
    LABELS[k - 1]
}

pub fn feature_by_label(label: &str) -> Option<usize> {
    LABELS.iter().position(|l| *l == label).map(|i| i + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Inactivity,
    Movement,
}

/// A maximal run of frames. `end` is the last frame's timestamp plus its dt;
/// `duration` is the summed dt of the frames in the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: f64,
    pub end: f64,
    pub duration: f64,
    pub first_frame: usize,
    pub frame_count: usize,
}

impl Segment {
    pub fn frames(&self) -> Range<usize> {
        self.first_frame..self.first_frame + self.frame_count
    }
}

/// Splits frames into inactivity and movement segments. A frame moves iff it
/// has movement pixels; motionless runs lasting at least one second are
/// inactivity, and the remaining runs are movement.
pub fn derive_segments(frames: &[FrameMotionSummary]) -> Vec<Segment> {
    let mut inactive = vec![false; frames.len()];
    let mut i = 0;
    while i < frames.len() {
        if frames[i].is_moving() {
            i += 1;
            continue;
        }
        let start = i;
        let mut dur = 0.0;
        while i < frames.len() && !frames[i].is_moving() {
            dur += frames[i].dt;
            i += 1;
        }
        if dur >= MIN_INACTIVITY_SECONDS - EPS_TIME {
            inactive[start..i].iter_mut().for_each(|f| *f = true);
        }
    }
    let mut segments = Vec::new();
    let mut i = 0;
    while i < frames.len() {
        let kind = if inactive[i] { SegmentKind::Inactivity } else { SegmentKind::Movement };
        let start = i;
        let mut dur = 0.0;
        while i < frames.len() && inactive[i] == inactive[start] {
            dur += frames[i].dt;
            i += 1;
        }
        let last = &frames[i - 1];
        segments.push(Segment {
            kind,
            start: frames[start].timestamp,
            end: last.timestamp + last.dt,
            duration: dur,
            first_frame: start,
            frame_count: i - start,
        });
    }
    segments
}

/// Lower edges of the six disjoint duration buckets. The first bucket also
/// absorbs movement runs shorter than one second.
pub const BUCKET_EDGES: [f64; 6] = [1.0, 2.0, 5.0, 10.0, 30.0, 60.0];

fn bucket_of(d: f64) -> usize {
    let d = d + EPS_TIME;
    BUCKET_EDGES.iter().rposition(|e| d >= *e).unwrap_or(0)
}

/// Percent of durations in [1,2), [2,5), [5,10), [10,30), [30,60), [60,∞),
/// then the cumulative [2,∞), [5,∞), [10,∞), [30,∞). All zeros when empty.
pub fn duration_distribution(durations: &[f64]) -> [f64; 10] {
    let mut out = [0.0; 10];
    if durations.is_empty() {
        return out;
    }
    let mut counts = [0usize; 6];
    for d in durations {
        counts[bucket_of(*d)] += 1;
    }
    let n = durations.len() as f64;
    for b in 0..6 {
        out[b] = 100.0 * counts[b] as f64 / n;
    }
    for c in 0..4 {
        let tail: usize = counts[c + 1..].iter().sum();
        out[6 + c] = 100.0 * tail as f64 / n;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("window [{t0}, {t1}) contains no frames")]
    EmptyWindow { t0: f64, t1: f64 },
    #[error("empty speed series")]
    EmptySeries,
}

/// Means of the four dt-weighted quartile bands of `(value, weight)` samples.
pub fn quartile_means(samples: &[(f64, f64)]) -> Result<[f64; 4], FeatureError> {
    let total: f64 = samples.iter().map(|s| s.1).sum();
    if samples.is_empty() || total <= 0.0 {
        return Err(FeatureError::EmptySeries);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let band = total / 4.0;
    let mut sums = [0.0; 4];
    let mut lo = 0.0;
    for (v, w) in sorted {
        let hi = lo + w;
        for (k, sum) in sums.iter_mut().enumerate() {
            let b_lo = band * k as f64;
            let b_hi = if k == 3 { total } else { band * (k + 1) as f64 };
            let overlap = hi.min(b_hi) - lo.max(b_lo);
            if overlap > 0.0 {
                *sum += v * overlap;
            }
        }
        lo = hi;
    }
    Ok(sums.map(|s| s / band))
}

/// A full feature row with an "undefined" bit per column for features whose
/// denominator was empty (their value is 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub undefined: Vec<bool>,
}

impl FeatureVector {
    pub fn zeros() -> Self {
        Self { values: vec![0.0; NUM_COLUMNS], undefined: vec![false; NUM_COLUMNS] }
    }

    /// Value of `Fk` (for F4, the first object column).
    pub fn get(&self, k: usize) -> f64 {
        self.values[column_of(k)]
    }

    pub fn is_undefined(&self, k: usize) -> bool {
        self.undefined[column_of(k)]
    }

    fn set(&mut self, k: usize, v: Option<f64>) {
        let c = column_of(k);
        match v {
            Some(x) => self.values[c] = x,
            None => {
                self.values[c] = 0.0;
                self.undefined[c] = true;
            }
        }
    }
}

impl fmt::Display for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in 1..=NUM_FEATURES {
            let mark = if self.is_undefined(k) { "*" } else { "" };
            writeln!(f, "F{k:<3}{:<16}{}{mark}", feature_label(k), self.get(k))?;
        }
        Ok(())
    }
}

#[derive(Default, Clone, Copy)]
struct WeightedMean {
    sum: f64,
    weight: f64,
}

impl WeightedMean {
    fn add(&mut self, v: f64, w: f64) {
        self.sum += v * w;
        self.weight += w;
    }

    fn get(&self) -> Option<f64> {
        (self.weight > 0.0).then(|| self.sum / self.weight)
    }
}

/// Region quadrant indices for Top, Right, Left (image sides).
const REGIONS: [[usize; 2]; 3] = [[0, 1], [0, 2], [1, 3]];

fn region_quadrants(mirror: bool) -> [[usize; 2]; 3] {
    if mirror {
        [REGIONS[0], REGIONS[2], REGIONS[1]]
    } else {
        REGIONS
    }
}

struct RegionFrame {
    speed: f64,
    density: Option<f64>,
    scale: Option<f64>,
}

fn region_stats(frame: &FrameMotionSummary, quads: [usize; 2]) -> RegionFrame {
    let q = quads.map(|i| &frame.quadrant_stats[i]);
    let pixels = q[0].movement_pixel_count + q[1].movement_pixel_count;
    let speed = if pixels > 0 {
        (q[0].movement_pixel_count as f64 * q[0].mean_flow_magnitude
            + q[1].movement_pixel_count as f64 * q[1].mean_flow_magnitude)
            / pixels as f64
    } else {
        0.0
    };
    let density = (frame.human_present && frame.human_pixel_count > 0)
        .then(|| (200.0 * pixels as f64 / frame.human_pixel_count as f64).min(100.0));
    let scale = (!frame.human_bbox.is_empty()).then(|| {
        let area = q[0].movement_bbox.union(&q[1].movement_bbox).area();
        (200.0 * area as f64 / frame.human_bbox.area() as f64).min(100.0)
    });
    RegionFrame { speed, density, scale }
}

fn frame_density(frame: &FrameMotionSummary) -> Option<f64> {
    (frame.human_present && frame.human_pixel_count > 0)
        .then(|| 100.0 * frame.movement_pixel_count as f64 / frame.human_pixel_count as f64)
}

fn frame_scale(frame: &FrameMotionSummary) -> Option<f64> {
    let hb: &BBox = &frame.human_bbox;
    (!hb.is_empty()).then(|| 100.0 * frame.movement_bbox.area() as f64 / hb.area() as f64)
}

#[derive(Default)]
struct Accumulator {
    pixels: WeightedMean,
    density: WeightedMean,
    scale: WeightedMean,
    speed: WeightedMean,
    speed_sq: WeightedMean,
    speeds: Vec<(f64, f64)>,
    region_speed: [WeightedMean; 3],
    region_density: [WeightedMean; 3],
    region_scale: [WeightedMean; 3],
}

impl Accumulator {
    fn add(&mut self, frame: &FrameMotionSummary, regions: &[[usize; 2]; 3]) {
        let dt = frame.dt;
        self.pixels.add(frame.movement_pixel_count as f64, dt);
        if let Some(d) = frame_density(frame) {
            self.density.add(d, dt);
        }
        if let Some(s) = frame_scale(frame) {
            self.scale.add(s, dt);
        }
        let v = frame.mean_flow_magnitude;
        self.speed.add(v, dt);
        self.speed_sq.add(v * v, dt);
        self.speeds.push((v, dt));
        for (r, quads) in regions.iter().enumerate() {
            let stats = region_stats(frame, *quads);
            self.region_speed[r].add(stats.speed, dt);
            if let Some(d) = stats.density {
                self.region_density[r].add(d, dt);
            }
            if let Some(s) = stats.scale {
                self.region_scale[r].add(s, dt);
            }
        }
    }

    fn std(&self) -> Option<f64> {
        let m = self.speed.get()?;
        let m2 = self.speed_sq.get()?;
        Some((m2 - m * m).max(0.0).sqrt())
    }
}

/// Frames whose timestamp falls in `[t0, t1)`.
pub fn window_frames(frames: &[FrameMotionSummary], t0: f64, t1: f64) -> &[FrameMotionSummary] {
    let lo = frames.partition_point(|f| f.timestamp < t0);
    let hi = frames.partition_point(|f| f.timestamp < t1);
    &frames[lo..hi.max(lo)]
}

/// Computes the feature row for window `[t0, t1)` of a frame stream.
pub fn extract_features(
    frames: &[FrameMotionSummary],
    env: &EnvContext,
    t0: f64,
    t1: f64,
    mirror: bool,
) -> Result<FeatureVector, FeatureError> {
    let win = window_frames(frames, t0, t1);
    if win.is_empty() {
        return Err(FeatureError::EmptyWindow { t0, t1 });
    }
    Ok(extract_window(win, env, mirror))
}

/// Features over exactly the given (non-empty) frames.
pub fn extract_window(win: &[FrameMotionSummary], env: &EnvContext, mirror: bool) -> FeatureVector {
    let mut fv = FeatureVector::zeros();
    fv.values[0] = env.lighting_luma;
    fv.values[1] = env.time_of_day.code();
    fv.values[2] = if env.weather_suitable { 1.0 } else { 0.0 };
    fv.values[3..3 + NUM_OBJECTS].copy_from_slice(&env.object_likelihoods);

    let segments = derive_segments(win);
    let regions = region_quadrants(mirror);
    let total: f64 = win.iter().map(|f| f.dt).sum();

    let mut all = Accumulator::default();
    let mut mpo = Accumulator::default();
    let mut inact_durations = Vec::new();
    let mut move_durations = Vec::new();
    let mut inact_time = 0.0;
    let mut move_time = 0.0;
    let mut distance = 0.0;
    for seg in &segments {
        let moving = seg.kind == SegmentKind::Movement;
        if moving {
            move_durations.push(seg.duration);
            move_time += seg.duration;
        } else {
            inact_durations.push(seg.duration);
            inact_time += seg.duration;
        }
        for frame in &win[seg.frames()] {
            all.add(frame, &regions);
            distance += frame.mean_flow_magnitude * frame.dt;
            if moving {
                mpo.add(frame, &regions);
            }
        }
    }

    fv.set(5, Some(total));
    fv.set(6, Some(100.0 * inact_time / total));
    fv.set(7, Some(inact_durations.len() as f64 * 60.0 / total));
    fv.set(8, Some(move_time));
    fv.set(9, Some(100.0 * move_time / total));
    fv.set(10, all.pixels.get().map(|p| p / 1e4));
    fv.set(11, mpo.pixels.get().map(|p| p / 1e4));
    fv.set(12, all.density.get());
    fv.set(13, mpo.density.get());
    fv.set(14, all.scale.get());
    fv.set(15, mpo.scale.get());
    fv.set(16, all.speed.get());
    fv.set(17, mpo.speed.get());
    fv.set(18, mpo.std());
    fv.set(19, Some(distance * 300.0 / total));
    let q_all = quartile_means(&all.speeds).ok();
    let q_mpo = quartile_means(&mpo.speeds).ok();
    for k in 0..4 {
        fv.set(20 + k, q_all.map(|q| q[k]));
        fv.set(24 + k, q_mpo.map(|q| q[k]));
    }
    fv.set(28, all.std());
    for r in 0..3 {
        fv.set(29 + r, mpo.region_speed[r].get());
        fv.set(32 + r, mpo.region_scale[r].get());
        fv.set(35 + r, mpo.region_density[r].get());
        fv.set(38 + r, all.region_speed[r].get());
        fv.set(41 + r, all.region_scale[r].get());
        fv.set(44 + r, all.region_density[r].get());
    }
    let inact = duration_distribution(&inact_durations);
    let mov = duration_distribution(&move_durations);
    for b in 0..10 {
        fv.set(47 + b, Some(inact[b]));
        fv.set(57 + b, Some(mov[b]));
    }
    fv
}

/// One featurized window with its labels and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub record_id: String,
    pub participant: String,
    pub window_index: usize,
    pub t0: f64,
    pub t1: f64,
    pub day_index: i64,
    pub wall_clock_start: chrono::NaiveDateTime,
    pub activity: crate::model::Activity,
    pub health: crate::model::Health,
    pub features: FeatureVector,
}

/// Writes feature rows as CSV. Undefined cells are left empty.
pub fn write_feature_csv<W: Write>(rows: &[WindowRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["record_id".to_string(), "window_index".to_string()];
    header.extend((0..NUM_COLUMNS).map(column_name));
    header.extend(
        ["activity", "health", "participant", "day_index", "wall_clock_start", "window_start", "window_end"]
            .map(String::from),
    );
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.record_id.clone(), row.window_index.to_string()];
        for c in 0..NUM_COLUMNS {
            rec.push(if row.features.undefined[c] { String::new() } else { format_float(row.features.values[c]) });
        }
        rec.push(row.activity.name().to_string());
        rec.push(row.health.name().to_string());
        rec.push(row.participant.clone());
        rec.push(row.day_index.to_string());
        rec.push(row.wall_clock_start.format("%Y-%m-%dT%H:%M:%S%.f").to_string());
        rec.push(format_float(row.t0));
        rec.push(format_float(row.t1));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same f64.
pub fn format_float(v: f64) -> String {
    let s = format!("{v:?}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    Invalid { row: usize, message: String },
}

/// Reads rows written by [`write_feature_csv`].
pub fn read_feature_csv<R: std::io::Read>(input: R) -> Result<Vec<WindowRow>, CsvError> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| CsvError::Invalid { row: 0, message: format!("missing column '{name}'") })
    };
    let feature_cols: Vec<usize> = (0..NUM_COLUMNS).map(|c| find(&column_name(c))).collect::<Result<_, _>>()?;
    let [rid, widx, act, health, part, day, wall, ws, we] = [
        "record_id",
        "window_index",
        "activity",
        "health",
        "participant",
        "day_index",
        "wall_clock_start",
        "window_start",
        "window_end",
    ]
    .map(find);
    let (rid, widx, act, health, part, day, wall, ws, we) = (rid?, widx?, act?, health?, part?, day?, wall?, ws?, we?);
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let bad = |message: String| CsvError::Invalid { row, message };
        let num = |idx: usize| -> Result<f64, CsvError> {
            rec[idx].parse::<f64>().map_err(|e| bad(format!("column {}: {e}", &headers[idx])))
        };
        let mut features = FeatureVector::zeros();
        for (c, &idx) in feature_cols.iter().enumerate() {
            if rec[idx].is_empty() {
                features.undefined[c] = true;
            } else {
                features.values[c] = num(idx)?;
            }
        }
        rows.push(WindowRow {
            record_id: rec[rid].to_string(),
            participant: rec[part].to_string(),
            window_index: rec[widx].parse().map_err(|e| bad(format!("window_index: {e}")))?,
            t0: num(ws)?,
            t1: num(we)?,
            day_index: rec[day].parse().map_err(|e| bad(format!("day_index: {e}")))?,
            wall_clock_start: chrono::NaiveDateTime::parse_from_str(&rec[wall], "%Y-%m-%dT%H:%M:%S%.f")
                .map_err(|e| bad(format!("wall_clock_start: {e}")))?,
            activity: crate::model::Activity::from_name(&rec[act]).ok_or_else(|| bad(format!("activity '{}'", &rec[act])))?,
            health: crate::model::Health::from_name(&rec[health]).ok_or_else(|| bad(format!("health '{}'", &rec[health])))?,
            features,
        });
    }
    Ok(rows)
}
