//! Synthetic participants, daily routines and 10 Hz motion logs with
//! planted health effects.
//!
//! A study is planned first (days, health labels, record start times,
//! activities, durations and environment) and records are then generated
//! independently from per-record RNG streams, so a record can be produced,
//! featurized and dropped without materializing the whole study.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::WindowRow;
use crate::model::{
    time_of_day_bin, Activity, BBox, EnvContext, FrameMotionSummary, Handedness, Health, LabeledDataset, LogError,
    MonitoringRecord, ParticipantMeta, QuadrantStats, TimeOfDay, NUM_ACTIVITIES, NUM_OBJECTS, NUM_QUADRANTS,
};
use crate::pipeline::{featurize_record, PipelineError, WindowingConfig};

pub const FRAME_RATE: f64 = 10.0;
pub const MIN_RECORD_SECONDS: f64 = 30.0;
pub const MAX_RECORD_SECONDS: f64 = 3.0 * 3600.0;
const DURATION_SHAPE: f64 = 2.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid profile '{profile}': {message}")]
    InvalidProfile { profile: String, message: String },
    #[error("record duration must be positive, got {0}")]
    ZeroDuration(f64),
    #[error(transparent)]
    Log(#[from] LogErrorMessage),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Dataset assembly failure, kept as text so the error stays `Clone`.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct LogErrorMessage(pub String);

impl From<LogError> for SynthError {
    fn from(e: LogError) -> Self {
        SynthError::Log(LogErrorMessage(e.to_string()))
    }
}

/// Multipliers applied to the motion process on weak days. All default to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Effects {
    pub speed_all: f64,
    pub speed_left: f64,
    pub speed_right: f64,
    pub speed_top: f64,
    /// Extra factor on above-median bout intensities.
    pub peak: f64,
    pub scale_all: f64,
    pub scale_left: f64,
    pub scale_top: f64,
    pub density_all: f64,
    pub density_left: f64,
    pub density_top: f64,
    pub bout_length: f64,
    pub gap_short: f64,
    pub gap_medium: f64,
    pub gap_long: f64,
    pub long_gap_length: f64,
}

impl Default for Effects {
    fn default() -> Self {
        Self {
            speed_all: 1.0,
            speed_left: 1.0,
            speed_right: 1.0,
            speed_top: 1.0,
            peak: 1.0,
            scale_all: 1.0,
            scale_left: 1.0,
            scale_top: 1.0,
            density_all: 1.0,
            density_left: 1.0,
            density_top: 1.0,
            bout_length: 1.0,
            gap_short: 1.0,
            gap_medium: 1.0,
            gap_long: 1.0,
            long_gap_length: 1.0,
        }
    }
}

impl Effects {
    fn values(&self) -> [f64; 16] {
        [
            self.speed_all,
            self.speed_left,
            self.speed_right,
            self.speed_top,
            self.peak,
            self.scale_all,
            self.scale_left,
            self.scale_top,
            self.density_all,
            self.density_left,
            self.density_top,
            self.bout_length,
            self.gap_short,
            self.gap_medium,
            self.gap_long,
            self.long_gap_length,
        ]
    }
}

/// Baseline motion process shared by all activities of a participant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionParams {
    /// Median movement-bout length (s) and log-normal sigma.
    pub bout_median: f64,
    pub bout_sigma: f64,
    /// Mixture weights of sub-second, short and long gaps.
    pub gap_weights: [f64; 3],
    /// Mean of the sub-second gap component (s).
    pub short_gap_mean: f64,
    /// Short gaps are 1 s plus an exponential with this mean.
    pub medium_gap_mean: f64,
    /// Long (idle) gaps are `long_gap_min` plus an exponential.
    pub long_gap_min: f64,
    pub long_gap_mean: f64,
    /// Median flow magnitude (px/frame) and per-frame log-normal sigma.
    pub speed_median: f64,
    pub speed_sigma: f64,
    /// Per-bout intensity log-normal sigma.
    pub bout_intensity_sigma: f64,
    /// Fraction of quadrant human pixels moving, per quadrant.
    pub density: [f64; NUM_QUADRANTS],
    /// Moving-box area as a fraction of the quadrant, per quadrant.
    pub scale: [f64; NUM_QUADRANTS],
    pub frame_sigma: f64,
    /// Per-record random-effect sigma on log speed, scale and density.
    pub record_sigma: f64,
    /// Per-day random-effect sigma, shared by all records of a day.
    pub day_sigma: f64,
    /// Range (s) of the settling-in phase at the start of a record, during
    /// which movement is near-continuous with a record-specific intensity.
    pub settle_seconds: [f64; 2],
    /// Median and log-normal sigma of the settling intensity multiplier.
    pub settle_intensity: f64,
    pub settle_sigma: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            bout_median: 2.5,
            bout_sigma: 0.7,
            gap_weights: [0.45, 0.45, 0.10],
            short_gap_mean: 0.4,
            medium_gap_mean: 4.0,
            long_gap_min: 30.0,
            long_gap_mean: 150.0,
            speed_median: 2.0,
            speed_sigma: 0.25,
            bout_intensity_sigma: 0.3,
            density: [0.15; NUM_QUADRANTS],
            scale: [0.35; NUM_QUADRANTS],
            frame_sigma: 0.2,
            record_sigma: 0.06,
            day_sigma: 0.0,
            settle_seconds: [300.0, 500.0],
            settle_intensity: 2.5,
            settle_sigma: 1.2,
        }
    }
}

/// Activity-specific modulation of the motion process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivityStyle {
    pub speed: f64,
    pub long_gap_weight: f64,
    /// Probability that each quadrant moves in a movement frame.
    pub quadrant_activity: [f64; NUM_QUADRANTS],
    pub object: Option<usize>,
    pub lighting: f64,
}

pub fn activity_style(a: Activity) -> ActivityStyle {
    match a {
        Activity::Read => ActivityStyle { speed: 1.0, long_gap_weight: 1.0, quadrant_activity: [0.55, 0.55, 0.3, 0.3], object: Some(0), lighting: 1.0 },
        Activity::Pc => ActivityStyle { speed: 1.3, long_gap_weight: 0.7, quadrant_activity: [0.35, 0.35, 0.7, 0.7], object: Some(1), lighting: 0.9 },
        Activity::Eat => ActivityStyle { speed: 1.6, long_gap_weight: 0.5, quadrant_activity: [0.8, 0.8, 0.45, 0.45], object: Some(2), lighting: 1.0 },
        Activity::Nap => ActivityStyle { speed: 0.6, long_gap_weight: 3.0, quadrant_activity: [0.4, 0.4, 0.2, 0.2], object: None, lighting: 0.5 },
        Activity::Watch | Activity::Unknown => {
            ActivityStyle { speed: 0.9, long_gap_weight: 1.3, quadrant_activity: [0.5, 0.5, 0.3, 0.3], object: Some(3), lighting: 0.7 }
        }
    }
}

/// Share (percent) and mean duration (minutes) of one activity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivityShare {
    pub activity: Activity,
    pub percent: f64,
    pub mean_minutes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipantProfile {
    pub id: String,
    #[serde(default)]
    pub handedness: Handedness,
    /// Body left appears on the image right.
    #[serde(default)]
    pub mirror: bool,
    pub records: usize,
    pub days: usize,
    pub activities: Vec<ActivityShare>,
    #[serde(default)]
    pub motion: MotionParams,
    #[serde(default)]
    pub effects: Effects,
    /// Activities expressing the health effects; `None` means all.
    #[serde(default)]
    pub effect_activities: Option<Vec<Activity>>,
    /// Probability that a normal/weak cycle has two normal days.
    #[serde(default = "default_long_cycle")]
    pub long_cycle_probability: f64,
}

fn default_long_cycle() -> f64 {
    0.25
}

impl ParticipantProfile {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |message: String| Err(SynthError::InvalidProfile { profile: self.id.clone(), message });
        if self.records == 0 || self.days == 0 {
            return bad("records and days must be positive".into());
        }
        if self.days > self.records {
            return bad(format!("{} days need at least as many records, got {}", self.days, self.records));
        }
        if self.activities.is_empty() || self.activities.iter().any(|s| !(s.percent > 0.0) || !(s.mean_minutes > 0.0)) {
            return bad("activity shares and durations must be positive".into());
        }
        if self.activities.iter().any(|s| s.activity == Activity::Unknown) {
            return bad("activity shares must name a known activity".into());
        }
        if self.effects.values().iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
            return bad("effect multipliers must be positive".into());
        }
        let m = &self.motion;
        let positive = [
            m.bout_median,
            m.short_gap_mean,
            m.medium_gap_mean,
            m.long_gap_mean,
            m.speed_median,
        ];
        if positive.iter().any(|v| !(*v > 0.0))
            || m.gap_weights.iter().any(|w| !(*w >= 0.0))
            || m.gap_weights.iter().sum::<f64>() <= 0.0
            || m.density.iter().chain(&m.scale).any(|v| !(*v > 0.0 && *v <= 1.0))
            || !(m.settle_seconds[0] >= 0.0 && m.settle_seconds[1] >= m.settle_seconds[0])
            || !(m.settle_intensity > 0.0)
            || [m.bout_sigma, m.speed_sigma, m.bout_intensity_sigma, m.frame_sigma, m.record_sigma, m.day_sigma, m.settle_sigma, m.long_gap_min]
                .iter()
                .any(|v| !(*v >= 0.0))
        {
            return bad("motion parameters out of range".into());
        }
        if !(0.0..=1.0).contains(&self.long_cycle_probability) {
            return bad("long_cycle_probability must lie in [0, 1]".into());
        }
        Ok(())
    }

    fn effect_applies(&self, a: Activity) -> bool {
        self.effect_activities.as_ref().map(|v| v.contains(&a)).unwrap_or(true)
    }
}

fn shares(spec: &[(Activity, f64, f64)]) -> Vec<ActivityShare> {
    spec.iter().map(|&(activity, percent, mean_minutes)| ActivityShare { activity, percent, mean_minutes }).collect()
}

/// The five reference participant profiles (record counts, days, activity
/// mix, durations and weak-day effect multipliers).
pub fn reference_profiles() -> Vec<ParticipantProfile> {
    use Activity::*;
    let base = |id: &str, records, days, activities, effects| ParticipantProfile {
        id: id.to_string(),
        handedness: Handedness::Right,
        mirror: false,
        records,
        days,
        activities,
        motion: MotionParams::default(),
        effects,
        effect_activities: None,
        long_cycle_probability: 0.25,
    };
    vec![
        base(
            "P1",
            178,
            22,
            shares(&[(Read, 24.2, 19.8), (Pc, 33.2, 24.3), (Eat, 15.7, 9.9), (Nap, 10.1, 13.5), (Watch, 16.9, 20.0)]),
            Effects { speed_left: 0.851, scale_left: 0.869, peak: 0.907, speed_all: 0.95, density_all: 0.813, ..Effects::default() },
        ),
        base(
            "P2",
            47,
            23,
            shares(&[(Read, 10.6, 13.8), (Pc, 40.4, 20.7), (Nap, 12.8, 11.0), (Watch, 36.2, 17.1)]),
            Effects {
                gap_short: 0.68,
                gap_medium: 0.92,
                gap_long: 2.96,
                density_left: 1.212,
                scale_all: 0.6,
                bout_length: 0.84,
                speed_top: 1.299,
                ..Effects::default()
            },
        ),
        base(
            "P3",
            16,
            10,
            shares(&[(Read, 18.75, 26.0), (Pc, 18.75, 21.3), (Eat, 18.75, 8.6), (Nap, 18.75, 22.1), (Watch, 25.0, 22.9)]),
            Effects { gap_medium: 1.633, speed_left: 0.926, speed_all: 0.819, scale_top: 0.914, bout_length: 0.85, ..Effects::default() },
        ),
        base(
            "P4",
            7,
            5,
            shares(&[(Read, 57.1, 23.3), (Watch, 42.9, 28.7)]),
            Effects { gap_medium: 0.73, speed_left: 1.431, speed_all: 1.25, bout_length: 1.3, gap_long: 1.3, ..Effects::default() },
        ),
        base(
            "P5",
            12,
            7,
            shares(&[(Read, 25.0, 29.8), (Pc, 25.0, 22.8), (Eat, 25.0, 7.4), (Watch, 25.0, 52.5)]),
            Effects {
                scale_all: 0.943,
                density_all: 0.86,
                density_top: 1.2,
                density_left: 1.28,
                scale_left: 0.795,
                speed_top: 0.946,
                peak: 0.9,
                ..Effects::default()
            },
        ),
    ]
}

/// A balanced profile whose weak days differ only in left-side speed and
/// scale and in long (≥60 s) idle gaps, optionally within one activity.
/// Records start without a settling-in phase.
pub fn planted_profile(id: &str, records: usize, days: usize, effect_activity: Option<Activity>) -> ParticipantProfile {
    use Activity::*;
    ParticipantProfile {
        id: id.to_string(),
        handedness: Handedness::Right,
        mirror: false,
        records,
        days,
        activities: shares(&[(Read, 20.0, 20.0), (Pc, 20.0, 20.0), (Eat, 20.0, 20.0), (Nap, 20.0, 20.0), (Watch, 20.0, 20.0)]),
        motion: MotionParams { settle_seconds: [0.0, 0.0], settle_intensity: 1.0, settle_sigma: 0.0, ..MotionParams::default() },
        effects: Effects { speed_left: 0.85, scale_left: 0.85, gap_long: 1.6, long_gap_length: 1.8, ..Effects::default() },
        effect_activities: effect_activity.map(|a| vec![a]),
        long_cycle_probability: 0.25,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub seed: u64,
    pub participants: Vec<ParticipantProfile>,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
    /// Multiplies every record duration.
    #[serde(default = "default_scale")]
    pub duration_scale: f64,
    /// Probability that a day has weather suitable for going out.
    #[serde(default = "default_weather")]
    pub weather_probability: f64,
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 8).expect("valid date")
}

fn default_scale() -> f64 {
    1.0
}

fn default_weather() -> f64 {
    0.6
}

impl StudyConfig {
    pub fn new(seed: u64, participants: Vec<ParticipantProfile>) -> Self {
        Self { seed, participants, start_date: default_start(), duration_scale: 1.0, weather_probability: 0.6 }
    }

    /// The five reference profiles.
    pub fn reference(seed: u64) -> Self {
        Self::new(seed, reference_profiles())
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.duration_scale > 0.0) || !self.duration_scale.is_finite() {
            return Err(SynthError::InvalidProfile {
                profile: "*".into(),
                message: format!("duration_scale must be positive, got {}", self.duration_scale),
            });
        }
        let mut ids = std::collections::HashSet::new();
        for p in &self.participants {
            p.validate()?;
            if !ids.insert(&p.id) {
                return Err(SynthError::InvalidProfile { profile: p.id.clone(), message: "duplicate participant id".into() });
            }
        }
        Ok(())
    }
}

/// Everything about a record except its frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordPlan {
    pub record_id: String,
    pub participant: usize,
    pub index: usize,
    pub day: usize,
    pub wall_clock_start: NaiveDateTime,
    pub duration: f64,
    pub activity: Activity,
    pub health: Health,
    pub env: EnvContext,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyPlan {
    pub config: StudyConfig,
    pub records: Vec<RecordPlan>,
    /// Health label of every planned day, per participant.
    pub day_labels: Vec<Vec<Health>>,
}

/// Splitmix-style mixing of a seed with stream coordinates.
fn stream_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut z = seed;
    for &p in parts {
        z = z.wrapping_add(p.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Health label per day: repeated cycles of normal, same-day weak and
/// next-day weak, with an extra leading normal day with probability `p_long`.
pub fn day_labels<R: Rng>(days: usize, p_long: f64, rng: &mut R) -> Vec<Health> {
    let mut out = Vec::with_capacity(days + 3);
    while out.len() < days {
        if rng.random::<f64>() < p_long {
            out.push(Health::Normal);
        }
        out.extend([Health::Normal, Health::Weak, Health::Weak]);
    }
    out.truncate(days);
    out
}

fn activity_weights(profile: &ParticipantProfile, tod: TimeOfDay, weather: bool, health: Health) -> Vec<(Activity, f64)> {
    profile
        .activities
        .iter()
        .map(|s| {
            let mut w = s.percent;
            match (s.activity, tod) {
                (Activity::Nap, TimeOfDay::T3) => w *= 1.5,
                (Activity::Eat, TimeOfDay::T3) => w *= 0.5,
                _ => {}
            }
            if !weather && s.activity == Activity::Watch {
                w *= 1.2;
            }
            if health == Health::Weak && s.activity == Activity::Nap {
                w *= 1.2;
            }
            (s.activity, w)
        })
        .collect()
}

fn pick<R: Rng>(weights: &[(Activity, f64)], rng: &mut R) -> Activity {
    let total: f64 = weights.iter().map(|w| w.1).sum();
    let mut u = rng.random::<f64>() * total;
    for &(a, w) in weights {
        if u < w {
            return a;
        }
        u -= w;
    }
    weights.last().expect("non-empty").0
}

fn environment<R: Rng>(activity: Activity, tod: TimeOfDay, weather: bool, rng: &mut R) -> EnvContext {
    let style = activity_style(activity);
    let base = match tod {
        TimeOfDay::T1 => 150.0,
        TimeOfDay::T2 => 125.0,
        TimeOfDay::T3 => 75.0,
    };
    let noise = Normal::new(0.0, 10.0).expect("valid sigma");
    let lighting_luma = (base * style.lighting + noise.sample(rng)).clamp(0.0, 255.0);
    let mut object_likelihoods = [0.0; NUM_OBJECTS];
    for o in object_likelihoods.iter_mut() {
        *o = rng.random::<f64>() * 0.2;
    }
    if let Some(o) = style.object {
        object_likelihoods[o] = (0.8 + rng.random::<f64>() * 0.15).min(1.0);
    }
    EnvContext { lighting_luma, time_of_day: tod, weather_suitable: weather, object_likelihoods }
}

/// Plans days, labels, schedules, activities, durations and environment.
pub fn plan_study(config: &StudyConfig) -> Result<StudyPlan, SynthError> {
    config.validate()?;
    let mut records = Vec::new();
    let mut all_labels = Vec::new();
    for (pi, profile) in config.participants.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, &[pi as u64, 0]));
        let labels = day_labels(profile.days, profile.long_cycle_probability, &mut rng);
        let mut per_day = vec![1usize; profile.days];
        for _ in profile.days..profile.records {
            per_day[rng.random_range(0..profile.days)] += 1;
        }
        let mut index = 0;
        for day in 0..profile.days {
            let date = config.start_date + Duration::days(day as i64);
            let weather = rng.random::<f64>() < config.weather_probability;
            let mut draws = Vec::with_capacity(per_day[day]);
            for _ in 0..per_day[day] {
                let offset = rng.random_range(7.0 * 3600.0..23.0 * 3600.0);
                draws.push(offset);
            }
            draws.sort_by(f64::total_cmp);
            let day_start = date.and_hms_opt(0, 0, 0).expect("midnight");
            let latest = 29.0 * 3600.0;
            let mut planned: Vec<(f64, Activity, f64)> = Vec::new();
            let mut cursor = 0.0f64;
            for offset in draws {
                let start = offset.max(cursor);
                let tod = time_of_day_bin(day_start + Duration::milliseconds((start * 1000.0) as i64));
                let activity = pick(&activity_weights(profile, tod, weather, labels[day]), &mut rng);
                let share = profile.activities.iter().find(|s| s.activity == activity).expect("picked from shares");
                let mean = share.mean_minutes * 60.0 * config.duration_scale;
                let gamma = Gamma::new(DURATION_SHAPE, mean / DURATION_SHAPE).expect("positive gamma parameters");
                let duration = (gamma.sample(&mut rng).clamp(MIN_RECORD_SECONDS, MAX_RECORD_SECONDS) * FRAME_RATE).round() / FRAME_RATE;
                planned.push((start, activity, duration));
                cursor = start + duration + 60.0;
            }
            if cursor > latest {
                let mut t = 7.0 * 3600.0;
                for p in planned.iter_mut() {
                    p.0 = t;
                    t += p.2 + 60.0;
                }
                let total = t - 7.0 * 3600.0;
                if 7.0 * 3600.0 + total > latest {
                    let factor = (latest - 7.0 * 3600.0 - 60.0 * planned.len() as f64) / planned.iter().map(|p| p.2).sum::<f64>();
                    let mut t = 7.0 * 3600.0;
                    for p in planned.iter_mut() {
                        p.2 = ((p.2 * factor).max(MIN_RECORD_SECONDS) * FRAME_RATE).round() / FRAME_RATE;
                        p.0 = t;
                        t += p.2 + 60.0;
                    }
                }
            }
            for (start, activity, duration) in planned {
                let wall = day_start + Duration::milliseconds((start.round() * 1000.0) as i64);
                let tod = time_of_day_bin(wall);
                let env = environment(activity, tod, weather, &mut rng);
                records.push(RecordPlan {
                    record_id: format!("{}-r{:04}", profile.id, index + 1),
                    participant: pi,
                    index,
                    day,
                    wall_clock_start: wall,
                    duration,
                    activity,
                    health: labels[day],
                    env,
                });
                index += 1;
            }
        }
        all_labels.push(labels);
    }
    Ok(StudyPlan { config: config.clone(), records, day_labels: all_labels })
}

struct Mixture {
    weights: [f64; 3],
    short: Exp<f64>,
    medium: Exp<f64>,
    long: Exp<f64>,
    long_min: f64,
}

impl Mixture {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let total: f64 = self.weights.iter().sum();
        let u = rng.random::<f64>() * total;
        if u < self.weights[0] {
            self.short.sample(rng)
        } else if u < self.weights[0] + self.weights[1] {
            1.0 + self.medium.sample(rng)
        } else {
            self.long_min + self.long.sample(rng)
        }
    }
}

fn is_left(q: usize, mirror: bool) -> bool {
    (q == 1 || q == 3) != mirror
}

/// Generates the frames of a planned record.
pub fn generate_record(profile: &ParticipantProfile, plan: &RecordPlan, seed: u64) -> Result<MonitoringRecord, SynthError> {
    profile.validate()?;
    if !(plan.duration > 0.0) {
        return Err(SynthError::ZeroDuration(plan.duration));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &[plan.participant as u64, 1, plan.index as u64]));
    let m = &profile.motion;
    let style = activity_style(plan.activity);
    let eff = if plan.health == Health::Weak && profile.effect_applies(plan.activity) { profile.effects } else { Effects::default() };
    let mut day_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &[plan.participant as u64, 2, plan.day as u64]));
    let day_effect = Normal::new(0.0, m.day_sigma).expect("valid sigma");
    let day: [f64; 4] = std::array::from_fn(|_| day_effect.sample(&mut day_rng));
    let record_effect = Normal::new(0.0, m.record_sigma).expect("valid sigma");
    let rec_speed = (day[0] + record_effect.sample(&mut rng)).exp();
    let rec_scale = (day[1] + record_effect.sample(&mut rng)).exp();
    let rec_density = (day[2] + record_effect.sample(&mut rng)).exp();
    let rec_gap = (2.0 * (day[3] + record_effect.sample(&mut rng))).exp();

    let w = 2 * rng.random_range(75u32..100);
    let h = 2 * rng.random_range(120u32..160);
    let human = BBox::new(2 * rng.random_range(90u32..130), 2 * rng.random_range(40u32..70), w, h);
    let hpc = (0.55 * (w * h) as f64).round() as u64;
    let quads: [BBox; NUM_QUADRANTS] = std::array::from_fn(|q| human.quadrant(q));

    let mut speed_q = [0.0; NUM_QUADRANTS];
    let mut scale_q = [0.0; NUM_QUADRANTS];
    let mut density_q = [0.0; NUM_QUADRANTS];
    for q in 0..NUM_QUADRANTS {
        let left = is_left(q, profile.mirror);
        let top = q < 2;
        let side = |l: f64, r: f64| if left { l } else { r };
        let t = |v: f64| if top { v } else { 1.0 };
        speed_q[q] = m.speed_median * style.speed * rec_speed * eff.speed_all * side(eff.speed_left, eff.speed_right) * t(eff.speed_top);
        scale_q[q] = m.scale[q] * rec_scale * eff.scale_all * side(eff.scale_left, 1.0) * t(eff.scale_top);
        density_q[q] = m.density[q] * rec_density * eff.density_all * side(eff.density_left, 1.0) * t(eff.density_top);
    }

    let gaps = Mixture {
        weights: [
            m.gap_weights[0] * eff.gap_short,
            m.gap_weights[1] * eff.gap_medium,
            m.gap_weights[2] * eff.gap_long * style.long_gap_weight * rec_gap,
        ],
        short: Exp::new(1.0 / m.short_gap_mean).expect("positive mean"),
        medium: Exp::new(1.0 / m.medium_gap_mean).expect("positive mean"),
        long: Exp::new(1.0 / (m.long_gap_mean * eff.long_gap_length)).expect("positive mean"),
        long_min: m.long_gap_min,
    };
    let bout = LogNormal::new((m.bout_median * eff.bout_length).ln(), m.bout_sigma).expect("valid bout");
    let intensity = LogNormal::new(0.0, m.bout_intensity_sigma).expect("valid sigma");
    let frame_noise = LogNormal::new(0.0, m.frame_sigma).expect("valid sigma");
    let speed_noise = LogNormal::new(0.0, m.speed_sigma).expect("valid sigma");

    let settle_len = if m.settle_seconds[1] > 0.0 {
        (rng.random_range(m.settle_seconds[0]..=m.settle_seconds[1]) * FRAME_RATE).round() as usize
    } else {
        0
    };
    let settle_factor = LogNormal::new(m.settle_intensity.ln(), m.settle_sigma).expect("valid sigma").sample(&mut rng);
    let settle_gap = Exp::new(1.0 / m.short_gap_mean).expect("positive mean");

    let dt = 1.0 / FRAME_RATE;
    let n = ((plan.duration * FRAME_RATE).round() as usize).max(1);
    let mut frames = Vec::with_capacity(n);
    let mut moving = rng.random::<bool>();
    while frames.len() < n {
        let settling = frames.len() < settle_len;
        let (len, factor) = if moving {
            let mut f = intensity.sample(&mut rng);
            if f > 1.0 {
                f *= eff.peak;
            }
            if settling {
                f *= settle_factor;
            }
            (((bout.sample(&mut rng) * FRAME_RATE).round() as usize).max(1), f)
        } else if settling {
            ((settle_gap.sample(&mut rng) * FRAME_RATE).round() as usize, 0.0)
        } else {
            ((gaps.sample(&mut rng) * FRAME_RATE).round() as usize, 0.0)
        };
        for _ in 0..len.min(n - frames.len()) {
            let t = frames.len() as f64 * dt;
            let mut frame = FrameMotionSummary::still(t, dt, human, hpc);
            if moving {
                let boost = 1.0;
                let shape = Shape { quads: &quads, hpc, style: &style, speed: &speed_q, scale: &scale_q, density: &density_q, settling: false };
                fill_movement(&mut frame, &shape, factor, boost, &frame_noise, &speed_noise, &mut rng);
            }
            frames.push(frame);
        }
        moving = !moving;
    }
    let duration = n as f64 * dt;
    Ok(MonitoringRecord {
        record_id: plan.record_id.clone(),
        participant_id: profile.id.clone(),
        wall_clock_start: plan.wall_clock_start,
        duration,
        activity: plan.activity,
        health: plan.health,
        env: plan.env.clone(),
        frames,
    })
}

struct Shape<'a> {
    quads: &'a [BBox; NUM_QUADRANTS],
    hpc: u64,
    style: &'a ActivityStyle,
    speed: &'a [f64; NUM_QUADRANTS],
    scale: &'a [f64; NUM_QUADRANTS],
    density: &'a [f64; NUM_QUADRANTS],
    /// Settling-in frames move the whole body.
    settling: bool,
}

fn fill_movement<R: Rng>(
    frame: &mut FrameMotionSummary,
    shape: &Shape<'_>,
    factor: f64,
    boost: f64,
    frame_noise: &LogNormal<f64>,
    speed_noise: &LogNormal<f64>,
    rng: &mut R,
) {
    let style = shape.style;
    let mut active = [false; NUM_QUADRANTS];
    for q in 0..NUM_QUADRANTS {
        let p = if shape.settling { 0.9 } else { style.quadrant_activity[q] };
        active[q] = rng.random::<f64>() < p;
    }
    if !active.iter().any(|&a| a) {
        let q = (0..NUM_QUADRANTS).fold(0, |b, q| if style.quadrant_activity[q] > style.quadrant_activity[b] { q } else { b });
        active[q] = true;
    }
    let (quads, hpc) = (shape.quads, shape.hpc);
    let quarter = hpc as f64 / 4.0;
    let mut pixels = 0u64;
    let mut flow = 0.0;
    let mut bbox = BBox::EMPTY;
    for q in 0..NUM_QUADRANTS {
        if !active[q] {
            continue;
        }
        let qb = quads[q];
        let d = (shape.density[q] * boost * frame_noise.sample(rng)).min(0.95);
        let p = ((d * quarter).round() as u64).max(1);
        let s = (shape.scale[q] * boost * frame_noise.sample(rng)).min(1.0).sqrt();
        let bw = ((qb.w as f64 * s).round() as u32).clamp(1, qb.w.max(1));
        let bh = ((qb.h as f64 * s).round() as u32).clamp(1, qb.h.max(1));
        let x = if q == 0 || q == 2 { qb.x } else { qb.x + qb.w - bw };
        let y = if q < 2 { qb.y + qb.h - bh } else { qb.y };
        let b = BBox::new(x, y, bw, bh);
        let v = shape.speed[q] * factor * speed_noise.sample(rng);
        frame.quadrant_stats[q] = QuadrantStats { movement_pixel_count: p, movement_bbox: b, mean_flow_magnitude: v };
        pixels += p;
        flow += p as f64 * v;
        bbox = bbox.union(&b);
    }
    frame.movement_pixel_count = pixels;
    frame.movement_bbox = bbox;
    frame.mean_flow_magnitude = flow / pixels as f64;
}

impl StudyPlan {
    pub fn profile(&self, record: &RecordPlan) -> &ParticipantProfile {
        &self.config.participants[record.participant]
    }

    pub fn generate(&self, record: &RecordPlan) -> Result<MonitoringRecord, SynthError> {
        generate_record(self.profile(record), record, self.config.seed)
    }

    pub fn participant_meta(&self) -> BTreeMap<String, ParticipantMeta> {
        self.config
            .participants
            .iter()
            .map(|p| (p.id.clone(), ParticipantMeta { id: p.id.clone(), handedness: p.handedness, mirror: p.mirror }))
            .collect()
    }

    /// Generates and featurizes every record at each window size, dropping
    /// frames as soon as a record is done.
    pub fn featurize(&self, windows: &[WindowingConfig]) -> Result<Vec<Vec<WindowRow>>, SynthError> {
        let per_record: Vec<Vec<Vec<WindowRow>>> = self
            .records
            .par_iter()
            .map(|plan| {
                let record = self.generate(plan)?;
                let mirror = self.profile(plan).mirror;
                windows.iter().map(|cfg| featurize_record(&record, mirror, cfg).map_err(SynthError::from)).collect()
            })
            .collect::<Result<_, SynthError>>()?;
        let mut out = vec![Vec::new(); windows.len()];
        for rec in per_record {
            for (o, rows) in out.iter_mut().zip(rec) {
                o.extend(rows);
            }
        }
        Ok(out)
    }
}

/// Generates a full study in memory.
pub fn generate_study(config: &StudyConfig) -> Result<LabeledDataset, SynthError> {
    let plan = plan_study(config)?;
    let records = plan.records.par_iter().map(|r| plan.generate(r)).collect::<Result<Vec<_>, _>>()?;
    Ok(LabeledDataset::new(records, plan.participant_meta())?)
}

/// Per-activity counts of planned records.
pub fn activity_counts(records: &[RecordPlan]) -> [usize; NUM_ACTIVITIES] {
    let mut c = [0; NUM_ACTIVITIES];
    for r in records {
        if let Some(i) = r.activity.index() {
            c[i] += 1;
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> StudyConfig {
        let mut c = StudyConfig::new(3, vec![planted_profile("X", 12, 4, None)]);
        c.duration_scale = 0.1;
        c
    }

    #[test]
    fn generated_records_validate() {
        let ds = generate_study(&small()).unwrap();
        assert_eq!(ds.len(), 12);
        for r in &ds.records {
            r.validate().unwrap();
        }
    }

    #[test]
    fn same_seed_same_study() {
        assert_eq!(generate_study(&small()).unwrap(), generate_study(&small()).unwrap());
    }

    #[test]
    fn zero_duration_rejected() {
        let c = small();
        let plan = plan_study(&c).unwrap();
        let mut r = plan.records[0].clone();
        r.duration = 0.0;
        assert!(matches!(generate_record(&c.participants[0], &r, 1), Err(SynthError::ZeroDuration(_))));
    }

    #[test]
    fn day_labels_start_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = day_labels(10, 0.25, &mut rng);
        assert_eq!(l.len(), 10);
        assert_eq!(l[0], Health::Normal);
        assert!(l.contains(&Health::Weak));
    }

    #[test]
    fn profiles_validate() {
        for p in reference_profiles() {
            p.validate().unwrap();
        }
        let mut p = planted_profile("Y", 5, 2, None);
        p.effects.speed_left = 0.0;
        assert!(p.validate().is_err());
    }
}
