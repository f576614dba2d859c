//! Behavioral weakness monitoring from motion-summary logs.
//!
//! Frames are turned into window feature vectors ([`features`]), classified
//! into normal/weak health states by a Bayesian network or baseline
//! classifiers ([`bayes_net`], [`classifiers`]), ranked ([`ranking`]),
//! aggregated over windows, records, 8-hour spans and days ([`pipeline`]),
//! and scored against a normal-only model ([`anomaly`]). [`synth`] generates
//! calibrated synthetic studies.

pub mod anomaly;
pub mod bayes_net;
pub mod classifiers;
pub mod cli;
pub mod features;
pub mod model;
pub mod pipeline;
pub mod ranking;
pub mod synth;

pub use features::{extract_features, FeatureVector, Segment, SegmentKind};
pub use model::{
    Activity, BBox, EnvContext, FrameMotionSummary, Health, LabeledDataset, LogError, MonitoringRecord, ParticipantMeta,
    QuadrantStats, TimeOfDay,
};
