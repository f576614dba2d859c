//! Normal-model anomaly detection.
//!
//! A Bayesian network is trained on the windows of normal days only. Every
//! day is then scored by its mean log-likelihood under that model: normal
//! days leave-one-day-out, weak days under the model of all normal days.
//! Cohen's d summarizes how well the two groups separate, and days far below
//! the normal mean are flagged.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{Days, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayes_net::{fit_ml, BayesNetModel, BnError, TrainRow};
use crate::classifiers::LabeledMatrix;
use crate::features::{column_name, columns_of_feature, feature_label, WindowRow, NUM_FEATURES};
use crate::model::{Activity, Health};
use crate::pipeline::majority_vote;
use crate::ranking::RankingReport;

/// Cross-participant top-5 behavioral features.
pub const GENERIC_TOP5: [usize; 5] = [31, 37, 32, 27, 13];

/// Reference personalized ranking of the first study participant.
pub const P1_TOP5: [usize; 5] = [34, 27, 23, 31, 11];

/// Context features F1-F4 never enter a personalized list.
pub const FIRST_BEHAVIORAL_FEATURE: usize = 5;

pub const DEFAULT_K_SIGMA: f64 = 2.0;

/// Normal days need this many records to enter the normal model.
pub const MIN_RECORDS_PER_DAY: usize = 2;
pub const MIN_NORMAL_DAYS: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnomalyError {
    #[error("need at least {required} normal days with {MIN_RECORDS_PER_DAY}+ records, found {found}")]
    InsufficientNormalDays { found: usize, required: usize },
    #[error("group {group} has {n} samples, need at least 2")]
    TooFewSamples { group: &'static str, n: usize },
    #[error("degenerate groups: pooled standard deviation is zero")]
    DegenerateGroups,
    #[error("feature F{0} does not exist")]
    UnknownFeature(usize),
    #[error("no feature columns")]
    NoFeatures,
    #[error("no windows")]
    NoWindows,
    #[error("non-finite score")]
    NonFinite,
    #[error(transparent)]
    Bn(#[from] BnError),
}

/// Role of a day in the normal-model evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayRole {
    /// Normal day with enough records; scored leave-one-out.
    Normal,
    /// Normal day with a single record; scored but kept out of the statistics.
    ExcludedNormal,
    Weak,
    /// Day without a ground-truth label.
    Unlabeled,
}

impl DayRole {
    pub fn name(self) -> &'static str {
        match self {
            DayRole::Normal => "normal",
            DayRole::ExcludedNormal => "excluded_normal",
            DayRole::Weak => "weak",
            DayRole::Unlabeled => "unlabeled",
        }
    }
}

/// The windows of one participant-day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayGroup {
    pub participant: String,
    pub day_index: i64,
    pub record_ids: Vec<String>,
    pub health: Health,
    /// Row indices (into the slice given to [`group_days`]) by record.
    pub windows: Vec<Vec<usize>>,
    pub log_likelihood: Option<f64>,
}

impl DayGroup {
    pub fn n_records(&self) -> usize {
        self.record_ids.len()
    }

    pub fn n_windows(&self) -> usize {
        self.windows.iter().map(Vec::len).sum()
    }

    pub fn date(&self) -> Option<NaiveDate> {
        let epoch = NaiveDate::from_ymd_opt(1970, 1, 1)?;
        if self.day_index >= 0 {
            epoch.checked_add_days(Days::new(self.day_index as u64))
        } else {
            epoch.checked_sub_days(Days::new(self.day_index.unsigned_abs()))
        }
    }

    pub fn role(&self) -> DayRole {
        match self.health {
            Health::Normal if self.n_records() >= MIN_RECORDS_PER_DAY => DayRole::Normal,
            Health::Normal => DayRole::ExcludedNormal,
            Health::Weak => DayRole::Weak,
            Health::Unknown => DayRole::Unlabeled,
        }
    }
}

/// Groups window rows by (participant, day), records in order of first
/// appearance. A day's label is the majority of its records' labels.
pub fn group_days(rows: &[WindowRow]) -> Vec<DayGroup> {
    let mut days: BTreeMap<(String, i64), (Vec<String>, Vec<Health>, Vec<Vec<usize>>)> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        let entry = days.entry((row.participant.clone(), row.day_index)).or_default();
        match entry.0.iter().position(|r| *r == row.record_id) {
            Some(k) => entry.2[k].push(i),
            None => {
                entry.0.push(row.record_id.clone());
                entry.1.push(row.health);
                entry.2.push(vec![i]);
            }
        }
    }
    days.into_iter()
        .map(|((participant, day_index), (record_ids, labels, windows))| {
            let known: Vec<Health> = labels.into_iter().filter(|h| *h != Health::Unknown).collect();
            let health = majority_vote(&known, Health::Weak).unwrap_or(Health::Unknown);
            DayGroup { participant, day_index, record_ids, health, windows, log_likelihood: None }
        })
        .collect()
}

/// Feature columns of a list of feature numbers (`31` for F31).
pub fn feature_columns(features: &[usize]) -> Result<Vec<usize>, AnomalyError> {
    let mut cols = Vec::new();
    for &k in features {
        if !(1..=NUM_FEATURES).contains(&k) {
            return Err(AnomalyError::UnknownFeature(k));
        }
        for c in columns_of_feature(k) {
            if !cols.contains(&c) {
                cols.push(c);
            }
        }
    }
    if cols.is_empty() {
        return Err(AnomalyError::NoFeatures);
    }
    Ok(cols)
}

/// The top `k` behavioral feature numbers of a feature ranking.
pub fn personalized_features(report: &RankingReport, k: usize) -> Vec<usize> {
    report
        .ordered_items()
        .iter()
        .filter_map(|item| item.strip_prefix('F').and_then(|n| n.parse::<usize>().ok()))
        .filter(|&n| n >= FIRST_BEHAVIORAL_FEATURE)
        .take(k)
        .collect()
}

/// Window matrix with undefined cells imputed by the column mean over all
/// rows of the participant.
struct Windows {
    values: Vec<Vec<f64>>,
    activity: Vec<Activity>,
}

impl Windows {
    fn new(rows: &[WindowRow], columns: &[usize]) -> Self {
        let data = LabeledMatrix::from_rows(rows);
        let all: Vec<usize> = (0..rows.len()).collect();
        let mut impute = vec![0.0; crate::features::NUM_COLUMNS];
        for &c in columns {
            impute[c] = data.column_mean(&all, c);
        }
        let values = all.iter().map(|&r| data.imputed_row(r, columns, &columns.iter().map(|&c| impute[c]).collect::<Vec<_>>())).collect();
        Self { values, activity: rows.iter().map(|r| r.activity).collect() }
    }

    fn fit(&self, days: &[&DayGroup], columns: &[usize]) -> Result<BayesNetModel, AnomalyError> {
        let train: Vec<TrainRow> = days
            .iter()
            .flat_map(|d| d.windows.iter().flatten())
            .map(|&r| TrainRow { values: &self.values[r], activity: self.activity[r], health: Health::Normal })
            .collect();
        if train.is_empty() {
            return Err(AnomalyError::NoWindows);
        }
        Ok(fit_ml(&train, columns)?)
    }

    /// Unweighted mean over records of each record's mean window LL.
    fn day_score(&self, model: &BayesNetModel, day: &DayGroup) -> Result<f64, AnomalyError> {
        let mut total = 0.0;
        for rec in &day.windows {
            if rec.is_empty() {
                return Err(AnomalyError::NoWindows);
            }
            let sum: f64 = rec.iter().map(|&r| context_log_likelihood(model, self.activity[r], &self.values[r])).sum();
            total += sum / rec.len() as f64;
        }
        let score = total / day.windows.len() as f64;
        if !score.is_finite() {
            return Err(AnomalyError::NonFinite);
        }
        Ok(score)
    }
}

/// log P(F | A, E) of one window with health summed out. Activity and
/// environment are observed context, so only the behavioral features are
/// scored. An unknown activity is summed out.
pub fn context_log_likelihood(model: &BayesNetModel, activity: Activity, row: &[f64]) -> f64 {
    let e = model.env_of_row(row);
    let context = match activity.index() {
        Some(a) => {
            let terms: Vec<f64> = (0..2).map(|h| model.prior_h[h].ln() + model.activity_log_prob(h, &e, a)).collect();
            let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
        }
        None => 0.0,
    };
    model.window_log_likelihood(activity, row) - model.env_log_prob(&e) - context
}

fn qualifying(days: &[DayGroup]) -> Result<Vec<usize>, AnomalyError> {
    let q: Vec<usize> = days.iter().enumerate().filter(|(_, d)| d.role() == DayRole::Normal).map(|(i, _)| i).collect();
    if q.len() < MIN_NORMAL_DAYS {
        return Err(AnomalyError::InsufficientNormalDays { found: q.len(), required: MIN_NORMAL_DAYS });
    }
    Ok(q)
}

/// Fits the normal model on the qualifying normal days of one participant.
pub fn train_normal_model(rows: &[WindowRow], columns: &[usize]) -> Result<BayesNetModel, AnomalyError> {
    let days = group_days(rows);
    let q = qualifying(&days)?;
    let w = Windows::new(rows, columns);
    w.fit(&q.iter().map(|&i| &days[i]).collect::<Vec<_>>(), columns)
}

/// Scores every day of one participant. Qualifying normal days are scored by
/// a model trained on the other qualifying normal days; all remaining days by
/// the model trained on every qualifying normal day.
pub fn loo_scores(rows: &[WindowRow], columns: &[usize]) -> Result<Vec<DayGroup>, AnomalyError> {
    if columns.is_empty() {
        return Err(AnomalyError::NoFeatures);
    }
    let mut days = group_days(rows);
    let q = qualifying(&days)?;
    let w = Windows::new(rows, columns);
    let loo: Vec<f64> = q
        .par_iter()
        .map(|&held| {
            let train: Vec<&DayGroup> = q.iter().filter(|&&i| i != held).map(|&i| &days[i]).collect();
            let model = w.fit(&train, columns)?;
            w.day_score(&model, &days[held])
        })
        .collect::<Result<_, _>>()?;
    let full = w.fit(&q.iter().map(|&i| &days[i]).collect::<Vec<_>>(), columns)?;
    let rest: Vec<(usize, f64)> = (0..days.len())
        .filter(|i| !q.contains(i))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&i| w.day_score(&full, &days[i]).map(|s| (i, s)))
        .collect::<Result<_, _>>()?;
    for (&i, s) in q.iter().zip(loo) {
        days[i].log_likelihood = Some(s);
    }
    for (i, s) in rest {
        days[i].log_likelihood = Some(s);
    }
    Ok(days)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Cohen's d with the pooled sample standard deviation.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64, AnomalyError> {
    if a.len() < 2 {
        return Err(AnomalyError::TooFewSamples { group: "a", n: a.len() });
    }
    if b.len() < 2 {
        return Err(AnomalyError::TooFewSamples { group: "b", n: b.len() });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(AnomalyError::NonFinite);
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = (((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0)).sqrt();
    if pooled <= 0.0 {
        return Err(AnomalyError::DegenerateGroups);
    }
    Ok((ma - mb) / pooled)
}

/// Flags scores below `mean(normal) - k_sigma * sd(normal)`.
pub fn flag_days(scores: &[f64], normal: &[f64], k_sigma: f64) -> Result<Vec<bool>, AnomalyError> {
    if normal.len() < 2 {
        return Err(AnomalyError::TooFewSamples { group: "normal", n: normal.len() });
    }
    let (mean, var) = mean_var(normal);
    let cut = mean - k_sigma * var.sqrt();
    Ok(scores.iter().map(|&s| s < cut).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayScore {
    pub day_index: i64,
    pub date: Option<NaiveDate>,
    pub n_records: usize,
    pub n_windows: usize,
    pub health: Health,
    pub role: DayRole,
    pub log_likelihood: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub participant: String,
    /// Feature numbers of the model, in order.
    pub features: Vec<usize>,
    pub feature_labels: Vec<String>,
    pub columns: Vec<String>,
    pub k_sigma: f64,
    pub normal_mean: f64,
    pub normal_sd: f64,
    pub weak_mean: Option<f64>,
    /// d between normal and weak day scores; `None` with fewer than two weak days.
    pub cohens_d: Option<f64>,
    pub days: Vec<DayScore>,
}

impl AnomalyReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("participant,day_index,date,n_records,n_windows,health,group,log_likelihood,flagged\n");
        for d in &self.days {
            let date = d.date.map(|x| x.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                self.participant,
                d.day_index,
                date,
                d.n_records,
                d.n_windows,
                d.health.name(),
                d.role.name(),
                crate::features::format_float(d.log_likelihood),
                d.flagged
            );
        }
        s
    }
}

/// Scores and flags all days of one participant's windows.
pub fn anomaly_report(rows: &[WindowRow], features: &[usize], k_sigma: f64) -> Result<AnomalyReport, AnomalyError> {
    let columns = feature_columns(features)?;
    let days = loo_scores(rows, &columns)?;
    let score = |d: &DayGroup| d.log_likelihood.expect("scored");
    let normal: Vec<f64> = days.iter().filter(|d| d.role() == DayRole::Normal).map(score).collect();
    let weak: Vec<f64> = days.iter().filter(|d| d.role() == DayRole::Weak).map(score).collect();
    let all: Vec<f64> = days.iter().map(score).collect();
    let flags = flag_days(&all, &normal, k_sigma)?;
    let (normal_mean, normal_var) = mean_var(&normal);
    let d = if weak.len() >= 2 { Some(cohens_d(&normal, &weak)?) } else { None };
    let weak_mean = (!weak.is_empty()).then(|| weak.iter().sum::<f64>() / weak.len() as f64);
    Ok(AnomalyReport {
        participant: days.first().map(|d| d.participant.clone()).unwrap_or_default(),
        features: features.to_vec(),
        feature_labels: features.iter().map(|&k| feature_label(k).to_string()).collect(),
        columns: columns.iter().map(|&c| column_name(c)).collect(),
        k_sigma,
        normal_mean,
        normal_sd: normal_var.sqrt(),
        weak_mean,
        cohens_d: d,
        days: days
            .iter()
            .zip(flags)
            .map(|(g, flagged)| DayScore {
                day_index: g.day_index,
                date: g.date(),
                n_records: g.n_records(),
                n_windows: g.n_windows(),
                health: g.health,
                role: g.role(),
                log_likelihood: score(g),
                flagged,
            })
            .collect(),
    })
}
