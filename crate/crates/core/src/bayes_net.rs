//! Health/activity Bayesian network.
//!
//! Structure: H → A ← E, and each selected feature F depends on (A, H).
//! E is four independent discrete variables read off the environment columns
//! (time of day, weather, lighting tercile, dominant object). Features are
//! standardized with training statistics and modeled as independent Gaussians
//! per (A, H) cell; densities are reported on the raw feature scale.

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{column_name, NUM_COLUMNS};
use crate::model::{Activity, Health, NUM_ACTIVITIES, NUM_OBJECTS};

pub const MODEL_VERSION: u32 = 1;
pub const VAR_FLOOR: f64 = 1e-6;
/// Dominant-object threshold; below it the object parent is "none".
pub const OBJECT_THRESHOLD: f64 = 0.5;

pub const N_TOD: usize = 3;
pub const N_WEATHER: usize = 2;
pub const N_LIGHT: usize = 3;
pub const N_OBJECT: usize = NUM_OBJECTS + 1;
pub const N_ENV: usize = N_TOD * N_WEATHER * N_LIGHT * N_OBJECT;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const CONST_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BnError {
    #[error("no training rows")]
    EmptyDataset,
    #[error("row {row}: health label must be observed")]
    UnobservedHealth { row: usize },
    #[error("row {row}: activity label must be observed for maximum-likelihood fitting")]
    UnobservedActivity { row: usize },
    #[error("feature {0} is not in the model")]
    UnknownFeature(String),
    #[error("feature {0} missing from evidence")]
    MissingFeature(String),
    #[error("activity must be observed")]
    ActivityRequired,
    #[error("evidence impossible: every hypothesis has zero probability")]
    EvidenceImpossible,
    #[error("no windows to score")]
    NoWindows,
    #[error("model invariant violated: {0}")]
    Invalid(String),
    #[error("unsupported model version {0}")]
    Version(u32),
    #[error("model json: {0}")]
    Json(String),
}

/// Discrete environment parents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnvState {
    pub tod: usize,
    pub weather: usize,
    pub light: usize,
    pub object: usize,
}

impl EnvState {
    pub fn index(&self) -> usize {
        ((self.tod * N_WEATHER + self.weather) * N_LIGHT + self.light) * N_OBJECT + self.object
    }

    pub fn from_index(mut i: usize) -> Self {
        let object = i % N_OBJECT;
        i /= N_OBJECT;
        let light = i % N_LIGHT;
        i /= N_LIGHT;
        let weather = i % N_WEATHER;
        let tod = i / N_WEATHER;
        Self { tod, weather, light, object }
    }
}

/// Index of the most likely object, or `NUM_OBJECTS` ("none") when no
/// likelihood reaches the threshold.
pub fn dominant_object(likelihoods: &[f64]) -> usize {
    let mut best = NUM_OBJECTS;
    let mut best_p = f64::NEG_INFINITY;
    for (i, &p) in likelihoods.iter().enumerate().take(NUM_OBJECTS) {
        if p > best_p {
            best = i;
            best_p = p;
        }
    }
    if best_p >= OBJECT_THRESHOLD {
        best
    } else {
        NUM_OBJECTS
    }
}

/// Lighting tercile cut points from training values.
pub fn tercile_cuts(values: &[f64]) -> [f64; 2] {
    if values.is_empty() {
        return [0.0, 0.0];
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    [v[n / 3], v[(2 * n) / 3]]
}

/// Environment state of a full 85-column feature row.
pub fn env_of_row(row: &[f64], lighting_cuts: &[f64; 2]) -> EnvState {
    let lum = row[0];
    let light = if lum < lighting_cuts[0] {
        0
    } else if lum < lighting_cuts[1] {
        1
    } else {
        2
    };
    let tod = (row[1].round() as i64 - 1).clamp(0, N_TOD as i64 - 1) as usize;
    let weather = usize::from(row[2] >= 0.5);
    EnvState { tod, weather, light, object: dominant_object(&row[3..3 + NUM_OBJECTS]) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub var: f64,
}

impl Gaussian {
    pub const STANDARD: Gaussian = Gaussian { mean: 0.0, var: 1.0 };

    pub fn log_density(&self, z: f64) -> f64 {
        let d = z - self.mean;
        -0.5 * (LN_2PI + self.var.ln() + d * d / self.var)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub std: f64,
}

/// Gaussian table of one selected feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureModel {
    pub column: usize,
    pub standardization: Standardization,
    /// Indexed `[activity][health]`.
    pub cells: [[Gaussian; 2]; NUM_ACTIVITIES],
}

impl FeatureModel {
    /// Log density of raw value `x` given (a, h), including the
    /// standardization Jacobian.
    #[inline]
    pub fn log_density(&self, a: usize, h: usize, x: f64) -> f64 {
        let z = (x - self.standardization.mean) / self.standardization.std;
        self.cells[a][h].log_density(z) - self.standardization.std.ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesNetModel {
    pub version: u32,
    pub prior_h: [f64; 2],
    pub prior_tod: [f64; N_TOD],
    pub prior_weather: [f64; N_WEATHER],
    pub prior_light: [f64; N_LIGHT],
    pub prior_object: [f64; N_OBJECT],
    pub lighting_cuts: [f64; 2],
    /// `cpt_a[h * N_ENV + env_index][a]`.
    pub cpt_a: Vec<[f64; NUM_ACTIVITIES]>,
    pub features: Vec<FeatureModel>,
}

/// One training row: a full feature row plus labels.
#[derive(Debug, Clone, Copy)]
pub struct TrainRow<'a> {
    pub values: &'a [f64],
    pub activity: Activity,
    pub health: Health,
}

/// Result of EM fitting: the model plus the objective after each M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub model: BayesNetModel,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-6 }
    }
}

fn normalize_counts<const K: usize>(counts: &[f64; K]) -> [f64; K] {
    let total: f64 = counts.iter().sum();
    counts.map(|c| c / total)
}

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Column statistics used to standardize; `None` for (near) constant columns.
pub fn standardize_column(rows: &[TrainRow<'_>], column: usize) -> Option<Standardization> {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r.values[column]).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r.values[column] - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (std > CONST_STD * mean.abs().max(1.0)).then_some(Standardization { mean, std })
}

/// Per-cell Gaussians for one column from responsibilities `resp[n][a]`.
fn fit_feature(rows: &[TrainRow<'_>], resp: &[[f64; NUM_ACTIVITIES]], column: usize, st: Standardization) -> FeatureModel {
    let z: Vec<f64> = rows.iter().map(|r| (r.values[column] - st.mean) / st.std).collect();
    let mut w = [[0.0; 2]; NUM_ACTIVITIES];
    let mut s = [[0.0; 2]; NUM_ACTIVITIES];
    for (n, row) in rows.iter().enumerate() {
        let h = row.health.index().expect("observed health");
        for a in 0..NUM_ACTIVITIES {
            w[a][h] += resp[n][a];
            s[a][h] += resp[n][a] * z[n];
        }
    }
    let mut ss = [[0.0; 2]; NUM_ACTIVITIES];
    let mut mean = [[0.0; 2]; NUM_ACTIVITIES];
    for a in 0..NUM_ACTIVITIES {
        for h in 0..2 {
            if w[a][h] > 0.0 {
                mean[a][h] = s[a][h] / w[a][h];
            }
        }
    }
    for (n, row) in rows.iter().enumerate() {
        let h = row.health.index().expect("observed health");
        for a in 0..NUM_ACTIVITIES {
            ss[a][h] += resp[n][a] * (z[n] - mean[a][h]).powi(2);
        }
    }
    let mut marginal = [Gaussian::STANDARD; 2];
    for h in 0..2 {
        let wh: f64 = (0..NUM_ACTIVITIES).map(|a| w[a][h]).sum();
        if wh > 1e-12 {
            let m = (0..NUM_ACTIVITIES).map(|a| s[a][h]).sum::<f64>() / wh;
            let v = rows
                .iter()
                .enumerate()
                .filter(|(_, r)| r.health.index() == Some(h))
                .map(|(n, _)| resp[n].iter().sum::<f64>() * (z[n] - m).powi(2))
                .sum::<f64>()
                / wh;
            marginal[h] = Gaussian { mean: m, var: v.max(VAR_FLOOR) };
        }
    }
    let mut cells = [[Gaussian::STANDARD; 2]; NUM_ACTIVITIES];
    for a in 0..NUM_ACTIVITIES {
        for h in 0..2 {
            cells[a][h] = if w[a][h] > 1e-12 {
                Gaussian { mean: mean[a][h], var: (ss[a][h] / w[a][h]).max(VAR_FLOOR) }
            } else {
                marginal[h]
            };
        }
    }
    FeatureModel { column, standardization: st, cells }
}

struct Prepared {
    health: Vec<usize>,
    env: Vec<EnvState>,
    cuts: [f64; 2],
    features: Vec<(usize, Standardization)>,
}

fn prepare(rows: &[TrainRow<'_>], columns: &[usize]) -> Result<Prepared, BnError> {
    if rows.is_empty() {
        return Err(BnError::EmptyDataset);
    }
    let health = rows
        .iter()
        .enumerate()
        .map(|(i, r)| r.health.index().ok_or(BnError::UnobservedHealth { row: i }))
        .collect::<Result<Vec<_>, _>>()?;
    let lum: Vec<f64> = rows.iter().map(|r| r.values[0]).collect();
    let cuts = tercile_cuts(&lum);
    let env = rows.iter().map(|r| env_of_row(r.values, &cuts)).collect();
    let mut features = Vec::with_capacity(columns.len());
    for &c in columns {
        if c >= NUM_COLUMNS {
            return Err(BnError::UnknownFeature(format!("column {c}")));
        }
        if features.iter().any(|(fc, _)| *fc == c) {
            continue;
        }
        match standardize_column(rows, c) {
            Some(st) => features.push((c, st)),
            None => debug!("feature {} is constant in the training data; excluded", column_name(c)),
        }
    }
    Ok(Prepared { health, env, cuts, features })
}

fn m_step(rows: &[TrainRow<'_>], prep: &Prepared, resp: &[[f64; NUM_ACTIVITIES]]) -> BayesNetModel {
    let mut h_counts = [1.0; 2];
    let mut tod = [1.0; N_TOD];
    let mut weather = [1.0; N_WEATHER];
    let mut light = [1.0; N_LIGHT];
    let mut object = [1.0; N_OBJECT];
    let mut a_counts = vec![[1.0; NUM_ACTIVITIES]; 2 * N_ENV];
    for n in 0..rows.len() {
        let h = prep.health[n];
        let e = prep.env[n];
        h_counts[h] += 1.0;
        tod[e.tod] += 1.0;
        weather[e.weather] += 1.0;
        light[e.light] += 1.0;
        object[e.object] += 1.0;
        let row = &mut a_counts[h * N_ENV + e.index()];
        for a in 0..NUM_ACTIVITIES {
            row[a] += resp[n][a];
        }
    }
    BayesNetModel {
        version: MODEL_VERSION,
        prior_h: normalize_counts(&h_counts),
        prior_tod: normalize_counts(&tod),
        prior_weather: normalize_counts(&weather),
        prior_light: normalize_counts(&light),
        prior_object: normalize_counts(&object),
        lighting_cuts: prep.cuts,
        cpt_a: a_counts.iter().map(normalize_counts).collect(),
        features: prep.features.iter().map(|&(c, st)| fit_feature(rows, resp, c, st)).collect(),
    }
}

fn one_hot(a: usize) -> [f64; NUM_ACTIVITIES] {
    let mut r = [0.0; NUM_ACTIVITIES];
    r[a] = 1.0;
    r
}

/// Maximum-likelihood fit (add-one smoothed CPTs) on fully labeled rows,
/// using the given feature columns in order.
pub fn fit_ml(rows: &[TrainRow<'_>], columns: &[usize]) -> Result<BayesNetModel, BnError> {
    let prep = prepare(rows, columns)?;
    let resp = rows
        .iter()
        .enumerate()
        .map(|(i, r)| r.activity.index().map(one_hot).ok_or(BnError::UnobservedActivity { row: i }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(m_step(rows, &prep, &resp))
}

/// EM fit where some activity labels may be unknown. The objective is the
/// observed-data log-likelihood plus the log of the add-one (Dirichlet)
/// smoothing prior on every CPT; it is non-decreasing across iterations.
pub fn fit_em(rows: &[TrainRow<'_>], columns: &[usize], opts: EmOptions) -> Result<EmFit, BnError> {
    let prep = prepare(rows, columns)?;
    let uniform = [1.0 / NUM_ACTIVITIES as f64; NUM_ACTIVITIES];
    let mut resp: Vec<[f64; NUM_ACTIVITIES]> = rows.iter().map(|r| r.activity.index().map_or(uniform, one_hot)).collect();
    let mut model = m_step(rows, &prep, &resp);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let objective = e_step(&model, rows, &prep, &mut resp) + model.log_prior();
        let gain = trace.last().map(|prev| objective - prev);
        trace.push(objective);
        if gain.is_some_and(|g| g < opts.tol) {
            converged = true;
            break;
        }
        model = m_step(rows, &prep, &resp);
    }
    Ok(EmFit { model, trace, iterations, converged })
}

/// Fills responsibilities for rows with unknown activity and returns the
/// observed-data log-likelihood under `model`.
fn e_step(model: &BayesNetModel, rows: &[TrainRow<'_>], prep: &Prepared, resp: &mut [[f64; NUM_ACTIVITIES]]) -> f64 {
    let mut total = 0.0;
    for (n, row) in rows.iter().enumerate() {
        let h = prep.health[n];
        let e = prep.env[n];
        let base = model.prior_h[h].ln() + model.env_log_prob(&e);
        let cpt = &model.cpt_a[h * N_ENV + e.index()];
        let mut la = [0.0; NUM_ACTIVITIES];
        for a in 0..NUM_ACTIVITIES {
            let mut l = cpt[a].ln();
            for f in &model.features {
                l += f.log_density(a, h, row.values[f.column]);
            }
            la[a] = l;
        }
        match row.activity.index() {
            Some(a) => total += base + la[a],
            None => {
                let lse = logsumexp(&la);
                total += base + lse;
                for a in 0..NUM_ACTIVITIES {
                    resp[n][a] = (la[a] - lse).exp();
                }
            }
        }
    }
    total
}

impl BayesNetModel {
    pub fn selected_columns(&self) -> Vec<usize> {
        self.features.iter().map(|f| f.column).collect()
    }

    pub fn env_of_row(&self, row: &[f64]) -> EnvState {
        env_of_row(row, &self.lighting_cuts)
    }

    pub fn env_log_prob(&self, e: &EnvState) -> f64 {
        self.prior_tod[e.tod].ln() + self.prior_weather[e.weather].ln() + self.prior_light[e.light].ln() + self.prior_object[e.object].ln()
    }

    pub fn activity_log_prob(&self, h: usize, e: &EnvState, a: usize) -> f64 {
        self.cpt_a[h * N_ENV + e.index()][a].ln()
    }

    /// Σ log θ over every CPT entry (the add-one prior's log density up to a
    /// constant).
    pub fn log_prior(&self) -> f64 {
        let sum_ln = |p: &[f64]| p.iter().map(|x| x.ln()).sum::<f64>();
        sum_ln(&self.prior_h)
            + sum_ln(&self.prior_tod)
            + sum_ln(&self.prior_weather)
            + sum_ln(&self.prior_light)
            + sum_ln(&self.prior_object)
            + self.cpt_a.iter().map(|r| sum_ln(r)).sum::<f64>()
    }

    #[inline]
    fn joint_indexed(&self, h: usize, a: usize, e: &EnvState, row: &[f64]) -> f64 {
        let mut lp = self.prior_h[h].ln() + self.env_log_prob(e) + self.activity_log_prob(h, e, a);
        for f in &self.features {
            lp += f.log_density(a, h, row[f.column]);
        }
        lp
    }

    /// log P(H=h, E=e, A=a, F=row) with `row` a full 85-column feature row.
    pub fn joint_log_prob(&self, h: Health, a: Activity, e: &EnvState, row: &[f64]) -> Result<f64, BnError> {
        let h = h.index().ok_or(BnError::UnobservedHealth { row: 0 })?;
        let a = a.index().ok_or(BnError::ActivityRequired)?;
        Ok(self.joint_indexed(h, a, e, row))
    }

    /// Same as [`Self::joint_log_prob`] with evidence given as
    /// `(column, value)` pairs; every selected feature must be present and
    /// no other feature may be.
    pub fn joint_log_prob_named(&self, h: Health, a: Activity, e: &EnvState, evidence: &[(usize, f64)]) -> Result<f64, BnError> {
        let mut row = vec![f64::NAN; NUM_COLUMNS];
        for &(c, v) in evidence {
            if !self.features.iter().any(|f| f.column == c) {
                return Err(BnError::UnknownFeature(column_name(c)));
            }
            row[c] = v;
        }
        if let Some(f) = self.features.iter().find(|f| row[f.column].is_nan()) {
            return Err(BnError::MissingFeature(column_name(f.column)));
        }
        self.joint_log_prob(h, a, e, &row)
    }

    fn log_terms(&self, a: Activity, e: &EnvState, row: &[f64]) -> [f64; 2] {
        let mut lh = [0.0; 2];
        for (h, slot) in lh.iter_mut().enumerate() {
            *slot = match a.index() {
                Some(a) => self.joint_indexed(h, a, e, row),
                None => {
                    let la: Vec<f64> = (0..NUM_ACTIVITIES).map(|a| self.joint_indexed(h, a, e, row)).collect();
                    logsumexp(&la)
                }
            };
        }
        lh
    }

    /// P(H | A, E, F), indexed [normal, weak]. With `Activity::Unknown` the
    /// activity is summed out.
    pub fn posterior_health(&self, a: Activity, e: &EnvState, row: &[f64]) -> Result<[f64; 2], BnError> {
        normalize_log(&self.log_terms(a, e, row))
    }

    /// P(A, H | E, F), indexed `[activity][health]`.
    pub fn posterior_joint(&self, e: &EnvState, row: &[f64]) -> Result<[[f64; 2]; NUM_ACTIVITIES], BnError> {
        let mut flat = [0.0; 2 * NUM_ACTIVITIES];
        for a in 0..NUM_ACTIVITIES {
            for h in 0..2 {
                flat[2 * a + h] = self.joint_indexed(h, a, e, row);
            }
        }
        let p = normalize_log(&flat)?;
        let mut out = [[0.0; 2]; NUM_ACTIVITIES];
        for a in 0..NUM_ACTIVITIES {
            out[a] = [p[2 * a], p[2 * a + 1]];
        }
        Ok(out)
    }

    /// Most probable health state; ties go to weak.
    pub fn predict_health(&self, a: Activity, row: &[f64]) -> Result<Health, BnError> {
        let e = self.env_of_row(row);
        let lh = self.log_terms(a, &e, row);
        if lh.iter().all(|l| *l == f64::NEG_INFINITY) {
            return Err(BnError::EvidenceImpossible);
        }
        Ok(if lh[1] >= lh[0] { Health::Weak } else { Health::Normal })
    }

    /// log Σ_H P(H, E, A, F) of one window (A summed out too if unknown).
    pub fn window_log_likelihood(&self, a: Activity, row: &[f64]) -> f64 {
        let e = self.env_of_row(row);
        logsumexp(&self.log_terms(a, &e, row))
    }

    /// Mean window log-likelihood with health marginalized.
    pub fn record_log_likelihood(&self, windows: &[(Activity, &[f64])]) -> Result<f64, BnError> {
        if windows.is_empty() {
            return Err(BnError::NoWindows);
        }
        let sum: f64 = windows.iter().map(|(a, row)| self.window_log_likelihood(*a, row)).sum();
        Ok(sum / windows.len() as f64)
    }

    /// Checks probability rows, variance floors and standardization.
    pub fn validate(&self) -> Result<(), BnError> {
        let check = |name: &str, p: &[f64]| -> Result<(), BnError> {
            let s: f64 = p.iter().sum();
            if (s - 1.0).abs() > 1e-9 || p.iter().any(|x| !(*x >= 0.0)) {
                return Err(BnError::Invalid(format!("{name} sums to {s}")));
            }
            Ok(())
        };
        check("prior_h", &self.prior_h)?;
        check("prior_tod", &self.prior_tod)?;
        check("prior_weather", &self.prior_weather)?;
        check("prior_light", &self.prior_light)?;
        check("prior_object", &self.prior_object)?;
        if self.cpt_a.len() != 2 * N_ENV {
            return Err(BnError::Invalid(format!("cpt_a has {} rows", self.cpt_a.len())));
        }
        for (i, row) in self.cpt_a.iter().enumerate() {
            check(&format!("cpt_a[{i}]"), row)?;
        }
        for f in &self.features {
            if !(f.standardization.std > 0.0) {
                return Err(BnError::Invalid(format!("{} has std {}", column_name(f.column), f.standardization.std)));
            }
            for cell in f.cells.iter().flatten() {
                if !(cell.var >= VAR_FLOOR) {
                    return Err(BnError::Invalid(format!("{} variance {}", column_name(f.column), cell.var)));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, BnError> {
        let model: BayesNetModel = serde_json::from_str(text).map_err(|e| BnError::Json(e.to_string()))?;
        if model.version != MODEL_VERSION {
            return Err(BnError::Version(model.version));
        }
        model.validate()?;
        Ok(model)
    }
}

/// Normalizes log-weights with max subtraction.
pub fn normalize_log<const K: usize>(logs: &[f64; K]) -> Result<[f64; K], BnError> {
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(BnError::EvidenceImpossible);
    }
    let w = logs.map(|l| (l - m).exp());
    let s: f64 = w.iter().sum();
    Ok(w.map(|x| x / s))
}
