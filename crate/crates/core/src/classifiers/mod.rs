//! Health-state classifiers behind one interface: the Bayesian network,
//! a random forest and a linear SVM, plus metrics and cross-validation.

pub mod cv;
pub mod forest;
pub mod metrics;
pub mod svm;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayes_net::{fit_em, fit_ml, BayesNetModel, BnError, EmOptions, TrainRow};
use crate::features::{WindowRow, NUM_COLUMNS};
use crate::model::{Activity, Health};

pub use cv::{cross_validate, stratified_folds, CvContext, EvalReport, FoldReport};
pub use forest::{ForestParams, RandomForest};
pub use metrics::{f1_scores, Confusion};
pub use svm::{LinearSvm, SvmParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifierError {
    #[error("no samples")]
    Empty,
    #[error("no feature columns selected")]
    NoFeatures,
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("row without an observed health label")]
    UnlabeledRow,
    #[error("label lengths differ: {truth} truth vs {pred} predictions")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("{n} samples cannot be split into {k} folds")]
    TooFewSamples { n: usize, k: usize },
    #[error("invalid classifier spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    BayesNet(#[from] BnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassifierKind {
    #[serde(rename = "bn", alias = "bayes_net")]
    BayesNet,
    #[serde(rename = "rf", alias = "random_forest")]
    RandomForest,
    #[serde(rename = "svm", alias = "linear_svm")]
    LinearSvm,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [ClassifierKind::BayesNet, ClassifierKind::RandomForest, ClassifierKind::LinearSvm];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::BayesNet => "bn",
            ClassifierKind::RandomForest => "rf",
            ClassifierKind::LinearSvm => "svm",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bn" | "bayes_net" => Ok(ClassifierKind::BayesNet),
            "rf" | "random_forest" => Ok(ClassifierKind::RandomForest),
            "svm" | "linear_svm" => Ok(ClassifierKind::LinearSvm),
            other => Err(format!("unknown classifier '{other}' (expected bn, rf or svm)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    #[serde(default)]
    pub forest: ForestParams,
    #[serde(default)]
    pub svm: SvmParams,
    #[serde(default)]
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn new(kind: ClassifierKind, seed: u64) -> Self {
        Self { kind, forest: ForestParams::default(), svm: SvmParams::default(), seed }
    }

    pub fn bayes_net(seed: u64) -> Self {
        Self::new(ClassifierKind::BayesNet, seed)
    }
}

/// Feature rows with undefined-cell masks, labels and a group id per row.
/// Rows sharing a group (the windows of one record) are always placed in
/// the same cross-validation fold.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledMatrix {
    pub values: Vec<Vec<f64>>,
    pub undefined: Vec<Vec<bool>>,
    pub health: Vec<Health>,
    pub activity: Vec<Activity>,
    pub group: Vec<usize>,
}

impl LabeledMatrix {
    /// Window rows grouped by (participant, record id).
    pub fn from_rows<'a>(rows: impl IntoIterator<Item = &'a WindowRow>) -> Self {
        let mut m = Self::default();
        let mut ids: HashMap<(&str, &str), usize> = HashMap::new();
        for r in rows {
            let next = ids.len();
            let g = *ids.entry((r.participant.as_str(), r.record_id.as_str())).or_insert(next);
            m.push(r.features.values.clone(), r.features.undefined.clone(), r.health, r.activity);
            let last = m.len() - 1;
            m.group[last] = g;
        }
        m
    }

    /// Appends a row as its own group.
    pub fn push(&mut self, values: Vec<f64>, undefined: Vec<bool>, health: Health, activity: Activity) {
        debug_assert_eq!(values.len(), NUM_COLUMNS);
        self.group.push(self.values.len());
        self.values.push(values);
        self.undefined.push(undefined);
        self.health.push(health);
        self.activity.push(activity);
    }

    /// Unmasked, ungrouped rows.
    pub fn from_dense(values: Vec<Vec<f64>>, health: Vec<Health>, activity: Vec<Activity>) -> Self {
        let undefined = values.iter().map(|r| vec![false; r.len()]).collect();
        let group = (0..values.len()).collect();
        Self { values, undefined, health, activity, group }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Mean of the defined cells of `column` over `rows` (0 if none).
    pub fn column_mean(&self, rows: &[usize], column: usize) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for &r in rows {
            if !self.undefined[r][column] {
                sum += self.values[r][column];
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Full row with undefined cells of `columns` replaced by `impute`.
    pub fn imputed_row(&self, r: usize, columns: &[usize], impute: &[f64]) -> Vec<f64> {
        let mut v = self.values[r].clone();
        for (j, &c) in columns.iter().enumerate() {
            if self.undefined[r][c] {
                v[c] = impute[j];
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Model {
    BayesNet(BayesNetModel),
    Forest(RandomForest),
    Svm(LinearSvm),
    /// Training data held one class only.
    Constant(Health),
}

/// A fitted classifier with its feature columns and imputation values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub columns: Vec<usize>,
    pub impute: Vec<f64>,
    pub model: Model,
}

impl Classifier {
    /// Fits on the given rows of `data` using `columns`.
    pub fn fit(spec: &ClassifierSpec, data: &LabeledMatrix, rows: &[usize], columns: &[usize]) -> Result<Self, ClassifierError> {
        if rows.is_empty() {
            return Err(ClassifierError::Empty);
        }
        if columns.is_empty() && spec.kind != ClassifierKind::BayesNet {
            return Err(ClassifierError::NoFeatures);
        }
        if let Some(c) = columns.iter().find(|&&c| c >= NUM_COLUMNS) {
            return Err(ClassifierError::InvalidSpec(format!("column {c} out of range")));
        }
        let mut has = [false; 2];
        for &r in rows {
            has[data.health[r].index().ok_or(ClassifierError::UnlabeledRow)?] = true;
        }
        if !(has[0] && has[1]) {
            return Err(ClassifierError::SingleClass);
        }
        let impute: Vec<f64> = columns.iter().map(|&c| data.column_mean(rows, c)).collect();
        let full: Vec<Vec<f64>> = rows.iter().map(|&r| data.imputed_row(r, columns, &impute)).collect();
        let model = match spec.kind {
            ClassifierKind::BayesNet => {
                let train: Vec<TrainRow> = rows
                    .iter()
                    .zip(&full)
                    .map(|(&r, v)| TrainRow { values: v, activity: data.activity[r], health: data.health[r] })
                    .collect();
                if train.iter().any(|t| t.activity == Activity::Unknown) {
                    Model::BayesNet(fit_em(&train, columns, EmOptions::default())?.model)
                } else {
                    Model::BayesNet(fit_ml(&train, columns)?)
                }
            }
            ClassifierKind::RandomForest | ClassifierKind::LinearSvm => {
                let x: Vec<Vec<f64>> = full.iter().map(|v| columns.iter().map(|&c| v[c]).collect()).collect();
                let y: Vec<bool> = rows.iter().map(|&r| data.health[r] == Health::Weak).collect();
                if spec.kind == ClassifierKind::RandomForest {
                    Model::Forest(RandomForest::fit(&x, &y, &spec.forest, spec.seed)?)
                } else {
                    Model::Svm(LinearSvm::fit(&x, &y, &spec.svm, spec.seed)?)
                }
            }
        };
        Ok(Self { columns: columns.to_vec(), impute, model })
    }

    /// Majority-class stand-in used when a training fold holds one class.
    pub fn constant(h: Health, columns: &[usize]) -> Self {
        Self { columns: columns.to_vec(), impute: vec![0.0; columns.len()], model: Model::Constant(h) }
    }

    /// Predicts the health state of row `r` of `data`.
    pub fn predict(&self, data: &LabeledMatrix, r: usize) -> Result<Health, ClassifierError> {
        let v = data.imputed_row(r, &self.columns, &self.impute);
        self.predict_values(&v, data.activity[r])
    }

    /// Predicts from a full (already imputed) feature row.
    pub fn predict_values(&self, row: &[f64], activity: Activity) -> Result<Health, ClassifierError> {
        let weak = match &self.model {
            Model::Constant(h) => return Ok(*h),
            Model::BayesNet(m) => return Ok(m.predict_health(activity, row)?),
            Model::Forest(f) => f.predict(&self.project(row)),
            Model::Svm(s) => s.predict(&self.project(row)),
        };
        Ok(if weak { Health::Weak } else { Health::Normal })
    }

    fn project(&self, row: &[f64]) -> Vec<f64> {
        self.columns.iter().map(|&c| row[c]).collect()
    }
}
