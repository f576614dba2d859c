//! Python bindings.
//!
//! Structured results cross the boundary as plain Python objects (dicts,
//! lists, floats) built from the serde representation of the Rust types.

use std::path::PathBuf;

use frailwatch_core::anomaly::{self, GENERIC_TOP5};
use frailwatch_core::bayes_net::{self, BayesNetModel, EmOptions, TrainRow};
use frailwatch_core::classifiers::{ClassifierKind, ClassifierSpec, LabeledMatrix};
use frailwatch_core::features::{self, WindowRow};
use frailwatch_core::model::{self, Activity, EnvContext, FrameMotionSummary, LabeledDataset};
use frailwatch_core::pipeline::{self, SelectionOptions, WindowingConfig};
use frailwatch_core::ranking::{self, RankingOptions, RankingReport};
use frailwatch_core::synth::{self, StudyConfig};
use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(err)
}

fn activity(name: &str) -> PyResult<Activity> {
    Activity::from_name(name).ok_or_else(|| PyValueError::new_err(format!("unknown activity '{name}'")))
}

/// A labeled collection of monitoring records.
#[pyclass(module = "frailwatch", frozen)]
struct Dataset {
    inner: LabeledDataset,
}

#[pymethods]
impl Dataset {
    /// Loads a dataset directory, manifest or JSONL log.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: model::load_dataset(&path).map_err(err)? })
    }

    /// Generates a synthetic study. `participants` filters the reference
    /// profiles by id.
    #[staticmethod]
    #[pyo3(signature = (seed, participants=None, duration_scale=1.0))]
    fn synthesize(seed: u64, participants: Option<Vec<String>>, duration_scale: f64) -> PyResult<Self> {
        let mut config = StudyConfig::reference(seed);
        if let Some(ids) = participants {
            if let Some(bad) = ids.iter().find(|id| !config.participants.iter().any(|p| &p.id == *id)) {
                return Err(PyKeyError::new_err(bad.clone()));
            }
            config.participants.retain(|p| ids.contains(&p.id));
        }
        config.duration_scale = duration_scale;
        Ok(Self { inner: synth::generate_study(&config).map_err(err)? })
    }

    /// Planted-effect study for a single participant.
    #[staticmethod]
    #[pyo3(signature = (seed, records, days, effect_activity=None))]
    fn planted(seed: u64, records: usize, days: usize, effect_activity: Option<&str>) -> PyResult<Self> {
        let act = effect_activity.map(activity).transpose()?;
        let config = StudyConfig::new(seed, vec![synth::planted_profile("Q1", records, days, act)]);
        Ok(Self { inner: synth::generate_study(&config).map_err(err)? })
    }

    /// Writes every record to one JSONL log.
    fn write_log(&self, path: PathBuf) -> PyResult<()> {
        model::write_log(&self.inner, &path).map_err(err)
    }

    #[getter]
    fn participants(&self) -> Vec<String> {
        self.inner.participants.keys().cloned().collect()
    }

    /// Per-record header fields (no frames).
    fn records<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyAny>>> {
        self.inner
            .records
            .iter()
            .map(|r| {
                let header = serde_json::json!({
                    "record_id": r.record_id,
                    "participant": r.participant_id,
                    "wall_clock_start": r.wall_clock_start,
                    "duration": r.duration,
                    "activity": r.activity,
                    "health": r.health,
                    "frames": r.frames.len(),
                });
                to_py(py, &header)
            })
            .collect()
    }

    /// Cuts every record into windows and extracts features.
    #[pyo3(signature = (window_seconds=300.0))]
    fn featurize(&self, window_seconds: f64) -> PyResult<Windows> {
        let rows = pipeline::featurize_dataset(&self.inner, &WindowingConfig::new(window_seconds)).map_err(err)?;
        Ok(Windows { rows, window_seconds })
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }

    fn __repr__(&self) -> String {
        format!("Dataset({} records, participants={:?})", self.inner.records.len(), self.participants())
    }
}

/// Featurized windows with their labels.
#[pyclass(module = "frailwatch", frozen)]
struct Windows {
    rows: Vec<WindowRow>,
    window_seconds: f64,
}

impl Windows {
    fn participant_rows(&self, participant: &str) -> PyResult<Vec<WindowRow>> {
        let rows: Vec<WindowRow> = self.rows.iter().filter(|r| r.participant == participant).cloned().collect();
        if rows.is_empty() {
            return Err(PyKeyError::new_err(participant.to_string()));
        }
        Ok(rows)
    }
}

#[pymethods]
impl Windows {
    /// Feature CSV path.
    #[staticmethod]
    #[pyo3(signature = (path, window_seconds=300.0))]
    fn read_csv(path: PathBuf, window_seconds: f64) -> PyResult<Self> {
        let file = std::fs::File::open(&path).map_err(err)?;
        Ok(Self { rows: features::read_feature_csv(file).map_err(err)?, window_seconds })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(&path).map_err(err)?;
        features::write_feature_csv(&self.rows, file).map_err(err)
    }

    #[getter]
    fn window_seconds(&self) -> f64 {
        self.window_seconds
    }

    #[getter]
    fn participants(&self) -> Vec<String> {
        pipeline::rows_by_participant(self.rows.clone()).into_keys().collect()
    }

    /// Column names of the feature matrix.
    #[staticmethod]
    fn columns() -> Vec<String> {
        (0..features::NUM_COLUMNS).map(features::column_name).collect()
    }

    /// Feature matrix as a list of rows; undefined cells are `None`.
    fn matrix(&self) -> Vec<Vec<Option<f64>>> {
        self.rows
            .iter()
            .map(|r| r.features.values.iter().zip(&r.features.undefined).map(|(v, u)| (!u).then_some(*v)).collect())
            .collect()
    }

    fn health(&self) -> Vec<&'static str> {
        self.rows.iter().map(|r| r.health.name()).collect()
    }

    fn activity(&self) -> Vec<&'static str> {
        self.rows.iter().map(|r| r.activity.name()).collect()
    }

    fn record_ids(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.record_id.clone()).collect()
    }

    fn __len__(&self) -> usize {
        self.rows.len()
    }

    fn __repr__(&self) -> String {
        format!("Windows({} rows, W={}s)", self.rows.len(), self.window_seconds)
    }

    /// Feature selection plus grouped cross-validation for one participant.
    /// Returns per-level F1 scores and the selection outcome.
    #[pyo3(signature = (participant, seed, classifier="bn", search_subsets=true, folds=5))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        participant: &str,
        seed: u64,
        classifier: &str,
        search_subsets: bool,
        folds: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        let kind: ClassifierKind = classifier.parse().map_err(err)?;
        let rows = self.participant_rows(participant)?;
        let opts = SelectionOptions { search_subsets, folds, ..SelectionOptions::default() };
        let result = pipeline::run_participant(
            &ClassifierSpec::new(kind, seed),
            &rows,
            &opts,
            &WindowingConfig::new(self.window_seconds),
        )
        .map_err(err)?;
        to_py(py, &result)
    }

    /// Multi-method feature ranking for one participant.
    #[pyo3(signature = (participant, seed, methods=None))]
    fn rank_features(&self, participant: &str, seed: u64, methods: Option<Vec<String>>) -> PyResult<Ranking> {
        self.rank(participant, seed, methods, ranking::rank_features)
    }

    /// Activity ranking for one participant.
    #[pyo3(signature = (participant, seed, methods=None))]
    fn rank_activities(&self, participant: &str, seed: u64, methods: Option<Vec<String>>) -> PyResult<Ranking> {
        self.rank(participant, seed, methods, ranking::rank_activities)
    }

    /// Day-level anomaly scores. `features` holds feature numbers; the
    /// generic top five are used when omitted.
    #[pyo3(signature = (participant, features=None, k_sigma=2.0))]
    fn anomaly<'py>(
        &self,
        py: Python<'py>,
        participant: &str,
        features: Option<Vec<usize>>,
        k_sigma: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let rows = self.participant_rows(participant)?;
        let features = features.unwrap_or_else(|| GENERIC_TOP5.to_vec());
        let report = anomaly::anomaly_report(&rows, &features, k_sigma).map_err(err)?;
        to_py(py, &report)
    }
}

type RankFn = fn(&LabeledMatrix, &[usize], &RankingOptions, u64) -> Result<RankingReport, ranking::RankingError>;

impl Windows {
    fn rank(&self, participant: &str, seed: u64, methods: Option<Vec<String>>, f: RankFn) -> PyResult<Ranking> {
        let rows = self.participant_rows(participant)?;
        let mut opts = RankingOptions::default();
        if let Some(names) = methods {
            let list = serde_json::Value::from(names);
            opts.methods = serde_json::from_value(list).map_err(err)?;
        }
        let data = LabeledMatrix::from_rows(&rows);
        let all: Vec<usize> = (0..rows.len()).collect();
        Ok(Ranking { inner: f(&data, &all, &opts, seed).map_err(err)? })
    }
}

/// Aggregated ranking of features or activities.
#[pyclass(module = "frailwatch", frozen)]
struct Ranking {
    inner: RankingReport,
}

#[pymethods]
impl Ranking {
    /// Item names, best first.
    fn ordered(&self) -> Vec<String> {
        self.inner.ordered_items().into_iter().map(String::from).collect()
    }

    /// `(item, final score)` pairs, best first.
    fn scores(&self) -> Vec<(String, f64)> {
        self.inner.order.iter().map(|&i| (self.inner.items[i].clone(), self.inner.final_scores[i])).collect()
    }

    /// Top-k behavioral feature numbers, as used for personalized anomaly
    /// models.
    fn personalized_features(&self, k: usize) -> Vec<usize> {
        anomaly::personalized_features(&self.inner, k)
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.items.len()
    }
}

/// Bayesian network over health, activity, environment and features.
#[pyclass(module = "frailwatch", frozen)]
struct BayesNet {
    inner: BayesNetModel,
}

#[pymethods]
impl BayesNet {
    /// Fits on `windows` using feature numbers `features`. With `em=True`,
    /// windows whose activity is unknown are treated as hidden.
    #[staticmethod]
    #[pyo3(signature = (windows, features, participant=None, em=false))]
    fn fit(windows: &Windows, features: Vec<usize>, participant: Option<&str>, em: bool) -> PyResult<Self> {
        let rows = match participant {
            Some(p) => windows.participant_rows(p)?,
            None => windows.rows.clone(),
        };
        let columns = anomaly::feature_columns(&features).map_err(err)?;
        let train: Vec<TrainRow<'_>> = rows
            .iter()
            .map(|r| TrainRow { values: &r.features.values, activity: r.activity, health: r.health })
            .collect();
        let inner = if em {
            bayes_net::fit_em(&train, &columns, EmOptions::default()).map_err(err)?.model
        } else {
            bayes_net::fit_ml(&train, &columns).map_err(err)?
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: BayesNetModel::from_json(text).map_err(err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// `[P(normal), P(weak)]` for a full 85-column feature row. The
    /// environment is read from the row itself.
    fn posterior_health(&self, activity_name: &str, row: Vec<f64>) -> PyResult<[f64; 2]> {
        check_row(&row)?;
        let e = self.inner.env_of_row(&row);
        self.inner.posterior_health(activity(activity_name)?, &e, &row).map_err(err)
    }

    fn predict_health(&self, activity_name: &str, row: Vec<f64>) -> PyResult<&'static str> {
        check_row(&row)?;
        Ok(self.inner.predict_health(activity(activity_name)?, &row).map_err(err)?.name())
    }

    fn window_log_likelihood(&self, activity_name: &str, row: Vec<f64>) -> PyResult<f64> {
        check_row(&row)?;
        Ok(self.inner.window_log_likelihood(activity(activity_name)?, &row))
    }

    #[getter]
    fn columns(&self) -> Vec<String> {
        self.inner.selected_columns().into_iter().map(features::column_name).collect()
    }
}

fn check_row(row: &[f64]) -> PyResult<()> {
    if row.len() != features::NUM_COLUMNS {
        return Err(PyValueError::new_err(format!("row has {} values, expected {}", row.len(), features::NUM_COLUMNS)));
    }
    Ok(())
}

/// Features of one window. `frames` and `env` are dicts shaped like the
/// JSONL log fields; returns the 85 values (undefined cells as `None`).
#[pyfunction]
#[pyo3(signature = (frames, env, t0, t1, mirror=false))]
fn extract_features(
    frames: &Bound<'_, PyAny>,
    env: &Bound<'_, PyAny>,
    t0: f64,
    t1: f64,
    mirror: bool,
) -> PyResult<Vec<Option<f64>>> {
    let frames: Vec<FrameMotionSummary> = from_py(frames)?;
    let env: EnvContext = from_py(env)?;
    let fv = features::extract_features(&frames, &env, t0, t1, mirror).map_err(err)?;
    Ok(fv.values.iter().zip(&fv.undefined).map(|(v, u)| (!u).then_some(*v)).collect())
}

/// Readable label of feature number `k`, e.g. `V(L-MPO)` for 31.
#[pyfunction]
fn feature_label(k: usize) -> PyResult<&'static str> {
    if !(1..=features::NUM_FEATURES).contains(&k) {
        return Err(PyValueError::new_err(format!("feature number {k} out of range")));
    }
    Ok(features::feature_label(k))
}

/// Effect size between two samples (pooled standard deviation).
#[pyfunction]
fn cohens_d(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    anomaly::cohens_d(&a, &b).map_err(err)
}

/// Fisher discriminant ratio of one feature between two classes.
#[pyfunction]
fn score_fdr(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    ranking::score_fdr(&a, &b).map_err(err)
}

/// Runs the command-line tool with `args` (without the program name) and
/// returns its exit code.
#[pyfunction]
fn cli(args: Vec<String>) -> i32 {
    frailwatch_core::cli::run(std::iter::once("frailwatch".to_string()).chain(args))
}

#[pymodule]
fn frailwatch(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("ACTIVITIES", Activity::ALL.iter().map(|a| a.name()).collect::<Vec<_>>())?;
    m.add("GENERIC_TOP5", GENERIC_TOP5.to_vec())?;
    m.add("SWEEP_WINDOWS", pipeline::SWEEP_WINDOWS.to_vec())?;
    m.add_class::<Dataset>()?;
    m.add_class::<Windows>()?;
    m.add_class::<Ranking>()?;
    m.add_class::<BayesNet>()?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(feature_label, m)?)?;
    m.add_function(wrap_pyfunction!(cohens_d, m)?)?;
    m.add_function(wrap_pyfunction!(score_fdr, m)?)?;
    m.add_function(wrap_pyfunction!(cli, m)?)?;
    Ok(())
}
