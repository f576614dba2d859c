//! Command-line entry point.
//!
//! Every command reads flags, an optional JSON run config and built-in
//! defaults (in that order of precedence), writes its artifacts atomically
//! under `--out`, and records the resolved settings in `provenance.json` and
//! the artifact hashes in `manifest.json`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::anomaly::{self, AnomalyReport, DEFAULT_K_SIGMA, GENERIC_TOP5};
use crate::classifiers::{Classifier, ClassifierKind, ClassifierSpec, ForestParams, LabeledMatrix, SvmParams};
use crate::features::{column_name, write_feature_csv, WindowRow};
use crate::model::{load_dataset, write_record, DatasetManifest, Health, LabeledDataset, DATASET_MANIFEST};
use crate::pipeline::{
    evaluate_levels, featurize_dataset, majority_vote, rows_by_participant, run_participant, search_activity_subsets,
    sweep_csv, sweep_windows, Level, LevelScore, ParticipantResult, SelectionOptions, SelectionResult, SweepRow,
    WindowingConfig, SWEEP_WINDOWS,
};
use crate::ranking::{rank_activities, rank_features, RankingOptions, RankingReport};
use crate::synth::{plan_study, reference_profiles, StudyConfig};

pub const MANIFEST: &str = "manifest.json";
pub const PROVENANCE: &str = "provenance.json";
pub const THREADS_ENV: &str = "FRAILWATCH_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Io { .. } => 2,
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Parser)]
#[command(name = "frailwatch", version, about = "Behavioral weakness monitoring from motion-summary logs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub args: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a synthetic study.
    Synth,
    /// Write window feature rows as CSV.
    Extract,
    /// Select activities and features per participant and fit final models.
    Train,
    /// Apply trained models to a dataset.
    Classify,
    /// Rank features per participant.
    RankFeatures,
    /// Rank activities per participant.
    RankActivities,
    /// Evaluate every window length.
    SweepWindows,
    /// Run activity-subset and feature selection with cross-validated scores.
    Select,
    /// Normal-model anomaly scores per day.
    Anomaly,
    /// Merge earlier JSON outputs into one summary.
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Extract => "extract",
            Command::Train => "train",
            Command::Classify => "classify",
            Command::RankFeatures => "rank-features",
            Command::RankActivities => "rank-activities",
            Command::SweepWindows => "sweep-windows",
            Command::Select => "select",
            Command::Anomaly => "anomaly",
            Command::Report => "report",
        }
    }

    fn stochastic(self) -> bool {
        !matches!(self, Command::Extract | Command::Report)
    }
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct CommonArgs {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Window length in seconds.
    #[arg(long, global = true)]
    pub window: Option<f64>,
    /// Comma-separated window lengths for sweep-windows.
    #[arg(long, global = true, value_delimiter = ',')]
    pub windows: Option<Vec<f64>>,
    #[arg(long, global = true, value_parser = ["bn", "rf", "svm"])]
    pub classifier: Option<String>,
    #[arg(long = "coverage-min", global = true)]
    pub coverage_min: Option<f64>,
    #[arg(long = "top-m", global = true)]
    pub top_m: Option<usize>,
    /// Treat every participant as left-handed (swap image left and right).
    #[arg(long, global = true)]
    pub mirror: bool,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long = "in", global = true)]
    pub input: Option<PathBuf>,
    /// Trained model file for classify.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Comma-separated participant ids to keep.
    #[arg(long, global = true, value_delimiter = ',')]
    pub participants: Option<Vec<String>>,
    /// Days per synthetic participant.
    #[arg(long, global = true)]
    pub days: Option<usize>,
    #[arg(long = "duration-scale", global = true)]
    pub duration_scale: Option<f64>,
    /// Anomaly features: `generic`, `personalized` or a list such as `F34,F27`.
    #[arg(long = "anomaly-features", global = true)]
    pub anomaly_features: Option<String>,
    /// Length of the personalized anomaly feature list.
    #[arg(long = "top-k", global = true)]
    pub top_k: Option<usize>,
}

/// JSON run configuration. Every field is optional; unknown keys are
/// rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub input: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub window_seconds: Option<f64>,
    pub windows: Option<Vec<f64>>,
    pub keep_partial: Option<f64>,
    pub tie: Option<Health>,
    pub day_start_hour: Option<u32>,
    pub classifier: Option<ClassifierKind>,
    pub forest: Option<ForestParams>,
    pub svm: Option<SvmParams>,
    pub coverage_min: Option<f64>,
    pub selection: Option<SelectionOptions>,
    pub sweep_search_subsets: Option<bool>,
    pub top_m: Option<usize>,
    pub ranking: Option<RankingOptions>,
    pub mirror: Option<bool>,
    pub participants: Option<Vec<String>>,
    pub days: Option<usize>,
    pub duration_scale: Option<f64>,
    pub study: Option<StudyConfig>,
    pub anomaly_features: Option<String>,
    pub top_k: Option<usize>,
    pub k_sigma: Option<f64>,
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub command: &'static str,
    pub seed: Option<u64>,
    pub windowing: WindowingConfig,
    pub windows: Vec<f64>,
    pub classifier: ClassifierSpec,
    pub selection: SelectionOptions,
    pub sweep_search_subsets: bool,
    pub ranking: RankingOptions,
    pub mirror: bool,
    pub participants: Option<Vec<String>>,
    pub days: Option<usize>,
    pub duration_scale: Option<f64>,
    pub anomaly_features: String,
    pub top_k: usize,
    pub k_sigma: f64,
}

struct Resolved {
    settings: Settings,
    input: Option<PathBuf>,
    model: Option<PathBuf>,
    out: PathBuf,
    study: Option<StudyConfig>,
}

fn resolve(command: Command, args: &CommonArgs) -> Result<Resolved, CliError> {
    let cfg: RunConfig = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    let seed = args.seed.or(cfg.seed).or(cfg.study.as_ref().map(|s| s.seed));
    if command.stochastic() && seed.is_none() {
        return Err(CliError::Usage(format!("{} needs --seed", command.name())));
    }
    let window = args.window.or(cfg.window_seconds).unwrap_or(300.0);
    if !(window > 0.0) || !window.is_finite() {
        return Err(CliError::Usage(format!("window must be positive, got {window}")));
    }
    let windowing = WindowingConfig {
        window_seconds: window,
        keep_partial: cfg.keep_partial.unwrap_or(0.5),
        tie: cfg.tie.unwrap_or(Health::Weak),
        day_start_hour: cfg.day_start_hour.unwrap_or(6),
    };
    if !(0.0..=1.0).contains(&windowing.keep_partial) || windowing.day_start_hour > 23 || windowing.tie == Health::Unknown {
        return Err(CliError::Usage("invalid windowing settings".into()));
    }
    let windows = args.windows.clone().or(cfg.windows).unwrap_or_else(|| SWEEP_WINDOWS.to_vec());
    if windows.is_empty() || windows.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(CliError::Usage("windows must be positive".into()));
    }
    let kind = match &args.classifier {
        Some(name) => name.parse().map_err(CliError::Usage)?,
        None => cfg.classifier.unwrap_or(ClassifierKind::BayesNet),
    };
    let mut classifier = ClassifierSpec::new(kind, seed.unwrap_or(0));
    if let Some(f) = cfg.forest {
        classifier.forest = f;
    }
    if let Some(s) = cfg.svm {
        classifier.svm = s;
    }
    let mut selection = cfg.selection.unwrap_or_default();
    if let Some(c) = args.coverage_min.or(cfg.coverage_min) {
        selection.coverage_min = c;
    }
    if !(0.0..1.0).contains(&selection.coverage_min) {
        return Err(CliError::Usage(format!("coverage-min must lie in [0, 1), got {}", selection.coverage_min)));
    }
    let mut ranking = cfg.ranking.unwrap_or_default();
    if let Some(m) = args.top_m.or(cfg.top_m) {
        ranking.top_m = m;
    }
    if ranking.top_m == 0 {
        return Err(CliError::Usage("top-m must be positive".into()));
    }
    let out = args.out.clone().or(cfg.out).ok_or_else(|| CliError::Usage("--out is required".into()))?;
    let input = args.input.clone().or(cfg.input);
    if command != Command::Synth && input.is_none() {
        return Err(CliError::Usage(format!("{} needs --in", command.name())));
    }
    let model = args.model.clone().or(cfg.model);
    if command == Command::Classify && model.is_none() {
        return Err(CliError::Usage("classify needs --model".into()));
    }
    let k_sigma = cfg.k_sigma.unwrap_or(DEFAULT_K_SIGMA);
    if !(k_sigma >= 0.0) {
        return Err(CliError::Usage("k_sigma must be non-negative".into()));
    }
    let top_k = args.top_k.or(cfg.top_k).unwrap_or(3);
    if top_k == 0 {
        return Err(CliError::Usage("top-k must be positive".into()));
    }
    let settings = Settings {
        command: command.name(),
        seed,
        windowing,
        windows,
        classifier,
        selection,
        sweep_search_subsets: cfg.sweep_search_subsets.unwrap_or(false),
        ranking,
        mirror: args.mirror || cfg.mirror.unwrap_or(false),
        participants: args.participants.clone().or(cfg.participants),
        days: args.days.or(cfg.days),
        duration_scale: args.duration_scale.or(cfg.duration_scale),
        anomaly_features: args.anomaly_features.clone().or(cfg.anomaly_features).unwrap_or_else(|| "personalized".into()),
        top_k,
        k_sigma,
    };
    parse_feature_choice(&settings.anomaly_features)?;
    Ok(Resolved { settings, input, model, out, study: cfg.study })
}

/// Writer that hashes everything passing through it.
struct HashingWriter<W> {
    inner: W,
    hasher: Sha256,
    bytes: u64,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        self.bytes += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Output directory with atomic writes and an artifact list.
struct Output {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self { dir: dir.to_path_buf(), artifacts: Vec::new() })
    }

    /// Streams into `<name>.tmp` and renames into place once complete.
    fn write_with(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        let result = (|| {
            let file = File::create(&tmp)?;
            let mut w = HashingWriter { inner: BufWriter::new(file), hasher: Sha256::new(), bytes: 0 };
            f(&mut w)?;
            w.flush()?;
            w.inner.into_inner().map_err(|e| e.into_error())?.sync_all()?;
            Ok::<_, io::Error>((hex::encode(w.hasher.finalize()), w.bytes))
        })();
        let (sha256, bytes) = match result {
            Ok(v) => v,
            Err(e) => {
                let _ = fs::remove_file(&tmp);
                return Err(CliError::Io { path, source: e });
            }
        };
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        self.artifacts.retain(|a| a.path != name);
        self.artifacts.push(Artifact { path: name.to_string(), sha256, bytes });
        Ok(())
    }

    fn write(&mut self, name: &str, content: &[u8]) -> Result<(), CliError> {
        self.write_with(name, |w| w.write_all(content))
    }

    fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(data)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn finish(mut self, provenance: &Provenance) -> Result<Vec<Artifact>, CliError> {
        self.write_json(PROVENANCE, provenance)?;
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest { command: provenance.settings.command.to_string(), artifacts: self.artifacts.clone() };
        self.write_json(MANIFEST, &manifest)?;
        Ok(self.artifacts)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, Serialize)]
struct Provenance {
    tool: &'static str,
    version: &'static str,
    settings: Settings,
    inputs: Vec<Artifact>,
}

fn sha256_file(path: &Path) -> Result<(String, u64), CliError> {
    let mut file = File::open(path).map_err(io_err(path))?;
    let mut w = HashingWriter { inner: io::sink(), hasher: Sha256::new(), bytes: 0 };
    io::copy(&mut file, &mut w).map_err(io_err(path))?;
    Ok((hex::encode(w.hasher.finalize()), w.bytes))
}

/// Input files with their hashes, named relative to the input root.
fn input_artifacts(path: &Path) -> Result<Vec<Artifact>, CliError> {
    let entry = |file: &Path, name: String| -> Result<Artifact, CliError> {
        let (sha256, bytes) = sha256_file(file)?;
        Ok(Artifact { path: name, sha256, bytes })
    };
    let name_of = |p: &Path| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let manifest_path = if path.is_dir() {
        let m = path.join(DATASET_MANIFEST);
        if !m.exists() {
            let mut files: Vec<PathBuf> = fs::read_dir(path)
                .map_err(io_err(path))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && !name_of(p).starts_with('.'))
                .collect();
            files.sort();
            return files.iter().map(|f| entry(f, name_of(f))).collect();
        }
        m
    } else if path.extension().is_some_and(|e| e == "json") {
        path.to_path_buf()
    } else {
        return Ok(vec![entry(path, name_of(path))?]);
    };
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let mut out = vec![entry(&manifest_path, name_of(&manifest_path))?];
    if let Ok(m) = serde_json::from_str::<DatasetManifest>(&text) {
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        for f in &m.files {
            out.push(entry(&base.join(f), f.clone())?);
        }
    }
    Ok(out)
}

/// Runs the command line and returns the process exit code. Errors are
/// printed to standard error with an `ERROR:` prefix.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    return 0;
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    eprintln!("ERROR: a subcommand is required\n\n{}", e.render().to_string().trim_end());
                    return 1;
                }
                _ => {}
            }
            eprintln!("ERROR: {}", e.to_string().trim_start_matches("error: ").trim_end());
            return 1;
        }
    };
    match execute(cli.command, &cli.args) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("ERROR: {e}");
            e.exit_code()
        }
    }
}

/// Runs one command; returns the artifacts written.
pub fn execute(command: Command, args: &CommonArgs) -> Result<Vec<Artifact>, CliError> {
    let r = resolve(command, args)?;
    let threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build().map_err(data)?;
    pool.install(|| {
        let mut out = Output::new(&r.out)?;
        let inputs = match (&r.input, command) {
            (Some(p), _) => {
                let mut v = input_artifacts(p)?;
                if let Some(m) = &r.model {
                    let (sha256, bytes) = sha256_file(m)?;
                    v.push(Artifact { path: "model".into(), sha256, bytes });
                }
                v
            }
            (None, _) => Vec::new(),
        };
        match command {
            Command::Synth => cmd_synth(&r, &mut out)?,
            Command::Extract => cmd_extract(&r, &mut out)?,
            Command::Train => cmd_train(&r, &mut out)?,
            Command::Classify => cmd_classify(&r, &mut out)?,
            Command::RankFeatures => cmd_rank(&r, &mut out, false)?,
            Command::RankActivities => cmd_rank(&r, &mut out, true)?,
            Command::SweepWindows => cmd_sweep(&r, &mut out)?,
            Command::Select => cmd_select(&r, &mut out)?,
            Command::Anomaly => cmd_anomaly(&r, &mut out)?,
            Command::Report => cmd_report(&r, &mut out)?,
        }
        let provenance = Provenance { tool: "frailwatch", version: env!("CARGO_PKG_VERSION"), settings: r.settings.clone(), inputs };
        out.finish(&provenance)
    })
}

fn cmd_synth(r: &Resolved, out: &mut Output) -> Result<(), CliError> {
    let s = &r.settings;
    let seed = s.seed.expect("checked in resolve");
    let mut config = r.study.clone().unwrap_or_else(|| StudyConfig::new(seed, reference_profiles()));
    config.seed = seed;
    if let Some(ids) = &s.participants {
        let known: Vec<String> = config.participants.iter().map(|p| p.id.clone()).collect();
        if let Some(bad) = ids.iter().find(|id| !known.contains(id)) {
            return Err(CliError::Usage(format!("unknown participant '{bad}' (profiles: {})", known.join(","))));
        }
        config.participants.retain(|p| ids.contains(&p.id));
    }
    if let Some(days) = s.days {
        for p in &mut config.participants {
            p.days = days;
        }
    }
    if let Some(scale) = s.duration_scale {
        config.duration_scale = scale;
    }
    if s.mirror {
        for p in &mut config.participants {
            p.mirror = true;
        }
    }
    let plan = plan_study(&config).map_err(data)?;
    let meta = plan.participant_meta();
    let mut files = Vec::new();
    for (pi, profile) in config.participants.iter().enumerate() {
        let name = format!("{}.jsonl", profile.id);
        let plans: Vec<_> = plan.records.iter().filter(|p| p.participant == pi).collect();
        let mut failure = None;
        out.write_with(&name, |w| {
            for chunk in plans.chunks(16) {
                let records = match chunk.par_iter().map(|p| plan.generate(p)).collect::<Result<Vec<_>, _>>() {
                    Ok(v) => v,
                    Err(e) => {
                        failure = Some(e);
                        return Err(io::Error::other("generation failed"));
                    }
                };
                for rec in &records {
                    write_record(rec, &mut &mut *w)?;
                }
            }
            Ok(())
        })
        .map_err(|e| failure.take().map(data).unwrap_or(e))?;
        files.push(name);
        info!("wrote {} records for {}", plans.len(), profile.id);
    }
    let manifest = DatasetManifest { version: 1, participants: meta.into_values().collect(), files };
    out.write_json(DATASET_MANIFEST, &manifest)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["record_id", "participant", "day", "wall_clock_start", "duration", "activity", "health"]).map_err(data)?;
    for p in &plan.records {
        w.write_record([
            p.record_id.clone(),
            config.participants[p.participant].id.clone(),
            p.day.to_string(),
            p.wall_clock_start.to_string(),
            crate::features::format_float(p.duration),
            p.activity.name().to_string(),
            p.health.name().to_string(),
        ])
        .map_err(data)?;
    }
    out.write("study_plan.csv", &w.into_inner().map_err(data)?)?;
    out.write_json("study_config.json", &config)
}

fn load(r: &Resolved) -> Result<LabeledDataset, CliError> {
    let path = r.input.as_ref().expect("checked in resolve");
    let mut ds = load_dataset(path).map_err(data)?;
    if let Some(ids) = &r.settings.participants {
        ds.records.retain(|rec| ids.contains(&rec.participant_id));
        ds.participants.retain(|id, _| ids.contains(id));
    }
    if r.settings.mirror {
        for p in ds.participants.values_mut() {
            p.mirror = true;
        }
    }
    if ds.is_empty() {
        return Err(CliError::Data("dataset has no records".into()));
    }
    Ok(ds)
}

fn featurize(r: &Resolved, ds: &LabeledDataset, cfg: &WindowingConfig) -> Result<Vec<WindowRow>, CliError> {
    let rows = featurize_dataset(ds, cfg).map_err(data)?;
    if rows.is_empty() {
        return Err(CliError::Data(format!("no windows at W={}s", r.settings.windowing.window_seconds)));
    }
    Ok(rows)
}

fn cmd_extract(r: &Resolved, out: &mut Output) -> Result<(), CliError> {
    let ds = load(r)?;
    let rows = featurize(r, &ds, &r.settings.windowing)?;
    out.write_with("features.csv", |w| write_feature_csv(&rows, w).map_err(io::Error::other))
}

/// A fitted per-participant model with the choices that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub participant: String,
    pub windowing: WindowingConfig,
    pub spec: ClassifierSpec,
    pub selection: SelectionResult,
    pub classifier: Classifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub models: Vec<TrainedModel>,
}

fn train_participant(r: &Resolved, rows: &[WindowRow]) -> Result<TrainedModel, CliError> {
    let s = &r.settings;
    let data_m = LabeledMatrix::from_rows(rows);
    let all: Vec<usize> = (0..rows.len()).collect();
    let selection = search_activity_subsets(&s.classifier, &data_m, &all, &s.selection).map_err(data)?;
    let sub: Vec<usize> = if selection.fallback || !s.selection.search_subsets {
        all
    } else {
        all.into_iter().filter(|&i| selection.activities.contains(&data_m.activity[i])).collect()
    };
    let classifier = Classifier::fit(&s.classifier, &data_m, &sub, &selection.features).map_err(data)?;
    Ok(TrainedModel {
        participant: rows[0].participant.clone(),
        windowing: s.windowing,
        spec: s.classifier.clone(),
        selection,
        classifier,
    })
}

fn cmd_train(r: &Resolved, out: &mut Output) -> Result<(), CliError> {
    let ds = load(r)?;
    let rows = featurize(r, &ds, &r.settings.windowing)?;
    let models = rows_by_participant(rows)
        .values()
        .map(|prow| train_participant(r, prow))
        .collect::<Result<Vec<_>, _>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["participant", "activities", "features", "cv_f1_macro", "coverage", "fallback"]).map_err(data)?;
    for m in &models {
        w.write_record([
            m.participant.clone(),
            m.selection.activities.iter().map(|a| a.name()).collect::<Vec<_>>().join(";"),
            m.selection.features.iter().map(|&c| column_name(c)).collect::<Vec<_>>().join(";"),
            crate::features::format_float(m.selection.f1_macro),
            crate::features::format_float(m.selection.coverage),
            m.selection.fallback.to_string(),
        ])
        .map_err(data)?;
    }
    out.write("model_summary.csv", &w.into_inner().map_err(data)?)?;
    out.write_json("model.json", &ModelFile { models })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOutput {
    pub participant: String,
    pub windows: usize,
    /// Scores against the labels in the input, when every window is labeled.
    pub levels: Option<Vec<LevelScore>>,
}

fn cmd_classify(r: &Resolved, out: &mut Output) -> Result<(), CliError> {
    let path = r.model.as_ref().expect("checked in resolve");
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("model {}: {e}", path.display())))?;
    let ds = load(r)?;
    let mut windows_csv = csv::Writer::from_writer(Vec::new());
    windows_csv
        .write_record(["participant", "record_id", "window_index", "activity", "truth", "prediction"])
        .map_err(data)?;
    let mut records_csv = csv::Writer::from_writer(Vec::new());
    records_csv.write_record(["participant", "record_id", "wall_clock_start", "truth", "prediction"]).map_err(data)?;
    let mut summaries = Vec::new();
    let mut by_cfg: BTreeMap<String, Vec<WindowRow>> = BTreeMap::new();
    for m in &file.models {
        by_cfg.insert(m.participant.clone(), Vec::new());
    }
    for id in ds.participant_ids() {
        if !by_cfg.contains_key(&id) {
            return Err(CliError::Data(format!("no trained model for participant '{id}'")));
        }
    }
    for m in &file.models {
        let sub = LabeledDataset {
            records: ds.records_of(&m.participant).cloned().collect(),
            participants: ds.participants.iter().filter(|(k, _)| **k == m.participant).map(|(k, v)| (k.clone(), v.clone())).collect(),
        };
        if sub.is_empty() {
            continue;
        }
        let rows = featurize(r, &sub, &m.windowing)?;
        let matrix = LabeledMatrix::from_rows(&rows);
        let preds: Vec<Health> = (0..rows.len()).map(|i| m.classifier.predict(&matrix, i)).collect::<Result<_, _>>().map_err(data)?;
        let mut per_record: BTreeMap<&str, (&WindowRow, Vec<Health>, Vec<Health>)> = BTreeMap::new();
        for (row, &p) in rows.iter().zip(&preds) {
            windows_csv
                .write_record([
                    row.participant.as_str(),
                    row.record_id.as_str(),
                    &row.window_index.to_string(),
                    row.activity.name(),
                    row.health.name(),
                    p.name(),
                ])
                .map_err(data)?;
            let e = per_record.entry(row.record_id.as_str()).or_insert((row, Vec::new(), Vec::new()));
            e.1.push(row.health);
            e.2.push(p);
        }
        for (id, (row, t, p)) in &per_record {
            let truth = majority_vote(t, m.windowing.tie).map_err(data)?;
            let pred = majority_vote(p, m.windowing.tie).map_err(data)?;
            records_csv
                .write_record([&row.participant, *id, &row.wall_clock_start.to_string(), truth.name(), pred.name()])
                .map_err(data)?;
        }
        let labeled = rows.iter().all(|w| w.health != Health::Unknown);
        let levels = if labeled {
            let idx: Vec<usize> = (0..rows.len()).collect();
            Some(evaluate_levels(&rows, &idx, &preds, &m.windowing).map_err(data)?)
        } else {
            None
        };
        summaries.push(ClassifyOutput { participant: m.participant.clone(), windows: rows.len(), levels });
    }
    out.write("predictions.csv", &windows_csv.into_inner().map_err(data)?)?;
    out.write("record_predictions.csv", &records_csv.into_inner().map_err(data)?)?;
    out.write_json("classify.json", &summaries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRanking {
    pub participant: String,
    pub report: RankingReport,
}

fn cmd_rank(r: &Resolved, out: &mut Output, activities: bool) -> Result<(), CliError> {
    let s = &r.settings;
    let ds = load(r)?;
    let rows = featurize(r, &ds, &s.windowing)?;
    let seed = s.seed.expect("checked in resolve");
    let mut reports = Vec::new();
    let mut csv_text = String::new();
    for (participant, prow) in rows_by_participant(rows) {
        let matrix = LabeledMatrix::from_rows(&prow);
        let all: Vec<usize> = (0..prow.len()).collect();
        let ranked = if activities {
            rank_activities(&matrix, &all, &s.ranking, seed)
        } else {
            rank_features(&matrix, &all, &s.ranking, seed)
        };
        let report = match ranked {
            Ok(report) => report,
            Err(e) => {
                warn!("{participant}: {e}; skipped");
                continue;
            }
        };
        let table = report.to_csv();
        let mut lines = table.lines();
        if csv_text.is_empty() {
            csv_text.push_str("participant,");
            csv_text.push_str(lines.next().unwrap_or_default());
            csv_text.push('\n');
        } else {
            lines.next();
        }
        for line in lines {
            csv_text.push_str(&participant);
            csv_text.push(',');
            csv_text.push_str(line);
            csv_text.push('\n');
        }
        reports.push(ParticipantRanking { participant, report });
    }
    if reports.is_empty() {
        return Err(CliError::Data("no participant could be ranked".into()));
    }
    let stem = if activities { "rank_activities" } else { "rank_features" };
    out.write(&format!("{stem}.csv"), csv_text.as_bytes())?;
    out.write_json(&format!("{stem}.json"), &reports)
}

/// Mean F1-micro over participants per window length and level.
pub fn sweep_summary_csv(rows: &[SweepRow]) -> String {
    let levels = [Level::Record, Level::EightHour, Level::Day];
    let mut windows: Vec<f64> = rows.iter().map(|r| r.window_seconds).collect();
    windows.sort_by(f64::total_cmp);
    windows.dedup();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["window_seconds".to_string()];
    header.extend(levels.iter().map(|l| format!("{}_f1_micro", l.name())));
    w.write_record(&header).expect("in-memory write");
    for win in windows {
        let of_w: Vec<&SweepRow> = rows.iter().filter(|r| r.window_seconds == win).collect();
        let mut rec = vec![crate::features::format_float(win)];
        for l in levels {
            let mean = of_w.iter().map(|r| r.result.level(l).f1_micro).sum::<f64>() / of_w.len() as f64;
            rec.push(crate::features::format_float(mean));
        }
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8")
}

fn cmd_sweep(r: &Resolved, out: &mut Output) -> Result<(), CliError> {
    let s = &r.settings;
    let ds = load(r)?;
    let opts = SelectionOptions { search_subsets: s.sweep_search_subsets, ..s.selection.clone() };
    let rows = sweep_windows(&s.classifier, &ds, &s.windows, &opts, &s.windowing).map_err(data)?;
    out.write("sweep.csv", sweep_csv(&rows).as_bytes())?;
    out.write("sweep_summary.csv", sweep_summary_csv(&rows).as_bytes())?;
    out.write_json("sweep.json", &rows)
}

fn levels_csv(results: &[ParticipantResult]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["participant", "window_seconds", "level", "n", "f1_micro", "f1_macro", "activities", "n_features"]).map_err(data)?;
    for res in results {
        for l in &res.levels {
            w.write_record([
                res.participant.clone(),
                crate::features::format_float(res.window_seconds),
                l.level.name().to_string(),
                l.n.to_string(),
                crate::features::format_float(l.f1_micro),
                crate::features::format_float(l.f1_macro),
                res.selection.activities.iter().map(|a| a.name()).collect::<Vec<_>>().join(";"),
                res.selection.features.len().to_string(),
            ])
            .map_err(data)?;
        }
    }
    w.into_inner().map_err(data)
}

fn cmd_select(r: &Resolved, out: &mut Output) -> Result<(), CliError> {
    let s = &r.settings;
    let ds = load(r)?;
    let rows = featurize(r, &ds, &s.windowing)?;
    let results = rows_by_participant(rows)
        .into_iter()
        .map(|(p, prow)| run_participant(&s.classifier, &prow, &s.selection, &s.windowing).map_err(|e| CliError::Data(format!("{p}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    out.write("select.csv", &levels_csv(&results)?)?;
    out.write_json("select.json", &results)
}

/// Anomaly feature choice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureChoice {
    Generic,
    Personalized,
    Fixed(Vec<usize>),
}

pub fn parse_feature_choice(text: &str) -> Result<FeatureChoice, CliError> {
    match text {
        "generic" => Ok(FeatureChoice::Generic),
        "personalized" => Ok(FeatureChoice::Personalized),
        list => list
            .split(',')
            .map(|t| {
                let t = t.trim();
                t.strip_prefix('F')
                    .unwrap_or(t)
                    .parse::<usize>()
                    .map_err(|_| CliError::Usage(format!("bad anomaly feature '{t}' (expected generic, personalized or F-numbers)")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(FeatureChoice::Fixed),
    }
}

fn cmd_anomaly(r: &Resolved, out: &mut Output) -> Result<(), CliError> {
    let s = &r.settings;
    let ds = load(r)?;
    let rows = featurize(r, &ds, &s.windowing)?;
    let choice = parse_feature_choice(&s.anomaly_features)?;
    let seed = s.seed.expect("checked in resolve");
    let mut reports: Vec<AnomalyReport> = Vec::new();
    for (p, prow) in rows_by_participant(rows) {
        let features = match &choice {
            FeatureChoice::Generic => GENERIC_TOP5.to_vec(),
            FeatureChoice::Fixed(v) => v.clone(),
            FeatureChoice::Personalized => {
                let matrix = LabeledMatrix::from_rows(&prow);
                let all: Vec<usize> = (0..prow.len()).collect();
                match rank_features(&matrix, &all, &s.ranking, seed) {
                    Ok(report) => anomaly::personalized_features(&report, s.top_k),
                    Err(e) => {
                        warn!("{p}: {e}; skipped");
                        continue;
                    }
                }
            }
        };
        match anomaly::anomaly_report(&prow, &features, s.k_sigma) {
            Ok(rep) => reports.push(rep),
            Err(e) => warn!("{p}: {e}; skipped"),
        }
    }
    if reports.is_empty() {
        return Err(CliError::Data("no participant could be scored".into()));
    }
    let mut csv_text = String::new();
    for (i, rep) in reports.iter().enumerate() {
        let table = rep.to_csv();
        let skip = if i == 0 { 0 } else { 1 };
        for line in table.lines().skip(skip) {
            csv_text.push_str(line);
            csv_text.push('\n');
        }
    }
    out.write("anomaly.csv", csv_text.as_bytes())?;
    out.write_json("anomaly.json", &reports)
}

/// Merged view of earlier command outputs.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Summary {
    pub sources: Vec<String>,
    pub select: Vec<ParticipantResult>,
    pub sweep: Vec<SweepRow>,
    pub rank_features: Vec<ParticipantRanking>,
    pub rank_activities: Vec<ParticipantRanking>,
    pub anomaly: Vec<AnomalyReport>,
    pub classify: Vec<ClassifyOutput>,
}

fn collect_json(dir: &Path, base: &Path, found: &mut Vec<(String, PathBuf)>) -> Result<(), CliError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir).map_err(io_err(dir))?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_json(&p, base, found)?;
        } else if p.extension().is_some_and(|e| e == "json") {
            let rel = p.strip_prefix(base).unwrap_or(&p).to_string_lossy().replace('\\', "/");
            found.push((rel, p));
        }
    }
    Ok(())
}

fn cmd_report(r: &Resolved, out: &mut Output) -> Result<(), CliError> {
    let root = r.input.as_ref().expect("checked in resolve");
    if !root.is_dir() {
        return Err(CliError::Data(format!("{} is not a directory", root.display())));
    }
    let mut found = Vec::new();
    collect_json(root, root, &mut found)?;
    let mut summary = Summary::default();
    for (rel, path) in found {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let text = || fs::read_to_string(&path).map_err(io_err(&path));
        let parse = |e: serde_json::Error| CliError::Data(format!("{rel}: {e}"));
        match name.as_str() {
            "select.json" => summary.select.extend(serde_json::from_str::<Vec<ParticipantResult>>(&text()?).map_err(parse)?),
            "sweep.json" => summary.sweep.extend(serde_json::from_str::<Vec<SweepRow>>(&text()?).map_err(parse)?),
            "rank_features.json" => summary.rank_features.extend(serde_json::from_str::<Vec<ParticipantRanking>>(&text()?).map_err(parse)?),
            "rank_activities.json" => {
                summary.rank_activities.extend(serde_json::from_str::<Vec<ParticipantRanking>>(&text()?).map_err(parse)?)
            }
            "anomaly.json" => summary.anomaly.extend(serde_json::from_str::<Vec<AnomalyReport>>(&text()?).map_err(parse)?),
            "classify.json" => summary.classify.extend(serde_json::from_str::<Vec<ClassifyOutput>>(&text()?).map_err(parse)?),
            _ => continue,
        }
        summary.sources.push(rel);
    }
    if summary.sources.is_empty() {
        return Err(CliError::Data(format!("no command outputs found under {}", root.display())));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["source", "participant", "window_seconds", "level", "f1_micro"]).map_err(data)?;
    for res in &summary.select {
        for l in &res.levels {
            w.write_record(["select", &res.participant, &crate::features::format_float(res.window_seconds), l.level.name(), &crate::features::format_float(l.f1_micro)])
                .map_err(data)?;
        }
    }
    for row in &summary.sweep {
        for l in &row.result.levels {
            w.write_record(["sweep", &row.participant, &crate::features::format_float(row.window_seconds), l.level.name(), &crate::features::format_float(l.f1_micro)])
                .map_err(data)?;
        }
    }
    out.write("summary.csv", &w.into_inner().map_err(data)?)?;
    out.write_json("summary.json", &summary)
}
