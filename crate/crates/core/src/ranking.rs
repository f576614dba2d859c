//! Feature and activity importance.
//!
//! Base scorers (Fisher discriminant ratio, mutual information,
//! correlation-based relevance/redundancy, and forward/backward selection
//! under a classifier) each produce a [`ScoreTable`]. Three aggregators
//! (Borda count, normalized weighted average, top-m consensus) combine the
//! tables, and the final score is the sum of the three min-max normalized
//! aggregates.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{ClassifierError, ClassifierKind, ClassifierSpec, CvContext, LabeledMatrix};
use crate::features::{columns_of_feature, feature_label, NUM_COLUMNS, NUM_FEATURES};
use crate::model::{Activity, Health};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RankingError {
    #[error("class {0} has no samples")]
    EmptyClass(usize),
    #[error("item '{item}' missing from table '{method}'")]
    MissingItem { method: String, item: String },
    #[error("no score tables")]
    NoTables,
    #[error("top-m cutoff must be positive")]
    BadCutoff,
    #[error("weights must sum to a positive value")]
    BadWeights,
    #[error("score for '{0}' is NaN")]
    NaN(String),
    #[error("need at least {need} items, got {got}")]
    TooFewItems { need: usize, got: usize },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

/// Raw scores of one method, higher is better, with mean-rank ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub method: String,
    pub items: Vec<String>,
    pub scores: Vec<f64>,
    pub ranks: Vec<f64>,
}

impl ScoreTable {
    pub fn new(method: impl Into<String>, items: Vec<String>, scores: Vec<f64>) -> Result<Self, RankingError> {
        assert_eq!(items.len(), scores.len(), "one score per item");
        if let Some(i) = scores.iter().position(|s| s.is_nan()) {
            return Err(RankingError::NaN(items[i].clone()));
        }
        let ranks = mean_ranks(&scores);
        Ok(Self { method: method.into(), items, scores, ranks })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn rank_of(&self, item: &str) -> Result<f64, RankingError> {
        self.items
            .iter()
            .position(|i| i == item)
            .map(|p| self.ranks[p])
            .ok_or_else(|| RankingError::MissingItem { method: self.method.clone(), item: item.to_string() })
    }

    fn score_of(&self, item: &str) -> Result<f64, RankingError> {
        self.items
            .iter()
            .position(|i| i == item)
            .map(|p| self.scores[p])
            .ok_or_else(|| RankingError::MissingItem { method: self.method.clone(), item: item.to_string() })
    }
}

/// Rank 1 = highest score; tied scores share the mean of their positions.
pub fn mean_ranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Fisher discriminant ratio (μ₁−μ₂)²/(σ₁+σ₂) with population standard
/// deviations. Zero spread with different means gives +∞.
pub fn score_fdr(class_a: &[f64], class_b: &[f64]) -> Result<f64, RankingError> {
    if class_a.is_empty() {
        return Err(RankingError::EmptyClass(0));
    }
    if class_b.is_empty() {
        return Err(RankingError::EmptyClass(1));
    }
    let (m1, s1) = mean_std(class_a);
    let (m2, s2) = mean_std(class_b);
    let num = (m1 - m2).powi(2);
    let den = s1 + s2;
    if den < 1e-12 {
        return Ok(if num > 0.0 { f64::INFINITY } else { 0.0 });
    }
    Ok(num / den)
}

/// Equal-frequency bin of every value; equal values share a bin, and the
/// bin count drops to the number of distinct values when that is smaller.
pub fn equal_frequency_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let distinct = order.windows(2).filter(|w| values[w[0]] != values[w[1]]).count() + usize::from(n > 0);
    let bins = bins.min(distinct).max(1);
    let mut out = vec![0; n];
    let mut first = 0;
    for pos in 0..n {
        if pos > 0 && values[order[pos]] != values[order[pos - 1]] {
            first = pos;
        }
        out[order[pos]] = first * bins / n;
    }
    out
}

/// Mutual information (nats) between a discrete variable and a label.
pub fn mutual_information(x: &[usize], y: &[usize]) -> f64 {
    let n = x.len() as f64;
    let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut px: BTreeMap<usize, f64> = BTreeMap::new();
    let mut py: BTreeMap<usize, f64> = BTreeMap::new();
    for (&a, &b) in x.iter().zip(y) {
        *joint.entry((a, b)).or_default() += 1.0;
        *px.entry(a).or_default() += 1.0;
        *py.entry(b).or_default() += 1.0;
    }
    let mi: f64 = joint.iter().map(|(&(a, b), &c)| (c / n) * (c * n / (px[&a] * py[&b])).ln()).sum();
    mi.max(0.0)
}

/// MI of a continuous feature (equal-frequency binned) with binary labels.
pub fn score_mi(values: &[f64], labels: &[bool], bins: usize) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let x = equal_frequency_bins(values, bins);
    let y: Vec<usize> = labels.iter().map(|&l| usize::from(l)).collect();
    mutual_information(&x, &y)
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    if sa < 1e-12 || sb < 1e-12 {
        return None;
    }
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64;
    Some((cov / (sa * sb)).clamp(-1.0, 1.0))
}

/// |corr(Fᵢ, H)| / mean_{j≠i} |corr(Fᵢ, Fⱼ)| with the denominator floored
/// at 1e-6. `None` for a zero-variance feature.
pub fn score_cfs(features: &[Vec<f64>], i: usize, labels: &[bool]) -> Result<Option<f64>, RankingError> {
    if features.len() < 2 {
        return Err(RankingError::TooFewItems { need: 2, got: features.len() });
    }
    let h: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let (_, si) = mean_std(&features[i]);
    if si < 1e-12 {
        return Ok(None);
    }
    let relevance = pearson(&features[i], &h).unwrap_or(0.0).abs();
    let others: Vec<f64> = (0..features.len())
        .filter(|&j| j != i)
        .map(|j| pearson(&features[i], &features[j]).unwrap_or(0.0).abs())
        .collect();
    let redundancy = others.iter().sum::<f64>() / others.len() as f64;
    Ok(Some(relevance / redundancy.max(1e-6)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

/// Scores from greedy selection over item groups (each a set of columns).
/// Forward: an item's score is the CV F1-macro when it entered; items that
/// never enter get their single-item F1 minus 1. Backward: the score is the
/// F1-macro just before the item was removed; survivors get the final F1
/// plus 1. Ties pick the lower item index.
pub fn score_by_selection(
    ctx: &CvContext<'_>,
    items: &[Vec<usize>],
    direction: Direction,
    max_steps: usize,
) -> Result<Vec<f64>, RankingError> {
    let n = items.len();
    if n < 2 {
        return Err(RankingError::TooFewItems { need: 2, got: n });
    }
    let mut scores = vec![f64::NAN; n];
    match direction {
        Direction::Forward => {
            let mut current: Vec<usize> = Vec::new();
            let mut remaining: Vec<usize> = (0..n).collect();
            let mut step = 0;
            while !remaining.is_empty() && step < max_steps {
                let cands: Vec<Vec<usize>> = remaining.iter().map(|&i| items[i].clone()).collect();
                let f1 = ctx.score_extensions(&current, &cands)?;
                if step == 0 {
                    for (&i, &s) in remaining.iter().zip(&f1) {
                        scores[i] = s - 1.0;
                    }
                }
                let best = argmax_first(&f1);
                let item = remaining.remove(best);
                scores[item] = f1[best];
                current.extend(&items[item]);
                step += 1;
            }
        }
        Direction::Backward => {
            let mut active: Vec<usize> = (0..n).collect();
            let columns = |active: &[usize]| -> Vec<usize> { active.iter().flat_map(|&i| items[i].iter().copied()).collect() };
            let mut current_f1 = ctx.score_sets(&[columns(&active)])?[0];
            let mut step = 0;
            while active.len() > 1 && step < max_steps {
                let sets: Vec<Vec<usize>> = (0..active.len())
                    .map(|skip| {
                        let kept: Vec<usize> = active.iter().enumerate().filter(|(p, _)| *p != skip).map(|(_, &i)| i).collect();
                        columns(&kept)
                    })
                    .collect();
                let f1 = ctx.score_sets(&sets)?;
                let best = argmax_first(&f1);
                let item = active.remove(best);
                scores[item] = current_f1;
                current_f1 = f1[best];
                step += 1;
            }
            for &i in &active {
                scores[i] = current_f1 + 1.0;
            }
        }
    }
    Ok(scores)
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

fn aligned_ranks(tables: &[ScoreTable], items: &[String]) -> Result<Vec<Vec<f64>>, RankingError> {
    tables.iter().map(|t| items.iter().map(|i| t.rank_of(i)).collect()).collect()
}

/// Borda points Σₖ (n − rₖ + 1) per item.
pub fn aggregate_borda(tables: &[ScoreTable], items: &[String]) -> Result<Vec<f64>, RankingError> {
    let n = items.len() as f64;
    let ranks = aligned_ranks(tables, items)?;
    Ok((0..items.len()).map(|i| ranks.iter().map(|r| n - r[i] + 1.0).sum()).collect())
}

/// Min-max normalization to [0, 1]; infinite values are clamped to the
/// finite extremes first, and a constant vector maps to 0.5.
pub fn min_max(values: &[f64]) -> Vec<f64> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let (lo, hi) = if finite.is_empty() {
        (0.0, 0.0)
    } else {
        (finite.iter().copied().fold(f64::INFINITY, f64::min), finite.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    };
    let clamped: Vec<f64> = values
        .iter()
        .map(|&v| if v == f64::INFINITY { hi } else if v == f64::NEG_INFINITY { lo } else { v })
        .collect();
    let any_pos_inf = values.contains(&f64::INFINITY);
    let any_neg_inf = values.contains(&f64::NEG_INFINITY);
    if hi - lo <= 0.0 {
        if any_pos_inf && !any_neg_inf && !finite.is_empty() {
            return values.iter().map(|v| if *v == f64::INFINITY { 1.0 } else { 0.0 }).collect();
        }
        return vec![0.5; values.len()];
    }
    clamped.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Weighted average of min-max normalized method scores.
pub fn aggregate_nwa(tables: &[ScoreTable], items: &[String], weights: Option<&[f64]>) -> Result<Vec<f64>, RankingError> {
    let uniform = vec![1.0; tables.len()];
    let weights = weights.unwrap_or(&uniform);
    let total: f64 = weights.iter().sum();
    if weights.len() != tables.len() || !(total > 0.0) {
        return Err(RankingError::BadWeights);
    }
    let mut out = vec![0.0; items.len()];
    for (t, w) in tables.iter().zip(weights) {
        let raw: Vec<f64> = items.iter().map(|i| t.score_of(i)).collect::<Result<_, _>>()?;
        for (o, v) in out.iter_mut().zip(min_max(&raw)) {
            *o += w * v;
        }
    }
    Ok(out.iter().map(|o| o / total).collect())
}

/// Number of methods placing each item within their top `m`, plus the mean
/// rank used to order items with equal counts.
pub fn aggregate_consensus(tables: &[ScoreTable], items: &[String], m: usize) -> Result<(Vec<f64>, Vec<f64>), RankingError> {
    if m == 0 {
        return Err(RankingError::BadCutoff);
    }
    let ranks = aligned_ranks(tables, items)?;
    let counts = (0..items.len()).map(|i| ranks.iter().filter(|r| r[i] <= m as f64).count() as f64).collect();
    let mean_rank = (0..items.len()).map(|i| ranks.iter().map(|r| r[i]).sum::<f64>() / ranks.len() as f64).collect();
    Ok((counts, mean_rank))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub items: Vec<String>,
    pub tables: Vec<ScoreTable>,
    pub top_m: usize,
    pub borda: Vec<f64>,
    pub nwa: Vec<f64>,
    pub consensus: Vec<f64>,
    pub consensus_mean_rank: Vec<f64>,
    /// Sum of the three normalized aggregates, in [0, 3].
    pub final_scores: Vec<f64>,
    /// Item indices, best first.
    pub order: Vec<usize>,
}

impl RankingReport {
    pub fn ordered_items(&self) -> Vec<&str> {
        self.order.iter().map(|&i| self.items[i].as_str()).collect()
    }

    pub fn position_of(&self, item: &str) -> Option<usize> {
        self.order.iter().position(|&i| self.items[i] == item)
    }

    /// CSV: rank, item, final, borda, nwa, consensus.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["rank", "item", "final", "borda", "nwa", "consensus"]).expect("in-memory write");
        for (pos, &i) in self.order.iter().enumerate() {
            w.write_record([
                (pos + 1).to_string(),
                self.items[i].clone(),
                crate::features::format_float(self.final_scores[i]),
                crate::features::format_float(self.borda[i]),
                crate::features::format_float(self.nwa[i]),
                crate::features::format_float(self.consensus[i]),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

/// Combines method tables: normalized Borda + normalized NWA + normalized
/// consensus. Items are ordered by final score, then input position. The
/// result does not depend on the order of `tables`.
pub fn final_ranking(tables: &[ScoreTable], m: usize) -> Result<RankingReport, RankingError> {
    let first = tables.first().ok_or(RankingError::NoTables)?;
    let items = first.items.clone();
    let mut tables = tables.to_vec();
    tables.sort_by(|a, b| a.method.cmp(&b.method));
    let borda = aggregate_borda(&tables, &items)?;
    let nwa = aggregate_nwa(&tables, &items, None)?;
    let (consensus, consensus_mean_rank) = aggregate_consensus(&tables, &items, m)?;
    let (b, w, c) = (min_max(&borda), min_max(&nwa), min_max(&consensus));
    let final_scores: Vec<f64> = (0..items.len()).map(|i| b[i] + w[i] + c[i]).collect();
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&x, &y| final_scores[y].total_cmp(&final_scores[x]).then(x.cmp(&y)));
    Ok(RankingReport { items, tables, top_m: m, borda, nwa, consensus, consensus_mean_rank, final_scores, order })
}

/// Which base methods to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fdr,
    Mi,
    Cfs,
    Bn,
    Rf,
    Svm,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Fdr, Method::Mi, Method::Cfs, Method::Bn, Method::Rf, Method::Svm];

    pub fn classifier(self) -> Option<ClassifierKind> {
        match self {
            Method::Bn => Some(ClassifierKind::BayesNet),
            Method::Rf => Some(ClassifierKind::RandomForest),
            Method::Svm => Some(ClassifierKind::LinearSvm),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Fdr => "fdr",
            Method::Mi => "mi",
            Method::Cfs => "cfs",
            Method::Bn => "bn",
            Method::Rf => "rf",
            Method::Svm => "svm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankingOptions {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_top_m")]
    pub top_m: usize,
    #[serde(default = "default_bins")]
    pub mi_bins: usize,
    /// Cap on greedy steps for selection-based scores.
    #[serde(default = "default_steps")]
    pub selection_steps: usize,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Forest size used inside selection scoring.
    #[serde(default = "default_trees")]
    pub forest_trees: usize,
    /// SVM training epochs used inside selection scoring.
    #[serde(default = "default_epochs")]
    pub svm_epochs: usize,
}

fn default_trees() -> usize {
    10
}

fn default_epochs() -> usize {
    20
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_top_m() -> usize {
    10
}

fn default_bins() -> usize {
    10
}

fn default_steps() -> usize {
    10
}

fn default_folds() -> usize {
    3
}

impl Default for RankingOptions {
    fn default() -> Self {
        Self {
            methods: default_methods(),
            top_m: default_top_m(),
            mi_bins: default_bins(),
            selection_steps: default_steps(),
            folds: default_folds(),
            forest_trees: default_trees(),
            svm_epochs: default_epochs(),
        }
    }
}

/// Ranking items: F1..F66 with the 20 object columns grouped as F4.
pub fn feature_items() -> (Vec<String>, Vec<Vec<usize>>) {
    let names = (1..=NUM_FEATURES).map(|k| format!("F{k}")).collect();
    let groups = (1..=NUM_FEATURES).map(|k| columns_of_feature(k).collect()).collect();
    (names, groups)
}

/// Item display label, e.g. `F31 V(L-MPO)`.
pub fn item_label(item: &str) -> String {
    match item.strip_prefix('F').and_then(|k| k.parse::<usize>().ok()) {
        Some(k) if (1..=NUM_FEATURES).contains(&k) => format!("{item} {}", feature_label(k)),
        _ => item.to_string(),
    }
}

fn labels_of(data: &LabeledMatrix, rows: &[usize]) -> Vec<bool> {
    rows.iter().map(|&r| data.health[r] == Health::Weak).collect()
}

/// Per-column information scores over `rows`, one entry per column.
fn column_info_scores(method: Method, data: &LabeledMatrix, rows: &[usize], bins: usize) -> Result<Vec<Option<f64>>, RankingError> {
    let labels = labels_of(data, rows);
    match method {
        Method::Fdr | Method::Mi => (0..NUM_COLUMNS)
            .map(|c| {
                let defined: Vec<usize> = (0..rows.len()).filter(|&p| !data.undefined[rows[p]][c]).collect();
                let values: Vec<f64> = defined.iter().map(|&p| data.values[rows[p]][c]).collect();
                let lab: Vec<bool> = defined.iter().map(|&p| labels[p]).collect();
                if method == Method::Mi {
                    return Ok(Some(score_mi(&values, &lab, bins)));
                }
                let a: Vec<f64> = values.iter().zip(&lab).filter(|(_, l)| !**l).map(|(v, _)| *v).collect();
                let b: Vec<f64> = values.iter().zip(&lab).filter(|(_, l)| **l).map(|(v, _)| *v).collect();
                match score_fdr(&a, &b) {
                    Ok(s) => Ok(Some(s)),
                    Err(RankingError::EmptyClass(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect(),
        Method::Cfs => {
            let cols: Vec<Vec<f64>> = (0..NUM_COLUMNS)
                .map(|c| {
                    let mean = data.column_mean(rows, c);
                    rows.iter().map(|&r| if data.undefined[r][c] { mean } else { data.values[r][c] }).collect()
                })
                .collect();
            (0..NUM_COLUMNS).map(|c| score_cfs(&cols, c, &labels)).collect()
        }
        _ => unreachable!("not an information method"),
    }
}

fn group_scores(column_scores: &[Option<f64>], groups: &[Vec<usize>], method: &str, items: &[String]) -> Vec<f64> {
    groups
        .iter()
        .zip(items)
        .map(|(g, item)| {
            let best = g.iter().filter_map(|&c| column_scores[c]).fold(f64::NEG_INFINITY, f64::max);
            if best == f64::NEG_INFINITY {
                warn!("{method}: no usable samples for {item}; scored 0");
                0.0
            } else {
                best
            }
        })
        .collect()
}

/// Score tables for feature items over `rows` of `data`.
pub fn feature_tables(
    data: &LabeledMatrix,
    rows: &[usize],
    opts: &RankingOptions,
    seed: u64,
) -> Result<Vec<ScoreTable>, RankingError> {
    let (items, groups) = feature_items();
    let mut tables = Vec::new();
    for &method in &opts.methods {
        match method.classifier() {
            None => {
                let cs = column_info_scores(method, data, rows, opts.mi_bins)?;
                tables.push(ScoreTable::new(method.name(), items.clone(), group_scores(&cs, &groups, method.name(), &items))?);
            }
            Some(kind) => {
                let spec = selection_spec(kind, opts, seed);
                let ctx = CvContext::new(&spec, data, rows, opts.folds, seed)?;
                for dir in [Direction::Forward, Direction::Backward] {
                    let scores = score_by_selection(&ctx, &groups, dir, opts.selection_steps)?;
                    let name = format!("{}-{}", method.name(), if dir == Direction::Forward { "fwd" } else { "bwd" });
                    tables.push(ScoreTable::new(name, items.clone(), scores)?);
                }
            }
        }
    }
    Ok(tables)
}

fn selection_spec(kind: ClassifierKind, opts: &RankingOptions, seed: u64) -> ClassifierSpec {
    let mut spec = ClassifierSpec::new(kind, seed);
    spec.forest.n_trees = opts.forest_trees;
    spec.svm.epochs = opts.svm_epochs;
    spec
}

/// Feature ranking over `rows` of `data`.
pub fn rank_features(data: &LabeledMatrix, rows: &[usize], opts: &RankingOptions, seed: u64) -> Result<RankingReport, RankingError> {
    let tables = feature_tables(data, rows, opts, seed)?;
    final_ranking(&tables, opts.top_m)
}

/// Minimum samples of each health class for an activity to be ranked.
pub const MIN_ACTIVITY_CLASS_SAMPLES: usize = 4;

/// Activity ranking: for each information method and m ∈ {5, 10}, an
/// activity scores the mean of its top-m within-activity feature scores; for
/// each classifier and direction it scores the best CV F1-macro reached on
/// its own samples. Activities lacking samples of either class are skipped.
pub fn rank_activities(data: &LabeledMatrix, rows: &[usize], opts: &RankingOptions, seed: u64) -> Result<RankingReport, RankingError> {
    let (_, groups) = feature_items();
    let mut kept: Vec<(Activity, Vec<usize>)> = Vec::new();
    for a in Activity::ALL {
        let act_rows: Vec<usize> = rows.iter().copied().filter(|&r| data.activity[r] == a).collect();
        let weak = act_rows.iter().filter(|&&r| data.health[r] == Health::Weak).count();
        let normal = act_rows.iter().filter(|&&r| data.health[r] == Health::Normal).count();
        if weak < MIN_ACTIVITY_CLASS_SAMPLES || normal < MIN_ACTIVITY_CLASS_SAMPLES {
            if !act_rows.is_empty() {
                warn!("activity {}: {normal} normal / {weak} weak samples; excluded from ranking", a.name());
            }
            continue;
        }
        kept.push((a, act_rows));
    }
    if kept.is_empty() {
        return Err(RankingError::TooFewItems { need: 1, got: 0 });
    }
    let items: Vec<String> = kept.iter().map(|(a, _)| a.name().to_string()).collect();
    let mut tables = Vec::new();
    for &method in &opts.methods {
        match method.classifier() {
            None => {
                let per_activity: Vec<Vec<f64>> = kept
                    .iter()
                    .map(|(_, r)| {
                        let cs = column_info_scores(method, data, r, opts.mi_bins)?;
                        let (fi, _) = feature_items();
                        let mut s: Vec<f64> = group_scores(&cs, &groups, method.name(), &fi)
                            .into_iter()
                            .skip(3)
                            .map(|v| if v.is_finite() { v } else { f64::MAX })
                            .collect();
                        s.sort_by(|a, b| b.total_cmp(a));
                        Ok(s)
                    })
                    .collect::<Result<_, RankingError>>()?;
                for m in [5usize, 10] {
                    let scores = per_activity.iter().map(|s| s.iter().take(m).sum::<f64>() / m.min(s.len()) as f64).collect();
                    tables.push(ScoreTable::new(format!("{}-top{m}", method.name()), items.clone(), scores)?);
                }
            }
            Some(kind) => {
                let spec = selection_spec(kind, opts, seed);
                let behavioral: Vec<Vec<usize>> = groups[4..].to_vec();
                let mut fwd = Vec::new();
                let mut bwd = Vec::new();
                for (_, r) in &kept {
                    let k = opts.folds.min(r.len());
                    let ctx = CvContext::new(&spec, data, r, k, seed)?;
                    fwd.push(best_selection_f1(&ctx, &behavioral, Direction::Forward, opts.selection_steps)?);
                    bwd.push(best_selection_f1(&ctx, &behavioral, Direction::Backward, opts.selection_steps)?);
                }
                tables.push(ScoreTable::new(format!("{}-fwd", method.name()), items.clone(), fwd)?);
                tables.push(ScoreTable::new(format!("{}-bwd", method.name()), items.clone(), bwd)?);
            }
        }
    }
    final_ranking(&tables, opts.top_m.min(items.len()).max(1))
}

fn best_selection_f1(ctx: &CvContext<'_>, items: &[Vec<usize>], dir: Direction, steps: usize) -> Result<f64, RankingError> {
    let scores = score_by_selection(ctx, items, dir, steps)?;
    let best = match dir {
        Direction::Forward => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Direction::Backward => scores.iter().map(|s| if *s > 1.0 { s - 1.0 } else { *s }).fold(f64::NEG_INFINITY, f64::max),
    };
    Ok(best.clamp(0.0, 1.0))
}
