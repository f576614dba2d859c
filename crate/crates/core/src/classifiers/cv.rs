//! Stratified shuffled k-fold cross-validation.

use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Classifier, ClassifierError, ClassifierKind, ClassifierSpec, Confusion, LabeledMatrix};
use crate::bayes_net::{fit_ml, TrainRow};
use crate::features::NUM_COLUMNS;
use crate::model::{Activity, Health};

/// Fold id for each position of `health`. Each class is shuffled, the class
/// lists are concatenated and positions are dealt round-robin, so fold sizes
/// differ by at most one and class counts per fold by at most one.
pub fn stratified_folds(health: &[Health], k: usize, seed: u64) -> Result<Vec<usize>, ClassifierError> {
    let n = health.len();
    if k < 2 || n < k {
        return Err(ClassifierError::TooFewSamples { n, k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(n);
    for class in [Health::Normal, Health::Weak, Health::Unknown] {
        let mut idx: Vec<usize> = (0..n).filter(|&i| health[i] == class).collect();
        idx.shuffle(&mut rng);
        order.extend(idx);
    }
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    /// Row ids (into the data matrix) of this fold's test set.
    pub rows: Vec<usize>,
    pub predictions: Vec<Health>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub folds: Vec<FoldReport>,
    /// Row ids evaluated, in input order.
    pub rows: Vec<usize>,
    /// Out-of-fold prediction for each entry of `rows`.
    pub predictions: Vec<Health>,
    pub f1_macro: f64,
    pub f1_micro: f64,
    pub confusion: Confusion,
}

/// Cross-validation plan over a subset of rows with a fixed fold assignment.
pub struct CvContext<'a> {
    spec: ClassifierSpec,
    data: &'a LabeledMatrix,
    rows: Vec<usize>,
    fold_of: Vec<usize>,
    k: usize,
    bn_cache: OnceLock<Option<BnCache>>,
}

impl<'a> CvContext<'a> {
    /// Folds are stratified over row groups (labeled by their first row),
    /// so every row of a group lands in the same fold.
    pub fn new(spec: &ClassifierSpec, data: &'a LabeledMatrix, rows: &[usize], k: usize, seed: u64) -> Result<Self, ClassifierError> {
        if rows.iter().any(|&r| data.health[r] == Health::Unknown) {
            return Err(ClassifierError::UnlabeledRow);
        }
        let (group_of, group_health) = compact_groups(data, rows);
        let group_fold = stratified_folds(&group_health, k, seed)?;
        let fold_of = group_of.iter().map(|&g| group_fold[g]).collect();
        Ok(Self { spec: spec.clone(), data, rows: rows.to_vec(), fold_of, k, bn_cache: OnceLock::new() })
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (pos, &r) in self.rows.iter().enumerate() {
            if self.fold_of[pos] == fold {
                test.push(r);
            } else {
                train.push(r);
            }
        }
        (train, test)
    }

    fn fold_spec(&self, fold: usize) -> ClassifierSpec {
        let mut spec = self.spec.clone();
        spec.seed = self.spec.seed.wrapping_add((fold as u64).wrapping_mul(0x2545_F491_4F6C_DD1D));
        spec
    }

    /// Full out-of-fold evaluation with `columns`.
    pub fn evaluate(&self, columns: &[usize]) -> Result<EvalReport, ClassifierError> {
        let mut folds = Vec::with_capacity(self.k);
        let mut pred_of = vec![Health::Unknown; self.data.len()];
        for fold in 0..self.k {
            let (train, test) = self.split(fold);
            let model = match single_class(self.data, &train) {
                Some(h) => Classifier::constant(h, columns),
                None => Classifier::fit(&self.fold_spec(fold), self.data, &train, columns)?,
            };
            let predictions = test.iter().map(|&r| model.predict(self.data, r)).collect::<Result<Vec<_>, _>>()?;
            for (&r, &p) in test.iter().zip(&predictions) {
                pred_of[r] = p;
            }
            folds.push(FoldReport { rows: test, predictions });
        }
        let predictions: Vec<Health> = self.rows.iter().map(|&r| pred_of[r]).collect();
        let truth: Vec<Health> = self.rows.iter().map(|&r| self.data.health[r]).collect();
        let confusion = Confusion::from_labels(&truth, &predictions)?;
        Ok(EvalReport {
            folds,
            rows: self.rows.clone(),
            predictions,
            f1_macro: confusion.f1_macro(),
            f1_micro: confusion.f1_micro(),
            confusion,
        })
    }

    /// Cross-validated F1-macro of each column set. Bayesian-network
    /// evaluation with fully observed activities reuses per-fold,
    /// per-column log-density tables and gives the same predictions as
    /// [`Self::evaluate`].
    pub fn score_sets(&self, sets: &[Vec<usize>]) -> Result<Vec<f64>, ClassifierError> {
        if self.spec.kind == ClassifierKind::BayesNet {
            if let Some(cache) = self.bn_cache.get_or_init(|| BnCache::build(self)).as_ref() {
                return Ok(sets.par_iter().map(|s| cache.f1_macro(s)).collect());
            }
        }
        sets.par_iter().map(|s| self.evaluate(s).map(|r| r.f1_macro)).collect()
    }

    /// F1-macro of `current` extended by each candidate group, in order.
    /// Equivalent to [`Self::score_sets`] on the concatenated sets.
    pub fn score_extensions(&self, current: &[usize], candidates: &[Vec<usize>]) -> Result<Vec<f64>, ClassifierError> {
        if self.spec.kind == ClassifierKind::BayesNet {
            if let Some(cache) = self.bn_cache.get_or_init(|| BnCache::build(self)).as_ref() {
                let acc = cache.accumulate(current);
                return Ok(candidates.par_iter().map(|c| cache.extend_f1(&acc, current, c)).collect());
            }
        }
        let sets: Vec<Vec<usize>> = candidates.iter().map(|c| current.iter().chain(c).copied().collect()).collect();
        self.score_sets(&sets)
    }
}

/// Dense group index per row (in order of first appearance) and the label
/// of each group's first row.
pub fn compact_groups(data: &LabeledMatrix, rows: &[usize]) -> (Vec<usize>, Vec<Health>) {
    let mut index = std::collections::HashMap::new();
    let mut health = Vec::new();
    let group_of = rows
        .iter()
        .map(|&r| {
            *index.entry(data.group[r]).or_insert_with(|| {
                health.push(data.health[r]);
                health.len() - 1
            })
        })
        .collect();
    (group_of, health)
}

fn single_class(data: &LabeledMatrix, rows: &[usize]) -> Option<Health> {
    let first = data.health[*rows.first()?];
    rows.iter().all(|&r| data.health[r] == first).then_some(first)
}

/// Convenience wrapper: stratified k-fold evaluation of `columns`.
pub fn cross_validate(
    spec: &ClassifierSpec,
    data: &LabeledMatrix,
    rows: &[usize],
    columns: &[usize],
    k: usize,
    seed: u64,
) -> Result<EvalReport, ClassifierError> {
    CvContext::new(spec, data, rows, k, seed)?.evaluate(columns)
}

struct BnFold {
    constant: Option<Health>,
    truth: Vec<usize>,
    base: Vec<[f64; 2]>,
    /// `terms[column][test_pos]`; `None` for columns constant in training.
    terms: Vec<Option<Vec<[f64; 2]>>>,
}

struct BnCache {
    folds: Vec<BnFold>,
}

impl BnCache {
    fn build(ctx: &CvContext<'_>) -> Option<Self> {
        if ctx.rows.iter().any(|&r| ctx.data.activity[r] == Activity::Unknown) {
            return None;
        }
        let folds = (0..ctx.k)
            .into_par_iter()
            .map(|fold| {
                let (train, test) = ctx.split(fold);
                let truth = test.iter().map(|&r| ctx.data.health[r].index().expect("labeled")).collect();
                if let Some(h) = single_class(ctx.data, &train) {
                    return BnFold { constant: Some(h), truth, base: Vec::new(), terms: Vec::new() };
                }
                let all: Vec<usize> = (0..NUM_COLUMNS).collect();
                let impute: Vec<f64> = all.iter().map(|&c| ctx.data.column_mean(&train, c)).collect();
                let train_full: Vec<Vec<f64>> = train.iter().map(|&r| ctx.data.imputed_row(r, &all, &impute)).collect();
                let test_full: Vec<Vec<f64>> = test.iter().map(|&r| ctx.data.imputed_row(r, &all, &impute)).collect();
                let train_rows: Vec<TrainRow> = train
                    .iter()
                    .zip(&train_full)
                    .map(|(&r, v)| TrainRow { values: v, activity: ctx.data.activity[r], health: ctx.data.health[r] })
                    .collect();
                let test_act: Vec<usize> = test.iter().map(|&r| ctx.data.activity[r].index().expect("observed")).collect();
                let fitted = fit_ml(&train_rows, &all).expect("labeled training rows");
                let base = test_full
                    .iter()
                    .zip(&test_act)
                    .map(|(v, &a)| {
                        let e = fitted.env_of_row(v);
                        [0, 1].map(|h| fitted.prior_h[h].ln() + fitted.env_log_prob(&e) + fitted.activity_log_prob(h, &e, a))
                    })
                    .collect();
                let mut terms: Vec<Option<Vec<[f64; 2]>>> = vec![None; NUM_COLUMNS];
                for f in &fitted.features {
                    let c = f.column;
                    terms[c] = Some(test_full.iter().zip(&test_act).map(|(v, &a)| [0, 1].map(|h| f.log_density(a, h, v[c]))).collect());
                }
                BnFold { constant: None, truth, base, terms }
            })
            .collect();
        Some(Self { folds })
    }

    fn f1_macro(&self, columns: &[usize]) -> f64 {
        let acc = self.accumulate(columns);
        self.confusion(&acc).f1_macro()
    }

    /// Per-fold, per-test-row joint log terms of the (deduplicated) columns.
    fn accumulate(&self, columns: &[usize]) -> Vec<Vec<[f64; 2]>> {
        let mut seen = [false; NUM_COLUMNS];
        let cols: Vec<usize> = columns.iter().copied().filter(|&c| !std::mem::replace(&mut seen[c], true)).collect();
        self.folds
            .iter()
            .map(|fold| {
                let mut acc = fold.base.clone();
                for terms in cols.iter().filter_map(|&c| fold.terms.get(c).and_then(Option::as_ref)) {
                    for (l, t) in acc.iter_mut().zip(terms) {
                        l[0] += t[0];
                        l[1] += t[1];
                    }
                }
                acc
            })
            .collect()
    }

    fn extend_f1(&self, acc: &[Vec<[f64; 2]>], current: &[usize], extra: &[usize]) -> f64 {
        let mut seen = [false; NUM_COLUMNS];
        current.iter().for_each(|&c| seen[c] = true);
        let cols: Vec<usize> = extra.iter().copied().filter(|&c| !std::mem::replace(&mut seen[c], true)).collect();
        let extended: Vec<Vec<[f64; 2]>> = self
            .folds
            .iter()
            .zip(acc)
            .map(|(fold, acc)| {
                let mut acc = acc.clone();
                for terms in cols.iter().filter_map(|&c| fold.terms.get(c).and_then(Option::as_ref)) {
                    for (l, t) in acc.iter_mut().zip(terms) {
                        l[0] += t[0];
                        l[1] += t[1];
                    }
                }
                acc
            })
            .collect();
        self.confusion(&extended).f1_macro()
    }

    fn confusion(&self, acc: &[Vec<[f64; 2]>]) -> Confusion {
        let mut m = [[0usize; 2]; 2];
        for (fold, acc) in self.folds.iter().zip(acc) {
            for (i, &t) in fold.truth.iter().enumerate() {
                let p = match fold.constant {
                    Some(h) => h.index().expect("labeled"),
                    None => usize::from(acc[i][1] >= acc[i][0]),
                };
                m[t][p] += 1;
            }
        }
        Confusion(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_sizes_and_ratios() {
        let health: Vec<Health> = (0..23).map(|i| if i % 3 == 0 { Health::Normal } else { Health::Weak }).collect();
        let fold = stratified_folds(&health, 5, 9).unwrap();
        let mut size = [0usize; 5];
        let mut normal = [0usize; 5];
        for (i, &f) in fold.iter().enumerate() {
            size[f] += 1;
            if health[i] == Health::Normal {
                normal[f] += 1;
            }
        }
        assert!(size.iter().max().unwrap() - size.iter().min().unwrap() <= 1);
        assert!(normal.iter().max().unwrap() - normal.iter().min().unwrap() <= 1);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(stratified_folds(&[Health::Weak; 3], 5, 0), Err(ClassifierError::TooFewSamples { n: 3, k: 5 })));
    }
}
