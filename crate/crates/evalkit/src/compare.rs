//! Cross-validated comparison of the naive flat dataset against a training
//! dataset on the same target.

use std::collections::BTreeMap;

use cmml_core::tabular::Table;
use cmml_core::value::key_to_string;
use cmml_core::{FlatDataset, TrainingDataset};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::{regression_metrics, RegressionReport};
use crate::ols::{ols_fit, Encoder};
use crate::wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};
use crate::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    /// Target range used for nRMSE.
    pub range: f64,
    pub folds: usize,
    pub seed: u64,
    pub ridge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub test_keys: usize,
    pub ds0_train_rows: usize,
    pub ds0: RegressionReport,
    pub tds: RegressionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub options: CompareOptions,
    /// Entities scored, one per target-bearing key.
    pub keys: usize,
    pub ds0_rows: usize,
    pub ds0: RegressionReport,
    pub tds: RegressionReport,
    pub r2_gain: f64,
    /// Pairs are `(|error DS0|, |error TDS|)` per entity, so a positive
    /// `t_plus` surplus means the naive dataset erred more.
    pub wilcoxon: WilcoxonResult,
    pub folds: Vec<FoldReport>,
}

fn row_keys(table: &Table, key_columns: &[String]) -> Vec<String> {
    let idx: Vec<usize> = key_columns
        .iter()
        .map(|k| table.column_index(k).unwrap_or_else(|| panic!("key column `{k}` missing from {}", table.name)))
        .collect();
    table
        .rows
        .iter()
        .map(|r| idx.iter().map(|&i| r[i].as_ref().map(ToString::to_string).unwrap_or_default()).collect::<Vec<_>>().join("|"))
        .collect()
}

fn targets(table: &Table, column: &str) -> Vec<Option<f64>> {
    table.column(column).map(|c| c.as_ref().and_then(|s| s.as_f64())).collect()
}

/// Assigns each key to one of `k` folds after a seeded shuffle.
pub fn assign_folds(keys: &[String], k: usize, seed: u64) -> Result<BTreeMap<String, usize>, EvalError> {
    if k < 2 {
        return Err(EvalError::TooFewFolds);
    }
    if k > keys.len() {
        return Err(EvalError::TooManyFolds(k, keys.len()));
    }
    let mut order = keys.to_vec();
    order.sort();
    order.dedup();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(order.into_iter().enumerate().map(|(i, key)| (key, i % k)).collect())
}

struct Side<'a> {
    table: &'a Table,
    keys: Vec<String>,
    target: Vec<Option<f64>>,
    skip: Vec<&'a str>,
}

impl Side<'_> {
    /// Out-of-fold prediction per key, averaged over the key's rows.
    fn predict(&self, folds: &BTreeMap<String, usize>, fold: usize, ridge: f64) -> Result<(BTreeMap<String, f64>, usize), EvalError> {
        let usable = |r: &usize| self.target[*r].is_some() && folds.contains_key(&self.keys[*r]);
        let train: Vec<usize> = (0..self.keys.len()).filter(usable).filter(|&r| folds[&self.keys[r]] != fold).collect();
        let test: Vec<usize> = (0..self.keys.len()).filter(usable).filter(|&r| folds[&self.keys[r]] == fold).collect();
        let enc = Encoder::fit(self.table, &train, &self.skip);
        let y: Vec<f64> = train.iter().map(|&r| self.target[r].expect("filtered")).collect();
        let model = ols_fit(&enc.transform(self.table, &train), &y, ridge)?;
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for (r, p) in test.iter().zip(model.predict(&enc.transform(self.table, &test))) {
            let e = sums.entry(self.keys[*r].clone()).or_default();
            e.0 += p;
            e.1 += 1;
        }
        Ok((sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(), train.len()))
    }
}

/// K-fold comparison split by target-bearing key, so no entity straddles
/// folds. Both datasets are fitted with [`ols_fit`] on the same training
/// keys; naive-dataset predictions are averaged per key before scoring.
pub fn compare_datasets(ds0: &FlatDataset, tds: &TrainingDataset, opts: &CompareOptions) -> Result<ComparisonReport, EvalError> {
    if !(opts.range > 0.0) {
        return Err(EvalError::BadRange(opts.range));
    }
    let flat = Side {
        table: &ds0.table,
        keys: row_keys(&ds0.table, &ds0.key_columns),
        target: targets(&ds0.table, &ds0.target_column),
        skip: ds0.key_columns.iter().map(String::as_str).chain([ds0.target_column.as_str()]).collect(),
    };
    let train = Side {
        table: &tds.table,
        keys: tds.keys.iter().map(|k| key_to_string(k)).collect(),
        target: targets(&tds.table, &tds.target_column),
        skip: tds.key_columns.iter().map(String::as_str).chain([tds.target_column.as_str()]).collect(),
    };

    let mut actual: BTreeMap<String, f64> = BTreeMap::new();
    for (k, y) in train.keys.iter().zip(&train.target) {
        if let Some(y) = y {
            actual.insert(k.clone(), *y);
        }
    }
    let present: std::collections::BTreeSet<&String> = flat.keys.iter().collect();
    if let Some(missing) = actual.keys().find(|k| !present.contains(k)) {
        return Err(EvalError::KeyMismatch(missing.clone()));
    }
    let keys: Vec<String> = actual.keys().cloned().collect();
    if keys.is_empty() {
        return Err(EvalError::Empty);
    }
    let folds = assign_folds(&keys, opts.folds, opts.seed)?;

    let mut pred0: BTreeMap<String, f64> = BTreeMap::new();
    let mut pred1: BTreeMap<String, f64> = BTreeMap::new();
    let mut details = Vec::new();
    for fold in 0..opts.folds {
        let (p0, ds0_train_rows) = flat.predict(&folds, fold, opts.ridge)?;
        let (p1, _) = train.predict(&folds, fold, opts.ridge)?;
        let fold_keys: Vec<&String> = keys.iter().filter(|k| folds[*k] == fold).collect();
        let y: Vec<f64> = fold_keys.iter().map(|k| actual[*k]).collect();
        let f0: Vec<f64> = fold_keys.iter().map(|k| p0[*k]).collect();
        let f1: Vec<f64> = fold_keys.iter().map(|k| p1[*k]).collect();
        details.push(FoldReport {
            fold,
            test_keys: fold_keys.len(),
            ds0_train_rows,
            ds0: regression_metrics(&y, &f0, opts.range)?,
            tds: regression_metrics(&y, &f1, opts.range)?,
        });
        pred0.extend(p0);
        pred1.extend(p1);
    }

    let y: Vec<f64> = keys.iter().map(|k| actual[k]).collect();
    let f0: Vec<f64> = keys.iter().map(|k| pred0[k]).collect();
    let f1: Vec<f64> = keys.iter().map(|k| pred1[k]).collect();
    let r0 = regression_metrics(&y, &f0, opts.range)?;
    let r1 = regression_metrics(&y, &f1, opts.range)?;
    let pairs: Vec<(f64, f64)> = y.iter().zip(f0.iter().zip(&f1)).map(|(y, (a, b))| ((y - a).abs(), (y - b).abs())).collect();
    Ok(ComparisonReport {
        options: opts.clone(),
        keys: keys.len(),
        ds0_rows: flat.target.iter().zip(&flat.keys).filter(|(t, k)| t.is_some() && folds.contains_key(*k)).count(),
        r2_gain: r1.r2 - r0.r2,
        ds0: r0,
        tds: r1,
        wilcoxon: wilcoxon_signed_rank(&pairs),
        folds: details,
    })
}
