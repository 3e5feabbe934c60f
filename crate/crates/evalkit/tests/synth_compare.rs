use cmml_core::planner::PlanOptions;
use cmml_core::Value;
use cmml_evalkit::{compare_datasets, ols_fit, synth_generate, CompareOptions, EvalError, SynthSpec, DEFAULT_RIDGE};

fn numbers(values: Vec<Value>) -> Vec<f64> {
    values.iter().map(|v| v.as_f64().expect("present")).collect()
}

#[test]
fn generated_bundle_binds_cleanly() {
    let b = synth_generate(&SynthSpec::default(), 42).unwrap();
    let (exec, flat) = b.prepare(&PlanOptions::default()).unwrap();
    let ds = &exec.datasets[0];
    assert_eq!(ds.keys.len(), 200);
    assert_eq!(flat.table.rows.len(), b.tables["ORDER"].lines().count() - 1);
}

#[test]
fn noiseless_target_recovers_coefficients() {
    let spec = SynthSpec {
        sigma: 0.0,
        intercept: 7.0,
        ..SynthSpec::default()
    };
    let b = synth_generate(&spec, 5).unwrap();
    let (exec, _) = b.prepare(&PlanOptions::default()).unwrap();
    let ds = &exec.datasets[0];
    let count = numbers(ds.column_values("ORDER_count"));
    let mean = numbers(ds.column_values("ORDER_total_mean"));
    let y = numbers(ds.column_values("CUSTOMER_ltv"));
    let x: Vec<Vec<f64>> = mean.iter().zip(&count).map(|(m, c)| vec![*m, *c]).collect();
    let m = ols_fit(&x, &y, 0.0).unwrap();
    assert!((m.intercept - b.truth["intercept"]).abs() < 1e-6, "{m:?}");
    assert!((m.coefficients[0] - b.truth["ORDER_total_mean"]).abs() < 1e-6, "{m:?}");
    assert!((m.coefficients[1] - b.truth["ORDER_count"]).abs() < 1e-6, "{m:?}");
}

fn options(folds: usize) -> CompareOptions {
    CompareOptions {
        range: 1.0,
        folds,
        seed: 1,
        ridge: DEFAULT_RIDGE,
    }
}

#[test]
fn summarized_dataset_explains_more_variance() {
    let b = synth_generate(&SynthSpec::default(), 2024).unwrap();
    let (exec, flat) = b.prepare(&PlanOptions::default()).unwrap();
    let r = compare_datasets(&flat, &exec.datasets[0], &options(5)).unwrap();
    assert_eq!(r.keys, 200);
    assert_eq!(r.folds.iter().map(|f| f.test_keys).sum::<usize>(), 200);
    assert!(r.tds.r2 - r.ds0.r2 >= 0.1, "{r:#?}");
    assert!(r.wilcoxon.p_two_tailed < 0.05, "{r:#?}");
    // frozen from the first seeded run
    assert!((r.tds.r2 - 0.891_755_923_513).abs() < 1e-9, "{}", r.tds.r2);
    assert!((r.ds0.r2 - 0.006_518_122_589).abs() < 1e-9, "{}", r.ds0.r2);
    assert_eq!(r.ds0_rows, 914);
}

#[test]
fn dataset_against_itself_is_degenerate() {
    let b = synth_generate(&SynthSpec { customers: 40, ..SynthSpec::default() }, 3).unwrap();
    let (exec, _) = b.prepare(&PlanOptions::default()).unwrap();
    let tds = &exec.datasets[0];
    let same = cmml_core::FlatDataset {
        table: tds.table.clone(),
        key_columns: tds.key_columns.clone(),
        target_column: tds.target_column.clone(),
    };
    let r = compare_datasets(&same, tds, &options(4)).unwrap();
    assert!(r.wilcoxon.degenerate);
    assert_eq!(r.wilcoxon.p_two_tailed, 1.0);
    assert_eq!(r.ds0, r.tds);
}

#[test]
fn fold_count_is_checked() {
    let b = synth_generate(&SynthSpec { customers: 6, ..SynthSpec::default() }, 3).unwrap();
    let (exec, flat) = b.prepare(&PlanOptions::default()).unwrap();
    assert_eq!(compare_datasets(&flat, &exec.datasets[0], &options(1)), Err(EvalError::TooFewFolds));
    assert_eq!(compare_datasets(&flat, &exec.datasets[0], &options(7)), Err(EvalError::TooManyFolds(7, 6)));
    assert!(compare_datasets(&flat, &exec.datasets[0], &options(6)).is_ok());
}

#[test]
fn folds_partition_keys() {
    let keys: Vec<String> = (0..23).map(|i| format!("k{i}")).collect();
    let folds = cmml_evalkit::compare::assign_folds(&keys, 4, 9).unwrap();
    assert_eq!(folds.len(), 23);
    for f in 0..4 {
        let n = folds.values().filter(|v| **v == f).count();
        assert!(n == 5 || n == 6);
    }
    assert_eq!(folds, cmml_evalkit::compare::assign_folds(&keys, 4, 9).unwrap());
}
