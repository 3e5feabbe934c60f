//! Regression and classification metrics.

use serde::{Deserialize, Serialize};

use crate::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub rmse: f64,
    /// `rmse / range`
    pub nrmse: f64,
    pub r2: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub fn regression_metrics(actual: &[f64], predicted: &[f64], range: f64) -> Result<RegressionReport, EvalError> {
    if actual.len() != predicted.len() {
        return Err(EvalError::LengthMismatch(actual.len(), predicted.len()));
    }
    if actual.is_empty() {
        return Err(EvalError::Empty);
    }
    if !(range > 0.0) {
        return Err(EvalError::BadRange(range));
    }
    let n = actual.len() as f64;
    let ss_res: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).powi(2)).sum();
    let mean = actual.iter().sum::<f64>() / n;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    let rmse = (ss_res / n).sqrt();
    let mut warnings = Vec::new();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        warnings.push("actual values are constant; r2 set to 0".to_string());
        0.0
    };
    Ok(RegressionReport {
        rmse,
        nrmse: rmse / range,
        r2,
        n: actual.len(),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    /// Percentages.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Harmonic mean of precision and recall, in the same units as the inputs;
/// 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn classification_metrics(tp: u64, fp: u64, fn_: u64) -> ClassificationReport {
    let mut warnings = Vec::new();
    let mut ratio = |num: u64, den: u64, what: &str| {
        if den == 0 {
            warnings.push(format!("{what} undefined (no cases); reported as 0"));
            0.0
        } else {
            100.0 * num as f64 / den as f64
        }
    };
    let precision = ratio(tp, tp + fp, "precision");
    let recall = ratio(tp, tp + fn_, "recall");
    ClassificationReport {
        precision,
        recall,
        f1: f1_score(precision, recall),
        tp,
        fp,
        fn_,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nrmse_divides_by_range() {
        let r = regression_metrics(&[0.0, 0.0], &[356.31, -356.31], 1550.0).unwrap();
        assert!((r.rmse - 356.31).abs() < 1e-9);
        assert!((r.nrmse - 0.229877).abs() < 1e-6);
    }

    #[test]
    fn perfect_and_mean_predictions() {
        let r = regression_metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 2.0).unwrap();
        assert_eq!((r.rmse, r.r2), (0.0, 1.0));
        let r = regression_metrics(&[0.0, 2.0], &[1.0, 1.0], 2.0).unwrap();
        assert_eq!((r.rmse, r.r2), (1.0, 0.0));
    }

    #[test]
    fn constant_actuals() {
        let r = regression_metrics(&[5.0, 5.0], &[5.0, 5.0], 1.0).unwrap();
        assert_eq!(r.r2, 1.0);
        let r = regression_metrics(&[5.0, 5.0], &[4.0, 6.0], 1.0).unwrap();
        assert_eq!(r.r2, 0.0);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(regression_metrics(&[1.0], &[1.0, 2.0], 1.0), Err(EvalError::LengthMismatch(1, 2))));
        assert!(matches!(regression_metrics(&[], &[], 1.0), Err(EvalError::Empty)));
        assert!(matches!(regression_metrics(&[1.0], &[1.0], 0.0), Err(EvalError::BadRange(_))));
    }

    #[test]
    fn zero_true_positives() {
        let c = classification_metrics(0, 3, 4);
        assert_eq!((c.precision, c.recall, c.f1), (0.0, 0.0, 0.0));
        let c = classification_metrics(0, 0, 0);
        assert_eq!(c.warnings.len(), 2);
    }

    #[test]
    fn counts_to_percentages() {
        let c = classification_metrics(3, 1, 3);
        assert!((c.precision - 75.0).abs() < 1e-12);
        assert!((c.recall - 50.0).abs() < 1e-12);
        assert!((c.f1 - 60.0).abs() < 1e-12);
    }
}
