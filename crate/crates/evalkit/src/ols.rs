//! Least squares with an optional ridge penalty, and the encoding that turns
//! dataset rows into a numeric design matrix.

use std::collections::BTreeSet;

use cmml_core::eer::AttributeKind;
use cmml_core::tabular::Table;
use cmml_core::value::Scalar;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::EvalError;

pub const DEFAULT_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl OlsModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.predict_row(r)).collect()
    }
}

/// Minimizes `‖Xβ + b − y‖² + λ‖β‖²` through the normal equations. The
/// intercept `b` is not penalized.
pub fn ols_fit(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<OlsModel, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if y.is_empty() {
        return Err(EvalError::Empty);
    }
    let p = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != p) {
        return Err(EvalError::LengthMismatch(p, bad.len()));
    }
    let design = DMatrix::from_fn(y.len(), p + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let target = DVector::from_column_slice(y);
    let mut gram = design.transpose() * &design;
    for j in 1..=p {
        gram[(j, j)] += lambda;
    }
    let rhs = design.transpose() * target;
    let beta = match gram.clone().cholesky() {
        Some(c) => {
            // without a penalty, a numerically rank-deficient factor is an error
            let d = c.l_dirty().diagonal().map(|x| x * x);
            if lambda == 0.0 && d.min() <= d.max() * f64::EPSILON * (p + 1) as f64 {
                return Err(EvalError::Singular);
            }
            c.solve(&rhs)
        }
        None => gram.lu().solve(&rhs).ok_or(EvalError::Singular)?,
    };
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(EvalError::Singular);
    }
    Ok(OlsModel {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Encoding {
    /// Numeric, boolean (0/1) or date (days since 1970-01-01); nulls take
    /// the training mean.
    Number { column: usize, fill: f64 },
    /// One indicator per level except the lexically last.
    OneHot { column: usize, levels: Vec<String> },
}

/// Column encoding learned from training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    parts: Vec<Encoding>,
    pub names: Vec<String>,
}

fn as_number(s: &Scalar) -> Option<f64> {
    match s {
        Scalar::Number(x) => Some(*x),
        Scalar::Bool(b) => Some(f64::from(u8::from(*b))),
        Scalar::Date(d) => Some(d.signed_duration_since(chrono::NaiveDate::default()).num_days() as f64),
        Scalar::Text(_) => None,
    }
}

impl Encoder {
    /// Learns encodings from `rows` of `table`. Identifier and text columns,
    /// and the columns in `skip`, are left out.
    pub fn fit(table: &Table, rows: &[usize], skip: &[&str]) -> Encoder {
        let mut parts = Vec::new();
        let mut names = Vec::new();
        for (i, col) in table.columns.iter().enumerate() {
            if skip.contains(&col.name.as_str()) {
                continue;
            }
            let cells = rows.iter().filter_map(|&r| table.rows[r][i].as_ref());
            match col.kind {
                AttributeKind::Numeric | AttributeKind::Boolean | AttributeKind::Date => {
                    let xs: Vec<f64> = cells.filter_map(as_number).collect();
                    let fill = if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
                    parts.push(Encoding::Number { column: i, fill });
                    names.push(col.name.clone());
                }
                AttributeKind::Nominal => {
                    let mut levels: Vec<String> = cells.map(ToString::to_string).collect::<BTreeSet<_>>().into_iter().collect();
                    levels.pop();
                    names.extend(levels.iter().map(|l| format!("{}={l}", col.name)));
                    parts.push(Encoding::OneHot { column: i, levels });
                }
                AttributeKind::Identifier | AttributeKind::Text => {}
            }
        }
        Encoder { parts, names }
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    pub fn transform(&self, table: &Table, rows: &[usize]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|&r| {
                let row = &table.rows[r];
                let mut out = Vec::with_capacity(self.width());
                for part in &self.parts {
                    match part {
                        Encoding::Number { column, fill } => {
                            out.push(row[*column].as_ref().and_then(as_number).unwrap_or(*fill));
                        }
                        Encoding::OneHot { column, levels } => {
                            let v = row[*column].as_ref().map(ToString::to_string);
                            out.extend(levels.iter().map(|l| f64::from(u8::from(v.as_deref() == Some(l)))));
                        }
                    }
                }
                out
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use cmml_core::tabular::Column;

    use super::*;

    #[test]
    fn exact_line() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..5).map(|i| 2.0 * i as f64 + 1.0).collect();
        let m = ols_fit(&x, &y, 0.0).unwrap();
        assert!((m.intercept - 1.0).abs() < 1e-9);
        assert!((m.coefficients[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_features_match_single_regressions() {
        // centred, orthogonal columns
        let x = vec![vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]];
        let y = vec![3.0, 1.0, 2.0, -2.0];
        let both = ols_fit(&x, &y, 0.0).unwrap();
        for j in 0..2 {
            let single: Vec<Vec<f64>> = x.iter().map(|r| vec![r[j]]).collect();
            let m = ols_fit(&single, &y, 0.0).unwrap();
            assert!((m.coefficients[0] - both.coefficients[j]).abs() < 1e-12);
        }
        // hand-solved: b1 = (3+1-2+2)/4 = 1, b2 = (3-1+2+2)/4 = 1.5, b0 = mean(y) = 1
        assert!((both.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((both.coefficients[1] - 1.5).abs() < 1e-12);
        assert!((both.intercept - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_rows_leave_coefficients() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0], vec![4.0]];
        let y = vec![1.0, 2.5, 2.9, 5.0];
        let a = ols_fit(&x, &y, 0.0).unwrap();
        let x2: Vec<_> = x.iter().chain(&x).cloned().collect();
        let y2: Vec<_> = y.iter().chain(&y).copied().collect();
        let b = ols_fit(&x2, &y2, 0.0).unwrap();
        assert!((a.coefficients[0] - b.coefficients[0]).abs() < 1e-9);
        assert!((a.intercept - b.intercept).abs() < 1e-9);
    }

    #[test]
    fn singular_without_ridge() {
        let x = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]];
        let y = vec![1.0, 2.0, 3.0];
        assert!(matches!(ols_fit(&x, &y, 0.0), Err(EvalError::Singular)));
        assert!(ols_fit(&x, &y, 1e-6).is_ok());
    }

    #[test]
    fn one_hot_drops_last_level() {
        let mut t = Table::new(
            "T",
            vec![
                Column::new("id", AttributeKind::Identifier),
                Column::new("c", AttributeKind::Nominal),
                Column::new("x", AttributeKind::Numeric),
            ],
        );
        for (id, c, x) in [("1", Some("b"), Some(1.0)), ("2", Some("a"), None), ("3", None, Some(3.0))] {
            t.rows.push(vec![
                Some(Scalar::Text(id.into())),
                c.map(|c| Scalar::Text(c.into())),
                x.map(Scalar::Number),
            ]);
        }
        let e = Encoder::fit(&t, &[0, 1, 2], &[]);
        assert_eq!(e.names, ["c=a", "x"]);
        assert_eq!(e.transform(&t, &[0, 1, 2]), [vec![0.0, 1.0], vec![1.0, 2.0], vec![0.0, 3.0]]);
    }
}
