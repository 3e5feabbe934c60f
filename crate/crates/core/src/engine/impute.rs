//! Imputation of applicable-but-unknown cells within one dataset.

use super::manifest::{Role, Transform};
use super::naming::TransformKind;
use super::DatasetColumn;
use crate::eer::{AttributeKind, ImputeStrategy};
use crate::expr::Literal;
use crate::value::{NullKind, Scalar, Value};

/// Fill value for a column under `mean_mode`, with the transform it implies.
fn statistic(kind: AttributeKind, values: &[Value]) -> Option<(Scalar, TransformKind, &'static str)> {
    let present: Vec<&Scalar> = values.iter().filter_map(Value::scalar).collect();
    if present.is_empty() {
        return None;
    }
    match kind {
        AttributeKind::Numeric => {
            let xs: Vec<f64> = present.iter().filter_map(|s| s.as_f64()).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            Some((Scalar::Number(mean), TransformKind::ImputedMean, "mean"))
        }
        AttributeKind::Nominal | AttributeKind::Boolean => {
            let mut sorted = present.clone();
            sorted.sort();
            let mut best: Option<(&Scalar, usize)> = None;
            let mut i = 0;
            while i < sorted.len() {
                let j = sorted[i..].iter().take_while(|s| **s == sorted[i]).count();
                if best.is_none_or(|(_, n)| j > n) {
                    best = Some((sorted[i], j));
                }
                i += j;
            }
            best.map(|(s, _)| (s.clone(), TransformKind::ImputedMode, "mode"))
        }
        AttributeKind::Date => {
            let mut sorted = present.clone();
            sorted.sort();
            Some((sorted[(sorted.len() - 1) / 2].clone(), TransformKind::ImputedMean, "median"))
        }
        AttributeKind::Text | AttributeKind::Identifier => None,
    }
}

fn constant_fits(lit: &Literal, kind: AttributeKind) -> Option<Scalar> {
    match (lit, kind) {
        (Literal::Number(x), AttributeKind::Numeric) => Some(Scalar::Number(*x)),
        (Literal::Bool(b), AttributeKind::Boolean) => Some(Scalar::Bool(*b)),
        (Literal::Date(d), AttributeKind::Date) => Some(Scalar::Date(*d)),
        (Literal::Text(s), AttributeKind::Nominal) => Some(Scalar::Text(s.clone())),
        _ => None,
    }
}

/// Fills unknown predictor cells in place. Not-applicable cells are never
/// touched. Returns warnings for columns that could not be imputed.
pub(crate) fn impute_columns(dataset: &str, columns: &mut [DatasetColumn], strategy: &ImputeStrategy) -> Vec<String> {
    let mut warnings = Vec::new();
    for col in columns.iter_mut().filter(|c| c.record.role == Role::Predictor) {
        let unknown = col.values.iter().filter(|v| v.null_kind() == Some(NullKind::Unknown)).count();
        if unknown == 0 {
            continue;
        }
        let fill = match strategy {
            ImputeStrategy::None => return warnings,
            ImputeStrategy::MeanMode => match statistic(col.kind, &col.values) {
                Some((value, kind, stat)) => Some((value, kind, Some(stat))),
                None if matches!(col.kind, AttributeKind::Text | AttributeKind::Identifier) => continue,
                None => {
                    warnings.push(format!(
                        "{dataset}: column {} has no values to impute from; {unknown} unknown cells left null",
                        col.record.name
                    ));
                    continue;
                }
            },
            ImputeStrategy::Constant(lit) => match constant_fits(lit, col.kind) {
                Some(v) => Some((v, TransformKind::ImputedConst, None)),
                None => continue,
            },
        };
        let Some((value, kind, stat)) = fill else { continue };
        for v in col.values.iter_mut().filter(|v| v.null_kind() == Some(NullKind::Unknown)) {
            *v = Value::Present(value.clone());
        }
        let original = std::mem::replace(&mut col.record.transform, Transform::new(kind));
        let mut t = Transform::new(kind)
            .with("value", serde_json::to_value(&value).expect("serializes"))
            .with("of", serde_json::to_value(&original).expect("serializes"));
        if let Some(stat) = stat {
            t = t.with("statistic", stat);
        }
        col.record.transform = t;
        col.record.imputed_cells = unknown;
        col.record.guidelines.insert(crate::planner::Guideline::G3);
    }
    warnings
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::engine::manifest::FeatureRecord;

    fn column(kind: AttributeKind, values: Vec<Value>) -> DatasetColumn {
        DatasetColumn {
            kind,
            values,
            record: FeatureRecord {
                name: "E_x".into(),
                role: Role::Predictor,
                origin_entities: vec!["E".into()],
                source_attributes: vec!["E.x".into()],
                transform: Transform::new(TransformKind::Raw),
                guidelines: BTreeSet::new(),
                imputed_cells: 0,
            },
        }
    }

    #[test]
    fn mean_fills_unknown_only() {
        let mut cols = vec![column(
            AttributeKind::Numeric,
            vec![Value::number(10.0), Value::UNKNOWN, Value::number(20.0)],
        )];
        impute_columns("D", &mut cols, &ImputeStrategy::MeanMode);
        assert_eq!(cols[0].values[1], Value::number(15.0));
        assert_eq!(cols[0].record.imputed_cells, 1);
        assert_eq!(cols[0].record.transform.kind, TransformKind::ImputedMean);

        let mut cols = vec![column(
            AttributeKind::Numeric,
            vec![Value::number(10.0), Value::NOT_APPLICABLE, Value::number(20.0)],
        )];
        impute_columns("D", &mut cols, &ImputeStrategy::MeanMode);
        assert_eq!(cols[0].values[1], Value::NOT_APPLICABLE);
        assert_eq!(cols[0].record.transform.kind, TransformKind::Raw);
    }

    #[test]
    fn mode_ties_pick_smallest() {
        let mut cols = vec![column(
            AttributeKind::Nominal,
            ["b", "a", "b", "a"].iter().map(|s| Value::text(*s)).chain([Value::UNKNOWN]).collect(),
        )];
        impute_columns("D", &mut cols, &ImputeStrategy::MeanMode);
        assert_eq!(cols[0].values[4], Value::text("a"));
    }

    #[test]
    fn date_lower_median() {
        let d = |s: &str| Value::date(s.parse().unwrap());
        let mut cols = vec![column(
            AttributeKind::Date,
            vec![d("2020-01-03"), d("2020-01-01"), Value::UNKNOWN, d("2020-01-02"), d("2020-01-09")],
        )];
        impute_columns("D", &mut cols, &ImputeStrategy::MeanMode);
        assert_eq!(cols[0].values[2], d("2020-01-02"));
    }

    #[test]
    fn all_null_column_warns() {
        let mut cols = vec![column(AttributeKind::Numeric, vec![Value::UNKNOWN, Value::UNKNOWN])];
        let w = impute_columns("D", &mut cols, &ImputeStrategy::MeanMode);
        assert_eq!(w.len(), 1);
        assert_eq!(cols[0].values[0], Value::UNKNOWN);
    }

    #[test]
    fn constant_applies_to_matching_kinds() {
        let mut cols = vec![
            column(AttributeKind::Numeric, vec![Value::UNKNOWN]),
            column(AttributeKind::Nominal, vec![Value::UNKNOWN]),
        ];
        impute_columns("D", &mut cols, &ImputeStrategy::Constant(Literal::Number(0.0)));
        assert_eq!(cols[0].values[0], Value::number(0.0));
        assert_eq!(cols[1].values[0], Value::UNKNOWN);
        assert_eq!(cols[0].record.transform.kind, TransformKind::ImputedConst);
    }
}
