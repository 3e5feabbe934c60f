//! Feature naming. Every output column keeps the names of the entities it
//! came from.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::diag::Diagnostic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Raw,
    Derived,
    Count,
    Sum,
    Mean,
    Min,
    Max,
    CategoryCount,
    TrueCount,
    Concat,
    ImputedMean,
    ImputedMode,
    ImputedConst,
}

impl TransformKind {
    pub fn suffix(self) -> &'static str {
        match self {
            TransformKind::Raw | TransformKind::Derived => "",
            TransformKind::Count | TransformKind::CategoryCount => "count",
            TransformKind::Sum => "sum",
            TransformKind::Mean => "mean",
            TransformKind::Min => "min",
            TransformKind::Max => "max",
            TransformKind::TrueCount => "true_count",
            TransformKind::Concat => "concat",
            TransformKind::ImputedMean => "imputed_mean",
            TransformKind::ImputedMode => "imputed_mode",
            TransformKind::ImputedConst => "imputed_const",
        }
    }
}

/// Name of a feature built from `base` with the given origin entities.
///
/// * raw or derived on one entity: `ENTITY_base`
/// * raw or derived across entities: `base_E1_..._Ek`
/// * count: `CHILD_count`
/// * other summaries: `CHILD_base_suffix`
pub fn feature_name(base: &str, origins: &[&str], kind: TransformKind) -> String {
    assert!(!origins.is_empty(), "a feature needs at least one origin entity");
    match kind {
        TransformKind::Raw | TransformKind::Derived if origins.len() == 1 => format!("{}_{base}", origins[0]),
        TransformKind::Raw | TransformKind::Derived => format!("{base}_{}", origins.join("_")),
        TransformKind::Count => format!("{}_count", origins[0]),
        k => format!("{}_{base}_{}", origins[0], k.suffix()),
    }
}

/// `CHILD_base_category_count`, with the category reduced to `[A-Za-z0-9_]`.
pub fn category_count_name(child_column: &str, category: &str) -> String {
    format!("{child_column}_{}_count", sanitize(category))
}

pub fn sanitize(text: &str) -> String {
    let s: String = text
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "_".to_string()
    } else {
        s
    }
}

/// Hands out unique column names within one frame, suffixing repeats with
/// `_2`, `_3`, ...
#[derive(Debug, Default)]
pub struct NameAllocator {
    taken: BTreeSet<String>,
    pub warnings: Vec<Diagnostic>,
}

impl NameAllocator {
    pub fn claim(&mut self, name: &str) -> String {
        if self.taken.insert(name.to_string()) {
            return name.to_string();
        }
        let mut n = 2;
        loop {
            let candidate = format!("{name}_{n}");
            if self.taken.insert(candidate.clone()) {
                self.warnings.push(Diagnostic::warning(
                    "name-collision",
                    format!("feature name `{name}` is already used; renamed to `{candidate}`"),
                ));
                return candidate;
            }
            n += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relabeling_examples() {
        assert_eq!(feature_name("Name", &["PRODUCT"], TransformKind::Raw), "PRODUCT_Name");
        assert_eq!(
            feature_name("Benefit_Sought", &["CUSTOMER", "PRODUCT"], TransformKind::Derived),
            "Benefit_Sought_CUSTOMER_PRODUCT"
        );
        assert_eq!(feature_name("total", &["ORDER"], TransformKind::Mean), "ORDER_total_mean");
        assert_eq!(feature_name("total", &["ORDER"], TransformKind::Count), "ORDER_count");
        assert_eq!(feature_name("priority_ship", &["ORDER"], TransformKind::TrueCount), "ORDER_priority_ship_true_count");
    }

    #[test]
    fn categories_are_sanitized() {
        assert_eq!(category_count_name("ORDER_channel", "Walk-in store"), "ORDER_channel_Walk_in_store_count");
        assert_eq!(category_count_name("ORDER_channel", ""), "ORDER_channel___count");
    }

    #[test]
    fn collisions_get_suffixes() {
        let mut names = NameAllocator::default();
        assert_eq!(names.claim("A_x"), "A_x");
        assert_eq!(names.claim("A_x"), "A_x_2");
        assert_eq!(names.claim("A_x"), "A_x_3");
        assert_eq!(names.warnings.len(), 2);
    }
}
