//! Invariants over randomized schemas and data.

use cmml_evalkit::checks::{check_imputation, check_manifest, check_row_counts, check_splits, prepare_case};
use cmml_evalkit::random_case;
use proptest::prelude::*;

fn run(seed: u64, check: fn(&cmml_evalkit::checks::PreparedCase) -> Result<(), String>) -> Result<(), TestCaseError> {
    let (bundle, shape) = random_case(seed);
    let case = prepare_case(&bundle, &shape).map_err(|e| TestCaseError::fail(format!("seed {seed}: {e}\n{}", bundle.schema_text)))?;
    check(&case).map_err(|e| TestCaseError::fail(format!("seed {seed}: {e}\n{}", bundle.schema_text)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn one_row_per_key_and_join_size(seed in any::<u64>()) {
        run(seed, check_row_counts)?;
    }

    #[test]
    fn split_membership(seed in any::<u64>()) {
        run(seed, check_splits)?;
    }

    #[test]
    fn imputation_leaves_not_applicable(seed in any::<u64>()) {
        run(seed, check_imputation)?;
    }

    #[test]
    fn lineage_covers_every_column(seed in any::<u64>()) {
        run(seed, check_manifest)?;
    }
}

#[test]
fn cases_cover_every_shape() {
    let shapes: Vec<_> = (0..64).map(|s| random_case(s).1).collect();
    assert!(shapes.iter().any(|s| s.generalization.is_none()));
    assert!(shapes.iter().any(|s| s.generalization.is_some() && !s.overlap));
    assert!(shapes.iter().any(|s| s.overlap));
    assert!(shapes.iter().any(|s| s.has_grandchild && s.has_detail));
}
