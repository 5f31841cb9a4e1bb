mod common;

use std::collections::BTreeMap;

use common::{grad_case, GRAD_KINDS, GRAD_TOL};

#[test]
fn hundred_random_cases_match_finite_differences() {
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    for case in 0..100 {
        let (kind, err) = grad_case(case).unwrap();
        let w = worst.entry(kind).or_insert(0.0);
        *w = w.max(err);
    }
    assert_eq!(worst.len(), GRAD_KINDS.len());
    for (kind, err) in &worst {
        assert!(*err < GRAD_TOL, "{kind}: {err:e}");
    }
}
