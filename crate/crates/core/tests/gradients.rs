mod common;

use common::{check_op, op_cases};

#[test]
fn every_op_matches_central_differences() {
    let mut failures = Vec::new();
    for (i, case) in op_cases().into_iter().enumerate() {
        let err = check_op(&case.inputs, case.f.as_ref(), i as u64);
        if err > 1e-4 {
            failures.push(format!("{}: {err:.3e}", case.name));
        }
    }
    assert!(failures.is_empty(), "gradient mismatches: {failures:?}");
}

#[test]
fn harness_detects_a_wrong_gradient() {
    use arche_core::tensors::{Tensor, Var};
    // relu's gradient applied to a smooth op must be flagged.
    let wrong = |a: &[Var]| -> arche_core::Result<Var> {
        let y = a[0].square();
        Ok(y.detach().add(&a[0].scale(0.0)).unwrap())
    };
    let err = check_op(&[Tensor::full(&[2], 0.7)], &wrong, 0);
    assert!(err > 0.5);
}
