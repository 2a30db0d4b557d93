mod common;

use arc_core::encoder::EncoderVariant;
use common::*;

#[test]
fn every_op_matches_finite_differences() {
    for seed in 0..20 {
        for case in op_cases(seed) {
            let err = check_inputs(&*case.build, &case.inputs);
            assert!(err <= GRAD_TOL, "{} seed {seed}: relative error {err:e}", case.name);
        }
    }
}

#[test]
fn full_step_matches_finite_differences() {
    for seed in 0..20 {
        for variant in [EncoderVariant::Residual, EncoderVariant::RawHops] {
            let err = composition_error(seed, variant);
            assert!(err <= GRAD_TOL, "{variant:?} seed {seed}: relative error {err:e}");
        }
    }
}

#[test]
fn dropout_is_deterministic_and_inverted() {
    use arc_core::autograd::Tape;
    use arc_core::tensor::Tensor;
    let x = Tensor::filled(50, 40, 1.0);
    let mut t = Tape::new();
    let a = t.constant(x.clone());
    let d1 = t.dropout(a, 0.25, 9, true).unwrap();
    let d2 = t.dropout(a, 0.25, 9, true).unwrap();
    let off = t.dropout(a, 0.25, 9, false).unwrap();
    assert_eq!(t.value(d1), t.value(d2));
    assert_eq!(t.value(off), &x);
    for &v in t.value(d1).data() {
        assert!(v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-15);
    }
}
