mod common;

use common::grad_suite::{self, run_all};

#[test]
fn every_op_matches_finite_differences() {
    for (name, worst, tol) in run_all(20) {
        assert!(worst < tol, "{name}: relative error {worst:.3e} >= {tol:.0e}");
    }
}

#[test]
fn checks_are_sensitive() {
    // A deliberately wrong analytic gradient must be caught: scaling the
    // loss inside the numeric pass only doubles the numeric gradient.
    use ddseg::autodiff::Graph;
    use ddseg::Tensor;
    let x = Tensor::from_vec(1, 1, 2, vec![0.3, -0.4]).unwrap();
    let target = Tensor::zeros(1, 1, 2);
    let calls = std::cell::Cell::new(0);
    let err = common::gradient_check(&[x], grad_suite::STEP, |g: &mut Graph, v| {
        calls.set(calls.get() + 1);
        let t = g.constant(target.clone());
        let l = g.mse_subset(v[0], t, 0..1).unwrap();
        let w = if calls.get() == 1 { 1.0 } else { 2.0 };
        g.weighted_sum(&[(l, w)]).unwrap()
    });
    assert!(err > 0.1, "{err}");
}
