use evseg_tensor::gradcheck::{grad_check, GradCheckConfig};
use evseg_tensor::op_cases::op_cases;
use evseg_tensor::{OpKind, Tape, Tensor};

#[test]
fn every_op_passes_on_ten_seeds() {
    let cfg = GradCheckConfig::default();
    for seed in 0..10 {
        for case in op_cases(seed) {
            let report = case.check(&cfg).unwrap();
            assert!(
                report.passed(),
                "{} seed {seed}: max rel err {:.3e} ({:?})",
                case.name,
                report.max_rel_error(),
                report.worst()
            );
        }
    }
}

#[test]
fn linear_closure_matches_to_machine_precision() {
    let w = Tensor::from_fn(vec![6], |i| i as f64 * 0.5 - 1.0);
    let x = Tensor::from_fn(vec![6], |i| (i as f64).sqrt());
    let report = grad_check(
        |t, v| {
            let p = t.mul(v[0], v[1])?;
            t.sum(p)
        },
        &[w, x],
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.max_rel_error() < 1e-9, "{report:?}");
}

#[test]
fn corrupted_backward_rule_is_detected() {
    let x = Tensor::from_fn(vec![1, 2, 4, 4], |i| (i as f64 * 0.7).sin());
    let w = Tensor::from_fn(vec![2, 2, 3, 3], |i| (i as f64 * 0.3).cos() * 0.2);
    let build = |corrupt: bool| {
        move |t: &mut Tape<f64>, v: &[evseg_tensor::Var]| {
            if corrupt {
                t.corrupt_backward(OpKind::Conv2d, 1.01);
            }
            let y = t.conv2d(v[0], v[1], None, 1, 1)?;
            let y = t.sigmoid(y)?;
            t.sum(y)
        }
    };
    let cfg = GradCheckConfig::default();
    let clean = grad_check(build(false), &[x.clone(), w.clone()], &cfg).unwrap();
    assert!(clean.passed(), "{clean:?}");
    let faulty = grad_check(build(true), &[x, w], &cfg).unwrap();
    assert!(!faulty.passed());
    assert!(faulty.max_rel_error() > cfg.tolerance);
}

#[test]
fn non_finite_intermediate_names_the_node() {
    let x = Tensor::new(vec![2], vec![1e300, 1.0]).unwrap();
    let err = grad_check(
        |t, v| {
            let y = t.mul(v[0], v[0])?;
            t.sum(y)
        },
        &[x],
        &GradCheckConfig::default(),
    )
    .unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("mul") && msg.contains("node"), "{msg}");
}
