use evseg_tensor::{Tape, Tensor};

fn t(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data).unwrap()
}

#[test]
fn identity_pointwise_conv_returns_input() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::from_fn(vec![2, 3, 4, 5], |i| i as f64 * 0.1 - 1.0));
    let w = tape.constant(Tensor::from_fn(vec![3, 3, 1, 1], |i| if i % 4 == 0 { 1.0 } else { 0.0 }));
    let b = tape.constant(Tensor::zeros(vec![3]));
    let y = tape.conv2d(x, w, Some(b), 1, 0).unwrap();
    assert_eq!(tape.value(y), tape.value(x));
}

#[test]
fn ones_kernel_counts_overlapping_taps() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::full(vec![1, 1, 5, 5], 1.0));
    let w = tape.constant(Tensor::full(vec![1, 1, 3, 3], 1.0));
    let y = tape.conv2d(x, w, None, 1, 1).unwrap();
    let out = tape.value(y);
    assert_eq!(out.shape(), &[1, 1, 5, 5]);
    let at = |r: usize, c: usize| out.data()[r * 5 + c];
    assert_eq!(at(2, 2), 9.0);
    assert_eq!(at(1, 3), 9.0);
    for (r, c) in [(0, 0), (0, 4), (4, 0), (4, 4)] {
        assert_eq!(at(r, c), 4.0);
    }
    assert_eq!(at(0, 2), 6.0);
}

#[test]
fn strided_conv_output_size_floors() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::zeros(vec![1, 2, 7, 6]));
    let w = tape.constant(Tensor::zeros(vec![4, 2, 3, 3]));
    let y = tape.conv2d(x, w, None, 2, 1).unwrap();
    assert_eq!(tape.shape(y), &[1, 4, 4, 3]);
}

#[test]
fn conv_rejects_channel_mismatch() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::zeros(vec![1, 2, 4, 4]));
    let w = tape.constant(Tensor::zeros(vec![1, 3, 3, 3]));
    let err = tape.conv2d(x, w, None, 1, 1).unwrap_err();
    assert!(err.to_string().contains("dimension error"), "{err}");
}

#[test]
fn unit_gains_leave_features_unchanged() {
    let mut tape = Tape::<f64>::new();
    let f = tape.constant(Tensor::from_fn(vec![2, 3, 2, 2], |i| i as f64));
    let g = tape.constant(Tensor::full(vec![2, 3], 1.0));
    let y = tape.scale_channels(f, g).unwrap();
    assert_eq!(tape.value(y), tape.value(f));

    let bad = tape.constant(Tensor::full(vec![2, 4], 1.0));
    assert!(tape.scale_channels(f, bad).is_err());
}

#[test]
fn sigmoid_at_zero() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(t(&[1], vec![0.0]), true);
    let y = tape.sigmoid(x).unwrap();
    assert_eq!(tape.value(y).item(), 0.5);
    let s = tape.sum(y).unwrap();
    let grads = tape.backward(s).unwrap();
    assert_eq!(grads.get(x).unwrap().item(), 0.25);
}

#[test]
fn add_and_mul_reject_mismatched_shapes() {
    let mut tape = Tape::<f64>::new();
    let a = tape.constant(Tensor::zeros(vec![1, 2]));
    let b = tape.constant(Tensor::zeros(vec![2, 1]));
    assert!(tape.add(a, b).is_err());
    assert!(tape.mul(a, b).is_err());
}

#[test]
fn global_avg_pool_of_constant() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::full(vec![2, 3, 5, 7], 0.625));
    let y = tape.global_avg_pool(x).unwrap();
    assert_eq!(tape.shape(y), &[2, 3]);
    assert!(tape.value(y).data().iter().all(|&v| (v - 0.625).abs() < 1e-15));
}

#[test]
fn upsample_then_pool_back_is_identity_on_constants() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::full(vec![1, 2, 3, 3], -1.75));
    let up = tape.upsample_bilinear(x, 12, 12).unwrap();
    let down = tape.avg_pool(up, 4, 4).unwrap();
    assert_eq!(tape.shape(down), &[1, 2, 3, 3]);
    assert!(tape.value(down).max_abs_diff(tape.value(x)).unwrap() < 1e-15);
    assert!(tape.upsample_bilinear(x, 0, 4).is_err());
}

#[test]
fn upsample_matches_half_pixel_convention() {
    // 1x2 -> 1x4: sample positions -0.25 (clamped to 0), 0.25, 0.75, 1.25 (clamped).
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(t(&[1, 1, 1, 2], vec![0.0, 4.0]));
    let y = tape.upsample_bilinear(x, 1, 4).unwrap();
    assert_eq!(tape.value(y).data(), &[0.0, 1.0, 3.0, 4.0]);
}

#[test]
fn avg_pool_clamps_border_windows() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(t(&[1, 1, 1, 5], vec![1.0, 2.0, 3.0, 4.0, 10.0]));
    let y = tape.avg_pool(x, 2, 2).unwrap();
    // Windows [1,2], [3,4], [10]; padding never counts.
    assert_eq!(tape.value(y).data(), &[1.5, 3.5, 10.0]);
}

#[test]
fn adaptive_pool_windows_cover_input() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(t(&[1, 1, 1, 3], vec![1.0, 2.0, 6.0]));
    let y = tape.adaptive_avg_pool(x, 1, 2).unwrap();
    // [0, 2) and [1, 3).
    assert_eq!(tape.value(y).data(), &[1.5, 4.0]);
}

#[test]
fn max_pool_routes_gradient_to_argmax() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(t(&[1, 1, 2, 2], vec![0.3, 0.9, -0.2, 0.1]), true);
    let y = tape.max_pool(x, 2, 2).unwrap();
    assert_eq!(tape.value(y).data(), &[0.9]);
    let s = tape.sum(y).unwrap();
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0, 0.0, 0.0]);
}

#[test]
fn concat_channel_counts_and_slices() {
    let mut tape = Tape::<f64>::new();
    let a = tape.constant(Tensor::from_fn(vec![2, 3, 2, 2], |i| i as f64));
    let b = tape.constant(Tensor::from_fn(vec![2, 2, 2, 2], |i| -(i as f64)));
    let c = tape.concat(&[a, b]).unwrap();
    assert_eq!(tape.shape(c), &[2, 5, 2, 2]);
    let sa = tape.slice_channels(c, 0, 3).unwrap();
    let sb = tape.slice_channels(c, 3, 2).unwrap();
    assert_eq!(tape.value(sa), tape.value(a));
    assert_eq!(tape.value(sb), tape.value(b));

    let single = tape.concat(&[a]).unwrap();
    assert_eq!(tape.value(single), tape.value(a));

    let bad = tape.constant(Tensor::zeros(vec![2, 2, 3, 2]));
    assert!(tape.concat(&[a, bad]).is_err());
}

#[test]
fn non_finite_output_is_reported_with_op_name() {
    let mut tape = Tape::<f64>::new();
    let a = tape.constant(t(&[2], vec![f64::MAX, 1.0]));
    let err = tape.mul_scalar(a, 10.0).unwrap_err();
    assert!(err.to_string().contains("mul_scalar"), "{err}");
}

#[test]
fn ops_do_not_mutate_inputs() {
    let mut tape = Tape::<f64>::new();
    let x0 = Tensor::from_fn(vec![1, 2, 4, 4], |i| (i as f64 * 0.37).sin());
    let w0 = Tensor::from_fn(vec![3, 2, 3, 3], |i| (i as f64 * 0.11).cos());
    let x = tape.leaf(x0.clone(), true);
    let w = tape.leaf(w0.clone(), true);
    let y = tape.conv2d(x, w, None, 1, 1).unwrap();
    let r = tape.relu(y).unwrap();
    let p = tape.max_pool(r, 2, 2).unwrap();
    let s = tape.sum(p).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.value(x), &x0);
    assert_eq!(tape.value(w), &w0);
}

#[test]
fn backward_of_sum_is_sum_of_backwards() {
    let build = |tape: &mut Tape<f64>, x: evseg_tensor::Var, which: u8| {
        let a = tape.sigmoid(x).unwrap();
        let b = tape.relu(x).unwrap();
        let sa = tape.sum(a).unwrap();
        let sb = tape.mean(b).unwrap();
        match which {
            0 => sa,
            1 => sb,
            _ => tape.add(sa, sb).unwrap(),
        }
    };
    let x0 = Tensor::from_fn(vec![3, 4], |i| (i as f64 - 5.5) * 0.3);
    let grad = |which| {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(x0.clone(), true);
        let out = build(&mut tape, x, which);
        tape.backward(out).unwrap().get(x).unwrap().clone()
    };
    let (ga, gb, gs) = (grad(0), grad(1), grad(2));
    for i in 0..x0.numel() {
        assert!((ga.data()[i] + gb.data()[i] - gs.data()[i]).abs() < 1e-15);
    }
}
