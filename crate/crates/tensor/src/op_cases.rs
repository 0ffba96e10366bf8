//! Randomised gradient-check cases covering every differentiable op.
//!
//! Each case reduces the op output to a scalar through a fixed random
//! weighting so that no gradient entry cancels by symmetry.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

type Build = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>>;

pub struct OpCase {
    pub name: &'static str,
    pub inputs: Vec<Tensor<f64>>,
    pub build: Build,
}

impl OpCase {
    pub fn check(&self, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
        grad_check(&self.build, &self.inputs, cfg)
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(lo..hi))
}

/// Values bounded away from zero so that relu kinks are never crossed.
fn off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| {
        let m = rng.gen_range(0.1..1.0);
        if rng.gen_bool(0.5) { m } else { -m }
    })
}

/// Distinct values spaced well above the finite-difference step.
fn distinct(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.05 - 1.0).collect();
    vals.shuffle(rng);
    Tensor::new(shape.to_vec(), vals).expect("shape matches")
}

/// `sum(out * weights)` with the weights as a constant.
fn weighted_sum(tape: &mut Tape<f64>, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = uniform(&mut rng, tape.shape(out), -1.0, 1.0);
    let w = tape.constant(w);
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}

pub fn op_cases(seed: u64) -> Vec<OpCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();
    let s = seed;

    cases.push(OpCase {
        name: "conv2d_3x3",
        inputs: vec![
            uniform(&mut rng, &[2, 3, 5, 6], -1.0, 1.0),
            uniform(&mut rng, &[4, 3, 3, 3], -0.5, 0.5),
            uniform(&mut rng, &[4], -0.5, 0.5),
        ],
        build: Box::new(move |t, v| {
            let y = t.conv2d(v[0], v[1], Some(v[2]), 1, 1)?;
            weighted_sum(t, y, s)
        }),
    });
    cases.push(OpCase {
        name: "conv2d_strided",
        inputs: vec![
            uniform(&mut rng, &[1, 2, 7, 8], -1.0, 1.0),
            uniform(&mut rng, &[3, 2, 3, 3], -0.5, 0.5),
            uniform(&mut rng, &[3], -0.5, 0.5),
        ],
        build: Box::new(move |t, v| {
            let y = t.conv2d(v[0], v[1], Some(v[2]), 2, 1)?;
            weighted_sum(t, y, s)
        }),
    });
    cases.push(OpCase {
        name: "conv2d_1x1",
        inputs: vec![
            uniform(&mut rng, &[2, 4, 3, 3], -1.0, 1.0),
            uniform(&mut rng, &[2, 4, 1, 1], -0.5, 0.5),
        ],
        build: Box::new(move |t, v| {
            let y = t.conv2d(v[0], v[1], None, 1, 0)?;
            weighted_sum(t, y, s)
        }),
    });
    cases.push(OpCase {
        name: "linear",
        inputs: vec![
            uniform(&mut rng, &[3, 5], -1.0, 1.0),
            uniform(&mut rng, &[4, 5], -1.0, 1.0),
            uniform(&mut rng, &[4], -1.0, 1.0),
        ],
        build: Box::new(move |t, v| {
            let y = t.linear(v[0], v[1], Some(v[2]))?;
            weighted_sum(t, y, s)
        }),
    });
    cases.push(OpCase {
        name: "add",
        inputs: vec![
            uniform(&mut rng, &[2, 3, 2], -1.0, 1.0),
            uniform(&mut rng, &[2, 3, 2], -1.0, 1.0),
        ],
        build: Box::new(move |t, v| {
            let y = t.add(v[0], v[1])?;
            weighted_sum(t, y, s)
        }),
    });
    cases.push(OpCase {
        name: "mul",
        inputs: vec![
            uniform(&mut rng, &[2, 3, 2], -1.0, 1.0),
            uniform(&mut rng, &[2, 3, 2], -1.0, 1.0),
        ],
        build: Box::new(move |t, v| {
            let y = t.mul(v[0], v[1])?;
            weighted_sum(t, y, s)
        }),
    });
    let scale = rng.gen_range(-2.0..2.0);
    cases.push(OpCase {
        name: "mul_scalar",
        inputs: vec![uniform(&mut rng, &[7], -1.0, 1.0)],
        build: Box::new(move |t, v| {
            let y = t.mul_scalar(v[0], scale)?;
            weighted_sum(t, y, s)
        }),
    });
    cases.push(OpCase {
        name: "relu",
        inputs: vec![off_zero(&mut rng, &[2, 3, 3, 3])],
        build: Box::new(move |t, v| {
            let y = t.relu(v[0])?;
            weighted_sum(t, y, s)
        }),
    });
    cases.push(OpCase {
        name: "sigmoid",
        inputs: vec![uniform(&mut rng, &[2, 3, 4], -4.0, 4.0)],
        build: Box::new(move |t, v| {
            let y = t.sigmoid(v[0])?;
            weighted_sum(t, y, s)
        }),
    });
    cases.push(OpCase {
        name: "scale_channels",
        inputs: vec![
            uniform(&mut rng, &[2, 3, 3, 2], -1.0, 1.0),
            uniform(&mut rng, &[2, 3], 0.0, 1.0),
        ],
        build: Box::new(move |t, v| {
            let y = t.scale_channels(v[0], v[1])?;
            weighted_sum(t, y, s)
        }),
    });
    cases.push(OpCase {
        name: "global_avg_pool",
        inputs: vec![uniform(&mut rng, &[2, 3, 4, 5], -1.0, 1.0)],
        build: Box::new(move |t, v| {
            let y = t.global_avg_pool(v[0])?;
            weighted_sum(t, y, s)
        }),
    });
    cases.push(OpCase {
        name: "avg_pool",
        inputs: vec![uniform(&mut rng, &[1, 2, 5, 7], -1.0, 1.0)],
        build: Box::new(move |t, v| {
            let y = t.avg_pool(v[0], 3, 2)?;
            weighted_sum(t, y, s)
        }),
    });
    cases.push(OpCase {
        name: "adaptive_avg_pool",
        inputs: vec![uniform(&mut rng, &[1, 2, 5, 7], -1.0, 1.0)],
        build: Box::new(move |t, v| {
            let y = t.adaptive_avg_pool(v[0], 3, 2)?;
            weighted_sum(t, y, s)
        }),
    });
    cases.push(OpCase {
        name: "max_pool",
        inputs: vec![distinct(&mut rng, &[1, 2, 6, 5])],
        build: Box::new(move |t, v| {
            let y = t.max_pool(v[0], 2, 2)?;
            weighted_sum(t, y, s)
        }),
    });
    cases.push(OpCase {
        name: "upsample_bilinear",
        inputs: vec![uniform(&mut rng, &[1, 2, 3, 4], -1.0, 1.0)],
        build: Box::new(move |t, v| {
            let y = t.upsample_bilinear(v[0], 7, 9)?;
            weighted_sum(t, y, s)
        }),
    });
    cases.push(OpCase {
        name: "concat",
        inputs: vec![
            uniform(&mut rng, &[2, 3, 2, 2], -1.0, 1.0),
            uniform(&mut rng, &[2, 2, 2, 2], -1.0, 1.0),
        ],
        build: Box::new(move |t, v| {
            let y = t.concat(&[v[0], v[1]])?;
            weighted_sum(t, y, s)
        }),
    });
    cases.push(OpCase {
        name: "slice_channels",
        inputs: vec![uniform(&mut rng, &[2, 5, 2, 2], -1.0, 1.0)],
        build: Box::new(move |t, v| {
            let y = t.slice_channels(v[0], 1, 3)?;
            weighted_sum(t, y, s)
        }),
    });
    cases.push(OpCase {
        name: "reshape_mean",
        inputs: vec![uniform(&mut rng, &[2, 6], -1.0, 1.0)],
        build: Box::new(move |t, v| {
            let r = t.reshape(v[0], &[2, 3, 2, 1])?;
            let sq = t.mul(r, r)?;
            t.mean(sq)
        }),
    });
    let labels: Vec<u8> = (0..2 * 3 * 4)
        .map(|_| if rng.gen_bool(0.2) { 255 } else { rng.gen_range(0..5) })
        .collect();
    cases.push(OpCase {
        name: "softmax_cross_entropy",
        inputs: vec![uniform(&mut rng, &[2, 5, 3, 4], -3.0, 3.0)],
        build: Box::new(move |t, v| t.softmax_cross_entropy(v[0], &labels)),
    });
    let target = uniform(&mut rng, &[2, 2, 3, 3], 0.0, 1.0);
    cases.push(OpCase {
        name: "bce_with_logits",
        inputs: vec![uniform(&mut rng, &[2, 2, 3, 3], -4.0, 4.0)],
        build: Box::new(move |t, v| t.bce_with_logits(v[0], &target)),
    });
    let labels: Vec<u8> = (0..2 * 3 * 3).map(|_| rng.gen_range(0..4)).collect();
    cases.push(OpCase {
        name: "conv_relu_pool_ce",
        inputs: vec![
            uniform(&mut rng, &[2, 3, 6, 6], -1.0, 1.0),
            uniform(&mut rng, &[4, 3, 3, 3], -0.5, 0.5),
            uniform(&mut rng, &[4], -0.1, 0.1),
        ],
        build: Box::new(move |t, v| {
            let y = t.conv2d(v[0], v[1], Some(v[2]), 1, 1)?;
            let r = t.relu(y)?;
            let p = t.avg_pool(r, 2, 2)?;
            t.softmax_cross_entropy(p, &labels)
        }),
    });
    cases
}
