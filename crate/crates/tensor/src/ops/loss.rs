use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::Tensor;

pub const IGNORE_LABEL: u8 = 255;

/// Mean pixel-wise softmax cross entropy.
///
/// Returns the loss, the softmax probabilities (for the backward pass) and
/// the number of non-ignored pixels. With no valid pixel the loss is 0.
pub(crate) fn softmax_ce<T: Real>(
    logits: &Tensor<T>,
    targets: &[u8],
) -> Result<(T, Tensor<T>, usize)> {
    let (n, k, h, w) = logits.dims4()?;
    let plane = h * w;
    if targets.len() != n * plane {
        return Err(TensorError::Dimension(format!(
            "cross entropy: {} targets for logits {:?}",
            targets.len(),
            logits.shape()
        )));
    }
    if let Some((i, &t)) = targets
        .iter()
        .enumerate()
        .find(|(_, &t)| t != IGNORE_LABEL && t as usize >= k)
    {
        return Err(TensorError::Value(format!(
            "cross entropy: label {t} at index {i} outside 0..{k} and not ignore"
        )));
    }
    let x = logits.data();
    let mut probs = vec![T::zero(); x.len()];
    let mut total = 0.0f64;
    let mut count = 0usize;
    for b in 0..n {
        let base = b * k * plane;
        for p in 0..plane {
            let mut max = x[base + p];
            for c in 1..k {
                max = max.max(x[base + c * plane + p]);
            }
            let mut z = T::zero();
            for c in 0..k {
                let e = (x[base + c * plane + p] - max).exp();
                probs[base + c * plane + p] = e;
                z += e;
            }
            for c in 0..k {
                probs[base + c * plane + p] = probs[base + c * plane + p] / z;
            }
            let t = targets[b * plane + p];
            if t != IGNORE_LABEL {
                let logit = x[base + t as usize * plane + p];
                total += (z.ln() + max - logit).as_f64();
                count += 1;
            }
        }
    }
    let loss = if count == 0 { 0.0 } else { total / count as f64 };
    Ok((T::of(loss), Tensor::from_parts(logits.shape().to_vec(), probs), count))
}

pub(crate) fn softmax_ce_backward<T: Real>(
    probs: &Tensor<T>,
    targets: &[u8],
    count: usize,
    upstream: T,
) -> Tensor<T> {
    let shape = probs.shape();
    let (k, plane) = (shape[1], shape[2] * shape[3]);
    let mut grad = vec![T::zero(); probs.numel()];
    if count == 0 {
        return Tensor::from_parts(shape.to_vec(), grad);
    }
    let scale = upstream / T::of(count as f64);
    let p = probs.data();
    for (i, &t) in targets.iter().enumerate() {
        if t == IGNORE_LABEL {
            continue;
        }
        let (b, px) = (i / plane, i % plane);
        let base = b * k * plane + px;
        for c in 0..k {
            let onehot = if c == t as usize { T::one() } else { T::zero() };
            grad[base + c * plane] = (p[base + c * plane] - onehot) * scale;
        }
    }
    Tensor::from_parts(shape.to_vec(), grad)
}

/// Mean binary cross entropy on logits, in the overflow-free form
/// `max(z, 0) - z t + ln(1 + exp(-|z|))`.
pub(crate) fn bce_with_logits<T: Real>(logits: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    if logits.shape() != target.shape() {
        return Err(TensorError::Dimension(format!(
            "bce: logits {:?} vs target {:?}",
            logits.shape(),
            target.shape()
        )));
    }
    if let Some(v) = target
        .data()
        .iter()
        .find(|v| !(v.as_f64() >= 0.0 && v.as_f64() <= 1.0))
    {
        return Err(TensorError::Value(format!(
            "bce: target value {v} outside [0, 1]"
        )));
    }
    let total: f64 = logits
        .data()
        .iter()
        .zip(target.data())
        .map(|(&z, &t)| {
            let (z, t) = (z.as_f64(), t.as_f64());
            z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
        })
        .sum();
    Ok(T::of(total / logits.numel() as f64))
}

pub(crate) fn bce_with_logits_backward<T: Real>(
    logits: &Tensor<T>,
    target: &Tensor<T>,
    upstream: T,
) -> Tensor<T> {
    let scale = upstream / T::of(logits.numel() as f64);
    let data = logits
        .data()
        .iter()
        .zip(target.data())
        .map(|(&z, &t)| (sigmoid(z) - t) * scale)
        .collect();
    Tensor::from_parts(logits.shape().to_vec(), data)
}

pub(crate) fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}
