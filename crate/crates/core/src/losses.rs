//! Training losses on top of the tape: pixel-mean cross entropy over label
//! maps, logits-form binary cross entropy and their unit-weight sum.

use evseg_tensor::{Real, Tape, Tensor, Var};

use crate::error::{Error, Result};
use crate::labels::{LabelMap, IGNORE, NUM_CLASSES};
use crate::models::EventTarget;
use crate::repr::EventVolume;

/// Flattens a batch of equally sized label maps into N*H*W targets.
pub fn label_batch(maps: &[LabelMap]) -> Result<Vec<u8>> {
    let Some(first) = maps.first() else {
        return Err(Error::Dimension("empty label batch".into()));
    };
    let mut out = Vec::with_capacity(maps.len() * first.data().len());
    for (i, m) in maps.iter().enumerate() {
        if (m.height(), m.width()) != (first.height(), first.width()) {
            return Err(Error::Dimension(format!(
                "label map {i} is {}x{}, expected {}x{}",
                m.height(),
                m.width(),
                first.height(),
                first.width()
            )));
        }
        out.extend_from_slice(m.data());
    }
    Ok(out)
}

fn check_labels(logits: &[usize], targets: &[u8]) -> Result<()> {
    if logits.len() != 4 {
        return Err(Error::Dimension(format!("logits must be N x K x H x W, got {logits:?}")));
    }
    let (n, k, h, w) = (logits[0], logits[1], logits[2], logits[3]);
    if targets.len() != n * h * w {
        return Err(Error::Dimension(format!(
            "{} targets for logits {logits:?}",
            targets.len()
        )));
    }
    if let Some((i, &t)) = targets
        .iter()
        .enumerate()
        .find(|(_, &t)| t != IGNORE && (t as usize >= k || t as usize >= NUM_CLASSES))
    {
        let (b, p) = (i / (h * w), i % (h * w));
        return Err(Error::Validation(format!(
            "label {t} at batch {b}, x {}, y {} is not a class id or {IGNORE}",
            p % w,
            p / w
        )));
    }
    Ok(())
}

/// Cross-entropy node for `logits` against flattened targets.
pub fn ce_term<T: Real>(tape: &mut Tape<T>, logits: Var, targets: &[u8]) -> Result<Var> {
    check_labels(tape.shape(logits), targets)?;
    Ok(tape.softmax_cross_entropy(logits, targets)?)
}

/// Cross-entropy value and gradient with respect to `logits`.
pub fn ce_loss(logits: &Tensor<f64>, targets: &[LabelMap]) -> Result<(f64, Tensor<f64>)> {
    let flat = label_batch(targets)?;
    let s = logits.shape();
    if s.len() == 4 && (targets.len(), targets[0].height(), targets[0].width()) != (s[0], s[2], s[3]) {
        return Err(Error::Dimension(format!(
            "{} label maps of {}x{} for logits {s:?}",
            targets.len(),
            targets[0].height(),
            targets[0].width()
        )));
    }
    let mut tape = Tape::new();
    let z = tape.leaf(logits.clone(), true);
    let loss = ce_term(&mut tape, z, &flat)?;
    value_and_grad(&mut tape, loss, z)
}

/// Binary cross-entropy value and gradient with respect to `logits`.
pub fn bce_loss(logits: &Tensor<f64>, target: &Tensor<f64>) -> Result<(f64, Tensor<f64>)> {
    if let Some(v) = target.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Validation(format!("bce target {v} outside [0, 1]")));
    }
    let mut tape = Tape::new();
    let z = tape.leaf(logits.clone(), true);
    let loss = tape.bce_with_logits(z, target)?;
    value_and_grad(&mut tape, loss, z)
}

fn value_and_grad(tape: &mut Tape<f64>, loss: Var, wrt: Var) -> Result<(f64, Tensor<f64>)> {
    let value = tape.value(loss).item();
    let mut grads = tape.backward(loss)?;
    let g = grads
        .take(wrt)
        .unwrap_or_else(|| Tensor::zeros(tape.shape(wrt).to_vec()));
    Ok((value, g))
}

/// Supervision target for the d2s event branch from an event frame.
pub fn event_target(frame: &EventVolume, mode: EventTarget) -> Vec<f64> {
    match mode {
        EventTarget::BinaryOccupancy => frame.occupancy(),
        EventTarget::Counts => frame.saturated(),
    }
}
