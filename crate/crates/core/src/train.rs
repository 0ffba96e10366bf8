//! One optimisation step and evaluation helpers shared by the CLI and the
//! experiment harness.

use evseg_tensor::{Graph, Real, Sgd, Tensor, Var};

use crate::error::{Error, Result};
use crate::events::EventStream;
use crate::image::Image;
use crate::labels::LabelMap;
use crate::losses::{ce_term, event_target};
use crate::metrics::ConfusionMatrix;
use crate::models::{argmax_labels, EventTarget, ModelKind, Network};
use crate::repr::{represent, EventVolume, ReprConfig};

/// A mini-batch. Labels are N*H*W trainIds in row-major order.
#[derive(Clone, Debug)]
pub struct Batch<T: Real> {
    pub rgb: Option<Tensor<T>>,
    pub events: Option<Tensor<T>>,
    pub labels: Vec<u8>,
    /// d2s supervision, N x {1|2} x H x W in [0, 1].
    pub event_target: Option<Tensor<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub ce_weight: f64,
    pub bce_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            ce_weight: 1.0,
            bce_weight: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub ce: f64,
    pub bce: Option<f64>,
    pub total: f64,
}

/// Loss nodes of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub ce: Var,
    pub bce: Option<Var>,
    pub total: Var,
}

fn weighted<T: Real>(g: &mut Graph<T>, v: Var, w: f64) -> Result<Var> {
    if w == 1.0 {
        Ok(v)
    } else {
        Ok(g.tape.mul_scalar(v, T::of(w))?)
    }
}

/// Forward pass plus the training objective: cross entropy for every model,
/// plus binary cross entropy on the event logits for d2s.
pub fn build_losses<T: Real>(
    net: &Network<T>,
    g: &mut Graph<T>,
    batch: &Batch<T>,
    cfg: &LossConfig,
) -> Result<LossNodes> {
    let rgb = batch.rgb.as_ref().map(|t| g.input(t.clone()));
    let events = batch.events.as_ref().map(|t| g.input(t.clone()));
    let out = net.forward(g, rgb, events)?;
    let ce = ce_term(&mut g.tape, out.seg, &batch.labels)?;
    let mut total = weighted(g, ce, cfg.ce_weight)?;
    let mut bce = None;
    if net.kind() == ModelKind::D2s {
        let target = batch
            .event_target
            .as_ref()
            .ok_or_else(|| Error::Config("d2s training needs an event target".into()))?;
        let logits = out.events.expect("d2s emits event logits");
        if let Some(v) = target.data().iter().find(|v| !(v.as_f64() >= 0.0 && v.as_f64() <= 1.0)) {
            return Err(Error::Validation(format!("event target {v} outside [0, 1]")));
        }
        let b = g.tape.bce_with_logits(logits, target)?;
        let wb = weighted(g, b, cfg.bce_weight)?;
        total = g.tape.add(total, wb)?;
        bce = Some(b);
    }
    Ok(LossNodes { ce, bce, total })
}

fn finite_or(value: f64, term: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numeric(format!("{term} loss is {value}")))
    }
}

/// Forward, backward and one SGD update. A non-finite loss term aborts the
/// step before any parameter changes.
pub fn train_step<T: Real>(
    net: &mut Network<T>,
    batch: &Batch<T>,
    opt: &mut Sgd<T>,
    cfg: &LossConfig,
) -> Result<StepLosses> {
    let (losses, grads) = {
        let mut g = Graph::new(net.params(), true);
        g.tape.set_check_finite(false);
        let nodes = build_losses(net, &mut g, batch, cfg)?;
        let ce = finite_or(g.tape.value(nodes.ce).item().as_f64(), "cross-entropy")?;
        let bce = nodes
            .bce
            .map(|b| finite_or(g.tape.value(b).item().as_f64(), "binary cross-entropy"))
            .transpose()?;
        let total = finite_or(g.tape.value(nodes.total).item().as_f64(), "total")?;
        let mut grads = g.tape.backward(nodes.total)?;
        let pg = g.param_grads(&mut grads);
        if let Some((i, _)) = pg
            .iter()
            .enumerate()
            .find(|(_, t)| t.as_ref().is_some_and(|t| !t.is_finite()))
        {
            let name = net.params().name(net.params().ids().nth(i).expect("aligned ids"));
            return Err(Error::Numeric(format!("gradient of {name} is not finite")));
        }
        (StepLosses { ce, bce, total }, pg)
    };
    opt.step(net.params_mut(), &grads);
    Ok(losses)
}

/// Adds the argmax predictions of `net` on `batch` to `cm`.
pub fn evaluate_batch<T: Real>(net: &Network<T>, batch: &Batch<T>, cm: &ConfusionMatrix) -> Result<ConfusionMatrix> {
    let (seg, _) = net.predict(batch.rgb.as_ref(), batch.events.as_ref())?;
    let pred = argmax_labels(&seg)?;
    let mut out = cm.clone();
    out.add_pixels(&pred, &batch.labels)?;
    Ok(out)
}

/// N x 3 x H x W tensor from RGB images, centred as `2 x - 1`.
pub fn rgb_tensor<T: Real>(images: &[&Image]) -> Result<Tensor<T>> {
    let first = images.first().ok_or_else(|| Error::Dimension("empty image batch".into()))?;
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        if (img.height(), img.width(), img.channels()) != (h, w, 3) {
            return Err(Error::Dimension(format!(
                "image {}x{}x{} in a batch of {h}x{w}x3",
                img.height(),
                img.width(),
                img.channels()
            )));
        }
        data.extend(img.to_planar().into_iter().map(|v| T::of(2.0 * v - 1.0)));
    }
    Ok(Tensor::new(vec![images.len(), 3, h, w], data)?)
}

/// N x B x H x W tensor from event volumes, compressed as `ln(1 + v)`.
pub fn event_tensor<T: Real>(volumes: &[&EventVolume]) -> Result<Tensor<T>> {
    stack_volumes(volumes, |v| v.data().iter().map(|&x| x.max(0.0).ln_1p()).collect())
}

/// d2s supervision tensor from event frames.
pub fn event_target_tensor<T: Real>(frames: &[&EventVolume], mode: EventTarget) -> Result<Tensor<T>> {
    stack_volumes(frames, |v| event_target(v, mode))
}

fn stack_volumes<T: Real>(volumes: &[&EventVolume], f: impl Fn(&EventVolume) -> Vec<f64>) -> Result<Tensor<T>> {
    let first = volumes.first().ok_or_else(|| Error::Dimension("empty event batch".into()))?;
    let shape = first.shape();
    let mut data = Vec::with_capacity(volumes.len() * shape.iter().product::<usize>());
    for v in volumes {
        if v.shape() != shape {
            return Err(Error::Dimension(format!("event volume {:?} in a batch of {shape:?}", v.shape())));
        }
        data.extend(f(v).into_iter().map(T::of));
    }
    Ok(Tensor::new(vec![volumes.len(), shape[0], shape[1], shape[2]], data)?)
}

/// Pre-computed network inputs for one labelled frame.
#[derive(Clone, Debug)]
pub struct Example {
    pub rgb: Image,
    pub label: LabelMap,
    /// Model input representation (s2d, event-only).
    pub events: Option<EventVolume>,
    /// d2s supervision frame.
    pub target: Option<EventVolume>,
}

impl Example {
    /// Builds the representation(s) `kind` needs from a raw event stream.
    pub fn prepare(
        rgb: Image,
        label: LabelMap,
        stream: &EventStream,
        kind: ModelKind,
        repr: Option<&ReprConfig>,
    ) -> Result<Self> {
        let (mut events, mut target) = (None, None);
        match (kind, repr) {
            (ModelKind::RgbOnly, _) => {}
            (ModelKind::D2s, Some(r)) => target = Some(represent(stream, r)?),
            (_, Some(r)) => events = Some(represent(stream, r)?),
            (k, None) => {
                return Err(Error::Config(format!("model {} needs an event representation", k.name())))
            }
        }
        Ok(Self {
            rgb,
            label,
            events,
            target,
        })
    }
}

/// Stacks examples into a batch for `kind`.
pub fn make_batch<T: Real>(examples: &[&Example], kind: ModelKind, target: EventTarget) -> Result<Batch<T>> {
    let rgb = if kind.takes_rgb() {
        Some(rgb_tensor(&examples.iter().map(|e| &e.rgb).collect::<Vec<_>>())?)
    } else {
        None
    };
    let gather = |f: fn(&Example) -> Option<&EventVolume>, what: &str| {
        examples
            .iter()
            .map(|e| f(e).ok_or_else(|| Error::Config(format!("example lacks {what}"))))
            .collect::<Result<Vec<_>>>()
    };
    let events = if kind.takes_events() {
        Some(event_tensor(&gather(|e| e.events.as_ref(), "an event representation")?)?)
    } else {
        None
    };
    let event_target = if kind == ModelKind::D2s {
        Some(event_target_tensor(&gather(|e| e.target.as_ref(), "an event target")?, target)?)
    } else {
        None
    };
    let labels = examples.iter().flat_map(|e| e.label.data().iter().copied()).collect();
    Ok(Batch {
        rgb,
        events,
        labels,
        event_target,
    })
}
