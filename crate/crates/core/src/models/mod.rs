//! RGB-only, event-only, sparse-to-dense (s2d) and dense-to-sparse (d2s)
//! segmentation networks.

mod config;
mod layers;

pub use config::{
    BackboneConfig, ContextConfig, D2SConfig, EventTarget, ModelKind, NetworkConfig, S2DConfig, Scale,
};
pub use layers::SppEventMode;

use evseg_tensor::{Graph, ParamStore, Real, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use layers::{ChannelAttention, Conv, Decoder, Encoder, Spp};

#[derive(Clone, Debug)]
struct BranchLayer {
    conv3: Conv,
    gate: Conv,
    conv1: Conv,
    source: usize,
}

/// Full-resolution gated event branch of the d2s model.
#[derive(Clone, Debug)]
struct EventBranch {
    layers: Vec<BranchLayer>,
    head: Conv,
}

#[derive(Clone, Debug)]
pub struct Network<T: Real> {
    config: NetworkConfig,
    params: ParamStore<T>,
    rgb: Option<Encoder>,
    event: Option<Encoder>,
    attention: Vec<ChannelAttention>,
    branch: Option<EventBranch>,
    spp: Spp,
    decoder: Decoder,
}

/// Graph nodes produced by one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Outputs {
    /// N x classes x H x W.
    pub seg: Var,
    /// d2s only: N x {1|2} x H x W.
    pub events: Option<Var>,
}

impl<T: Real> Network<T> {
    pub fn build(config: &NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng = &mut rng;
        let mut ps = ParamStore::new();
        let bb = &config.backbone;
        let ch = bb.stage_channels;
        let strides = bb.strides();
        let ctx = &config.context;

        let rgb = if config.kind.takes_rgb() {
            Some(Encoder::new(&mut ps, "rgb", 3, &ch, &strides, bb.blocks_per_stage, rng)?)
        } else {
            None
        };
        let (event, attention) = match (&config.s2d, config.kind.takes_events()) {
            (Some(s), true) => {
                let enc = Encoder::new(&mut ps, "event", s.event_channels_in, &ch, &strides, bb.blocks_per_stage, rng)?;
                let att = if config.kind == ModelKind::S2d {
                    (0..4)
                        .map(|k| ChannelAttention::new(&mut ps, &format!("attention{}", k + 1), ch[k], s.attention_reduction, rng))
                        .collect::<Result<Vec<_>>>()?
                } else {
                    Vec::new()
                };
                (Some(enc), att)
            }
            _ => (None, Vec::new()),
        };
        let branch = match (&config.d2s, config.kind) {
            (Some(d), ModelKind::D2s) => {
                let mut layers = Vec::new();
                let mut prev = ch[0];
                for (k, &c) in d.event_branch_channels.iter().enumerate() {
                    let name = format!("branch.layer{}", k + 1);
                    let source = d.gate_source_stages[k];
                    layers.push(BranchLayer {
                        conv3: Conv::new(&mut ps, &format!("{name}.conv3"), prev, c, 3, 1, rng)?,
                        gate: Conv::new(&mut ps, &format!("{name}.gate"), ch[source], c, 1, 1, rng)?,
                        conv1: Conv::new(&mut ps, &format!("{name}.conv1"), c, c, 1, 1, rng)?,
                        source,
                    });
                    prev = c;
                }
                let head = Conv::new(&mut ps, "branch.head", prev, d.target_channels, 1, 1, rng)?;
                Some(EventBranch { layers, head })
            }
            _ => None,
        };
        let spp_event = match config.kind {
            ModelKind::S2d => Some(ch[3]),
            ModelKind::D2s => config.d2s.as_ref().map(|d| d.event_branch_channels[3]),
            _ => None,
        };
        let spp = Spp::new(&mut ps, ch[3], ctx.spp_width, &ctx.spp_pool_sizes, spp_event, ctx.spp_event_mode, rng)?;
        let decoder = Decoder::new(&mut ps, ctx.decoder_width, [ch[2], ch[1], ch[0]], config.num_classes, rng)?;
        Ok(Self {
            config: config.clone(),
            params: ps,
            rgb,
            event,
            attention,
            branch,
            spp,
            decoder,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Replace every parameter with the same-named tensor from `other`.
    pub fn load_params(&mut self, other: &ParamStore<T>) -> Result<()> {
        for id in self.params.ids().collect::<Vec<_>>() {
            let name = self.params.name(id).to_string();
            let src = other
                .id(&name)
                .map(|i| other.get(i))
                .ok_or_else(|| Error::Config(format!("missing parameter {name}")))?;
            if src.shape() != self.params.get(id).shape() {
                return Err(Error::Dimension(format!(
                    "parameter {name}: expected {:?}, got {:?}",
                    self.params.get(id).shape(),
                    src.shape()
                )));
            }
            *self.params.get_mut(id) = src.clone();
        }
        if other.len() != self.params.len() {
            return Err(Error::Config(format!(
                "parameter count mismatch: expected {}, got {}",
                self.params.len(),
                other.len()
            )));
        }
        Ok(())
    }

    /// Build the forward graph. `rgb` is N x 3 x H x W, `events` is
    /// N x B x H x W; which of the two are needed depends on the model kind.
    pub fn forward(&self, g: &mut Graph<T>, rgb: Option<Var>, events: Option<Var>) -> Result<Outputs> {
        let (primary, need_rgb) = match self.config.kind {
            ModelKind::EventOnly => (events, false),
            _ => (rgb, true),
        };
        let x = primary.ok_or_else(|| {
            Error::Config(format!(
                "model {} needs {} input",
                self.config.kind.name(),
                if need_rgb { "an RGB" } else { "an event" }
            ))
        })?;
        let shape = g.tape.shape(x).to_vec();
        if shape.len() != 4 {
            return Err(Error::Dimension(format!("input must be N x C x H x W, got {shape:?}")));
        }
        let (n, h, w) = (shape[0], shape[2], shape[3]);
        let os = self.config.backbone.output_stride();
        if h % os != 0 || w % os != 0 {
            return Err(Error::Dimension(format!(
                "input size {h}x{w} must be divisible by {os}"
            )));
        }

        match self.config.kind {
            ModelKind::RgbOnly => self.single(g, self.rgb.as_ref(), x, (h, w)),
            ModelKind::EventOnly => self.single(g, self.event.as_ref(), x, (h, w)),
            ModelKind::S2d => {
                let ev = events.ok_or_else(|| Error::Config("model s2d needs an event input".into()))?;
                let es = g.tape.shape(ev).to_vec();
                let want = self.config.s2d.as_ref().map_or(0, |s| s.event_channels_in);
                if es != [n, want, h, w] {
                    return Err(Error::Dimension(format!(
                        "event input must be {:?}, got {es:?}",
                        [n, want, h, w]
                    )));
                }
                self.s2d(g, x, ev, (h, w))
            }
            ModelKind::D2s => self.d2s(g, x, (h, w)),
        }
    }

    fn single(&self, g: &mut Graph<T>, enc: Option<&Encoder>, x: Var, size: (usize, usize)) -> Result<Outputs> {
        let enc = enc.expect("encoder present for kind");
        let mut f = enc.stem(g, x)?.pooled;
        let mut feats = Vec::with_capacity(4);
        for k in 0..4 {
            f = enc.stage(g, k, f)?;
            feats.push(f);
        }
        let ctx = self.spp.forward(g, feats[3], None)?;
        let seg = self.decoder.forward(g, ctx, [feats[2], feats[1], feats[0]], size)?;
        Ok(Outputs { seg, events: None })
    }

    fn s2d(&self, g: &mut Graph<T>, x: Var, ev: Var, size: (usize, usize)) -> Result<Outputs> {
        let rgb = self.rgb.as_ref().expect("rgb encoder");
        let eve = self.event.as_ref().expect("event encoder");
        let mut r = rgb.stem(g, x)?.pooled;
        let mut e = eve.stem(g, ev)?.pooled;
        let mut feats = Vec::with_capacity(4);
        for k in 0..4 {
            r = rgb.stage(g, k, r)?;
            e = eve.stage(g, k, e)?;
            let emphasized = self.attention[k].forward(g, e)?;
            r = g.tape.add(r, emphasized)?;
            feats.push(r);
        }
        let ctx = self.spp.forward(g, feats[3], Some(e))?;
        let seg = self.decoder.forward(g, ctx, [feats[2], feats[1], feats[0]], size)?;
        Ok(Outputs { seg, events: None })
    }

    fn d2s(&self, g: &mut Graph<T>, x: Var, (h, w): (usize, usize)) -> Result<Outputs> {
        let rgb = self.rgb.as_ref().expect("rgb encoder");
        let branch = self.branch.as_ref().expect("event branch");
        let stem = rgb.stem(g, x)?;
        let mut r = stem.pooled;
        let mut feats = Vec::with_capacity(4);
        for k in 0..4 {
            r = rgb.stage(g, k, r)?;
            feats.push(r);
        }

        let mut e = g.tape.upsample_bilinear(stem.conv, h, w)?;
        for layer in &branch.layers {
            let a = layer.conv3.forward_relu(g, e)?;
            // A 1x1 conv commutes with bilinear resizing, so project first
            // and upsample the narrower tensor.
            let gl = layer.gate.forward(g, feats[layer.source])?;
            let gl = g.tape.upsample_bilinear(gl, h, w)?;
            let gate = g.tape.sigmoid(gl)?;
            let gated = g.tape.mul(a, gate)?;
            e = layer.conv1.forward_relu(g, gated)?;
        }
        let events = branch.head.forward(g, e)?;

        let (sh, sw) = (g.tape.shape(feats[3])[2], g.tape.shape(feats[3])[3]);
        let pooled = g.tape.adaptive_avg_pool(e, sh, sw)?;
        let ctx = self.spp.forward(g, feats[3], Some(pooled))?;
        let seg = self.decoder.forward(g, ctx, [feats[2], feats[1], feats[0]], (h, w))?;
        Ok(Outputs { seg, events: Some(events) })
    }

    /// Inference without gradient tracking; returns seg logits and, for d2s,
    /// event logits.
    pub fn predict(&self, rgb: Option<&Tensor<T>>, events: Option<&Tensor<T>>) -> Result<(Tensor<T>, Option<Tensor<T>>)> {
        let mut g = Graph::new(&self.params, false);
        let r = rgb.map(|t| g.input(t.clone()));
        let e = events.map(|t| g.input(t.clone()));
        let out = self.forward(&mut g, r, e)?;
        let seg = g.tape.value(out.seg).clone();
        let ev = out.events.map(|v| g.tape.value(v).clone());
        Ok((seg, ev))
    }
}

/// Per-pixel argmax over the class axis of N x K x H x W logits; the first
/// maximal class wins ties. Returns N*H*W labels in row-major order.
pub fn argmax_labels<T: Real>(logits: &Tensor<T>) -> Result<Vec<u8>> {
    let s = logits.shape();
    if s.len() != 4 || s[1] > 256 {
        return Err(Error::Dimension(format!("expected N x K x H x W logits, got {s:?}")));
    }
    let (n, k, hw) = (s[0], s[1], s[2] * s[3]);
    let d = logits.data();
    let mut out = Vec::with_capacity(n * hw);
    for b in 0..n {
        let base = b * k * hw;
        for p in 0..hw {
            let mut best = 0;
            let mut best_v = d[base + p];
            for c in 1..k {
                let v = d[base + c * hw + p];
                if v > best_v {
                    best = c;
                    best_v = v;
                }
            }
            out.push(best as u8);
        }
    }
    Ok(out)
}
