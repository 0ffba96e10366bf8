//! Parameterised building blocks shared by all model variants.

use evseg_tensor::{kaiming_uniform, Graph, ParamId, ParamStore, Real, Tensor, Var};
use rand::Rng;

use crate::error::Result;

#[derive(Clone, Debug)]
pub struct Conv {
    pub(crate) w: ParamId,
    pub(crate) b: ParamId,
    stride: usize,
    pad: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real>(
        ps: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w = ps.add(
            format!("{name}.weight"),
            kaiming_uniform(&[cout, cin, kernel, kernel], cin * kernel * kernel, rng),
        )?;
        let b = ps.add(format!("{name}.bias"), Tensor::zeros(vec![cout]))?;
        Ok(Self {
            w,
            b,
            stride,
            pad: kernel / 2,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let (w, b) = (g.param(self.w), g.param(self.b));
        Ok(g.tape.conv2d(x, w, Some(b), self.stride, self.pad)?)
    }

    pub fn forward_relu<T: Real>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let y = self.forward(g, x)?;
        Ok(g.tape.relu(y)?)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    pub fn new<T: Real>(
        ps: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w = ps.add(format!("{name}.weight"), kaiming_uniform(&[cout, cin], cin, rng))?;
        let b = ps.add(format!("{name}.bias"), Tensor::zeros(vec![cout]))?;
        Ok(Self { w, b })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let (w, b) = (g.param(self.w), g.param(self.b));
        Ok(g.tape.linear(x, w, Some(b))?)
    }
}

/// Two 3x3 convolutions with an identity or 1x1-projected shortcut.
#[derive(Clone, Debug)]
pub struct BasicBlock {
    conv1: Conv,
    conv2: Conv,
    proj: Option<Conv>,
}

impl BasicBlock {
    pub fn new<T: Real>(
        ps: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let conv1 = Conv::new(ps, &format!("{name}.conv1"), cin, cout, 3, stride, rng)?;
        let conv2 = Conv::new(ps, &format!("{name}.conv2"), cout, cout, 3, 1, rng)?;
        let proj = if stride != 1 || cin != cout {
            Some(Conv::new(ps, &format!("{name}.proj"), cin, cout, 1, stride, rng)?)
        } else {
            None
        };
        Ok(Self { conv1, conv2, proj })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let y = self.conv1.forward_relu(g, x)?;
        let y = self.conv2.forward(g, y)?;
        let skip = match &self.proj {
            Some(p) => p.forward(g, x)?,
            None => x,
        };
        let sum = g.tape.add(y, skip)?;
        Ok(g.tape.relu(sum)?)
    }
}

/// ResNet-shaped encoder: a stride-2 3x3 stem conv, 2x2 max pooling, then
/// four stages of basic blocks.
#[derive(Clone, Debug)]
pub struct Encoder {
    stem: Conv,
    stages: Vec<Vec<BasicBlock>>,
}

pub struct StemOutput {
    /// Stem convolution output at 1/2 resolution.
    pub conv: Var,
    /// After max pooling, at 1/4 resolution.
    pub pooled: Var,
}

impl Encoder {
    pub fn new<T: Real>(
        ps: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        channels: &[usize; 4],
        strides: &[usize; 4],
        blocks: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let stem = Conv::new(ps, &format!("{name}.stem"), cin, channels[0], 3, 2, rng)?;
        let mut stages = Vec::with_capacity(4);
        let mut prev = channels[0];
        for (k, (&c, &s)) in channels.iter().zip(strides).enumerate() {
            let mut stage = Vec::with_capacity(blocks);
            for b in 0..blocks {
                let (cin, stride) = if b == 0 { (prev, s) } else { (c, 1) };
                stage.push(BasicBlock::new(
                    ps,
                    &format!("{name}.stage{}.block{b}", k + 1),
                    cin,
                    c,
                    stride,
                    rng,
                )?);
            }
            prev = c;
            stages.push(stage);
        }
        Ok(Self { stem, stages })
    }

    pub fn stem<T: Real>(&self, g: &mut Graph<T>, x: Var) -> Result<StemOutput> {
        let conv = self.stem.forward_relu(g, x)?;
        let pooled = g.tape.max_pool(conv, 2, 2)?;
        Ok(StemOutput { conv, pooled })
    }

    pub fn stage<T: Real>(&self, g: &mut Graph<T>, k: usize, mut x: Var) -> Result<Var> {
        for block in &self.stages[k] {
            x = block.forward(g, x)?;
        }
        Ok(x)
    }
}

/// Squeeze-excitation channel attention:
/// `sigmoid(fc2(relu(fc1(gap(x)))))` as per-channel gains.
#[derive(Clone, Debug)]
pub struct ChannelAttention {
    fc1: Linear,
    fc2: Linear,
}

impl ChannelAttention {
    pub fn new<T: Real>(
        ps: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        reduction: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let hidden = (channels / reduction.max(1)).max(1);
        Ok(Self {
            fc1: Linear::new(ps, &format!("{name}.fc1"), channels, hidden, rng)?,
            fc2: Linear::new(ps, &format!("{name}.fc2"), hidden, channels, rng)?,
        })
    }

    pub fn gains<T: Real>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let s = g.tape.global_avg_pool(x)?;
        let h = self.fc1.forward(g, s)?;
        let h = g.tape.relu(h)?;
        let e = self.fc2.forward(g, h)?;
        Ok(g.tape.sigmoid(e)?)
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let gains = self.gains(g, x)?;
        Ok(g.tape.scale_channels(x, gains)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SppEventMode {
    /// Event stream concatenated with the pyramid levels before the fusion conv.
    Inside,
    /// Event stream concatenated with the fused pyramid output.
    After,
}

/// Pyramid pooling context module with an optional extra event stream.
#[derive(Clone, Debug)]
pub struct Spp {
    reduce: Conv,
    levels: Vec<(usize, Conv)>,
    event_proj: Option<Conv>,
    fuse: Conv,
    after: Option<Conv>,
}

impl Spp {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real>(
        ps: &mut ParamStore<T>,
        cin: usize,
        width: usize,
        pool_sizes: &[usize],
        event_channels: Option<usize>,
        mode: SppEventMode,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let reduce = Conv::new(ps, "spp.reduce", cin, width, 1, 1, rng)?;
        let level_width = (width / pool_sizes.len().max(1)).max(1);
        let levels = pool_sizes
            .iter()
            .map(|&s| Ok((s, Conv::new(ps, &format!("spp.level{s}"), width, level_width, 1, 1, rng)?)))
            .collect::<Result<Vec<_>>>()?;
        let event_proj = event_channels
            .map(|c| Conv::new(ps, "spp.event", c, level_width, 1, 1, rng))
            .transpose()?;
        let pyramid = width + level_width * pool_sizes.len();
        let (fuse_in, after) = match (event_proj.is_some(), mode) {
            (true, SppEventMode::Inside) => (pyramid + level_width, None),
            (true, SppEventMode::After) => (
                pyramid,
                Some(Conv::new(ps, "spp.after", width + level_width, width, 1, 1, rng)?),
            ),
            (false, _) => (pyramid, None),
        };
        let fuse = Conv::new(ps, "spp.fuse", fuse_in, width, 1, 1, rng)?;
        Ok(Self {
            reduce,
            levels,
            event_proj,
            fuse,
            after,
        })
    }

    /// `event` must already be at the spatial size of `x`.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, x: Var, event: Option<Var>) -> Result<Var> {
        let base = self.reduce.forward_relu(g, x)?;
        let (h, w) = (g.tape.shape(base)[2], g.tape.shape(base)[3]);
        let mut parts = vec![base];
        for (size, conv) in &self.levels {
            let p = g.tape.adaptive_avg_pool(base, *size, *size)?;
            let p = conv.forward_relu(g, p)?;
            parts.push(g.tape.upsample_bilinear(p, h, w)?);
        }
        let ev = match (&self.event_proj, event) {
            (Some(proj), Some(e)) => Some(proj.forward_relu(g, e)?),
            _ => None,
        };
        match (&self.after, ev) {
            (Some(after), Some(ev)) => {
                let cat = g.tape.concat(&parts)?;
                let fused = self.fuse.forward_relu(g, cat)?;
                let cat = g.tape.concat(&[fused, ev])?;
                after.forward_relu(g, cat)
            }
            (None, ev) => {
                parts.extend(ev);
                let cat = g.tape.concat(&parts)?;
                self.fuse.forward_relu(g, cat)
            }
            (Some(_), None) => unreachable!("event projection exists whenever the after-conv does"),
        }
    }
}

/// Three upsampling modules, each adding a 1x1-projected skip feature and
/// blending with a 3x3 conv, followed by the 1x1 classifier.
#[derive(Clone, Debug)]
pub struct Decoder {
    skips: Vec<Conv>,
    blends: Vec<Conv>,
    pub(crate) head: Conv,
}

impl Decoder {
    /// `skip_channels` lists the skip features from deepest to shallowest.
    pub fn new<T: Real>(
        ps: &mut ParamStore<T>,
        width: usize,
        skip_channels: [usize; 3],
        num_classes: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut skips = Vec::new();
        let mut blends = Vec::new();
        for (i, &c) in skip_channels.iter().enumerate() {
            skips.push(Conv::new(ps, &format!("decoder.up{}.skip", i + 1), c, width, 1, 1, rng)?);
            blends.push(Conv::new(ps, &format!("decoder.up{}.blend", i + 1), width, width, 3, 1, rng)?);
        }
        // Zero classifier: training starts from uniform class scores.
        let head = Conv::new(ps, "decoder.head", width, num_classes, 1, 1, rng)?;
        let zero = Tensor::zeros(ps.get(head.w).shape().to_vec());
        *ps.get_mut(head.w) = zero;
        Ok(Self { skips, blends, head })
    }

    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        mut x: Var,
        skips: [Var; 3],
        out_size: (usize, usize),
    ) -> Result<Var> {
        for ((proj, blend), skip) in self.skips.iter().zip(&self.blends).zip(skips) {
            let (h, w) = (g.tape.shape(skip)[2], g.tape.shape(skip)[3]);
            let up = g.tape.upsample_bilinear(x, h, w)?;
            let s = proj.forward(g, skip)?;
            let merged = g.tape.add(up, s)?;
            x = blend.forward_relu(g, merged)?;
        }
        let logits = self.head.forward(g, x)?;
        Ok(g.tape.upsample_bilinear(logits, out_size.0, out_size.1)?)
    }
}
