use serde::{Deserialize, Serialize};

use super::layers::SppEventMode;
use crate::error::{Error, Result};
use crate::labels::NUM_CLASSES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[serde(alias = "rgb")]
    RgbOnly,
    #[serde(alias = "event")]
    EventOnly,
    S2d,
    D2s,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [Self::RgbOnly, Self::EventOnly, Self::S2d, Self::D2s];

    pub fn name(self) -> &'static str {
        match self {
            Self::RgbOnly => "rgb",
            Self::EventOnly => "event",
            Self::S2d => "s2d",
            Self::D2s => "d2s",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rgb" | "rgb_only" => Ok(Self::RgbOnly),
            "event" | "event_only" => Ok(Self::EventOnly),
            "s2d" => Ok(Self::S2d),
            "d2s" => Ok(Self::D2s),
            _ => Err(Error::Config(format!("unknown model kind {s:?}"))),
        }
    }

    /// Whether the network consumes an event tensor at inference time.
    pub fn takes_events(self) -> bool {
        matches!(self, Self::EventOnly | Self::S2d)
    }

    pub fn takes_rgb(self) -> bool {
        !matches!(self, Self::EventOnly)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Toy,
    Paper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub stage_channels: [usize; 4],
    /// Cumulative downsampling factor at the output of each stage.
    pub stage_downsample: [usize; 4],
    pub blocks_per_stage: usize,
}

impl BackboneConfig {
    pub fn paper() -> Self {
        Self {
            stage_channels: [64, 128, 256, 512],
            stage_downsample: [4, 8, 16, 32],
            blocks_per_stage: 2,
        }
    }

    pub fn toy() -> Self {
        Self {
            stage_channels: [8, 16, 32, 64],
            stage_downsample: [4, 8, 16, 32],
            blocks_per_stage: 1,
        }
    }

    pub fn for_scale(scale: Scale) -> Self {
        match scale {
            Scale::Toy => Self::toy(),
            Scale::Paper => Self::paper(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.contains(&0) {
            return Err(Error::Config("stage channels must be >= 1".into()));
        }
        if self.blocks_per_stage == 0 {
            return Err(Error::Config("blocks_per_stage must be >= 1".into()));
        }
        let ds = &self.stage_downsample;
        if ds[0] < 4 || !ds[0].is_multiple_of(4) {
            return Err(Error::Config(format!(
                "first stage downsample must be a multiple of 4, got {}",
                ds[0]
            )));
        }
        for k in 1..4 {
            if ds[k] <= ds[k - 1] || !ds[k].is_multiple_of(ds[k - 1]) {
                return Err(Error::Config(format!(
                    "stage downsample factors must strictly increase by integer ratios: {ds:?}"
                )));
            }
        }
        Ok(())
    }

    /// Per-stage strides; the stem contributes the first factor of 4.
    pub fn strides(&self) -> [usize; 4] {
        let ds = &self.stage_downsample;
        [ds[0] / 4, ds[1] / ds[0], ds[2] / ds[1], ds[3] / ds[2]]
    }

    pub fn output_stride(&self) -> usize {
        self.stage_downsample[3]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextConfig {
    pub spp_width: usize,
    pub spp_pool_sizes: Vec<usize>,
    pub spp_event_mode: SppEventMode,
    pub decoder_width: usize,
}

impl ContextConfig {
    pub fn paper() -> Self {
        Self {
            spp_width: 128,
            spp_pool_sizes: vec![1, 2, 3, 6],
            spp_event_mode: SppEventMode::Inside,
            decoder_width: 128,
        }
    }

    pub fn toy() -> Self {
        Self {
            spp_width: 16,
            spp_pool_sizes: vec![1, 2],
            spp_event_mode: SppEventMode::Inside,
            decoder_width: 16,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.spp_width == 0 || self.decoder_width == 0 {
            return Err(Error::Config("context widths must be >= 1".into()));
        }
        if self.spp_pool_sizes.is_empty() || self.spp_pool_sizes.contains(&0) {
            return Err(Error::Config("spp pool sizes must be a non-empty list of positive sizes".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct S2DConfig {
    /// Channels of the event representation fed to the event encoder.
    pub event_channels_in: usize,
    pub attention_reduction: usize,
    /// Event encoder widths; `None` mirrors the RGB backbone.
    #[serde(default)]
    pub event_stage_channels: Option<[usize; 4]>,
}

impl S2DConfig {
    pub fn new(event_channels_in: usize) -> Self {
        Self {
            event_channels_in,
            attention_reduction: 4,
            event_stage_channels: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventTarget {
    /// 1 where a pixel saw at least one event of that polarity.
    BinaryOccupancy,
    /// `1 - exp(-count)`.
    Counts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct D2SConfig {
    pub event_branch_channels: [usize; 4],
    /// RGB stage (0-based) whose features drive each branch gate.
    pub gate_source_stages: [usize; 4],
    pub event_target: EventTarget,
    /// 1 for positive-only targets, 2 for both polarities.
    pub target_channels: usize,
}

impl D2SConfig {
    pub fn paper(target_channels: usize) -> Self {
        Self {
            event_branch_channels: [64, 32, 16, 8],
            gate_source_stages: [0, 1, 2, 3],
            event_target: EventTarget::BinaryOccupancy,
            target_channels,
        }
    }

    pub fn toy(target_channels: usize) -> Self {
        Self {
            event_branch_channels: [64, 32, 16, 8],
            ..Self::paper(target_channels)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub kind: ModelKind,
    pub num_classes: usize,
    pub backbone: BackboneConfig,
    pub context: ContextConfig,
    /// Required for `event_only` and `s2d`.
    #[serde(default)]
    pub s2d: Option<S2DConfig>,
    /// Required for `d2s`.
    #[serde(default)]
    pub d2s: Option<D2SConfig>,
}

impl NetworkConfig {
    /// Default configuration for `kind`. `event_channels` is the channel
    /// count of the event representation: the input width for event-driven
    /// models and the supervision target width for `d2s`.
    pub fn new(kind: ModelKind, event_channels: usize, scale: Scale) -> Self {
        let (context, d2s) = match scale {
            Scale::Toy => (ContextConfig::toy(), D2SConfig::toy(event_channels)),
            Scale::Paper => (ContextConfig::paper(), D2SConfig::paper(event_channels)),
        };
        Self {
            kind,
            num_classes: NUM_CLASSES,
            backbone: BackboneConfig::for_scale(scale),
            context,
            s2d: kind.takes_events().then(|| S2DConfig::new(event_channels)),
            d2s: (kind == ModelKind::D2s).then_some(d2s),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be >= 1".into()));
        }
        self.backbone.validate()?;
        self.context.validate()?;
        if self.kind.takes_events() {
            let s = self
                .s2d
                .as_ref()
                .ok_or_else(|| Error::Config(format!("model {} needs an s2d section", self.kind.name())))?;
            if s.event_channels_in == 0 {
                return Err(Error::Config("event_channels_in must be >= 1".into()));
            }
            if s.attention_reduction == 0 {
                return Err(Error::Config("attention_reduction must be >= 1".into()));
            }
            if let Some(ev) = &s.event_stage_channels {
                for (k, (e, r)) in ev.iter().zip(&self.backbone.stage_channels).enumerate() {
                    if e != r {
                        return Err(Error::Config(format!(
                            "stage {}: event branch has {e} channels but the RGB branch has {r}",
                            k + 1
                        )));
                    }
                }
            }
        }
        if self.kind == ModelKind::D2s {
            let d = self
                .d2s
                .as_ref()
                .ok_or_else(|| Error::Config("model d2s needs a d2s section".into()))?;
            if !(1..=2).contains(&d.target_channels) {
                return Err(Error::Config(format!(
                    "d2s event target must have 1 or 2 channels, got {}",
                    d.target_channels
                )));
            }
            if d.event_branch_channels.contains(&0) {
                return Err(Error::Config("event branch channels must be >= 1".into()));
            }
            if let Some(s) = d.gate_source_stages.iter().find(|&&s| s > 3) {
                return Err(Error::Config(format!("gate source stage {s} out of range 0..=3")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for kind in ModelKind::ALL {
            for scale in [Scale::Toy, Scale::Paper] {
                NetworkConfig::new(kind, 2, scale).validate().unwrap();
            }
        }
    }

    #[test]
    fn toy_strides_reach_thirty_two() {
        let b = BackboneConfig::toy();
        assert_eq!(b.strides(), [1, 2, 2, 2]);
        assert_eq!(b.output_stride(), 32);
    }

    #[test]
    fn broken_configs_are_rejected() {
        let mut c = NetworkConfig::new(ModelKind::S2d, 2, Scale::Toy);
        c.backbone.stage_downsample = [4, 8, 8, 32];
        assert!(c.validate().is_err());
        let mut c = NetworkConfig::new(ModelKind::D2s, 3, Scale::Toy);
        assert!(c.validate().is_err(), "three target channels");
        c.d2s = None;
        assert!(c.validate().is_err());
        let mut c = NetworkConfig::new(ModelKind::EventOnly, 2, Scale::Toy);
        c.s2d.as_mut().unwrap().event_channels_in = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn kind_names_parse_back() {
        for kind in ModelKind::ALL {
            assert_eq!(ModelKind::parse(kind.name()).unwrap(), kind);
        }
        assert!(ModelKind::parse("rgbd").is_err());
    }
}
