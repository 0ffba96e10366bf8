//! Dense event representations: the discretized event volume with linear
//! temporal interpolation, and per-polarity event-count frames.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::events::{Event, EventStream, Polarity};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReprMode {
    /// Temporal bins with linear interpolation.
    Volume,
    /// Event counts per pixel; bins collapse to a single count.
    Frame,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolarityMode {
    /// Positive channels first, then negative channels.
    Split,
    /// Both polarities accumulate into the `bins_pos` channels.
    Merged,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeNormalization {
    /// Each polarity is normalized over its own first and last timestamp.
    PerPolarity,
    /// Both polarities share the stream's first and last timestamp.
    Joint,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReprConfig {
    pub bins_pos: usize,
    pub bins_neg: usize,
    pub height: usize,
    pub width: usize,
    pub mode: ReprMode,
    pub polarity: PolarityMode,
    pub normalization: TimeNormalization,
}

pub const TABLE2_NAMES: [&str; 5] = ["B1", "B2", "B18", "P", "P+N"];

impl ReprConfig {
    pub fn volume(bins_pos: usize, bins_neg: usize, height: usize, width: usize) -> Self {
        Self {
            bins_pos,
            bins_neg,
            height,
            width,
            mode: ReprMode::Volume,
            polarity: PolarityMode::Split,
            normalization: TimeNormalization::PerPolarity,
        }
    }

    pub fn frame(bins_pos: usize, bins_neg: usize, height: usize, width: usize) -> Self {
        Self {
            mode: ReprMode::Frame,
            ..Self::volume(bins_pos, bins_neg, height, width)
        }
    }

    /// Total channel count `B`.
    pub fn channels(&self) -> usize {
        match self.polarity {
            PolarityMode::Split => self.bins_pos + self.bins_neg,
            PolarityMode::Merged => self.bins_pos,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels() == 0 {
            return Err(Error::Config("representation needs at least one bin".into()));
        }
        if self.polarity == PolarityMode::Merged && self.bins_neg != 0 {
            return Err(Error::Config(
                "merged-polarity representations use bins_pos only".into(),
            ));
        }
        if self.mode == ReprMode::Frame && (self.bins_pos > 1 || self.bins_neg > 1) {
            return Err(Error::Config(
                "event frames hold at most one count channel per polarity".into(),
            ));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::Config("representation geometry must be non-empty".into()));
        }
        Ok(())
    }
}

/// The representation variants compared in the event-representation ablation.
pub fn table2_config(name: &str, height: usize, width: usize) -> Result<ReprConfig> {
    let cfg = match name {
        "B1" => ReprConfig {
            polarity: PolarityMode::Merged,
            ..ReprConfig::frame(1, 0, height, width)
        },
        "B2" => ReprConfig::volume(1, 1, height, width),
        "B18" => ReprConfig::volume(9, 9, height, width),
        "P" => ReprConfig::frame(1, 0, height, width),
        "P+N" => ReprConfig::frame(1, 1, height, width),
        other => {
            return Err(Error::Config(format!(
                "unknown representation {other:?}; valid names: {}",
                TABLE2_NAMES.join(", ")
            )))
        }
    };
    Ok(cfg)
}

/// Dense `B x H x W` grid (channel-major).
#[derive(Clone, Debug, PartialEq)]
pub struct EventVolume {
    data: Vec<f64>,
    config: ReprConfig,
    dropped: usize,
}

impl EventVolume {
    fn zeros(config: &ReprConfig) -> Self {
        Self {
            data: vec![0.0; config.channels() * config.height * config.width],
            config: config.clone(),
            dropped: 0,
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn config(&self) -> &ReprConfig {
        &self.config
    }

    pub fn channels(&self) -> usize {
        self.config.channels()
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels(), self.config.height, self.config.width]
    }

    /// Events discarded because their polarity has no bins.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.config.height + y) * self.config.width + x]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// 1 where any event landed, 0 elsewhere.
    pub fn occupancy(&self) -> Vec<f64> {
        self.data.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect()
    }

    /// Squashes counts into `[0, 1)` as `1 - exp(-count)`.
    pub fn saturated(&self) -> Vec<f64> {
        self.data.iter().map(|&v| 1.0 - (-v).exp()).collect()
    }
}

fn check_bounds(stream: &EventStream, cfg: &ReprConfig) -> Result<()> {
    if let Some((i, e)) = stream
        .events()
        .iter()
        .enumerate()
        .find(|(_, e)| e.x as usize >= cfg.width || e.y as usize >= cfg.height)
    {
        return Err(Error::Validation(format!(
            "event {i} at ({}, {}) outside {}x{} representation",
            e.x, e.y, cfg.width, cfg.height
        )));
    }
    Ok(())
}

/// Channel block `(offset, bins)` for a polarity, or `None` when it has no bins.
fn block(cfg: &ReprConfig, p: Polarity) -> Option<(usize, usize)> {
    let (offset, bins) = match (cfg.polarity, p) {
        (PolarityMode::Merged, _) => (0, cfg.bins_pos),
        (PolarityMode::Split, Polarity::Positive) => (0, cfg.bins_pos),
        (PolarityMode::Split, Polarity::Negative) => (cfg.bins_pos, cfg.bins_neg),
    };
    (bins > 0).then_some((offset, bins))
}

/// Time range used to normalize events of polarity `p`.
fn time_range(events: &[Event], cfg: &ReprConfig, p: Polarity) -> Option<(f64, f64)> {
    let shares_range = cfg.polarity == PolarityMode::Merged
        || cfg.normalization == TimeNormalization::Joint;
    let mut it = events.iter().filter(|e| shares_range || e.p == p);
    let first = it.next()?.t;
    let last = it.next_back().map_or(first, |e| e.t);
    Some((first, last))
}

/// Normalized time `(n - 1)(t - t_first) / (t_last - t_first)`; 0 when the range is degenerate.
pub fn normalized_time(t: f64, range: (f64, f64), bins: usize) -> f64 {
    let (first, last) = range;
    if last > first {
        (bins - 1) as f64 * (t - first) / (last - first)
    } else {
        0.0
    }
}

/// Discretized event volume: each event adds `max(0, 1 - |b - t~|)` to
/// every integer bin `b` of its polarity block, i.e. linear interpolation
/// into the two bins around `t~`.
pub fn voxelize(stream: &EventStream, cfg: &ReprConfig) -> Result<EventVolume> {
    cfg.validate()?;
    check_bounds(stream, cfg)?;
    let mut vol = EventVolume::zeros(cfg);
    let events = stream.events();
    let ranges = [Polarity::Positive, Polarity::Negative].map(|p| time_range(events, cfg, p));
    let plane = cfg.height * cfg.width;
    for e in events {
        let Some((offset, bins)) = block(cfg, e.p) else {
            vol.dropped += 1;
            continue;
        };
        let range = ranges[(e.p == Polarity::Negative) as usize].expect("polarity present");
        let tn = normalized_time(e.t, range, bins);
        let pixel = e.y as usize * cfg.width + e.x as usize;
        let lower = (tn.floor() as usize).min(bins - 1);
        let frac = tn - lower as f64;
        vol.data[(offset + lower) * plane + pixel] += 1.0 - frac;
        if frac > 0.0 && lower + 1 < bins {
            vol.data[(offset + lower + 1) * plane + pixel] += frac;
        }
    }
    Ok(vol)
}

/// Per-pixel event counts, one channel per polarity that has a bin (or a
/// single merged channel).
pub fn to_event_frame(stream: &EventStream, cfg: &ReprConfig) -> Result<EventVolume> {
    cfg.validate()?;
    if cfg.mode != ReprMode::Frame {
        return Err(Error::Config("to_event_frame needs a frame-mode config".into()));
    }
    check_bounds(stream, cfg)?;
    let mut vol = EventVolume::zeros(cfg);
    let plane = cfg.height * cfg.width;
    for e in stream.events() {
        match block(cfg, e.p) {
            Some((offset, _)) => {
                vol.data[offset * plane + e.y as usize * cfg.width + e.x as usize] += 1.0;
            }
            None => vol.dropped += 1,
        }
    }
    Ok(vol)
}

/// Builds whichever representation `cfg.mode` selects.
pub fn represent(stream: &EventStream, cfg: &ReprConfig) -> Result<EventVolume> {
    match cfg.mode {
        ReprMode::Volume => voxelize(stream, cfg),
        ReprMode::Frame => to_event_frame(stream, cfg),
    }
}

pub const VOLUME_MAGIC: &[u8; 4] = b"EVV1";

/// Contents of an `EVV1` volume file: `B x H x W` little-endian `f32`.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeFile {
    pub channels: u32,
    pub height: u32,
    pub width: u32,
    pub data: Vec<f32>,
}

impl From<&EventVolume> for VolumeFile {
    fn from(v: &EventVolume) -> Self {
        let [c, h, w] = v.shape();
        Self {
            channels: c as u32,
            height: h as u32,
            width: w as u32,
            data: v.data.iter().map(|&x| x as f32).collect(),
        }
    }
}

pub fn write_volume(v: &VolumeFile, mut w: impl Write) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 4 * v.data.len());
    buf.extend_from_slice(VOLUME_MAGIC);
    for d in [v.channels, v.height, v.width] {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for x in &v.data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_volume(mut r: impl Read) -> Result<VolumeFile> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() < 16 {
        return Err(Error::parse(buf.len(), "truncated volume header"));
    }
    if &buf[..4] != VOLUME_MAGIC {
        return Err(Error::parse(0, "bad magic, expected EVV1"));
    }
    let dim = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
    let (channels, height, width) = (dim(4), dim(8), dim(12));
    let numel = channels as usize * height as usize * width as usize;
    if buf.len() != 16 + 4 * numel {
        return Err(Error::parse(
            buf.len().min(16 + 4 * numel),
            format!("{channels}x{height}x{width} volume needs {} payload bytes, found {}", 4 * numel, buf.len() - 16),
        ));
    }
    let data = buf[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(VolumeFile {
        channels,
        height,
        width,
        data,
    })
}
