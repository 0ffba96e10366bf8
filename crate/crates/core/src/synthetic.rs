//! Fixed-seed synthetic driving-like scenes: a static textured road with
//! rigid objects moving across it. RGB frames get motion blur, illumination
//! scaling and sensor noise; labels stay crisp; events are simulated from
//! the sharp frames.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::events::{simulate_events, EventStream, SimulatorConfig};
use crate::image::Image;
use crate::labels::LabelMap;

/// road, person, car, bicycle
pub const DEFAULT_PALETTE: [u8; 4] = [0, 11, 13, 18];

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSceneConfig {
    pub height: usize,
    pub width: usize,
    /// Inclusive range of moving objects per sequence.
    pub num_objects: (usize, usize),
    /// Pixels per frame.
    pub speed: (f64, f64),
    /// Length in pixels of the line blur kernel along the motion direction.
    pub blur: (f64, f64),
    pub illumination: (f64, f64),
    /// Standard deviation of additive Gaussian noise on RGB.
    pub noise_std: f64,
    /// Class ids; the first is the static background.
    pub palette: Vec<u8>,
    /// Multiplier on every object's extent.
    pub object_scale: f64,
    pub frames: usize,
    pub simulator: SimulatorConfig,
    pub seed: u64,
}

impl Default for SyntheticSceneConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            num_objects: (1, 3),
            speed: (2.0, 5.0),
            blur: (0.0, 12.0),
            illumination: (0.5, 1.0),
            noise_std: 0.02,
            palette: DEFAULT_PALETTE.to_vec(),
            object_scale: 1.0,
            frames: 2,
            simulator: SimulatorConfig::default(),
            seed: 0,
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64), min: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo >= min && hi >= lo) {
        return Err(Error::Config(format!("{name} range ({lo}, {hi}) is invalid")));
    }
    Ok(())
}

impl SyntheticSceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::Config("canvas must be non-empty".into()));
        }
        if self.frames < 2 {
            return Err(Error::Config("need at least two frames".into()));
        }
        if self.num_objects.0 > self.num_objects.1 {
            return Err(Error::Config("num_objects range is inverted".into()));
        }
        check_range("speed", self.speed, 0.0)?;
        check_range("blur", self.blur, 0.0)?;
        check_range("illumination", self.illumination, 0.0)?;
        if self.illumination.1 > 1.0 || self.illumination.0 <= 0.0 {
            return Err(Error::Config("illumination must lie in (0, 1]".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config("noise_std must be >= 0".into()));
        }
        if self.palette.len() < 2 && self.num_objects.1 > 0 {
            return Err(Error::Config("palette needs a background and at least one object class".into()));
        }
        if let Some(c) = self.palette.iter().find(|&&c| shape_kind(c).is_none() && c != self.palette[0]) {
            return Err(Error::Config(format!("class {c} has no synthetic appearance")));
        }
        if !(self.object_scale > 0.0) {
            return Err(Error::Config("object_scale must be positive".into()));
        }
        let largest = self.palette[1..]
            .iter()
            .filter_map(|&c| shape_kind(c))
            .map(|k| k.max_extent() * self.object_scale)
            .fold(0.0, f64::max);
        let canvas = self.height.min(self.width) as f64;
        if largest > canvas {
            return Err(Error::Config(format!(
                "objects up to {largest:.1} px do not fit a {}x{} canvas",
                self.height, self.width
            )));
        }
        self.simulator.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum ShapeKind {
    /// Upright box.
    Person,
    /// Wide box.
    Car,
    /// Two wheels side by side.
    Bicycle,
}

fn shape_kind(class: u8) -> Option<ShapeKind> {
    match class {
        11 | 12 => Some(ShapeKind::Person),
        13..=16 => Some(ShapeKind::Car),
        17 | 18 => Some(ShapeKind::Bicycle),
        _ => None,
    }
}

impl ShapeKind {
    fn color(self) -> [f64; 3] {
        match self {
            Self::Person => [0.85, 0.45, 0.35],
            Self::Car => [0.30, 0.45, 0.90],
            Self::Bicycle => [0.90, 0.85, 0.30],
        }
    }

    /// Half extents `(x, y)` before scaling, sampled per object.
    fn sample_size(self, rng: &mut impl Rng) -> (f64, f64) {
        match self {
            Self::Person => (rng.gen_range(3.0..4.5), rng.gen_range(8.0..11.0)),
            Self::Car => (rng.gen_range(9.0..12.0), rng.gen_range(5.0..7.0)),
            Self::Bicycle => {
                let r = rng.gen_range(4.0..5.5);
                (2.0 * r, r)
            }
        }
    }

    fn max_extent(self) -> f64 {
        match self {
            Self::Person => 22.0,
            Self::Car => 24.0,
            Self::Bicycle => 22.0,
        }
    }
}

/// One rigid object moving with constant velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectTrack {
    pub class: u8,
    kind: ShapeKind,
    half: (f64, f64),
    /// Center at frame 0.
    pub start: (f64, f64),
    /// Pixels per frame.
    pub velocity: (f64, f64),
    stripe_phase: f64,
}

impl ObjectTrack {
    pub fn center(&self, f: f64) -> (f64, f64) {
        (self.start.0 + self.velocity.0 * f, self.start.1 + self.velocity.1 * f)
    }

    /// Object-local coordinates of pixel center `(x, y)` for the object at
    /// `center`, or `None` outside the shape.
    fn local(&self, center: (f64, f64), x: f64, y: f64) -> Option<(f64, f64)> {
        let (u, v) = (x - center.0, y - center.1);
        let (hx, hy) = self.half;
        let inside = match self.kind {
            ShapeKind::Person | ShapeKind::Car => u.abs() <= hx && v.abs() <= hy,
            ShapeKind::Bicycle => {
                let r = hy;
                let d1 = (u + r).powi(2) + v * v;
                let d2 = (u - r).powi(2) + v * v;
                d1 <= r * r || d2 <= r * r
            }
        };
        inside.then_some((u, v))
    }

    fn shade(&self, (u, _v): (f64, f64)) -> [f64; 3] {
        let stripe = 0.85 + 0.15 * ((u + self.stripe_phase) * std::f64::consts::PI / 2.0).sin();
        self.kind.color().map(|c| c * stripe)
    }
}

/// A generated sequence. `events[i]` covers frames `i` to `i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSequence {
    /// Blurred, lit and noisy RGB frames.
    pub frames: Vec<Image>,
    /// Sharp lit grayscale frames the events were simulated from.
    pub sharp: Vec<Image>,
    pub labels: Vec<LabelMap>,
    pub events: Vec<EventStream>,
    pub objects: Vec<ObjectTrack>,
    pub blur: f64,
    pub illumination: f64,
}

fn background(h: usize, w: usize, rng: &mut impl Rng) -> Vec<[f64; 3]> {
    let (fx, fy) = (rng.gen_range(0.15..0.35), rng.gen_range(0.15..0.35));
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let base = rng.gen_range(0.30..0.40);
    (0..h * w)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            let tex = 0.04 * (fx * x + phase).sin() * (fy * y).cos() + rng.gen_range(-0.02..0.02);
            let v = base + tex;
            [v, v, v * 1.05]
        })
        .collect()
}

/// Paints objects at frame time `f` into `out`; later objects are on top.
fn render(objects: &[ObjectTrack], f: f64, w: usize, out: &mut [[f64; 3]], labels: Option<&mut [u8]>) {
    let mut labels = labels;
    for o in objects {
        let c = o.center(f);
        let (hx, hy) = o.half;
        let r = hx.max(hy) + 1.0;
        let h = out.len() / w;
        let x0 = ((c.0 - r).floor().max(0.0)) as usize;
        let x1 = ((c.0 + r).ceil().min(w as f64 - 1.0)).max(-1.0);
        let y0 = ((c.1 - r).floor().max(0.0)) as usize;
        let y1 = ((c.1 + r).ceil().min(h as f64 - 1.0)).max(-1.0);
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        for y in y0..=y1 as usize {
            for x in x0..=x1 as usize {
                if let Some(uv) = o.local(c, x as f64 + 0.5, y as f64 + 0.5) {
                    out[y * w + x] = o.shade(uv);
                    if let Some(l) = labels.as_deref_mut() {
                        l[y * w + x] = o.class;
                    }
                }
            }
        }
    }
}

fn to_image(h: usize, w: usize, px: &[[f64; 3]]) -> Image {
    Image::new(h, w, 3, px.iter().flatten().copied().collect()).expect("consistent size")
}

/// Generates one sequence from `cfg`; `stream` selects an independent
/// random stream so suites can be produced sample by sample.
pub fn generate_sequence(cfg: &SyntheticSceneConfig, stream: u64) -> Result<SyntheticSequence> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let (h, w) = (cfg.height, cfg.width);
    let bg = background(h, w, &mut rng);
    let sample = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let blur = sample(&mut rng, cfg.blur);
    let light = sample(&mut rng, cfg.illumination);
    let count = rng.gen_range(cfg.num_objects.0..=cfg.num_objects.1);
    let mid = (cfg.frames - 1) as f64 / 2.0;
    let mut objects = Vec::with_capacity(count);
    for _ in 0..count {
        let class = cfg.palette[rng.gen_range(1..cfg.palette.len())];
        let kind = shape_kind(class).expect("validated palette");
        let (hx, hy) = kind.sample_size(&mut rng);
        let half = (hx * cfg.object_scale, hy * cfg.object_scale);
        let speed = sample(&mut rng, cfg.speed);
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let velocity = (speed * angle.cos(), speed * angle.sin());
        // Keep the object fully visible halfway through the sequence.
        let cx = rng.gen_range(half.0..=(w as f64 - half.0).max(half.0));
        let cy = rng.gen_range(half.1..=(h as f64 - half.1).max(half.1));
        let start = (cx - velocity.0 * mid, cy - velocity.1 * mid);
        objects.push(ObjectTrack {
            class,
            kind,
            half,
            start,
            velocity,
            stripe_phase: rng.gen_range(0.0..4.0),
        });
    }

    let noise = Normal::new(0.0, cfg.noise_std.max(f64::MIN_POSITIVE)).expect("valid std");
    let taps = blur.ceil() as usize + 1;
    let mut frames = Vec::with_capacity(cfg.frames);
    let mut sharp = Vec::with_capacity(cfg.frames);
    let mut labels = Vec::with_capacity(cfg.frames);
    for f in 0..cfg.frames {
        let mut crisp = bg.clone();
        let mut lab = vec![cfg.palette[0]; h * w];
        render(&objects, f as f64, w, &mut crisp, Some(&mut lab));
        let gray = to_image(h, w, &crisp).to_gray();
        let gray = Image::new(h, w, 1, gray.data().iter().map(|v| v * light).collect())?;

        // Line kernel: average renders along the path covered during the
        // last `blur` pixels of travel.
        let mut acc = vec![[0.0; 3]; h * w];
        for j in 0..taps {
            let frac = if taps > 1 { j as f64 / (taps - 1) as f64 } else { 0.0 };
            let mut layer = bg.clone();
            let shifted: Vec<ObjectTrack> = objects
                .iter()
                .map(|o| {
                    let speed = (o.velocity.0.powi(2) + o.velocity.1.powi(2)).sqrt();
                    let back = if speed > 0.0 { blur * frac / speed } else { 0.0 };
                    let c = o.center(f as f64 - back);
                    ObjectTrack {
                        start: c,
                        velocity: (0.0, 0.0),
                        ..o.clone()
                    }
                })
                .collect();
            render(&shifted, 0.0, w, &mut layer, None);
            for (a, l) in acc.iter_mut().zip(&layer) {
                for c in 0..3 {
                    a[c] += l[c];
                }
            }
        }
        let rgb: Vec<f64> = acc
            .iter()
            .flat_map(|a| a.map(|v| v / taps as f64))
            .map(|v| {
                let n = if cfg.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                (v * light + n).clamp(0.0, 1.0)
            })
            .collect();
        frames.push(Image::new(h, w, 3, rgb)?);
        sharp.push(gray);
        labels.push(LabelMap::new(h, w, lab)?);
    }
    let events = (1..cfg.frames)
        .map(|f| simulate_events(&sharp[f - 1], &sharp[f], (f - 1) as f64, f as f64, &cfg.simulator))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticSequence {
        frames,
        sharp,
        labels,
        events,
        objects,
        blur,
        illumination: light,
    })
}

/// Generates `cfg.frames`-long sequence number 0 of `cfg`.
pub fn generate_synthetic(cfg: &SyntheticSceneConfig) -> Result<SyntheticSequence> {
    generate_sequence(cfg, 0)
}

impl SyntheticSequence {
    /// Pixels covered by any object at any time in `[f0, f1]`, sampled at
    /// sub-pixel steps of travel.
    pub fn swept_mask(&self, f0: usize, f1: usize) -> Vec<bool> {
        let (h, w) = (self.labels[0].height(), self.labels[0].width());
        let mut mask = vec![false; h * w];
        let max_speed = self
            .objects
            .iter()
            .map(|o| (o.velocity.0.powi(2) + o.velocity.1.powi(2)).sqrt())
            .fold(0.0, f64::max);
        let steps = ((f1 - f0) as f64 * max_speed * 4.0).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = f0 as f64 + (f1 - f0) as f64 * s as f64 / steps as f64;
            for o in &self.objects {
                let c = o.center(t);
                for (i, m) in mask.iter_mut().enumerate() {
                    if !*m && o.local(c, (i % w) as f64 + 0.5, (i / w) as f64 + 0.5).is_some() {
                        *m = true;
                    }
                }
            }
        }
        mask
    }
}

/// Square dilation of a row-major mask by `radius` pixels.
pub fn dilate(mask: &[bool], height: usize, width: usize, radius: usize) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    for y in 0..height {
        for x in 0..width {
            if !mask[y * width + x] {
                continue;
            }
            for yy in y.saturating_sub(radius)..=(y + radius).min(height - 1) {
                for xx in x.saturating_sub(radius)..=(x + radius).min(width - 1) {
                    out[yy * width + xx] = true;
                }
            }
        }
    }
    out
}

/// Training and test material for the desk-scale experiments.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    pub train: SyntheticSceneConfig,
    pub test: SyntheticSceneConfig,
    pub train_size: usize,
    pub test_size: usize,
}

impl SuiteConfig {
    /// 64x64 scenes with the four-class palette: 200 training frames with
    /// mixed blur and 50 high-blur, low-light test frames.
    pub fn standard(seed: u64) -> Self {
        let train = SyntheticSceneConfig {
            seed,
            ..SyntheticSceneConfig::default()
        };
        let test = SyntheticSceneConfig {
            blur: (8.0, 12.0),
            illumination: (0.35, 0.7),
            seed: seed ^ 0x7e57,
            ..train.clone()
        };
        Self {
            train,
            test,
            train_size: 200,
            test_size: 50,
        }
    }
}

/// One supervised frame: blurred RGB, its label and the events of the
/// preceding inter-frame interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub rgb: Image,
    pub label: LabelMap,
    pub events: EventStream,
}

impl Sample {
    fn last_of(seq: SyntheticSequence) -> Self {
        let mut seq = seq;
        Self {
            rgb: seq.frames.pop().expect("frames >= 2"),
            label: seq.labels.pop().expect("frames >= 2"),
            events: seq.events.pop().expect("frames >= 2"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Suite {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

pub fn generate_suite(cfg: &SuiteConfig) -> Result<Suite> {
    let split = |c: &SyntheticSceneConfig, n: usize| {
        (0..n as u64)
            .map(|i| generate_sequence(c, i).map(Sample::last_of))
            .collect::<Result<Vec<_>>>()
    };
    Ok(Suite {
        train: split(&cfg.train, cfg.train_size)?,
        test: split(&cfg.test, cfg.test_size)?,
    })
}
