//! Event streams, the two-frame event simulator and the event file formats.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }

    pub fn from_sign(p: i64) -> Option<Self> {
        match p {
            1 => Some(Polarity::Positive),
            -1 => Some(Polarity::Negative),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub t: f64,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
}

impl Event {
    pub fn new(t: f64, x: u16, y: u16, p: Polarity) -> Self {
        Self { t, x, y, p }
    }
}

/// Time-ordered events on a `width x height` sensor, all within `[t_start, t_end]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EventStream {
    width: u32,
    height: u32,
    t_start: f64,
    t_end: f64,
    events: Vec<Event>,
}

impl EventStream {
    pub fn new(
        width: u32,
        height: u32,
        t_start: f64,
        t_end: f64,
        events: Vec<Event>,
    ) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite()) || t_end < t_start {
            return Err(Error::Ordering(format!(
                "stream interval [{t_start}, {t_end}] is not a finite ordered range"
            )));
        }
        if width > u16::MAX as u32 + 1 || height > u16::MAX as u32 + 1 {
            return Err(Error::Validation(format!(
                "sensor {width}x{height} exceeds 16-bit coordinates"
            )));
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, e) in events.iter().enumerate() {
            if e.x as u32 >= width || e.y as u32 >= height {
                return Err(Error::Validation(format!(
                    "event {i} at ({}, {}) outside {width}x{height} sensor",
                    e.x, e.y
                )));
            }
            if !e.t.is_finite() || e.t < t_start || e.t > t_end {
                return Err(Error::Validation(format!(
                    "event {i} time {} outside [{t_start}, {t_end}]",
                    e.t
                )));
            }
            if e.t < prev {
                return Err(Error::Ordering(format!(
                    "event {i} at t={} precedes its predecessor at t={prev}",
                    e.t
                )));
            }
            prev = e.t;
        }
        Ok(Self {
            width,
            height,
            t_start,
            t_end,
            events,
        })
    }

    pub fn empty(width: u32, height: u32, t_start: f64, t_end: f64) -> Result<Self> {
        Self::new(width, height, t_start, t_end, Vec::new())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Same stream with every polarity negated.
    pub fn flipped(&self) -> Self {
        let events = self
            .events
            .iter()
            .map(|e| Event { p: e.p.flipped(), ..*e })
            .collect();
        Self { events, ..*self }
    }

    /// Same stream with all timestamps (and the interval) shifted by `dt`.
    pub fn shifted(&self, dt: f64) -> Result<Self> {
        let events = self.events.iter().map(|e| Event { t: e.t + dt, ..*e }).collect();
        Self::new(self.width, self.height, self.t_start + dt, self.t_end + dt, events)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulatorConfig {
    /// Log-intensity change that triggers one event.
    pub contrast_threshold: f64,
    /// Offset added to intensities before taking logarithms.
    pub log_eps: f64,
    pub max_events_per_pixel: u32,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            contrast_threshold: 0.2,
            log_eps: 1e-3,
            max_events_per_pixel: 32,
        }
    }
}

impl SimulatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.contrast_threshold > 0.0 && self.contrast_threshold.is_finite()) {
            return Err(Error::Config(format!(
                "contrast_threshold must be positive, got {}",
                self.contrast_threshold
            )));
        }
        if !(self.log_eps > 0.0 && self.log_eps.is_finite()) {
            return Err(Error::Config(format!(
                "log_eps must be positive, got {}",
                self.log_eps
            )));
        }
        if self.max_events_per_pixel == 0 {
            return Err(Error::Config("max_events_per_pixel must be at least 1".into()));
        }
        Ok(())
    }

    /// Signed log-intensity change and event count for one pixel.
    pub fn pixel_response(&self, before: f64, after: f64) -> (f64, u32) {
        let delta = (after + self.log_eps).ln() - (before + self.log_eps).ln();
        let k = (delta.abs() / self.contrast_threshold).floor();
        (delta, k.min(self.max_events_per_pixel as f64) as u32)
    }
}

fn check_frame(frame: &Image, name: &str) -> Result<()> {
    if frame.channels() != 1 {
        return Err(Error::Dimension(format!(
            "{name} must be single-channel, got {} channels",
            frame.channels()
        )));
    }
    if let Some(i) = frame
        .data()
        .iter()
        .position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
    {
        return Err(Error::Data(format!(
            "{name} pixel ({}, {}) = {} is not a finite value in [0, 1]",
            i % frame.width(),
            i / frame.width(),
            frame.data()[i]
        )));
    }
    Ok(())
}

/// Emits events from the log-intensity change between two grayscale frames.
///
/// A pixel whose log intensity changes by `delta` fires
/// `min(floor(|delta| / C), cap)` events of polarity `sign(delta)` at
/// `t0 + j (t1 - t0) / k`, `j = 1..=k`. The result is sorted by `(t, y, x, p)`.
pub fn simulate_events(
    frame0: &Image,
    frame1: &Image,
    t0: f64,
    t1: f64,
    cfg: &SimulatorConfig,
) -> Result<EventStream> {
    cfg.validate()?;
    if (frame0.height(), frame0.width()) != (frame1.height(), frame1.width())
        || frame0.channels() != frame1.channels()
    {
        return Err(Error::Dimension(format!(
            "frames differ in shape: {}x{} vs {}x{}",
            frame0.height(),
            frame0.width(),
            frame1.height(),
            frame1.width()
        )));
    }
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::Ordering(format!("need t1 > t0, got t0={t0}, t1={t1}")));
    }
    check_frame(frame0, "frame0")?;
    check_frame(frame1, "frame1")?;

    let width = frame0.width();
    let dt = t1 - t0;
    let mut events = Vec::new();
    for (i, (&a, &b)) in frame0.data().iter().zip(frame1.data()).enumerate() {
        let (delta, k) = cfg.pixel_response(a, b);
        if k == 0 {
            continue;
        }
        let p = if delta > 0.0 { Polarity::Positive } else { Polarity::Negative };
        let (x, y) = ((i % width) as u16, (i / width) as u16);
        for j in 1..=k {
            let t = if j == k { t1 } else { t0 + j as f64 * dt / k as f64 };
            events.push(Event { t, x, y, p });
        }
    }
    events.sort_by(|a, b| {
        a.t.total_cmp(&b.t)
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
            .then(a.p.cmp(&b.p))
    });
    EventStream::new(width as u32, frame0.height() as u32, t0, t1, events)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventFormat {
    Binary,
    Text,
}

pub const EVENT_MAGIC: &[u8; 4] = b"EVT1";
pub const EVENT_HEADER_SIZE: usize = 36;
pub const EVENT_RECORD_SIZE: usize = 16;

pub fn write_events(stream: &EventStream, format: EventFormat) -> Vec<u8> {
    let mut out = Vec::new();
    write_events_to(stream, format, &mut out).expect("writing to a Vec cannot fail");
    out
}

pub fn write_events_to(stream: &EventStream, format: EventFormat, mut w: impl Write) -> Result<()> {
    match format {
        EventFormat::Binary => {
            let mut buf = Vec::with_capacity(EVENT_HEADER_SIZE + EVENT_RECORD_SIZE * stream.len());
            buf.extend_from_slice(EVENT_MAGIC);
            buf.extend_from_slice(&stream.width.to_le_bytes());
            buf.extend_from_slice(&stream.height.to_le_bytes());
            buf.extend_from_slice(&(stream.len() as u64).to_le_bytes());
            buf.extend_from_slice(&stream.t_start.to_le_bytes());
            buf.extend_from_slice(&stream.t_end.to_le_bytes());
            for e in &stream.events {
                buf.extend_from_slice(&e.t.to_le_bytes());
                buf.extend_from_slice(&e.x.to_le_bytes());
                buf.extend_from_slice(&e.y.to_le_bytes());
                buf.push(e.p.sign() as u8);
                buf.extend_from_slice(&[0; 3]);
            }
            w.write_all(&buf)?;
        }
        EventFormat::Text => {
            let mut s = format!(
                "# width={} height={} t_start={} t_end={}\n",
                stream.width, stream.height, stream.t_start, stream.t_end
            );
            for e in &stream.events {
                s.push_str(&format!("{} {} {} {}\n", e.t, e.x, e.y, e.p.sign()));
            }
            w.write_all(s.as_bytes())?;
        }
    }
    Ok(())
}

pub fn read_events(mut r: impl Read, format: EventFormat) -> Result<EventStream> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    match format {
        EventFormat::Binary => parse_binary(&buf),
        EventFormat::Text => parse_text(&buf),
    }
}

fn parse_binary(buf: &[u8]) -> Result<EventStream> {
    if buf.len() < EVENT_HEADER_SIZE {
        return Err(Error::parse(buf.len(), "truncated header"));
    }
    if &buf[..4] != EVENT_MAGIC {
        return Err(Error::parse(0, "bad magic, expected EVT1"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
    let width = u32_at(4);
    let height = u32_at(8);
    let count = u64::from_le_bytes(buf[12..20].try_into().unwrap());
    let (t_start, t_end) = (f64_at(20), f64_at(28));
    let expected = (count as u128) * EVENT_RECORD_SIZE as u128 + EVENT_HEADER_SIZE as u128;
    if (buf.len() as u128) != expected {
        return Err(Error::parse(
            buf.len().min(expected as usize),
            format!("header declares {count} records but payload has {} bytes", buf.len() - EVENT_HEADER_SIZE),
        ));
    }
    let mut events = Vec::with_capacity(count as usize);
    for rec in buf[EVENT_HEADER_SIZE..].chunks_exact(EVENT_RECORD_SIZE) {
        let offset = rec.as_ptr() as usize - buf.as_ptr() as usize;
        let t = f64::from_le_bytes(rec[0..8].try_into().unwrap());
        let x = u16::from_le_bytes(rec[8..10].try_into().unwrap());
        let y = u16::from_le_bytes(rec[10..12].try_into().unwrap());
        let p = Polarity::from_sign(rec[12] as i8 as i64)
            .ok_or_else(|| Error::parse(offset + 12, format!("polarity byte {} is not +-1", rec[12] as i8)))?;
        if rec[13..16] != [0, 0, 0] {
            return Err(Error::parse(offset + 13, "non-zero padding"));
        }
        events.push(Event { t, x, y, p });
    }
    EventStream::new(width, height, t_start, t_end, events)
}

fn parse_text(buf: &[u8]) -> Result<EventStream> {
    let text = std::str::from_utf8(buf).map_err(|e| Error::parse(e.valid_up_to(), "invalid UTF-8"))?;
    let mut header: Option<(u32, u32, f64, f64)> = None;
    let mut events = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let body = line.trim();
        if body.is_empty() {
            continue;
        }
        if let Some(comment) = body.strip_prefix('#') {
            if header.is_none() && events.is_empty() {
                header = parse_text_header(comment);
            }
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(start, format!("expected 't x y p', got {body:?}")));
        }
        let t: f64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(start, format!("bad timestamp {:?}", fields[0])))?;
        let x: u16 = fields[1]
            .parse()
            .map_err(|_| Error::parse(start, format!("bad x coordinate {:?}", fields[1])))?;
        let y: u16 = fields[2]
            .parse()
            .map_err(|_| Error::parse(start, format!("bad y coordinate {:?}", fields[2])))?;
        let p = fields[3]
            .parse::<i64>()
            .ok()
            .and_then(Polarity::from_sign)
            .ok_or_else(|| Error::parse(start, format!("bad polarity {:?}", fields[3])))?;
        events.push(Event { t, x, y, p });
    }
    let (width, height, t_start, t_end) = header.unwrap_or_else(|| {
        let w = events.iter().map(|e| e.x as u32 + 1).max().unwrap_or(0);
        let h = events.iter().map(|e| e.y as u32 + 1).max().unwrap_or(0);
        let t0 = events.first().map_or(0.0, |e| e.t);
        let t1 = events.last().map_or(0.0, |e| e.t);
        (w, h, t0, t1)
    });
    EventStream::new(width, height, t_start, t_end, events)
}

fn parse_text_header(comment: &str) -> Option<(u32, u32, f64, f64)> {
    let mut w = None;
    let mut h = None;
    let mut t0 = None;
    let mut t1 = None;
    for kv in comment.split_whitespace() {
        let (k, v) = kv.split_once('=')?;
        match k {
            "width" => w = v.parse().ok(),
            "height" => h = v.parse().ok(),
            "t_start" => t0 = v.parse().ok(),
            "t_end" => t1 = v.parse().ok(),
            _ => {}
        }
    }
    Some((w?, h?, t0?, t1?))
}
