//! Sequence datasets on disk.
//!
//! ```text
//! root/manifest                      one sequence id per line
//! root/sequences/<id>/frames/0001.ras ... 0040.ras
//! root/sequences/<id>/label_0011.ras optional trainId annotation
//! root/sequences/<id>/events_0011.evt optional events ending at frame 11
//! root/sequences/<id>/meta           key=value: light, weather, occasion
//! ```

use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::events::{read_events, simulate_events, write_events_to, EventFormat, EventStream, SimulatorConfig};
use crate::image::Image;
use crate::labels::{read_label, write_label, LabelMap};
use crate::raster::{read_raster, read_raster_header, write_raster, Raster};
use crate::synthetic::Sample;

/// Frames per sequence in a conformant dataset.
pub const SEQUENCE_FRAMES: usize = 40;
/// 1-based index of the annotated frame.
pub const ANNOTATED_INDEX: usize = 11;
/// Frames before the accident starts.
pub const PRE_ACCIDENT_FRAMES: usize = 10;

macro_rules! vocabulary {
    ($name:ident, $key:literal, { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub const KEY: &'static str = $key;

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!(
                        "{} tag {s:?} is not one of {:?}",
                        $key,
                        [$($text),+]
                    )),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

vocabulary!(Light, "light", { Day => "day", Night => "night" });
vocabulary!(Weather, "weather", { Sunny => "sunny", Rainy => "rainy" });
vocabulary!(Occasion, "occasion", {
    Highway => "highway",
    Urban => "urban",
    Rural => "rural",
    Tunnel => "tunnel",
});

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Conditions {
    pub light: Light,
    pub weather: Weather,
    pub occasion: Occasion,
}

impl Conditions {
    /// `key=value` lines; blank lines and `#` comments are skipped and
    /// unknown keys are kept out of the record.
    pub fn parse(text: &str) -> std::result::Result<(Self, Option<usize>), String> {
        let (mut light, mut weather, mut occasion, mut annotated) = (None, None, None, None);
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value, got {line:?}", n + 1))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "light" => light = Some(v.parse::<Light>()?),
                "weather" => weather = Some(v.parse::<Weather>()?),
                "occasion" => occasion = Some(v.parse::<Occasion>()?),
                "annotated" => {
                    annotated = Some(
                        v.parse::<usize>()
                            .map_err(|_| format!("line {}: annotated index {v:?} is not an integer", n + 1))?,
                    )
                }
                _ => {}
            }
        }
        let missing = |k: &str| format!("missing {k} tag");
        Ok((
            Self {
                light: light.ok_or_else(|| missing("light"))?,
                weather: weather.ok_or_else(|| missing("weather"))?,
                occasion: occasion.ok_or_else(|| missing("occasion"))?,
            },
            annotated,
        ))
    }

    pub fn render(&self, annotated: usize) -> String {
        format!(
            "light={}\nweather={}\noccasion={}\nannotated={annotated}\n",
            self.light, self.weather, self.occasion
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    PreAccident,
    Accident,
}

/// 1-based frame index to accident phase.
pub fn phase(frame_index: usize) -> Phase {
    if frame_index <= PRE_ACCIDENT_FRAMES {
        Phase::PreAccident
    } else {
        Phase::Accident
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceRecord {
    pub id: String,
    pub dir: PathBuf,
    /// Frame files in temporal order.
    pub frames: Vec<PathBuf>,
    /// `(height, width)` shared by every frame.
    pub frame_size: (usize, usize),
    /// 1-based.
    pub annotated_index: usize,
    pub annotation: Option<LabelMap>,
    pub conditions: Conditions,
}

impl SequenceRecord {
    pub fn read_frame(&self, index: usize) -> Result<Image> {
        let path = self.frames.get(index.wrapping_sub(1)).ok_or_else(|| {
            Error::Validation(format!("sequence {}: no frame {index}", self.id))
        })?;
        Ok(read_raster(BufReader::new(File::open(path)?))?.to_image())
    }

    pub fn annotated_frame(&self) -> Result<Image> {
        self.read_frame(self.annotated_index)
    }

    /// Stored binary events for the interval ending at frame `index`, if any.
    pub fn stored_events(&self, index: usize) -> Result<Option<EventStream>> {
        let path = self.dir.join(events_name(index));
        if !path.exists() {
            return Ok(None);
        }
        read_events(BufReader::new(File::open(path)?), EventFormat::Binary).map(Some)
    }

    /// Events between the frame before the annotation and the annotated
    /// frame: the stored stream if present, otherwise simulated from the
    /// two frames over `[index - 1, index]`.
    pub fn anchor_events(&self, sim: &SimulatorConfig) -> Result<EventStream> {
        let a = self.annotated_index;
        if let Some(s) = self.stored_events(a)? {
            return Ok(s);
        }
        if a < 2 {
            return Err(Error::Validation(format!(
                "sequence {}: annotated frame {a} has no preceding frame for event synthesis",
                self.id
            )));
        }
        let (f0, f1) = (self.read_frame(a - 1)?.to_gray(), self.read_frame(a)?.to_gray());
        simulate_events(&f0, &f1, (a - 1) as f64, a as f64, sim)
    }

    /// Annotated frame, its label and its anchor events; `None` without an annotation.
    pub fn labelled_sample(&self, sim: &SimulatorConfig) -> Result<Option<Sample>> {
        let Some(label) = &self.annotation else {
            return Ok(None);
        };
        Ok(Some(Sample {
            rgb: self.annotated_frame()?,
            label: label.clone(),
            events: self.anchor_events(sim)?,
        }))
    }
}

fn frame_name(index: usize) -> String {
    format!("{index:04}.ras")
}

fn label_name(index: usize) -> String {
    format!("label_{index:04}.ras")
}

fn events_name(index: usize) -> String {
    format!("events_{index:04}.evt")
}

pub fn load_sequence(root: &Path, id: &str) -> Result<SequenceRecord> {
    let dir = root.join("sequences").join(id);
    let meta_err = |msg: String| Error::Metadata { id: id.to_string(), msg };
    let meta = fs::read_to_string(dir.join("meta")).map_err(|e| meta_err(format!("cannot read meta: {e}")))?;
    let (conditions, annotated) = Conditions::parse(&meta).map_err(meta_err)?;
    let annotated_index = annotated.unwrap_or(ANNOTATED_INDEX);

    let mut names: Vec<String> = fs::read_dir(dir.join("frames"))?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<std::io::Result<_>>()?;
    names.retain(|n| n.ends_with(".ras"));
    names.sort();
    if names.is_empty() {
        return Err(Error::Validation(format!("sequence {id}: no frames")));
    }
    let mut frames = Vec::with_capacity(names.len());
    let mut frame_size = None;
    for (i, name) in names.iter().enumerate() {
        if *name != frame_name(i + 1) {
            return Err(Error::Validation(format!(
                "sequence {id}: expected frame {}, found {name}",
                frame_name(i + 1)
            )));
        }
        let path = dir.join("frames").join(name);
        let (h, w, _, _) = read_raster_header(BufReader::new(File::open(&path)?))?;
        let size = (h as usize, w as usize);
        match frame_size {
            None => frame_size = Some(size),
            Some(s) if s != size => {
                return Err(Error::Validation(format!(
                    "sequence {id}: frame {name} is {}x{}, expected {}x{}",
                    size.0, size.1, s.0, s.1
                )))
            }
            Some(_) => {}
        }
        frames.push(path);
    }
    let frame_size = frame_size.expect("at least one frame");
    if annotated_index == 0 || annotated_index > frames.len() {
        return Err(Error::Validation(format!(
            "sequence {id}: annotated index {annotated_index} outside 1..={}",
            frames.len()
        )));
    }
    let label_path = dir.join(label_name(annotated_index));
    let annotation = if label_path.exists() {
        let label = read_label(BufReader::new(File::open(&label_path)?))?;
        if (label.height(), label.width()) != frame_size {
            return Err(Error::Validation(format!(
                "sequence {id}: annotation is {}x{} but frames are {}x{}",
                label.height(),
                label.width(),
                frame_size.0,
                frame_size.1
            )));
        }
        Some(label)
    } else {
        None
    };
    Ok(SequenceRecord {
        id: id.to_string(),
        dir,
        frames,
        frame_size,
        annotated_index,
        annotation,
        conditions,
    })
}

pub fn read_manifest(root: &Path) -> Result<Vec<String>> {
    Ok(fs::read_to_string(root.join("manifest"))?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

/// Loads every sequence listed in the manifest. Frame pixels are read
/// lazily; only headers are validated here.
pub fn load_dataset(root: &Path) -> Result<Vec<SequenceRecord>> {
    read_manifest(root)?.iter().map(|id| load_sequence(root, id)).collect()
}

pub fn condition_slice(
    records: &[SequenceRecord],
    predicate: impl Fn(&Conditions) -> bool,
) -> Vec<&SequenceRecord> {
    records.iter().filter(|r| predicate(&r.conditions)).collect()
}

/// A `key=value` condition filter as accepted on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConditionFilter {
    Light(Light),
    Weather(Weather),
    Occasion(Occasion),
}

impl ConditionFilter {
    pub fn matches(&self, c: &Conditions) -> bool {
        match *self {
            Self::Light(l) => c.light == l,
            Self::Weather(w) => c.weather == w,
            Self::Occasion(o) => c.occasion == o,
        }
    }
}

impl FromStr for ConditionFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("slice {s:?} is not key=value")))?;
        let bad = |e: String| Error::Config(e);
        match k.trim() {
            "light" => Ok(Self::Light(v.trim().parse().map_err(bad)?)),
            "weather" => Ok(Self::Weather(v.trim().parse().map_err(bad)?)),
            "occasion" => Ok(Self::Occasion(v.trim().parse().map_err(bad)?)),
            other => Err(Error::Config(format!("unknown condition key {other:?}"))),
        }
    }
}

/// In-memory sequence to be written in the on-disk layout.
#[derive(Clone, Debug)]
pub struct SequenceData {
    pub id: String,
    pub frames: Vec<Image>,
    pub annotated_index: usize,
    pub annotation: Option<LabelMap>,
    pub conditions: Conditions,
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_sequence(root: &Path, seq: &SequenceData) -> Result<()> {
    let dir = root.join("sequences").join(&seq.id);
    fs::create_dir_all(dir.join("frames"))?;
    for (i, img) in seq.frames.iter().enumerate() {
        let raster = Raster::from_image(img)?;
        write_file(&dir.join("frames").join(frame_name(i + 1)), |w| write_raster(&raster, w))?;
    }
    if let Some(label) = &seq.annotation {
        write_file(&dir.join(label_name(seq.annotated_index)), |w| write_label(label, w))?;
    }
    fs::write(dir.join("meta"), seq.conditions.render(seq.annotated_index))?;
    Ok(())
}

/// Stores `stream` as the events ending at frame `index` of sequence `id`.
pub fn write_sequence_events(root: &Path, id: &str, index: usize, stream: &EventStream) -> Result<()> {
    let dir = root.join("sequences").join(id);
    write_file(&dir.join(events_name(index)), |w| write_events_to(stream, EventFormat::Binary, w))
}

/// Writes all sequences plus the manifest.
pub fn write_dataset(root: &Path, sequences: &[SequenceData]) -> Result<()> {
    fs::create_dir_all(root)?;
    for s in sequences {
        write_sequence(root, s)?;
    }
    let manifest: String = sequences.iter().map(|s| format!("{}\n", s.id)).collect();
    fs::write(root.join("manifest"), manifest)?;
    Ok(())
}
