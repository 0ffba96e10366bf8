//! Cityscapes trainId label rasters.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::raster::{read_raster, write_raster, Raster};

pub const NUM_CLASSES: usize = 19;
pub const IGNORE: u8 = 255;

pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "road",
    "sidewalk",
    "building",
    "wall",
    "fence",
    "pole",
    "traffic light",
    "traffic sign",
    "vegetation",
    "terrain",
    "sky",
    "person",
    "rider",
    "car",
    "truck",
    "bus",
    "train",
    "motorcycle",
    "bicycle",
];

/// Foreground classes reported per class, with their short column labels.
pub const FOREGROUND: [(usize, &str); 10] = [
    (6, "TLi"),
    (7, "TSi"),
    (11, "Ped"),
    (12, "Rid"),
    (13, "Car"),
    (14, "Tru"),
    (15, "Bus"),
    (16, "Tra"),
    (17, "Mot"),
    (18, "Bic"),
];

/// `H x W` trainIds in `{0..18} ∪ {255}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "{height}x{width} label map needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(i) = data
            .iter()
            .position(|&v| v as usize >= NUM_CLASSES && v != IGNORE)
        {
            return Err(Error::Validation(format!(
                "illegal label {} at (x={}, y={})",
                data[i],
                i % width,
                i / width
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }
}

pub fn label_to_raster(label: &LabelMap) -> Raster {
    Raster {
        height: label.height as u32,
        width: label.width as u32,
        channels: 1,
        bit_depth: 8,
        samples: label.data.iter().map(|&v| v as u16).collect(),
    }
}

pub fn raster_to_label(r: &Raster) -> Result<LabelMap> {
    if r.channels != 1 || r.bit_depth != 8 {
        return Err(Error::Validation(format!(
            "label rasters are single-channel 8-bit, got {} channel(s) at {} bits",
            r.channels, r.bit_depth
        )));
    }
    LabelMap::new(
        r.height as usize,
        r.width as usize,
        r.samples.iter().map(|&v| v as u8).collect(),
    )
}

pub fn read_label(r: impl Read) -> Result<LabelMap> {
    raster_to_label(&read_raster(r)?)
}

pub fn write_label(label: &LabelMap, w: impl Write) -> Result<()> {
    write_raster(&label_to_raster(label), w)
}
