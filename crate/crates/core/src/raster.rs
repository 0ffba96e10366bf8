//! `RAS1` raster files: magic, `u32` height, `u32` width, `u8` channels,
//! `u8` bit depth (8 or 16), then row-major interleaved samples
//! (16-bit samples little-endian).

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::image::Image;

pub const RASTER_MAGIC: &[u8; 4] = b"RAS1";
const HEADER: usize = 14;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster {
    pub height: u32,
    pub width: u32,
    pub channels: u8,
    pub bit_depth: u8,
    pub samples: Vec<u16>,
}

impl Raster {
    pub fn new(height: u32, width: u32, channels: u8, bit_depth: u8, samples: Vec<u16>) -> Result<Self> {
        if bit_depth != 8 && bit_depth != 16 {
            return Err(Error::Validation(format!("unsupported bit depth {bit_depth}")));
        }
        if channels == 0 {
            return Err(Error::Validation("raster needs at least one channel".into()));
        }
        let n = height as usize * width as usize * channels as usize;
        if samples.len() != n {
            return Err(Error::Dimension(format!(
                "{height}x{width}x{channels} raster needs {n} samples, got {}",
                samples.len()
            )));
        }
        let max = if bit_depth == 8 { 255 } else { u16::MAX };
        if let Some(v) = samples.iter().find(|&&v| v > max) {
            return Err(Error::Validation(format!("sample {v} exceeds {bit_depth}-bit range")));
        }
        Ok(Self {
            height,
            width,
            channels,
            bit_depth,
            samples,
        })
    }

    /// Quantizes an image in `[0, 1]` to 8 bits.
    pub fn from_image(img: &Image) -> Result<Self> {
        let samples = img
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u16)
            .collect();
        Self::new(img.height() as u32, img.width() as u32, img.channels() as u8, 8, samples)
    }

    pub fn to_image(&self) -> Image {
        let scale = if self.bit_depth == 8 { 255.0 } else { 65535.0 };
        let data = self.samples.iter().map(|&v| v as f64 / scale).collect();
        Image::new(self.height as usize, self.width as usize, self.channels as usize, data)
            .expect("raster dimensions are consistent")
    }
}

pub fn write_raster(r: &Raster, mut w: impl Write) -> Result<()> {
    let bytes_per = r.bit_depth as usize / 8;
    let mut buf = Vec::with_capacity(HEADER + r.samples.len() * bytes_per);
    buf.extend_from_slice(RASTER_MAGIC);
    buf.extend_from_slice(&r.height.to_le_bytes());
    buf.extend_from_slice(&r.width.to_le_bytes());
    buf.push(r.channels);
    buf.push(r.bit_depth);
    for &s in &r.samples {
        if r.bit_depth == 8 {
            buf.push(s as u8);
        } else {
            buf.extend_from_slice(&s.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Header fields only: `(height, width, channels, bit_depth)`.
pub fn read_raster_header(mut r: impl Read) -> Result<(u32, u32, u8, u8)> {
    let mut head = [0u8; HEADER];
    r.read_exact(&mut head)
        .map_err(|_| Error::parse(0, "truncated raster header"))?;
    parse_header(&head)
}

fn parse_header(head: &[u8]) -> Result<(u32, u32, u8, u8)> {
    if &head[..4] != RASTER_MAGIC {
        return Err(Error::parse(0, "bad magic, expected RAS1"));
    }
    let h = u32::from_le_bytes(head[4..8].try_into().unwrap());
    let w = u32::from_le_bytes(head[8..12].try_into().unwrap());
    let (c, depth) = (head[12], head[13]);
    if depth != 8 && depth != 16 {
        return Err(Error::parse(13, format!("unsupported bit depth {depth}")));
    }
    Ok((h, w, c, depth))
}

pub fn read_raster(mut r: impl Read) -> Result<Raster> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() < HEADER {
        return Err(Error::parse(buf.len(), "truncated raster header"));
    }
    let (height, width, channels, bit_depth) = parse_header(&buf[..HEADER])?;
    let n = height as usize * width as usize * channels as usize;
    let bytes_per = bit_depth as usize / 8;
    if buf.len() != HEADER + n * bytes_per {
        return Err(Error::parse(
            buf.len().min(HEADER + n * bytes_per),
            format!("expected {} payload bytes, found {}", n * bytes_per, buf.len() - HEADER),
        ));
    }
    let payload = &buf[HEADER..];
    let samples = if bit_depth == 8 {
        payload.iter().map(|&b| b as u16).collect()
    } else {
        payload
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect()
    };
    Raster::new(height, width, channels, bit_depth, samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_quantization() {
        let img = Image::new(1, 4, 1, vec![-0.5, 0.0, 0.5, 2.0]).unwrap();
        let r = Raster::from_image(&img).unwrap();
        assert_eq!(r.samples, vec![0, 0, 128, 255]);
        assert_eq!(r.to_image().data()[3], 1.0);
    }

    #[test]
    fn samples_must_fit_the_bit_depth() {
        assert!(Raster::new(1, 1, 1, 8, vec![256]).is_err());
        assert!(Raster::new(1, 1, 1, 16, vec![256]).is_ok());
        assert!(Raster::new(1, 1, 1, 12, vec![0]).is_err());
        assert!(Raster::new(1, 2, 1, 8, vec![0]).is_err());
    }
}
