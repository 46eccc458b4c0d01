//! Planar YCbCr frames with integer samples.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Chroma subsampling of a frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChromaFormat {
    #[serde(rename = "420")]
    Yuv420,
    #[serde(rename = "444")]
    Yuv444,
}

impl ChromaFormat {
    /// Chroma plane size for a `width`×`height` luma plane.
    pub fn chroma_size(self, width: usize, height: usize) -> (usize, usize) {
        match self {
            ChromaFormat::Yuv420 => (width.div_ceil(2), height.div_ceil(2)),
            ChromaFormat::Yuv444 => (width, height),
        }
    }
}

impl fmt::Display for ChromaFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChromaFormat::Yuv420 => "420",
            ChromaFormat::Yuv444 => "444",
        })
    }
}

impl std::str::FromStr for ChromaFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "420" | "4:2:0" | "yuv420" => Ok(ChromaFormat::Yuv420),
            "444" | "4:4:4" | "yuv444" => Ok(ChromaFormat::Yuv444),
            _ => Err(Error::Frame(format!("unknown chroma format {s:?} (expected 420 or 444)"))),
        }
    }
}

/// One row-major plane of samples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<u16>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Frame(format!("empty plane {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::Frame(format!(
                "plane {width}x{height} needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u16) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u16] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u16) {
        self.data[y * self.width + x] = v;
    }
}

/// A YCbCr frame: luma plus two chroma planes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    bit_depth: u8,
    chroma: ChromaFormat,
    planes: [Plane; 3],
}

impl Frame {
    /// Checks plane sizes against the format and every sample against the bit depth.
    pub fn new(bit_depth: u8, chroma: ChromaFormat, planes: [Plane; 3]) -> Result<Self> {
        if bit_depth != 8 && bit_depth != 10 {
            return Err(Error::Frame(format!("bit depth must be 8 or 10, got {bit_depth}")));
        }
        let (width, height) = (planes[0].width, planes[0].height);
        let (cw, ch) = chroma.chroma_size(width, height);
        for p in &planes[1..] {
            if (p.width, p.height) != (cw, ch) {
                return Err(Error::Frame(format!(
                    "{chroma} chroma plane for {width}x{height} luma must be {cw}x{ch}, got {}x{}",
                    p.width, p.height
                )));
            }
        }
        let max = max_sample(bit_depth);
        for p in &planes {
            if let Some(&v) = p.data.iter().find(|&&v| v > max) {
                return Err(Error::Frame(format!("sample {v} exceeds {bit_depth}-bit range")));
            }
        }
        Ok(Self {
            width,
            height,
            bit_depth,
            chroma,
            planes,
        })
    }

    /// A frame with every sample of plane `i` set to `values[i]`.
    pub fn filled(width: usize, height: usize, bit_depth: u8, chroma: ChromaFormat, values: [u16; 3]) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Frame(format!("empty frame {width}x{height}")));
        }
        let (cw, ch) = chroma.chroma_size(width, height);
        Self::new(
            bit_depth,
            chroma,
            [
                Plane::filled(width, height, values[0]),
                Plane::filled(cw, ch, values[1]),
                Plane::filled(cw, ch, values[2]),
            ],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn chroma(&self) -> ChromaFormat {
        self.chroma
    }

    /// Largest valid sample, `2^bit_depth - 1`.
    pub fn max_value(&self) -> u16 {
        max_sample(self.bit_depth)
    }

    pub fn planes(&self) -> &[Plane; 3] {
        &self.planes
    }

    pub fn plane(&self, i: usize) -> &Plane {
        &self.planes[i]
    }

    pub fn y(&self) -> &Plane {
        &self.planes[0]
    }

    pub fn into_planes(self) -> [Plane; 3] {
        self.planes
    }

    /// Samples per frame across all planes.
    pub fn sample_count(&self) -> usize {
        self.planes.iter().map(|p| p.data.len()).sum()
    }
}

pub(crate) fn max_sample(bit_depth: u8) -> u16 {
    ((1u32 << bit_depth) - 1) as u16
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chroma_sizes_round_up() {
        assert_eq!(ChromaFormat::Yuv420.chroma_size(3, 5), (2, 3));
        assert_eq!(ChromaFormat::Yuv420.chroma_size(64, 64), (32, 32));
        assert_eq!(ChromaFormat::Yuv444.chroma_size(3, 5), (3, 5));
    }

    #[test]
    fn rejects_bad_geometry_and_samples() {
        let y = Plane::filled(4, 4, 0);
        let c = Plane::filled(2, 2, 0);
        assert!(Frame::new(8, ChromaFormat::Yuv420, [y.clone(), c.clone(), c.clone()]).is_ok());
        assert!(Frame::new(8, ChromaFormat::Yuv444, [y.clone(), c.clone(), c.clone()]).is_err());
        assert!(Frame::new(12, ChromaFormat::Yuv420, [y.clone(), c.clone(), c.clone()]).is_err());
        let hot = Plane::filled(2, 2, 256);
        assert!(Frame::new(8, ChromaFormat::Yuv420, [y.clone(), c.clone(), hot.clone()]).is_err());
        assert!(Frame::new(10, ChromaFormat::Yuv420, [y, c, hot]).is_ok());
        assert!(Plane::new(2, 2, vec![0; 3]).is_err());
    }

    #[test]
    fn parses_chroma_names() {
        assert_eq!("420".parse::<ChromaFormat>().unwrap(), ChromaFormat::Yuv420);
        assert_eq!("4:4:4".parse::<ChromaFormat>().unwrap(), ChromaFormat::Yuv444);
        assert!("422".parse::<ChromaFormat>().is_err());
    }
}
