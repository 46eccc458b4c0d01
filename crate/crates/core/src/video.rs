//! Raw planar YUV and 8-bit Y4M streams.
//!
//! Raw files are frame-sequential Y, Cb, Cr planes with no header. 8-bit
//! samples take one byte; 10-bit samples take two bytes, little-endian.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::{max_sample, ChromaFormat, Frame, Plane};

/// Geometry and sample format of a raw stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RawFormat {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub chroma: ChromaFormat,
}

impl RawFormat {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Frame(format!("invalid geometry {}x{}", self.width, self.height)));
        }
        if !matches!(self.bit_depth, 8 | 10) {
            return Err(Error::Frame(format!("unsupported bit depth {}", self.bit_depth)));
        }
        Ok(())
    }

    pub fn bytes_per_sample(&self) -> usize {
        if self.bit_depth > 8 { 2 } else { 1 }
    }

    pub fn samples_per_frame(&self) -> usize {
        let (cw, ch) = self.chroma.chroma_size(self.width, self.height);
        self.width * self.height + 2 * cw * ch
    }

    pub fn frame_bytes(&self) -> usize {
        self.samples_per_frame() * self.bytes_per_sample()
    }

    pub fn of(frame: &Frame) -> Self {
        Self {
            width: frame.width(),
            height: frame.height(),
            bit_depth: frame.bit_depth(),
            chroma: frame.chroma(),
        }
    }
}

fn decode_frame(buf: &[u8], fmt: &RawFormat) -> Result<Frame> {
    let (cw, ch) = fmt.chroma.chroma_size(fmt.width, fmt.height);
    let sizes = [(fmt.width, fmt.height), (cw, ch), (cw, ch)];
    let bps = fmt.bytes_per_sample();
    let mut offset = 0;
    let planes = sizes.map(|(w, h)| {
        let bytes = &buf[offset..offset + w * h * bps];
        offset += w * h * bps;
        let data = if bps == 1 {
            bytes.iter().map(|&b| u16::from(b)).collect()
        } else {
            bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect()
        };
        Plane::new(w, h, data)
    });
    let [y, u, v] = planes;
    Frame::new(fmt.bit_depth, fmt.chroma, [y?, u?, v?])
}

fn encode_frame(frame: &Frame, out: &mut Vec<u8>) {
    for plane in frame.planes() {
        if frame.bit_depth() > 8 {
            for &s in plane.data() {
                out.extend_from_slice(&s.to_le_bytes());
            }
        } else {
            out.extend(plane.data().iter().map(|&s| s as u8));
        }
    }
}

/// Reads frames until end of input. A trailing partial frame is an error.
pub fn read_raw(mut input: impl Read, fmt: &RawFormat) -> Result<Vec<Frame>> {
    fmt.validate()?;
    let size = fmt.frame_bytes();
    let mut frames = Vec::new();
    let mut buf = vec![0u8; size];
    loop {
        let got = read_full(&mut input, &mut buf)?;
        if got == 0 {
            break;
        }
        if got < size {
            return Err(Error::Frame(format!(
                "truncated raw stream: frame {} has {got} of {size} bytes",
                frames.len()
            )));
        }
        frames.push(decode_frame(&buf, fmt)?);
    }
    Ok(frames)
}

fn read_full(input: &mut impl Read, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match input.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::io("<stream>", e)),
        }
    }
    Ok(filled)
}

fn check_format(frames: &[Frame], fmt: &RawFormat) -> Result<()> {
    for (i, f) in frames.iter().enumerate() {
        if RawFormat::of(f) != *fmt {
            return Err(Error::Frame(format!("frame {i} does not match the stream format")));
        }
    }
    Ok(())
}

pub fn write_raw(mut out: impl Write, frames: &[Frame]) -> Result<()> {
    let mut buf = Vec::new();
    for f in frames {
        buf.clear();
        encode_frame(f, &mut buf);
        out.write_all(&buf).map_err(|e| Error::io("<stream>", e))?;
    }
    out.flush().map_err(|e| Error::io("<stream>", e))
}

/// Parsed Y4M stream header. Only the fields needed to decode frames are kept;
/// frame rate and aspect are carried through on write.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Y4mHeader {
    pub width: usize,
    pub height: usize,
    pub chroma: ChromaFormat,
    pub frame_rate: (u32, u32),
}

impl Y4mHeader {
    pub fn format(&self) -> RawFormat {
        RawFormat {
            width: self.width,
            height: self.height,
            bit_depth: 8,
            chroma: self.chroma,
        }
    }

    fn parse(line: &str) -> Result<Self> {
        let mut tokens = line.split_ascii_whitespace();
        if tokens.next() != Some("YUV4MPEG2") {
            return Err(Error::Frame("not a YUV4MPEG2 stream".into()));
        }
        let (mut width, mut height) = (None, None);
        let mut chroma = ChromaFormat::Yuv420;
        let mut frame_rate = (25, 1);
        for tok in tokens {
            let (tag, val) = tok.split_at(1);
            let bad = || Error::Frame(format!("bad Y4M header token {tok:?}"));
            match tag {
                "W" => width = Some(val.parse::<usize>().map_err(|_| bad())?),
                "H" => height = Some(val.parse::<usize>().map_err(|_| bad())?),
                "C" => {
                    chroma = match val {
                        "420" | "420jpeg" | "420paldv" | "420mpeg2" => ChromaFormat::Yuv420,
                        "444" => ChromaFormat::Yuv444,
                        other => {
                            return Err(Error::Frame(format!("unsupported Y4M colorspace C{other} (8-bit 420/444 only)")))
                        }
                    }
                }
                "F" => {
                    let (n, d) = val.split_once(':').ok_or_else(bad)?;
                    frame_rate = (n.parse().map_err(|_| bad())?, d.parse().map_err(|_| bad())?);
                }
                _ => {}
            }
        }
        match (width, height) {
            (Some(width), Some(height)) if width > 0 && height > 0 => Ok(Self {
                width,
                height,
                chroma,
                frame_rate,
            }),
            _ => Err(Error::Frame("Y4M header lacks a valid W and H".into())),
        }
    }

    fn to_line(&self) -> String {
        let c = match self.chroma {
            ChromaFormat::Yuv420 => "420jpeg",
            ChromaFormat::Yuv444 => "444",
        };
        format!(
            "YUV4MPEG2 W{} H{} F{}:{} Ip A1:1 C{c}\n",
            self.width, self.height, self.frame_rate.0, self.frame_rate.1
        )
    }
}

pub fn read_y4m(input: impl Read) -> Result<(Y4mHeader, Vec<Frame>)> {
    let mut input = BufReader::new(input);
    let io = |e| Error::io("<stream>", e);
    let mut line = String::new();
    input.read_line(&mut line).map_err(io)?;
    let header = Y4mHeader::parse(line.trim_end())?;
    let fmt = header.format();
    let mut buf = vec![0u8; fmt.frame_bytes()];
    let mut frames = Vec::new();
    loop {
        line.clear();
        if input.read_line(&mut line).map_err(io)? == 0 {
            break;
        }
        if !line.starts_with("FRAME") {
            return Err(Error::Frame(format!("expected FRAME marker before frame {}", frames.len())));
        }
        if read_full(&mut input, &mut buf)? != buf.len() {
            return Err(Error::Frame(format!("truncated Y4M frame {}", frames.len())));
        }
        frames.push(decode_frame(&buf, &fmt)?);
    }
    Ok((header, frames))
}

pub fn write_y4m(mut out: impl Write, header: &Y4mHeader, frames: &[Frame]) -> Result<()> {
    check_format(frames, &header.format())?;
    let io = |e| Error::io("<stream>", e);
    out.write_all(header.to_line().as_bytes()).map_err(io)?;
    let mut buf = Vec::new();
    for f in frames {
        buf.clear();
        buf.extend_from_slice(b"FRAME\n");
        encode_frame(f, &mut buf);
        out.write_all(&buf).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads a file as Y4M when it has a `.y4m` extension, else as raw with `fmt`.
/// `fmt` is required for raw files.
pub fn read_video(path: impl AsRef<Path>, fmt: Option<&RawFormat>) -> Result<(Vec<Frame>, Option<Y4mHeader>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let tag = |e: Error| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    };
    if is_y4m(path) {
        let (header, frames) = read_y4m(file).map_err(tag)?;
        Ok((frames, Some(header)))
    } else {
        let fmt = fmt.ok_or_else(|| {
            Error::InvalidArgument(format!("{}: raw input needs width, height, bit depth and chroma", path.display()))
        })?;
        Ok((read_raw(BufReader::new(file), fmt).map_err(tag)?, None))
    }
}

/// Writes Y4M for `.y4m` paths (8-bit only), raw otherwise.
pub fn write_video(path: impl AsRef<Path>, frames: &[Frame], header: Option<&Y4mHeader>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let out = BufWriter::new(file);
    let tag = |e: Error| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    };
    if is_y4m(path) {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot write an empty Y4M stream".into()))?;
        if first.bit_depth() != 8 {
            return Err(Error::Frame("Y4M output supports 8-bit content only".into()));
        }
        let header = Y4mHeader {
            width: first.width(),
            height: first.height(),
            chroma: first.chroma(),
            frame_rate: header.map_or((25, 1), |h| h.frame_rate),
        };
        write_y4m(out, &header, frames).map_err(tag)
    } else {
        if let Some(first) = frames.first() {
            check_format(frames, &RawFormat::of(first))?;
        }
        write_raw(out, frames).map_err(tag)
    }
}

pub fn is_y4m(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("y4m"))
}

/// Largest sample value a raw stream of this format can hold.
pub fn format_max(fmt: &RawFormat) -> u16 {
    max_sample(fmt.bit_depth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(fmt: &RawFormat, offset: u16) -> Frame {
        let max = format_max(fmt);
        let (cw, ch) = fmt.chroma.chroma_size(fmt.width, fmt.height);
        let plane = |w: usize, h: usize, k: u16| {
            Plane::new(w, h, (0..w * h).map(|i| (i as u16 * 7 + k + offset) % (max + 1)).collect()).unwrap()
        };
        Frame::new(
            fmt.bit_depth,
            fmt.chroma,
            [plane(fmt.width, fmt.height, 0), plane(cw, ch, 1), plane(cw, ch, 2)],
        )
        .unwrap()
    }

    #[test]
    fn raw_10bit_size_and_round_trip() {
        let fmt = RawFormat {
            width: 64,
            height: 64,
            bit_depth: 10,
            chroma: ChromaFormat::Yuv420,
        };
        let frames = vec![ramp(&fmt, 0), ramp(&fmt, 300)];
        let mut bytes = Vec::new();
        write_raw(&mut bytes, &frames).unwrap();
        assert_eq!(bytes.len(), 2 * (64 * 64 + 2 * 32 * 32) * 2);
        assert_eq!(read_raw(bytes.as_slice(), &fmt).unwrap(), frames);
        assert!(read_raw(&bytes[..bytes.len() - 1], &fmt).is_err());
    }

    #[test]
    fn raw_rejects_out_of_range_10bit_samples() {
        let fmt = RawFormat {
            width: 2,
            height: 2,
            bit_depth: 10,
            chroma: ChromaFormat::Yuv444,
        };
        let bytes = vec![0xff; fmt.frame_bytes()];
        assert!(read_raw(bytes.as_slice(), &fmt).is_err());
    }

    #[test]
    fn y4m_round_trip() {
        for chroma in [ChromaFormat::Yuv420, ChromaFormat::Yuv444] {
            let fmt = RawFormat {
                width: 9,
                height: 5,
                bit_depth: 8,
                chroma,
            };
            let header = Y4mHeader {
                width: 9,
                height: 5,
                chroma,
                frame_rate: (30000, 1001),
            };
            let frames = vec![ramp(&fmt, 3), ramp(&fmt, 9)];
            let mut bytes = Vec::new();
            write_y4m(&mut bytes, &header, &frames).unwrap();
            let (h, back) = read_y4m(bytes.as_slice()).unwrap();
            assert_eq!(h, header);
            assert_eq!(back, frames);
        }
    }

    #[test]
    fn y4m_header_parsing() {
        let h = Y4mHeader::parse("YUV4MPEG2 W1920 H1080 F50:1 It A0:0 C420mpeg2 XYSCSS=420MPEG2").unwrap();
        assert_eq!((h.width, h.height, h.chroma, h.frame_rate), (1920, 1080, ChromaFormat::Yuv420, (50, 1)));
        assert!(Y4mHeader::parse("YUV4MPEG2 W16 H16 C420p10").is_err());
        assert!(Y4mHeader::parse("YUV4MPEG2 W16").is_err());
        assert!(Y4mHeader::parse("RIFF W16 H16").is_err());
    }
}
