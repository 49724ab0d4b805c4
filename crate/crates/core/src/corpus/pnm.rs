//! Binary PPM (P6) and PGM (P5) files. Colour images are written with
//! 16-bit samples; readers accept any maxval up to 65535.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

const MAX16: f64 = 65535.0;

pub fn encode_ppm16(img: &Image) -> Vec<u8> {
    let (h, w) = (img.height(), img.width());
    let mut out = format!("P6\n{w} {h}\n65535\n").into_bytes();
    out.reserve(h * w * 6);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                out.extend_from_slice(&quantize16(img.get(c, y, x)).to_be_bytes());
            }
        }
    }
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    let (hdr, mut pos) = parse_header(bytes, b"P6")?;
    let mut img = Image::zeros(hdr.height, hdr.width);
    for y in 0..hdr.height {
        for x in 0..hdr.width {
            for c in 0..3 {
                img.set(c, y, x, read_sample(bytes, &mut pos, hdr.maxval)?);
            }
        }
    }
    trailing(bytes, pos)?;
    Ok(img)
}

/// Grayscale image as row-major values in [0, 1] plus (height, width).
pub fn encode_pgm8(values: &[f64], height: usize, width: usize) -> Result<Vec<u8>> {
    if values.len() != height * width {
        return Err(Error::shape(format!(
            "pgm data has {} values for {height}x{width}",
            values.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<(Vec<f64>, usize, usize)> {
    let (hdr, mut pos) = parse_header(bytes, b"P5")?;
    let mut values = Vec::with_capacity(hdr.height * hdr.width);
    for _ in 0..hdr.height * hdr.width {
        values.push(read_sample(bytes, &mut pos, hdr.maxval)?);
    }
    trailing(bytes, pos)?;
    Ok((values, hdr.height, hdr.width))
}

pub fn write_ppm16(img: &Image, path: &Path) -> Result<()> {
    fs::write(path, encode_ppm16(img)).map_err(|e| Error::io(path, e))
}

pub fn read_ppm(path: &Path) -> Result<Image> {
    decode_ppm(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_pgm8(values: &[f64], height: usize, width: usize, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm8(values, height, width)?).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    decode_pgm(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

fn quantize16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * MAX16).round() as u16
}

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
}

fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> Result<(Header, usize)> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::parse(
            0,
            format!("expected magic {}", String::from_utf8_lossy(magic)),
        ));
    }
    let mut pos = 2;
    let width = header_number(bytes, &mut pos, "width")?;
    let height = header_number(bytes, &mut pos, "height")?;
    let maxval = header_number(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::parse(pos, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse(pos, format!("maxval {maxval} outside 1..=65535")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::parse(pos, "expected whitespace after maxval")),
    }
    Ok((
        Header {
            width,
            height,
            maxval: maxval as u32,
        },
        pos,
    ))
}

fn header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            _ => break,
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::parse(start, format!("expected {what}")));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::parse(start, format!("{what} out of range")))
}

fn read_sample(bytes: &[u8], pos: &mut usize, maxval: u32) -> Result<f64> {
    let raw = if maxval < 256 {
        let b = *bytes
            .get(*pos)
            .ok_or_else(|| Error::parse(*pos, "truncated pixel data"))?;
        *pos += 1;
        b as u32
    } else {
        let b = bytes
            .get(*pos..*pos + 2)
            .ok_or_else(|| Error::parse(*pos, "truncated pixel data"))?;
        *pos += 2;
        u16::from_be_bytes([b[0], b[1]]) as u32
    };
    if raw > maxval {
        return Err(Error::parse(*pos, format!("sample {raw} exceeds maxval {maxval}")));
    }
    Ok(raw as f64 / maxval as f64)
}

fn trailing(bytes: &[u8], pos: usize) -> Result<()> {
    if pos != bytes.len() {
        return Err(Error::parse(pos, "trailing bytes after pixel data"));
    }
    Ok(())
}
