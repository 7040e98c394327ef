//! Binary PPM (P6, maxval 255) decoding and encoding.

use std::path::Path;

use super::{Result, RgbImage, ViewError};

fn parse_err(offset: usize, detail: impl Into<String>) -> ViewError {
    ViewError::Parse {
        offset,
        detail: detail.into(),
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    /// Skips whitespace and `#` comments (which run to the end of the line).
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_separators();
        let start = self.pos;
        let mut value: u32 = 0;
        while let Some(&b) = self.bytes.get(self.pos) {
            if !b.is_ascii_digit() {
                break;
            }
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add(u32::from(b - b'0')))
                .ok_or_else(|| parse_err(start, format!("{what} does not fit in 32 bits")))?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(match self.bytes.get(start) {
                None => parse_err(start, format!("header ends before {what}")),
                Some(_) => parse_err(start, format!("expected decimal {what}")),
            });
        }
        Ok(value)
    }
}

/// Decodes a P6 image with maxval 255. Bytes after the pixel payload are ignored.
pub fn decode(bytes: &[u8]) -> Result<RgbImage> {
    match bytes.get(..2) {
        Some(b"P6") => {}
        Some(_) => return Err(parse_err(0, "magic is not P6")),
        None => return Err(parse_err(0, "missing magic")),
    }
    let mut header = Header { bytes, pos: 2 };
    if !bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(parse_err(2, "magic must be followed by whitespace"));
    }
    let width_at = header.pos;
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval_at = header.pos;
    let maxval = header.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(parse_err(width_at, format!("zero dimension {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(parse_err(maxval_at, format!("maxval {maxval} outside 1..=65535")));
    }
    if maxval != 255 {
        return Err(ViewError::Unsupported(format!("maxval {maxval}; only 255 is supported")));
    }
    match bytes.get(header.pos) {
        Some(b) if b.is_ascii_whitespace() => header.pos += 1,
        Some(_) => return Err(parse_err(header.pos, "maxval must be followed by one whitespace byte")),
        None => return Err(parse_err(header.pos, "header ends before pixel data")),
    }
    let payload_at = header.pos;
    let needed = (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| parse_err(width_at, "image dimensions overflow"))?;
    let available = bytes.len() - payload_at;
    if available < needed {
        return Err(parse_err(
            bytes.len(),
            format!("truncated pixel data: expected {needed} bytes, found {available}"),
        ));
    }
    RgbImage::new(
        height as usize,
        width as usize,
        bytes[payload_at..payload_at + needed].to_vec(),
    )
}

pub fn encode(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<RgbImage> {
    decode(&std::fs::read(path)?)
}

pub fn write_ppm(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode(img))?;
    Ok(())
}
