//! Binary portable pixmap I/O: P5 (grayscale) and P6 (RGB), maxval 255.
//! Used for dataset fixtures and debug dumps.

use std::fs;
use std::path::Path;

use super::ImageBuffer;
use crate::error::{Error, Result};

/// Encode as P5 (1 channel) or P6 (3 channels), maxval 255. Pixel values
/// are clamped to [0,1] then quantized by rounding.
pub fn encode(img: &ImageBuffer) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(
        img.pixels
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

pub fn write_file(path: &Path, img: &ImageBuffer) -> Result<()> {
    fs::write(path, encode(img)).map_err(|e| Error::io(path, e))
}

pub fn decode(bytes: &[u8], origin: &Path) -> Result<ImageBuffer> {
    let err = |msg: &str| Error::Parse {
        path: origin.to_path_buf(),
        row: 0,
        message: msg.into(),
    };
    if bytes.len() < 2 {
        return Err(err("file too short for a pixmap"));
    }
    let channels = match &bytes[0..2] {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(err("not a P5/P6 binary pixmap")),
    };

    // header tokens: width, height, maxval; '#' starts a comment to EOL
    let mut pos = 2usize;
    let mut tokens: Vec<usize> = Vec::new();
    while tokens.len() < 3 {
        while pos < bytes.len() && (bytes[pos] as char).is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && (bytes[pos] as char).is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(err("malformed pixmap header"));
        }
        let tok = std::str::from_utf8(&bytes[start..pos]).unwrap();
        tokens.push(tok.parse().map_err(|_| err("bad header number"))?);
    }
    // exactly one whitespace byte separates the header from pixel data
    if pos >= bytes.len() || !(bytes[pos] as char).is_ascii_whitespace() {
        return Err(err("missing header terminator"));
    }
    pos += 1;

    let (width, height, maxval) = (tokens[0], tokens[1], tokens[2]);
    if maxval != 255 {
        return Err(err("only maxval 255 is supported"));
    }
    let expected = width * height * channels;
    let data = &bytes[pos..];
    if data.len() < expected {
        return Err(err(&format!(
            "pixel payload has {} bytes, expected {expected}",
            data.len()
        )));
    }
    let pixels = data[..expected]
        .iter()
        .map(|&b| b as f32 / 255.0)
        .collect();
    let mut img = ImageBuffer::new(height, width, channels, pixels)?;
    img.native_shortest_side = Some(height.min(width));
    Ok(img)
}

pub fn read_file(path: &Path) -> Result<ImageBuffer> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
