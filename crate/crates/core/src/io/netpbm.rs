//! Binary NetPBM: 16-bit grayscale PGM (`P5`) for irises, bitmap PBM (`P4`)
//! for masks and codes.

use std::path::Path;

use thiserror::Error;

use crate::image::{BinaryImage, GrayImage};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetpbmError {
    #[error("byte {offset}: expected magic {expected}, found {found:?}")]
    BadMagic {
        offset: usize,
        expected: &'static str,
        found: String,
    },
    #[error("byte {offset}: {reason}")]
    BadHeader { offset: usize, reason: String },
    #[error("byte {offset}: payload needs {expected} bytes, found {actual}")]
    Truncated {
        offset: usize,
        expected: usize,
        actual: usize,
    },
    #[error("{0}")]
    Io(String),
}

pub const PGM_MAXVAL: u16 = 65535;

struct Header {
    width: usize,
    height: usize,
    maxval: Option<usize>,
    /// First payload byte.
    data_start: usize,
}

fn skip_space_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else {
            return pos;
        }
    }
}

fn read_number(bytes: &[u8], pos: usize, what: &str) -> Result<(usize, usize), NetpbmError> {
    let start = skip_space_and_comments(bytes, pos);
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end == start {
        return Err(NetpbmError::BadHeader {
            offset: start,
            reason: format!("expected {what}"),
        });
    }
    let text = std::str::from_utf8(&bytes[start..end]).expect("ascii digits");
    let value = text.parse::<usize>().map_err(|_| NetpbmError::BadHeader {
        offset: start,
        reason: format!("{what} `{text}` out of range"),
    })?;
    Ok((value, end))
}

fn parse_header(bytes: &[u8], magic: &'static str, has_maxval: bool) -> Result<Header, NetpbmError> {
    if bytes.len() < 2 || &bytes[..2] != magic.as_bytes() {
        return Err(NetpbmError::BadMagic {
            offset: 0,
            expected: magic,
            found: String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned(),
        });
    }
    let (width, pos) = read_number(bytes, 2, "width")?;
    let (height, mut pos) = read_number(bytes, pos, "height")?;
    if width == 0 || height == 0 {
        return Err(NetpbmError::BadHeader {
            offset: pos,
            reason: format!("zero extent {width}x{height}"),
        });
    }
    let maxval = if has_maxval {
        let (m, p) = read_number(bytes, pos, "maxval")?;
        if m == 0 || m > 65535 {
            return Err(NetpbmError::BadHeader {
                offset: pos,
                reason: format!("maxval {m} outside 1..=65535"),
            });
        }
        pos = p;
        Some(m)
    } else {
        None
    };
    // exactly one whitespace byte separates header and payload
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(NetpbmError::BadHeader {
            offset: pos,
            reason: "missing whitespace before payload".into(),
        });
    }
    Ok(Header {
        width,
        height,
        maxval,
        data_start: pos + 1,
    })
}

fn check_len(bytes: &[u8], start: usize, expected: usize) -> Result<(), NetpbmError> {
    let actual = bytes.len() - start;
    if actual < expected {
        return Err(NetpbmError::Truncated {
            offset: start,
            expected,
            actual,
        });
    }
    Ok(())
}

/// `round(p · 65535)`, big-endian, as the format requires.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let (h, w) = image.dims();
    let mut out = format!("P5\n{w} {h}\n{PGM_MAXVAL}\n").into_bytes();
    out.reserve(2 * h * w);
    for &p in image.data() {
        let v = (p.clamp(0.0, 1.0) * PGM_MAXVAL as f64).round() as u16;
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

/// Values come back scaled to [0,1] by the file's maxval.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, NetpbmError> {
    let header = parse_header(bytes, "P5", true)?;
    let maxval = header.maxval.expect("PGM has a maxval");
    let wide = maxval > 255;
    let n = header.width * header.height;
    let expected = if wide { 2 * n } else { n };
    check_len(bytes, header.data_start, expected)?;
    let payload = &bytes[header.data_start..header.data_start + expected];
    let data = if wide {
        payload
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / maxval as f64)
            .collect()
    } else {
        payload.iter().map(|&b| b as f64 / maxval as f64).collect()
    };
    let image = GrayImage::new(header.height, header.width, data);
    if let Some(i) = image.data().iter().position(|&v| v > 1.0) {
        return Err(NetpbmError::BadHeader {
            offset: header.data_start + if wide { 2 * i } else { i },
            reason: "sample exceeds maxval".into(),
        });
    }
    Ok(image)
}

/// `true` is written as a set (black) bit; rows are padded to whole bytes.
pub fn encode_pbm(image: &BinaryImage) -> Vec<u8> {
    let (h, w) = image.dims();
    let mut out = format!("P4\n{w} {h}\n").into_bytes();
    let row_bytes = w.div_ceil(8);
    for r in 0..h {
        let mut row = vec![0u8; row_bytes];
        for c in 0..w {
            if image.get(r, c) {
                row[c / 8] |= 0x80 >> (c % 8);
            }
        }
        out.extend_from_slice(&row);
    }
    out
}

pub fn decode_pbm(bytes: &[u8]) -> Result<BinaryImage, NetpbmError> {
    let header = parse_header(bytes, "P4", false)?;
    let row_bytes = header.width.div_ceil(8);
    check_len(bytes, header.data_start, row_bytes * header.height)?;
    let payload = &bytes[header.data_start..];
    Ok(BinaryImage::from_fn(header.height, header.width, |r, c| {
        payload[r * row_bytes + c / 8] & (0x80 >> (c % 8)) != 0
    }))
}

pub fn write_pgm(path: &Path, image: &GrayImage) -> Result<(), NetpbmError> {
    super::write_file(path, &encode_pgm(image)).map_err(NetpbmError::Io)
}

pub fn read_pgm(path: &Path) -> Result<GrayImage, NetpbmError> {
    decode_pgm(&super::read_file(path).map_err(NetpbmError::Io)?)
}

pub fn write_pbm(path: &Path, image: &BinaryImage) -> Result<(), NetpbmError> {
    super::write_file(path, &encode_pbm(image)).map_err(NetpbmError::Io)
}

pub fn read_pbm(path: &Path) -> Result<BinaryImage, NetpbmError> {
    decode_pbm(&super::read_file(path).map_err(NetpbmError::Io)?)
}

/// Rounds every pixel to the 16-bit grid a PGM round trip lands on.
pub fn quantize(image: &GrayImage) -> GrayImage {
    let (h, w) = image.dims();
    GrayImage::new(
        h,
        w,
        image
            .data()
            .iter()
            .map(|&p| (p.clamp(0.0, 1.0) * PGM_MAXVAL as f64).round() / PGM_MAXVAL as f64)
            .collect(),
    )
}
