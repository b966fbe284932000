//! Grayscale image and raw field files.
//!
//! Supported by extension:
//! - `.pgm`: binary P5, maxval up to 65535 (16-bit samples are big-endian)
//! - `.png`: grayscale PNG, 8 or 16 bit
//! - `.fld`: lossless `f64` field, `b"MMF1"`, height and width as `u32` LE,
//!   then row-major `f64` LE values
//!
//! Intensities map linearly to `[0, 1]` on read. Writes clamp to `[0, 1]`
//! and quantize, except `.fld` which stores values verbatim.

use std::fs;
use std::path::Path;

use metamorph_core::{GridGeometry, ScalarField};

use crate::error::CliError;

const FLD_MAGIC: &[u8; 4] = b"MMF1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Pgm,
    Png,
    Fld,
}

fn format_of(path: &Path) -> Result<Format, CliError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("pgm") => Ok(Format::Pgm),
        Some("png") => Ok(Format::Png),
        Some("fld") => Ok(Format::Fld),
        _ => Err(CliError::Usage(format!(
            "unsupported file extension for {} (expected .pgm, .png or .fld)",
            path.display()
        ))),
    }
}

pub fn read_image(path: &Path) -> Result<ScalarField, CliError> {
    let format = format_of(path)?;
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let parse_err = |offset, message: String| CliError::Parse {
        path: path.to_path_buf(),
        offset,
        message,
    };
    match format {
        Format::Pgm => decode_pgm(&bytes).map_err(|(offset, m)| parse_err(offset, m)),
        Format::Fld => decode_fld(&bytes).map_err(|(offset, m)| parse_err(offset, m)),
        Format::Png => decode_png(&bytes).map_err(|m| parse_err(0, m)),
    }
}

pub fn write_image(field: &ScalarField, path: &Path) -> Result<(), CliError> {
    let bytes = match format_of(path)? {
        Format::Pgm => encode_pgm(field, 255),
        Format::Fld => encode_fld(field),
        Format::Png => {
            let g = field.geometry();
            let img = image::GrayImage::from_raw(g.width() as u32, g.height() as u32, quantize8(field))
                .expect("buffer length matches geometry");
            return img.save(path).map_err(|e| CliError::image(path, e));
        }
    };
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn quantize(x: f64, maxval: u32) -> u32 {
    (x.clamp(0.0, 1.0) * maxval as f64).round() as u32
}

pub(crate) fn quantize8(field: &ScalarField) -> Vec<u8> {
    field.values().iter().map(|&x| quantize(x, 255) as u8).collect()
}

/// Encodes a P5 file with the given maxval (1..=65535).
pub fn encode_pgm(field: &ScalarField, maxval: u32) -> Vec<u8> {
    assert!((1..=65535).contains(&maxval), "maxval out of range");
    let g = field.geometry();
    let mut out = format!("P5\n{} {}\n{}\n", g.width(), g.height(), maxval).into_bytes();
    for &x in field.values() {
        let q = quantize(x, maxval);
        if maxval < 256 {
            out.push(q as u8);
        } else {
            out.extend_from_slice(&(q as u16).to_be_bytes());
        }
    }
    out
}

type ParseResult<T> = Result<T, (usize, String)>;

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> ParseResult<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err((start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| (start, format!("{what} out of range")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> ParseResult<ScalarField> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err((0, "bad magic number, expected P5".into()));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let max_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if !(1..=65535).contains(&maxval) {
        return Err((max_at, format!("maxval {maxval} outside 1..=65535")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err((cur.pos, "expected a single whitespace after maxval".into())),
    }
    let geometry = GridGeometry::new(height, width).map_err(|e| (0, e.to_string()))?;
    let sample = if maxval < 256 { 1 } else { 2 };
    let data = &bytes[cur.pos..];
    let needed = geometry.len() * sample;
    if data.len() < needed {
        return Err((
            cur.pos + data.len(),
            format!("truncated raster: {needed} bytes expected, {} present", data.len()),
        ));
    }
    let scale = maxval as f64;
    let mut values = Vec::with_capacity(geometry.len());
    for (k, chunk) in data[..needed].chunks_exact(sample).enumerate() {
        let raw = if sample == 1 {
            chunk[0] as u32
        } else {
            u16::from_be_bytes([chunk[0], chunk[1]]) as u32
        };
        if raw > maxval {
            return Err((cur.pos + k * sample, format!("sample {raw} exceeds maxval {maxval}")));
        }
        values.push(raw as f64 / scale);
    }
    Ok(ScalarField::new(geometry, values).expect("finite samples"))
}

fn decode_png(bytes: &[u8]) -> Result<ScalarField, String> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png).map_err(|e| e.to_string())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let geometry = GridGeometry::new(h, w).map_err(|e| e.to_string())?;
    let values = if img.color().bytes_per_pixel() / img.color().channel_count() > 1 {
        img.to_luma16().into_raw().into_iter().map(|x| x as f64 / 65535.0).collect()
    } else {
        img.to_luma8().into_raw().into_iter().map(|x| x as f64 / 255.0).collect()
    };
    Ok(ScalarField::new(geometry, values).expect("finite samples"))
}

pub fn encode_fld(field: &ScalarField) -> Vec<u8> {
    let g = field.geometry();
    let mut out = Vec::with_capacity(12 + 8 * g.len());
    out.extend_from_slice(FLD_MAGIC);
    out.extend_from_slice(&(g.height() as u32).to_le_bytes());
    out.extend_from_slice(&(g.width() as u32).to_le_bytes());
    for x in field.values() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_fld(bytes: &[u8]) -> ParseResult<ScalarField> {
    if bytes.len() < 4 || &bytes[..4] != FLD_MAGIC {
        return Err((0, "bad magic number, expected MMF1".into()));
    }
    if bytes.len() < 12 {
        return Err((bytes.len(), "truncated header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let geometry = GridGeometry::new(u32_at(4), u32_at(8)).map_err(|e| (4, e.to_string()))?;
    let data = &bytes[12..];
    if data.len() != 8 * geometry.len() {
        return Err((
            12 + data.len().min(8 * geometry.len()),
            format!("payload is {} bytes, expected {}", data.len(), 8 * geometry.len()),
        ));
    }
    let mut values = Vec::with_capacity(geometry.len());
    for (k, chunk) in data.chunks_exact(8).enumerate() {
        let x = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        if !x.is_finite() {
            return Err((12 + 8 * k, format!("non-finite value {x}")));
        }
        values.push(x);
    }
    Ok(ScalarField::new(geometry, values).expect("checked finite"))
}
