//! File formats: SFG1 float grids, PBM / SFM1 masks, and 8-bit exports.
//!
//! SFG1 layout (little-endian): the magic `SFG1`, a `u32` side length `n`,
//! then `n²` `f64` values in row-major order. Masks are stored in display
//! order (DC at row/column `n/2`). In PBM files a white pixel (bit 0) marks a
//! known coefficient; in SFM1 text files `1` marks a known coefficient.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::mask::FreqMask;

const SFG1_MAGIC: &[u8; 4] = b"SFG1";

pub fn encode_sfg1(img: &Image) -> Vec<u8> {
    let n = img.n();
    let mut out = Vec::with_capacity(8 + 8 * n * n);
    out.extend_from_slice(SFG1_MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for v in img.pixels() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_sfg1(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 8 || &bytes[..4] != SFG1_MAGIC {
        return Err(Error::Parse("missing SFG1 header".into()));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != 8 * n * n {
        return Err(Error::Parse(format!(
            "SFG1 body has {} bytes, expected {}",
            body.len(),
            8 * n * n
        )));
    }
    let pixels = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Image::new(n, pixels)
}

pub fn save_sfg1(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_sfg1(img))?;
    Ok(())
}

pub fn load_sfg1(path: impl AsRef<Path>) -> Result<Image> {
    decode_sfg1(&fs::read(path)?)
}

/// Loads a grayscale image: SFG1 files verbatim, anything else through the
/// `image` crate as 8-bit luma in `[0, 255]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if bytes.starts_with(SFG1_MAGIC) {
        return decode_sfg1(&bytes);
    }
    let luma = image::load_from_memory(&bytes)?.to_luma8();
    let (w, h) = luma.dimensions();
    if w != h {
        return Err(Error::InvalidParameter(format!(
            "image is {w}x{h}, expected square"
        )));
    }
    Image::new(w as usize, luma.pixels().map(|p| p.0[0] as f64).collect())
}

/// Display-only 8-bit export (clamped to `[0, 255]`); format follows the extension.
pub fn export_gray(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let n = img.n() as u32;
    let bytes: Vec<u8> = img
        .pixels()
        .iter()
        .map(|v| v.clamp(0.0, 255.0).round() as u8)
        .collect();
    let buf = image::GrayImage::from_raw(n, n, bytes).expect("buffer matches dimensions");
    buf.save(path)?;
    Ok(())
}

pub fn encode_pbm(mask: &FreqMask) -> Vec<u8> {
    let n = mask.n();
    let grid = mask.to_display();
    let mut out = format!("P4\n{n} {n}\n").into_bytes();
    let row_bytes = n.div_ceil(8);
    for r in 0..n {
        let mut row = vec![0u8; row_bytes];
        for c in 0..n {
            if !grid[r * n + c] {
                row[c / 8] |= 0x80 >> (c % 8);
            }
        }
        out.extend_from_slice(&row);
    }
    out
}

pub fn encode_sfm1(mask: &FreqMask) -> String {
    let n = mask.n();
    let grid = mask.to_display();
    let mut out = format!("SFM1 {n}\n");
    for r in 0..n {
        for c in 0..n {
            out.push(if grid[r * n + c] { '1' } else { '0' });
        }
        out.push('\n');
    }
    out
}

/// Splits PBM header tokens, skipping `#` comments; returns tokens and body offset.
fn pbm_header(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::new();
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(Error::Parse("truncated PBM header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    // exactly one whitespace byte separates the header from a binary body
    Ok((tokens, i + 1))
}

fn parse_side(tok: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| Error::Parse(format!("bad size token {tok:?}")))
}

pub fn decode_mask(bytes: &[u8], symmetrize: bool) -> Result<FreqMask> {
    if bytes.starts_with(b"P4") {
        let (tok, body) = pbm_header(bytes, 3)?;
        let (w, h) = (parse_side(&tok[1])?, parse_side(&tok[2])?);
        if w != h {
            return Err(Error::Parse(format!("mask is {w}x{h}, expected square")));
        }
        let row_bytes = w.div_ceil(8);
        let data = bytes
            .get(body..body + row_bytes * h)
            .ok_or_else(|| Error::Parse("truncated PBM body".into()))?;
        let mut grid = vec![false; w * w];
        for r in 0..w {
            for c in 0..w {
                let black = data[r * row_bytes + c / 8] & (0x80 >> (c % 8)) != 0;
                grid[r * w + c] = !black;
            }
        }
        return FreqMask::from_display(w, &grid, symmetrize);
    }
    if bytes.starts_with(b"P1") {
        let (tok, body) = pbm_header(bytes, 3)?;
        let (w, h) = (parse_side(&tok[1])?, parse_side(&tok[2])?);
        if w != h {
            return Err(Error::Parse(format!("mask is {w}x{h}, expected square")));
        }
        let bits: Vec<bool> = bytes[body.min(bytes.len())..]
            .iter()
            .filter(|b| **b == b'0' || **b == b'1')
            .map(|b| *b == b'0')
            .collect();
        if bits.len() != w * w {
            return Err(Error::Parse(
                "PBM body has the wrong number of pixels".into(),
            ));
        }
        return FreqMask::from_display(w, &bits, symmetrize);
    }
    let text =
        std::str::from_utf8(bytes).map_err(|_| Error::Parse("unrecognized mask format".into()))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let mut parts = header.split_whitespace();
    if parts.next() != Some("SFM1") {
        return Err(Error::Parse("unrecognized mask format".into()));
    }
    let n = parse_side(
        parts
            .next()
            .ok_or_else(|| Error::Parse("SFM1 header lacks n".into()))?,
    )?;
    let mut grid = Vec::with_capacity(n * n);
    for line in lines {
        for ch in line.chars().filter(|c| !c.is_whitespace()) {
            match ch {
                '0' => grid.push(false),
                '1' => grid.push(true),
                other => {
                    return Err(Error::Parse(format!(
                        "unexpected character {other:?} in SFM1 body"
                    )))
                }
            }
        }
    }
    if grid.len() != n * n {
        return Err(Error::Parse(format!(
            "SFM1 body has {} cells, expected {}",
            grid.len(),
            n * n
        )));
    }
    FreqMask::from_display(n, &grid, symmetrize)
}

/// Writes a P4 PBM when the extension is `.pbm`, SFM1 text otherwise.
pub fn save_mask(mask: &FreqMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let is_pbm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pbm"));
    let mut f = fs::File::create(path)?;
    if is_pbm {
        f.write_all(&encode_pbm(mask))?;
    } else {
        f.write_all(encode_sfm1(mask).as_bytes())?;
    }
    Ok(())
}

pub fn load_mask(path: impl AsRef<Path>, symmetrize: bool) -> Result<FreqMask> {
    decode_mask(&fs::read(path)?, symmetrize)
}
