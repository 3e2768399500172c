//! Binary PPM (P6, 8-bit) and PFM (`Pf`, single channel) codecs.
//!
//! PPM stores intensities quantized to `round(255·v)`; PFM stores `f32`
//! little-endian rows bottom-up with scale `-1.0`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Image, Raster, ScalarGrid};

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Reads whitespace-separated header tokens, skipping `#` comments, and
/// consumes exactly one whitespace byte after the last token.
fn read_header_tokens<R: BufRead>(reader: &mut R, count: usize) -> Result<Vec<String>> {
    let mut tokens = Vec::with_capacity(count);
    let mut current = String::new();
    let mut byte = [0u8; 1];
    let mut in_comment = false;
    while tokens.len() < count {
        if reader.read(&mut byte)? == 0 {
            return Err(format_err("unexpected end of header"));
        }
        let ch = byte[0] as char;
        if in_comment {
            if ch == '\n' {
                in_comment = false;
            }
            continue;
        }
        if ch == '#' && current.is_empty() {
            in_comment = true;
        } else if ch.is_ascii_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else {
            current.push(ch);
        }
    }
    Ok(tokens)
}

fn parse_dim(token: &str, what: &str) -> Result<usize> {
    match token.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format_err(format!("invalid {what} `{token}`"))),
    }
}

pub fn write_ppm<W: Write>(image: &Image, mut out: W) -> Result<()> {
    if image.channels() != 3 {
        return Err(Error::invalid(format!("PPM needs 3 channels, image has {}", image.channels())));
    }
    write!(out, "P6\n{} {}\n255\n", image.width(), image.height())?;
    let bytes: Vec<u8> = image.as_slice().iter().map(|&v| (v * 255.0).round() as u8).collect();
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

pub fn read_ppm<R: Read>(input: R) -> Result<Image> {
    let mut reader = BufReader::new(input);
    let tokens = read_header_tokens(&mut reader, 4)?;
    if tokens[0] != "P6" {
        return Err(format_err(format!("expected P6 magic, found `{}`", tokens[0])));
    }
    let width = parse_dim(&tokens[1], "width")?;
    let height = parse_dim(&tokens[2], "height")?;
    if tokens[3] != "255" {
        return Err(format_err(format!("only 8-bit PPM supported, maxval `{}`", tokens[3])));
    }
    let mut bytes = vec![0u8; width * height * 3];
    reader.read_exact(&mut bytes).map_err(|_| format_err("truncated PPM pixel data"))?;
    let values = bytes.iter().map(|&b| b as f64 / 255.0).collect();
    Image::new(height, width, 3, values)
}

pub fn write_pfm<W: Write>(grid: &ScalarGrid, mut out: W) -> Result<()> {
    let (h, w) = grid.dims();
    write!(out, "Pf\n{w} {h}\n-1.0\n")?;
    let mut bytes = Vec::with_capacity(h * w * 4);
    for row in (0..h).rev() {
        for col in 0..w {
            bytes.extend_from_slice(&(grid.get(row, col) as f32).to_le_bytes());
        }
    }
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

pub fn read_pfm<R: Read>(input: R) -> Result<ScalarGrid> {
    let mut reader = BufReader::new(input);
    let tokens = read_header_tokens(&mut reader, 4)?;
    match tokens[0].as_str() {
        "Pf" => {}
        "PF" => return Err(format_err("color PFM (PF) is not supported; expected Pf")),
        other => return Err(format_err(format!("expected Pf magic, found `{other}`"))),
    }
    let width = parse_dim(&tokens[1], "width")?;
    let height = parse_dim(&tokens[2], "height")?;
    let scale: f64 = tokens[3]
        .parse()
        .map_err(|_| format_err(format!("invalid PFM scale `{}`", tokens[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(format_err("PFM scale must be non-zero"));
    }
    let little_endian = scale < 0.0;
    let mut bytes = vec![0u8; width * height * 4];
    reader.read_exact(&mut bytes).map_err(|_| format_err("truncated PFM data"))?;
    let mut values = vec![0.0; width * height];
    for (k, chunk) in bytes.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let file_row = k / width;
        let col = k % width;
        values[(height - 1 - file_row) * width + col] = v as f64;
    }
    ScalarGrid::new(height, width, values)
}

pub fn save_ppm(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    write_ppm(image, BufWriter::new(File::create(path)?))
}

pub fn load_ppm(path: impl AsRef<Path>) -> Result<Image> {
    read_ppm(File::open(path)?)
}

pub fn save_pfm(grid: &ScalarGrid, path: impl AsRef<Path>) -> Result<()> {
    write_pfm(grid, BufWriter::new(File::create(path)?))
}

pub fn load_pfm(path: impl AsRef<Path>) -> Result<ScalarGrid> {
    read_pfm(File::open(path)?)
}
