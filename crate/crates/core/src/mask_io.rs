//! `MODLAB-MASK v1` text format.
//!
//! ```text
//! MODLAB-MASK v1 n=<int> origin=<f>,<f> extent=<f>,<f> occupied=<int>
//! <n rows of n characters in {0,1}>
//! ```
//!
//! Rows are written top row (`j = n − 1`) first; column `i` runs left to
//! right. Every line, including the last, ends in `\n`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::sets::PixelMask;

const MAGIC: &str = "MODLAB-MASK v1";

pub fn encode_mask(mask: &PixelMask) -> String {
    let grid = mask.grid();
    let n = grid.n();
    let [ox, oy] = grid.origin();
    let [ex, ey] = grid.extent();
    let mut out = String::with_capacity((n + 1) * n + 96);
    let _ = writeln!(
        out,
        "{MAGIC} n={n} origin={ox},{oy} extent={ex},{ey} occupied={}",
        mask.count()
    );
    for j in (0..n).rev() {
        for i in 0..n {
            out.push(if mask.get(i, j) { '1' } else { '0' });
        }
        out.push('\n');
    }
    out
}

fn format_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        offset,
        reason: reason.into(),
    }
}

fn parse_pair(text: &str, offset: usize, key: &str) -> Result<[f64; 2]> {
    let (a, b) = text
        .split_once(',')
        .ok_or_else(|| format_err(offset, format!("`{key}` needs two comma-separated values")))?;
    let parse = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| format_err(offset, format!("`{key}` value {s:?} is not a number")))
    };
    Ok([parse(a)?, parse(b)?])
}

pub fn decode_mask(bytes: &[u8]) -> Result<PixelMask> {
    let header_end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| format_err(bytes.len(), "missing header line"))?;
    let header =
        std::str::from_utf8(&bytes[..header_end]).map_err(|e| format_err(e.valid_up_to(), "header is not ASCII"))?;
    let rest = header
        .strip_prefix(MAGIC)
        .ok_or_else(|| format_err(0, format!("expected `{MAGIC}`")))?;

    let mut n = None;
    let mut origin = None;
    let mut extent = None;
    let mut occupied = None;
    let mut offset = MAGIC.len();
    for field in rest.split(' ') {
        let field_offset = offset;
        offset += field.len() + 1;
        if field.is_empty() {
            continue;
        }
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| format_err(field_offset, format!("malformed header field {field:?}")))?;
        let value_offset = field_offset + key.len() + 1;
        match key {
            "n" => {
                n = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| format_err(value_offset, format!("`n` value {value:?} is not an integer")))?,
                )
            }
            "origin" => origin = Some(parse_pair(value, value_offset, key)?),
            "extent" => extent = Some(parse_pair(value, value_offset, key)?),
            "occupied" => {
                occupied =
                    Some(value.parse::<usize>().map_err(|_| {
                        format_err(value_offset, format!("`occupied` value {value:?} is not an integer"))
                    })?)
            }
            other => return Err(format_err(field_offset, format!("unknown header field `{other}`"))),
        }
    }
    let missing = |k: &str| format_err(header_end, format!("header lacks `{k}`"));
    let n = n.ok_or_else(|| missing("n"))?;
    let origin = origin.ok_or_else(|| missing("origin"))?;
    let extent = extent.ok_or_else(|| missing("extent"))?;
    let declared = occupied.ok_or_else(|| missing("occupied"))?;
    let grid = Grid::new(origin, extent, n).map_err(|e| format_err(0, e.to_string()))?;

    let body = &bytes[header_end + 1..];
    let row_len = n + 1;
    let mut bits = vec![false; n * n];
    for r in 0..n {
        let row_start = r * row_len;
        let j = n - 1 - r;
        for i in 0..n {
            let pos = row_start + i;
            let abs = header_end + 1 + pos;
            match body.get(pos) {
                Some(b'0') => {}
                Some(b'1') => bits[j * n + i] = true,
                Some(&c) => return Err(format_err(abs, format!("unexpected byte {:?} in row {r}", c as char))),
                None => return Err(format_err(abs, format!("truncated in row {r}"))),
            }
        }
        let pos = row_start + n;
        match body.get(pos) {
            Some(b'\n') => {}
            Some(_) => {
                return Err(format_err(
                    header_end + 1 + pos,
                    format!("row {r} is longer than n = {n}"),
                ))
            }
            None => return Err(format_err(header_end + 1 + pos, format!("row {r} lacks a newline"))),
        }
    }
    let trailing = header_end + 1 + n * row_len;
    if trailing != bytes.len() {
        return Err(format_err(trailing, "trailing data after the last row"));
    }
    let mask = PixelMask::from_bits(grid, bits)?;
    if mask.count() != declared {
        return Err(format_err(
            0,
            format!("header declares {declared} occupied nodes, body has {}", mask.count()),
        ));
    }
    Ok(mask)
}

pub fn save_mask(mask: &PixelMask, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_mask(mask))?;
    Ok(())
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<PixelMask> {
    decode_mask(&std::fs::read(path)?)
}
