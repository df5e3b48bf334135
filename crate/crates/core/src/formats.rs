//! On-disk interchange formats.
//!
//! * Rasters are binary PGM (`P5`, maxval 255). Masks use 0 = background and
//!   255 = foreground; on load any intensity above half scale is foreground, so
//!   an 8-bit probability map loads as its 0.5-binarized mask.
//! * A padded raster carries a TOML sidecar `<file>.pad.toml` with its
//!   [`PadInfo`].
//! * Time series are comma-separated text with header `time_min,value`, one
//!   row per slot, and an empty `value` for a blank slot.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{GraphGeometry, Symbol, TimeSeries};
use crate::raster::{binarize, BinaryMask, GrayImage, PadInfo};

/// Writes `bytes` to a sibling temp file and renames it over `path`, so
/// readers never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = match dir {
        Some(d) => d.join(&tmp_name),
        None => PathBuf::from(&tmp_name),
    };
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

// --- PGM -------------------------------------------------------------------

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    source: &'a str,
}

impl HeaderCursor<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            source_name: self.source.to_string(),
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse {
                source_name: self.source.to_string(),
                offset: start,
                message: format!("{what} out of range"),
            })
    }
}

/// Parses a binary PGM; `source` names the input in error messages.
pub fn decode_pgm(bytes: &[u8], source: &str) -> Result<GrayImage> {
    let mut cur = HeaderCursor {
        bytes,
        pos: 0,
        source,
    };
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(cur.err("missing P5 magic number"));
    }
    cur.pos = 2;
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(Error::format(
            source,
            format!(
                "maxval {maxval} at byte {maxval_at} unsupported, only 8-bit (255) rasters are"
            ),
        ));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(cur.err("expected single whitespace before raster data")),
    }
    if width == 0 || height == 0 {
        return Err(Error::format(
            source,
            format!("declared size {width}x{height} is empty"),
        ));
    }
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| Error::format(source, "declared size overflows"))?;
    let data = &bytes[cur.pos..];
    if data.len() < expected {
        return Err(Error::Parse {
            source_name: source.to_string(),
            offset: bytes.len(),
            message: format!(
                "truncated raster: header declares {width}x{height} = {expected} bytes, found {}",
                data.len()
            ),
        });
    }
    if data.len() > expected {
        return Err(Error::format(
            source,
            format!(
                "{} trailing bytes after the {width}x{height} raster",
                data.len() - expected
            ),
        ));
    }
    GrayImage::new(width, height, data.to_vec())
}

pub fn load_raster(path: &Path) -> Result<GrayImage> {
    decode_pgm(&read_file(path)?, &path.display().to_string())
}

pub fn save_raster(img: &GrayImage, path: &Path) -> Result<()> {
    write_atomic(path, &encode_pgm(img))
}

pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    binarize(&load_raster(path)?, 0.5)
}

pub fn save_mask(mask: &BinaryMask, path: &Path) -> Result<()> {
    save_raster(&mask.to_gray(), path)
}

// --- pad sidecars ------------------------------------------------------------

pub fn sidecar_path(raster_path: &Path) -> PathBuf {
    let mut s = raster_path.as_os_str().to_owned();
    s.push(".pad.toml");
    PathBuf::from(s)
}

pub fn save_pad_info(info: &PadInfo, raster_path: &Path) -> Result<()> {
    let text = toml::to_string(info).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    write_atomic(&sidecar_path(raster_path), text.as_bytes())
}

/// Reads the sidecar of `raster_path`, or `None` if it has none.
pub fn load_pad_info(raster_path: &Path) -> Result<Option<PadInfo>> {
    let path = sidecar_path(raster_path);
    if !path.exists() {
        return Ok(None);
    }
    let text = read_text(&path)?;
    toml::from_str(&text)
        .map(Some)
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))
}

/// Loads a mask and, when a pad sidecar is present, crops it back to the
/// original graph raster.
pub fn load_mask_unpadded(path: &Path) -> Result<BinaryMask> {
    let mask = load_mask(path)?;
    match load_pad_info(path)? {
        Some(info) => crate::raster::crop(&mask, &info),
        None => Ok(mask),
    }
}

// --- time series -------------------------------------------------------------

pub const SERIES_HEADER: &str = "time_min,value";

pub fn encode_series(series: &TimeSeries) -> String {
    let mut out = String::with_capacity(16 + series.len() * 8);
    out.push_str(SERIES_HEADER);
    out.push('\n');
    for (i, v) in series.slots.iter().enumerate() {
        out.push_str(&series.time_of(i).to_string());
        out.push(',');
        if let Some(v) = v {
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

/// Parses a series file. Times must run `0, slot_minutes, 2*slot_minutes, ...`
/// and the row count must equal `geom.slot_count`.
pub fn decode_series(
    text: &str,
    symbol: Symbol,
    geom: &GraphGeometry,
    source: &str,
) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| csv_error(e, source))?.clone();
    if headers.len() != 2 || &headers[0] != "time_min" || &headers[1] != "value" {
        return Err(Error::Parse {
            source_name: source.to_string(),
            offset: 0,
            message: format!("expected header `{SERIES_HEADER}`"),
        });
    }
    let mut slots = Vec::with_capacity(geom.slot_count);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(e, source))?;
        let offset = rec.position().map_or(0, |p| p.byte() as usize);
        let parse_err = |message: String| Error::Parse {
            source_name: source.to_string(),
            offset,
            message,
        };
        if rec.len() != 2 {
            return Err(parse_err(format!("expected 2 fields, found {}", rec.len())));
        }
        let time: u32 = rec[0]
            .parse()
            .map_err(|_| parse_err(format!("bad time `{}`", &rec[0])))?;
        let expected = slots.len() as u32 * geom.slot_minutes;
        if time != expected {
            return Err(parse_err(format!(
                "time {time} out of sequence, expected {expected}"
            )));
        }
        let value = match &rec[1] {
            "" => None,
            s => Some(
                s.parse::<i32>()
                    .map_err(|_| parse_err(format!("value `{s}` is not an integer")))?,
            ),
        };
        slots.push(value);
    }
    if slots.len() != geom.slot_count {
        return Err(Error::format(
            source,
            format!("{} rows, expected {}", slots.len(), geom.slot_count),
        ));
    }
    Ok(TimeSeries::from_slots(symbol, geom.slot_minutes, slots))
}

fn csv_error(e: csv::Error, source: &str) -> Error {
    let offset = e.position().map_or(0, |p| p.byte() as usize);
    Error::Parse {
        source_name: source.to_string(),
        offset,
        message: e.to_string(),
    }
}

pub fn load_series(path: &Path, symbol: Symbol, geom: &GraphGeometry) -> Result<TimeSeries> {
    decode_series(&read_text(path)?, symbol, geom, &path.display().to_string())
}

pub fn save_series(series: &TimeSeries, path: &Path) -> Result<()> {
    write_atomic(path, encode_series(series).as_bytes())
}
