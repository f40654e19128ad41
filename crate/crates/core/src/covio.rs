//! On-disk formats: the binary covariance file, calibration files, array
//! geometry CSV and scenario truth sidecars.
//!
//! Binary layout, little-endian throughout:
//!
//! | offset | size | field                    |
//! |--------|------|--------------------------|
//! | 0      | 4    | magic `RCOV`             |
//! | 4      | 2    | version (1)              |
//! | 6      | 4    | M                        |
//! | 10     | 8    | N                        |
//! | 18     | 8    | freq_hz                  |
//! | 26     | 8    | lst_seconds              |
//! | 34     | 4    | flags (bit 0 = cleaned)  |
//! | 38     | 16M² | row-major (re, im) pairs |
//!
//! Writers need exclusive access to their path; nothing here locks.

use std::fmt::Write as _;
use std::path::Path;

use crate::beamform::ArrayGeometry;
use crate::config::{parse_list, KeyValueFile};
use crate::detect::EpsilonCalibration;
use crate::error::{Error, FormatError, Result};
use crate::linalg::{CovarianceMatrix, C64};
use crate::skysim::{LWA_LATITUDE_DEG, LWA_LONGITUDE_DEG};

pub const MAGIC: &[u8; 4] = b"RCOV";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 38;
pub const FLAG_CLEANED: u32 = 1;

/// Asymmetry above this (relative) is rejected rather than repaired.
pub const HERMITIAN_REL_TOL: f64 = 1e-9;

pub const CALIBRATION_FORMAT: &str = "rfi-scrub-calibration";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn encode_covariance(r: &CovarianceMatrix, flags: u32) -> Result<Vec<u8>> {
    let dim = r.dim();
    if let Some(pos) = r.as_slice().iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite {
            row: pos / dim,
            col: pos % dim,
        });
    }
    let dim32 = u32::try_from(dim).map_err(|_| Error::InvalidArgument("matrix too large".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * dim * dim);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dim32.to_le_bytes());
    out.extend_from_slice(&r.sample_count.to_le_bytes());
    out.extend_from_slice(&r.freq_hz.to_le_bytes());
    out.extend_from_slice(&r.lst_seconds.to_le_bytes());
    out.extend_from_slice(&flags.to_le_bytes());
    for z in r.as_slice() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    Ok(out)
}

fn le_f64(b: &[u8]) -> f64 {
    f64::from_le_bytes(b.try_into().expect("8-byte slice"))
}

/// Decodes a covariance file image; `path` is only used in errors.
pub fn decode_covariance(bytes: &[u8], path: &Path) -> Result<(CovarianceMatrix, u32)> {
    let fail = |kind| Error::Format {
        path: path.to_path_buf(),
        kind,
    };
    if bytes.len() >= 4 && &bytes[..4] != MAGIC {
        return Err(fail(FormatError::BadMagic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(fail(FormatError::TruncatedHeader));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(fail(FormatError::UnsupportedVersion(version)));
    }
    let dim32 = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes"));
    if dim32 < 2 {
        return Err(fail(FormatError::TooFewAntennas(dim32)));
    }
    let n = u64::from_le_bytes(bytes[10..18].try_into().expect("8 bytes"));
    let freq = le_f64(&bytes[18..26]);
    let lst = le_f64(&bytes[26..34]);
    let flags = u32::from_le_bytes(bytes[34..38].try_into().expect("4 bytes"));
    let dim = dim32 as usize;
    let expected = 16 * dim * dim;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(fail(FormatError::TruncatedPayload {
            expected,
            found: payload.len(),
        }));
    }
    if payload.len() > expected {
        return Err(fail(FormatError::TrailingBytes(payload.len() - expected)));
    }
    let entries: Vec<C64> = payload
        .chunks_exact(16)
        .map(|c| C64::new(le_f64(&c[..8]), le_f64(&c[8..])))
        .collect();
    let asym = CovarianceMatrix::relative_asymmetry(dim, &entries);
    if asym > HERMITIAN_REL_TOL {
        return Err(Error::HermitianViolation { asymmetry: asym });
    }
    if asym > 0.0 {
        log::warn!("{}: symmetrizing (relative asymmetry {asym:e})", path.display());
    }
    Ok((CovarianceMatrix::new(dim, entries, freq, n, lst)?, flags))
}

pub fn write_covariance(path: &Path, r: &CovarianceMatrix, flags: u32) -> Result<()> {
    std::fs::write(path, encode_covariance(r, flags)?)?;
    Ok(())
}

pub fn read_covariance(path: &Path) -> Result<CovarianceMatrix> {
    read_covariance_with_flags(path).map(|(r, _)| r)
}

pub fn read_covariance_with_flags(path: &Path) -> Result<(CovarianceMatrix, u32)> {
    let bytes = std::fs::read(path)?;
    decode_covariance(&bytes, path)
}

pub fn calibration_to_text(cal: &EpsilonCalibration) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "format = {CALIBRATION_FORMAT}");
    let _ = writeln!(s, "version = 1");
    let _ = writeln!(s, "tool_version = {TOOL_VERSION}");
    let _ = writeln!(s, "freq_hz = {}", cal.freq_hz);
    let _ = writeln!(s, "epsilon = {}", cal.epsilon);
    let _ = writeln!(s, "d_ref = {}", cal.d_ref);
    for (lst, eps) in &cal.constituents {
        let _ = writeln!(s, "constituent = {lst} {eps}");
    }
    if let Some(w) = &cal.weights {
        let joined: Vec<String> = w.iter().map(f64::to_string).collect();
        let _ = writeln!(s, "weights = {}", joined.join(","));
    }
    s
}

pub fn calibration_from_text(text: &str, path: &Path) -> Result<EpsilonCalibration> {
    let kv = KeyValueFile::parse(text, path)?;
    kv.check_known(&[
        "format",
        "version",
        "tool_version",
        "freq_hz",
        "epsilon",
        "d_ref",
        "constituent",
        "weights",
    ])?;
    let format: String = kv.require("format")?;
    if format != CALIBRATION_FORMAT {
        let line = kv.get("format").map_or(0, |e| e.line);
        return Err(kv.error(line, format!("not a calibration file (format = {format})")));
    }
    let version: u32 = kv.require("version")?;
    if version != 1 {
        let line = kv.get("version").map_or(0, |e| e.line);
        return Err(kv.error(line, format!("unsupported calibration version {version}")));
    }
    let epsilon: f64 = kv.require("epsilon")?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        let line = kv.get("epsilon").map_or(0, |e| e.line);
        return Err(kv.error(line, "epsilon must be positive"));
    }
    let mut constituents = Vec::new();
    for e in kv.get_all("constituent") {
        let parts: Vec<&str> = e.value.split_whitespace().collect();
        let parsed = match parts.as_slice() {
            [a, b] => a.parse::<f64>().ok().zip(b.parse::<f64>().ok()),
            _ => None,
        };
        constituents.push(parsed.ok_or_else(|| kv.error(e.line, "expected: constituent = lst epsilon"))?);
    }
    let weights = match kv.get("weights") {
        Some(e) => Some(parse_list::<f64>(&e.value).map_err(|m| kv.error(e.line, m))?),
        None => None,
    };
    Ok(EpsilonCalibration {
        epsilon,
        constituents,
        freq_hz: kv.require("freq_hz")?,
        d_ref: kv.parse_value("d_ref")?.unwrap_or(0),
        weights,
    })
}

pub fn write_calibration(path: &Path, cal: &EpsilonCalibration) -> Result<()> {
    std::fs::write(path, calibration_to_text(cal))?;
    Ok(())
}

pub fn read_calibration(path: &Path) -> Result<EpsilonCalibration> {
    let text = std::fs::read_to_string(path)?;
    calibration_from_text(&text, path)
}

/// CSV `id,x_m,y_m,z_m,cable_delay_s`, preceded by `#` lines carrying the
/// site coordinates and reference antenna.
pub fn geometry_to_csv(g: &ArrayGeometry) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# site_latitude_deg = {}", g.site_latitude.to_degrees());
    let _ = writeln!(s, "# site_longitude_deg = {}", g.site_longitude.to_degrees());
    let _ = writeln!(s, "# reference_index = {}", g.reference_index);
    s.push_str("id,x_m,y_m,z_m,cable_delay_s\n");
    for (i, (p, c)) in g.positions.iter().zip(&g.cable_delays).enumerate() {
        let _ = writeln!(s, "{i},{},{},{},{c}", p[0], p[1], p[2]);
    }
    s
}

pub fn geometry_from_csv(text: &str, path: &Path) -> Result<ArrayGeometry> {
    let err = |line: usize, message: String| Error::Config {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lat = LWA_LATITUDE_DEG;
    let mut lon = LWA_LONGITUDE_DEG;
    let mut reference = 0usize;
    let mut rows: Vec<(usize, [f64; 3], f64)> = Vec::new();
    let mut saw_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(comment) = t.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once('=') {
                let v = v.trim();
                match k.trim() {
                    "site_latitude_deg" => lat = v.parse().map_err(|_| err(line, "bad latitude".into()))?,
                    "site_longitude_deg" => lon = v.parse().map_err(|_| err(line, "bad longitude".into()))?,
                    "reference_index" => reference = v.parse().map_err(|_| err(line, "bad reference index".into()))?,
                    _ => {}
                }
            }
            continue;
        }
        if !saw_header {
            if t.replace(' ', "") != "id,x_m,y_m,z_m,cable_delay_s" {
                return Err(err(line, format!("unexpected header '{t}'")));
            }
            saw_header = true;
            continue;
        }
        let cols: Vec<&str> = t.split(',').map(str::trim).collect();
        if cols.len() != 5 {
            return Err(err(line, format!("expected 5 columns, got {}", cols.len())));
        }
        let id: usize = cols[0].parse().map_err(|_| err(line, "bad id".into()))?;
        let mut vals = [0.0; 4];
        for (v, c) in vals.iter_mut().zip(&cols[1..]) {
            *v = c.parse().map_err(|_| err(line, format!("bad number '{c}'")))?;
        }
        rows.push((id, [vals[0], vals[1], vals[2]], vals[3]));
    }
    for (expect, row) in rows.iter().enumerate() {
        if row.0 != expect {
            return Err(err(
                0,
                format!("antenna ids must run 0..M in order; found {} at row {expect}", row.0),
            ));
        }
    }
    ArrayGeometry::new(
        rows.iter().map(|r| r.1).collect(),
        rows.iter().map(|r| r.2).collect(),
        lat.to_radians(),
        lon.to_radians(),
        reference,
    )
}

pub fn write_geometry(path: &Path, g: &ArrayGeometry) -> Result<()> {
    std::fs::write(path, geometry_to_csv(g))?;
    Ok(())
}

pub fn read_geometry(path: &Path) -> Result<ArrayGeometry> {
    let text = std::fs::read_to_string(path)?;
    geometry_from_csv(&text, path)
}
