//! Waveform files.
//!
//! Text: a `time_s,i0_v,i90_v` header, then one sample per line.
//!
//! Binary (`QRW1`): the magic bytes `QRW1`, then little-endian `u32` schema
//! (1), `f64` sample period in seconds, `u64` sample count, and that many
//! interleaved `(f64 i0, f64 i90)` pairs.

use std::fmt::Write as _;
use std::io::{self, Write};

use clap::ValueEnum;
use injlock::phasex::WaveformPair;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"QRW1";
pub const SCHEMA: u32 = 1;
pub const TEXT_HEADER: &str = "time_s,i0_v,i90_v";
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveFormat {
    Text,
    Binary,
}

#[derive(Debug, Error, PartialEq)]
#[error("malformed waveform at byte offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

fn fail<T>(offset: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        offset,
        message: message.into(),
    })
}

pub fn write_waveform<W: Write>(wf: &WaveformPair, format: WaveFormat, out: W) -> io::Result<()> {
    match format {
        WaveFormat::Text => write_text(wf, out),
        WaveFormat::Binary => write_binary(wf, out),
    }
}

pub fn write_binary<W: Write>(wf: &WaveformPair, mut out: W) -> io::Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 16 * wf.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&SCHEMA.to_le_bytes());
    buf.extend_from_slice(&wf.sample_period.to_le_bytes());
    buf.extend_from_slice(&(wf.len() as u64).to_le_bytes());
    for (a, b) in wf.i0.iter().zip(&wf.i90) {
        buf.extend_from_slice(&a.to_le_bytes());
        buf.extend_from_slice(&b.to_le_bytes());
    }
    out.write_all(&buf)
}

/// Values are printed in shortest round-trip form, so parsing the file back
/// gives bit-identical samples.
pub fn write_text<W: Write>(wf: &WaveformPair, out: W) -> io::Result<()> {
    let mut out = io::BufWriter::new(out);
    writeln!(out, "{TEXT_HEADER}")?;
    let mut line = String::with_capacity(64);
    for (k, (a, b)) in wf.i0.iter().zip(&wf.i90).enumerate() {
        line.clear();
        let t = wf.t0 + k as f64 * wf.sample_period;
        let _ = writeln!(line, "{t:e},{a:e},{b:e}");
        out.write_all(line.as_bytes())?;
    }
    out.flush()
}

/// Chooses the parser from the leading magic bytes.
pub fn detect_format(bytes: &[u8]) -> WaveFormat {
    if bytes.starts_with(MAGIC) {
        WaveFormat::Binary
    } else {
        WaveFormat::Text
    }
}

pub fn parse_waveform(bytes: &[u8], format: Option<WaveFormat>) -> Result<WaveformPair, ParseError> {
    match format.unwrap_or_else(|| detect_format(bytes)) {
        WaveFormat::Binary => parse_binary(bytes),
        WaveFormat::Text => parse_text(bytes),
    }
}

fn take<const N: usize>(bytes: &[u8], at: usize, what: &str) -> Result<[u8; N], ParseError> {
    match bytes.get(at..at + N) {
        Some(s) => Ok(s.try_into().expect("slice of length N")),
        None => fail(
            bytes.len(),
            format!("file ends while reading {what} ({N} bytes expected at offset {at})"),
        ),
    }
}

pub fn parse_binary(bytes: &[u8]) -> Result<WaveformPair, ParseError> {
    let magic: [u8; 4] = take(bytes, 0, "magic")?;
    if &magic != MAGIC {
        return fail(0, format!("bad magic {magic:02x?}, expected \"QRW1\""));
    }
    let schema = u32::from_le_bytes(take(bytes, 4, "schema version")?);
    if schema != SCHEMA {
        return fail(4, format!("unsupported schema version {schema}"));
    }
    let dt = f64::from_le_bytes(take(bytes, 8, "sample period")?);
    if !(dt > 0.0 && dt.is_finite()) {
        return fail(8, format!("sample period must be positive and finite, got {dt}"));
    }
    let count = u64::from_le_bytes(take(bytes, 16, "sample count")?);
    let body = bytes.len() - HEADER_LEN;
    let expected = count.checked_mul(16).filter(|&n| n <= usize::MAX as u64);
    match expected {
        Some(n) if n as usize == body => {}
        Some(n) if (n as usize) > body => {
            return fail(
                bytes.len(),
                format!(
                    "file ends after {} complete samples; header declares {count}",
                    body / 16
                ),
            )
        }
        Some(n) => {
            return fail(
                HEADER_LEN + n as usize,
                format!("{} trailing bytes after {count} samples", body - n as usize),
            )
        }
        None => return fail(16, format!("sample count {count} is too large")),
    }
    if count == 0 {
        return fail(16, "waveform has no samples");
    }
    let n = count as usize;
    let mut i0 = Vec::with_capacity(n);
    let mut i90 = Vec::with_capacity(n);
    for (k, chunk) in bytes[HEADER_LEN..].chunks_exact(16).enumerate() {
        let a = f64::from_le_bytes(chunk[..8].try_into().expect("8 bytes"));
        let b = f64::from_le_bytes(chunk[8..].try_into().expect("8 bytes"));
        if !(a.is_finite() && b.is_finite()) {
            return fail(HEADER_LEN + 16 * k, format!("non-finite sample {k}"));
        }
        i0.push(a);
        i90.push(b);
    }
    WaveformPair::new(i0, i90, dt, 0.0).map_err(|e| ParseError {
        offset: HEADER_LEN,
        message: e.to_string(),
    })
}

pub fn parse_text(bytes: &[u8]) -> Result<WaveformPair, ParseError> {
    let text = match std::str::from_utf8(bytes) {
        Ok(t) => t,
        Err(e) => return fail(e.valid_up_to(), "file is not valid UTF-8 text"),
    };
    let mut offset = 0;
    let mut lines = text.split_inclusive('\n');
    let header = lines.next().unwrap_or("");
    if header.trim_end() != TEXT_HEADER {
        return fail(0, format!("expected header line \"{TEXT_HEADER}\""));
    }
    offset += header.len();
    let mut times = Vec::new();
    let mut i0 = Vec::new();
    let mut i90 = Vec::new();
    for line in lines {
        let start = offset;
        offset += line.len();
        let body = line.trim_end_matches(['\n', '\r']);
        if body.is_empty() {
            continue;
        }
        let mut fields = [0.0; 3];
        let mut parts = body.split(',');
        let mut col = start;
        for (j, slot) in fields.iter_mut().enumerate() {
            let Some(tok) = parts.next() else {
                return fail(start, format!("expected 3 fields, found {j}"));
            };
            *slot = match tok.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => return fail(col, format!("cannot parse \"{tok}\" as a finite number")),
            };
            col += tok.len() + 1;
        }
        if parts.next().is_some() {
            return fail(start, "more than 3 fields");
        }
        times.push((fields[0], start));
        i0.push(fields[1]);
        i90.push(fields[2]);
    }
    if times.len() < 2 {
        return fail(offset, "need at least two samples to infer the sample period");
    }
    let t0 = times[0].0;
    let dt = times[1].0 - t0;
    if !(dt > 0.0) {
        return fail(times[1].1, "time stamps must increase");
    }
    for (k, &(t, at)) in times.iter().enumerate() {
        let want = t0 + k as f64 * dt;
        if (t - want).abs() > 1e-6 * dt {
            return fail(at, format!("sample {k} at t = {t} breaks uniform spacing {dt}"));
        }
    }
    WaveformPair::new(i0, i90, dt, t0).map_err(|e| ParseError {
        offset: 0,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WaveformPair {
        WaveformPair::new(
            vec![0.1, -2.5e-7, 3.0, 1.0 / 3.0],
            vec![1e-300, 0.0, -7.25, std::f64::consts::PI],
            2e-11,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn both_formats_round_trip_exactly() {
        let wf = small();
        for f in [WaveFormat::Text, WaveFormat::Binary] {
            let mut buf = Vec::new();
            write_waveform(&wf, f, &mut buf).unwrap();
            assert_eq!(detect_format(&buf), f);
            let back = parse_waveform(&buf, None).unwrap();
            assert_eq!(back, wf);
        }
    }

    #[test]
    fn truncated_binary_names_offset() {
        let mut buf = Vec::new();
        write_binary(&small(), &mut buf).unwrap();
        let e = parse_binary(&buf[..buf.len() - 5]).unwrap_err();
        assert_eq!(e.offset, buf.len() - 5);
        let e = parse_binary(&buf[..10]).unwrap_err();
        assert_eq!(e.offset, 10);
        assert!(e.to_string().contains("byte offset 10"));
    }

    #[test]
    fn trailing_bytes_and_bad_header_fields() {
        let mut buf = Vec::new();
        write_binary(&small(), &mut buf).unwrap();
        let mut long = buf.clone();
        long.push(0);
        assert_eq!(parse_binary(&long).unwrap_err().offset, buf.len());
        let mut bad = buf.clone();
        bad[4] = 9;
        assert_eq!(parse_binary(&bad).unwrap_err().offset, 4);
        let mut bad = buf;
        bad[8..16].copy_from_slice(&(-1.0f64).to_le_bytes());
        assert_eq!(parse_binary(&bad).unwrap_err().offset, 8);
    }

    #[test]
    fn text_errors_point_at_the_bad_token() {
        let src = "time_s,i0_v,i90_v\n0,1,2\n1e-9,abc,3\n";
        let e = parse_text(src.as_bytes()).unwrap_err();
        assert_eq!(e.offset, src.find("abc").unwrap());
        let e = parse_text(b"t,a,b\n0,1,2\n").unwrap_err();
        assert_eq!(e.offset, 0);
    }
}
