//! Reading and writing observed samples.
//!
//! Samples travel as two-column CSV with the header `time,censored`, one
//! observation per row; `censored` is 0 (event observed) or 1
//! (right-censored). Parse failures name the 1-based line.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::survival::CensoredSample;

/// Parses sample CSV text (header `time,censored`).
pub fn parse_sample_csv(text: &str) -> Result<CensoredSample> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((i, line)) => {
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    continue;
                }
                break (i, trimmed);
            }
            None => {
                return Err(Error::Parse { line: 1, message: "empty file".into() });
            }
        }
    };
    let normalized: String = header.1.split(',').map(str::trim).collect::<Vec<_>>().join(",");
    if !normalized.eq_ignore_ascii_case("time,censored") {
        return Err(Error::Parse {
            line: header.0 + 1,
            message: format!("expected header \"time,censored\", found {:?}", header.1),
        });
    }
    let mut times = Vec::new();
    let mut flags = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut cols = trimmed.split(',');
        let (Some(t), Some(c), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 2 columns, found {:?}", trimmed),
            });
        };
        let time: f64 = t.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad time value {:?}", t.trim()),
        })?;
        let flag: u8 = match c.trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("bad censored flag {other:?} (expected 0 or 1)"),
                })
            }
        };
        times.push(time);
        flags.push(flag);
    }
    CensoredSample::new(times, flags)
}

/// Reads a sample from a `time,censored` CSV file.
pub fn read_sample_csv(path: &Path) -> Result<CensoredSample> {
    let text = fs::read_to_string(path)?;
    parse_sample_csv(&text).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Serializes a sample to CSV text (header `time,censored`).
pub fn sample_to_csv(sample: &CensoredSample) -> String {
    let mut out = String::from("time,censored\n");
    for (t, c) in sample.times().iter().zip(sample.flags()) {
        out.push_str(&format!("{t},{c}\n"));
    }
    out
}

/// Writes a sample to a CSV file.
pub fn write_sample_csv(path: &Path, sample: &CensoredSample) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(sample_to_csv(sample).as_bytes())?;
    Ok(())
}
