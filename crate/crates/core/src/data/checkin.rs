use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::DateTime;
use flate2::read::GzDecoder;
use log::warn;

use crate::error::{Error, Result};

/// One row of a Foursquare-style check-in dump.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckinRecord {
    pub user_raw: String,
    pub venue_raw: String,
    pub category: String,
    pub lat: f64,
    pub lon: f64,
    /// UTC epoch seconds shifted by the row's timezone offset (local clock).
    pub timestamp: i64,
}

#[derive(Debug, Default)]
pub struct ParsedCheckins {
    pub records: Vec<CheckinRecord>,
    pub rows: usize,
    pub malformed: usize,
}

const MAX_MALFORMED_FRACTION: f64 = 0.10;

/// Reads a TSV with columns
/// `user, venue, category id, category name, lat, lon, tz offset (min), UTC time`.
/// Gzip input is detected by its magic bytes.
pub fn parse_checkins(path: &Path) -> Result<ParsedCheckins> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic).map_err(|e| Error::io(path, e))?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if n == 2 && magic == [0x1f, 0x8b] {
        parse_checkins_from_reader(BufReader::new(GzDecoder::new(file)), path)
    } else {
        parse_checkins_from_reader(BufReader::new(file), path)
    }
}

pub fn parse_checkins_from_reader(mut reader: impl BufRead, path: &Path) -> Result<ParsedCheckins> {
    let mut out = ParsedCheckins::default();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader
            .read_until(b'\n', &mut buf)
            .map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        // Public dumps contain stray latin-1 bytes in venue names.
        let line = String::from_utf8_lossy(&buf);
        let line = line.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            continue;
        }
        out.rows += 1;
        match parse_row(line) {
            Some(r) => out.records.push(r),
            None => out.malformed += 1,
        }
    }
    if out.rows == 0 {
        warn!("{}: no check-in rows", path.display());
    } else if out.malformed as f64 > MAX_MALFORMED_FRACTION * out.rows as f64 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("{} of {} rows malformed", out.malformed, out.rows),
        });
    } else if out.malformed > 0 {
        warn!(
            "{}: skipped {} malformed rows",
            path.display(),
            out.malformed
        );
    }
    Ok(out)
}

fn parse_row(line: &str) -> Option<CheckinRecord> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() < 8 {
        return None;
    }
    let lat: f64 = f[4].trim().parse().ok()?;
    let lon: f64 = f[5].trim().parse().ok()?;
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return None;
    }
    let offset_min: i64 = f[6].trim().parse().ok()?;
    let utc = DateTime::parse_from_str(f[7].trim(), "%a %b %d %H:%M:%S %z %Y").ok()?;
    let user = f[0].trim();
    let venue = f[1].trim();
    if user.is_empty() || venue.is_empty() {
        return None;
    }
    Some(CheckinRecord {
        user_raw: user.to_string(),
        venue_raw: venue.to_string(),
        category: f[3].trim().to_string(),
        lat,
        lon,
        timestamp: utc.timestamp() + offset_min * 60,
    })
}
