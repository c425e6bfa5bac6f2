use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub start_time: NaiveDateTime,
    pub end_time: NaiveDateTime,
    pub start_lat: f64,
    pub start_lon: f64,
    pub end_lat: f64,
    pub end_lon: f64,
}

impl TripRecord {
    pub fn validate(&self) -> Result<()> {
        if self.end_time < self.start_time {
            return Err(Error::Validation("trip ends before it starts".into()));
        }
        let coords = [self.start_lat, self.start_lon, self.end_lat, self.end_lon];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation("trip has non-finite coordinate".into()));
        }
        Ok(())
    }
}

/// Outcome of reading a trip file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReadReport {
    pub rows_read: usize,
    pub rows_malformed: usize,
    /// First few malformed rows as `(line, reason)`.
    pub malformed_examples: Vec<(usize, String)>,
}

impl ReadReport {
    pub fn malformed_fraction(&self) -> f64 {
        if self.rows_read == 0 {
            0.0
        } else {
            self.rows_malformed as f64 / self.rows_read as f64
        }
    }
}

const COLUMNS: [&str; 6] = [
    "started_at",
    "ended_at",
    "start_lat",
    "start_lng",
    "end_lat",
    "end_lng",
];

/// Parse a delimited trip file with a header row.
///
/// Required columns are located by name; others are ignored. Rows that fail
/// to parse are skipped and counted.
pub fn read_trips<R: Read>(input: R) -> Result<(Vec<TripRecord>, ReadReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let mut idx = [0usize; 6];
    for (slot, name) in idx.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim_matches('"').eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Ingest(format!("trip file is missing column `{name}`")))?;
    }

    let mut trips = Vec::new();
    let mut report = ReadReport::default();
    for (line, row) in reader.records().enumerate() {
        report.rows_read += 1;
        let parsed = row
            .map_err(|e| e.to_string())
            .and_then(|r| parse_row(&r, &idx));
        match parsed {
            Ok(trip) => trips.push(trip),
            Err(reason) => {
                report.rows_malformed += 1;
                if report.malformed_examples.len() < 10 {
                    // +2: header row and 1-based numbering.
                    report.malformed_examples.push((line + 2, reason));
                }
            }
        }
    }
    Ok((trips, report))
}

pub fn read_trips_file(path: &Path) -> Result<(Vec<TripRecord>, ReadReport)> {
    let file = std::fs::File::open(path)?;
    read_trips(std::io::BufReader::new(file))
}

fn parse_row(row: &csv::StringRecord, idx: &[usize; 6]) -> std::result::Result<TripRecord, String> {
    let field = |i: usize| {
        row.get(idx[i])
            .ok_or_else(|| format!("missing `{}`", COLUMNS[i]))
    };
    let coord = |i: usize| -> std::result::Result<f64, String> {
        let raw = field(i)?;
        raw.parse::<f64>()
            .map_err(|_| format!("bad `{}`: {raw:?}", COLUMNS[i]))
    };
    let trip = TripRecord {
        start_time: parse_timestamp(field(0)?)?,
        end_time: parse_timestamp(field(1)?)?,
        start_lat: coord(2)?,
        start_lon: coord(3)?,
        end_lat: coord(4)?,
        end_lon: coord(5)?,
    };
    trip.validate().map_err(|e| e.to_string())?;
    Ok(trip)
}

/// ISO-8601 timestamp, with either `T` or a space separator, optional
/// fractional seconds, and an optional offset. An offset is dropped and the
/// wall-clock time kept, since intervals are local calendar days.
pub fn parse_timestamp(raw: &str) -> std::result::Result<NaiveDateTime, String> {
    let s = raw.trim().trim_matches('"');
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t);
        }
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.naive_local());
    }
    if let Ok(t) = DateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f%:z") {
        return Ok(t.naive_local());
    }
    Err(format!("bad timestamp {s:?}"))
}
