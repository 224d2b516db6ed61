//! Reading recording sessions from disk and cutting them into gestures.
//!
//! A dataset directory looks like
//!
//! ```text
//! <root>/<alias>/participant.csv        (optional)
//! <root>/<alias>/<session>/sensors.csv  timestamp_ms,acc_x,acc_y,acc_z,gyro_x,gyro_y,gyro_z
//! <root>/<alias>/<session>/events.csv   label,start_ms,end_ms
//! ```
//!
//! Both CSVs may carry one header line. Accelerometer values are m/s², gyroscope
//! values rad/s, timestamps integer milliseconds.

use std::fmt;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{contract, Error, Result};
use crate::label::GestureLabel;

pub const SENSOR_HEADER: &str = "timestamp_ms,acc_x,acc_y,acc_z,gyro_x,gyro_y,gyro_z";
pub const EVENT_HEADER: &str = "label,start_ms,end_ms";
pub const PARTICIPANT_HEADER: &str = "alias,gender,handedness,age,occupation";
pub const SENSORS_FILE: &str = "sensors.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const PARTICIPANT_FILE: &str = "participant.csv";

/// One fused accelerometer + gyroscope reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSample {
    pub t_ms: i64,
    /// m/s², device axes.
    pub acc: [f64; 3],
    /// rad/s, device axes.
    pub gyro: [f64; 3],
}

impl SensorSample {
    /// The six channels in the order acc x, y, z, gyro x, y, z.
    pub fn channels(&self) -> [f64; 6] {
        [
            self.acc[0],
            self.acc[1],
            self.acc[2],
            self.gyro[0],
            self.gyro[1],
            self.gyro[2],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Handedness {
    Left,
    Right,
}

impl fmt::Display for Handedness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Handedness::Left => "left",
            Handedness::Right => "right",
        })
    }
}

impl FromStr for Handedness {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" => Ok(Handedness::Left),
            "right" => Ok(Handedness::Right),
            other => Err(contract(format!("handedness must be left or right, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParticipantMeta {
    pub alias: String,
    pub gender: String,
    pub handedness: Handedness,
    /// Years; `None` when the dataset carries no participant file.
    pub age: Option<u32>,
    pub occupation: String,
}

impl ParticipantMeta {
    /// Placeholder metadata for a participant known only by alias.
    pub fn anonymous(alias: &str) -> Self {
        Self {
            alias: alias.to_string(),
            gender: "unknown".into(),
            handedness: Handedness::Right,
            age: None,
            occupation: "unknown".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorTrace {
    pub participant: ParticipantMeta,
    pub session_id: String,
    pub samples: Vec<SensorSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GestureEvent {
    pub label: GestureLabel,
    pub start_ms: i64,
    pub end_ms: i64,
}

/// The samples of one performed gesture.
#[derive(Debug, Clone, PartialEq)]
pub struct GestureRecording {
    pub label: GestureLabel,
    pub participant: ParticipantMeta,
    pub session_id: String,
    pub samples: Vec<SensorSample>,
}

fn corrupt(path: &Path, line: u64, reason: impl Into<String>) -> Error {
    Error::CorruptFile {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

/// Reads CSV records with 1-based line numbers, dropping the first record
/// when `is_header` says it is a header line.
fn read_records<R: Read>(
    reader: R,
    path: &Path,
    is_header: impl Fn(&csv::StringRecord) -> bool,
) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (index, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            corrupt(path, line, e.to_string())
        })?;
        if index == 0 && is_header(&record) {
            continue;
        }
        let line = record.position().map_or(index as u64 + 1, |p| p.line());
        out.push((line, record));
    }
    Ok(out)
}

fn not_integer(field: Option<&str>) -> bool {
    field.is_some_and(|f| f.parse::<i64>().is_err())
}

fn parse_num<T: FromStr>(path: &Path, line: u64, field: &str, name: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| corrupt(path, line, format!("non-numeric {name} field {field:?}")))
}

/// Parses sensor rows from any reader.
pub fn read_sensor_samples<R: Read>(reader: R, path: &Path) -> Result<Vec<SensorSample>> {
    let mut samples: Vec<SensorSample> = Vec::new();
    for (line, rec) in read_records(reader, path, |r| not_integer(r.get(0)))? {
        if rec.len() != 7 {
            return Err(corrupt(path, line, format!("expected 7 fields, found {}", rec.len())));
        }
        let t_ms: i64 = parse_num(path, line, &rec[0], "timestamp")?;
        let mut values = [0.0f64; 6];
        for (k, v) in values.iter_mut().enumerate() {
            *v = parse_num(path, line, &rec[k + 1], "sensor")?;
            if !v.is_finite() {
                return Err(corrupt(path, line, "non-finite sensor value"));
            }
        }
        if let Some(prev) = samples.last() {
            if t_ms <= prev.t_ms {
                return Err(corrupt(
                    path,
                    line,
                    format!("non-increasing timestamp {t_ms} after {}", prev.t_ms),
                ));
            }
        }
        samples.push(SensorSample {
            t_ms,
            acc: [values[0], values[1], values[2]],
            gyro: [values[3], values[4], values[5]],
        });
    }
    Ok(samples)
}

/// Parses a sensor CSV. Participant and session come from the directory
/// layout (`<alias>/<session>/sensors.csv`), with metadata from the
/// participant file when present.
pub fn parse_sensor_csv(path: &Path) -> Result<SensorTrace> {
    let samples = read_sensor_samples(fs::File::open(path)?, path)?;
    let session_dir = path.parent();
    let session_id = session_dir
        .and_then(|p| p.file_name())
        .map_or_else(|| "unknown".to_string(), |s| s.to_string_lossy().into_owned());
    let alias_dir = session_dir.and_then(|p| p.parent());
    let alias = alias_dir
        .and_then(|p| p.file_name())
        .map_or_else(|| "unknown".to_string(), |s| s.to_string_lossy().into_owned());
    let participant = match alias_dir.map(|d| d.join(PARTICIPANT_FILE)) {
        Some(meta) if meta.is_file() => parse_participant_csv(&meta)?,
        _ => ParticipantMeta::anonymous(&alias),
    };
    Ok(SensorTrace {
        participant,
        session_id,
        samples,
    })
}

pub fn read_events<R: Read>(reader: R, path: &Path) -> Result<Vec<GestureEvent>> {
    let mut events = Vec::new();
    for (line, rec) in read_records(reader, path, |r| not_integer(r.get(1)))? {
        if rec.len() != 3 {
            return Err(corrupt(path, line, format!("expected 3 fields, found {}", rec.len())));
        }
        let label: GestureLabel = rec[0].parse().map_err(|_| Error::UnknownLabel {
            path: path.to_path_buf(),
            line,
            label: rec[0].to_string(),
            valid: GestureLabel::valid_names(),
        })?;
        let start_ms: i64 = parse_num(path, line, &rec[1], "start")?;
        let end_ms: i64 = parse_num(path, line, &rec[2], "end")?;
        if start_ms >= end_ms {
            return Err(corrupt(
                path,
                line,
                format!("start {start_ms} is not before end {end_ms}"),
            ));
        }
        events.push((
            line,
            GestureEvent {
                label,
                start_ms,
                end_ms,
            },
        ));
    }
    events.sort_by_key(|(_, e)| (e.start_ms, e.end_ms));
    for pair in events.windows(2) {
        let (_, a) = pair[0];
        let (line, b) = pair[1];
        if b.start_ms <= a.end_ms {
            return Err(corrupt(
                path,
                line,
                format!(
                    "event {} [{}, {}] overlaps {} [{}, {}]",
                    b.label, b.start_ms, b.end_ms, a.label, a.start_ms, a.end_ms
                ),
            ));
        }
    }
    Ok(events.into_iter().map(|(_, e)| e).collect())
}

/// Parses a gesture timestamp CSV into sorted, non-overlapping events.
pub fn parse_timestamp_csv(path: &Path) -> Result<Vec<GestureEvent>> {
    read_events(fs::File::open(path)?, path)
}

pub fn parse_participant_csv(path: &Path) -> Result<ParticipantMeta> {
    let text = fs::read_to_string(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let rec = rdr
        .records()
        .next()
        .ok_or_else(|| corrupt(path, 2, "missing participant row"))?
        .map_err(|e| corrupt(path, 2, e.to_string()))?;
    if rec.len() != 5 {
        return Err(corrupt(path, 2, format!("expected 5 fields, found {}", rec.len())));
    }
    if rec[0].is_empty() {
        return Err(corrupt(path, 2, "empty alias"));
    }
    let handedness = rec[2].parse().map_err(|e: Error| corrupt(path, 2, e.to_string()))?;
    let age = match &rec[3] {
        "" => None,
        raw => {
            let age: u32 = parse_num(path, 2, raw, "age")?;
            if age == 0 {
                return Err(corrupt(path, 2, "age must be positive"));
            }
            Some(age)
        }
    };
    Ok(ParticipantMeta {
        alias: rec[0].to_string(),
        gender: rec[1].to_string(),
        handedness,
        age,
        occupation: rec[4].to_string(),
    })
}

pub fn write_sensor_csv<W: Write>(mut out: W, samples: &[SensorSample]) -> io::Result<()> {
    writeln!(out, "{SENSOR_HEADER}")?;
    for s in samples {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.t_ms, s.acc[0], s.acc[1], s.acc[2], s.gyro[0], s.gyro[1], s.gyro[2]
        )?;
    }
    Ok(())
}

pub fn write_events_csv<W: Write>(mut out: W, events: &[GestureEvent]) -> io::Result<()> {
    writeln!(out, "{EVENT_HEADER}")?;
    for e in events {
        writeln!(out, "{},{},{}", e.label, e.start_ms, e.end_ms)?;
    }
    Ok(())
}

pub fn write_participant_csv<W: Write>(mut out: W, meta: &ParticipantMeta) -> io::Result<()> {
    writeln!(out, "{PARTICIPANT_HEADER}")?;
    writeln!(
        out,
        "{},{},{},{},{}",
        meta.alias,
        meta.gender,
        meta.handedness,
        meta.age.map(|a| a.to_string()).unwrap_or_default(),
        meta.occupation
    )
}

/// Cuts a trace into one recording per event.
///
/// A sample belongs to an event when `start_ms <= t + clock_offset_ms <=
/// end_ms`; the offset absorbs a constant skew between the recording device
/// clock and the clock that marked the events.
pub fn segment_recordings(
    trace: &SensorTrace,
    events: &[GestureEvent],
    clock_offset_ms: i64,
) -> Result<Vec<GestureRecording>> {
    let samples = &trace.samples;
    events
        .iter()
        .map(|event| {
            let lo = samples.partition_point(|s| s.t_ms + clock_offset_ms < event.start_ms);
            let hi = samples.partition_point(|s| s.t_ms + clock_offset_ms <= event.end_ms);
            if lo >= hi {
                return Err(Error::EmptySegment {
                    label: event.label.to_string(),
                    start_ms: event.start_ms,
                    end_ms: event.end_ms,
                });
            }
            Ok(GestureRecording {
                label: event.label,
                participant: trace.participant.clone(),
                session_id: trace.session_id.clone(),
                samples: samples[lo..hi].to_vec(),
            })
        })
        .collect()
}

/// A session whose sensor and event files both parsed.
#[derive(Debug, Clone)]
pub struct AcceptedSession {
    pub sensors_path: PathBuf,
    pub events_path: PathBuf,
    pub trace: SensorTrace,
    pub events: Vec<GestureEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RejectionReport {
    pub rejected: Vec<Rejection>,
}

impl RejectionReport {
    pub fn is_empty(&self) -> bool {
        self.rejected.is_empty()
    }

    fn push(&mut self, path: &Path, reason: impl Into<String>) {
        self.rejected.push(Rejection {
            path: path.to_path_buf(),
            reason: reason.into(),
        });
    }
}

impl fmt::Display for RejectionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rejected {
            writeln!(f, "{}: {}", r.path.display(), r.reason)?;
        }
        Ok(())
    }
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Walks a dataset directory, pairing each sensor file with its event file.
/// Sessions that fail to pair or parse go into the report instead.
pub fn reject_corrupt(root: &Path) -> Result<(Vec<AcceptedSession>, RejectionReport)> {
    let mut accepted = Vec::new();
    let mut report = RejectionReport::default();
    for alias_dir in sorted_subdirs(root)? {
        let meta_path = alias_dir.join(PARTICIPANT_FILE);
        if meta_path.is_file() {
            if let Err(e) = parse_participant_csv(&meta_path) {
                report.push(&meta_path, e.to_string());
                continue;
            }
        }
        for session_dir in sorted_subdirs(&alias_dir)? {
            let sensors_path = session_dir.join(SENSORS_FILE);
            let events_path = session_dir.join(EVENTS_FILE);
            match (sensors_path.is_file(), events_path.is_file()) {
                (true, true) => {}
                (true, false) => {
                    report.push(&sensors_path, "missing pair: no events.csv");
                    continue;
                }
                (false, true) => {
                    report.push(&events_path, "missing pair: no sensors.csv");
                    continue;
                }
                (false, false) => continue,
            }
            let trace = match parse_sensor_csv(&sensors_path) {
                Ok(t) => t,
                Err(e) => {
                    report.push(&sensors_path, e.to_string());
                    continue;
                }
            };
            let events = match parse_timestamp_csv(&events_path) {
                Ok(e) => e,
                Err(e) => {
                    report.push(&events_path, e.to_string());
                    continue;
                }
            };
            accepted.push(AcceptedSession {
                sensors_path,
                events_path,
                trace,
                events,
            });
        }
    }
    Ok((accepted, report))
}

/// Ingests a dataset directory into gesture recordings. Sessions whose events
/// select no samples are moved into the report.
pub fn load_recordings(root: &Path, clock_offset_ms: i64) -> Result<(Vec<GestureRecording>, RejectionReport)> {
    let (sessions, mut report) = reject_corrupt(root)?;
    let mut recordings = Vec::new();
    for session in sessions {
        match segment_recordings(&session.trace, &session.events, clock_offset_ms) {
            Ok(mut r) => recordings.append(&mut r),
            Err(e) => report.push(&session.events_path, e.to_string()),
        }
    }
    Ok((recordings, report))
}
