//! Stream files: header `user_id,t,ax,ay,az,gx,gy,gz,label`, one row per
//! tick. A label change or a time gap starts a new segment.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::stream::{Record, SensorStream, DEFAULT_SAMPLE_RATE};
use super::Activity;
use crate::error::{Error, Result};

pub const HEADER: [&str; 9] = ["user_id", "t", "ax", "ay", "az", "gx", "gy", "gz", "label"];

pub fn load_csv(path: &Path) -> Result<SensorStream> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if headers.iter().map(str::trim).ne(HEADER) {
        return Err(parse_err(1, format!("expected header {}", HEADER.join(","))));
    }

    let mut stream = SensorStream::new(0, DEFAULT_SAMPLE_RATE);
    let mut user = None;
    let mut current: Option<(Activity, f64)> = None;
    let mut pending: Vec<Record> = Vec::new();
    let mut pending_label = Activity::Standing;
    let max_gap = 1.5 / stream.sample_rate;

    let mut row = csv::StringRecord::new();
    loop {
        let more = reader
            .read_record(&mut row)
            .map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        if !more {
            break;
        }
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != HEADER.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", HEADER.len(), row.len()),
            ));
        }
        let id: usize = row[0]
            .trim()
            .parse()
            .map_err(|e| parse_err(line, format!("user_id: {e}")))?;
        match user {
            None => user = Some(id),
            Some(u) if u != id => {
                return Err(parse_err(
                    line,
                    format!("file mixes users {u} and {id}; write one user per file"),
                ))
            }
            _ => {}
        }
        let mut values = [0.0f64; 7];
        for (i, v) in values.iter_mut().enumerate() {
            let field = row[i + 1].trim();
            *v = field
                .parse()
                .map_err(|_| parse_err(line, format!("{}: not a number: {field:?}", HEADER[i + 1])))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("{}: non-finite value", HEADER[i + 1])));
            }
        }
        let label: Activity = row[8]
            .parse()
            .map_err(|e: super::activity::UnknownActivity| parse_err(line, e.to_string()))?;
        let t = values[0];
        let record = [values[1], values[2], values[3], values[4], values[5], values[6]];
        let breaks = match current {
            Some((a, prev)) => a != label || t - prev > max_gap || t <= prev,
            None => true,
        };
        if breaks && !pending.is_empty() {
            stream.push_segment(pending_label, pending.drain(..));
        }
        pending_label = label;
        pending.push(record);
        current = Some((label, t));
    }
    if !pending.is_empty() {
        stream.push_segment(pending_label, pending);
    }
    stream.user_id = user.unwrap_or(0);
    Ok(stream)
}

/// Writes `stream` so that [`load_csv`] reads it back unchanged: segments
/// are separated by a one-tick time gap.
pub fn write_csv(stream: &SensorStream, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", HEADER.join(",")).map_err(io)?;
    let mut tick = 0usize;
    for seg in &stream.segments {
        for r in stream.segment_records(seg) {
            let t = tick as f64 / stream.sample_rate;
            writeln!(
                out,
                "{},{t},{},{},{},{},{},{},{}",
                stream.user_id, r[0], r[1], r[2], r[3], r[4], r[5], seg.activity
            )
            .map_err(io)?;
            tick += 1;
        }
        tick += 1;
    }
    out.flush().map_err(io)
}
