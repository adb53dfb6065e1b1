//! On-disk dataset formats.
//!
//! Binary files share one framing: an 8-byte magic, a little-endian `u32`
//! header length, a JSON header and a little-endian payload.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use pmtrap_core::emitter::{TimeTag, TimeTagStream};
use pmtrap_core::langevin::TimeSeries;
use pmtrap_core::optics::{ApertureImage, Channel};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const TAGS_MAGIC: &[u8; 8] = b"PMTAGS01";
pub const SERIES_MAGIC: &[u8; 8] = b"PMSERI01";
pub const FORMAT_VERSION: u32 = 1;

/// Bytes per time-tag record: `u8` channel, `f64` time in seconds.
pub const TAG_RECORD_LEN: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagsHeader {
    pub format_version: u32,
    pub duration: f64,
    pub seed: u64,
    pub events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesHeader {
    pub format_version: u32,
    pub dt: f64,
    pub unit: String,
    pub samples: u64,
}

/// Geometry of an image stored as CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageHeader {
    pub format_version: u32,
    pub width: usize,
    pub height: usize,
    pub pitch: f64,
    pub center_x: f64,
    pub center_y: f64,
    pub channel: Channel,
    pub valid_annulus: Option<(f64, f64)>,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn framed<H: Serialize>(path: &Path, magic: &[u8; 8], header: &H, payload: &[u8]) -> Result<(), CliError> {
    let head = serde_json::to_vec(header).expect("header serialises");
    let mut w = create(path)?;
    let len = u32::try_from(head.len()).expect("header fits in u32");
    let io = |e| CliError::io(path, e);
    w.write_all(magic).map_err(io)?;
    w.write_all(&len.to_le_bytes()).map_err(io)?;
    w.write_all(&head).map_err(io)?;
    w.write_all(payload).map_err(io)?;
    w.flush().map_err(io)
}

fn read_existing(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingArtifact(path.to_path_buf()),
        _ => CliError::io(path, e),
    })
}

fn unframe<H: DeserializeOwned>(path: &Path, magic: &[u8; 8], bytes: &[u8]) -> Result<(H, usize), CliError> {
    if bytes.len() < 12 || &bytes[..8] != magic {
        return Err(CliError::bad_artifact(path, "bad magic"));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let end = 12 + len;
    if bytes.len() < end {
        return Err(CliError::bad_artifact(path, "truncated header"));
    }
    let header = serde_json::from_slice(&bytes[12..end])
        .map_err(|e| CliError::bad_artifact(path, format!("header: {e}")))?;
    Ok((header, end))
}

pub fn write_tags(path: &Path, stream: &TimeTagStream) -> Result<(), CliError> {
    let header = TagsHeader {
        format_version: FORMAT_VERSION,
        duration: stream.duration,
        seed: stream.seed,
        events: stream.events.len() as u64,
    };
    let mut payload = Vec::with_capacity(stream.events.len() * TAG_RECORD_LEN);
    for e in &stream.events {
        payload.push(e.channel);
        payload.extend_from_slice(&e.time.to_le_bytes());
    }
    framed(path, TAGS_MAGIC, &header, &payload)
}

pub fn read_tags(path: &Path) -> Result<TimeTagStream, CliError> {
    let bytes = read_existing(path)?;
    let (h, start): (TagsHeader, _) = unframe(path, TAGS_MAGIC, &bytes)?;
    let body = &bytes[start..];
    if body.len() as u64 != h.events * TAG_RECORD_LEN as u64 {
        return Err(CliError::bad_artifact(
            path,
            format!("expected {} records, found {} bytes", h.events, body.len()),
        ));
    }
    let events = body
        .chunks_exact(TAG_RECORD_LEN)
        .map(|r| TimeTag {
            channel: r[0],
            time: f64::from_le_bytes(r[1..].try_into().expect("8 bytes")),
        })
        .collect();
    let stream = TimeTagStream::new(events, h.duration, h.seed);
    if !stream.is_well_formed() {
        return Err(CliError::bad_artifact(path, "events outside the record or on unknown channels"));
    }
    Ok(stream)
}

pub fn write_series(path: &Path, series: &TimeSeries) -> Result<(), CliError> {
    let header = SeriesHeader {
        format_version: FORMAT_VERSION,
        dt: series.dt,
        unit: series.unit.clone(),
        samples: series.samples.len() as u64,
    };
    let payload: Vec<u8> = series.samples.iter().flat_map(|v| v.to_le_bytes()).collect();
    framed(path, SERIES_MAGIC, &header, &payload)
}

pub fn read_series(path: &Path) -> Result<TimeSeries, CliError> {
    let bytes = read_existing(path)?;
    let (h, start): (SeriesHeader, _) = unframe(path, SERIES_MAGIC, &bytes)?;
    let body = &bytes[start..];
    if body.len() as u64 != h.samples * 8 {
        return Err(CliError::bad_artifact(
            path,
            format!("expected {} samples, found {} bytes", h.samples, body.len()),
        ));
    }
    if !(h.dt > 0.0) {
        return Err(CliError::bad_artifact(path, "dt must be positive"));
    }
    Ok(TimeSeries {
        dt: h.dt,
        unit: h.unit,
        samples: body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    })
}

/// Image pixels as `x_over_f,y_over_f,intensity` rows in row-major order.
pub fn write_image(csv_path: &Path, header_path: &Path, image: &ApertureImage) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(csv_path).map_err(|e| csv_error(csv_path, e))?;
    w.write_record(["x_over_f", "y_over_f", "intensity"])
        .map_err(|e| csv_error(csv_path, e))?;
    for iy in 0..image.height {
        for ix in 0..image.width {
            let (x, y) = image.position(ix, iy);
            w.write_record([fmt(x), fmt(y), fmt(image.at(ix, iy))])
                .map_err(|e| csv_error(csv_path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::io(csv_path, e))?;
    let header = ImageHeader {
        format_version: FORMAT_VERSION,
        width: image.width,
        height: image.height,
        pitch: image.pitch,
        center_x: image.center_x,
        center_y: image.center_y,
        channel: image.channel,
        valid_annulus: image.valid_annulus,
    };
    write_json(header_path, &header)
}

pub fn read_image(csv_path: &Path, header_path: &Path) -> Result<ApertureImage, CliError> {
    let h: ImageHeader = read_json(header_path)?;
    if !csv_path.exists() {
        return Err(CliError::MissingArtifact(csv_path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(csv_path).map_err(|e| csv_error(csv_path, e))?;
    let mut data = Vec::with_capacity(h.width * h.height);
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::bad_artifact(csv_path, e.to_string()))?;
        let v: f64 = rec
            .get(2)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CliError::bad_artifact(csv_path, format!("bad row {:?}", rec.position())))?;
        data.push(v);
    }
    let mut img = ApertureImage::from_data(h.width, h.height, h.pitch, (h.center_x, h.center_y), h.channel, data)
        .map_err(|e| CliError::bad_artifact(csv_path, e.to_string()))?;
    img.valid_annulus = h.valid_annulus;
    Ok(img)
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt(v: f64) -> String {
    format!("{v:?}")
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::bad_artifact(path, format!("{other:?}")),
    }
}

/// Numeric table with a header row.
pub fn write_table(path: &Path, headers: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(headers).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row.into_iter().map(fmt)).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serialises");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = read_existing(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::bad_artifact(path, e.to_string()))
}
