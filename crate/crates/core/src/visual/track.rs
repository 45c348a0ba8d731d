//! Reading and writing per-frame tracking CSVs in the OpenFace 2.0 layout.

use std::collections::HashMap;
use std::path::Path;

use super::{AuChannels, FrameTrack, Record, LANDMARKS};
use crate::data::{csv_err, open_csv, parse_real};
use crate::error::{Error, Result};

const POSE: [&str; 6] = [
    "pose_Tx", "pose_Ty", "pose_Tz", "pose_Rx", "pose_Ry", "pose_Rz",
];
const GAZE: [&str; 2] = ["gaze_angle_x", "gaze_angle_y"];

fn is_au(name: &str, suffix: &str) -> bool {
    name.strip_prefix("AU")
        .and_then(|rest| rest.strip_suffix(suffix))
        .is_some_and(|num| !num.is_empty() && num.bytes().all(|b| b.is_ascii_digit()))
}

struct Layout {
    timestamp: usize,
    success: usize,
    x: Vec<usize>,
    y: Vec<usize>,
    pose: Vec<usize>,
    gaze: Vec<usize>,
    occurrence: Vec<usize>,
    intensity: Vec<usize>,
}

impl Layout {
    fn from_header(header: &csv::StringRecord) -> Result<(Self, AuChannels)> {
        let index: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();
        let find = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let many = |names: Vec<String>| names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>();

        let mut channels = AuChannels::default();
        let mut occurrence = Vec::new();
        let mut intensity = Vec::new();
        for (i, h) in header.iter().enumerate() {
            if is_au(h, "_c") {
                channels.occurrence.push(h.to_string());
                occurrence.push(i);
            } else if is_au(h, "_r") {
                channels.intensity.push(h.to_string());
                intensity.push(i);
            }
        }
        if intensity.is_empty() {
            return Err(Error::MissingColumn("AU*_r".into()));
        }
        if occurrence.is_empty() {
            return Err(Error::MissingColumn("AU*_c".into()));
        }

        let layout = Layout {
            timestamp: find("timestamp")?,
            success: find("success")?,
            x: many((0..LANDMARKS).map(|k| format!("x_{k}")).collect())?,
            y: many((0..LANDMARKS).map(|k| format!("y_{k}")).collect())?,
            pose: many(POSE.iter().map(|s| s.to_string()).collect())?,
            gaze: many(GAZE.iter().map(|s| s.to_string()).collect())?,
            occurrence,
            intensity,
        };
        Ok((layout, channels))
    }
}

/// Parses a tracking CSV. Frames whose `success` flag is 0 are kept; see
/// [`FrameTrack::without_failed`].
pub fn parse_track(path: impl AsRef<Path>) -> Result<FrameTrack> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let (layout, channels) = Layout::from_header(&header)?;

    let mut frames: Vec<Record> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let cell = |i: usize| parse_real(path, line, &header[i], row.get(i).unwrap_or(""));
        let cells = |idx: &[usize]| idx.iter().map(|&i| cell(i)).collect::<Result<Vec<f64>>>();

        let xs = cells(&layout.x)?;
        let ys = cells(&layout.y)?;
        let pose = cells(&layout.pose)?;
        let gaze = cells(&layout.gaze)?;
        let record = Record {
            timestamp: cell(layout.timestamp)?,
            success: cell(layout.success)?,
            landmarks: xs.into_iter().zip(ys).map(|(x, y)| [x, y]).collect(),
            translation: [pose[0], pose[1], pose[2]],
            rotation: [pose[3], pose[4], pose[5]],
            gaze: [gaze[0], gaze[1]],
            au_occurrence: cells(&layout.occurrence)?,
            au_intensity: cells(&layout.intensity)?,
        };
        if let Some(prev) = frames.last() {
            if record.timestamp <= prev.timestamp {
                return Err(Error::parse(
                    path,
                    line,
                    "timestamps must be strictly increasing",
                ));
            }
        }
        frames.push(record);
    }
    Ok(FrameTrack { channels, frames })
}

/// Writes a track in the same column layout `parse_track` reads.
pub fn write_track(track: &FrameTrack, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header: Vec<String> = vec!["frame".into(), "timestamp".into(), "success".into()];
    header.extend((0..LANDMARKS).map(|k| format!("x_{k}")));
    header.extend((0..LANDMARKS).map(|k| format!("y_{k}")));
    header.extend(POSE.iter().chain(GAZE.iter()).map(|s| s.to_string()));
    header.extend(track.channels.intensity.iter().cloned());
    header.extend(track.channels.occurrence.iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;

    for (i, f) in track.frames.iter().enumerate() {
        let mut row: Vec<String> = vec![
            (i + 1).to_string(),
            f.timestamp.to_string(),
            f.success.to_string(),
        ];
        row.extend(f.landmarks.iter().map(|p| p[0].to_string()));
        row.extend(f.landmarks.iter().map(|p| p[1].to_string()));
        row.extend(
            f.translation
                .iter()
                .chain(&f.rotation)
                .chain(&f.gaze)
                .map(f64::to_string),
        );
        row.extend(f.au_intensity.iter().map(f64::to_string));
        row.extend(f.au_occurrence.iter().map(f64::to_string));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
