//! Visual behavioral signals from per-frame face tracking.
//!
//! Frames are averaged over non-overlapping windows (30 Hz to 6 Hz), the
//! landmarks of every interval are mapped onto a reference face by a
//! least-squares affine fit, and kinematics are taken between consecutive
//! intervals at the nominal interval rate.

mod track;

use nalgebra::{Matrix2, Vector2};

use crate::data::{FeatureColumn, FeatureTable, Modality};
use crate::error::{Error, Result};

pub use track::{parse_track, write_track};

pub const LANDMARKS: usize = 68;
pub const WINDOW: usize = 5;
/// Nominal rate of the downsampled intervals, used for derivatives.
pub const INTERVAL_RATE: f64 = 6.0;

pub const SIGNAL_NAMES: [&str; 20] = [
    "Mean Number of Action Units",
    "Mean Action Unit Intensity",
    "Mean Landmark Displacement",
    "Mean Landmark Velocity",
    "Mean Landmark Acceleration",
    "Head Translation Displacement",
    "Head Translation Velocity",
    "Head Translation Acceleration",
    "Head Pitch Displacement",
    "Head Pitch Velocity",
    "Head Pitch Acceleration",
    "Head Yaw Displacement",
    "Head Yaw Velocity",
    "Head Yaw Acceleration",
    "Head Roll Displacement",
    "Head Roll Velocity",
    "Head Roll Acceleration",
    "Gaze Angle Displacement",
    "Gaze Angle Velocity",
    "Gaze Angle Acceleration",
];

/// AU column names in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuChannels {
    pub occurrence: Vec<String>,
    pub intensity: Vec<String>,
}

/// One frame, or the mean of one window of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub timestamp: f64,
    /// Tracking-success flag for a frame; fraction of successful frames
    /// for an interval.
    pub success: f64,
    pub landmarks: Vec<[f64; 2]>,
    /// Head translation `Tx, Ty, Tz` (mm).
    pub translation: [f64; 3],
    /// Head rotation pitch, yaw, roll (rad).
    pub rotation: [f64; 3],
    pub gaze: [f64; 2],
    pub au_occurrence: Vec<f64>,
    pub au_intensity: Vec<f64>,
}

impl Record {
    fn mean(records: &[Record]) -> Record {
        let k = records.len() as f64;
        let first = &records[0];
        let mut out = Record {
            timestamp: 0.0,
            success: 0.0,
            landmarks: vec![[0.0; 2]; first.landmarks.len()],
            translation: [0.0; 3],
            rotation: [0.0; 3],
            gaze: [0.0; 2],
            au_occurrence: vec![0.0; first.au_occurrence.len()],
            au_intensity: vec![0.0; first.au_intensity.len()],
        };
        fn add(acc: &mut [f64], v: &[f64]) {
            acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        }
        for r in records {
            out.timestamp += r.timestamp;
            out.success += r.success;
            for (a, p) in out.landmarks.iter_mut().zip(&r.landmarks) {
                add(a, p);
            }
            add(&mut out.translation, &r.translation);
            add(&mut out.rotation, &r.rotation);
            add(&mut out.gaze, &r.gaze);
            add(&mut out.au_occurrence, &r.au_occurrence);
            add(&mut out.au_intensity, &r.au_intensity);
        }
        let scale = |v: &mut [f64]| v.iter_mut().for_each(|x| *x /= k);
        out.timestamp /= k;
        out.success /= k;
        out.landmarks.iter_mut().for_each(|p| scale(p));
        scale(&mut out.translation);
        scale(&mut out.rotation);
        scale(&mut out.gaze);
        scale(&mut out.au_occurrence);
        scale(&mut out.au_intensity);
        out
    }
}

/// Per-frame tracking output for one participant.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTrack {
    pub channels: AuChannels,
    pub frames: Vec<Record>,
}

impl FrameTrack {
    pub fn n_failed(&self) -> usize {
        self.frames.iter().filter(|f| f.success == 0.0).count()
    }

    /// Drops frames whose tracking-success flag is 0.
    pub fn without_failed(&self) -> FrameTrack {
        FrameTrack {
            channels: self.channels.clone(),
            frames: self
                .frames
                .iter()
                .filter(|f| f.success != 0.0)
                .cloned()
                .collect(),
        }
    }
}

/// Window-averaged track.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalTrack {
    pub channels: AuChannels,
    pub intervals: Vec<Record>,
}

/// Averages non-overlapping windows of `window` frames; trailing frames that
/// do not fill a window are dropped.
pub fn downsample(track: &FrameTrack, window: usize) -> Result<IntervalTrack> {
    if window == 0 {
        return Err(Error::Config("window must be at least 1".into()));
    }
    let n = track.frames.len();
    if n < window {
        return Err(Error::TooShort {
            needed: window,
            got: n,
        });
    }
    Ok(IntervalTrack {
        channels: track.channels.clone(),
        intervals: track
            .frames
            .chunks_exact(window)
            .map(Record::mean)
            .collect(),
    })
}

/// Mean landmark configuration over every interval of every track.
pub fn reference_face(tracks: &[IntervalTrack]) -> Result<Vec<[f64; 2]>> {
    let mut sum = vec![[0.0; 2]; LANDMARKS];
    let mut count = 0usize;
    for t in tracks {
        for r in &t.intervals {
            if r.landmarks.len() != LANDMARKS {
                return Err(Error::DimensionMismatch {
                    expected: LANDMARKS,
                    got: r.landmarks.len(),
                });
            }
            for (s, p) in sum.iter_mut().zip(&r.landmarks) {
                s[0] += p[0];
                s[1] += p[1];
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyInput(
            "no intervals to average into a reference face".into(),
        ));
    }
    let c = count as f64;
    Ok(sum.into_iter().map(|[x, y]| [x / c, y / c]).collect())
}

/// Least-squares affine map `p -> A p + t` taking `points` onto `target`.
/// `None` when the points do not span the plane.
pub fn fit_affine(
    points: &[[f64; 2]],
    target: &[[f64; 2]],
) -> Option<(Matrix2<f64>, Vector2<f64>)> {
    let n = points.len() as f64;
    let centroid = |ps: &[[f64; 2]]| {
        ps.iter().fold(Vector2::zeros(), |acc: Vector2<f64>, p| {
            acc + Vector2::new(p[0], p[1])
        }) / n
    };
    let pc = centroid(points);
    let tc = centroid(target);
    let mut spp = Matrix2::zeros();
    let mut stp = Matrix2::zeros();
    for (p, q) in points.iter().zip(target) {
        let dp = Vector2::new(p[0], p[1]) - pc;
        let dq = Vector2::new(q[0], q[1]) - tc;
        spp += dp * dp.transpose();
        stp += dq * dp.transpose();
    }
    let trace = spp.trace();
    if trace <= 0.0 || spp.determinant() <= 1e-12 * trace * trace {
        return None;
    }
    let a = stp * spp.try_inverse()?;
    Some((a, tc - a * pc))
}

/// Maps each interval's landmarks onto `reference` with its own affine fit.
/// All other channels pass through.
pub fn align_landmarks(track: &IntervalTrack, reference: &[[f64; 2]]) -> Result<IntervalTrack> {
    let mut out = track.clone();
    for (i, r) in out.intervals.iter_mut().enumerate() {
        if r.landmarks.len() != reference.len() {
            return Err(Error::DimensionMismatch {
                expected: reference.len(),
                got: r.landmarks.len(),
            });
        }
        let (a, t) =
            fit_affine(&r.landmarks, reference).ok_or(Error::DegenerateConfiguration(i))?;
        for p in r.landmarks.iter_mut() {
            let q = a * Vector2::new(p[0], p[1]) + t;
            *p = [q[0], q[1]];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub displacement: f64,
    pub velocity: f64,
    pub acceleration: f64,
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Mean step displacement, mean speed and mean acceleration magnitude of a
/// sampled (possibly multi-dimensional) series at `rate` samples per second.
pub fn kinematics<P: AsRef<[f64]>>(series: &[P], rate: f64) -> Result<Kinematics> {
    let n = series.len();
    if n < 3 {
        return Err(Error::TooShort { needed: 3, got: n });
    }
    let dim = series[0].as_ref().len();
    if let Some(bad) = series.iter().find(|p| p.as_ref().len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.as_ref().len(),
        });
    }
    let steps: Vec<Vec<f64>> = series
        .windows(2)
        .map(|w| {
            w[1].as_ref()
                .iter()
                .zip(w[0].as_ref())
                .map(|(b, a)| b - a)
                .collect()
        })
        .collect();
    let velocity: Vec<Vec<f64>> = steps
        .iter()
        .map(|d| d.iter().map(|x| x * rate).collect())
        .collect();
    let displacement: Vec<f64> = steps.iter().map(|d| norm(d.iter().copied())).collect();
    let speed: Vec<f64> = velocity.iter().map(|v| norm(v.iter().copied())).collect();
    let accel: Vec<f64> = velocity
        .windows(2)
        .map(|w| norm(w[1].iter().zip(&w[0]).map(|(b, a)| (b - a) * rate)))
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(Kinematics {
        displacement: mean(&displacement),
        velocity: mean(&speed),
        acceleration: mean(&accel),
    })
}

/// The 20 visual signals, in [`SIGNAL_NAMES`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisualFeatureRow(pub [f64; 20]);

impl VisualFeatureRow {
    pub fn get(&self, name: &str) -> Option<f64> {
        SIGNAL_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.0[i])
    }
}

/// Computes the visual signals. AU aggregates and head/gaze kinematics use
/// `raw`; landmark kinematics use `aligned`, computed per point and summed.
pub fn visual_signals(raw: &IntervalTrack, aligned: &IntervalTrack) -> Result<VisualFeatureRow> {
    let n = raw.intervals.len();
    if aligned.intervals.len() != n {
        return Err(Error::LengthMismatch(n, aligned.intervals.len()));
    }
    if n == 0 {
        return Err(Error::TooShort { needed: 3, got: 0 });
    }
    let rate = INTERVAL_RATE;
    let mut v = [0.0; 20];

    v[0] = raw
        .intervals
        .iter()
        .map(|r| r.au_occurrence.iter().sum::<f64>())
        .sum::<f64>()
        / n as f64;
    let n_channels: usize = raw.intervals.iter().map(|r| r.au_intensity.len()).sum();
    if n_channels == 0 {
        return Err(Error::MissingColumn("AU*_r".into()));
    }
    v[1] = raw
        .intervals
        .iter()
        .flat_map(|r| r.au_intensity.iter())
        .sum::<f64>()
        / n_channels as f64;

    let n_points = aligned.intervals[0].landmarks.len();
    for k in 0..n_points {
        let series: Vec<[f64; 2]> = aligned.intervals.iter().map(|r| r.landmarks[k]).collect();
        let kin = kinematics(&series, rate)?;
        v[2] += kin.displacement;
        v[3] += kin.velocity;
        v[4] += kin.acceleration;
    }

    let mut put = |at: usize, kin: Kinematics| {
        v[at] = kin.displacement;
        v[at + 1] = kin.velocity;
        v[at + 2] = kin.acceleration;
    };
    let translation: Vec<[f64; 3]> = raw.intervals.iter().map(|r| r.translation).collect();
    put(5, kinematics(&translation, rate)?);
    for axis in 0..3 {
        let angle: Vec<[f64; 1]> = raw.intervals.iter().map(|r| [r.rotation[axis]]).collect();
        put(8 + 3 * axis, kinematics(&angle, rate)?);
    }
    let gaze: Vec<[f64; 2]> = raw.intervals.iter().map(|r| r.gaze).collect();
    put(17, kinematics(&gaze, rate)?);

    Ok(VisualFeatureRow(v))
}

/// Downsamples every track, builds the shared reference face, aligns, and
/// returns one row per participant tagged `visual`.
pub fn extract_visual_features(
    tracks: &[(String, FrameTrack)],
    window: usize,
) -> Result<FeatureTable> {
    let intervals: Vec<IntervalTrack> = tracks
        .iter()
        .map(|(_, t)| downsample(t, window))
        .collect::<Result<_>>()?;
    let reference = reference_face(&intervals)?;
    let rows: Vec<Vec<f64>> = intervals
        .iter()
        .map(|raw| {
            let aligned = align_landmarks(raw, &reference)?;
            Ok(visual_signals(raw, &aligned)?.0.to_vec())
        })
        .collect::<Result<_>>()?;
    FeatureTable::from_rows(
        tracks.iter().map(|(id, _)| id.clone()).collect(),
        SIGNAL_NAMES
            .iter()
            .map(|n| FeatureColumn::new(*n, Modality::Visual))
            .collect(),
        &rows,
    )
}
