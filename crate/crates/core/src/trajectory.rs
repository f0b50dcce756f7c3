//! Time-ordered feature matrices and their CSV representation.
//!
//! The on-disk layout is
//!
//! ```text
//! # frame_interval=10
//! x1,x2
//! -0.55,1.44
//! ...
//! ```
//!
//! Headerless numeric CSV is accepted as well, in which case the frame
//! interval defaults to 1 and features are named `f0`, `f1`, ...

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// A `T × F` matrix of frames plus the time between consecutive frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    frames: Array2<f64>,
    frame_interval: f64,
    feature_names: Vec<String>,
}

fn default_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("f{i}")).collect()
}

impl Trajectory {
    pub fn new(
        frames: Array2<f64>,
        frame_interval: f64,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if feature_names.len() != frames.ncols() {
            return Err(Error::Shape {
                context: "trajectory feature names",
                expected: frames.ncols(),
                actual: feature_names.len(),
            });
        }
        if !(frame_interval.is_finite() && frame_interval > 0.0) {
            return Err(Error::Data(format!(
                "frame interval must be positive, got {frame_interval}"
            )));
        }
        if let Some(pos) = frames.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at frame {}, feature {}",
                pos / frames.ncols().max(1),
                pos % frames.ncols().max(1)
            )));
        }
        Ok(Self {
            frames,
            frame_interval,
            feature_names,
        })
    }

    /// Builds a trajectory with features named `f0..f{F-1}`.
    pub fn from_frames(frames: Array2<f64>, frame_interval: f64) -> Result<Self> {
        let names = default_names(frames.ncols());
        Self::new(frames, frame_interval, names)
    }

    pub fn frames(&self) -> ArrayView2<'_, f64> {
        self.frames.view()
    }

    pub fn into_frames(self) -> Array2<f64> {
        self.frames
    }

    pub fn frame(&self, t: usize) -> ArrayView1<'_, f64> {
        self.frames.row(t)
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.frames.ncols()
    }

    pub fn frame_interval(&self) -> f64 {
        self.frame_interval
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// One column as a plain vector; used for one-dimensional latents.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.frames.column(j).to_vec()
    }

    /// Same metadata, new values. The caller guarantees the frame count is unchanged
    /// in meaning (e.g. after a per-frame transform).
    pub fn with_frames(&self, frames: Array2<f64>, names: Vec<String>) -> Result<Self> {
        Self::new(frames, self.frame_interval, names)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# frame_interval={}", self.frame_interval)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.feature_names)?;
        let mut buf = Vec::with_capacity(self.n_features());
        for row in self.frames.axis_iter(Axis(0)) {
            buf.clear();
            // `{}` on f64 prints the shortest string that parses back to the same bits.
            buf.extend(row.iter().map(|v| format!("{v}")));
            w.write_record(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        Self::parse_csv(&text)
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut frame_interval = 1.0;
        let mut body_start = 0;
        for line in text.split_inclusive('\n') {
            let trimmed = line.trim();
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("frame_interval=") {
                    frame_interval = v.trim().parse::<f64>().map_err(|_| {
                        Error::Data(format!("bad frame_interval value {v:?}"))
                    })?;
                }
                body_start += line.len();
            } else if trimmed.is_empty() {
                body_start += line.len();
            } else {
                break;
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text[body_start..].as_bytes());

        let mut names: Option<Vec<String>> = None;
        let mut values = Vec::new();
        let mut n_cols = 0;
        let mut n_rows = 0;
        for (line_no, record) in reader.records().enumerate() {
            let record = record?;
            let parsed: std::result::Result<Vec<f64>, _> =
                record.iter().map(|s| s.parse::<f64>()).collect();
            match parsed {
                Ok(row) => {
                    if n_rows == 0 && names.is_none() {
                        n_cols = row.len();
                    }
                    if row.len() != n_cols {
                        return Err(Error::Data(format!(
                            "row {} has {} columns, expected {n_cols}",
                            line_no + 1,
                            row.len()
                        )));
                    }
                    values.extend(row);
                    n_rows += 1;
                }
                Err(_) if line_no == 0 => {
                    n_cols = record.len();
                    names = Some(record.iter().map(str::to_owned).collect());
                }
                Err(e) => {
                    return Err(Error::Data(format!("row {}: {e}", line_no + 1)));
                }
            }
        }
        if n_cols == 0 {
            return Err(Error::Data("empty trajectory file".into()));
        }
        let frames = Array2::from_shape_vec((n_rows, n_cols), values)
            .map_err(|e| Error::Data(e.to_string()))?;
        let names = names.unwrap_or_else(|| default_names(n_cols));
        Self::new(frames, frame_interval, names)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::parse_csv(&text).map_err(|e| match e {
            Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

/// Stacks the frames of several trajectories into one matrix.
pub fn pool_frames(trajs: &[Trajectory]) -> Result<Array2<f64>> {
    let first = trajs
        .first()
        .ok_or_else(|| Error::Data("no trajectories given".into()))?;
    let f = first.n_features();
    for t in trajs {
        if t.n_features() != f {
            return Err(Error::Shape {
                context: "pooled trajectories",
                expected: f,
                actual: t.n_features(),
            });
        }
    }
    let views: Vec<_> = trajs.iter().map(|t| t.frames()).collect();
    ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Data(e.to_string()))
}
