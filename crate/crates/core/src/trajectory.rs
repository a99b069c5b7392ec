//! Uniformly sampled multi-channel time series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    samples: Vec<Vec<f64>>,
    dt: f64,
    channels: Vec<String>,
}

impl Trajectory {
    pub fn new(samples: Vec<Vec<f64>>, dt: f64, channels: Vec<String>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::RejectedInput("trajectory needs at least two samples".into()));
        }
        if dt <= 0.0 || !dt.is_finite() {
            return Err(Error::Parameter("sample period must be positive".into()));
        }
        let dim = channels.len();
        for (k, s) in samples.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::RejectedInput(format!(
                    "sample {k} has {} channels, expected {dim}",
                    s.len()
                )));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::RejectedInput(format!("non-finite value at sample {k}")));
            }
        }
        Ok(Self { samples, dt, channels })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.samples[k]
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    /// New trajectory keeping only the named channels, in the given order.
    pub fn select_channels(&self, names: &[&str]) -> Result<Trajectory> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.channel_index(n)
                    .ok_or_else(|| Error::Parameter(format!("unknown channel '{n}'")))
            })
            .collect::<Result<_>>()?;
        let samples = self
            .samples
            .iter()
            .map(|s| idx.iter().map(|&i| s[i]).collect())
            .collect();
        Trajectory::new(samples, self.dt, names.iter().map(|s| s.to_string()).collect())
    }

    /// Sub-trajectory over the sample range [start, end).
    pub fn slice(&self, start: usize, end: usize) -> Result<Trajectory> {
        if start + 2 > end || end > self.samples.len() {
            return Err(Error::Parameter(format!("bad slice range [{start}, {end})")));
        }
        Trajectory::new(self.samples[start..end].to_vec(), self.dt, self.channels.clone())
    }

    /// Keeps every `step`-th sample; the sample period scales accordingly.
    pub fn decimate(&self, step: usize) -> Result<Trajectory> {
        if step == 0 {
            return Err(Error::Parameter("decimation step must be positive".into()));
        }
        let samples: Vec<Vec<f64>> = self.samples.iter().step_by(step).cloned().collect();
        Trajectory::new(samples, self.dt * step as f64, self.channels.clone())
    }

    /// CSV with a leading time column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time");
        for c in &self.channels {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (k, s) in self.samples.iter().enumerate() {
            out.push_str(&format!("{:.6}", self.time(k)));
            for v in s {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Parses a CSV produced by [`Trajectory::to_csv`] (or any file with a
    /// `time` column followed by named channels).
    pub fn from_csv(text: &str) -> Result<Trajectory> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| Error::Load(e.to_string()))?
            .clone();
        if headers.len() < 2 || &headers[0] != "time" {
            return Err(Error::Load("expected a leading 'time' column".into()));
        }
        let channels: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Load(format!("row {}: {e}", row + 1)))?;
            let mut vals = Vec::with_capacity(rec.len());
            for field in rec.iter() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Load(format!("row {}: bad number '{field}'", row + 1)))?;
                if !v.is_finite() {
                    return Err(Error::Load(format!("row {}: non-finite value", row + 1)));
                }
                vals.push(v);
            }
            if vals.len() != channels.len() + 1 {
                return Err(Error::Load(format!("row {}: wrong column count", row + 1)));
            }
            times.push(vals[0]);
            samples.push(vals[1..].to_vec());
        }
        if times.len() < 2 {
            return Err(Error::Load("need at least two rows".into()));
        }
        let dt = times[1] - times[0];
        if dt <= 0.0 {
            return Err(Error::Load("non-increasing timestamps".into()));
        }
        for k in 1..times.len() {
            let expect = times[0] + k as f64 * dt;
            if (times[k] - expect).abs() > 0.01 * dt {
                return Err(Error::Load(format!("row {}: non-uniform timestamp", k + 1)));
            }
        }
        Trajectory::new(samples, dt, channels)
    }
}
