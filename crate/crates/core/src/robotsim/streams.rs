//! Synthetic sensor streams for the sensor charts.
//!
//! Two message shapes exist. Scatter graphs get `{"x": [...], "y": [...]}`
//! with equal-length lists; time-evolution graphs get
//! `{"names": [...], "values": [...]}`, one value per named variable.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::clock::Stamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Scatter,
    TimeEvolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct AxesLimits {
    #[serde(default)]
    pub x: Option<[f64; 2]>,
    #[serde(default)]
    pub y: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct AxisLabels {
    #[serde(default)]
    pub x: String,
    #[serde(default)]
    pub y: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorGraphSpec {
    pub name: String,
    pub id: String,
    pub title: String,
    pub kind: GraphKind,
    #[serde(default)]
    pub axes: AxesLimits,
    #[serde(default)]
    pub labels: AxisLabels,
    pub topic: String,
    pub rate_hz: f64,
    /// Variable names of a time-evolution graph.
    #[serde(default)]
    pub series: Vec<String>,
    /// Number of points of a scatter graph.
    #[serde(default)]
    pub points: usize,
}

impl SensorGraphSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err("rate_hz must be > 0".into());
        }
        if crate::bus::TopicName::new(self.topic.as_str()).is_err() {
            return Err(format!("topic {:?} is not a valid name", self.topic));
        }
        match self.kind {
            GraphKind::TimeEvolution if self.series.is_empty() => {
                Err("series must not be empty".into())
            }
            GraphKind::Scatter if self.points == 0 => Err("points must be > 0".into()),
            _ => Ok(()),
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self.kind {
            GraphKind::Scatter => "ScatterData",
            GraphKind::TimeEvolution => "TimeSeriesData",
        }
    }

    fn range(limits: Option<[f64; 2]>) -> (f64, f64) {
        let [lo, hi] = limits.unwrap_or([-1.0, 1.0]);
        (lo, hi)
    }

    /// Synthetic reading at time `now`.
    pub fn sample(&self, now: Stamp) -> Value {
        let t = now as f64 / 1000.0;
        match self.kind {
            GraphKind::TimeEvolution => {
                let (lo, hi) = Self::range(self.axes.y);
                let (mid, amp) = ((lo + hi) / 2.0, (hi - lo) / 2.0 * 0.8);
                let values: Vec<f64> = (0..self.series.len())
                    .map(|i| {
                        let phase = i as f64 * std::f64::consts::FRAC_PI_3;
                        mid + amp * (std::f64::consts::TAU * 0.2 * t + phase).sin()
                    })
                    .collect();
                json!({ "names": self.series, "values": values })
            }
            GraphKind::Scatter => {
                let (x_lo, x_hi) = Self::range(self.axes.x);
                let (y_lo, y_hi) = Self::range(self.axes.y);
                let n = self.points;
                let step = if n > 1 {
                    (x_hi - x_lo) / (n - 1) as f64
                } else {
                    0.0
                };
                let x: Vec<f64> = (0..n).map(|i| x_lo + step * i as f64).collect();
                let y: Vec<f64> = (0..n)
                    .map(|i| {
                        let bump = (-(((i as f64 - n as f64 / 2.0) / 3.0).powi(2))).exp();
                        y_lo + (y_hi - y_lo) * bump * (0.5 + 0.5 * (t + i as f64 * 0.1).sin().abs())
                    })
                    .collect();
                json!({ "x": x, "y": y })
            }
        }
    }
}

/// Fixed-rate schedule: publication `k` is due at `start + k·1000/rate_hz` ms.
#[derive(Debug, Clone)]
pub struct RateSchedule {
    start: Option<Stamp>,
    period_ms: f64,
    emitted: u64,
}

impl RateSchedule {
    pub fn new(rate_hz: f64) -> Self {
        Self {
            start: None,
            period_ms: 1000.0 / rate_hz,
            emitted: 0,
        }
    }

    /// Number of publications that became due since the last call.
    pub fn due(&mut self, now: Stamp) -> u64 {
        let start = *self.start.get_or_insert(now);
        let elapsed = (now - start) as f64;
        let total = (elapsed / self.period_ms).floor() as u64 + 1;
        let due = total.saturating_sub(self.emitted);
        self.emitted = self.emitted.max(total);
        due
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }
}
