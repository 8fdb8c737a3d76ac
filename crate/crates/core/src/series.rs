//! Appliance power series and gap handling.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal sampling period of the channel recordings, in seconds.
pub const SAMPLE_PERIOD_SECS: u32 = 6;

/// Gaps longer than this split a series into separate runs.
pub const DEFAULT_MAX_GAP_SECS: i64 = 30;

/// One appliance channel: strictly increasing timestamps with active power in kW.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSeries {
    appliance_id: u8,
    timestamps: Vec<i64>,
    power: Vec<f64>,
    sample_period: u32,
}

impl PowerSeries {
    pub fn new(appliance_id: u8, timestamps: Vec<i64>, power: Vec<f64>, sample_period: u32) -> Result<Self> {
        if timestamps.len() != power.len() {
            return Err(Error::InvalidSeries(format!(
                "{} timestamps but {} power values",
                timestamps.len(),
                power.len()
            )));
        }
        if sample_period == 0 {
            return Err(Error::InvalidSeries("sample period must be positive".into()));
        }
        if let Some(k) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSeries(format!("timestamps not strictly increasing at index {}", k + 1)));
        }
        if let Some(k) = power.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidSeries(format!("power at index {k} is negative or not finite")));
        }
        Ok(PowerSeries { appliance_id, timestamps, power, sample_period })
    }

    pub fn appliance_id(&self) -> u8 {
        self.appliance_id
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    /// Active power in kW.
    pub fn power(&self) -> &[f64] {
        &self.power
    }

    pub fn sample_period(&self) -> u32 {
        self.sample_period
    }

    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }
}

/// A gap-free stretch of samples on the nominal period grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub start: i64,
    pub power: Vec<f64>,
}

/// A series split into contiguous runs. Windows never cross a run boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSeries {
    pub appliance_id: u8,
    pub sample_period: u32,
    pub runs: Vec<Run>,
}

impl RunSeries {
    pub fn total_samples(&self) -> usize {
        self.runs.iter().map(|r| r.power.len()).sum()
    }
}

/// Splits `series` at gaps longer than `max_gap` seconds and forward-fills
/// missing slots inside each run.
///
/// A step of `d` seconds between two samples covers `round(d / period)` slots;
/// the ones in between repeat the earlier sample.
pub fn resample_gaps(series: &PowerSeries, max_gap: i64) -> RunSeries {
    let period = series.sample_period as i64;
    let mut runs: Vec<Run> = Vec::new();
    let ts = &series.timestamps;
    let pw = &series.power;
    if !ts.is_empty() {
        let mut current = Run { start: ts[0], power: Vec::with_capacity(ts.len()) };
        current.power.push(pw[0]);
        for k in 1..ts.len() {
            let delta = ts[k] - ts[k - 1];
            if delta > max_gap {
                runs.push(core::mem::replace(&mut current, Run { start: ts[k], power: Vec::new() }));
            } else {
                let slots = ((delta + period / 2) / period).max(1);
                let prev = pw[k - 1];
                for _ in 1..slots {
                    current.power.push(prev);
                }
            }
            current.power.push(pw[k]);
        }
        runs.push(current);
    }
    RunSeries { appliance_id: series.appliance_id, sample_period: series.sample_period, runs }
}
