//! Seeded generator of plausible 6-second appliance channels, used when real
//! recordings are not at hand.
//!
//! Each appliance follows a simple usage pattern: the dishwasher and washing
//! machine run programme cycles of heating and motor phases, the microwave is
//! used in short bursts around meal times, and the fridge compressor cycles
//! around the clock. A few single samples are dropped and the occasional
//! two-hour outage is inserted, as in real meter logs.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::rng::{self, Purpose, Rng};
use crate::series::{PowerSeries, SAMPLE_PERIOD_SECS};
use crate::NUM_APPLIANCES;

/// 2013-03-17 00:00:00 UTC.
pub const DEFAULT_START: i64 = 1_363_478_400;
const SAMPLES_PER_HOUR: usize = 600;
const SAMPLES_PER_DAY: usize = 24 * SAMPLES_PER_HOUR;

fn minutes(m: f64) -> usize {
    (m * 10.0) as usize
}

/// Writes `kw` (with 0.5 % multiplicative noise) over `len` samples from `at`.
fn fill(trace: &mut [f64], at: usize, len: usize, kw: f64, rng: &mut Rng) {
    let noise = Normal::new(1.0, 0.005).expect("valid");
    let end = (at + len).min(trace.len());
    for v in &mut trace[at.min(end)..end] {
        *v = (kw * noise.sample(rng)).max(0.0);
    }
}

fn dishwasher(trace: &mut [f64], days: usize, rng: &mut Rng) {
    for day in 0..days {
        if !rng.random_bool(0.8) {
            continue;
        }
        let mut t = day * SAMPLES_PER_DAY + rng.random_range(minutes(12.0 * 60.0)..minutes(22.0 * 60.0));
        let heat = rng.random_range(1.9..2.3);
        for (len, kw) in [(10.0, 0.07), (20.0, heat), (30.0, 0.08), (15.0, heat), (15.0, 0.06)] {
            let len = minutes(len * rng.random_range(0.85..1.15));
            fill(trace, t, len, kw, rng);
            t += len;
        }
    }
}

fn washing_machine(trace: &mut [f64], days: usize, rng: &mut Rng) {
    for day in 0..days {
        if !rng.random_bool(0.6) {
            continue;
        }
        let mut t = day * SAMPLES_PER_DAY + rng.random_range(minutes(8.0 * 60.0)..minutes(18.0 * 60.0));
        let heat = minutes(rng.random_range(8.0..16.0));
        fill(trace, t, heat, rng.random_range(1.8..2.2), rng);
        t += heat;
        // tumbling: short motor bursts with pauses
        let tumble_end = t + minutes(rng.random_range(35.0..55.0));
        while t < tumble_end {
            let on = rng.random_range(3..12);
            fill(trace, t, on, rng.random_range(0.15..0.35), rng);
            t += on;
            let off = rng.random_range(1..4);
            fill(trace, t, off, 0.005, rng);
            t += off;
        }
        let spin = minutes(rng.random_range(6.0..10.0));
        fill(trace, t, spin, rng.random_range(0.4..0.5), rng);
    }
}

fn microwave(trace: &mut [f64], days: usize, rng: &mut Rng) {
    for day in 0..days {
        for meal_hour in [7.5, 12.5, 18.5] {
            if !rng.random_bool(0.7) {
                continue;
            }
            let mut t = day * SAMPLES_PER_DAY + minutes(meal_hour * 60.0 + rng.random_range(-45.0..45.0));
            for _ in 0..rng.random_range(1..4) {
                let len = minutes(rng.random_range(2.0..8.0));
                fill(trace, t, len, rng.random_range(1.1..1.4), rng);
                t += len + minutes(rng.random_range(1.0..5.0));
            }
        }
    }
}

fn fridge(trace: &mut [f64], rng: &mut Rng) {
    let mut t = rng.random_range(0..minutes(30.0));
    while t < trace.len() {
        let on = minutes(rng.random_range(12.0..20.0));
        fill(trace, t, 1, 0.25, rng);
        fill(trace, t + 1, on.saturating_sub(1), rng.random_range(0.085..0.095), rng);
        t += on + minutes(rng.random_range(20.0..40.0));
    }
}

/// Simulated channel for appliance `appliance` (0 dishwasher, 1 washing
/// machine, 2 microwave, 3 fridge) covering `days` days.
pub fn simulate_channel(appliance: usize, days: usize, seed: u64) -> Result<PowerSeries> {
    assert!(appliance < NUM_APPLIANCES, "appliance id out of range");
    let mut r = rng::stream(seed, Purpose::Simulation, appliance as u64);
    let mut trace = vec![0.0; days * SAMPLES_PER_DAY];
    match appliance {
        0 => dishwasher(&mut trace, days, &mut r),
        1 => washing_machine(&mut trace, days, &mut r),
        2 => microwave(&mut trace, days, &mut r),
        _ => fridge(&mut trace, &mut r),
    }
    let period = SAMPLE_PERIOD_SECS as i64;
    let mut timestamps = Vec::with_capacity(trace.len());
    let mut power = Vec::with_capacity(trace.len());
    let mut k = 0;
    while k < trace.len() {
        if r.random_bool(1e-4) {
            // dropped sample, forward-filled on ingest
            k += 1;
            continue;
        }
        if r.random_bool(1.0 / (10.0 * SAMPLES_PER_DAY as f64)) {
            k += 2 * SAMPLES_PER_HOUR;
            continue;
        }
        timestamps.push(DEFAULT_START + k as i64 * period);
        power.push(trace[k]);
        k += 1;
    }
    PowerSeries::new(appliance as u8, timestamps, power, SAMPLE_PERIOD_SECS)
}
