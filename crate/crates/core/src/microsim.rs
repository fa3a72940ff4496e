//! Small kinematic and energy simulations of the abstract actions.
//!
//! Each action is a sequence of phases (constant-speed travel or hover)
//! integrated with fixed-step Euler at [`MicroParams::dt`]. Battery use is
//! the integral of a piecewise-constant power draw. Settle time after an
//! approach is Gaussian truncated at zero. [`calibrate`] repeats every action
//! and reports the sample mean with the floor of the smallest and the ceiling
//! of the largest sample as an integer interval.

use std::collections::BTreeMap;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MicroParams {
    /// Horizontal speed, m/s.
    pub cruise_speed: f64,
    /// Edge of one arena cell, m.
    pub cell_size: f64,
    /// Horizontal distance to the object when an approach starts, m.
    pub approach_offset: f64,
    /// Location of the settle-time Gaussian before truncation, s.
    pub settle_mean: f64,
    /// Spread of the settle-time Gaussian, s.
    pub settle_std: f64,
    /// Climb and descent speed, m/s.
    pub vertical_speed: f64,
    /// Altitude while searching, m.
    pub search_height: f64,
    /// Altitude while carrying an object, m.
    pub transport_height: f64,
    /// Power draws, charge units per second.
    pub power_cruise: f64,
    pub power_hover: f64,
    pub power_vertical: f64,
    /// Hover time needed to close or open the gripper, s.
    pub grab_duration: f64,
    /// Largest horizontal error at which a grab still succeeds, m.
    pub grab_tolerance: f64,
    /// Per-axis standard deviation of the hover position, m.
    pub position_noise: f64,
    /// Camera footprint radius around the flight line, m.
    pub detection_radius: f64,
    /// Chance that an object inside the footprint is recognised.
    pub sensor_reliability: f64,
    /// Hazard of losing the object while transporting, per second.
    pub drop_rate: f64,
    /// Integration step, s.
    pub dt: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for MicroParams {
    fn default() -> Self {
        Self {
            cruise_speed: 5.0,
            cell_size: 5.0,
            approach_offset: 2.5,
            settle_mean: 0.5,
            settle_std: 0.4,
            vertical_speed: 1.0,
            search_height: 1.0,
            transport_height: 1.0,
            power_cruise: 1.0,
            power_hover: 0.8,
            power_vertical: 1.2,
            grab_duration: 0.5,
            grab_tolerance: 0.3,
            position_noise: 0.1,
            detection_radius: 1.5,
            sensor_reliability: 0.9,
            drop_rate: 0.05,
            dt: 0.01,
            trials: 1000,
            seed: 0,
        }
    }
}

impl MicroParams {
    /// Same parameters with every noise source switched off.
    pub fn noiseless(mut self) -> Self {
        self.settle_mean = 0.0;
        self.settle_std = 0.0;
        self.position_noise = 0.0;
        self.drop_rate = 0.0;
        self
    }

    pub fn validate(&self) -> Result<(), MicroError> {
        let positive = [
            ("cruise_speed", self.cruise_speed),
            ("cell_size", self.cell_size),
            ("vertical_speed", self.vertical_speed),
            ("search_height", self.search_height),
            ("transport_height", self.transport_height),
            ("power_cruise", self.power_cruise),
            ("power_hover", self.power_hover),
            ("power_vertical", self.power_vertical),
            ("grab_duration", self.grab_duration),
            ("grab_tolerance", self.grab_tolerance),
            ("detection_radius", self.detection_radius),
            ("dt", self.dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MicroError::InvalidParams(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        let nonneg = [
            ("approach_offset", self.approach_offset),
            ("settle_std", self.settle_std),
            ("position_noise", self.position_noise),
            ("drop_rate", self.drop_rate),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(MicroError::InvalidParams(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if !self.settle_mean.is_finite() {
            return Err(MicroError::InvalidParams(
                "settle_mean must be finite".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.sensor_reliability) {
            return Err(MicroError::InvalidParams(
                "sensor_reliability must lie in [0, 1]".into(),
            ));
        }
        if self.dt > 0.1 {
            return Err(MicroError::InvalidParams(format!(
                "dt must be at most 0.1 s, got {}",
                self.dt
            )));
        }
        if self.drop_rate * self.dt > 1.0 {
            return Err(MicroError::InvalidParams("drop_rate * dt exceeds 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MicroError {
    #[error("invalid micro-simulation parameters: {0}")]
    InvalidParams(String),
    #[error(
        "approach did not settle: {settle:.3} s is more than ten times the nominal {nominal:.3} s"
    )]
    NonConvergence { settle: f64, nominal: f64 },
    #[error("calibration needs at least 2 trials, got {0}")]
    TooFewTrials(usize),
}

/// Time and battery used by one run of an action, plus whether its event
/// (detection, grab failure, drop) happened.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub time: f64,
    pub battery: f64,
    pub event: bool,
}

#[derive(Debug, Default, Clone, Copy)]
struct Clock {
    time: f64,
    battery: f64,
}

impl Clock {
    /// Travels `distance` at `speed`, drawing `power`. `hazard` is called
    /// once per step with the step length.
    fn travel(
        &mut self,
        distance: f64,
        speed: f64,
        power: f64,
        dt: f64,
        mut hazard: impl FnMut(f64),
    ) {
        let (mut x, mut t, mut e) = (0.0, 0.0, 0.0);
        while x < distance {
            let full = x + speed * dt;
            let h = if full < distance {
                dt
            } else {
                (distance - x) / speed
            };
            x = if full < distance { full } else { distance };
            t += h;
            e += power * h;
            hazard(h);
        }
        self.time += t;
        self.battery += e;
    }

    fn hover(&mut self, duration: f64, power: f64, dt: f64) {
        let (mut t, mut e) = (0.0, 0.0);
        while t < duration {
            let h = if t + dt < duration { dt } else { duration - t };
            t += h;
            e += power * h;
        }
        self.time += t;
        self.battery += e;
    }

    fn sample(self, event: bool) -> Sample {
        Sample {
            time: self.time,
            battery: self.battery,
            event,
        }
    }
}

fn settle_time(p: &MicroParams, rng: &mut ChaCha8Rng) -> f64 {
    if p.settle_std == 0.0 {
        return p.settle_mean.max(0.0);
    }
    let normal = Normal::new(p.settle_mean, p.settle_std).expect("validated spread");
    // rejection keeps the law exactly truncated; give up far in the tail
    for _ in 0..10_000 {
        let x = normal.sample(rng);
        if x >= 0.0 {
            return x;
        }
    }
    0.0
}

fn approach(p: &MicroParams, offset: f64, rng: &mut ChaCha8Rng) -> Result<Sample, MicroError> {
    let mut clock = Clock::default();
    clock.travel(offset, p.cruise_speed, p.power_cruise, p.dt, |_| {});
    let settle = settle_time(p, rng);
    let nominal = offset / p.cruise_speed + p.settle_mean.max(0.0);
    if settle > 10.0 * nominal {
        return Err(MicroError::NonConvergence { settle, nominal });
    }
    clock.hover(settle, p.power_hover, p.dt);
    Ok(clock.sample(false))
}

/// Flies `offset` metres to hover above an object and settles there.
pub fn simulate_approach(p: &MicroParams, offset: f64, seed: u64) -> Result<Sample, MicroError> {
    p.validate()?;
    if !(offset >= 0.0 && offset.is_finite()) {
        return Err(MicroError::InvalidParams(format!(
            "offset must be non-negative, got {offset}"
        )));
    }
    approach(p, offset, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Sweeps one cell along its centre line; the event is detecting an object
/// placed uniformly in the cell.
fn search(p: &MicroParams, rng: &mut ChaCha8Rng) -> Sample {
    let mut clock = Clock::default();
    clock.travel(p.cell_size, p.cruise_speed, p.power_cruise, p.dt, |_| {});
    let y: f64 = rng.random::<f64>() * p.cell_size;
    let in_view = (y - p.cell_size / 2.0).abs() <= p.detection_radius;
    let seen = rng.random::<f64>() < p.sensor_reliability;
    clock.sample(in_view && seen)
}

fn vertical(p: &MicroParams, height: f64) -> Sample {
    let mut clock = Clock::default();
    clock.travel(height, p.vertical_speed, p.power_vertical, p.dt, |_| {});
    clock.sample(false)
}

/// Holds position while the gripper closes; fails when the hover error
/// exceeds the tolerance.
fn grab(p: &MicroParams, rng: &mut ChaCha8Rng) -> Sample {
    let mut clock = Clock::default();
    clock.hover(p.grab_duration, p.power_hover, p.dt);
    let miss = if p.position_noise > 0.0 {
        let normal = Normal::new(0.0, p.position_noise).expect("validated spread");
        let (ex, ey): (f64, f64) = (normal.sample(rng), normal.sample(rng));
        ex.hypot(ey) > p.grab_tolerance
    } else {
        false
    };
    clock.sample(miss)
}

/// Carries an object across one cell with a constant drop hazard.
fn transport(p: &MicroParams, rng: &mut ChaCha8Rng) -> Sample {
    let mut clock = Clock::default();
    let mut dropped = false;
    clock.travel(p.cell_size, p.cruise_speed, p.power_cruise, p.dt, |h| {
        if p.drop_rate > 0.0 && rng.random::<f64>() < p.drop_rate * h {
            dropped = true;
        }
    });
    clock.sample(dropped)
}

/// Lowers the object to the ground, releases it and climbs back.
fn deposit(p: &MicroParams) -> Sample {
    let mut clock = Clock::default();
    clock.travel(
        p.transport_height,
        p.vertical_speed,
        p.power_vertical,
        p.dt,
        |_| {},
    );
    clock.hover(p.grab_duration, p.power_hover, p.dt);
    clock.travel(
        p.transport_height,
        p.vertical_speed,
        p.power_vertical,
        p.dt,
        |_| {},
    );
    clock.sample(false)
}

/// Calibrated actions in a fixed order; the flag marks actions whose event
/// probability is reported.
pub const ACTIONS: [(&str, bool); 7] = [
    ("approach", false),
    ("search", true),
    ("descend", false),
    ("grab", true),
    ("ascend", false),
    ("transport", true),
    ("deposit", false),
];

fn run_action(p: &MicroParams, action: usize, rng: &mut ChaCha8Rng) -> Result<Sample, MicroError> {
    Ok(match ACTIONS[action].0 {
        "approach" => approach(p, p.approach_offset, rng)?,
        "search" => search(p, rng),
        "descend" => vertical(p, p.search_height),
        "grab" => grab(p, rng),
        "ascend" => vertical(p, p.transport_height),
        "transport" => transport(p, rng),
        _ => deposit(p),
    })
}

/// Mean and integer hull of a sample set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub lo: i64,
    pub hi: i64,
}

impl Summary {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let min = values.clone().fold(f64::INFINITY, f64::min);
        let max = values.fold(f64::NEG_INFINITY, f64::max);
        Summary {
            mean,
            lo: min.floor() as i64,
            hi: max.ceil() as i64,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo as f64 <= x && x <= self.hi as f64
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionStat {
    pub time: Summary,
    pub battery: Summary,
    /// Event frequency, absent for actions without an event.
    pub prob: Option<f64>,
}

/// Calibration table keyed by action name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionStats(pub BTreeMap<String, ActionStat>);

impl ActionStats {
    pub fn get(&self, action: &str) -> Option<&ActionStat> {
        self.0.get(action)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Every trial of every action. Trial `i` of action `a` draws from ChaCha
/// stream `a * 2^32 + i` of the seed.
pub fn trial_samples(p: &MicroParams) -> Result<BTreeMap<String, Vec<Sample>>, MicroError> {
    p.validate()?;
    if p.trials < 2 {
        return Err(MicroError::TooFewTrials(p.trials));
    }
    let mut out = BTreeMap::new();
    for (a, (name, _)) in ACTIONS.iter().enumerate() {
        let samples = (0..p.trials)
            .into_par_iter()
            .with_min_len(64)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
                rng.set_stream(((a as u64) << 32) | i as u64);
                run_action(p, a, &mut rng)
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.insert(name.to_string(), samples);
    }
    Ok(out)
}

pub fn summarize(samples: &BTreeMap<String, Vec<Sample>>) -> ActionStats {
    let mut stats = BTreeMap::new();
    for (name, with_event) in ACTIONS {
        let Some(s) = samples.get(name) else { continue };
        let prob = with_event.then(|| s.iter().filter(|x| x.event).count() as f64 / s.len() as f64);
        stats.insert(
            name.to_string(),
            ActionStat {
                time: Summary::of(s.iter().map(|x| x.time)),
                battery: Summary::of(s.iter().map(|x| x.battery)),
                prob,
            },
        );
    }
    ActionStats(stats)
}

/// Runs `p.trials` trials per action and aggregates them.
pub fn calibrate(p: &MicroParams) -> Result<ActionStats, MicroError> {
    Ok(summarize(&trial_samples(p)?))
}
