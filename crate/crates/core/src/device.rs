//! One olfactory display: pump, odor column, delivery tube and nose cone.
//!
//! The plant is a pure transport delay followed by a first-order lag. A
//! delivery command sets the pump speed from the calibration map; the new
//! target concentration reaches the nose after `tube_volume / flow`, then
//! the nose concentration relaxes toward it with `tau_rise` (or `tau_fall`
//! when falling). Stop has no transport delay: the pump halts and the
//! nose cone decays passively, or four times faster in purge mode.
//!
//! Each segment between queue releases is integrated with the exact
//! exponential solution, so the trajectory does not depend on the step
//! size.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::odor::OdorantSpec;

/// Concentration above which time counts toward exposure.
pub const EXPOSURE_THRESHOLD: f64 = 0.05;
/// Fraction of target at which a delivery counts as perceived.
pub const PERCEIVED_FRACTION: f64 = 0.1;
/// Purge flushes the nose cone this many times faster than passive decay.
pub const PURGE_SPEEDUP: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeviceError {
    #[error("device faulted: {0}")]
    Faulted(String),
    #[error("concentration {0} outside (0, 1]")]
    Concentration(f64),
    #[error("invalid device config: {0}")]
    Config(String),
}

/// Pump speed to steady-state concentration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Calibration {
    #[default]
    Identity,
    /// `(pump_speed, concentration)` pairs, strictly increasing in both.
    Table { points: Vec<(f64, f64)> },
}

impl Calibration {
    fn check(&self) -> Result<(), String> {
        if let Calibration::Table { points } = self {
            if points.len() < 2 {
                return Err("calibration table needs at least two points".into());
            }
            for w in points.windows(2) {
                if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                    return Err("calibration table must be strictly increasing".into());
                }
            }
            for &(s, c) in points {
                if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&c) {
                    return Err("calibration points must lie in [0, 1]".into());
                }
            }
        }
        Ok(())
    }

    /// Pump speed whose steady state is `concentration`.
    pub fn speed_for(&self, concentration: f64) -> f64 {
        match self {
            Calibration::Identity => concentration,
            Calibration::Table { points } => {
                interpolate(points.iter().map(|&(s, c)| (c, s)), concentration)
            }
        }
    }

    pub fn concentration_at(&self, speed: f64) -> f64 {
        match self {
            Calibration::Identity => speed,
            Calibration::Table { points } => interpolate(points.iter().copied(), speed),
        }
    }
}

// piecewise-linear, clamped at both ends
fn interpolate(points: impl Iterator<Item = (f64, f64)> + Clone, x: f64) -> f64 {
    let pts: Vec<(f64, f64)> = points.collect();
    let first = pts[0];
    let last = pts[pts.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x <= x1 {
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        }
    }
    last.1
}

/// Physical parameters of one display. Every field has a default, so a
/// TOML table only needs the values it overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviceConfig {
    /// mL/s at full pump speed.
    pub pump_max_flow: f64,
    pub head_count: u8,
    /// mL between odor column and nose cone.
    pub tube_volume: f64,
    pub tau_rise: f64,
    pub tau_fall: f64,
    /// mAh.
    pub battery_capacity: f64,
    /// mA with the pump off.
    pub idle_current: f64,
    /// mA with the pump running.
    pub active_current: f64,
    /// dB SPL at 1 m per unit pump speed.
    pub noise_coeff: f64,
    pub audibility_threshold: f64,
    pub loaded_odorant: OdorantSpec,
    pub sim_step: f64,
    pub calibration: Calibration,
    pub purge: bool,
    /// Concentration left behind by odorant absorbed in the flow path.
    pub residual_floor: f64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            pump_max_flow: 10.0,
            head_count: 2,
            tube_volume: 5.0,
            tau_rise: 1.0,
            tau_fall: 2.0,
            battery_capacity: 2000.0,
            idle_current: 120.0,
            active_current: 450.0,
            noise_coeff: 18.0,
            audibility_threshold: 20.0,
            loaded_odorant: OdorantSpec::cade(),
            sim_step: 0.01,
            calibration: Calibration::Identity,
            purge: false,
            residual_floor: 0.0,
        }
    }
}

impl DeviceConfig {
    /// Validates the config; the returned strings are non-fatal warnings.
    pub fn check(&self) -> Result<Vec<String>, DeviceError> {
        let positive = [
            ("pump_max_flow", self.pump_max_flow),
            ("tube_volume", self.tube_volume),
            ("tau_rise", self.tau_rise),
            ("tau_fall", self.tau_fall),
            ("battery_capacity", self.battery_capacity),
            ("idle_current", self.idle_current),
            ("active_current", self.active_current),
            ("noise_coeff", self.noise_coeff),
            ("audibility_threshold", self.audibility_threshold),
            ("sim_step", self.sim_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DeviceError::Config(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.head_count != 2 {
            return Err(DeviceError::Config(format!(
                "head_count is fixed at 2, got {}",
                self.head_count
            )));
        }
        if !(0.0..1.0).contains(&self.residual_floor) {
            return Err(DeviceError::Config(
                "residual_floor must be in [0, 1)".into(),
            ));
        }
        if self.loaded_odorant.name.is_empty() {
            return Err(DeviceError::Config("loaded odorant needs a name".into()));
        }
        self.calibration.check().map_err(DeviceError::Config)?;

        let mut warnings = Vec::new();
        let full = self.noise_spl(1.0);
        if full > self.audibility_threshold {
            warnings.push(format!(
                "pump noise {full:.1} dB at full speed exceeds audibility threshold {:.1} dB",
                self.audibility_threshold
            ));
        }
        Ok(warnings)
    }

    /// Transport delay for a delivery at `concentration`.
    pub fn dead_time(&self, concentration: f64) -> f64 {
        self.tube_volume / (self.calibration.speed_for(concentration) * self.pump_max_flow)
    }

    /// Time from command receipt until the nose reaches 10% of
    /// `concentration`, starting from clean air.
    pub fn onset_latency(&self, concentration: f64) -> f64 {
        self.dead_time(concentration) + self.tau_rise * (1.0 / (1.0 - PERCEIVED_FRACTION)).ln()
    }

    /// Pump noise at 1 m, linear in speed.
    pub fn noise_spl(&self, pump_speed: f64) -> f64 {
        self.noise_coeff * pump_speed.clamp(0.0, 1.0)
    }

    fn fall_tau(&self) -> f64 {
        if self.purge {
            self.tau_fall / PURGE_SPEEDUP
        } else {
            self.tau_fall
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, DeviceError> {
        let c: DeviceConfig =
            toml::from_str(text).map_err(|e| DeviceError::Config(e.to_string()))?;
        c.check()?;
        Ok(c)
    }
}

/// Free function form of [`DeviceConfig::onset_latency`].
pub fn onset_latency(config: &DeviceConfig, concentration: f64) -> f64 {
    config.onset_latency(concentration)
}

pub fn noise_spl(config: &DeviceConfig, pump_speed: f64) -> f64 {
    config.noise_spl(pump_speed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Command {
    Deliver(f64),
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Idle,
    Delivering,
    Purging,
    Fault,
}

/// Everything that changes while a device runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceState {
    pub t: f64,
    pub pump_speed: f64,
    pub target_concentration: f64,
    pub nose_concentration: f64,
    /// `(release_t, target)`, release times non-decreasing.
    pub dead_time_queue: VecDeque<(f64, f64)>,
    pub battery_charge: f64,
    pub cumulative_exposure: f64,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault_reason: Option<String>,
    #[serde(skip)]
    delivered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeviceEvent {
    Fault { t: f64, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    config: DeviceConfig,
    state: DeviceState,
}

impl Device {
    pub fn new(config: DeviceConfig) -> Self {
        let state = DeviceState {
            t: 0.0,
            pump_speed: 0.0,
            target_concentration: 0.0,
            nose_concentration: 0.0,
            dead_time_queue: VecDeque::new(),
            battery_charge: config.battery_capacity,
            cumulative_exposure: 0.0,
            status: Status::Idle,
            fault_reason: None,
            delivered: false,
        };
        Device { config, state }
    }

    pub fn config(&self) -> &DeviceConfig {
        &self.config
    }

    pub fn state(&self) -> &DeviceState {
        &self.state
    }

    pub fn actuate(&mut self, command: Command) -> Result<(), DeviceError> {
        if let Some(reason) = &self.state.fault_reason {
            return Err(DeviceError::Faulted(reason.clone()));
        }
        let s = &mut self.state;
        match command {
            Command::Deliver(c) => {
                if !(c > 0.0 && c <= 1.0) {
                    return Err(DeviceError::Concentration(c));
                }
                let speed = self.config.calibration.speed_for(c);
                let release = s.t + self.config.tube_volume / (speed * self.config.pump_max_flow);
                s.pump_speed = speed;
                // odor already in the tube is overtaken by the new front
                while s.dead_time_queue.back().is_some_and(|&(r, _)| r >= release) {
                    s.dead_time_queue.pop_back();
                }
                s.dead_time_queue.push_back((release, c));
            }
            Command::Stop => {
                s.pump_speed = 0.0;
                s.dead_time_queue.clear();
                s.dead_time_queue.push_back((s.t, 0.0));
            }
        }
        self.refresh_status();
        Ok(())
    }

    /// Advances the device by `dt` seconds.
    pub fn step(&mut self, dt: f64) -> Option<DeviceEvent> {
        debug_assert!(dt >= 0.0);
        let end = self.state.t + dt;
        let mut event = None;
        while let Some(&(release, target)) = self.state.dead_time_queue.front() {
            if release > end {
                break;
            }
            event = event.or(self.advance(release - self.state.t));
            self.state.dead_time_queue.pop_front();
            self.state.target_concentration = target;
            if target > 0.0 {
                self.state.delivered = true;
            }
        }
        event = event.or(self.advance(end - self.state.t));
        self.state.t = end;
        self.refresh_status();
        event
    }

    /// Steps forward to absolute time `t` (no-op if already there).
    pub fn step_to(&mut self, t: f64) -> Option<DeviceEvent> {
        if t > self.state.t {
            self.step(t - self.state.t)
        } else {
            None
        }
    }

    fn advance(&mut self, h: f64) -> Option<DeviceEvent> {
        if h <= 0.0 {
            return None;
        }
        let cfg = &self.config;
        let s = &mut self.state;
        let target = if s.target_concentration == 0.0 && s.delivered {
            cfg.residual_floor
        } else {
            s.target_concentration
        };
        let c0 = s.nose_concentration;
        let tau = if target >= c0 {
            cfg.tau_rise
        } else {
            cfg.fall_tau()
        };
        let c1 = (target + (c0 - target) * (-h / tau).exp()).clamp(0.0, 1.0);

        let th = EXPOSURE_THRESHOLD;
        s.cumulative_exposure += match (c0 > th, c1 > th) {
            (true, true) => h,
            (false, false) => 0.0,
            (above_at_start, _) => {
                let crossing = (tau * ((c0 - target) / (th - target)).ln()).clamp(0.0, h);
                if above_at_start {
                    crossing
                } else {
                    h - crossing
                }
            }
        };
        s.nose_concentration = c1;
        s.t += h;

        if s.fault_reason.is_some() {
            return None;
        }
        let flushing = cfg.purge && s.pump_speed == 0.0 && c0 > th;
        let current = if s.pump_speed > 0.0 || flushing {
            cfg.active_current
        } else {
            cfg.idle_current
        };
        s.battery_charge -= current * h / 3600.0;
        if s.battery_charge <= 0.0 {
            s.battery_charge = 0.0;
            let reason = "battery exhausted".to_string();
            s.fault_reason = Some(reason.clone());
            s.status = Status::Fault;
            s.pump_speed = 0.0;
            s.target_concentration = 0.0;
            s.dead_time_queue.clear();
            return Some(DeviceEvent::Fault { t: s.t, reason });
        }
        None
    }

    fn refresh_status(&mut self) {
        let s = &mut self.state;
        s.status = if s.fault_reason.is_some() {
            Status::Fault
        } else if s.pump_speed > 0.0 {
            Status::Delivering
        } else if s.nose_concentration > EXPOSURE_THRESHOLD {
            Status::Purging
        } else {
            Status::Idle
        };
    }

    /// Clears a latched fault. A flat battery faults again on the next step.
    pub fn reset(&mut self) {
        self.state.fault_reason = None;
        self.refresh_status();
    }

    pub fn recharge(&mut self) {
        self.state.battery_charge = self.config.battery_capacity;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Endurance {
    pub survives: bool,
    pub charge_remaining: f64,
    /// Seconds into the session at which the battery ran flat.
    pub depleted_at: Option<f64>,
}

/// Integrates battery drain over `(active_seconds, idle_seconds)` blocks.
pub fn endurance(config: &DeviceConfig, session: &[(f64, f64)]) -> Endurance {
    let mut charge = config.battery_capacity;
    let mut elapsed = 0.0;
    for &(active, idle) in session {
        for (secs, current) in [(active, config.active_current), (idle, config.idle_current)] {
            let drain = current * secs / 3600.0;
            if drain >= charge {
                return Endurance {
                    survives: false,
                    charge_remaining: 0.0,
                    depleted_at: Some(elapsed + charge * 3600.0 / current),
                };
            }
            charge -= drain;
            elapsed += secs;
        }
    }
    Endurance {
        survives: true,
        charge_remaining: charge,
        depleted_at: None,
    }
}

/// Eight hours with 50 evenly spaced 15 s deliveries.
pub fn exhibition_day() -> Vec<(f64, f64)> {
    let deliveries = 50;
    let active = 15.0;
    let idle = (8.0 * 3600.0 - deliveries as f64 * active) / deliveries as f64;
    vec![(active, idle); deliveries]
}
