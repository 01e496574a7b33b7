use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::clock::Clock;
use super::timeline::{Payload, TimedCommand, Timeline};
use crate::chain::{broadcast_all_off, ChainTopology};
use crate::device::{Command, Device, DeviceEvent, DeviceState, Status, PERCEIVED_FRACTION};
use crate::odor::Violation;

/// Watches stay open this long after the last scheduled item before the
/// run gives up on them.
const SETTLE_CAP: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("command for address {address} at position {position} does not match the chain")]
    TopologyMismatch { address: u8, position: usize },
    #[error("sim step must be positive, got {0}")]
    SimStep(f64),
}

/// Simulated devices, one per chain position.
#[derive(Debug, Clone)]
pub struct SimChain {
    topology: ChainTopology,
    devices: Vec<Device>,
}

impl SimChain {
    pub fn new(topology: ChainTopology) -> Self {
        let devices = topology
            .devices()
            .iter()
            .map(|d| Device::new(d.config.clone()))
            .collect();
        SimChain { topology, devices }
    }

    pub fn topology(&self) -> &ChainTopology {
        &self.topology
    }

    pub fn devices(&self) -> &[Device] {
        &self.devices
    }

    pub fn device_mut(&mut self, position: usize) -> &mut Device {
        &mut self.devices[position]
    }
}

/// Device state as written to the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub pump_speed: f64,
    pub target_concentration: f64,
    pub nose_concentration: f64,
    pub battery_charge: f64,
    pub cumulative_exposure: f64,
    pub status: Status,
}

impl From<&DeviceState> for Snapshot {
    fn from(s: &DeviceState) -> Self {
        Snapshot {
            pump_speed: s.pump_speed,
            target_concentration: s.target_concentration,
            nose_concentration: s.nose_concentration,
            battery_charge: s.battery_charge,
            cumulative_exposure: s.cumulative_exposure,
            status: s.status,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRule {
    pub rule: String,
    pub measured: Option<f64>,
    pub limit: Option<f64>,
}

impl From<&Violation> for RejectedRule {
    fn from(v: &Violation) -> Self {
        RejectedRule {
            rule: v.rule.id().to_string(),
            measured: v.measured,
            limit: v.limit,
        }
    }
}

/// One line of the session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEntry {
    Dispatch {
        t: f64,
        address: u8,
        position: usize,
        payload: Payload,
        intended_t: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    Arrive {
        t: f64,
        address: u8,
        position: usize,
        payload: Payload,
    },
    /// Nose concentration crossed 10% of the delivery target.
    Onset {
        t: f64,
        address: u8,
        position: usize,
        target: f64,
        intended_t: f64,
        error: f64,
        /// Arrival plus modeled onset latency.
        expected_t: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    /// A stop arrived before the delivery was perceived.
    Missed {
        t: f64,
        address: u8,
        position: usize,
        intended_t: f64,
    },
    Fault {
        t: f64,
        address: u8,
        position: usize,
        reason: String,
    },
    Aborted {
        t: f64,
        address: u8,
        position: usize,
        reason: String,
    },
    Cue {
        t: f64,
        label: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        expected_onsets: Vec<f64>,
    },
    Rejected {
        t: f64,
        label: String,
        violations: Vec<RejectedRule>,
    },
    Marker {
        t: f64,
        label: String,
    },
    Warning {
        t: f64,
        message: String,
    },
    Panic {
        t: f64,
        devices: usize,
        last_arrival: f64,
    },
    Snapshot {
        t: f64,
        address: u8,
        position: usize,
        state: Snapshot,
    },
}

/// Ordered event log, serialized as JSON Lines.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub entries: Vec<LogEntry>,
}

impl SessionLog {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("log entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(SessionLog { entries })
    }

    pub fn onsets(&self) -> impl Iterator<Item = &LogEntry> {
        self.entries
            .iter()
            .filter(|e| matches!(e, LogEntry::Onset { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub sim_step: f64,
    /// Log a snapshot of every device each this many steps; 0 disables.
    pub snapshot_every: u32,
    /// Keep stepping at least until this time.
    pub until: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            sim_step: 0.01,
            snapshot_every: 0,
            until: None,
        }
    }
}

#[derive(Debug, Clone)]
enum Item {
    Note(LogEntry),
    Dispatch(TimedCommand),
    Arrive(TimedCommand),
    Stop { position: usize, address: u8 },
}

#[derive(Debug, Clone)]
struct Pending {
    t: f64,
    seq: u64,
    item: Item,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // reversed: BinaryHeap pops the earliest item first
    fn cmp(&self, other: &Self) -> Ordering {
        other.t.total_cmp(&self.t).then(other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone)]
struct Watch {
    target: f64,
    intended_t: f64,
    expected_t: f64,
    label: Option<String>,
}

/// Step loop shared by timeline playback, live cues and scenarios.
///
/// Time advances on a fixed grid of `sim_step`. Within a step, commands
/// arrive at their exact times: the addressed device is stepped to the
/// arrival instant before it acts. Perceived onsets are checked at grid
/// points, so they are resolved to one step.
pub struct Engine<'a> {
    chain: &'a mut SimChain,
    dt: f64,
    step: u64,
    now: f64,
    seq: u64,
    pending: BinaryHeap<Pending>,
    watches: Vec<Option<Watch>>,
    faulted: Vec<bool>,
    snapshot_every: u32,
    log: Vec<LogEntry>,
}

impl<'a> Engine<'a> {
    pub fn new(chain: &'a mut SimChain, opts: &RunOptions) -> Result<Self, RunError> {
        if !(opts.sim_step > 0.0 && opts.sim_step.is_finite()) {
            return Err(RunError::SimStep(opts.sim_step));
        }
        let n = chain.devices.len();
        let faulted = chain
            .devices
            .iter()
            .map(|d| d.state().status == Status::Fault)
            .collect();
        let start = chain
            .devices
            .iter()
            .map(|d| d.state().t)
            .fold(0.0, f64::max);
        let step = (start / opts.sim_step).ceil() as u64;
        Ok(Engine {
            chain,
            dt: opts.sim_step,
            step,
            now: step as f64 * opts.sim_step,
            seq: 0,
            pending: BinaryHeap::new(),
            watches: vec![None; n],
            faulted,
            snapshot_every: opts.snapshot_every,
            log: Vec::new(),
        })
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn sim_step(&self) -> f64 {
        self.dt
    }

    pub fn chain(&self) -> &SimChain {
        self.chain
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn into_log(self) -> SessionLog {
        SessionLog { entries: self.log }
    }

    pub fn record(&mut self, entry: LogEntry) {
        self.log.push(entry);
    }

    fn push(&mut self, t: f64, item: Item) {
        self.seq += 1;
        self.pending.push(Pending {
            t,
            seq: self.seq,
            item,
        });
    }

    pub fn schedule(&mut self, cmd: TimedCommand) -> Result<(), RunError> {
        let ok = self
            .chain
            .topology
            .devices()
            .get(cmd.position)
            .is_some_and(|d| d.address == cmd.address);
        if !ok {
            return Err(RunError::TopologyMismatch {
                address: cmd.address,
                position: cmd.position,
            });
        }
        self.push(cmd.issue_t, Item::Dispatch(cmd));
        Ok(())
    }

    /// Writes `entry` to the log once the run reaches `t`.
    pub fn schedule_note(&mut self, t: f64, entry: LogEntry) {
        self.push(t, Item::Note(entry));
    }

    /// Sends All Notes Off down the chain now.
    pub fn panic_stop(&mut self) {
        let (commands, record) = broadcast_all_off(&self.chain.topology);
        self.log.push(LogEntry::Panic {
            t: self.now,
            devices: record.devices,
            last_arrival: self.now + record.last_arrival,
        });
        for c in commands {
            self.push(
                self.now + c.arrival,
                Item::Stop {
                    position: c.position,
                    address: c.address,
                },
            );
        }
    }

    /// Nothing scheduled and no delivery waiting to be perceived.
    pub fn is_settled(&self) -> bool {
        self.pending.is_empty() && self.watches.iter().all(Option::is_none)
    }

    fn last_pending_t(&self) -> f64 {
        self.pending.iter().map(|p| p.t).fold(self.now, f64::max)
    }

    /// Handles everything due at or before `t`.
    pub fn process_due(&mut self, t: f64) {
        while self.pending.peek().is_some_and(|p| p.t <= t) {
            let p = self.pending.pop().expect("peeked");
            match p.item {
                Item::Note(entry) => self.log.push(entry),
                Item::Dispatch(cmd) => {
                    self.log.push(LogEntry::Dispatch {
                        t: p.t,
                        address: cmd.address,
                        position: cmd.position,
                        payload: cmd.payload,
                        intended_t: cmd.intended_t,
                        label: cmd.label.clone(),
                    });
                    let arrival = p.t + self.chain.topology.arrival(cmd.position);
                    self.push(arrival, Item::Arrive(cmd));
                }
                Item::Arrive(cmd) => self.arrive(p.t, cmd),
                Item::Stop { position, address } => {
                    let cmd = TimedCommand {
                        issue_t: p.t,
                        address,
                        position,
                        payload: Payload::Stop { odor_channel: 0 },
                        intended_t: p.t,
                        event_index: None,
                        label: None,
                    };
                    self.arrive(p.t, cmd);
                }
            }
        }
    }

    fn arrive(&mut self, t: f64, cmd: TimedCommand) {
        let pos = cmd.position;
        if let Some(DeviceEvent::Fault { t, reason }) = self.chain.devices[pos].step_to(t) {
            self.fault(pos, t, reason);
        }
        self.log.push(LogEntry::Arrive {
            t,
            address: cmd.address,
            position: pos,
            payload: cmd.payload,
        });
        if self.faulted[pos] {
            self.log.push(LogEntry::Aborted {
                t,
                address: cmd.address,
                position: pos,
                reason: "device faulted".into(),
            });
            return;
        }
        let command = match cmd.payload {
            Payload::Deliver { concentration, .. } => Command::Deliver(concentration),
            Payload::Stop { .. } => Command::Stop,
        };
        if let Err(e) = self.chain.devices[pos].actuate(command) {
            self.log.push(LogEntry::Aborted {
                t,
                address: cmd.address,
                position: pos,
                reason: e.to_string(),
            });
            return;
        }
        match cmd.payload {
            Payload::Deliver { concentration, .. } => {
                let expected_t = t + self.chain.devices[pos]
                    .config()
                    .onset_latency(concentration);
                self.watches[pos] = Some(Watch {
                    target: concentration,
                    intended_t: cmd.intended_t,
                    expected_t,
                    label: cmd.label,
                });
            }
            Payload::Stop { .. } => {
                if let Some(w) = self.watches[pos].take() {
                    self.log.push(LogEntry::Missed {
                        t,
                        address: cmd.address,
                        position: pos,
                        intended_t: w.intended_t,
                    });
                }
            }
        }
    }

    fn fault(&mut self, pos: usize, t: f64, reason: String) {
        self.faulted[pos] = true;
        self.watches[pos] = None;
        self.log.push(LogEntry::Fault {
            t,
            address: self.chain.topology.devices()[pos].address,
            position: pos,
            reason,
        });
    }

    /// Advances one grid step.
    pub fn step_once(&mut self, clock: &mut dyn Clock) {
        let t_next = (self.step + 1) as f64 * self.dt;
        clock.sleep_until(t_next);
        self.process_due(t_next);
        for pos in 0..self.chain.devices.len() {
            if let Some(DeviceEvent::Fault { t, reason }) = self.chain.devices[pos].step_to(t_next)
            {
                self.fault(pos, t, reason);
            }
            let state = self.chain.devices[pos].state();
            if let Some(w) = &self.watches[pos] {
                if state.nose_concentration >= PERCEIVED_FRACTION * w.target {
                    let w = self.watches[pos].take().expect("watch present");
                    self.log.push(LogEntry::Onset {
                        t: t_next,
                        address: self.chain.topology.devices()[pos].address,
                        position: pos,
                        target: w.target,
                        intended_t: w.intended_t,
                        error: t_next - w.intended_t,
                        expected_t: w.expected_t,
                        label: w.label,
                    });
                }
            }
        }
        self.step += 1;
        self.now = t_next;
        if self.snapshot_every > 0 && self.step.is_multiple_of(u64::from(self.snapshot_every)) {
            for (pos, d) in self.chain.devices.iter().enumerate() {
                self.log.push(LogEntry::Snapshot {
                    t: t_next,
                    address: self.chain.topology.devices()[pos].address,
                    position: pos,
                    state: Snapshot::from(d.state()),
                });
            }
        }
    }

    /// Steps until the grid reaches `t`.
    pub fn advance_to(&mut self, t: f64, clock: &mut dyn Clock) {
        self.process_due(self.now);
        while self.now < t - 1e-9 {
            self.step_once(clock);
        }
    }

    /// Steps until everything scheduled has happened and every pending
    /// onset is resolved, or the settle cap runs out.
    pub fn run_to_completion(&mut self, until: Option<f64>, clock: &mut dyn Clock) {
        self.process_due(self.now);
        let until = until.unwrap_or(0.0);
        let cap = self.last_pending_t().max(until) + SETTLE_CAP;
        while (self.now < until - 1e-9 || !self.is_settled()) && self.now < cap {
            self.step_once(clock);
        }
    }
}

/// Plays a compiled timeline against simulated devices.
///
/// An empty timeline with no `until` returns an empty log without touching
/// the clock.
pub fn run(
    timeline: &Timeline,
    clock: &mut dyn Clock,
    chain: &mut SimChain,
    opts: &RunOptions,
) -> Result<SessionLog, RunError> {
    if timeline.is_empty() && opts.until.is_none() {
        return Ok(SessionLog::default());
    }
    let mut engine = Engine::new(chain, opts)?;
    for cmd in &timeline.commands {
        engine.schedule(cmd.clone())?;
    }
    for w in &timeline.warnings {
        engine.record(LogEntry::Warning {
            t: 0.0,
            message: w.clone(),
        });
    }
    engine.run_to_completion(opts.until, clock);
    Ok(engine.into_log())
}
