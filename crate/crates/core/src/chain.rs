//! Daisy chain of up to 16 displays. Every device stores and forwards each
//! message to the next one, so the device at position `i` hears a message
//! `i * hop_latency` after the controller sends it. A device acts only on
//! channel-voice messages whose channel equals its address.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{Command, DeviceConfig, DeviceError};
use crate::midi::{MessageKind, MidiMessage, CC_ALL_NOTES_OFF};
use crate::odor::{OdorantMap, VelocityCurve};

pub const MAX_DEVICES: usize = 16;
pub const DEFAULT_HOP_LATENCY: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("chain holds at most {MAX_DEVICES} devices, got {0}")]
    TooManyDevices(usize),
    #[error("device address {0} used more than once")]
    DuplicateAddress(u8),
    #[error("device address {0} outside 0..=15")]
    AddressRange(u8),
    #[error("hop latency must be >= 0, got {0}")]
    HopLatency(f64),
    #[error("device at address {address}: {source}")]
    Device { address: u8, source: DeviceError },
    #[error("invalid topology TOML: {0}")]
    Toml(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDevice {
    pub address: u8,
    #[serde(default)]
    pub config: DeviceConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TopologyFile {
    #[serde(default = "default_hop")]
    hop_latency: f64,
    #[serde(default, rename = "device")]
    devices: Vec<ChainDevice>,
}

fn default_hop() -> f64 {
    DEFAULT_HOP_LATENCY
}

/// Ordered devices, position 0 nearest the controller. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTopology {
    devices: Vec<ChainDevice>,
    hop_latency: f64,
}

impl ChainTopology {
    pub fn new(devices: Vec<ChainDevice>, hop_latency: f64) -> Result<Self, TopologyError> {
        if devices.len() > MAX_DEVICES {
            return Err(TopologyError::TooManyDevices(devices.len()));
        }
        if !(hop_latency >= 0.0 && hop_latency.is_finite()) {
            return Err(TopologyError::HopLatency(hop_latency));
        }
        let mut seen = BTreeSet::new();
        for d in &devices {
            if d.address > 15 {
                return Err(TopologyError::AddressRange(d.address));
            }
            if !seen.insert(d.address) {
                return Err(TopologyError::DuplicateAddress(d.address));
            }
            d.config.check().map_err(|source| TopologyError::Device {
                address: d.address,
                source,
            })?;
        }
        Ok(ChainTopology {
            devices,
            hop_latency,
        })
    }

    /// `n` default devices with addresses `0..n`.
    pub fn uniform(
        n: usize,
        config: DeviceConfig,
        hop_latency: f64,
    ) -> Result<Self, TopologyError> {
        let devices = (0..n)
            .map(|i| ChainDevice {
                address: u8::try_from(i).unwrap_or(u8::MAX),
                config: config.clone(),
            })
            .collect();
        Self::new(devices, hop_latency)
    }

    pub fn from_toml(text: &str) -> Result<Self, TopologyError> {
        let file: TopologyFile =
            toml::from_str(text).map_err(|e| TopologyError::Toml(e.to_string()))?;
        Self::new(file.devices, file.hop_latency)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&TopologyFile {
            hop_latency: self.hop_latency,
            devices: self.devices.clone(),
        })
        .expect("topology serializes")
    }

    pub fn devices(&self) -> &[ChainDevice] {
        &self.devices
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn hop_latency(&self) -> f64 {
        self.hop_latency
    }

    pub fn position_of(&self, address: u8) -> Option<usize> {
        self.devices.iter().position(|d| d.address == address)
    }

    pub fn arrival(&self, position: usize) -> f64 {
        position as f64 * self.hop_latency
    }

    /// Odorant assignment implied by what each device has loaded.
    pub fn odorants(&self) -> OdorantMap {
        let mut map = OdorantMap::new();
        for d in &self.devices {
            map.assign_device(d.address, d.config.loaded_odorant.name.clone());
        }
        map
    }

    /// A copy without the device at `position`.
    pub fn without(&self, position: usize) -> ChainTopology {
        let mut devices = self.devices.clone();
        devices.remove(position);
        ChainTopology {
            devices,
            hop_latency: self.hop_latency,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hop {
    pub position: usize,
    pub address: u8,
    pub arrival: f64,
    pub actuated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Route {
    pub hops: Vec<Hop>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl Route {
    pub fn actuated(&self) -> impl Iterator<Item = &Hop> {
        self.hops.iter().filter(|h| h.actuated)
    }
}

/// Where a message goes and who acts on it.
pub fn route(msg: &MidiMessage, topo: &ChainTopology) -> Route {
    let hops: Vec<Hop> = topo
        .devices
        .iter()
        .enumerate()
        .map(|(position, d)| Hop {
            position,
            address: d.address,
            arrival: topo.arrival(position),
            actuated: msg.channel == d.address,
        })
        .collect();
    let warning = (!hops.iter().any(|h| h.actuated)).then(|| {
        format!(
            "no device at address {}; message forwarded only",
            msg.channel
        )
    });
    Route { hops, warning }
}

/// What a device does with a message addressed to it.
pub fn interpret(msg: &MidiMessage, curve: VelocityCurve) -> Option<Command> {
    match msg.kind {
        MessageKind::NoteOn if msg.data2 > 0 => {
            Some(Command::Deliver(curve.concentration(msg.data2)))
        }
        MessageKind::NoteOn | MessageKind::NoteOff => Some(Command::Stop),
        MessageKind::ControlChange if msg.is_all_off() => Some(Command::Stop),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StopCommand {
    pub position: usize,
    pub address: u8,
    pub arrival: f64,
    pub message: MidiMessage,
}

/// Telemetry entry recorded whenever the emergency stop fires.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanicRecord {
    pub devices: usize,
    pub last_arrival: f64,
}

/// All Notes Off on every device's channel, each arriving after its hops.
pub fn broadcast_all_off(topo: &ChainTopology) -> (Vec<StopCommand>, PanicRecord) {
    let commands: Vec<StopCommand> = topo
        .devices
        .iter()
        .enumerate()
        .map(|(position, d)| StopCommand {
            position,
            address: d.address,
            arrival: topo.arrival(position),
            message: MidiMessage::control_change(d.address, CC_ALL_NOTES_OFF, 0),
        })
        .collect();
    let record = PanicRecord {
        devices: commands.len(),
        last_arrival: commands.last().map(|c| c.arrival).unwrap_or(0.0),
    };
    (commands, record)
}
