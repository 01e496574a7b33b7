use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::ChainTopology;
use crate::midi::MidiMessage;
use crate::odor::{ValidatedComposition, VelocityCurve};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("event {event_index}: no device at address {address} in the chain")]
    UnknownDevice { event_index: usize, address: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "action")]
pub enum Payload {
    Deliver {
        odor_channel: u8,
        concentration: f64,
    },
    Stop {
        odor_channel: u8,
    },
}

impl Payload {
    pub fn is_stop(&self) -> bool {
        matches!(self, Payload::Stop { .. })
    }
}

/// One command leaving the controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedCommand {
    pub issue_t: f64,
    pub address: u8,
    pub position: usize,
    pub payload: Payload,
    /// When the stimulus should be perceived (delivery) or end (stop).
    pub intended_t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl TimedCommand {
    /// The wire message for this command.
    pub fn message(&self, curve: VelocityCurve) -> MidiMessage {
        match self.payload {
            Payload::Deliver {
                odor_channel,
                concentration,
            } => MidiMessage::note_on(self.address, odor_channel, curve.velocity(concentration)),
            Payload::Stop { odor_channel } => MidiMessage::note_off(self.address, odor_channel, 0),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    /// Sorted by issue time, then chain position, stops before deliveries.
    pub commands: Vec<TimedCommand>,
    pub warnings: Vec<String>,
}

impl Timeline {
    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompileOptions {
    pub compensation: bool,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions { compensation: true }
    }
}

/// Turns a validated composition into controller commands.
///
/// With compensation, a delivery for an event at chain position `i` leaves
/// `i * hop + onset_latency(c)` before its onset so the nose reaches 10% of
/// target exactly at the onset; the stop leaves `i * hop` before the
/// event's end. Times that would fall before 0 are clamped with a warning.
pub fn compile(
    validated: &ValidatedComposition,
    topo: &ChainTopology,
    opts: &CompileOptions,
) -> Result<Timeline, CompileError> {
    let comp = validated.composition();
    let mut timeline = Timeline::default();
    for (event_index, e) in comp.events.iter().enumerate() {
        let position = topo
            .position_of(e.device_address)
            .ok_or(CompileError::UnknownDevice {
                event_index,
                address: e.device_address,
            })?;
        let config = &topo.devices()[position].config;
        let hop = topo.arrival(position);
        let (mut issue, mut stop) = if opts.compensation {
            (
                e.onset - (hop + config.onset_latency(e.concentration)),
                e.end() - hop,
            )
        } else {
            (e.onset, e.end())
        };
        if issue < 0.0 {
            timeline.warnings.push(format!(
                "event {event_index}: delivery needs {:.4} s lead but onset is {:.4} s; issued at 0",
                -issue + e.onset,
                e.onset
            ));
            issue = 0.0;
        }
        if stop < 0.0 {
            stop = 0.0;
        }
        let base = TimedCommand {
            issue_t: issue,
            address: e.device_address,
            position,
            payload: Payload::Deliver {
                odor_channel: e.odor_channel,
                concentration: e.concentration,
            },
            intended_t: e.onset,
            event_index: Some(event_index),
            label: e.label.clone(),
        };
        let stop_cmd = TimedCommand {
            issue_t: stop,
            payload: Payload::Stop {
                odor_channel: e.odor_channel,
            },
            intended_t: e.end(),
            ..base.clone()
        };
        timeline.commands.push(base);
        timeline.commands.push(stop_cmd);
    }
    timeline.commands.sort_by(|a, b| {
        a.issue_t
            .total_cmp(&b.issue_t)
            .then(a.position.cmp(&b.position))
            .then(b.payload.is_stop().cmp(&a.payload.is_stop()))
    });
    Ok(timeline)
}
