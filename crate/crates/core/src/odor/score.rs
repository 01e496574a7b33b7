use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::midi::{MessageKind, MidiMessage, SmfScore};

/// Number of decades spanned by the logarithmic curve unless configured.
pub const DEFAULT_LOG_SPAN: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("unknown cue `{label}`; available: {}", available.join(", "))]
    UnknownCue {
        label: String,
        available: Vec<String>,
    },
    #[error("event {index}: {reason}")]
    InvalidEvent { index: usize, reason: String },
    #[error("cue `{label}` refers to event {index}, composition has {len}")]
    BadCueIndex {
        label: String,
        index: usize,
        len: usize,
    },
    #[error("events are not sorted by onset at index {0}")]
    Unsorted(usize),
    #[error("invalid composition JSON: {0}")]
    Json(String),
}

/// One timed stimulus on one odor channel of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdorEvent {
    /// Chain address, carried on the wire as the MIDI channel.
    pub device_address: u8,
    /// Odor channel within the device, carried as the note number.
    pub odor_channel: u8,
    /// Fraction of the device's calibrated full scale.
    pub concentration: f64,
    pub onset: f64,
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl OdorEvent {
    pub fn new(
        device_address: u8,
        odor_channel: u8,
        concentration: f64,
        onset: f64,
        duration: f64,
    ) -> Self {
        OdorEvent {
            device_address,
            odor_channel,
            concentration,
            onset,
            duration,
            label: None,
        }
    }

    pub fn labeled(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn end(&self) -> f64 {
        self.onset + self.duration
    }

    pub fn check(&self) -> Result<(), String> {
        if self.device_address > 15 {
            return Err(format!("device_address {} > 15", self.device_address));
        }
        if self.odor_channel > 127 {
            return Err(format!("odor_channel {} > 127", self.odor_channel));
        }
        if !(0.0..=1.0).contains(&self.concentration) {
            return Err(format!(
                "concentration {} outside [0, 1]",
                self.concentration
            ));
        }
        if !(self.onset >= 0.0 && self.onset.is_finite()) {
            return Err(format!("onset {} must be >= 0", self.onset));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(format!("duration {} must be > 0", self.duration));
        }
        Ok(())
    }
}

/// Events sorted by onset plus named cues pointing into them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdorComposition {
    pub name: String,
    pub events: Vec<OdorEvent>,
    #[serde(default)]
    pub cues: BTreeMap<String, Vec<usize>>,
}

impl OdorComposition {
    /// Sorts events by onset (stable) and derives cues from event labels.
    pub fn new(name: impl Into<String>, mut events: Vec<OdorEvent>) -> Result<Self, ScoreError> {
        for (index, e) in events.iter().enumerate() {
            e.check()
                .map_err(|reason| ScoreError::InvalidEvent { index, reason })?;
        }
        events.sort_by(|a, b| a.onset.total_cmp(&b.onset));
        let mut cues: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, e) in events.iter().enumerate() {
            if let Some(label) = &e.label {
                cues.entry(label.clone()).or_default().push(i);
            }
        }
        Ok(OdorComposition {
            name: name.into(),
            events,
            cues,
        })
    }

    pub fn empty(name: impl Into<String>) -> Self {
        OdorComposition {
            name: name.into(),
            events: Vec::new(),
            cues: BTreeMap::new(),
        }
    }

    /// Re-checks every invariant; used after deserializing.
    pub fn check(&self) -> Result<(), ScoreError> {
        for (index, e) in self.events.iter().enumerate() {
            e.check()
                .map_err(|reason| ScoreError::InvalidEvent { index, reason })?;
            if index > 0 && self.events[index - 1].onset > e.onset {
                return Err(ScoreError::Unsorted(index));
            }
        }
        for (label, idx) in &self.cues {
            if let Some(&index) = idx.iter().find(|&&i| i >= self.events.len()) {
                return Err(ScoreError::BadCueIndex {
                    label: label.clone(),
                    index,
                    len: self.events.len(),
                });
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ScoreError> {
        let comp: OdorComposition =
            serde_json::from_str(text).map_err(|e| ScoreError::Json(e.to_string()))?;
        comp.check()?;
        Ok(comp)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("composition serializes")
    }

    /// Time at which the last event ends.
    pub fn end(&self) -> f64 {
        self.events.iter().map(OdorEvent::end).fold(0.0, f64::max)
    }

    /// Extracts a cue with onsets shifted so its earliest event starts at 0.
    pub fn cue(&self, label: &str) -> Result<OdorComposition, ScoreError> {
        let Some(indices) = self.cues.get(label) else {
            return Err(ScoreError::UnknownCue {
                label: label.to_string(),
                available: self.cues.keys().cloned().collect(),
            });
        };
        let events: Vec<OdorEvent> = indices.iter().map(|&i| self.events[i].clone()).collect();
        let start = events.iter().map(|e| e.onset).fold(f64::INFINITY, f64::min);
        let rebased = events
            .into_iter()
            .map(|mut e| {
                e.onset -= start;
                e
            })
            .collect();
        OdorComposition::new(label, rebased)
    }

    /// Copy of this composition with every onset shifted by `offset`.
    pub fn shifted(&self, offset: f64) -> OdorComposition {
        let mut out = self.clone();
        for e in &mut out.events {
            e.onset += offset;
        }
        out
    }
}

/// Mapping from note velocity to concentration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "curve")]
#[derive(Default)]
pub enum VelocityCurve {
    #[default]
    Linear,
    Logarithmic {
        span_decades: f64,
    },
}

impl VelocityCurve {
    pub fn logarithmic() -> Self {
        VelocityCurve::Logarithmic {
            span_decades: DEFAULT_LOG_SPAN,
        }
    }

    /// Concentration for a velocity in 1..=127. Velocity 0 maps to 0.
    pub fn concentration(self, velocity: u8) -> f64 {
        if velocity == 0 {
            return 0.0;
        }
        let v = f64::from(velocity.min(127));
        match self {
            VelocityCurve::Linear => v / 127.0,
            VelocityCurve::Logarithmic { span_decades } => 10f64
                .powf((v - 127.0) / 127.0 * span_decades)
                .clamp(0.0, 1.0),
        }
    }

    /// Nearest velocity in 1..=127 for a concentration.
    pub fn velocity(self, concentration: f64) -> u8 {
        let c = concentration.clamp(0.0, 1.0);
        let v = match self {
            VelocityCurve::Linear => c * 127.0,
            VelocityCurve::Logarithmic { span_decades } => {
                if c <= 0.0 {
                    1.0
                } else {
                    127.0 + 127.0 * c.log10() / span_decades
                }
            }
        };
        v.round().clamp(1.0, 127.0) as u8
    }
}

/// Something from_midi noticed but did not treat as fatal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MidiWarning {
    pub tick: u64,
    pub channel: u8,
    pub note: u8,
    pub message: String,
}

impl fmt::Display for MidiWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "tick {}, channel {}, note {}: {}",
            self.tick, self.channel, self.note, self.message
        )
    }
}

/// Pairs note-ons with note-offs into odor events.
///
/// A note-on with velocity 0 closes like a note-off. CC 120/123 close every
/// open note on their channel. Notes still open at the end of the score
/// close at the last event tick; orphan note-offs are ignored. Both cases
/// produce warnings.
pub fn from_midi(score: &SmfScore, curve: VelocityCurve) -> (OdorComposition, Vec<MidiWarning>) {
    let mut open: HashMap<(u8, u8), (u64, u8)> = HashMap::new();
    let mut events = Vec::new();
    let mut warnings = Vec::new();

    let mut close =
        |key: (u8, u8), start: (u64, u8), end_tick: u64, warnings: &mut Vec<MidiWarning>| {
            if end_tick == start.0 {
                warnings.push(MidiWarning {
                    tick: end_tick,
                    channel: key.0,
                    note: key.1,
                    message: "zero-length note dropped".into(),
                });
                return;
            }
            let onset = score.ticks_to_seconds(start.0);
            events.push(OdorEvent::new(
                key.0,
                key.1,
                curve.concentration(start.1),
                onset,
                score.ticks_to_seconds(end_tick) - onset,
            ));
        };

    for &(tick, msg) in &score.events {
        let key = (msg.channel, msg.data1);
        match msg.kind {
            MessageKind::NoteOn if msg.data2 > 0 => {
                if let Some(prev) = open.insert(key, (tick, msg.data2)) {
                    warnings.push(MidiWarning {
                        tick,
                        channel: key.0,
                        note: key.1,
                        message: "retriggered note closes the open one".into(),
                    });
                    close(key, prev, tick, &mut warnings);
                }
            }
            MessageKind::NoteOn | MessageKind::NoteOff => match open.remove(&key) {
                Some(start) => close(key, start, tick, &mut warnings),
                None => warnings.push(MidiWarning {
                    tick,
                    channel: key.0,
                    note: key.1,
                    message: "note-off without matching note-on ignored".into(),
                }),
            },
            MessageKind::ControlChange if msg.is_all_off() => {
                let mut keys: Vec<_> = open
                    .keys()
                    .copied()
                    .filter(|k| k.0 == msg.channel)
                    .collect();
                keys.sort_unstable();
                for k in keys {
                    let start = open.remove(&k).expect("key present");
                    close(k, start, tick, &mut warnings);
                }
            }
            _ => {}
        }
    }

    let end = score.end_tick();
    let mut leftover: Vec<_> = open.into_iter().collect();
    leftover.sort_unstable_by_key(|(k, s)| (s.0, *k));
    for (key, start) in leftover {
        warnings.push(MidiWarning {
            tick: end,
            channel: key.0,
            note: key.1,
            message: "unpaired note-on closed at end of score".into(),
        });
        close(key, start, end, &mut warnings);
    }

    let comp = OdorComposition::new("midi", events).expect("events built from valid MIDI");
    (comp, warnings)
}

/// Renders a composition as a single-tempo score.
///
/// Onsets and durations are each rounded to the nearest tick, so both
/// survive a round trip through [`from_midi`] within half a tick. Note-offs
/// sort ahead of note-ons on the same tick.
pub fn to_midi(
    comp: &OdorComposition,
    ticks_per_quarter: u16,
    tempo: u32,
    curve: VelocityCurve,
) -> SmfScore {
    let ticks_per_second = f64::from(ticks_per_quarter) * 1e6 / f64::from(tempo);
    let mut items: Vec<(u64, u8, MidiMessage)> = Vec::with_capacity(comp.events.len() * 2);
    for e in &comp.events {
        let start = (e.onset * ticks_per_second).round() as u64;
        let length = ((e.duration * ticks_per_second).round() as u64).max(1);
        let velocity = curve.velocity(e.concentration);
        items.push((
            start,
            1,
            MidiMessage::note_on(e.device_address, e.odor_channel, velocity),
        ));
        items.push((
            start + length,
            0,
            MidiMessage::note_off(e.device_address, e.odor_channel, 0),
        ));
    }
    items.sort_by_key(|(t, rank, _)| (*t, *rank));
    let mut score = SmfScore::new(ticks_per_quarter, tempo);
    score.events = items.into_iter().map(|(t, _, m)| (t, m)).collect();
    score
}
