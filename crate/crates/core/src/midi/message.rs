//! MIDI 1.0 channel-voice messages and a running-status stream decoder.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NOTE_OFF: u8 = 0x80;
pub const NOTE_ON: u8 = 0x90;
pub const POLY_PRESSURE: u8 = 0xA0;
pub const CONTROL_CHANGE: u8 = 0xB0;
pub const PROGRAM_CHANGE: u8 = 0xC0;
pub const CHANNEL_PRESSURE: u8 = 0xD0;
pub const PITCH_BEND: u8 = 0xE0;

/// Controller 120, "All Sound Off".
pub const CC_ALL_SOUND_OFF: u8 = 120;
/// Controller 123, "All Notes Off".
pub const CC_ALL_NOTES_OFF: u8 = 123;

/// What a channel-voice message does.
///
/// `Passthrough` carries the status nibble (`0xA0`, `0xC0`, `0xD0` or
/// `0xE0`) of a channel-voice message that the odor layer does not
/// interpret. It is kept so streams can be forwarded untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    NoteOff,
    NoteOn,
    ControlChange,
    Passthrough(u8),
}

impl MessageKind {
    fn status_nibble(self) -> u8 {
        match self {
            MessageKind::NoteOff => NOTE_OFF,
            MessageKind::NoteOn => NOTE_ON,
            MessageKind::ControlChange => CONTROL_CHANGE,
            MessageKind::Passthrough(s) => s & 0xF0,
        }
    }

    fn from_status(status: u8) -> Option<Self> {
        match status & 0xF0 {
            NOTE_OFF => Some(MessageKind::NoteOff),
            NOTE_ON => Some(MessageKind::NoteOn),
            CONTROL_CHANGE => Some(MessageKind::ControlChange),
            s @ (POLY_PRESSURE | PROGRAM_CHANGE | CHANNEL_PRESSURE | PITCH_BEND) => {
                Some(MessageKind::Passthrough(s))
            }
            _ => None,
        }
    }
}

/// Number of data bytes following a channel-voice status byte.
pub(crate) fn data_len(status: u8) -> usize {
    match status & 0xF0 {
        PROGRAM_CHANGE | CHANNEL_PRESSURE => 1,
        _ => 2,
    }
}

/// A channel-voice message as it appears on the wire.
///
/// A `NoteOn` with velocity 0 stays a `NoteOn` here; folding it into a
/// note-off is the odor layer's job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MidiMessage {
    pub kind: MessageKind,
    pub channel: u8,
    pub data1: u8,
    pub data2: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("field `{field}` out of range: {value} (max {max})")]
    Range {
        field: &'static str,
        value: u8,
        max: u8,
    },
    #[error("unsupported passthrough status 0x{0:02X}")]
    PassthroughStatus(u8),
    #[error("data byte 0x{byte:02X} at offset {offset} with no preceding status byte")]
    MissingStatus { offset: usize, byte: u8 },
}

impl MidiMessage {
    pub fn note_on(channel: u8, note: u8, velocity: u8) -> Self {
        MidiMessage {
            kind: MessageKind::NoteOn,
            channel,
            data1: note,
            data2: velocity,
        }
    }

    pub fn note_off(channel: u8, note: u8, velocity: u8) -> Self {
        MidiMessage {
            kind: MessageKind::NoteOff,
            channel,
            data1: note,
            data2: velocity,
        }
    }

    pub fn control_change(channel: u8, controller: u8, value: u8) -> Self {
        MidiMessage {
            kind: MessageKind::ControlChange,
            channel,
            data1: controller,
            data2: value,
        }
    }

    pub fn status(&self) -> u8 {
        self.kind.status_nibble() | (self.channel & 0x0F)
    }

    /// Checks every field against its wire width.
    pub fn check(&self) -> Result<(), CodecError> {
        if self.channel > 0x0F {
            return Err(CodecError::Range {
                field: "channel",
                value: self.channel,
                max: 0x0F,
            });
        }
        if self.data1 > 0x7F {
            return Err(CodecError::Range {
                field: "data1",
                value: self.data1,
                max: 0x7F,
            });
        }
        if self.data2 > 0x7F {
            return Err(CodecError::Range {
                field: "data2",
                value: self.data2,
                max: 0x7F,
            });
        }
        if let MessageKind::Passthrough(s) = self.kind {
            if !matches!(
                s,
                POLY_PRESSURE | PROGRAM_CHANGE | CHANNEL_PRESSURE | PITCH_BEND
            ) {
                return Err(CodecError::PassthroughStatus(s));
            }
            // two-byte messages have no second data byte to carry
            if data_len(s) == 1 && self.data2 != 0 {
                return Err(CodecError::Range {
                    field: "data2",
                    value: self.data2,
                    max: 0,
                });
            }
        }
        Ok(())
    }

    /// True for CC 120 / CC 123, which the chain treats as emergency stop.
    pub fn is_all_off(&self) -> bool {
        self.kind == MessageKind::ControlChange
            && matches!(self.data1, CC_ALL_SOUND_OFF | CC_ALL_NOTES_OFF)
    }
}

/// Encodes one message without running status.
pub fn encode_message(msg: &MidiMessage) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(3);
    encode_into(msg, &mut out)?;
    Ok(out)
}

/// Encodes a message sequence, omitting repeated status bytes.
pub fn encode_stream(msgs: &[MidiMessage]) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(msgs.len() * 3);
    let mut running = None;
    for msg in msgs {
        msg.check()?;
        let status = msg.status();
        if running != Some(status) {
            out.push(status);
            running = Some(status);
        }
        out.push(msg.data1);
        if data_len(status) == 2 {
            out.push(msg.data2);
        }
    }
    Ok(out)
}

pub(crate) fn encode_into(msg: &MidiMessage, out: &mut Vec<u8>) -> Result<(), CodecError> {
    msg.check()?;
    let status = msg.status();
    out.push(status);
    out.push(msg.data1);
    if data_len(status) == 2 {
        out.push(msg.data2);
    }
    Ok(())
}

/// Result of decoding a byte stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Decoded {
    pub messages: Vec<MidiMessage>,
    /// Bytes of a trailing message that has not been completed yet.
    pub rest: Vec<u8>,
    pub skipped_realtime: usize,
    pub skipped_sysex: usize,
    pub skipped_system_common: usize,
}

/// Greedy decode of a complete buffer, honoring running status.
pub fn decode_stream(bytes: &[u8]) -> Result<Decoded, CodecError> {
    let mut decoder = StreamDecoder::default();
    let messages = decoder.push(bytes)?;
    Ok(Decoded {
        messages,
        rest: decoder.pending().to_vec(),
        skipped_realtime: decoder.skipped_realtime,
        skipped_sysex: decoder.skipped_sysex,
        skipped_system_common: decoder.skipped_system_common,
    })
}

/// Incremental decoder that keeps running status between pushes.
///
/// System real-time bytes may appear anywhere, even inside a message, and
/// are skipped. SysEx payloads are skipped as a whole. System common
/// messages are skipped and cancel running status.
#[derive(Debug, Clone, Default)]
pub struct StreamDecoder {
    running_status: Option<u8>,
    partial: Vec<u8>,
    in_sysex: bool,
    common_remaining: usize,
    offset: usize,
    pub skipped_realtime: usize,
    pub skipped_sysex: usize,
    pub skipped_system_common: usize,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bytes belonging to a message that has not completed yet.
    pub fn pending(&self) -> &[u8] {
        &self.partial
    }

    pub fn push(&mut self, bytes: &[u8]) -> Result<Vec<MidiMessage>, CodecError> {
        let mut out = Vec::new();
        for &byte in bytes {
            let offset = self.offset;
            self.offset += 1;
            if byte >= 0xF8 {
                self.skipped_realtime += 1;
                continue;
            }
            if self.in_sysex {
                if byte == 0xF7 {
                    self.in_sysex = false;
                    self.partial.clear();
                    self.skipped_sysex += 1;
                } else if byte & 0x80 == 0 {
                    self.partial.push(byte);
                    continue;
                } else {
                    // unterminated sysex cut short by a new status
                    self.in_sysex = false;
                    self.partial.clear();
                    self.skipped_sysex += 1;
                    self.status_byte(byte);
                }
                continue;
            }
            if byte & 0x80 != 0 {
                self.status_byte(byte);
                continue;
            }
            if self.common_remaining > 0 {
                self.common_remaining -= 1;
                if self.common_remaining == 0 {
                    self.partial.clear();
                    self.skipped_system_common += 1;
                } else {
                    self.partial.push(byte);
                }
                continue;
            }
            let Some(status) = self.running_status else {
                return Err(CodecError::MissingStatus { offset, byte });
            };
            self.partial.push(byte);
            if self.partial.len() == data_len(status) {
                let kind = MessageKind::from_status(status).expect("channel-voice status");
                out.push(MidiMessage {
                    kind,
                    channel: status & 0x0F,
                    data1: self.partial[0],
                    data2: self.partial.get(1).copied().unwrap_or(0),
                });
                self.partial.clear();
            }
        }
        Ok(out)
    }

    fn status_byte(&mut self, byte: u8) {
        self.partial.clear();
        match byte {
            0x80..=0xEF => {
                self.running_status = Some(byte);
            }
            0xF0 => {
                self.running_status = None;
                self.in_sysex = true;
                self.partial.push(byte);
            }
            0xF7 => {
                // stray end-of-exclusive
                self.running_status = None;
            }
            _ => {
                self.running_status = None;
                let len = match byte {
                    0xF1 | 0xF3 => 1,
                    0xF2 => 2,
                    _ => 0,
                };
                if len == 0 {
                    self.skipped_system_common += 1;
                } else {
                    self.common_remaining = len;
                    self.partial.push(byte);
                }
            }
        }
    }
}
