//! The musical transport: channel-voice messages on the wire and Standard
//! MIDI Files on disk.

mod message;
mod smf;

pub use message::{
    decode_stream, encode_message, encode_stream, CodecError, Decoded, MessageKind, MidiMessage,
    StreamDecoder, CC_ALL_NOTES_OFF, CC_ALL_SOUND_OFF,
};
pub use smf::{
    parse_smf, read_vlq, ticks_to_seconds, write_smf, write_vlq, ParseReport, SmfError, SmfScore,
    DEFAULT_TEMPO,
};
