//! Wire bytes and file bytes: channel-voice messages with running status,
//! an incremental decoder fed in fragments, and variable-length quantities.

use std::error::Error;

use scent::midi::{decode_stream, encode_stream, read_vlq, write_vlq, MidiMessage, StreamDecoder};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let msgs = vec![
        MidiMessage::note_on(3, 0, 127),
        MidiMessage::note_on(3, 1, 64),
        MidiMessage::note_off(3, 0, 0),
        MidiMessage::control_change(3, 123, 0),
    ];
    let bytes = encode_stream(&msgs)?;
    println!(
        "encoded {} messages in {} bytes: {:02X?}",
        msgs.len(),
        bytes.len(),
        bytes
    );

    // a clock tick (0xF8) in the middle of a message is skipped
    let mut noisy = bytes.clone();
    noisy.insert(2, 0xF8);
    let decoded = decode_stream(&noisy)?;
    assert_eq!(decoded.messages, msgs);
    println!(
        "decoded back, skipped {} real-time byte(s)",
        decoded.skipped_realtime
    );

    let mut dec = StreamDecoder::new();
    let mut got = Vec::new();
    for piece in bytes.chunks(2) {
        got.extend(dec.push(piece)?);
    }
    assert_eq!(got, msgs);
    println!("fed in 2-byte fragments: {} messages", got.len());

    for value in [0u32, 200, 16_383, 0x0FFF_FFFF] {
        let mut buf = Vec::new();
        write_vlq(value, &mut buf)?;
        let (back, used) = read_vlq(&buf, 0)?;
        println!("vlq {value:>9} -> {buf:02X?} ({used} bytes) -> {back}");
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
