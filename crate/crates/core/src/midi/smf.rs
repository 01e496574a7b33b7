//! Standard MIDI File reading and writing, formats 0 and 1.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::message::{data_len, encode_into, MessageKind, MidiMessage};

pub const DEFAULT_TEMPO: u32 = 500_000;
const MAX_VLQ: u32 = 0x0FFF_FFFF;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmfError {
    #[error("bad chunk magic at offset {offset}: expected {expected}")]
    BadMagic {
        offset: usize,
        expected: &'static str,
    },
    #[error("truncated data at offset {offset}")]
    Truncated { offset: usize },
    #[error("variable-length quantity longer than 4 bytes at offset {offset}")]
    VlqTooLong { offset: usize },
    #[error("unsupported SMF format {format}")]
    UnsupportedFormat { format: u16 },
    #[error("unsupported time division 0x{division:04X} (only ticks per quarter note)")]
    UnsupportedDivision { division: u16 },
    #[error("running status with no prior status byte at offset {offset}")]
    MissingStatus { offset: usize },
    #[error("malformed event at offset {offset}: {reason}")]
    Malformed { offset: usize, reason: &'static str },
    #[error("value {0} does not fit in a variable-length quantity")]
    VlqOverflow(u32),
}

/// A parsed file flattened to one tick-ordered event list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmfScore {
    pub ticks_per_quarter: u16,
    /// `(absolute_tick, microseconds_per_quarter)`, sorted, first entry at tick 0.
    pub tempo_map: Vec<(u64, u32)>,
    pub events: Vec<(u64, MidiMessage)>,
}

impl SmfScore {
    pub fn new(ticks_per_quarter: u16, tempo: u32) -> Self {
        SmfScore {
            ticks_per_quarter,
            tempo_map: vec![(0, tempo)],
            events: Vec::new(),
        }
    }

    /// Converts an absolute tick to seconds, integrating over tempo segments.
    pub fn ticks_to_seconds(&self, tick: u64) -> f64 {
        let tpq = f64::from(self.ticks_per_quarter);
        let mut seconds = 0.0;
        let mut seg_tick = 0u64;
        let mut seg_tempo = DEFAULT_TEMPO;
        for &(at, tempo) in &self.tempo_map {
            if at >= tick {
                break;
            }
            seconds += (at - seg_tick) as f64 * f64::from(seg_tempo) / (tpq * 1e6);
            seg_tick = at;
            seg_tempo = tempo;
        }
        seconds + (tick - seg_tick) as f64 * f64::from(seg_tempo) / (tpq * 1e6)
    }

    /// Tick of the last event, or 0 for an empty score.
    pub fn end_tick(&self) -> u64 {
        self.events.last().map(|e| e.0).unwrap_or(0)
    }
}

/// Convenience wrapper over [`SmfScore::ticks_to_seconds`].
pub fn ticks_to_seconds(tick: u64, score: &SmfScore) -> f64 {
    score.ticks_to_seconds(tick)
}

/// What the parser saw but did not keep.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParseReport {
    pub format: u16,
    pub tracks: u16,
    pub channel_events: usize,
    pub tempo_events: usize,
    pub dropped_meta: usize,
    pub dropped_sysex: usize,
}

impl fmt::Display for ParseReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "format:          {}", self.format)?;
        writeln!(f, "tracks:          {}", self.tracks)?;
        writeln!(f, "channel events:  {}", self.channel_events)?;
        writeln!(f, "tempo events:    {}", self.tempo_events)?;
        writeln!(f, "dropped meta:    {}", self.dropped_meta)?;
        write!(f, "dropped sysex:   {}", self.dropped_sysex)
    }
}

/// Decodes a variable-length quantity, returning the value and bytes read.
pub fn read_vlq(bytes: &[u8], offset: usize) -> Result<(u32, usize), SmfError> {
    let mut value = 0u32;
    for i in 0..4 {
        let Some(&b) = bytes.get(offset + i) else {
            return Err(SmfError::Truncated { offset: offset + i });
        };
        value = (value << 7) | u32::from(b & 0x7F);
        if b & 0x80 == 0 {
            return Ok((value, i + 1));
        }
    }
    Err(SmfError::VlqTooLong { offset })
}

pub fn write_vlq(value: u32, out: &mut Vec<u8>) -> Result<(), SmfError> {
    if value > MAX_VLQ {
        return Err(SmfError::VlqOverflow(value));
    }
    let mut groups = [0u8; 4];
    let mut n = 0;
    let mut v = value;
    loop {
        groups[n] = (v & 0x7F) as u8;
        n += 1;
        v >>= 7;
        if v == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        let cont = if i > 0 { 0x80 } else { 0 };
        out.push(groups[i] | cont);
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SmfError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(SmfError::Truncated { offset: self.pos });
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, SmfError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, SmfError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, SmfError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32, SmfError> {
        let (v, n) = read_vlq(self.bytes, self.pos)?;
        self.pos += n;
        Ok(v)
    }

    fn magic(&mut self, expected: &'static str) -> Result<(), SmfError> {
        let offset = self.pos;
        if self.take(4)? != expected.as_bytes() {
            return Err(SmfError::BadMagic { offset, expected });
        }
        Ok(())
    }
}

/// Parses a format 0 or 1 file. Format 1 tracks are merged by absolute
/// tick; events on the same tick keep file order (track order, then
/// position within the track).
pub fn parse_smf(bytes: &[u8]) -> Result<(SmfScore, ParseReport), SmfError> {
    let mut cur = Cursor { bytes, pos: 0 };
    cur.magic("MThd")?;
    let header_len = cur.u32()? as usize;
    let header_start = cur.pos;
    if header_len < 6 {
        return Err(SmfError::Malformed {
            offset: header_start,
            reason: "header chunk shorter than 6 bytes",
        });
    }
    let format = cur.u16()?;
    let ntracks = cur.u16()?;
    let division = cur.u16()?;
    cur.take(header_len - 6)?;
    if format > 1 {
        return Err(SmfError::UnsupportedFormat { format });
    }
    if division & 0x8000 != 0 || division == 0 {
        return Err(SmfError::UnsupportedDivision { division });
    }

    let mut report = ParseReport {
        format,
        tracks: ntracks,
        ..Default::default()
    };
    let mut events: Vec<(u64, MidiMessage)> = Vec::new();
    let mut tempos: Vec<(u64, u32)> = Vec::new();

    for _ in 0..ntracks {
        cur.magic("MTrk")?;
        let len = cur.u32()? as usize;
        let body_start = cur.pos;
        let body = cur.take(len)?;
        parse_track(body, body_start, &mut events, &mut tempos, &mut report)?;
    }

    // stable sorts keep file order for ties
    events.sort_by_key(|e| e.0);
    tempos.sort_by_key(|t| t.0);
    let mut tempo_map: Vec<(u64, u32)> = Vec::with_capacity(tempos.len() + 1);
    for (tick, tempo) in tempos {
        match tempo_map.last_mut() {
            Some(last) if last.0 == tick => last.1 = tempo,
            _ => tempo_map.push((tick, tempo)),
        }
    }
    if tempo_map.first().map(|t| t.0) != Some(0) {
        tempo_map.insert(0, (0, DEFAULT_TEMPO));
    }

    Ok((
        SmfScore {
            ticks_per_quarter: division,
            tempo_map,
            events,
        },
        report,
    ))
}

fn parse_track(
    body: &[u8],
    base: usize,
    events: &mut Vec<(u64, MidiMessage)>,
    tempos: &mut Vec<(u64, u32)>,
    report: &mut ParseReport,
) -> Result<(), SmfError> {
    let rebase = |e: SmfError| match e {
        SmfError::Truncated { offset } => SmfError::Truncated {
            offset: offset + base,
        },
        SmfError::VlqTooLong { offset } => SmfError::VlqTooLong {
            offset: offset + base,
        },
        other => other,
    };
    let mut cur = Cursor {
        bytes: body,
        pos: 0,
    };
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    while cur.pos < body.len() {
        tick += u64::from(cur.vlq().map_err(rebase)?);
        let at = cur.pos;
        let first = cur.u8().map_err(rebase)?;
        match first {
            0xFF => {
                let kind = cur.u8().map_err(rebase)?;
                let len = cur.vlq().map_err(rebase)? as usize;
                let data = cur.take(len).map_err(rebase)?;
                match kind {
                    0x51 => {
                        if len != 3 {
                            return Err(SmfError::Malformed {
                                offset: at + base,
                                reason: "tempo meta event must carry 3 bytes",
                            });
                        }
                        let tempo = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        tempos.push((tick, tempo));
                        report.tempo_events += 1;
                    }
                    0x2F => break,
                    _ => report.dropped_meta += 1,
                }
            }
            0xF0 | 0xF7 => {
                let len = cur.vlq().map_err(rebase)? as usize;
                cur.take(len).map_err(rebase)?;
                report.dropped_sysex += 1;
            }
            0xF1..=0xFE => {
                return Err(SmfError::Malformed {
                    offset: at + base,
                    reason: "system message in track data",
                });
            }
            _ => {
                let (status, first_data) = if first & 0x80 != 0 {
                    running = Some(first);
                    (first, cur.u8().map_err(rebase)?)
                } else {
                    let Some(status) = running else {
                        return Err(SmfError::MissingStatus { offset: at + base });
                    };
                    (status, first)
                };
                let second = if data_len(status) == 2 {
                    cur.u8().map_err(rebase)?
                } else {
                    0
                };
                if first_data & 0x80 != 0 || second & 0x80 != 0 {
                    return Err(SmfError::Malformed {
                        offset: at + base,
                        reason: "data byte with high bit set",
                    });
                }
                let kind = match status & 0xF0 {
                    0x80 => MessageKind::NoteOff,
                    0x90 => MessageKind::NoteOn,
                    0xB0 => MessageKind::ControlChange,
                    s => MessageKind::Passthrough(s),
                };
                events.push((
                    tick,
                    MidiMessage {
                        kind,
                        channel: status & 0x0F,
                        data1: first_data,
                        data2: second,
                    },
                ));
                report.channel_events += 1;
            }
        }
    }
    Ok(())
}

/// Writes a format 0 file. Tempo changes precede channel events that
/// share their tick.
pub fn write_smf(score: &SmfScore) -> Result<Vec<u8>, SmfError> {
    enum Item<'a> {
        Tempo(u32),
        Channel(&'a MidiMessage),
    }
    let mut items: Vec<(u64, u8, Item<'_>)> = score
        .tempo_map
        .iter()
        .map(|&(t, tempo)| (t, 0, Item::Tempo(tempo)))
        .chain(score.events.iter().map(|(t, m)| (*t, 1, Item::Channel(m))))
        .collect();
    items.sort_by_key(|(t, rank, _)| (*t, *rank));

    let mut track = Vec::new();
    let mut last = 0u64;
    for (tick, _, item) in &items {
        let delta = u32::try_from(tick - last).map_err(|_| SmfError::VlqOverflow(u32::MAX))?;
        write_vlq(delta, &mut track)?;
        last = *tick;
        match item {
            Item::Tempo(tempo) => {
                let b = tempo.to_be_bytes();
                track.extend_from_slice(&[0xFF, 0x51, 0x03, b[1], b[2], b[3]]);
            }
            Item::Channel(msg) => {
                encode_into(msg, &mut track).map_err(|_| SmfError::Malformed {
                    offset: track.len(),
                    reason: "message field out of range",
                })?;
            }
        }
    }
    track.extend_from_slice(&[0x00, 0xFF, 0x2F, 0x00]);

    let mut out = Vec::with_capacity(22 + track.len());
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&score.ticks_per_quarter.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vlq_vectors() {
        assert_eq!(read_vlq(&[0x00], 0).unwrap(), (0, 1));
        assert_eq!(read_vlq(&[0x81, 0x48], 0).unwrap(), (200, 2));
        assert_eq!(read_vlq(&[0xFF, 0x7F], 0).unwrap(), (16383, 2));
        assert_eq!(
            read_vlq(&[0xFF, 0xFF, 0xFF, 0xFF, 0x7F], 0),
            Err(SmfError::VlqTooLong { offset: 0 })
        );
        assert_eq!(read_vlq(&[0x81], 0), Err(SmfError::Truncated { offset: 1 }));
    }

    #[test]
    fn vlq_write_matches_read() {
        for v in [0, 1, 127, 128, 200, 16383, 16384, 2_097_151, MAX_VLQ] {
            let mut buf = Vec::new();
            write_vlq(v, &mut buf).unwrap();
            assert_eq!(read_vlq(&buf, 0).unwrap(), (v, buf.len()));
        }
        let mut buf = Vec::new();
        write_vlq(200, &mut buf).unwrap();
        assert_eq!(buf, vec![0x81, 0x48]);
        assert!(write_vlq(MAX_VLQ + 1, &mut buf).is_err());
    }

    fn one_note_file() -> Vec<u8> {
        // hand-assembled format 0 file: NoteOn ch0 n60 v100 at tick 480
        let track: Vec<u8> = vec![0x83, 0x60, 0x90, 60, 100, 0x00, 0xFF, 0x2F, 0x00];
        let mut f = b"MThd".to_vec();
        f.extend_from_slice(&[0, 0, 0, 6, 0, 0, 0, 1, 0x01, 0xE0]);
        f.extend_from_slice(b"MTrk");
        f.extend_from_slice(&(track.len() as u32).to_be_bytes());
        f.extend_from_slice(&track);
        f
    }

    #[test]
    fn parses_hand_built_file() {
        let (score, report) = parse_smf(&one_note_file()).unwrap();
        assert_eq!(score.ticks_per_quarter, 480);
        assert_eq!(score.tempo_map, vec![(0, DEFAULT_TEMPO)]);
        assert_eq!(score.events, vec![(480, MidiMessage::note_on(0, 60, 100))]);
        assert_eq!(report.channel_events, 1);
    }

    #[test]
    fn write_then_parse_matches_hand_built() {
        let mut score = SmfScore::new(480, DEFAULT_TEMPO);
        score.events.push((480, MidiMessage::note_on(0, 60, 100)));
        let written = write_smf(&score).unwrap();
        assert_eq!(parse_smf(&written).unwrap().0, score);
    }

    #[test]
    fn bad_magic_and_truncation() {
        assert!(matches!(
            parse_smf(b"RIFF\0\0\0\x06"),
            Err(SmfError::BadMagic { offset: 0, .. })
        ));
        assert!(matches!(
            parse_smf(&[]),
            Err(SmfError::Truncated { offset: 0 })
        ));
        let mut f = one_note_file();
        f.truncate(f.len() - 3);
        assert!(matches!(parse_smf(&f), Err(SmfError::Truncated { .. })));
    }

    #[test]
    fn format_two_rejected() {
        let mut f = one_note_file();
        f[9] = 2;
        assert_eq!(
            parse_smf(&f),
            Err(SmfError::UnsupportedFormat { format: 2 })
        );
    }

    #[test]
    fn format_one_merges_tracks_by_tick() {
        let t1: Vec<u8> = vec![
            0x00, 0xFF, 0x51, 0x03, 0x07, 0xA1, 0x20, 0x64, 0x90, 1, 1, 0, 0xFF, 0x2F, 0,
        ];
        let t2: Vec<u8> = vec![0x32, 0x91, 2, 2, 0x32, 0x81, 2, 0, 0, 0xFF, 0x2F, 0];
        let mut f = b"MThd".to_vec();
        f.extend_from_slice(&[0, 0, 0, 6, 0, 1, 0, 2, 0, 96]);
        for t in [&t1, &t2] {
            f.extend_from_slice(b"MTrk");
            f.extend_from_slice(&(t.len() as u32).to_be_bytes());
            f.extend_from_slice(t);
        }
        let (score, report) = parse_smf(&f).unwrap();
        assert_eq!(report.tracks, 2);
        assert_eq!(
            score.events,
            vec![
                (50, MidiMessage::note_on(1, 2, 2)),
                (100, MidiMessage::note_on(0, 1, 1)),
                (100, MidiMessage::note_off(1, 2, 0)),
            ]
        );
        assert_eq!(score.tempo_map, vec![(0, 500_000)]);
    }

    #[test]
    fn running_status_and_dropped_events() {
        // running status NoteOn pair, a text meta event and a sysex
        let track: Vec<u8> = vec![
            0x00, 0x90, 60, 100, 0x10, 62, 100, 0x00, 0xFF, 0x01, 0x02, b'h', b'i', 0x00, 0xF0,
            0x02, 0x7E, 0xF7, 0x00, 0xFF, 0x2F, 0x00,
        ];
        let mut f = b"MThd".to_vec();
        f.extend_from_slice(&[0, 0, 0, 6, 0, 0, 0, 1, 0, 96]);
        f.extend_from_slice(b"MTrk");
        f.extend_from_slice(&(track.len() as u32).to_be_bytes());
        f.extend_from_slice(&track);
        let (score, report) = parse_smf(&f).unwrap();
        assert_eq!(score.events.len(), 2);
        assert_eq!(score.events[1], (16, MidiMessage::note_on(0, 62, 100)));
        assert_eq!(report.dropped_meta, 1);
        assert_eq!(report.dropped_sysex, 1);
        assert!(report.to_string().contains("dropped meta:    1"));
    }

    #[test]
    fn seconds_conversion() {
        let mut score = SmfScore::new(480, 500_000);
        assert_eq!(score.ticks_to_seconds(0), 0.0);
        assert_eq!(score.ticks_to_seconds(480), 0.5);
        score.tempo_map.push((480, 250_000));
        // 0.5 s for the first beat, 0.25 s for the second
        assert!((score.ticks_to_seconds(960) - 0.75).abs() < 1e-12);
        assert!((ticks_to_seconds(240, &score) - 0.25).abs() < 1e-12);
    }
}
