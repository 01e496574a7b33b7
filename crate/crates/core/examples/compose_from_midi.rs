//! Reads the bundled demo MIDI file into an odor composition under both
//! velocity curves, then writes it back out as MIDI.

use std::error::Error;

use scent::midi::{parse_smf, write_smf, DEFAULT_TEMPO};
use scent::odor::{from_midi, to_midi, VelocityCurve};

const DEMO: &[u8] = include_bytes!("../data/demo.mid");

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let (score, report) = parse_smf(DEMO)?;
    println!("{report}");

    for curve in [VelocityCurve::Linear, VelocityCurve::logarithmic()] {
        let (comp, warnings) = from_midi(&score, curve);
        for e in &comp.events {
            println!(
                "{curve:?}: device {} channel {} c={:.4} at {:.3} s for {:.3} s",
                e.device_address, e.odor_channel, e.concentration, e.onset, e.duration
            );
        }
        assert!(warnings.is_empty());
    }

    let (comp, _) = from_midi(&score, VelocityCurve::Linear);
    let again = write_smf(&to_midi(
        &comp,
        score.ticks_per_quarter,
        DEFAULT_TEMPO,
        VelocityCurve::Linear,
    ))?;
    println!("re-encoded file identical: {}", again == DEMO);
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
