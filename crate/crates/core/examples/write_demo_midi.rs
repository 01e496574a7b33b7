//! Regenerates the bundled `data/demo.mid`: the chandelier smoke cue as a
//! one-note Standard MIDI File.
//!
//! ```text
//! cargo run --example write_demo_midi -- [output.mid]
//! ```

use std::error::Error;
use std::path::PathBuf;

use scent::midi::{write_smf, DEFAULT_TEMPO};
use scent::odor::{to_midi, OdorComposition, VelocityCurve};

const CUE: &str = include_str!("../data/cade_cue.json");

/// Bytes of the demo file.
pub fn demo_midi() -> Result<Vec<u8>, Box<dyn Error>> {
    let comp = OdorComposition::from_json(CUE)?;
    let score = to_midi(&comp, 480, DEFAULT_TEMPO, VelocityCurve::Linear);
    Ok(write_smf(&score)?)
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let bytes = demo_midi()?;
    match std::env::args_os().nth(1).map(PathBuf::from) {
        Some(path) if path.extension().is_some_and(|e| e == "mid") => {
            std::fs::write(&path, &bytes)?;
            println!("wrote {} bytes to {}", bytes.len(), path.display());
        }
        _ => println!(
            "demo.mid is {} bytes; pass an output .mid path to write it",
            bytes.len()
        ),
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
