//! Exhibition mode: the VR scene fires the chandelier cue from its own
//! thread; the session picks it up on its next step. A second trigger
//! too soon after the first is refused by the safety policy.

use std::error::Error;

use scent::chain::ChainTopology;
use scent::odor::{OdorComposition, SafetyPolicy};
use scent::sequencer::{CueTable, LiveSession, LogEntry, RunOptions, SimChain, SimClock};

const CUE: &str = include_str!("../data/cade_cue.json");

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let topo = ChainTopology::from_toml(include_str!("../data/topology.toml"))?;
    let table = CueTable::from_composition(&OdorComposition::from_json(CUE)?)?;
    let mut chain = SimChain::new(topo);
    let mut clock = SimClock::new();
    let mut live = LiveSession::new(
        &mut chain,
        table,
        SafetyPolicy::default(),
        &RunOptions::default(),
    )?;

    live.advance_to(210.0, &mut clock);
    let vr = live.sender();
    std::thread::spawn(move || vr.trigger("chandelier"))
        .join()
        .map_err(|_| "VR thread panicked")?;
    live.advance_to(220.0, &mut clock);
    if let Err(e) = live.trigger_cue("chandelier") {
        println!("second trigger at 220 s: {e}");
    }
    let log = live.finish(&mut clock);

    for e in &log.entries {
        match e {
            LogEntry::Cue {
                t,
                label,
                expected_onsets,
            } => {
                println!("{t:>8.3} cue {label}, expected perceived onset {expected_onsets:.4?}")
            }
            LogEntry::Onset { t, expected_t, .. } => {
                println!("{t:>8.3} perceived onset (model said {expected_t:.4})")
            }
            LogEntry::Rejected { t, violations, .. } => {
                println!(
                    "{t:>8.3} rejected: {:?}",
                    violations.iter().map(|v| &v.rule).collect::<Vec<_>>()
                )
            }
            _ => {}
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
