//! Latency compensation: the same cue played on every position of a
//! 16-device chain, with and without issuing commands early.

use std::error::Error;

use scent::chain::ChainTopology;
use scent::device::DeviceConfig;
use scent::odor::{approve, OdorComposition, OdorEvent, SafetyPolicy};
use scent::sequencer::{compile, run, CompileOptions, LogEntry, RunOptions, SimChain, SimClock};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let topo = ChainTopology::uniform(16, DeviceConfig::default(), 0.001)?;
    let policy = SafetyPolicy::default();
    println!(
        "{:>8} {:>14} {:>14}",
        "position", "compensated", "uncompensated"
    );
    for address in [0u8, 5, 10, 15] {
        let comp = OdorComposition::new("cue", vec![OdorEvent::new(address, 0, 1.0, 10.0, 15.0)])?;
        let validated = approve(comp, &policy, &topo.odorants()).map_err(|v| format!("{v:?}"))?;
        let mut errors = Vec::new();
        for compensation in [true, false] {
            let timeline = compile(&validated, &topo, &CompileOptions { compensation })?;
            let mut chain = SimChain::new(topo.clone());
            let log = run(
                &timeline,
                &mut SimClock::new(),
                &mut chain,
                &RunOptions::default(),
            )?;
            let error = log
                .onsets()
                .find_map(|e| match e {
                    LogEntry::Onset { error, .. } => Some(*error),
                    _ => None,
                })
                .ok_or("no perceived onset")?;
            errors.push(error);
        }
        println!("{:>8} {:>12.4} s {:>12.4} s", address, errors[0], errors[1]);
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
