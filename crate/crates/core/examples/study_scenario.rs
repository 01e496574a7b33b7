//! Replays the bundled 342 s study session on the simulated chain and
//! prints its summary. Pass `--no-compensation` to see late onsets.

use std::error::Error;

use scent::chain::ChainTopology;
use scent::sequencer::{
    scenario_run, study_scenario, CompileOptions, ScenarioOptions, SimChain, SimClock,
};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let compensation = !std::env::args().any(|a| a == "--no-compensation");
    let topo = ChainTopology::from_toml(include_str!("../data/topology.toml"))?;
    let mut chain = SimChain::new(topo);
    let opts = ScenarioOptions {
        compile: CompileOptions { compensation },
        ..ScenarioOptions::default()
    };
    let outcome = scenario_run(&study_scenario(), &mut SimClock::new(), &mut chain, &opts)?;
    let s = &outcome.summary;
    println!(
        "scenario '{}' scripted for {} s",
        s.scenario, s.scripted_duration_s
    );
    println!(
        "scored exposure {} s over {} cue(s)",
        s.exposure_s, s.cues_fired
    );
    for o in &s.onsets {
        println!(
            "onset intended {:.3} s, perceived {:.3} s ({:+.4} s)",
            o.intended_t, o.perceived_t, o.error_s
        );
    }
    for d in &s.devices {
        println!(
            "device {}: {:.1}% battery left, {:.2} s above threshold at the nose",
            d.address,
            100.0 * d.battery_fraction,
            d.nose_exposure_s
        );
    }
    println!("{} log lines", outcome.log.entries.len());
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
