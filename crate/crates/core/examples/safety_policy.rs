//! Checking compositions before anything is sent: the 15 s smoke cue
//! passes, a ten-minute stimulus and crowded cues do not.

use std::error::Error;

use scent::chain::ChainTopology;
use scent::odor::{approve, validate, violation_table, OdorComposition, OdorEvent, SafetyPolicy};

const CUE: &str = include_str!("../data/cade_cue.json");

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let topo = ChainTopology::from_toml(include_str!("../data/topology.toml"))?;
    let odorants = topo.odorants();
    let policy = SafetyPolicy::default();

    let cue = OdorComposition::from_json(CUE)?;
    let validated = approve(cue, &policy, &odorants).map_err(|v| violation_table(&v))?;
    println!(
        "'{}' passes: {} event(s)",
        validated.composition().name,
        validated.composition().events.len()
    );

    let long = OdorComposition::new("long", vec![OdorEvent::new(0, 0, 1.0, 0.0, 600.0)])?;
    println!(
        "600 s stimulus:\n{}",
        violation_table(&validate(&long, &policy, &odorants))
    );

    let crowded = OdorComposition::new(
        "crowded",
        vec![
            OdorEvent::new(0, 0, 1.0, 0.0, 15.0),
            OdorEvent::new(0, 0, 1.0, 20.0, 15.0),
            OdorEvent::new(0, 1, 0.8, 40.0, 5.0),
        ],
    )?;
    println!(
        "crowded cues:\n{}",
        violation_table(&validate(&crowded, &policy, &odorants))
    );
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
