//! Sixteen displays on one MIDI line: each message passes every device,
//! only the addressed one acts, and All Notes Off stops the whole chain.

use std::error::Error;

use scent::chain::{broadcast_all_off, interpret, route, ChainTopology, MAX_DEVICES};
use scent::device::DeviceConfig;
use scent::midi::MidiMessage;
use scent::odor::VelocityCurve;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let topo = ChainTopology::uniform(MAX_DEVICES, DeviceConfig::default(), 0.001)?;
    match ChainTopology::uniform(MAX_DEVICES + 1, DeviceConfig::default(), 0.001) {
        Err(e) => println!("17 devices: {e}"),
        Ok(_) => unreachable!(),
    }

    let msg = MidiMessage::note_on(9, 0, 100);
    let r = route(&msg, &topo);
    for hop in r.actuated() {
        println!(
            "note on for address 9 reaches position {} after {:.3} s -> {:?}",
            hop.position,
            hop.arrival,
            interpret(&msg, VelocityCurve::Linear)
        );
    }
    println!(
        "devices that forward it without acting: {}",
        r.hops.len() - r.actuated().count()
    );

    let stray = route(&MidiMessage::note_on(3, 0, 100), &topo.without(3));
    println!(
        "after removing device 3: {}",
        stray.warning.unwrap_or_default()
    );

    let (stops, record) = broadcast_all_off(&topo);
    println!(
        "panic: {} All Notes Off messages, last arrives {:.3} s after sending",
        stops.len(),
        record.last_arrival
    );
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
