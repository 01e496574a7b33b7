//! One olfactory display: concentration at the nose during a 15 s
//! delivery, the modeled onset latency, pump noise and battery endurance.

use std::error::Error;

use scent::device::{endurance, exhibition_day, Command, Device, DeviceConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let config = DeviceConfig::default();
    println!(
        "dead time {:.3} s, perceived onset after {:.4} s, pump noise {:.1} dB SPL",
        config.dead_time(1.0),
        config.onset_latency(1.0),
        config.noise_spl(1.0)
    );

    let mut dev = Device::new(config.clone());
    dev.actuate(Command::Deliver(1.0))?;
    println!("{:>6} {:>8} {:>8}", "t", "target", "nose");
    for k in 1..=25 {
        dev.step_to(k as f64);
        if k == 15 {
            dev.actuate(Command::Stop)?;
        }
        let s = dev.state();
        if k % 2 == 1 || k == 15 {
            println!(
                "{:>6.1} {:>8.3} {:>8.4}",
                s.t, s.target_concentration, s.nose_concentration
            );
        }
    }
    println!(
        "time above the exposure threshold: {:.2} s",
        dev.state().cumulative_exposure
    );

    let day = endurance(&config, &exhibition_day());
    println!(
        "exhibition day: survives={} with {:.0} of {:.0} mAh left",
        day.survives, day.charge_remaining, config.battery_capacity
    );
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
