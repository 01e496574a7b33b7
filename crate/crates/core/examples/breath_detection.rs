//! A minute of synthetic nasal pressure with two sniffs and a pause, the
//! events found in it, and how many delivery windows saw a sniff or gulp.

use std::error::Error;

use scent::respiro::{
    delivery_alignment_stats, detect_breath_events, match_events, synthesize_breathing, BreathKind,
    DetectParams, SynthParams,
};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let params = SynthParams {
        noise_sd: 0.1,
        sniff_times: vec![14.0, 41.0],
        pause_times: vec![26.0],
        seed: 7,
        ..SynthParams::default()
    };
    let (trace, truth) = synthesize_breathing(&params)?;
    let found = detect_breath_events(&trace, &DetectParams::default())?;
    for kind in BreathKind::ALL {
        let m = match_events(&truth, &found, kind, 0.2);
        println!(
            "{kind:?}: {} true, {} found, {} matched",
            truth.iter().filter(|e| e.kind == kind).count(),
            found.iter().filter(|e| e.kind == kind).count(),
            m.true_positive
        );
    }
    let windows = [(14.5, 16.0), (26.0, 28.0), (50.0, 52.0)];
    let stats = delivery_alignment_stats(&found, &windows);
    println!(
        "{} windows: sniff in {:.0}%, gulp candidate in {:.0}%",
        stats.windows,
        100.0 * stats.sniff_fraction.unwrap_or(0.0),
        100.0 * stats.gulp_fraction.unwrap_or(0.0)
    );
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
