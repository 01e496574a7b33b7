//! Scores the bundled presence questionnaire responses: factor means with
//! reverse-coded items, alpha per scale and the configured correlations.

use std::error::Error;

use scent::survey::{analyze, ResponseMatrix, ScaleSet};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let set = ScaleSet::from_toml(include_str!("../data/presence_scales.toml"))?;
    let csv = include_str!("../data/presence_responses.csv");
    let m = ResponseMatrix::from_csv(csv.as_bytes(), set.scale_min, set.scale_max)?;
    let (table, summary) = analyze(&m, &set)?;

    let mut out = Vec::new();
    table.write_csv(&mut out)?;
    print!("{}", String::from_utf8(out)?);
    for a in &summary.alpha {
        match (&a.result, &a.error) {
            (Some(r), _) => println!(
                "alpha {}: {:.3} over {} items ({} respondents, {} dropped)",
                a.scale, r.alpha, r.items, r.respondents, r.dropped
            ),
            (None, Some(e)) => println!("alpha {}: {e}", a.scale),
            _ => {}
        }
    }
    for c in &summary.correlations {
        println!(
            "r({}, {}) = {:?} over {}",
            c.x,
            c.y,
            c.r.map(|r| (r * 1000.0).round() / 1000.0),
            c.n
        );
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
