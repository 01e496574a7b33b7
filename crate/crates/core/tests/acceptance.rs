//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scent::chain::{route, ChainTopology, MAX_DEVICES};
use scent::device::{endurance, exhibition_day, Command, Device, DeviceConfig};
use scent::midi::{
    decode_stream, encode_message, parse_smf, read_vlq, write_smf, MessageKind, MidiMessage,
    SmfScore,
};
use scent::odor::{approve, validate, OdorComposition, OdorEvent, Rule, SafetyPolicy};
use scent::respiro::{
    detect_breath_events, match_events, synthesize_breathing, BreathKind, DetectParams, SynthParams,
};
use scent::sequencer::{
    compile, run, scenario_run, study_scenario, CompileOptions, Engine, LogEntry, RunOptions,
    ScenarioOptions, SimChain, SimClock,
};
use scent::survey::{cronbach_alpha, pearson_r, reverse_code};

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

fn ensure(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn random_message(rng: &mut impl Rng) -> MidiMessage {
    let channel = rng.random_range(0..16);
    let data1 = rng.random_range(0..128);
    let data2 = rng.random_range(0..128);
    let kind = match rng.random_range(0..7) {
        0 => MessageKind::NoteOff,
        1 => MessageKind::NoteOn,
        2 => MessageKind::ControlChange,
        3 => MessageKind::Passthrough(0xA0),
        4 => MessageKind::Passthrough(0xC0),
        5 => MessageKind::Passthrough(0xD0),
        _ => MessageKind::Passthrough(0xE0),
    };
    let data2 = match kind {
        MessageKind::Passthrough(0xC0 | 0xD0) => 0,
        _ => data2,
    };
    MidiMessage {
        kind,
        channel,
        data1,
        data2,
    }
}

fn codec_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..10_000 {
        let m = random_message(&mut rng);
        let bytes = encode_message(&m).map_err(|e| e.to_string())?;
        let back = decode_stream(&bytes).map_err(|e| e.to_string())?;
        ensure(back.messages == [m] && back.rest.is_empty(), || {
            format!("message {i} {m:?} decoded as {:?}", back.messages)
        })?;
    }
    let vector = [0x90, 0x3C, 0x7F];
    let on = MidiMessage::note_on(0, 60, 127);
    ensure(
        encode_message(&on).map_err(|e| e.to_string())? == vector,
        || "note on encoding".into(),
    )?;
    ensure(
        decode_stream(&vector).map_err(|e| e.to_string())?.messages == [on],
        || "note on decoding".into(),
    )?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < 1.0, || format!("took {elapsed:.3} s"))?;
    Ok(format!("10000 round trips in {:.1} ms", elapsed * 1e3))
}

fn random_score(rng: &mut impl Rng) -> SmfScore {
    let mut score = SmfScore::new(
        rng.random_range(24..=960),
        rng.random_range(200_000..=1_500_000),
    );
    let mut tick = 0u64;
    for _ in 0..rng.random_range(0..4) {
        tick += rng.random_range(1..5000);
        score
            .tempo_map
            .push((tick, rng.random_range(200_000..=1_500_000)));
    }
    let mut tick = 0u64;
    for _ in 0..rng.random_range(0..60) {
        tick += rng.random_range(0..2000);
        score.events.push((tick, random_message(rng)));
    }
    score
}

fn smf_round_trip() -> Outcome {
    for (bytes, want) in [
        (&[0x00][..], 0u32),
        (&[0x81, 0x48], 200),
        (&[0xFF, 0x7F], 16383),
    ] {
        let (v, n) = read_vlq(bytes, 0).map_err(|e| e.to_string())?;
        ensure(v == want && n == bytes.len(), || {
            format!("{bytes:02X?} read as {v}")
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..100 {
        let score = random_score(&mut rng);
        let bytes = write_smf(&score).map_err(|e| e.to_string())?;
        let (back, _) = parse_smf(&bytes).map_err(|e| e.to_string())?;
        ensure(back == score, || {
            format!("score {i} changed in the round trip")
        })?;
    }
    Ok("VLQ vectors exact, 100 scores round trip".into())
}

// dead time, then a first-order rise; after the stop a first-order fall
fn closed_form(cfg: &DeviceConfig, t: f64, stop_at: f64) -> f64 {
    let dead = cfg.tube_volume / cfg.pump_max_flow;
    let rise = |t: f64| {
        if t < dead {
            0.0
        } else {
            1.0 - (-(t - dead) / cfg.tau_rise).exp()
        }
    };
    if t <= stop_at {
        rise(t)
    } else {
        rise(stop_at) * (-(t - stop_at) / cfg.tau_fall).exp()
    }
}

fn concentration_dynamics() -> Outcome {
    let dt = 0.001;
    let stop_at = 6.0;
    let mut worst: f64 = 0.0;
    for tube_volume in [2.0, 5.0, 10.0] {
        for pump_max_flow in [5.0, 10.0, 20.0] {
            for tau_rise in [0.5, 1.0, 2.0] {
                let cfg = DeviceConfig {
                    tube_volume,
                    pump_max_flow,
                    tau_rise,
                    ..DeviceConfig::default()
                };
                let mut dev = Device::new(cfg.clone());
                dev.actuate(Command::Deliver(1.0))
                    .map_err(|e| e.to_string())?;
                for k in 1..=10_000 {
                    let t = k as f64 * dt;
                    dev.step_to(t);
                    if k == 6000 {
                        dev.actuate(Command::Stop).map_err(|e| e.to_string())?;
                    }
                    let err =
                        (dev.state().nose_concentration - closed_form(&cfg, t, stop_at)).abs();
                    worst = worst.max(err);
                }
            }
        }
    }
    ensure(worst <= 1e-3, || format!("max error {worst:.2e}"))?;
    Ok(format!("27 configs, max abs error {worst:.2e}"))
}

fn onset_error(topo: &ChainTopology, address: u8, compensation: bool) -> Result<f64, String> {
    let comp = OdorComposition::new("sync", vec![OdorEvent::new(address, 0, 1.0, 10.0, 15.0)])
        .map_err(|e| e.to_string())?;
    let validated =
        approve(comp, &SafetyPolicy::default(), &topo.odorants()).map_err(|v| format!("{v:?}"))?;
    let timeline =
        compile(&validated, topo, &CompileOptions { compensation }).map_err(|e| e.to_string())?;
    ensure(timeline.warnings.is_empty(), || {
        format!("issue times clamped: {:?}", timeline.warnings)
    })?;
    let mut chain = SimChain::new(topo.clone());
    let log = run(
        &timeline,
        &mut SimClock::new(),
        &mut chain,
        &RunOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let onset = log.onsets().find_map(|e| match e {
        LogEntry::Onset { t, .. } => Some(t - 10.0),
        _ => None,
    });
    onset.ok_or_else(|| format!("no onset at address {address}"))
}

fn synchronization() -> Outcome {
    let step = RunOptions::default().sim_step;
    let hop = 0.001;
    let cfg = DeviceConfig::default();
    let topo = ChainTopology::uniform(16, cfg.clone(), hop).map_err(|e| e.to_string())?;
    let mut worst_comp: f64 = 0.0;
    let mut worst_late: f64 = 0.0;
    for position in 0..16u8 {
        let comp = onset_error(&topo, position, true)?;
        ensure(comp.abs() <= step + 1e-9, || {
            format!("position {position}: compensated error {comp:.4} s")
        })?;
        worst_comp = worst_comp.max(comp.abs());
        let latency = f64::from(position) * hop + cfg.onset_latency(1.0);
        let late = onset_error(&topo, position, false)?;
        ensure((late - latency).abs() <= step + 1e-9, || {
            format!("position {position}: lateness {late:.4} s vs latency {latency:.4} s")
        })?;
        worst_late = worst_late.max((late - latency).abs());
    }
    Ok(format!(
        "compensated within {worst_comp:.4} s, uncompensated within {worst_late:.4} s of latency"
    ))
}

fn chain_semantics() -> Outcome {
    let cfg = DeviceConfig::default();
    ensure(
        ChainTopology::uniform(MAX_DEVICES + 1, cfg.clone(), 0.001).is_err(),
        || "17 devices accepted".into(),
    )?;
    let topo = ChainTopology::uniform(MAX_DEVICES, cfg, 0.001).map_err(|e| e.to_string())?;
    for channel in 0..16u8 {
        for msg in [
            MidiMessage::note_on(channel, 0, 100),
            MidiMessage::note_off(channel, 0, 0),
        ] {
            let actuated: Vec<_> = route(&msg, &topo).actuated().map(|h| h.address).collect();
            ensure(actuated == [channel], || {
                format!("{msg:?} actuated {actuated:?}")
            })?;
        }
    }

    let events: Vec<OdorEvent> = (0..16u8)
        .map(|a| OdorEvent::new(a, 0, 1.0, 0.0, 15.0))
        .collect();
    let comp = OdorComposition::new("all", events).map_err(|e| e.to_string())?;
    let validated =
        approve(comp, &SafetyPolicy::default(), &topo.odorants()).map_err(|v| format!("{v:?}"))?;
    let timeline = compile(
        &validated,
        &topo,
        &CompileOptions {
            compensation: false,
        },
    )
    .map_err(|e| e.to_string())?;
    let opts = RunOptions::default();
    let mut chain = SimChain::new(topo.clone());
    let mut clock = SimClock::new();
    let mut engine = Engine::new(&mut chain, &opts).map_err(|e| e.to_string())?;
    for cmd in timeline.commands {
        engine.schedule(cmd).map_err(|e| e.to_string())?;
    }
    engine.advance_to(5.0, &mut clock);
    let before = engine
        .chain()
        .devices()
        .iter()
        .filter(|d| d.state().target_concentration > 0.0)
        .count();
    ensure(before == 16, || {
        format!("{before} of 16 devices delivering")
    })?;
    engine.panic_stop();
    let last_arrival = topo.arrival(15);
    engine.advance_to(5.0 + last_arrival + opts.sim_step, &mut clock);
    let still = engine
        .chain()
        .devices()
        .iter()
        .filter(|d| d.state().target_concentration != 0.0)
        .count();
    ensure(still == 0, || format!("{still} devices still delivering"))?;
    Ok("17 rejected, one actuator per message, all-off clears 16 targets".into())
}

fn safety() -> Outcome {
    let topo =
        ChainTopology::uniform(1, DeviceConfig::default(), 0.001).map_err(|e| e.to_string())?;
    let odorants = topo.odorants();
    let policy = SafetyPolicy::default();
    let bundled = include_str!("../data/cade_cue.json");
    let cue = OdorComposition::from_json(bundled).map_err(|e| e.to_string())?;
    ensure(
        cue.events.len() == 1 && cue.events[0].duration == 15.0,
        || "bundled cue is not a single 15 s event".into(),
    )?;
    let v = validate(&cue, &policy, &odorants);
    ensure(v.is_empty(), || format!("bundled cue rejected: {v:?}"))?;

    let long = OdorComposition::new("long", vec![OdorEvent::new(0, 0, 1.0, 0.0, 600.0)])
        .map_err(|e| e.to_string())?;
    let v = validate(&long, &policy, &odorants);
    ensure(v.len() == 1 && v[0].rule == Rule::OverDuration, || {
        format!("600 s event gave {v:?}")
    })?;
    // compile only accepts the token approve hands out
    ensure(approve(long, &policy, &odorants).is_err(), || {
        "600 s event approved".into()
    })?;
    Ok("15 s cue passes, 600 s event has one over-duration violation".into())
}

fn endurance_day() -> Outcome {
    let cfg = DeviceConfig::default();
    let day = endurance(&cfg, &exhibition_day());
    ensure(day.survives && day.charge_remaining > 0.0, || {
        format!("battery flat at {:?} s", day.depleted_at)
    })?;
    Ok(format!(
        "{:.0} of {:.0} mAh left after 8 h",
        day.charge_remaining, cfg.battery_capacity
    ))
}

fn scenario_fidelity() -> Outcome {
    let topo = scent::chain::ChainTopology::from_toml(scent::cli::DEFAULT_TOPOLOGY)
        .map_err(|e| e.to_string())?;
    let mut chain = SimChain::new(topo);
    let out = scenario_run(
        &study_scenario(),
        &mut SimClock::new(),
        &mut chain,
        &ScenarioOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let json = out.summary.to_json();
    let summary: serde_json::Value = serde_json::from_str(&json).map_err(|e| e.to_string())?;
    let duration = summary["scripted_duration_s"].as_f64().unwrap_or(f64::NAN);
    let exposure = summary["exposure_s"].as_f64().unwrap_or(f64::NAN);
    ensure(duration == 342.0 && exposure == 15.0, || {
        format!("duration {duration} s, exposure {exposure} s")
    })?;
    Ok(format!("duration {duration} s, exposure {exposure} s"))
}

fn respiro_detection() -> Outcome {
    let params = DetectParams::default();
    let kinds = [BreathKind::Inhale, BreathKind::Exhale, BreathKind::Sniff];
    let mut totals = [scent::respiro::MatchCounts::default(); 3];
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amplitude = rng.random_range(0.5..2.0);
        let synth = SynthParams {
            rate: rng.random_range(10.0..18.0),
            amplitude,
            noise_sd: amplitude / 10.0,
            sniff_times: vec![rng.random_range(8.0..20.0), rng.random_range(35.0..50.0)],
            pause_times: vec![rng.random_range(24.0..30.0)],
            seed,
            ..SynthParams::default()
        };
        let (trace, truth) = synthesize_breathing(&synth).map_err(|e| e.to_string())?;
        let found = detect_breath_events(&trace, &params).map_err(|e| e.to_string())?;
        for (k, kind) in kinds.iter().enumerate() {
            totals[k].add(match_events(&truth, &found, *kind, 0.1));
        }
        // crossing times are interpolated, so scaling may move the last bit
        for factor in [0.01, 37.0] {
            let scaled =
                detect_breath_events(&trace.scaled(factor), &params).map_err(|e| e.to_string())?;
            let same = scaled.len() == found.len()
                && scaled.iter().zip(&found).all(|(a, b)| {
                    a.kind == b.kind
                        && (a.t_start - b.t_start).abs() < 1e-9
                        && (a.t_end - b.t_end).abs() < 1e-9
                });
            ensure(same, || {
                format!("seed {seed}: scaling by {factor} changed events")
            })?;
        }
    }
    let mut parts = Vec::new();
    for (k, kind) in kinds.iter().enumerate() {
        let p = totals[k].precision().unwrap_or(0.0);
        let r = totals[k].recall().unwrap_or(0.0);
        ensure(p >= 0.95 && r >= 0.95, || {
            format!("{kind:?}: precision {p:.3}, recall {r:.3}")
        })?;
        parts.push(format!("{kind:?} P={p:.3} R={r:.3}"));
    }
    Ok(format!("100 traces: {}, scale invariant", parts.join(", ")))
}

fn survey_metrics() -> Outcome {
    let rows = |data: &[[f64; 2]]| -> Vec<Vec<Option<f64>>> {
        data.iter()
            .map(|r| r.iter().map(|&v| Some(v)).collect())
            .collect()
    };
    let same = cronbach_alpha(&rows(&[[1.0, 1.0], [3.0, 3.0], [4.0, 4.0], [7.0, 7.0]]))
        .map_err(|e| e.to_string())?;
    ensure(same.alpha == 1.0, || {
        format!("identical items give {}", same.alpha)
    })?;
    let half =
        cronbach_alpha(&rows(&[[1.0, 1.0], [2.0, 3.0], [3.0, 2.0]])).map_err(|e| e.to_string())?;
    ensure((half.alpha - 2.0 / 3.0).abs() <= 1e-9, || {
        format!("covariance 0.5 gives {}", half.alpha)
    })?;
    let x = [2.0, 4.0, 4.0, 5.0, 7.0, 1.0];
    let r = pearson_r(&x, &x).map_err(|e| e.to_string())?;
    ensure(r == 1.0, || format!("r(x, x) = {r}"))?;
    for v in 1..=7 {
        let v = f64::from(v);
        let twice = reverse_code(
            reverse_code(v, 1.0, 7.0).map_err(|e| e.to_string())?,
            1.0,
            7.0,
        )
        .map_err(|e| e.to_string())?;
        ensure(twice == v, || format!("reverse twice maps {v} to {twice}"))?;
    }
    Ok(format!(
        "alpha 1 and {:.10}, r(x, x) = 1, reverse coding is an involution",
        half.alpha
    ))
}

fn simulate_into(dir: &Path) -> Result<Vec<u8>, String> {
    let mut sink = Vec::new();
    let args = [
        "scent",
        "simulate",
        "--seed",
        "42",
        "--out",
        dir.to_str().ok_or("path")?,
    ];
    let code = scent::cli::run(args, &mut sink);
    ensure(code == 0, || format!("simulate exited with {code}"))?;
    std::fs::read(dir.join("session.jsonl")).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = simulate_into(a.path())?;
    let second = simulate_into(b.path())?;
    ensure(!first.is_empty(), || "empty session log".into())?;
    ensure(first == second, || "session logs differ".into())?;
    Ok(format!("two runs, {} identical bytes", first.len()))
}

fn main() {
    let criteria: [(&str, Check); 11] = [
        ("MIDI codec round trip", codec_round_trip),
        ("SMF and VLQ", smf_round_trip),
        ("concentration dynamics", concentration_dynamics),
        ("synchronization", synchronization),
        ("chain semantics", chain_semantics),
        ("safety policy", safety),
        ("endurance", endurance_day),
        ("scenario fidelity", scenario_fidelity),
        ("breath detection", respiro_detection),
        ("survey metrics", survey_metrics),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
