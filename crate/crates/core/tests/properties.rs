use proptest::prelude::*;

use scent::chain::{route, ChainDevice, ChainTopology};
use scent::device::DeviceConfig;
use scent::midi::{
    decode_stream, encode_stream, parse_smf, ticks_to_seconds, write_smf, MessageKind, MidiMessage,
    SmfScore, StreamDecoder,
};
use scent::odor::{
    approve, from_midi, to_midi, validate, OdorComposition, OdorEvent, SafetyPolicy, VelocityCurve,
};
use scent::respiro::{detect_breath_events, synthesize_breathing, DetectParams, SynthParams};
use scent::sequencer::{
    compile, run, scenario_run, study_scenario, CompileOptions, LogEntry, RunOptions,
    ScenarioOptions, SessionLog, SimChain, SimClock,
};
use scent::survey::{
    cronbach_alpha, pearson_r, reverse_code, score_scales, ResponseMatrix, ScaleDef, ScaleSet,
};

fn message() -> impl Strategy<Value = MidiMessage> {
    let kind = prop_oneof![
        Just(MessageKind::NoteOff),
        Just(MessageKind::NoteOn),
        Just(MessageKind::ControlChange),
        Just(MessageKind::Passthrough(0xA0)),
        Just(MessageKind::Passthrough(0xC0)),
        Just(MessageKind::Passthrough(0xD0)),
        Just(MessageKind::Passthrough(0xE0)),
    ];
    (kind, 0u8..16, 0u8..128, 0u8..128).prop_map(|(kind, channel, data1, data2)| {
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
    })
}

fn score() -> impl Strategy<Value = SmfScore> {
    (
        1u16..=960,
        prop::collection::vec((1u64..5000, 100_000u32..2_000_000), 0..4),
        prop::collection::vec((0u64..2000, message()), 0..40),
    )
        .prop_map(|(tpq, tempos, events)| {
            let mut s = SmfScore::new(tpq, 500_000);
            let mut tick = 0;
            for (d, tempo) in tempos {
                tick += d;
                s.tempo_map.push((tick, tempo));
            }
            let mut tick = 0;
            for (d, m) in events {
                tick += d;
                s.events.push((tick, m));
            }
            s
        })
}

fn event() -> impl Strategy<Value = OdorEvent> {
    (0u8..4, 0u8..2, 0.05f64..=1.0, 0.0f64..400.0, 1.0f64..90.0)
        .prop_map(|(d, c, conc, onset, dur)| OdorEvent::new(d, c, conc, onset, dur))
}

fn same_events(a: &SessionLog, b: &SessionLog) -> bool {
    a.to_jsonl() == b.to_jsonl()
}

proptest! {
    #[test]
    fn running_status_stream_round_trips(msgs in prop::collection::vec(message(), 0..50)) {
        let bytes = encode_stream(&msgs).unwrap();
        let decoded = decode_stream(&bytes).unwrap();
        prop_assert_eq!(&decoded.messages, &msgs);
        prop_assert!(decoded.rest.is_empty());
    }

    #[test]
    fn decoder_is_split_invariant(msgs in prop::collection::vec(message(), 1..30), cut in any::<prop::sample::Index>()) {
        let bytes = encode_stream(&msgs).unwrap();
        let at = cut.index(bytes.len() + 1);
        let mut dec = StreamDecoder::new();
        let mut got = dec.push(&bytes[..at]).unwrap();
        got.extend(dec.push(&bytes[at..]).unwrap());
        prop_assert_eq!(got, msgs);
    }

    #[test]
    fn realtime_bytes_are_transparent(msgs in prop::collection::vec(message(), 1..20), pos in any::<prop::sample::Index>()) {
        let mut bytes = encode_stream(&msgs).unwrap();
        bytes.insert(pos.index(bytes.len() + 1), 0xF8);
        let decoded = decode_stream(&bytes).unwrap();
        prop_assert_eq!(decoded.messages, msgs);
        prop_assert_eq!(decoded.skipped_realtime, 1);
    }

    #[test]
    fn smf_round_trips(s in score()) {
        let (back, _) = parse_smf(&write_smf(&s).unwrap()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn tick_time_is_monotone(s in score(), a in 0u64..100_000, b in 0u64..100_000) {
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(ticks_to_seconds(lo, &s) <= ticks_to_seconds(hi, &s));
    }

    #[test]
    fn velocity_curves_are_monotone(v in 1u8..127, span in 0.5f64..4.0) {
        for curve in [VelocityCurve::Linear, VelocityCurve::Logarithmic { span_decades: span }] {
            prop_assert!(curve.concentration(v) < curve.concentration(v + 1));
            prop_assert_eq!(curve.velocity(curve.concentration(v)), v);
        }
    }

    #[test]
    fn composition_survives_midi(onsets in prop::collection::vec((0.0f64..60.0, 0.5f64..20.0, 1u8..128), 1..8)) {
        let events: Vec<OdorEvent> = onsets
            .iter()
            .enumerate()
            .map(|(i, &(on, dur, vel))| {
                OdorEvent::new(i as u8, 0, VelocityCurve::Linear.concentration(vel), on, dur)
            })
            .collect();
        let comp = OdorComposition::new("p", events).unwrap();
        let (back, warnings) = from_midi(&to_midi(&comp, 480, 500_000, VelocityCurve::Linear), VelocityCurve::Linear);
        prop_assert!(warnings.is_empty());
        prop_assert_eq!(back.events.len(), comp.events.len());
        let half_tick = 0.5 / 960.0;
        for e in &comp.events {
            let b = back.events.iter().find(|b| b.device_address == e.device_address).unwrap();
            prop_assert!((b.onset - e.onset).abs() <= half_tick + 1e-9);
            prop_assert!((b.duration - e.duration).abs() <= 2.0 * half_tick + 1e-9);
            prop_assert_eq!(b.concentration, e.concentration);
        }
    }

    #[test]
    fn adding_an_event_never_removes_violations(events in prop::collection::vec(event(), 0..8), extra in event()) {
        let topo = ChainTopology::uniform(4, DeviceConfig::default(), 0.001).unwrap();
        let policy = SafetyPolicy { max_concentration: 0.8, ..SafetyPolicy::default() };
        let base = OdorComposition::new("a", events.clone()).unwrap();
        let mut more = events;
        more.push(extra);
        let grown = OdorComposition::new("b", more).unwrap();
        let before = validate(&base, &policy, &topo.odorants());
        let after = validate(&grown, &policy, &topo.odorants());
        prop_assert!(after.len() >= before.len());
        for v in &before {
            prop_assert!(after.iter().any(|w| w.rule == v.rule));
        }
    }

    #[test]
    fn exactly_the_addressed_device_acts(addresses in prop::sample::subsequence((0u8..16).collect::<Vec<_>>(), 1..=16), target in 0u8..16) {
        let devices = addresses
            .iter()
            .map(|&address| ChainDevice { address, config: DeviceConfig::default() })
            .collect();
        let topo = ChainTopology::new(devices, 0.001).unwrap();
        let r = route(&MidiMessage::note_on(target, 0, 64), &topo);
        let hits: Vec<u8> = r.actuated().map(|h| h.address).collect();
        if addresses.contains(&target) {
            prop_assert_eq!(hits, vec![target]);
            prop_assert!(r.warning.is_none());
        } else {
            prop_assert!(hits.is_empty());
            prop_assert!(r.warning.is_some());
        }
        prop_assert_eq!(r.hops.len(), addresses.len());
    }

    #[test]
    fn scaling_leaves_detection_unchanged(seed in 0u64..1000, factor in 0.01f64..100.0) {
        let p = SynthParams { noise_sd: 0.05, duration: 30.0, sniff_times: vec![12.0], seed, ..SynthParams::default() };
        let (trace, _) = synthesize_breathing(&p).unwrap();
        let params = DetectParams::default();
        let a = detect_breath_events(&trace, &params).unwrap();
        let b = detect_breath_events(&trace.scaled(factor), &params).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.kind, y.kind);
            prop_assert!((x.t_start - y.t_start).abs() < 1e-9);
            prop_assert!((x.t_end - y.t_end).abs() < 1e-9);
        }
    }

    #[test]
    fn reverse_coding_is_an_involution(x in 1u8..=7) {
        let x = f64::from(x);
        prop_assert_eq!(reverse_code(reverse_code(x, 1.0, 7.0).unwrap(), 1.0, 7.0).unwrap(), x);
    }

    #[test]
    fn alpha_ignores_reverse_coding_every_item(rows in prop::collection::vec(prop::collection::vec(1u8..=7, 3), 4..20)) {
        let m: Vec<Vec<Option<f64>>> = rows.iter().map(|r| r.iter().map(|&v| Some(f64::from(v))).collect()).collect();
        let flipped: Vec<Vec<Option<f64>>> = m.iter().map(|r| r.iter().map(|v| v.map(|x| 8.0 - x)).collect()).collect();
        match (cronbach_alpha(&m), cronbach_alpha(&flipped)) {
            (Ok(a), Ok(b)) => prop_assert!((a.alpha - b.alpha).abs() < 1e-9),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn pearson_is_affine_invariant(xy in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..30), a in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0], b in -100.0f64..100.0) {
        let x: Vec<f64> = xy.iter().map(|p| p.0).collect();
        let y: Vec<f64> = xy.iter().map(|p| p.1).collect();
        let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        if let (Ok(r), Ok(s)) = (pearson_r(&x, &y), pearson_r(&ax, &y)) {
            prop_assert!((s - a.signum() * r).abs() < 1e-9);
        }
    }

    #[test]
    fn scores_follow_their_respondents(rows in prop::collection::vec(prop::collection::vec(prop::option::weighted(0.8, 1u8..=5), 4), 1..12), shuffle in Just(()).prop_perturb(|_, mut rng| rng.random::<u64>())) {
        let items: Vec<String> = (1..=4).map(|i| format!("i{i}")).collect();
        let data: Vec<Vec<Option<f64>>> = rows.iter().map(|r| r.iter().map(|v| v.map(f64::from)).collect()).collect();
        let m = ResponseMatrix::new(items.clone(), data, 1.0, 5.0).unwrap();
        let set = ScaleSet {
            scale_min: 1.0,
            scale_max: 5.0,
            min_answered: 0.5,
            scales: vec![ScaleDef {
                name: "s".into(),
                items: vec![],
                reverse: ["i2".to_string()].into(),
                factors: [("a".to_string(), items[..2].to_vec()), ("b".to_string(), items[2..].to_vec())].into(),
            }],
            correlations: vec![],
        };
        let mut order: Vec<usize> = (0..m.respondents()).collect();
        let mut state = shuffle;
        for i in (1..order.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (state >> 33) as usize % (i + 1));
        }
        let base = score_scales(&m, &set).unwrap();
        let moved = score_scales(&m.permuted(&order), &set).unwrap();
        for (k, &i) in order.iter().enumerate() {
            prop_assert_eq!(&moved.rows[k], &base.rows[i]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn compensation_lands_within_a_step(
        tube_volume in 1.0f64..20.0,
        pump_max_flow in 2.0f64..30.0,
        tau_rise in 0.2f64..3.0,
        hop in 0.0f64..0.005,
        n in 1usize..=16,
        pick in any::<prop::sample::Index>(),
    ) {
        let cfg = DeviceConfig { tube_volume, pump_max_flow, tau_rise, ..DeviceConfig::default() };
        let topo = ChainTopology::uniform(n, cfg, hop).unwrap();
        let address = pick.index(n) as u8;
        let comp = OdorComposition::new("c", vec![OdorEvent::new(address, 0, 1.0, 20.0, 10.0)]).unwrap();
        let validated = approve(comp, &SafetyPolicy::default(), &topo.odorants()).unwrap();
        let timeline = compile(&validated, &topo, &CompileOptions { compensation: true }).unwrap();
        prop_assume!(timeline.warnings.is_empty());
        let opts = RunOptions::default();
        let log = run(&timeline, &mut SimClock::new(), &mut SimChain::new(topo), &opts).unwrap();
        let err = log.onsets().find_map(|e| match e {
            LogEntry::Onset { error, .. } => Some(*error),
            _ => None,
        });
        let err = err.expect("onset reached");
        prop_assert!((0.0..=opts.sim_step + 1e-9).contains(&err), "error {}", err);
    }

    #[test]
    fn simulation_is_deterministic_and_logs_round_trip(seed in any::<u64>(), sim_step in prop_oneof![Just(0.005), Just(0.01), Just(0.02)]) {
        let topo = ChainTopology::uniform(2, DeviceConfig::default(), 0.001).unwrap();
        let opts = ScenarioOptions {
            seed,
            run: RunOptions { sim_step, ..RunOptions::default() },
            ..ScenarioOptions::default()
        };
        let once = scenario_run(&study_scenario(), &mut SimClock::new(), &mut SimChain::new(topo.clone()), &opts).unwrap();
        let twice = scenario_run(&study_scenario(), &mut SimClock::new(), &mut SimChain::new(topo), &opts).unwrap();
        prop_assert!(same_events(&once.log, &twice.log));
        prop_assert_eq!(&once.summary, &twice.summary);
        let back = SessionLog::from_jsonl(&once.log.to_jsonl()).unwrap();
        prop_assert_eq!(back, once.log);
    }
}
