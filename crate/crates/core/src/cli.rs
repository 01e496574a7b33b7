//! The `scent` command line.
//!
//! Exit codes: 0 success, 1 rejected by a safety rule, 2 bad usage or
//! unreadable input.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::chain::ChainTopology;
use crate::midi::parse_smf;
use crate::odor::{
    approve, from_midi, violation_table, OdorComposition, SafetyPolicy, VelocityCurve,
};
use crate::respiro::{
    delivery_alignment_stats, detect_breath_events, synthesize_breathing, BreathEvent, BreathKind,
    ChannelMode, DetectParams, PressureTrace, SynthParams,
};
use crate::sequencer::{
    compile, run as run_timeline, scenario_run, study_scenario, CompileOptions, RunOptions,
    Scenario, ScenarioOptions, SimChain, SimClock,
};
use crate::survey::{analyze, ResponseMatrix, ScaleSet, SurveyError};

pub const DEFAULT_TOPOLOGY: &str = include_str!("../data/topology.toml");
pub const DEFAULT_POLICY: &str = include_str!("../data/policy.toml");

/// Environment variable holding the log level.
pub const LOG_ENV: &str = "SCENT_LOG_LEVEL";

#[derive(Debug, Parser)]
#[command(
    name = "scent",
    version,
    about = "Odor compositions for MIDI-driven olfactory displays"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn a Standard MIDI File into an odor composition (JSON).
    Compose(ComposeArgs),
    /// Check a composition against the safety policy.
    Validate(ValidateArgs),
    /// Run a scenario or composition on the simulated chain.
    Simulate(SimulateArgs),
    /// Synthesize or analyze nasal pressure traces.
    #[command(subcommand)]
    Breath(BreathCommand),
    /// Score questionnaire responses.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Curve {
    Linear,
    Log,
}

impl From<Curve> for VelocityCurve {
    fn from(c: Curve) -> Self {
        match c {
            Curve::Linear => VelocityCurve::Linear,
            Curve::Log => VelocityCurve::logarithmic(),
        }
    }
}

#[derive(Debug, Args)]
struct ComposeArgs {
    /// Standard MIDI File (format 0 or 1).
    smf: PathBuf,
    #[arg(long, value_enum, default_value = "linear")]
    curve: Curve,
    /// Write the composition here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Composition JSON.
    composition: PathBuf,
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Odorants are taken from what each device has loaded.
    #[arg(long)]
    topology: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    topology: Option<PathBuf>,
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Scenario TOML; the bundled study session when omitted.
    #[arg(long, conflicts_with = "composition")]
    scenario: Option<PathBuf>,
    /// Play a composition JSON instead of a scenario.
    #[arg(long)]
    composition: Option<PathBuf>,
    /// Directory for session.jsonl and summary.json; the log goes to
    /// stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.01)]
    sim_step: f64,
    #[arg(long)]
    no_compensation: bool,
    /// Actively clear the nose cone after each delivery.
    #[arg(long)]
    purge: bool,
    /// Log every device's state each N steps.
    #[arg(long, default_value_t = 0)]
    snapshot_every: u32,
}

#[derive(Debug, Subcommand)]
enum BreathCommand {
    /// Write a synthetic trace (CSV, or binary when the name ends in .bin).
    Synth(SynthArgs),
    /// Detect breath phases, sniffs and gulp candidates in a trace.
    Detect(DetectArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 12.0)]
    bpm: f64,
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_sd: f64,
    #[arg(long, default_value_t = 100.0)]
    sample_rate: f64,
    /// Sniff times in seconds, comma separated.
    #[arg(long, value_delimiter = ',')]
    sniff: Vec<f64>,
    /// Flow pause times in seconds, comma separated.
    #[arg(long, value_delimiter = ',')]
    pause: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the ground-truth events as JSON.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Channels {
    Summed,
    Left,
    Right,
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// Trace file, CSV or binary (.bin).
    trace: PathBuf,
    #[arg(long, value_enum, default_value = "summed")]
    channels: Channels,
    #[arg(long)]
    smooth_window: Option<f64>,
    #[arg(long)]
    hysteresis: Option<f64>,
    /// Delivery windows as start:end pairs, comma separated.
    #[arg(long, value_delimiter = ',')]
    window: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Responses: header of item ids, one row per respondent.
    responses: PathBuf,
    /// Scale definitions (TOML).
    #[arg(long)]
    scales: PathBuf,
    /// Directory for scores.csv and summary.json; summary to stdout when
    /// omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: i32,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn rejected(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

type CmdResult = Result<(), Failure>;

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> CmdResult {
    fs::write(path, bytes).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn emit(out: &mut dyn Write, text: &str) -> CmdResult {
    out.write_all(text.as_bytes())
        .map_err(|e| usage(format!("writing output: {e}")))
}

fn load_topology(path: Option<&Path>, purge: bool) -> Result<ChainTopology, Failure> {
    let text = match path {
        Some(p) => read_text(p)?,
        None => DEFAULT_TOPOLOGY.to_string(),
    };
    let topo = ChainTopology::from_toml(&text).map_err(|e| usage(e.to_string()))?;
    for d in topo.devices() {
        for w in d.config.check().map_err(|e| usage(e.to_string()))? {
            log::warn!("device {}: {w}", d.address);
        }
    }
    if !purge {
        return Ok(topo);
    }
    let devices = topo
        .devices()
        .iter()
        .cloned()
        .map(|mut d| {
            d.config.purge = true;
            d
        })
        .collect();
    ChainTopology::new(devices, topo.hop_latency()).map_err(|e| usage(e.to_string()))
}

fn load_policy(path: Option<&Path>) -> Result<SafetyPolicy, Failure> {
    let text = match path {
        Some(p) => read_text(p)?,
        None => DEFAULT_POLICY.to_string(),
    };
    SafetyPolicy::from_toml(&text).map_err(|e| usage(e.to_string()))
}

fn load_composition(path: &Path) -> Result<OdorComposition, Failure> {
    OdorComposition::from_json(&read_text(path)?)
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn cmd_compose(a: &ComposeArgs, out: &mut dyn Write) -> CmdResult {
    let bytes = fs::read(&a.smf).map_err(|e| usage(format!("{}: {e}", a.smf.display())))?;
    let (score, report) =
        parse_smf(&bytes).map_err(|e| usage(format!("{}: {e}", a.smf.display())))?;
    log::info!("{report}");
    let (comp, warnings) = from_midi(&score, a.curve.into());
    for w in &warnings {
        log::warn!("{w}");
    }
    let json = comp.to_json() + "\n";
    match &a.out {
        Some(p) => write_file(p, json.as_bytes()),
        None => emit(out, &json),
    }
}

fn cmd_validate(a: &ValidateArgs, out: &mut dyn Write) -> CmdResult {
    let policy = load_policy(a.policy.as_deref())?;
    let topo = load_topology(a.topology.as_deref(), false)?;
    let comp = load_composition(&a.composition)?;
    match approve(comp, &policy, &topo.odorants()) {
        Ok(v) => emit(
            out,
            &format!(
                "ok: {} event(s) pass the policy\n",
                v.composition().events.len()
            ),
        ),
        Err(violations) => {
            emit(out, &violation_table(&violations))?;
            Err(rejected(format!("{} violation(s)", violations.len())))
        }
    }
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> CmdResult {
    let topo = load_topology(a.topology.as_deref(), a.purge)?;
    let policy = load_policy(a.policy.as_deref())?;
    let run_opts = RunOptions {
        sim_step: a.sim_step,
        snapshot_every: a.snapshot_every,
        until: None,
    };
    let compile_opts = CompileOptions {
        compensation: !a.no_compensation,
    };
    let mut chain = SimChain::new(topo.clone());
    let mut clock = SimClock::new();

    let (log, summary_json, rejections) = if let Some(path) = &a.composition {
        let comp = load_composition(path)?;
        let validated = match approve(comp, &policy, &topo.odorants()) {
            Ok(v) => v,
            Err(violations) => {
                emit(out, &violation_table(&violations))?;
                return Err(rejected(format!("{} violation(s)", violations.len())));
            }
        };
        let timeline =
            compile(&validated, &topo, &compile_opts).map_err(|e| usage(e.to_string()))?;
        for w in &timeline.warnings {
            log::warn!("{w}");
        }
        let log = run_timeline(&timeline, &mut clock, &mut chain, &run_opts)
            .map_err(|e| usage(e.to_string()))?;
        let summary = serde_json::json!({
            "composition": validated.composition().name,
            "seed": a.seed,
            "compensation": compile_opts.compensation,
            "sim_step": a.sim_step,
            "exposure_s": validated.composition().events.iter().map(|e| e.duration).sum::<f64>(),
            "commands": timeline.commands.len(),
            "battery_remaining_mah": chain.devices().iter().map(|d| d.state().battery_charge).collect::<Vec<_>>(),
        });
        (
            log,
            serde_json::to_string_pretty(&summary).expect("json"),
            0,
        )
    } else {
        let scenario = match &a.scenario {
            Some(p) => Scenario::from_toml(&read_text(p)?).map_err(|e| usage(e.to_string()))?,
            None => study_scenario(),
        };
        let opts = ScenarioOptions {
            policy,
            compile: compile_opts,
            run: run_opts,
            seed: a.seed,
        };
        let outcome = scenario_run(&scenario, &mut clock, &mut chain, &opts)
            .map_err(|e| usage(e.to_string()))?;
        let rejections = outcome.summary.rejections;
        (outcome.log, outcome.summary.to_json(), rejections)
    };

    let jsonl = log.to_jsonl();
    match &a.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
            write_file(&dir.join("session.jsonl"), jsonl.as_bytes())?;
            write_file(
                &dir.join("summary.json"),
                (summary_json.clone() + "\n").as_bytes(),
            )?;
            emit(out, &(summary_json + "\n"))?;
        }
        None => emit(out, &jsonl)?,
    }
    if rejections > 0 {
        return Err(rejected(format!(
            "{rejections} cue(s) rejected by the safety policy"
        )));
    }
    Ok(())
}

fn read_trace(path: &Path) -> Result<PressureTrace, Failure> {
    let file = fs::File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let reader = std::io::BufReader::new(file);
    let trace = if is_binary(path) {
        PressureTrace::read_binary(reader)
    } else {
        PressureTrace::read_csv(reader)
    };
    trace.map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn is_binary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> CmdResult {
    let params = SynthParams {
        sample_rate: a.sample_rate,
        rate: a.bpm,
        amplitude: a.amplitude,
        noise_sd: a.noise_sd,
        sniff_times: a.sniff.clone(),
        pause_times: a.pause.clone(),
        duration: a.duration,
        seed: a.seed,
    };
    let (trace, truth) = synthesize_breathing(&params).map_err(|e| usage(e.to_string()))?;
    let mut bytes = Vec::new();
    let written = if is_binary(&a.out) {
        trace.write_binary(&mut bytes)
    } else {
        trace.write_csv(&mut bytes)
    };
    written.map_err(|e| usage(e.to_string()))?;
    write_file(&a.out, &bytes)?;
    if let Some(p) = &a.truth {
        write_file(
            p,
            serde_json::to_string_pretty(&truth)
                .expect("json")
                .as_bytes(),
        )?;
    }
    emit(
        out,
        &format!(
            "wrote {} samples at {} Hz to {}\n",
            trace.len(),
            trace.sample_rate(),
            a.out.display()
        ),
    )
}

fn parse_window(s: &str) -> Result<(f64, f64), Failure> {
    let bad = || usage(format!("window '{s}' is not start:end"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    if b < a {
        return Err(bad());
    }
    Ok((a, b))
}

fn cmd_detect(a: &DetectArgs, out: &mut dyn Write) -> CmdResult {
    let trace = read_trace(&a.trace)?;
    let defaults = DetectParams::default();
    let params = DetectParams {
        smooth_window: a.smooth_window.unwrap_or(defaults.smooth_window),
        hysteresis: a.hysteresis.unwrap_or(defaults.hysteresis),
        channels: match a.channels {
            Channels::Summed => ChannelMode::Summed,
            Channels::Left => ChannelMode::Left,
            Channels::Right => ChannelMode::Right,
        },
        ..defaults
    };
    let events: Vec<BreathEvent> =
        detect_breath_events(&trace, &params).map_err(|e| usage(e.to_string()))?;
    let windows = a
        .window
        .iter()
        .map(|w| parse_window(w))
        .collect::<Result<Vec<_>, _>>()?;
    let counts: serde_json::Map<String, serde_json::Value> = BreathKind::ALL
        .iter()
        .map(|k| {
            let name = serde_json::to_value(k)
                .expect("json")
                .as_str()
                .expect("string")
                .to_string();
            (name, events.iter().filter(|e| e.kind == *k).count().into())
        })
        .collect();
    let mut report = serde_json::json!({ "counts": counts, "events": events });
    if !windows.is_empty() {
        report["alignment"] =
            serde_json::to_value(delivery_alignment_stats(&events, &windows)).expect("json");
    }
    let json = serde_json::to_string_pretty(&report).expect("json") + "\n";
    match &a.out {
        Some(p) => {
            write_file(p, json.as_bytes())?;
            emit(
                out,
                &(serde_json::to_string(&report["counts"]).expect("json") + "\n"),
            )
        }
        None => emit(out, &json),
    }
}

fn cmd_analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> CmdResult {
    let set = ScaleSet::from_toml(&read_text(&a.scales)?).map_err(|e| usage(e.to_string()))?;
    let file = fs::File::open(&a.responses)
        .map_err(|e| usage(format!("{}: {e}", a.responses.display())))?;
    let matrix = ResponseMatrix::from_csv(file, set.scale_min, set.scale_max)
        .map_err(|e| usage(e.to_string()))?;
    let (table, summary) = analyze(&matrix, &set).map_err(|e: SurveyError| usage(e.to_string()))?;
    let json = summary.to_json() + "\n";
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
        let mut csv = Vec::new();
        table
            .write_csv(&mut csv)
            .map_err(|e| usage(e.to_string()))?;
        write_file(&dir.join("scores.csv"), &csv)?;
        write_file(&dir.join("summary.json"), json.as_bytes())?;
    }
    emit(out, &json)
}

/// Sets up logging from `SCENT_LOG_LEVEL` (default `warn`). Safe to call
/// more than once.
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .try_init();
}

/// Runs the command line `args` (program name first), writing results to
/// `out` and diagnostics to stderr. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Compose(a) => cmd_compose(a, out),
        Command::Validate(a) => cmd_validate(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Breath(BreathCommand::Synth(a)) => cmd_synth(a, out),
        Command::Breath(BreathCommand::Detect(a)) => cmd_detect(a, out),
        Command::Analyze(a) => cmd_analyze(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("scent: {}", f.message);
            f.code
        }
    }
}
