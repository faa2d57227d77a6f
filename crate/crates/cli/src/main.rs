//! `neurosynth`: compile `.nds` models to block netlists, simulate them at
//! the reference, circuit or device tier, and compare tiers.
//!
//! Exit codes: 0 success, 1 input error, 2 numeric fault, 3 comparison
//! above `--threshold`.

mod plot;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use neurosynth::analysis::{compare_traces, detect_spikes, speedup_factor, AnalysisError, Comparison, SpikeSummary, FHN_TAU_BIO};
use neurosynth::blocks::{DeviceParams, SlopeDenominator};
use neurosynth::config::{ConfigError, ElectricalConfig};
use neurosynth::dsl::{parse_system, DslError, SystemSpec, Waveform};
use neurosynth::sim::{
    compute_tau, simulate_circuit, simulate_device, simulate_reference, IntegratorConfig, Method, SimError, Trace,
};
use neurosynth::synth::{emit_netlist, parse_netlist, synthesize, BlockKind, Netlist, ScalingMap, SynthError};
use serde::Serialize;
use thiserror::Error;

/// Samples kept per trace when `--stride` is not given.
const TARGET_SAMPLES: usize = 20_000;

#[derive(Debug, Error)]
enum Failure {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Threshold(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Numeric(_) => 2,
            Failure::Threshold(_) => 3,
        }
    }
}

impl From<DslError> for Failure {
    fn from(e: DslError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        Failure::Input(e.to_string())
    }
}

type Result<T> = std::result::Result<T, Failure>;

#[derive(Parser)]
#[command(name = "neurosynth", version, about = "Translinear neuron synthesis and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a model into a block netlist (`netlist.json`).
    Compile(CompileArgs),
    /// Simulate a model or netlist and write `trace.csv`.
    Sim(SimArgs),
    /// Run the reference and circuit tiers and write `report.json`.
    Compare(CompareArgs),
}

#[derive(Args)]
struct Common {
    /// Electrical configuration file.
    #[arg(long, env = "NEUROSYNTH_PARAMS")]
    params: Option<PathBuf>,
    /// External input override, `[NAME=]step:LEVEL[:ON[:OFF]]` or
    /// `[NAME=]const:LEVEL`, in model units. Repeatable.
    #[arg(long = "stim", value_name = "SPEC")]
    stims: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct Integration {
    /// Step size in model time units [default: fastest tau / 1000].
    #[arg(long)]
    dt: Option<f64>,
    /// Span in model time units.
    #[arg(long, default_value_t = 200.0)]
    t_end: f64,
    #[arg(long, default_value = "rk4", value_parser = ["rk4", "euler"])]
    method: String,
    /// Record every N-th step [default: about 20000 samples per trace].
    #[arg(long)]
    stride: Option<usize>,
    /// Slope denominator used by the simulator, overriding the
    /// configuration the netlist was compiled with.
    #[arg(long, value_name = "paper|derived")]
    slope_denominator: Option<SlopeDenominator>,
}

#[derive(Args)]
struct CompileArgs {
    /// `.nds` model.
    model: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TierArg {
    Reference,
    Circuit,
    Device,
    All,
}

#[derive(Args)]
struct SimArgs {
    /// `.nds` model, or a `.json` netlist for the circuit and device tiers.
    model: PathBuf,
    #[arg(long, value_enum, default_value = "reference")]
    tier: TierArg,
    /// Also write an SVG chart of the state signals.
    #[arg(long)]
    plot: bool,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    integration: Integration,
}

#[derive(Args)]
struct CompareArgs {
    /// `.nds` model.
    model: PathBuf,
    /// Signal to compare [default: first state].
    #[arg(long)]
    signal: Option<String>,
    /// Also compare the device tier.
    #[arg(long)]
    device: bool,
    /// Largest acceptable `rms_rel`.
    #[arg(long, default_value_t = 0.05)]
    threshold: f64,
    /// Seconds per model time unit at biological scale.
    #[arg(long, default_value_t = FHN_TAU_BIO)]
    tau_bio: f64,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    integration: Integration,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compile(a) => cmd_compile(&a),
        Command::Sim(a) => cmd_sim(&a),
        Command::Compare(a) => cmd_compare(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Failure::Input(format!("file not found: {}", path.display())),
        _ => Failure::Input(format!("{}: {e}", path.display())),
    })
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn load_config(params: Option<&Path>) -> Result<ElectricalConfig> {
    match params {
        Some(p) => Ok(ElectricalConfig::parse(&read_file(p)?).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?),
        None => Ok(ElectricalConfig::default()),
    }
}

fn load_spec(path: &Path, stims: &[Stim]) -> Result<SystemSpec> {
    let mut spec = parse_system(&read_file(path)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    for s in stims {
        let name = s.target(spec.extern_names())?;
        spec.extern_mut(&name).expect("checked by target").waveform = s.waveform.clone();
    }
    Ok(spec)
}

fn compile(spec: &SystemSpec, cfg: &ElectricalConfig) -> Result<Netlist> {
    let sm = ScalingMap::from_config(spec, cfg)?;
    Ok(synthesize(spec, &sm, &cfg.device)?)
}

/// An external override from `--stim`.
#[derive(Debug, Clone, PartialEq)]
struct Stim {
    name: Option<String>,
    waveform: Waveform,
}

impl Stim {
    fn parse(text: &str) -> Result<Stim> {
        let bad = |why: &str| Failure::Input(format!("bad --stim `{text}`: {why}"));
        let (name, body) = match text.split_once('=') {
            Some((n, b)) => (Some(n.trim().to_string()), b),
            None => (None, text),
        };
        let parts: Vec<&str> = body.split(':').map(str::trim).collect();
        let num = |s: &str| match s {
            "inf" => Ok(f64::INFINITY),
            _ => s.parse::<f64>().map_err(|_| bad(&format!("`{s}` is not a number"))),
        };
        let waveform = match parts.as_slice() {
            ["const", level] => Waveform::Constant(num(level)?),
            ["step", level, rest @ ..] if rest.len() <= 2 => Waveform::Step {
                level: num(level)?,
                t_on: rest.first().map_or(Ok(0.0), |s| num(s))?,
                t_off: rest.get(1).map_or(Ok(f64::INFINITY), |s| num(s))?,
            },
            _ => return Err(bad("expected step:LEVEL[:ON[:OFF]] or const:LEVEL")),
        };
        waveform.validate().map_err(|e| bad(&e))?;
        Ok(Stim { name, waveform })
    }

    fn target(&self, externals: Vec<&str>) -> Result<String> {
        match (&self.name, externals.as_slice()) {
            (Some(n), ext) if ext.contains(&n.as_str()) => Ok(n.clone()),
            (Some(n), _) => Err(Failure::Input(format!("--stim: no external input named `{n}`"))),
            (None, [only]) => Ok(only.to_string()),
            (None, []) => Err(Failure::Input("--stim: the model has no external inputs".into())),
            (None, _) => Err(Failure::Input(format!("--stim: name one of {}", externals.join(", ")))),
        }
    }
}

fn parse_stims(raw: &[String]) -> Result<Vec<Stim>> {
    raw.iter().map(|s| Stim::parse(s)).collect()
}

impl Integration {
    /// Integrator settings in model time units.
    fn model_config(&self, tau_min: f64) -> Result<IntegratorConfig> {
        let method: Method = self.method.parse().map_err(Failure::Input)?;
        let dt = self.dt.unwrap_or(tau_min / 1000.0);
        let mut cfg = IntegratorConfig::new(dt, self.t_end).with_method(method);
        cfg.validate()?;
        let stride = self.stride.unwrap_or_else(|| cfg.steps().div_ceil(TARGET_SAMPLES).max(1));
        cfg = cfg.with_stride(stride);
        cfg.validate()?;
        Ok(cfg)
    }

    fn sim_params(&self, compiled: DeviceParams) -> DeviceParams {
        DeviceParams { slope_denominator: self.slope_denominator.unwrap_or(compiled.slope_denominator), ..compiled }
    }
}

fn block_summary(n: &Netlist) -> String {
    let mut counts = std::collections::BTreeMap::new();
    for b in &n.blocks {
        *counts.entry(b.kind.name()).or_insert(0usize) += 1;
    }
    let mut s = format!("{}: {} blocks, {} nets", n.name, n.blocks.len(), n.nets.len());
    for (k, c) in counts {
        let _ = write!(s, "\n  {k:<16} {c}");
    }
    let _ = write!(s, "\n  time unit {:.4e} s, current unit {:.4e} A", n.time_unit, n.i_unit);
    s
}

fn cmd_compile(a: &CompileArgs) -> Result<()> {
    let stims = parse_stims(&a.common.stims)?;
    let cfg = load_config(a.common.params.as_deref())?;
    let spec = load_spec(&a.model, &stims)?;
    let n = compile(&spec, &cfg)?;
    let path = write_file(&a.common.out, "netlist.json", &emit_netlist(&n)?)?;
    println!("{}", block_summary(&n));
    println!("wrote {}", path.display());
    Ok(())
}

enum Model {
    Spec(SystemSpec),
    Netlist(Netlist),
}

fn cmd_sim(a: &SimArgs) -> Result<()> {
    let stims = parse_stims(&a.common.stims)?;
    let cfg = load_config(a.common.params.as_deref())?;
    let sim_p = a.integration.sim_params(cfg.device);
    let is_json = a.model.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let model = if is_json {
        let mut n = parse_netlist(&read_file(&a.model)?).map_err(|e| Failure::Input(format!("{}: {e}", a.model.display())))?;
        apply_stims_to_netlist(&mut n, &stims)?;
        Model::Netlist(n)
    } else {
        Model::Spec(load_spec(&a.model, &stims)?)
    };

    let tiers: &[TierArg] = match a.tier {
        TierArg::All => &[TierArg::Reference, TierArg::Circuit, TierArg::Device],
        TierArg::Reference => &[TierArg::Reference],
        TierArg::Circuit => &[TierArg::Circuit],
        TierArg::Device => &[TierArg::Device],
    };
    let (tau_min, netlist) = match &model {
        Model::Spec(spec) => {
            let needs_netlist = tiers.iter().any(|t| *t != TierArg::Reference);
            (spec.tau_min(), if needs_netlist { Some(compile(spec, &cfg)?) } else { None })
        }
        Model::Netlist(n) => {
            if tiers.contains(&TierArg::Reference) {
                return Err(Failure::Input("the reference tier needs an .nds model, not a netlist".into()));
            }
            (netlist_tau_min(n, &sim_p), Some(n.clone()))
        }
    };
    let model_cfg = a.integration.model_config(tau_min)?;

    for &tier in tiers {
        let tr = match (tier, &model, &netlist) {
            (TierArg::Reference, Model::Spec(spec), _) => simulate_reference(spec, &model_cfg)?,
            (TierArg::Circuit, _, Some(n)) => simulate_circuit(n, &sim_p, &model_cfg.scaled(n.time_unit))?,
            (TierArg::Device, _, Some(n)) => simulate_device(n, &sim_p, &model_cfg.scaled(n.time_unit))?,
            _ => unreachable!("tier inputs prepared above"),
        };
        let suffix = if tiers.len() > 1 { format!("_{}", tr.tier) } else { String::new() };
        let path = write_file(&a.common.out, &format!("trace{suffix}.csv"), &tr.to_csv())?;
        println!("{} tier: {} samples, wrote {}", tr.tier, tr.len(), path.display());
        if a.plot {
            let states: Vec<String> = match &model {
                Model::Spec(spec) => spec.states.iter().map(|s| s.name.clone()).collect(),
                Model::Netlist(n) => n.states.iter().map(|s| s.name.clone()).collect(),
            };
            let title = format!("{} ({} tier)", model_name(&model), tr.tier);
            let path = write_file(&a.common.out, &format!("plot{suffix}.svg"), &plot::render_svg(&tr, &states, &title))?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn model_name(m: &Model) -> &str {
    match m {
        Model::Spec(s) => &s.name,
        Model::Netlist(n) => &n.name,
    }
}

/// Fastest state time constant of a netlist, in model time units.
fn netlist_tau_min(n: &Netlist, p: &DeviceParams) -> f64 {
    n.states.iter().map(|s| compute_tau(p, s.cap, s.i_dc) / n.time_unit).fold(f64::INFINITY, f64::min)
}

fn apply_stims_to_netlist(n: &mut Netlist, stims: &[Stim]) -> Result<()> {
    for s in stims {
        let name = s.target(n.externals().into_iter().map(|(name, _)| name).collect())?;
        let (time_unit, i_unit) = (n.time_unit, n.i_unit);
        for b in &mut n.blocks {
            if let BlockKind::External { name: ext, waveform } = &mut b.kind {
                if *ext == name {
                    *waveform = s.waveform.rescaled(time_unit, i_unit);
                }
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Report {
    model: String,
    signal: String,
    /// Denominator the netlist was compiled with and the one simulated.
    slope_denominator_compiled: String,
    slope_denominator_simulated: String,
    time_unit_s: f64,
    tau_bio_s: f64,
    speedup: f64,
    threshold: f64,
    circuit: Comparison,
    #[serde(skip_serializing_if = "Option::is_none")]
    device: Option<Comparison>,
    /// Spike statistics per tier; times in seconds, with the reference
    /// tier's model time mapped to `tau_bio_s` per unit.
    spikes: Vec<TierSpikes>,
    pass: bool,
}

#[derive(Serialize)]
struct TierSpikes {
    tier: String,
    #[serde(flatten)]
    summary: SpikeSummary,
}

/// Spike summary with times in seconds: reference-tier model units are
/// mapped to `tau_bio` each.
fn spike_summary(tr: &Trace, signal: &str, tau_bio: f64) -> Result<TierSpikes> {
    let mut s = detect_spikes(tr, signal, 0.0, None)?.summary();
    if tr.tier == neurosynth::sim::Tier::Reference {
        s.mean_period_s *= tau_bio;
        s.frequency_hz /= tau_bio;
    }
    Ok(TierSpikes { tier: tr.tier.to_string(), summary: s })
}

fn cmd_compare(a: &CompareArgs) -> Result<()> {
    if !(a.tau_bio > 0.0 && a.tau_bio.is_finite()) {
        return Err(Failure::Input(format!("--tau-bio must be positive, got {}", a.tau_bio)));
    }
    if a.threshold.is_nan() || a.threshold < 0.0 {
        return Err(Failure::Input(format!("--threshold must be nonnegative, got {}", a.threshold)));
    }
    let stims = parse_stims(&a.common.stims)?;
    let cfg = load_config(a.common.params.as_deref())?;
    let spec = load_spec(&a.model, &stims)?;
    let signal = match &a.signal {
        Some(s) if spec.state_index(s).is_some() => s.clone(),
        Some(s) => return Err(Failure::Input(format!("`{s}` is not a state of {}", spec.name))),
        None => spec.states[0].name.clone(),
    };
    let n = compile(&spec, &cfg)?;
    let sim_p = a.integration.sim_params(cfg.device);
    let model_cfg = a.integration.model_config(spec.tau_min())?;
    let circuit_cfg = model_cfg.scaled(n.time_unit);

    let r = simulate_reference(&spec, &model_cfg)?;
    let c = simulate_circuit(&n, &sim_p, &circuit_cfg)?;
    let circuit = compare_traces(&r, &c, &signal)?;
    let mut spikes = vec![spike_summary(&r, &signal, a.tau_bio)?, spike_summary(&c, &signal, a.tau_bio)?];
    let device = if a.device {
        let d = simulate_device(&n, &sim_p, &circuit_cfg)?;
        spikes.push(spike_summary(&d, &signal, a.tau_bio)?);
        Some(compare_traces(&r, &d, &signal)?)
    } else {
        None
    };

    let worst = device.iter().chain([&circuit]).map(|c| c.rms_rel).fold(0.0, f64::max);
    let pass = worst <= a.threshold;
    let report = Report {
        model: spec.name.clone(),
        signal,
        slope_denominator_compiled: cfg.device.slope_denominator.to_string(),
        slope_denominator_simulated: sim_p.slope_denominator.to_string(),
        time_unit_s: n.time_unit,
        tau_bio_s: a.tau_bio,
        speedup: speedup_factor(n.time_unit, a.tau_bio),
        threshold: a.threshold,
        circuit,
        device,
        spikes,
        pass,
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| Failure::Input(e.to_string()))? + "\n";
    let path = write_file(&a.common.out, "report.json", &json)?;
    println!(
        "circuit vs reference: rms_rel {:.3e}, freq_ratio {:.4}, spikes {}/{}",
        circuit.rms_rel, circuit.freq_ratio, circuit.spikes_a, circuit.spikes_b
    );
    if let Some(d) = &device {
        println!("device vs reference: rms_rel {:.3e}, freq_ratio {:.4}", d.rms_rel, d.freq_ratio);
    }
    println!("speedup {:.3e}, wrote {}", report.speedup, path.display());
    if pass {
        Ok(())
    } else {
        Err(Failure::Threshold(format!("rms_rel {worst:.3e} exceeds threshold {}", a.threshold)))
    }
}
