#![allow(dead_code)]

use std::collections::BTreeMap;

use neurosynth::blocks::DeviceParams;
use neurosynth::config::ElectricalConfig;
use neurosynth::dsl::{eval_expr, parse_system, SystemSpec, Waveform};
use neurosynth::synth::{netlist_eval, synthesize, Netlist, ScalingMap};
use rand::Rng;

pub const FHN_SRC: &str = include_str!("../../../../models/fhn.nds");
pub const FHN_PARAMS: &str = include_str!("../../../../models/fhn.params");
pub const STIM: f64 = 0.8;

pub fn fhn() -> SystemSpec {
    parse_system(FHN_SRC).unwrap()
}

pub fn fhn_stimulated(level: f64) -> SystemSpec {
    let mut spec = fhn();
    spec.extern_mut("Iext").unwrap().waveform = Waveform::Step { t_on: 0.0, t_off: f64::INFINITY, level };
    spec
}

pub fn fhn_config() -> ElectricalConfig {
    ElectricalConfig::parse(FHN_PARAMS).unwrap()
}

pub fn fhn_netlist(spec: &SystemSpec, p: &DeviceParams) -> Netlist {
    let cfg = fhn_config();
    let sm = ScalingMap::from_config(spec, &cfg).unwrap();
    synthesize(spec, &sm, p).unwrap()
}

/// Source of a random polynomial system with `n` states, one external and
/// monomials of degree at most 3.
pub fn random_system(rng: &mut impl Rng, n: usize) -> String {
    let vars: Vec<String> = (0..n).map(|i| format!("x{i}")).chain(["u".to_string()]).collect();
    let mut src = String::from("system rnd {\n    extern u = 0;\n");
    for i in 0..n {
        src += &format!("    state x{i} {{ init = 0; tau = {}; }}\n", rng.gen_range(1..=20) as f64 * 0.25);
    }
    for i in 0..n {
        let terms: Vec<String> = (0..rng.gen_range(1..=5))
            .map(|_| {
                let c = rng.gen_range(-2000..=2000) as f64 / 1000.0;
                let mut t = format!("{c}");
                for _ in 0..rng.gen_range(0..=3) {
                    t += &format!(" * {}", vars[rng.gen_range(0..vars.len())]);
                }
                t
            })
            .collect();
        src += &format!("    dx{i}/dt = {};\n", terms.join(" + "));
    }
    src + "}\n"
}

/// Largest error of the netlist-reconstructed state functions at `samples`
/// random states, relative to the sum of monomial magnitudes (so that
/// cancellation between terms does not count as error).
pub fn oracle_error(spec: &SystemSpec, rng: &mut impl Rng, samples: usize) -> f64 {
    let p = DeviceParams::default();
    let i_unit = 1e-6;
    let sm = ScalingMap::uniform(spec, &p, i_unit, 800e-12, 6e-4);
    let n = synthesize(spec, &sm, &p).unwrap();
    let slots = spec.variable_names();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x: Vec<f64> = slots.iter().map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut inputs = BTreeMap::new();
        let mut env = std::collections::HashMap::new();
        for (name, v) in slots.iter().zip(&x) {
            inputs.insert(name.to_string(), v * i_unit);
            env.insert(name.to_string(), *v);
        }
        let out = netlist_eval(&n, &inputs).unwrap();
        assert!(out.values().all(|v| *v >= 0.0), "negative rail");
        for (s, e) in &spec.derivatives {
            let want = eval_expr(e, &env).unwrap() * i_unit;
            let got = reconstructed_f(&n, &out, s);
            let scale = magnitude(spec, s, &x) * i_unit;
            worst = worst.max((got - want).abs() / scale.max(f64::MIN_POSITIVE));
        }
    }
    worst
}

/// `(I_Cin⁺ − I_Cin⁻)·D / i_dc` for `state`.
pub fn reconstructed_f(n: &Netlist, out: &BTreeMap<String, f64>, state: &str) -> f64 {
    let b = n.states.iter().find(|b| b.name == state).unwrap();
    let id = &b.integrator_id;
    (out[&format!("{id}.cin_p")] - out[&format!("{id}.cin_m")]) * out[&format!("den_{state}.out")] / b.i_dc
}

/// Sum of the absolute values of the monomials of `F_state` at `x`.
fn magnitude(spec: &SystemSpec, state: &str, x: &[f64]) -> f64 {
    let slots = spec.variable_names();
    let poly = neurosynth::synth::expand(&spec.derivatives[state], &slots).unwrap();
    let m: f64 = poly.0.iter().map(|(mono, c)| (c * mono.iter().map(|&i| x[i]).product::<f64>()).abs()).sum();
    m.max(1e-300)
}
