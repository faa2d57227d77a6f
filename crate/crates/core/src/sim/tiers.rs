use super::{IntegratorConfig, Method, SimError, Tier, Trace, Units};
use crate::blocks::{core_device_step, sqrt_pair, CoreState, DeviceParams};
use crate::dsl::SystemSpec;
use crate::synth::{BlockKind, CompiledNetlist, Netlist};

/// Work buffers for one fixed step.
struct Stepper {
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl Stepper {
    fn new(n: usize) -> Self {
        Stepper { k: std::array::from_fn(|_| vec![0.0; n]), stage: vec![0.0; n] }
    }

    /// Effective slope over `[t, t + dt]` for the chosen method, in `out`.
    fn slope<F>(&mut self, method: Method, t: f64, x: &[f64], dt: f64, f: &mut F, out: &mut [f64]) -> Result<(), SimError>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), SimError>,
    {
        let [k1, k2, k3, k4] = &mut self.k;
        f(t, x, k1)?;
        if method == Method::Euler {
            out.copy_from_slice(k1);
            return Ok(());
        }
        let stage = &mut self.stage;
        for i in 0..x.len() {
            stage[i] = x[i] + 0.5 * dt * k1[i];
        }
        f(t + 0.5 * dt, stage, k2)?;
        for i in 0..x.len() {
            stage[i] = x[i] + 0.5 * dt * k2[i];
        }
        f(t + 0.5 * dt, stage, k3)?;
        for i in 0..x.len() {
            stage[i] = x[i] + dt * k3[i];
        }
        f(t + dt, stage, k4)?;
        for i in 0..x.len() {
            out[i] = (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0;
        }
        Ok(())
    }
}

fn should_record(k: usize, steps: usize, stride: usize) -> bool {
    k.is_multiple_of(stride) || k == steps
}

fn check_finite(names: &[String], x: &[f64], t: f64) -> Result<(), SimError> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(SimError::Diverged { state: names[i].clone(), t }),
        None => Ok(()),
    }
}

/// Integrate `τ_N·dx_N/dt = F_N(x, ext(t))` in model units.
pub fn simulate_reference(spec: &SystemSpec, cfg: &IntegratorConfig) -> Result<Trace, SimError> {
    cfg.validate()?;
    let n = spec.states.len();
    let f_bound = spec.bound_derivatives();
    let taus: Vec<f64> = spec.states.iter().map(|s| s.tau).collect();
    let state_names: Vec<String> = spec.states.iter().map(|s| s.name.clone()).collect();
    let mut names = state_names.clone();
    names.extend(spec.externals.iter().map(|e| e.name.clone()));

    let mut vals = vec![0.0; names.len()];
    let mut f = |t: f64, x: &[f64], dx: &mut [f64]| -> Result<(), SimError> {
        vals[..n].copy_from_slice(x);
        for (j, e) in spec.externals.iter().enumerate() {
            vals[n + j] = e.waveform.value_at(t);
        }
        for i in 0..n {
            dx[i] = f_bound[i].eval(&vals) / taus[i];
        }
        Ok(())
    };

    let mut trace = Trace::new(&names, Units::Dimensionless, Tier::Reference, 1.0, 1.0);
    let mut x: Vec<f64> = spec.states.iter().map(|s| s.init).collect();
    let record = |trace: &mut Trace, t: f64, x: &[f64]| {
        let ext = spec.externals.iter().map(|e| e.waveform.value_at(t));
        trace.push(t, x.iter().copied().chain(ext));
    };

    let steps = cfg.steps();
    let mut stepper = Stepper::new(n);
    let mut slope = vec![0.0; n];
    record(&mut trace, 0.0, &x);
    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        stepper.slope(cfg.method, t, &x, cfg.dt, &mut f, &mut slope)?;
        for i in 0..n {
            x[i] += cfg.dt * slope[i];
        }
        let t_next = (k + 1) as f64 * cfg.dt;
        check_finite(&state_names, &x, t_next)?;
        if should_record(k + 1, steps, cfg.record_stride) {
            record(&mut trace, t_next, &x);
        }
    }
    Ok(trace)
}

/// Per-state constants shared by the two circuit tiers.
struct Cores {
    names: Vec<String>,
    cap: Vec<f64>,
    i_core: Vec<f64>,
    init: Vec<f64>,
}

impl Cores {
    fn of(n: &Netlist) -> Self {
        let mut c = Cores { names: Vec::new(), cap: Vec::new(), i_core: Vec::new(), init: Vec::new() };
        for (s, b) in n.integrators() {
            let BlockKind::NbdsIntegrator { cap, i_core, init, .. } = b.kind else { unreachable!() };
            c.names.push(s.name.clone());
            c.cap.push(cap);
            c.i_core.push(i_core);
            c.init.push(init);
        }
        c
    }

    fn signal_names(&self, externals: &[String], with_vc: bool) -> Vec<String> {
        let mut names = self.names.clone();
        for s in &self.names {
            names.push(format!("{s}.i_a"));
            names.push(format!("{s}.i_b"));
            names.push(format!("{s}.i_cin"));
            if with_vc {
                names.push(format!("{s}.v_c"));
            }
        }
        names.extend(externals.iter().cloned());
        names
    }
}

/// Evaluates the netlist for given core currents at time `t`, returning
/// net capacitor currents in `cin`.
struct Field<'a> {
    net: &'a CompiledNetlist,
    slots: Vec<f64>,
    ext: Vec<f64>,
}

impl<'a> Field<'a> {
    fn new(net: &'a CompiledNetlist) -> Self {
        Field { net, slots: net.scratch(), ext: vec![0.0; net.extern_names().len()] }
    }

    fn cin(&mut self, t: f64, cores: &[(f64, f64)], cin: &mut [f64]) -> Result<(), SimError> {
        for (e, w) in self.ext.iter_mut().zip(self.net.extern_waveforms()) {
            *e = w.value_at(t);
        }
        self.net.eval(cores, &self.ext, &mut self.slots).map_err(|source| SimError::Netlist { t, source })?;
        for (k, c) in cin.iter_mut().enumerate() {
            let (p, m) = self.net.cin(&self.slots, k);
            *c = p - m;
        }
        Ok(())
    }
}

fn core_currents(names: &[String], i_core: &[f64], i_out: &[f64], t: f64, out: &mut [(f64, f64)]) -> Result<(), SimError> {
    for k in 0..i_out.len() {
        let (sa, sb) = sqrt_pair(i_core[k], i_out[k])
            .map_err(|source| SimError::Region { state: names[k].clone(), t, source })?;
        out[k] = (sa * sa, sb * sb);
    }
    Ok(())
}

/// Block-level tier: integrate each core's output current
/// `dI_out/dt = (√I_A + √I_B)·2√k_n·I_Cin / (d·C)` with `√I_A + √I_B`
/// held at `2√i_core`. Time in seconds, signals in amperes.
pub fn simulate_circuit(n: &Netlist, p: &DeviceParams, cfg: &IntegratorConfig) -> Result<Trace, SimError> {
    cfg.validate()?;
    p.validate().map_err(|source| SimError::Region { state: "device".into(), t: 0.0, source })?;
    let net = CompiledNetlist::new(n)?;
    let cores = Cores::of(n);
    let ns = cores.names.len();
    let gain: Vec<f64> = (0..ns)
        .map(|k| 2.0 * cores.i_core[k].sqrt() * 2.0 * p.k_n().sqrt() / (p.slope_denominator_value() * cores.cap[k]))
        .collect();

    let mut field = Field::new(&net);
    let mut pairs = vec![(0.0, 0.0); ns];
    let mut f = |t: f64, x: &[f64], dx: &mut [f64]| -> Result<(), SimError> {
        core_currents(&cores.names, &cores.i_core, x, t, &mut pairs)?;
        field.cin(t, &pairs, dx)?;
        for k in 0..ns {
            dx[k] *= gain[k];
        }
        Ok(())
    };

    let names = cores.signal_names(net.extern_names(), false);
    let mut trace = Trace::new(&names, Units::Ampere, Tier::Circuit, n.i_unit, n.time_unit);
    let mut rec_field = Field::new(&net);
    let mut record = |trace: &mut Trace, t: f64, x: &[f64]| -> Result<(), SimError> {
        let mut pairs = vec![(0.0, 0.0); ns];
        let mut cin = vec![0.0; ns];
        core_currents(&cores.names, &cores.i_core, x, t, &mut pairs)?;
        rec_field.cin(t, &pairs, &mut cin)?;
        let mut row: Vec<f64> = x.to_vec();
        for k in 0..ns {
            row.extend([pairs[k].0, pairs[k].1, cin[k]]);
        }
        row.extend(net.extern_waveforms().iter().map(|w| w.value_at(t)));
        trace.push(t, row);
        Ok(())
    };

    let mut x = cores.init.clone();
    let steps = cfg.steps();
    let mut stepper = Stepper::new(ns);
    let mut slope = vec![0.0; ns];
    record(&mut trace, 0.0, &x)?;
    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        stepper.slope(cfg.method, t, &x, cfg.dt, &mut f, &mut slope)?;
        for i in 0..ns {
            x[i] += cfg.dt * slope[i];
        }
        let t_next = (k + 1) as f64 * cfg.dt;
        check_finite(&cores.names, &x, t_next)?;
        if should_record(k + 1, steps, cfg.record_stride) {
            record(&mut trace, t_next, &x)?;
        }
    }
    Ok(trace)
}

/// Device-level tier: integrate each capacitor voltage and move the core's
/// gate voltages by the KVL constraints. The update applies the method's
/// averaged capacitor current through [`core_device_step`].
pub fn simulate_device(n: &Netlist, p: &DeviceParams, cfg: &IntegratorConfig) -> Result<Trace, SimError> {
    cfg.validate()?;
    p.validate().map_err(|source| SimError::Region { state: "device".into(), t: 0.0, source })?;
    let net = CompiledNetlist::new(n)?;
    let cores = Cores::of(n);
    let ns = cores.names.len();
    let region = |k: usize, t: f64| {
        let name = cores.names[k].clone();
        move |source| SimError::Region { state: name, t, source }
    };

    let mut state: Vec<CoreState> = (0..ns)
        .map(|k| CoreState::biased(p, cores.i_core[k], cores.init[k]).map_err(region(k, 0.0)))
        .collect::<Result<_, _>>()?;

    let names = cores.signal_names(net.extern_names(), true);
    let mut trace = Trace::new(&names, Units::Ampere, Tier::Device, n.i_unit, n.time_unit);
    let mut rec_field = Field::new(&net);
    let mut record = |trace: &mut Trace, t: f64, st: &[CoreState]| -> Result<(), SimError> {
        let pairs: Vec<(f64, f64)> = st.iter().map(|s| (s.i_a, s.i_b)).collect();
        let mut cin = vec![0.0; ns];
        rec_field.cin(t, &pairs, &mut cin)?;
        let mut row: Vec<f64> = st.iter().map(CoreState::i_out).collect();
        for k in 0..ns {
            row.extend([st[k].i_a, st[k].i_b, cin[k], st[k].v_c]);
        }
        row.extend(net.extern_waveforms().iter().map(|w| w.value_at(t)));
        trace.push(t, row);
        Ok(())
    };

    let mut field = Field::new(&net);
    let steps = cfg.steps();
    let mut stepper = Stepper::new(ns);
    let mut slope = vec![0.0; ns];
    let mut pairs = vec![(0.0, 0.0); ns];
    record(&mut trace, 0.0, &state)?;
    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        let base = state.clone();
        let vc: Vec<f64> = base.iter().map(|s| s.v_c).collect();
        let mut f = |ts: f64, x: &[f64], dx: &mut [f64]| -> Result<(), SimError> {
            for j in 0..ns {
                let s = base[j].shifted(x[j] - base[j].v_c, p).map_err(region(j, ts))?;
                pairs[j] = (s.i_a, s.i_b);
            }
            field.cin(ts, &pairs, dx)?;
            for (d, c) in dx.iter_mut().zip(&cores.cap) {
                *d /= c;
            }
            Ok(())
        };
        stepper.slope(cfg.method, t, &vc, cfg.dt, &mut f, &mut slope)?;
        let t_next = (k + 1) as f64 * cfg.dt;
        for j in 0..ns {
            let i_cin = slope[j] * cores.cap[j];
            state[j] = core_device_step(&base[j], i_cin, cfg.dt, cores.cap[j], p).map_err(region(j, t_next))?;
            if !state[j].v_c.is_finite() {
                return Err(SimError::Diverged { state: cores.names[j].clone(), t: t_next });
            }
        }
        if should_record(k + 1, steps, cfg.record_stride) {
            record(&mut trace, t_next, &state)?;
        }
    }
    Ok(trace)
}
