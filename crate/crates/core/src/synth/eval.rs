//! Combinational evaluation of a netlist.

use std::collections::{BTreeMap, HashMap};

use super::netlist::{BlockKind, Net, Netlist, PortRef};
use super::SynthError;
use crate::blocks::{bilateral_mult, mult_core, root_square, sqrt_pair, split, BlockError};
use crate::dsl::Waveform;

/// A netlist flattened to slot-indexed operations in topological order.
///
/// Every output port owns one slot; input ports are lists of driving slots
/// whose values are summed.
#[derive(Debug, Clone)]
pub struct CompiledNetlist {
    ops: Vec<Op>,
    n_slots: usize,
    /// Per state in netlist order: `(ib slot, ia slot)`.
    core_slots: Vec<(usize, usize)>,
    /// Per state: drivers of `cin_p` and `cin_m`.
    cin_inputs: Vec<(Vec<usize>, Vec<usize>)>,
    /// Per external in netlist order.
    ext_slots: Vec<(usize, usize)>,
    ext_names: Vec<String>,
    ext_waveforms: Vec<Waveform>,
    state_names: Vec<String>,
    i_core: Vec<f64>,
    slot_names: Vec<String>,
}

#[derive(Debug, Clone)]
struct Op {
    id: String,
    kind: BlockKind,
    inputs: Vec<Vec<usize>>,
    out: usize,
}

impl CompiledNetlist {
    pub fn new(n: &Netlist) -> Result<Self, SynthError> {
        n.validate()?;
        let order = n.topological_order()?;

        let mut base: HashMap<&str, usize> = HashMap::new();
        let mut slot_names = Vec::new();
        for b in &n.blocks {
            base.insert(&b.id, slot_names.len());
            for (port, _) in b.kind.outputs() {
                slot_names.push(format!("{}.{port}", b.id));
            }
        }
        let slot = |r: &PortRef| -> usize {
            let b = n.block(&r.block).expect("validated netlist");
            let k = b.kind.outputs().iter().position(|(p, _)| *p == r.port).expect("validated netlist");
            base[r.block.as_str()] + k
        };
        // Fan-in is summed in net order; sorting makes the result independent
        // of how the netlist lists its nets.
        let mut nets: Vec<&Net> = n.nets.iter().collect();
        nets.sort();
        let drivers = |id: &str, port: &str| -> Vec<usize> {
            nets.iter().filter(|e| e.to.block == id && e.to.port == port).map(|e| slot(&e.from)).collect()
        };

        let mut ops = Vec::new();
        let (mut ext_slots, mut ext_names, mut ext_waveforms) = (Vec::new(), Vec::new(), Vec::new());
        for &(i, _) in &order {
            let b = &n.blocks[i];
            match &b.kind {
                BlockKind::NbdsIntegrator { .. } => continue,
                BlockKind::External { name, waveform } => {
                    ext_slots.push((base[b.id.as_str()], base[b.id.as_str()] + 1));
                    ext_names.push(name.clone());
                    ext_waveforms.push(waveform.clone());
                    continue;
                }
                _ => {}
            }
            let inputs = b.kind.inputs().iter().map(|(p, _)| drivers(&b.id, p)).collect();
            ops.push(Op { id: b.id.clone(), kind: b.kind.clone(), inputs, out: base[b.id.as_str()] });
        }

        let mut core_slots = Vec::new();
        let mut cin_inputs = Vec::new();
        let mut i_core = Vec::new();
        for (s, blk) in n.integrators() {
            let BlockKind::NbdsIntegrator { i_core: ic, .. } = blk.kind else { unreachable!() };
            let b0 = base[s.integrator_id.as_str()];
            core_slots.push((b0, b0 + 1));
            cin_inputs.push((drivers(&s.integrator_id, "cin_p"), drivers(&s.integrator_id, "cin_m")));
            i_core.push(ic);
        }

        Ok(CompiledNetlist {
            ops,
            n_slots: slot_names.len(),
            core_slots,
            cin_inputs,
            ext_slots,
            ext_names,
            ext_waveforms,
            state_names: n.states.iter().map(|s| s.name.clone()).collect(),
            i_core,
            slot_names,
        })
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn extern_names(&self) -> &[String] {
        &self.ext_names
    }

    /// External waveforms in physical units, in [`Self::extern_names`] order.
    pub fn extern_waveforms(&self) -> &[Waveform] {
        &self.ext_waveforms
    }

    pub fn i_core(&self) -> &[f64] {
        &self.i_core
    }

    /// A zeroed slot buffer for [`Self::eval`].
    pub fn scratch(&self) -> Vec<f64> {
        vec![0.0; self.n_slots]
    }

    pub fn slot_names(&self) -> &[String] {
        &self.slot_names
    }

    /// Evaluate every block given each core's `(I_A, I_B)` and each
    /// external's signed current, writing all output ports to `slots`.
    pub fn eval(&self, cores: &[(f64, f64)], ext: &[f64], slots: &mut [f64]) -> Result<(), SynthError> {
        for (&(ib, ia), &(a, b)) in self.core_slots.iter().zip(cores) {
            slots[ia] = a;
            slots[ib] = b;
        }
        for (&(p, m), &x) in self.ext_slots.iter().zip(ext) {
            let (xp, xm) = split(x);
            slots[p] = xp;
            slots[m] = xm;
        }
        for op in &self.ops {
            let input = |k: usize| op.inputs[k].iter().map(|&s| slots[s]).sum::<f64>();
            let block = |source: BlockError| SynthError::Block { id: op.id.clone(), source };
            match &op.kind {
                BlockKind::Splitter {} => {
                    let (p, m) = split(input(0) - input(1));
                    slots[op.out] = p;
                    slots[op.out + 1] = m;
                }
                BlockKind::RootSquare { bias } => slots[op.out] = root_square(input(0), *bias).map_err(block)?,
                BlockKind::MultCore { bias } => slots[op.out] = mult_core(input(0), *bias).map_err(block)?,
                BlockKind::BilateralMult { bias } => {
                    let (p, m) = bilateral_mult(input(0), input(1), input(2), input(3), *bias).map_err(block)?;
                    slots[op.out] = p;
                    slots[op.out + 1] = m;
                }
                BlockKind::MirrorGain { ratio } => slots[op.out] = ratio * input(0),
                BlockKind::Summer {} => slots[op.out] = input(0),
                BlockKind::ConstSource { current } => slots[op.out] = *current,
                BlockKind::IdealDivider { scale } => {
                    let den = input(1);
                    if den == 0.0 {
                        return Err(SynthError::DivisionByZero(op.id.clone()));
                    }
                    slots[op.out] = scale * input(0) / den;
                }
                BlockKind::NbdsIntegrator { .. } | BlockKind::External { .. } => unreachable!("sources are not ops"),
            }
            let n_out = op.kind.outputs().len();
            for (s, &v) in slots.iter().enumerate().skip(op.out).take(n_out) {
                if v.is_nan() || v < 0.0 {
                    return Err(SynthError::SignViolation { port: self.slot_names[s].clone(), value: v });
                }
            }
        }
        Ok(())
    }

    /// `(I_Cin⁺, I_Cin⁻)` of state `k` after [`Self::eval`].
    pub fn cin(&self, slots: &[f64], k: usize) -> (f64, f64) {
        let (p, m) = &self.cin_inputs[k];
        (p.iter().map(|&s| slots[s]).sum(), m.iter().map(|&s| slots[s]).sum())
    }
}

/// Evaluate a netlist at one operating point.
///
/// `inputs` gives each core either as `<integrator>.ia` and `<integrator>.ib`
/// or as its output current under the state's name, and each external by
/// name. Returns every output port plus each integrator's `cin_p`/`cin_m`.
pub fn netlist_eval(n: &Netlist, inputs: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>, SynthError> {
    let c = CompiledNetlist::new(n)?;
    let mut cores = Vec::new();
    for (k, s) in n.states.iter().enumerate() {
        let ia = inputs.get(&format!("{}.ia", s.integrator_id));
        let ib = inputs.get(&format!("{}.ib", s.integrator_id));
        let pair = match (ia, ib, inputs.get(&s.name)) {
            (Some(&a), Some(&b), _) => (a, b),
            (_, _, Some(&i_out)) => {
                let (sa, sb) = sqrt_pair(c.i_core[k], i_out)
                    .map_err(|source| SynthError::Block { id: s.integrator_id.clone(), source })?;
                (sa * sa, sb * sb)
            }
            _ => return Err(SynthError::MissingInput(s.name.clone())),
        };
        cores.push(pair);
    }
    let ext = c
        .ext_names
        .iter()
        .map(|name| inputs.get(name).copied().ok_or_else(|| SynthError::MissingInput(name.clone())))
        .collect::<Result<Vec<_>, _>>()?;

    let mut slots = c.scratch();
    c.eval(&cores, &ext, &mut slots)?;
    let mut out: BTreeMap<String, f64> = c.slot_names.iter().cloned().zip(slots.iter().copied()).collect();
    for (k, s) in n.states.iter().enumerate() {
        let (p, m) = c.cin(&slots, k);
        out.insert(format!("{}.cin_p", s.integrator_id), p);
        out.insert(format!("{}.cin_m", s.integrator_id), m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::DeviceParams;
    use crate::dsl::parse_system;
    use crate::synth::netlist::{Block, Net, NetRail};
    use crate::synth::{synthesize, ScalingMap};

    #[test]
    fn single_root_square() {
        let n = Netlist {
            name: "rs".into(),
            i_unit: 1e-6,
            time_unit: 1.0,
            blocks: vec![
                Block { id: "src".into(), kind: BlockKind::ConstSource { current: 4e-6 } },
                Block { id: "rs".into(), kind: BlockKind::RootSquare { bias: 1e-6 } },
            ],
            nets: vec![Net { from: "src.out".parse().unwrap(), to: "rs.in".parse().unwrap(), rail: NetRail::Single }],
            states: vec![],
        };
        let out = netlist_eval(&n, &BTreeMap::new()).unwrap();
        assert!((out["rs.out"] - 4e-6).abs() < 1e-18);
    }

    #[test]
    fn zero_state_only_sources_are_live() {
        let spec = parse_system("system s { state x { tau = 1; } state y { tau = 1; } dx/dt = x*y - y; dy/dt = 0.5; }")
            .unwrap();
        let p = DeviceParams::default();
        let sm = ScalingMap::uniform(&spec, &p, 1e-6, 1e-9, 1e-6);
        let n = synthesize(&spec, &sm, &p).unwrap();
        let inputs = BTreeMap::from([("x".to_string(), 0.0), ("y".to_string(), 0.0)]);
        let out = netlist_eval(&n, &inputs).unwrap();
        for (k, v) in &out {
            let live = k.starts_with("int_") || k.starts_with("rs") || k.starts_with("den_") || k.contains("_y");
            if !live {
                assert_eq!(*v, 0.0, "{k}");
            }
        }
        assert!(out["int_y.cin_p"] > 0.0);
        assert_eq!(out["int_y.cin_m"], 0.0);
    }

    #[test]
    fn missing_external_is_an_error() {
        let spec = parse_system(include_str!("../../../../models/fhn.nds")).unwrap();
        let p = DeviceParams::default();
        let sm = ScalingMap::uniform(&spec, &p, 1e-6, 800e-12, 6e-4);
        let n = synthesize(&spec, &sm, &p).unwrap();
        let inputs = BTreeMap::from([("v".to_string(), 0.0), ("w".to_string(), 0.0)]);
        assert!(matches!(netlist_eval(&n, &inputs), Err(SynthError::MissingInput(x)) if x == "Iext"));
    }
}
