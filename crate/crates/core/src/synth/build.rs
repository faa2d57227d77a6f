//! Netlist construction from a scaled, rail-split system.

use super::netlist::{Block, BlockKind, Net, NetRail, Netlist, PortRef, StateBinding};
use super::poly::{scale_to_currents, CurrentTerm, Sign};
use super::{ScalingMap, SynthError};
use crate::blocks::DeviceParams;
use crate::dsl::SystemSpec;

struct Builder {
    blocks: Vec<Block>,
    nets: Vec<Net>,
}

impl Builder {
    fn block(&mut self, id: String, kind: BlockKind) -> String {
        self.blocks.push(Block { id: id.clone(), kind });
        id
    }

    fn net(&mut self, from: &str, from_port: &str, to: &str, to_port: &str, rail: NetRail) {
        self.nets.push(Net { from: PortRef::new(from, from_port), to: PortRef::new(to, to_port), rail });
    }
}

/// Rails of one split variable.
#[derive(Clone)]
struct Rails {
    block: String,
}

/// Compile `spec` into a block netlist.
///
/// Per state `N` the blocks are `int_N` (integrator), `split_N`,
/// `rsa_N`/`rsb_N` (root-square of `I_A`, `I_B`), `den_N`, the rail sums
/// `fp_N`/`fm_N`, and the dividers `divp_N`/`divm_N` feeding the
/// capacitor. Each monomial `k` of `F_N` adds `const_N_k`, mirrors
/// `gain_N_k_p`/`gain_N_k_m`, or a chain of multipliers `mul_N_k_j`.
/// Externals get `ext_X` and `split_X`.
pub fn synthesize(spec: &SystemSpec, sm: &ScalingMap, p: &DeviceParams) -> Result<Netlist, SynthError> {
    p.validate().map_err(|source| SynthError::Block { id: "device".into(), source })?;
    let time_unit = sm.time_unit(spec, p)?;
    let cs = scale_to_currents(spec, sm)?;
    let n_states = spec.states.len();
    let mut b = Builder { blocks: Vec::new(), nets: Vec::new() };
    let mut states = Vec::with_capacity(n_states);

    for s in &spec.states {
        let name = &s.name;
        let (cap, i_dc, i_core) = (sm.cap[name], sm.i_dc[name], sm.i_core[name]);
        let int = b.block(
            format!("int_{name}"),
            BlockKind::NbdsIntegrator { cap, i_dc, i_core, init: s.init * sm.i_unit },
        );
        states.push(StateBinding { name: name.clone(), integrator_id: int.clone(), cap, i_dc });

        let rsa = b.block(format!("rsa_{name}"), BlockKind::RootSquare { bias: p.i_norm / 4.0 });
        let rsb = b.block(format!("rsb_{name}"), BlockKind::RootSquare { bias: p.i_norm / 4.0 });
        b.net(&int, "ia", &rsa, "in", NetRail::Minus);
        b.net(&int, "ib", &rsb, "in", NetRail::Plus);
        let den = b.block(format!("den_{name}"), BlockKind::Summer {});
        b.net(&rsa, "out", &den, "in", NetRail::Single);
        b.net(&rsb, "out", &den, "in", NetRail::Single);

        let fp = b.block(format!("fp_{name}"), BlockKind::Summer {});
        let fm = b.block(format!("fm_{name}"), BlockKind::Summer {});
        let divp = b.block(format!("divp_{name}"), BlockKind::IdealDivider { scale: i_dc });
        let divm = b.block(format!("divm_{name}"), BlockKind::IdealDivider { scale: i_dc });
        b.net(&fp, "out", &divp, "num", NetRail::Plus);
        b.net(&fm, "out", &divm, "num", NetRail::Minus);
        b.net(&den, "out", &divp, "den", NetRail::Single);
        b.net(&den, "out", &divm, "den", NetRail::Single);
        b.net(&divp, "out", &int, "cin_p", NetRail::Plus);
        b.net(&divm, "out", &int, "cin_m", NetRail::Minus);
    }

    // Splitters are created on first use.
    let mut split: Vec<Option<Rails>> = vec![None; cs.variables.len()];
    let mut rails_of = |b: &mut Builder, v: usize| -> Rails {
        if let Some(r) = &split[v] {
            return r.clone();
        }
        let name = &cs.variables[v];
        let (src, in_p, in_m) = if v < n_states {
            (format!("int_{name}"), "ib", "ia")
        } else {
            let ext = &spec.externals[v - n_states];
            let id = b.block(
                format!("ext_{name}"),
                BlockKind::External { name: name.clone(), waveform: ext.waveform.rescaled(time_unit, sm.i_unit) },
            );
            (id, "p", "m")
        };
        let id = b.block(format!("split_{name}"), BlockKind::Splitter {});
        b.net(&src, in_p, &id, "in_p", NetRail::Plus);
        b.net(&src, in_m, &id, "in_m", NetRail::Minus);
        let r = Rails { block: id };
        split[v] = Some(r.clone());
        r
    };

    for (state, f) in &cs.functions {
        for (k, term) in f.terms.iter().enumerate() {
            realize_term(&mut b, state, k, term, &mut rails_of)?;
        }
    }

    // Externals nobody reads still appear, so the netlist lists every input.
    for j in 0..spec.externals.len() {
        rails_of(&mut b, n_states + j);
    }

    let n = Netlist { name: spec.name.clone(), i_unit: sm.i_unit, time_unit, blocks: b.blocks, nets: b.nets, states };
    n.validate()?;
    Ok(n)
}

fn realize_term(
    b: &mut Builder,
    state: &str,
    k: usize,
    term: &CurrentTerm,
    rails_of: &mut impl FnMut(&mut Builder, usize) -> Rails,
) -> Result<(), SynthError> {
    let fp = format!("fp_{state}");
    let fm = format!("fm_{state}");
    // (block, port, rail) carrying the term's positive and negative parts.
    let (pos, neg): ((String, &str, NetRail), (String, &str, NetRail)) = match term.vars.as_slice() {
        [] => {
            let id = b.block(format!("const_{state}_{k}"), BlockKind::ConstSource { current: term.scale });
            let side = if term.sign == Sign::Plus { (&fp, NetRail::Plus) } else { (&fm, NetRail::Minus) };
            b.net(&id, "out", side.0, "in", side.1);
            return Ok(());
        }
        [v] => {
            let r = rails_of(b, *v);
            ((r.block.clone(), "p", NetRail::Plus), (r.block, "m", NetRail::Minus))
        }
        [v0, rest @ ..] => {
            let mut x = {
                let r = rails_of(b, *v0);
                (r.block.clone(), "p", r.block, "m")
            };
            for (j, &v) in rest.iter().enumerate() {
                let y = rails_of(b, v);
                let id = b.block(format!("mul_{state}_{k}_{j}"), BlockKind::BilateralMult { bias: 2.0 * term.norms[j] });
                b.net(&x.0, x.1, &id, "x_p", NetRail::Plus);
                b.net(&x.2, x.3, &id, "x_m", NetRail::Minus);
                b.net(&y.block, "p", &id, "y_p", NetRail::Plus);
                b.net(&y.block, "m", &id, "y_m", NetRail::Minus);
                x = (id.clone(), "p", id, "m");
            }
            ((x.0, x.1, NetRail::Plus), (x.2, x.3, NetRail::Minus))
        }
    };
    let (to_fp, to_fm) = match term.sign {
        Sign::Plus => (pos, neg),
        Sign::Minus => (neg, pos),
    };
    for ((src, port, rail), sum, tag, side_rail) in
        [(to_fp, &fp, "p", NetRail::Plus), (to_fm, &fm, "m", NetRail::Minus)]
    {
        if term.scale == 1.0 {
            b.net(&src, port, sum, "in", rail);
        } else {
            let g = b.block(format!("gain_{state}_{k}_{tag}"), BlockKind::MirrorGain { ratio: term.scale });
            b.net(&src, port, &g, "in", rail);
            b.net(&g, "out", sum, "in", side_rail);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_system;

    fn build(src: &str) -> Netlist {
        let spec = parse_system(src).unwrap();
        let p = DeviceParams::default();
        let sm = ScalingMap::uniform(&spec, &p, 1e-6, 800e-12, 6e-4);
        synthesize(&spec, &sm, &p).unwrap()
    }

    #[test]
    fn fhn_block_counts() {
        let n = build(include_str!("../../../../models/fhn.nds"));
        assert_eq!(n.count("NbdsIntegrator"), 2);
        assert_eq!(n.count("BilateralMult"), 2);
        assert_eq!(n.count("External"), 1);
        assert!(n.block("split_Iext").is_some());
        assert_eq!(n.count("RootSquare"), 4);
        assert_eq!(n.count("IdealDivider"), 4);
    }

    #[test]
    fn decay_uses_crossed_rails() {
        let n = build("system s { state x { init = 1; tau = 1; } dx/dt = -x; }");
        assert_eq!(n.count("NbdsIntegrator"), 1);
        assert_eq!(n.count("BilateralMult") + n.count("MultCore"), 0);
        let into = |sum: &str| {
            n.nets.iter().filter(|e| e.to.block == sum).map(|e| e.from.to_string()).collect::<Vec<_>>()
        };
        assert_eq!(into("fp_x"), vec!["split_x.m"]);
        assert_eq!(into("fm_x"), vec!["split_x.p"]);
    }

    #[test]
    fn unused_external_is_kept() {
        let n = build("system s { extern u = 0; state x { tau = 1; } dx/dt = 1; }");
        assert!(n.block("ext_u").is_some());
        assert_eq!(n.count("ConstSource"), 1);
    }
}
