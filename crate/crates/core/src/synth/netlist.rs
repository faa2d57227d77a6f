//! Block netlist: types, port tables, validation and JSON form.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::dsl::Waveform;

/// Block instance kinds. All currents in A, capacitances in F.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params")]
pub enum BlockKind {
    /// Signed input `in_p − in_m` split into canonical rails.
    Splitter {},
    /// `out = 2√(in · bias)`.
    RootSquare { bias: f64 },
    /// `out = (in + bias/2)² / bias`.
    MultCore { bias: f64 },
    /// Rail-pair product, net `2XY/bias`.
    BilateralMult { bias: f64 },
    /// Current mirror with gain `ratio`.
    MirrorGain { ratio: f64 },
    /// Kirchhoff sum of every net into `in`.
    Summer {},
    ConstSource { current: f64 },
    /// `out = scale · num / den`; no circuit is given for this block.
    IdealDivider { scale: f64 },
    /// Integrating core with output `I_out = ib − ia`, started at `init`.
    NbdsIntegrator { cap: f64, i_dc: f64, i_core: f64, init: f64 },
    /// Named input current, time in s, value in A, on rails `p`/`m`.
    External { name: String, waveform: Waveform },
}

impl BlockKind {
    pub fn name(&self) -> &'static str {
        match self {
            BlockKind::Splitter {} => "Splitter",
            BlockKind::RootSquare { .. } => "RootSquare",
            BlockKind::MultCore { .. } => "MultCore",
            BlockKind::BilateralMult { .. } => "BilateralMult",
            BlockKind::MirrorGain { .. } => "MirrorGain",
            BlockKind::Summer {} => "Summer",
            BlockKind::ConstSource { .. } => "ConstSource",
            BlockKind::IdealDivider { .. } => "IdealDivider",
            BlockKind::NbdsIntegrator { .. } => "NbdsIntegrator",
            BlockKind::External { .. } => "External",
        }
    }

    /// Input ports with the rail each accepts.
    pub fn inputs(&self) -> &'static [(&'static str, PortClass)] {
        use PortClass::*;
        match self {
            BlockKind::Splitter {} => &[("in_p", Plus), ("in_m", Minus)],
            BlockKind::RootSquare { .. } | BlockKind::MultCore { .. } | BlockKind::MirrorGain { .. } => {
                &[("in", Any)]
            }
            BlockKind::BilateralMult { .. } => &[("x_p", Plus), ("x_m", Minus), ("y_p", Plus), ("y_m", Minus)],
            BlockKind::Summer {} => &[("in", Any)],
            BlockKind::IdealDivider { .. } => &[("num", Any), ("den", Single)],
            BlockKind::NbdsIntegrator { .. } => &[("cin_p", Plus), ("cin_m", Minus)],
            BlockKind::ConstSource { .. } | BlockKind::External { .. } => &[],
        }
    }

    /// Output ports with the rail each drives.
    pub fn outputs(&self) -> &'static [(&'static str, PortClass)] {
        use PortClass::*;
        match self {
            BlockKind::Splitter {} | BlockKind::BilateralMult { .. } | BlockKind::External { .. } => {
                &[("p", Plus), ("m", Minus)]
            }
            BlockKind::NbdsIntegrator { .. } => &[("ib", Plus), ("ia", Minus)],
            BlockKind::RootSquare { .. } | BlockKind::MultCore { .. } => &[("out", Single)],
            BlockKind::MirrorGain { .. }
            | BlockKind::Summer {}
            | BlockKind::ConstSource { .. }
            | BlockKind::IdealDivider { .. } => &[("out", Any)],
        }
    }

    /// Blocks whose outputs do not depend combinationally on their inputs.
    pub fn is_source(&self) -> bool {
        matches!(self, BlockKind::NbdsIntegrator { .. } | BlockKind::ConstSource { .. } | BlockKind::External { .. })
    }

    /// Whether several nets may drive the same input port.
    fn fan_in(&self) -> bool {
        matches!(self, BlockKind::Summer {})
    }

    /// Whether every input port must be driven.
    fn inputs_required(&self) -> bool {
        !matches!(self, BlockKind::Summer {})
    }

    fn check_params(&self) -> Result<(), String> {
        let positive = |what: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{what} must be positive and finite, got {v}"))
            }
        };
        match self {
            BlockKind::RootSquare { bias } | BlockKind::MultCore { bias } | BlockKind::BilateralMult { bias } => {
                positive("bias", *bias)
            }
            BlockKind::MirrorGain { ratio } => positive("ratio", *ratio),
            BlockKind::ConstSource { current } => {
                if *current >= 0.0 && current.is_finite() {
                    Ok(())
                } else {
                    Err(format!("source current must be nonnegative, got {current}"))
                }
            }
            BlockKind::IdealDivider { scale } => positive("scale", *scale),
            BlockKind::NbdsIntegrator { cap, i_dc, i_core, init } => {
                positive("cap", *cap)?;
                positive("i_dc", *i_dc)?;
                positive("i_core", *i_core)?;
                if init.is_finite() {
                    Ok(())
                } else {
                    Err("init must be finite".into())
                }
            }
            BlockKind::External { waveform, .. } => waveform.validate(),
            BlockKind::Splitter {} | BlockKind::Summer {} => Ok(()),
        }
    }
}

/// Which rails a port drives or accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortClass {
    /// Single-sided current with no partner rail.
    Single,
    /// Positive rail of a bilateral pair.
    Plus,
    /// Negative rail of a bilateral pair.
    Minus,
    /// Any nonnegative current; the net says which.
    Any,
}

impl PortClass {
    fn admits(self, rail: NetRail) -> bool {
        matches!(
            (self, rail),
            (PortClass::Any, _)
                | (PortClass::Single, NetRail::Single)
                | (PortClass::Plus, NetRail::Plus)
                | (PortClass::Minus, NetRail::Minus)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetRail {
    Plus,
    Minus,
    Single,
}

/// `block.port` reference.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortRef {
    pub block: String,
    pub port: String,
}

impl PortRef {
    pub fn new(block: impl Into<String>, port: impl Into<String>) -> Self {
        PortRef { block: block.into(), port: port.into() }
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.block, self.port)
    }
}

impl FromStr for PortRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.rsplit_once('.') {
            Some((b, p)) if !b.is_empty() && !p.is_empty() => Ok(PortRef::new(b, p)),
            _ => Err(format!("`{s}` is not of the form block.port")),
        }
    }
}

impl Serialize for PortRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PortRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub id: String,
    #[serde(flatten)]
    pub kind: BlockKind,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Net {
    pub from: PortRef,
    pub to: PortRef,
    pub rail: NetRail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBinding {
    pub name: String,
    pub integrator_id: String,
    pub cap: f64,
    pub i_dc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Netlist {
    pub name: String,
    /// Current per model unit, A.
    pub i_unit: f64,
    /// Seconds per model time unit.
    pub time_unit: f64,
    pub blocks: Vec<Block>,
    pub nets: Vec<Net>,
    pub states: Vec<StateBinding>,
}

impl Netlist {
    pub fn block(&self, id: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.id == id)
    }

    pub fn count(&self, kind: &str) -> usize {
        self.blocks.iter().filter(|b| b.kind.name() == kind).count()
    }

    /// Integrator block of each state, in state order.
    pub fn integrators(&self) -> Vec<(&StateBinding, &Block)> {
        self.states
            .iter()
            .map(|s| (s, self.block(&s.integrator_id).expect("validated netlist")))
            .collect()
    }

    /// Names of the external inputs.
    pub fn externals(&self) -> Vec<(&str, &Waveform)> {
        self.blocks
            .iter()
            .filter_map(|b| match &b.kind {
                BlockKind::External { name, waveform } => Some((name.as_str(), waveform)),
                _ => None,
            })
            .collect()
    }

    /// Structural checks: unique ids, known ports, rail compatibility,
    /// drivers on every required input, one state per integrator, and no
    /// combinational cycle.
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidNetlist(m));
        let mut by_id: HashMap<&str, &BlockKind> = HashMap::new();
        for b in &self.blocks {
            if b.id.is_empty() || b.id.contains('.') {
                return bad(format!("invalid block id `{}`", b.id));
            }
            if by_id.insert(&b.id, &b.kind).is_some() {
                return bad(format!("duplicate block id `{}`", b.id));
            }
            b.kind.check_params().map_err(|m| SynthError::InvalidNetlist(format!("block `{}`: {m}", b.id)))?;
        }
        if !(self.i_unit > 0.0 && self.time_unit > 0.0) {
            return bad("i_unit and time_unit must be positive".into());
        }

        let mut drivers: BTreeMap<&PortRef, usize> = BTreeMap::new();
        for n in &self.nets {
            let from = by_id.get(n.from.block.as_str());
            let Some(from) = from else { return bad(format!("net from unknown block `{}`", n.from)) };
            let Some(&(_, out_class)) = from.outputs().iter().find(|(p, _)| *p == n.from.port) else {
                return bad(format!("`{}` is not an output port", n.from));
            };
            let Some(to) = by_id.get(n.to.block.as_str()) else {
                return bad(format!("net into unknown block `{}`", n.to));
            };
            let Some(&(_, in_class)) = to.inputs().iter().find(|(p, _)| *p == n.to.port) else {
                return bad(format!("`{}` is not an input port", n.to));
            };
            if !out_class.admits(n.rail) || !in_class.admits(n.rail) {
                return bad(format!("net {} -> {} cannot carry a {:?} rail", n.from, n.to, n.rail));
            }
            let c = drivers.entry(&n.to).or_insert(0);
            *c += 1;
            if *c > 1 && !to.fan_in() {
                return bad(format!("input `{}` has more than one driver", n.to));
            }
        }
        for b in &self.blocks {
            if !b.kind.inputs_required() {
                continue;
            }
            for (port, _) in b.kind.inputs() {
                if !drivers.contains_key(&PortRef::new(b.id.as_str(), *port)) {
                    return bad(format!("input `{}.{port}` is not driven", b.id));
                }
            }
        }

        let mut seen = BTreeSet::new();
        for s in &self.states {
            match by_id.get(s.integrator_id.as_str()) {
                Some(BlockKind::NbdsIntegrator { cap, i_dc, .. }) => {
                    if *cap != s.cap || *i_dc != s.i_dc {
                        return bad(format!("state `{}` disagrees with its integrator's cap/i_dc", s.name));
                    }
                }
                _ => return bad(format!("state `{}` is not bound to an integrator", s.name)),
            }
            if !seen.insert(&s.integrator_id) {
                return bad(format!("integrator `{}` is bound to two states", s.integrator_id));
            }
        }
        let integrators = self.blocks.iter().filter(|b| matches!(b.kind, BlockKind::NbdsIntegrator { .. })).count();
        if integrators != seen.len() {
            return bad("every integrator must be bound to exactly one state".into());
        }

        self.topological_order().map(|_| ())
    }

    /// Block indices ordered so every block follows its combinational
    /// drivers, with the depth of each block. Sources have depth 0.
    pub(crate) fn topological_order(&self) -> Result<Vec<(usize, usize)>, SynthError> {
        let index: HashMap<&str, usize> = self.blocks.iter().enumerate().map(|(i, b)| (b.id.as_str(), i)).collect();
        let n = self.blocks.len();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        for net in &self.nets {
            let (Some(&f), Some(&t)) = (index.get(net.from.block.as_str()), index.get(net.to.block.as_str())) else {
                return Err(SynthError::InvalidNetlist(format!("dangling net {} -> {}", net.from, net.to)));
            };
            if !self.blocks[t].kind.is_source() {
                preds[t].push(f);
            }
        }

        // Kahn's algorithm with depth tracking.
        let mut indegree: Vec<usize> = preds.iter().map(Vec::len).collect();
        let mut succs: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (t, ps) in preds.iter().enumerate() {
            for &f in ps {
                succs[f].push(t);
            }
        }
        let mut depth = vec![0usize; n];
        let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop() {
            order.push(i);
            for &t in &succs[i] {
                depth[t] = depth[t].max(depth[i] + 1);
                indegree[t] -= 1;
                if indegree[t] == 0 {
                    ready.push(t);
                }
            }
        }
        if order.len() != n {
            let stuck = (0..n).filter(|&i| indegree[i] > 0).map(|i| self.blocks[i].id.clone()).collect();
            return Err(SynthError::Cycle(stuck));
        }
        let mut out: Vec<(usize, usize)> = order.into_iter().map(|i| (i, depth[i])).collect();
        out.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| self.blocks[a.0].id.cmp(&self.blocks[b.0].id)));
        Ok(out)
    }
}

/// Serialize to JSON with blocks in topological order (then by id) and
/// nets sorted.
pub fn emit_netlist(n: &Netlist) -> Result<String, SynthError> {
    let order = n.topological_order()?;
    let mut canon = n.clone();
    canon.blocks = order.iter().map(|&(i, _)| n.blocks[i].clone()).collect();
    canon.nets.sort();
    let mut s = serde_json::to_string_pretty(&canon)?;
    s.push('\n');
    Ok(s)
}

/// Parse and validate netlist JSON.
pub fn parse_netlist(text: &str) -> Result<Netlist, SynthError> {
    let n: Netlist = serde_json::from_str(text)?;
    n.validate()?;
    Ok(n)
}
