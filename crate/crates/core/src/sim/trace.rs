use std::fmt::{self, Write as _};
use std::io;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    Dimensionless,
    Ampere,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Reference,
    Circuit,
    Device,
}

impl fmt::Display for Units {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Units::Dimensionless => "dimensionless",
            Units::Ampere => "ampere",
        })
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Reference => "reference",
            Tier::Circuit => "circuit",
            Tier::Device => "device",
        })
    }
}

/// Recorded time series.
///
/// `value_scale` is the signal value of one model unit (1 for the reference
/// tier, `i_unit` for the circuit tiers) and `time_scale` the length of one
/// model time unit on the `times` axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub times: Vec<f64>,
    pub signals: IndexMap<String, Vec<f64>>,
    pub units: Units,
    pub tier: Tier,
    pub value_scale: f64,
    pub time_scale: f64,
}

impl Trace {
    pub fn new(names: &[String], units: Units, tier: Tier, value_scale: f64, time_scale: f64) -> Self {
        Trace {
            times: Vec::new(),
            signals: names.iter().map(|n| (n.clone(), Vec::new())).collect(),
            units,
            tier,
            value_scale,
            time_scale,
        }
    }

    pub(crate) fn push(&mut self, t: f64, values: impl IntoIterator<Item = f64>) {
        self.times.push(t);
        for (series, v) in self.signals.values_mut().zip(values) {
            series.push(v);
        }
    }

    pub fn signal(&self, name: &str) -> Option<&[f64]> {
        self.signals.get(name).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with a `#` preamble naming tier and units.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# tier: {}", self.tier);
        let _ = writeln!(out, "# units: {}", self.units);
        let _ = writeln!(out, "# value_scale: {:e}", self.value_scale);
        let _ = writeln!(out, "# time_scale: {:e}", self.time_scale);
        out.push('t');
        for name in self.signals.keys() {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (k, t) in self.times.iter().enumerate() {
            let _ = write!(out, "{t:e}");
            for series in self.signals.values() {
                let _ = write!(out, ",{:e}", series[k]);
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.to_csv())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut tr = Trace::new(&["x".into(), "y".into()], Units::Ampere, Tier::Circuit, 1e-6, 1e-3);
        tr.push(0.0, [1e-6, -2.5e-7]);
        tr.push(1e-4, [0.0, 3.0]);
        let csv = tr.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# tier: circuit");
        assert_eq!(lines[1], "# units: ampere");
        assert_eq!(lines[4], "t,x,y");
        assert_eq!(lines[5], "0e0,1e-6,-2.5e-7");
        assert_eq!(lines[6], "1e-4,0e0,3e0");
    }
}
