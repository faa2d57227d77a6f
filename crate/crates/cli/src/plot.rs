//! Static SVG line charts of trace signals.

use std::fmt::Write as _;

use neurosynth::sim::{Trace, Units};

const W: f64 = 800.0;
const H: f64 = 420.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 140.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const MAX_POINTS: usize = 2000;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Chart of `signals` against time. Unknown names are skipped.
pub fn render_svg(tr: &Trace, signals: &[String], title: &str) -> String {
    let series: Vec<(&str, &[f64])> =
        signals.iter().filter_map(|s| tr.signal(s).map(|v| (s.as_str(), v))).collect();
    let (t0, t1) = match (tr.times.first(), tr.times.last()) {
        (Some(a), Some(b)) if b > a => (*a, *b),
        (Some(a), _) => (*a, a + 1.0),
        _ => (0.0, 1.0),
    };
    let (mut lo, mut hi) = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (-1.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE) {
        let pad = if hi == 0.0 { 1.0 } else { hi.abs() * 0.1 };
        (lo, hi) = (lo - pad, hi + pad);
    }
    let margin = 0.05 * (hi - lo);
    let (lo, hi) = (lo - margin, hi + margin);

    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let x = |t: f64| LEFT + (t - t0) / (t1 - t0) * pw;
    let y = |v: f64| TOP + (hi - v) / (hi - lo) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(title));
    let _ = writeln!(s, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##);

    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let t = t0 + f * (t1 - t0);
        let v = lo + f * (hi - lo);
        let (xt, yv) = (x(t), y(v));
        let _ = writeln!(s, r##"<line x1="{xt:.2}" y1="{}" x2="{xt:.2}" y2="{}" stroke="#444"/>"##, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{xt:.2}" y="{}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, tick(t));
        let _ = writeln!(s, r##"<line x1="{}" y1="{yv:.2}" x2="{LEFT}" y2="{yv:.2}" stroke="#444"/>"##, LEFT - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, yv + 4.0, tick(v));
    }

    let (t_label, v_label) = match tr.units {
        Units::Ampere => ("time (s)", "current (A)"),
        Units::Dimensionless => ("time (model units)", "value (dimensionless)"),
    };
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{t_label}</text>"#, LEFT + pw / 2.0, H - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="20" y="{0}" text-anchor="middle" transform="rotate(-90 20 {0})">{v_label}</text>"#,
        TOP + ph / 2.0
    );

    let stride = tr.times.len().div_ceil(MAX_POINTS).max(1);
    for (i, (name, values)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts = String::new();
        let n = tr.times.len();
        for k in (0..n).step_by(stride).chain((n > 0 && !(n - 1).is_multiple_of(stride)).then_some(n - 1)) {
            if values[k].is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", x(tr.times[k]), y(values[k]));
            }
        }
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.trim_end());
        let ly = TOP + 15.0 + 18.0 * i as f64;
        let lx = W - RIGHT + 15.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if (1e-2..1e4).contains(&v.abs()) {
        format!("{}", (v * 1000.0).round() / 1000.0)
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
