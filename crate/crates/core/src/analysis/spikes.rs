use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::sim::Trace;

/// Spikes found on one signal of a trace. Times are on the trace's axis,
/// values in the trace's units.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeStats {
    pub signal: String,
    /// Interpolated upward threshold crossings.
    pub spike_times: Vec<f64>,
    pub count: usize,
    /// Mean inter-spike interval; 0 with fewer than two spikes.
    pub mean_period: f64,
    /// `1/mean_period`; 0 with fewer than two spikes.
    pub frequency: f64,
    /// Maximum over each inter-spike window (or after the only spike).
    pub peaks: Vec<f64>,
    /// Minimum over each inter-spike window.
    pub troughs: Vec<f64>,
    pub peak_mean: f64,
    pub trough_mean: f64,
}

/// Flat JSON form of [`SpikeStats`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeSummary {
    pub signal: String,
    pub count: usize,
    pub frequency_hz: f64,
    pub mean_period_s: f64,
    pub peak_mean: f64,
    pub trough_mean: f64,
}

impl SpikeStats {
    pub fn summary(&self) -> SpikeSummary {
        SpikeSummary {
            signal: self.signal.clone(),
            count: self.count,
            frequency_hz: self.frequency,
            mean_period_s: self.mean_period,
            peak_mean: self.peak_mean,
            trough_mean: self.trough_mean,
        }
    }

    /// Coefficient of variation of the inter-spike intervals.
    pub fn isi_cv(&self) -> f64 {
        let isi: Vec<f64> = self.spike_times.windows(2).map(|w| w[1] - w[0]).collect();
        if isi.len() < 2 {
            return 0.0;
        }
        let m = isi.iter().sum::<f64>() / isi.len() as f64;
        let var = isi.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (isi.len() - 1) as f64;
        var.sqrt() / m
    }
}

fn signal<'a>(tr: &'a Trace, name: &str) -> Result<&'a [f64], AnalysisError> {
    tr.signal(name).ok_or_else(|| AnalysisError::MissingSignal(name.to_string()))
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Sample index windows `[start, end)` between consecutive spikes, or from
/// the only spike to the end of the trace.
fn windows(tr: &Trace, spike_times: &[f64]) -> Vec<(usize, usize)> {
    let idx = |t: f64| tr.times.partition_point(|&x| x < t);
    match spike_times {
        [] => Vec::new(),
        [t] => vec![(idx(*t), tr.len())],
        ts => ts.windows(2).map(|w| (idx(w[0]), idx(w[1]))).collect(),
    }
}

/// Upward crossings of `threshold` at least `refractory` apart.
///
/// With `refractory = None` the refractory period is 10% of the period
/// estimated by [`estimate_period`] (or no refractory period when the
/// trace shows no periodicity).
pub fn detect_spikes(
    tr: &Trace,
    name: &str,
    threshold: f64,
    refractory: Option<f64>,
) -> Result<SpikeStats, AnalysisError> {
    let y = signal(tr, name)?;
    let refractory = match refractory {
        Some(r) if r > 0.0 => r,
        Some(r) => return Err(AnalysisError::InvalidRefractory(r)),
        None => estimate_period(tr, name)?.map_or(0.0, |p| 0.1 * p),
    };

    let mut spike_times: Vec<f64> = Vec::new();
    for i in 1..y.len() {
        if y[i - 1] < threshold && y[i] >= threshold {
            let (t0, t1) = (tr.times[i - 1], tr.times[i]);
            let t = t0 + (t1 - t0) * (threshold - y[i - 1]) / (y[i] - y[i - 1]);
            if spike_times.last().is_none_or(|&last| t - last >= refractory) {
                spike_times.push(t);
            }
        }
    }

    let count = spike_times.len();
    let win = windows(tr, &spike_times);
    let peaks: Vec<f64> = win.iter().map(|&(a, b)| y[a..b].iter().copied().fold(f64::MIN, f64::max)).collect();
    let troughs: Vec<f64> = if count >= 2 {
        win.iter().map(|&(a, b)| y[a..b].iter().copied().fold(f64::MAX, f64::min)).collect()
    } else {
        Vec::new()
    };
    let mean_period = if count >= 2 { (spike_times[count - 1] - spike_times[0]) / (count - 1) as f64 } else { 0.0 };
    let frequency = if mean_period > 0.0 { 1.0 / mean_period } else { 0.0 };
    Ok(SpikeStats {
        signal: name.to_string(),
        spike_times,
        count,
        mean_period,
        frequency,
        peak_mean: mean(&peaks),
        trough_mean: mean(&troughs),
        peaks,
        troughs,
    })
}

/// Maximum and minimum of `other` over each of `stats`' spike windows.
pub fn window_extrema(tr: &Trace, stats: &SpikeStats, other: &str) -> Result<Vec<(f64, f64)>, AnalysisError> {
    let y = signal(tr, other)?;
    Ok(windows(tr, &stats.spike_times)
        .into_iter()
        .map(|(a, b)| {
            let s = &y[a..b];
            (s.iter().copied().fold(f64::MIN, f64::max), s.iter().copied().fold(f64::MAX, f64::min))
        })
        .collect())
}

/// Dominant period from the first autocorrelation maximum past its first
/// zero, computed on a copy decimated to about 4000 samples.
pub fn estimate_period(tr: &Trace, name: &str) -> Result<Option<f64>, AnalysisError> {
    let y = signal(tr, name)?;
    if y.len() < 8 {
        return Ok(None);
    }
    let step = y.len().div_ceil(4000);
    let ys: Vec<f64> = y.iter().step_by(step).copied().collect();
    let ts: Vec<f64> = tr.times.iter().step_by(step).copied().collect();
    let m = mean(&ys);
    let z: Vec<f64> = ys.iter().map(|v| v - m).collect();
    let n = z.len();
    let r0: f64 = z.iter().map(|v| v * v).sum();
    if r0 == 0.0 {
        return Ok(None);
    }
    let ac = |lag: usize| z[..n - lag].iter().zip(&z[lag..]).map(|(a, b)| a * b).sum::<f64>() / r0;

    let max_lag = n / 2;
    let mut lag = 1;
    while lag < max_lag && ac(lag) > 0.0 {
        lag += 1;
    }
    let mut best: Option<(usize, f64)> = None;
    let mut prev = ac(lag.min(max_lag));
    for l in lag + 1..max_lag {
        let cur = ac(l);
        if cur < prev && prev > 0.0 {
            best = Some((l - 1, prev));
            break;
        }
        prev = cur;
    }
    Ok(best.map(|(l, _)| ts[l] - ts[0]))
}

/// Median inter-spike interval; unlike the mean it ignores a transient
/// first interval.
fn median_isi(s: &SpikeStats) -> f64 {
    let mut isi: Vec<f64> = s.spike_times.windows(2).map(|w| w[1] - w[0]).collect();
    isi.sort_by(f64::total_cmp);
    let m = isi.len();
    if m % 2 == 1 {
        isi[m / 2]
    } else {
        0.5 * (isi[m / 2 - 1] + isi[m / 2])
    }
}

/// Agreement of two spiking traces after normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// RMS difference over `a`'s spike amplitude (both in model units).
    pub rms_rel: f64,
    /// Spike frequency of `a` over that of `b`, both in model time and
    /// taken from the median inter-spike interval.
    pub freq_ratio: f64,
    pub spikes_a: usize,
    pub spikes_b: usize,
}

/// [`compare_traces_at`] with threshold 0 in model units.
pub fn compare_traces(a: &Trace, b: &Trace, name: &str) -> Result<Comparison, AnalysisError> {
    compare_traces_at(a, b, name, 0.0)
}

/// Compare `name` in two traces with time measured from each trace's first
/// spike in units of its median inter-spike interval, and values divided by the trace's
/// value scale. `b` is linearly resampled onto `a`'s samples; the window
/// runs from the first spike to the last spike both traces reach.
pub fn compare_traces_at(a: &Trace, b: &Trace, name: &str, threshold: f64) -> Result<Comparison, AnalysisError> {
    let stats = |tr: &Trace| -> Result<SpikeStats, AnalysisError> {
        let s = detect_spikes(tr, name, threshold * tr.value_scale, None)?;
        if s.count < 2 {
            return Err(AnalysisError::TooFewSpikes { signal: name.to_string(), count: s.count, needed: 2 });
        }
        Ok(s)
    };
    let (sa, sb) = (stats(a)?, stats(b)?);
    let ya = signal(a, name)?;
    let yb = signal(b, name)?;

    let phase_a = |t: f64| (t - sa.spike_times[0]) / median_isi(&sa);
    let phase_b = |t: f64| (t - sb.spike_times[0]) / median_isi(&sb);
    let ub: Vec<f64> = b.times.iter().map(|&t| phase_b(t)).collect();
    let end = phase_a(sa.spike_times[sa.count - 1]).min(phase_b(sb.spike_times[sb.count - 1]));

    let mut sum = 0.0;
    let mut n = 0usize;
    for (k, &t) in a.times.iter().enumerate() {
        let u = phase_a(t);
        if u < 0.0 || u > end {
            continue;
        }
        let j = ub.partition_point(|&x| x < u);
        if j == 0 || j >= ub.len() {
            continue;
        }
        let w = (u - ub[j - 1]) / (ub[j] - ub[j - 1]);
        let vb = (yb[j - 1] + w * (yb[j] - yb[j - 1])) / b.value_scale;
        let va = ya[k] / a.value_scale;
        sum += (va - vb).powi(2);
        n += 1;
    }
    let amplitude = (sa.peak_mean - sa.trough_mean) / a.value_scale;
    let rms = if n > 0 { (sum / n as f64).sqrt() } else { f64::INFINITY };
    let fa = a.time_scale / median_isi(&sa);
    let fb = b.time_scale / median_isi(&sb);
    Ok(Comparison { rms_rel: rms / amplitude, freq_ratio: fa / fb, spikes_a: sa.count, spikes_b: sb.count })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Tier, Units};

    fn sampled(f: impl Fn(f64) -> f64, t_end: f64, dt: f64) -> Trace {
        let mut tr = Trace::new(&["x".to_string()], Units::Dimensionless, Tier::Reference, 1.0, 1.0);
        let n = (t_end / dt).round() as usize;
        for k in 0..=n {
            let t = k as f64 * dt;
            tr.push(t, [f(t)]);
        }
        tr
    }

    #[test]
    fn constant_has_no_spikes() {
        let tr = sampled(|_| 0.3, 5.0, 0.01);
        let s = detect_spikes(&tr, "x", 0.0, None).unwrap();
        assert_eq!((s.count, s.frequency), (0, 0.0));
    }

    #[test]
    fn sine_frequency() {
        let dt = 1e-3;
        let tr = sampled(|t| (2.0 * std::f64::consts::PI * t).sin(), 10.0, dt);
        let s = detect_spikes(&tr, "x", 0.0, Some(0.5)).unwrap();
        assert!((s.frequency - 1.0).abs() < dt, "{}", s.frequency);
        assert!((s.peak_mean - 1.0).abs() < 1e-4);
        let auto = detect_spikes(&tr, "x", 0.0, None).unwrap();
        assert_eq!(auto.count, s.count);
        assert!((estimate_period(&tr, "x").unwrap().unwrap() - 1.0).abs() < 0.01);
    }

    #[test]
    fn missing_signal() {
        let tr = sampled(|t| t, 1.0, 0.1);
        assert!(matches!(detect_spikes(&tr, "y", 0.0, None), Err(AnalysisError::MissingSignal(_))));
        assert!(matches!(detect_spikes(&tr, "x", 0.0, Some(0.0)), Err(AnalysisError::InvalidRefractory(_))));
    }

    #[test]
    fn self_and_dilated_comparison() {
        let f = |t: f64| (2.0 * std::f64::consts::PI * t).sin().powi(3);
        let a = sampled(f, 12.0, 1e-3);
        let same = compare_traces(&a, &a, "x").unwrap();
        assert!(same.rms_rel < 1e-15);
        assert_eq!(same.freq_ratio, 1.0);

        let b = sampled(|t| f(t / 2.5), 30.0, 2.5e-3);
        let c = compare_traces(&a, &b, "x").unwrap();
        assert!(c.rms_rel < 1e-6, "{}", c.rms_rel);
        assert!((c.freq_ratio - 2.5).abs() < 1e-6);
    }

    #[test]
    fn too_few_spikes() {
        let a = sampled(|t| t - 0.5, 1.0, 0.01);
        assert!(matches!(compare_traces(&a, &a, "x"), Err(AnalysisError::TooFewSpikes { count: 1, .. })));
    }
}
