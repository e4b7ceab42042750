//! Post-run measurements: reaction times, evoked responses, the selection
//! indicator, the two-neuron pair model and run summaries.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::embodiment::{EventKind, StimEvent};
use crate::error::{Error, Result};
use crate::experiment::RunResult;
use crate::network::SpikeRaster;
use crate::plasticity::{stdp_delta_w, StdpParams, WeightBounds};

/// Default relative shortening of reaction times that counts as learning.
pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 0.30;

/// Window (ms) for responses of non-input neurons.
pub const EVOKED_WINDOW_MS: f64 = 200.0;
/// Window (ms) for responses of the stimulated neurons themselves.
pub const EVOKED_INPUT_WINDOW_MS: f64 = 50.0;

/// Durations of the completed stimulation episodes in `events`.
///
/// An episode runs from a `removal_off` event to the next `removal_on`.
/// An episode still open at the end of the log is dropped.
pub fn compute_reaction_times(events: &[StimEvent]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut onset: Option<f64> = None;
    let mut last_t = f64::NEG_INFINITY;
    for (i, e) in events.iter().enumerate() {
        if !e.time_ms.is_finite() || e.time_ms < last_t {
            return Err(Error::Analysis(format!(
                "event {i} at {} ms is out of order",
                e.time_ms
            )));
        }
        last_t = e.time_ms;
        match e.kind {
            EventKind::Pulse => {}
            EventKind::RemovalOff => {
                if onset.is_some() {
                    return Err(Error::Analysis(format!(
                        "event {i}: stimulation resumed twice without removal"
                    )));
                }
                onset = Some(e.time_ms);
            }
            EventKind::RemovalOn => match onset.take() {
                Some(t0) => out.push(e.time_ms - t0),
                None => {
                    return Err(Error::Analysis(format!(
                        "event {i}: removal without an active episode"
                    )))
                }
            },
        }
    }
    Ok(out)
}

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub n: usize,
    pub mean: f64,
    /// `None` when fewer than two samples exist.
    pub stderr: Option<f64>,
}

impl SampleStats {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = (n > 1).then(|| {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        });
        Some(SampleStats { n, mean, stderr })
    }
}

/// Spikes of `group` per stimulus, counted in `(pulse, pulse + window]` and
/// cut short at the following pulse.
pub fn compute_evoked_rates(
    raster: &SpikeRaster,
    pulses: &[f64],
    window_ms: f64,
    group: Range<usize>,
) -> Result<SampleStats> {
    if !(window_ms.is_finite() && window_ms > 0.0) {
        return Err(Error::Analysis(format!("window must be > 0, got {window_ms}")));
    }
    if pulses.is_empty() {
        return Err(Error::Analysis("no pulses to align responses to".into()));
    }
    if !pulses.is_sorted() {
        return Err(Error::Analysis("pulse times must be non-decreasing".into()));
    }
    let times: Vec<f64> = raster
        .events()
        .iter()
        .filter(|e| group.contains(&e.neuron))
        .map(|e| e.time_ms)
        .collect();
    let upto = |t: f64| times.partition_point(|&x| x <= t);
    let counts: Vec<f64> = pulses
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let mut end = p + window_ms;
            if let Some(&next) = pulses.get(k + 1) {
                end = end.min(next);
            }
            upto(end).saturating_sub(upto(p)) as f64
        })
        .collect();
    Ok(SampleStats::of(&counts).expect("pulses is non-empty"))
}

/// Mean over runs of the final mean input weight.
pub fn mean_final_input_weight(runs: &[RunResult]) -> Result<f64> {
    if runs.is_empty() {
        return Err(Error::Analysis("empty run set".into()));
    }
    let mut sum = 0.0;
    for r in runs {
        if let Some(f) = &r.fault {
            return Err(Error::Analysis(format!("run with seed {} is invalid: {f}", r.spec.seed)));
        }
        sum += r
            .final_mean_input_weight()
            .ok_or_else(|| Error::Analysis("run without weight snapshots".into()))?;
    }
    Ok(sum / runs.len() as f64)
}

/// Gap between the final input weights of the closed-loop and open-loop
/// run sets.
pub fn compute_selection_indicator(closed: &[RunResult], open: &[RunResult]) -> Result<f64> {
    if let Some(first) = closed.first().or(open.first()) {
        let net = &first.spec.network;
        if closed.iter().chain(open).any(|r| &r.spec.network != net) {
            return Err(Error::Analysis(
                "runs compared by the selection indicator use different networks".into(),
            ));
        }
    }
    Ok(mean_final_input_weight(closed)? - mean_final_input_weight(open)?)
}

/// The selection indicator from per-run final weights.
pub fn selection_indicator_from_finals(closed: &[f64], open: &[f64]) -> Result<f64> {
    let c = SampleStats::of(closed).ok_or_else(|| Error::Analysis("empty closed set".into()))?;
    let o = SampleStats::of(open).ok_or_else(|| Error::Analysis("empty open set".into()))?;
    Ok(c.mean - o.mean)
}

/// Lowest stimulation frequency (Hz) at which a pair with these windows
/// depresses the connection of a regularly firing presynaptic neuron.
pub fn min_selection_frequency(params: &StdpParams) -> Result<f64> {
    params.validate()?;
    Ok(1000.0 / (params.tau_ltp + params.tau_ltd))
}

/// Whether reaction times shortened by at least `threshold` (a fraction of
/// the earlier mean).
pub fn success_rate(pre: &[f64], post: &[f64], threshold: f64) -> Result<bool> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Analysis(format!("threshold must lie in [0, 1], got {threshold}")));
    }
    let pre = SampleStats::of(pre).ok_or_else(|| Error::Analysis("empty pre window".into()))?;
    let post = SampleStats::of(post).ok_or_else(|| Error::Analysis("empty post window".into()))?;
    if pre.mean <= 0.0 {
        return Err(Error::Analysis("pre window mean must be positive".into()));
    }
    let decrease = (pre.mean - post.mean) / pre.mean;
    Ok(decrease >= threshold - 1e-12)
}

/// Two neurons joined by one plastic connection, driven by a scripted
/// alternating schedule: pre, post `dt_p_ms` later, next pre `dt_d_ms` after
/// that, and so on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSchedule {
    pub dt_p_ms: f64,
    pub dt_d_ms: f64,
    pub cycles: usize,
}

impl PairSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_p_ms.is_finite() && self.dt_p_ms > 0.0)
            || !(self.dt_d_ms.is_finite() && self.dt_d_ms > 0.0)
        {
            return Err(Error::Config(format!(
                "pair intervals must be > 0, got ({}, {})",
                self.dt_p_ms, self.dt_d_ms
            )));
        }
        Ok(())
    }

    pub fn period_ms(&self) -> f64 {
        self.dt_p_ms + self.dt_d_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub cycle: usize,
    pub time_ms: f64,
    pub weight: f64,
}

/// Weight after every cycle of the schedule, starting with the initial
/// weight at cycle 0. Each post spike pairs with the latest pre spike and
/// each pre spike with the latest post spike. No noise or decay acts.
pub fn run_minimal_pair(
    params: &StdpParams,
    bounds: &WeightBounds,
    initial_weight: f64,
    schedule: &PairSchedule,
) -> Result<Vec<PairSample>> {
    params.validate()?;
    bounds.validate()?;
    schedule.validate()?;
    let ltp = stdp_delta_w(schedule.dt_p_ms, params);
    let ltd = stdp_delta_w(-schedule.dt_d_ms, params);
    let mut w = bounds.clamp(initial_weight);
    let mut out = Vec::with_capacity(schedule.cycles + 1);
    out.push(PairSample {
        cycle: 0,
        time_ms: 0.0,
        weight: w,
    });
    for cycle in 1..=schedule.cycles {
        w = bounds.clamp(w + ltp);
        // the first pre spike has no earlier post to pair with
        w = bounds.clamp(w + ltd);
        out.push(PairSample {
            cycle,
            time_ms: cycle as f64 * schedule.period_ms(),
            weight: w,
        });
    }
    Ok(out)
}

/// Per-run metrics written next to the recorded tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub duration_ms: f64,
    pub completed_ms: f64,
    pub valid: bool,
    pub n_spikes: usize,
    /// Mean firing rate per neuron (Hz).
    pub mean_rate_hz: f64,
    pub n_pulses: usize,
    pub n_removals: usize,
    pub reaction_times: Option<SampleStats>,
    /// Input-group spikes per pulse.
    pub evoked_input: Option<SampleStats>,
    /// Spikes of all other neurons per pulse.
    pub evoked_other: Option<SampleStats>,
    pub initial_mean_input_weight: Option<f64>,
    pub final_mean_input_weight: Option<f64>,
    pub final_input_to_output: Option<f64>,
    pub final_input_to_hidden: Option<f64>,
    pub final_mean_plastic_weight: Option<f64>,
}

pub fn summarize(result: &RunResult) -> Result<RunSummary> {
    let cfg = &result.spec.network;
    let n = cfg.n_neurons();
    let pulses = result.pulse_times();
    let reactions = compute_reaction_times(&result.events)?;
    let (evoked_input, evoked_other) = if pulses.is_empty() {
        (None, None)
    } else {
        let input = cfg.input_group();
        let inp = compute_evoked_rates(&result.raster, &pulses, EVOKED_INPUT_WINDOW_MS, input.clone())?;
        let other = compute_evoked_rates(&result.raster, &pulses, EVOKED_WINDOW_MS, input.end..n)?;
        (Some(inp), Some(other))
    };
    let last = result.snapshots.last();
    let mean_rate_hz = if result.completed_ms > 0.0 {
        result.raster.len() as f64 / n as f64 / (result.completed_ms / 1000.0)
    } else {
        0.0
    };
    Ok(RunSummary {
        seed: result.spec.seed,
        duration_ms: result.spec.duration_ms,
        completed_ms: result.completed_ms,
        valid: result.is_valid(),
        n_spikes: result.raster.len(),
        mean_rate_hz,
        n_pulses: pulses.len(),
        n_removals: result
            .events
            .iter()
            .filter(|e| e.kind == EventKind::RemovalOn)
            .count(),
        reaction_times: SampleStats::of(&reactions),
        evoked_input,
        evoked_other,
        initial_mean_input_weight: result.initial_mean_input_weight(),
        final_mean_input_weight: result.final_mean_input_weight(),
        final_input_to_output: last.map(|s| s.input_to_output),
        final_input_to_hidden: last.map(|s| s.input_to_hidden),
        final_mean_plastic_weight: last.map(|s| s.mean_plastic_weight),
    })
}
