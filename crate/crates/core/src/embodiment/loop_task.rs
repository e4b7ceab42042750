//! One-dimensional stimulation-avoidance task.
//!
//! The input group is pulsed at a fixed frequency while stimulation is
//! active. In the closed-loop mode the stimulation is switched off when enough
//! distinct output neurons respond within the window after a pulse; in the
//! open-loop mode it is switched off at random after pulses, independently of
//! the network. A yoked mode replays a recorded removal schedule.

use std::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EventKind, StimEvent};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopMode {
    #[default]
    Closed,
    Open,
    /// Replay of `yoked_schedule`.
    Yoked,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemovalWindow {
    pub start_ms: f64,
    pub end_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopTaskConfig {
    pub stim_frequency_hz: f64,
    pub stim_amplitude: f64,
    pub response_window_ms: f64,
    /// Minimum number of distinct output neurons that must fire inside the
    /// response window to stop the stimulation.
    pub response_quorum: usize,
    pub removal_duration_ms: (f64, f64),
    pub mode: LoopMode,
    /// Per-pulse removal probability in the open-loop mode.
    pub open_removal_probability: f64,
    /// Removal windows replayed in the yoked mode.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub yoked_schedule: Vec<RemovalWindow>,
}

impl Default for LoopTaskConfig {
    fn default() -> Self {
        LoopTaskConfig {
            stim_frequency_hz: 100.0,
            stim_amplitude: 10.0,
            response_window_ms: 10.0,
            response_quorum: 6,
            removal_duration_ms: (1000.0, 2000.0),
            mode: LoopMode::Closed,
            open_removal_probability: 0.02,
            yoked_schedule: Vec::new(),
        }
    }
}

impl LoopTaskConfig {
    pub fn validate(&self, output_group_size: usize) -> Result<()> {
        if !(self.stim_frequency_hz.is_finite() && self.stim_frequency_hz > 0.0) {
            return Err(Error::Config(format!(
                "stim_frequency_hz must be > 0, got {}",
                self.stim_frequency_hz
            )));
        }
        if !self.stim_amplitude.is_finite() {
            return Err(Error::Config("stim_amplitude must be finite".into()));
        }
        if !(self.response_window_ms.is_finite() && self.response_window_ms > 0.0) {
            return Err(Error::Config(format!(
                "response_window_ms must be > 0, got {}",
                self.response_window_ms
            )));
        }
        if self.response_quorum == 0 || self.response_quorum > output_group_size {
            return Err(Error::Config(format!(
                "response_quorum must lie in 1..={output_group_size}, got {}",
                self.response_quorum
            )));
        }
        let (lo, hi) = self.removal_duration_ms;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(Error::Config(format!(
                "removal_duration_ms must be a positive range, got ({lo}, {hi})"
            )));
        }
        if !(0.0..=1.0).contains(&self.open_removal_probability) {
            return Err(Error::Config(format!(
                "open_removal_probability must lie in [0, 1], got {}",
                self.open_removal_probability
            )));
        }
        if self.mode != LoopMode::Yoked && !self.yoked_schedule.is_empty() {
            return Err(Error::Config(
                "yoked_schedule is only used in the yoked mode".into(),
            ));
        }
        if self.mode == LoopMode::Yoked {
            let mut prev_end = f64::NEG_INFINITY;
            for w in &self.yoked_schedule {
                if !(w.start_ms.is_finite() && w.start_ms < w.end_ms && w.start_ms >= prev_end) {
                    return Err(Error::Config(
                        "yoked schedule must be ordered, non-overlapping windows".into(),
                    ));
                }
                prev_end = w.end_ms;
            }
        }
        Ok(())
    }

    pub fn pulse_period_ms(&self) -> f64 {
        1000.0 / self.stim_frequency_hz
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulationState {
    pub active: bool,
    pub removal_until: f64,
    pub last_pulse_time: Option<f64>,
    pub event_log: Vec<StimEvent>,
}

impl StimulationState {
    fn log(&mut self, time_ms: f64, kind: EventKind) {
        self.event_log.push(StimEvent { time_ms, kind });
    }
}

/// Stateful closed/open/yoked stimulation protocol.
#[derive(Debug, Clone)]
pub struct LoopTask {
    config: LoopTaskConfig,
    input: Range<usize>,
    output: Range<usize>,
    state: StimulationState,
    responders: Vec<bool>,
    n_responders: usize,
    removal_pending: bool,
    next_pulse: f64,
    yoke_cursor: usize,
    rng: ChaCha8Rng,
    half_step: f64,
}

impl LoopTask {
    pub fn new(
        config: LoopTaskConfig,
        input: Range<usize>,
        output: Range<usize>,
        dt_ms: f64,
        seed: u64,
    ) -> Result<Self> {
        config.validate(output.len())?;
        let n_out = output.len();
        Ok(LoopTask {
            config,
            input,
            output,
            state: StimulationState {
                active: false,
                removal_until: 0.0,
                last_pulse_time: None,
                event_log: Vec::new(),
            },
            responders: vec![false; n_out],
            n_responders: 0,
            removal_pending: false,
            next_pulse: 0.0,
            yoke_cursor: 0,
            rng: rng::seeded(seed),
            half_step: 0.5 * dt_ms,
        })
    }

    pub fn config(&self) -> &LoopTaskConfig {
        &self.config
    }

    pub fn state(&self) -> &StimulationState {
        &self.state
    }

    pub fn input_group(&self) -> Range<usize> {
        self.input.clone()
    }

    pub fn into_events(self) -> Vec<StimEvent> {
        self.state.event_log
    }

    /// Decides the stimulation for the step starting at `now` and returns the
    /// amplitude to apply to every input neuron (0 when no pulse is due).
    pub fn drive(&mut self, now: f64) -> f64 {
        if self.state.event_log.is_empty() && !self.state.active {
            self.start_episode(now);
        }
        if !self.state.active && now + self.half_step >= self.state.removal_until {
            self.start_episode(now);
        }
        if self.config.mode == LoopMode::Yoked && self.state.active {
            if let Some(w) = self.config.yoked_schedule.get(self.yoke_cursor) {
                if now + self.half_step >= w.start_ms {
                    self.removal_pending = true;
                }
            }
        }
        if self.removal_pending {
            return 0.0;
        }
        if self.state.active && now + self.half_step >= self.next_pulse {
            self.state.log(now, EventKind::Pulse);
            self.state.last_pulse_time = Some(now);
            self.next_pulse = now + self.config.pulse_period_ms();
            self.responders.iter_mut().for_each(|r| *r = false);
            self.n_responders = 0;
            if self.config.mode == LoopMode::Open
                && self.rng.random_bool(self.config.open_removal_probability)
            {
                self.removal_pending = true;
            }
            return self.config.stim_amplitude;
        }
        0.0
    }

    /// Feeds the spikes of the step that ran at time `t` and applies any
    /// removal they (or a pending random removal) trigger.
    pub fn observe(&mut self, t: f64, spiking: &[usize]) {
        if !self.state.active {
            return;
        }
        if self.removal_pending {
            self.remove(t);
            return;
        }
        if self.config.mode != LoopMode::Closed {
            return;
        }
        let Some(pulse) = self.state.last_pulse_time else {
            return;
        };
        let in_window = t > pulse && t <= pulse + self.config.response_window_ms + self.half_step;
        if !in_window {
            return;
        }
        for &i in spiking {
            if self.output.contains(&i) {
                let slot = &mut self.responders[i - self.output.start];
                if !*slot {
                    *slot = true;
                    self.n_responders += 1;
                }
            }
        }
        if self.n_responders >= self.config.response_quorum {
            self.remove(t);
        }
    }

    /// Convenience wrapper: observe the previous step's spikes, then drive the
    /// current step.
    pub fn step(&mut self, now: f64, dt_ms: f64, prev_spikes: &[usize]) -> f64 {
        if now > 0.0 {
            self.observe(now - dt_ms, prev_spikes);
        }
        self.drive(now)
    }

    fn start_episode(&mut self, now: f64) {
        self.state.active = true;
        self.state.log(now, EventKind::RemovalOff);
        self.next_pulse = now;
    }

    fn remove(&mut self, t: f64) {
        self.removal_pending = false;
        self.state.active = false;
        self.state.log(t, EventKind::RemovalOn);
        self.state.removal_until = match self.config.mode {
            LoopMode::Yoked => {
                let end = self.config.yoked_schedule[self.yoke_cursor].end_ms;
                self.yoke_cursor += 1;
                end
            }
            _ => {
                let (lo, hi) = self.config.removal_duration_ms;
                let d = if hi > lo {
                    self.rng.random_range(lo..=hi)
                } else {
                    lo
                };
                t + d
            }
        };
    }
}

/// Extracts `(removal_on, removal_off)` windows from an event log, suitable
/// for replaying as a yoked control. A trailing open removal is closed at
/// `run_end_ms`.
pub fn removal_schedule(events: &[StimEvent], run_end_ms: f64) -> Vec<RemovalWindow> {
    let mut out = Vec::new();
    let mut open: Option<f64> = None;
    for e in events {
        match e.kind {
            EventKind::RemovalOn => open = Some(e.time_ms),
            EventKind::RemovalOff => {
                if let Some(start) = open.take() {
                    out.push(RemovalWindow {
                        start_ms: start,
                        end_ms: e.time_ms,
                    });
                }
            }
            EventKind::Pulse => {}
        }
    }
    if let Some(start) = open {
        out.push(RemovalWindow {
            start_ms: start,
            end_ms: run_end_ms.max(start + f64::EPSILON),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const DT: f64 = 0.5;

    fn task(mode: LoopMode, p: f64) -> LoopTask {
        let cfg = LoopTaskConfig {
            mode,
            open_removal_probability: p,
            ..LoopTaskConfig::default()
        };
        LoopTask::new(cfg, 0..10, 10..20, DT, 7).unwrap()
    }

    fn count(t: &LoopTask, kind: EventKind) -> usize {
        t.state().event_log.iter().filter(|e| e.kind == kind).count()
    }

    /// Runs `steps` steps; `spikes_at(step)` gives the spikes of that step.
    fn run(t: &mut LoopTask, steps: usize, spikes_at: impl Fn(usize) -> Vec<usize>) {
        for k in 0..steps {
            let now = k as f64 * DT;
            t.drive(now);
            t.observe(now, &spikes_at(k));
        }
    }

    #[test]
    fn six_distinct_responders_trigger_removal() {
        let mut t = task(LoopMode::Closed, 0.0);
        run(&mut t, 20, |k| if k == 4 { (10..16).collect() } else { vec![] });
        assert_eq!(count(&t, EventKind::RemovalOn), 1);
        assert!(!t.state().active);
    }

    #[test]
    fn five_responders_do_not() {
        let mut t = task(LoopMode::Closed, 0.0);
        run(&mut t, 20, |k| if k == 4 { (10..15).collect() } else { vec![] });
        assert_eq!(count(&t, EventKind::RemovalOn), 0);
    }

    #[test]
    fn responders_spread_over_the_window_count() {
        let mut t = task(LoopMode::Closed, 0.0);
        run(&mut t, 20, |k| if (1..=6).contains(&k) { vec![9 + k] } else { vec![] });
        assert_eq!(count(&t, EventKind::RemovalOn), 1);
    }

    #[test]
    fn repeated_spikes_of_one_neuron_never_trigger() {
        let mut t = task(LoopMode::Closed, 0.0);
        run(&mut t, 2000, |_| vec![12]);
        assert_eq!(count(&t, EventKind::RemovalOn), 0);
    }

    #[test]
    fn input_spikes_are_not_responses() {
        let mut t = task(LoopMode::Closed, 0.0);
        run(&mut t, 200, |_| (0..10).collect());
        assert_eq!(count(&t, EventKind::RemovalOn), 0);
    }

    #[test]
    fn pulses_follow_the_frequency() {
        let mut t = task(LoopMode::Closed, 0.0);
        run(&mut t, 2000, |_| vec![]);
        // 1000 ms at 100 Hz
        assert_eq!(count(&t, EventKind::Pulse), 100);
        let times: Vec<f64> = t
            .state()
            .event_log
            .iter()
            .filter(|e| e.kind == EventKind::Pulse)
            .map(|e| e.time_ms)
            .collect();
        assert!(times.windows(2).all(|w| (w[1] - w[0] - 10.0).abs() < 1e-9));
    }

    #[test]
    fn open_loop_boundary_probabilities() {
        let mut never = task(LoopMode::Open, 0.0);
        run(&mut never, 20_000, |_| vec![]);
        assert_eq!(count(&never, EventKind::RemovalOn), 0);

        let mut always = task(LoopMode::Open, 1.0);
        run(&mut always, 2, |_| vec![]);
        let log = &always.state().event_log;
        assert_eq!(log[1].kind, EventKind::Pulse);
        assert_eq!(log[2].kind, EventKind::RemovalOn);
    }

    #[test]
    fn open_loop_ignores_responses() {
        let mut t = task(LoopMode::Open, 0.0);
        run(&mut t, 200, |_| (10..20).collect());
        assert_eq!(count(&t, EventKind::RemovalOn), 0);
    }

    #[test]
    fn no_pulse_during_removal_and_duration_in_range() {
        let mut t = task(LoopMode::Open, 0.05);
        run(&mut t, 40_000, |_| vec![]);
        let log = &t.state().event_log;
        let mut active = false;
        let mut off_at = 0.0;
        let mut n = 0;
        for e in log {
            match e.kind {
                EventKind::Pulse => assert!(active, "pulse at {} during removal", e.time_ms),
                EventKind::RemovalOn => {
                    active = false;
                    off_at = e.time_ms;
                }
                EventKind::RemovalOff => {
                    if n > 0 {
                        let d = e.time_ms - off_at;
                        assert!((1000.0 - DT..=2000.0 + DT).contains(&d), "{d}");
                    }
                    n += 1;
                    active = true;
                }
            }
        }
        assert!(n > 3);
    }

    #[test]
    fn yoked_replays_schedule() {
        let sched = vec![
            RemovalWindow { start_ms: 100.0, end_ms: 300.0 },
            RemovalWindow { start_ms: 500.0, end_ms: 520.0 },
        ];
        let cfg = LoopTaskConfig {
            mode: LoopMode::Yoked,
            yoked_schedule: sched.clone(),
            ..LoopTaskConfig::default()
        };
        let mut t = LoopTask::new(cfg, 0..10, 10..20, DT, 7).unwrap();
        run(&mut t, 2000, |_| (10..20).collect());
        let got = removal_schedule(&t.state().event_log, 1000.0);
        assert_eq!(got.len(), 2);
        for (g, w) in got.iter().zip(&sched) {
            assert!((g.start_ms - w.start_ms).abs() <= DT);
            assert!((g.end_ms - w.end_ms).abs() <= DT);
        }
    }

    #[test]
    fn quorum_above_group_size_is_rejected() {
        let cfg = LoopTaskConfig {
            response_quorum: 11,
            ..LoopTaskConfig::default()
        };
        assert!(LoopTask::new(cfg, 0..10, 10..20, DT, 0).is_err());
    }

    #[test]
    fn schedule_closes_trailing_removal() {
        let ev = [
            StimEvent { time_ms: 0.0, kind: EventKind::RemovalOff },
            StimEvent { time_ms: 40.0, kind: EventKind::RemovalOn },
        ];
        assert_eq!(
            removal_schedule(&ev, 90.0),
            vec![RemovalWindow { start_ms: 40.0, end_ms: 90.0 }]
        );
    }
}
