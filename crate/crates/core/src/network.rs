//! Fully connected excitatory/inhibitory network and its per-step update.
//!
//! Neurons are laid out excitatory first: `[input | output | hidden | inhibitory]`.
//! Weights are stored row-major by presynaptic neuron, so `w[j * n + i]` is
//! the connection from `j` to `i`.

use std::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuron::{step_neuron_coupled, InputCoupling, IzhikevichParams, NeuronState, TimeStep};
use crate::plasticity::{
    stdp_delta_w, stp_scale, stp_step, DecayParams, StdpParams, StpParams, StpState,
    WeightBounds,
};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub n_excitatory: usize,
    pub n_inhibitory: usize,
    pub n_input: usize,
    pub n_output: usize,
    pub n_hidden: usize,
    /// Standard deviation of the per-step Gaussian noise input.
    pub noise_sigma: f64,
    /// Open interval initial weights of excitatory outgoing connections are drawn from.
    pub excitatory_weight_range: (f64, f64),
    pub inhibitory_weight_range: (f64, f64),
    pub dt_ms: TimeStep,
    pub input_coupling: InputCoupling,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            n_excitatory: 80,
            n_inhibitory: 20,
            n_input: 10,
            n_output: 10,
            n_hidden: 60,
            noise_sigma: 3.0,
            excitatory_weight_range: (0.0, 5.0),
            inhibitory_weight_range: (-5.0, 0.0),
            dt_ms: TimeStep::default(),
            input_coupling: InputCoupling::default(),
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_input + self.n_output + self.n_hidden != self.n_excitatory {
            return Err(Error::Config(format!(
                "input + output + hidden ({} + {} + {}) must equal n_excitatory ({})",
                self.n_input, self.n_output, self.n_hidden, self.n_excitatory
            )));
        }
        if self.n_input == 0 {
            return Err(Error::Config("input group must not be empty".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        for (name, (lo, hi)) in [
            ("excitatory_weight_range", self.excitatory_weight_range),
            ("inhibitory_weight_range", self.inhibitory_weight_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "{name} must be a non-empty finite interval, got ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }

    pub fn n_neurons(&self) -> usize {
        self.n_excitatory + self.n_inhibitory
    }

    pub fn input_group(&self) -> Range<usize> {
        0..self.n_input
    }

    pub fn output_group(&self) -> Range<usize> {
        self.n_input..self.n_input + self.n_output
    }

    pub fn hidden_group(&self) -> Range<usize> {
        self.n_input + self.n_output..self.n_excitatory
    }

    pub fn excitatory(&self) -> Range<usize> {
        0..self.n_excitatory
    }

    pub fn inhibitory(&self) -> Range<usize> {
        self.n_excitatory..self.n_neurons()
    }
}

/// Precomputed STDP kernel indexed by spike-time difference in whole steps.
#[derive(Debug, Clone)]
pub struct StdpKernel {
    ltp: Vec<f64>,
    ltd: Vec<f64>,
}

impl StdpKernel {
    pub fn new(params: &StdpParams, dt: TimeStep) -> Self {
        let max_steps = (params.pairing_cutoff() / dt.ms()).floor() as usize;
        let ltp = (0..=max_steps)
            .map(|k| stdp_delta_w(k as f64 * dt.ms(), params))
            .collect();
        let ltd = (0..=max_steps)
            .map(|k| stdp_delta_w(-(k as f64) * dt.ms(), params))
            .collect();
        StdpKernel { ltp, ltd }
    }

    /// Potentiation for a post spike `steps` after the pre spike.
    #[inline]
    fn potentiation(&self, steps: u64) -> Option<f64> {
        self.ltp.get(steps as usize).copied()
    }

    /// Depression (negative) for a pre spike `steps` after the post spike.
    #[inline]
    fn depression(&self, steps: u64) -> Option<f64> {
        self.ltd.get(steps as usize).copied()
    }
}

/// Dense weight matrix with a plastic excitatory block.
///
/// Decay of the plastic block is applied lazily through a shared scale
/// factor: the effective plastic weight is `stored * scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynapseMatrix {
    n: usize,
    n_plastic: usize,
    w: Vec<f64>,
    scale: f64,
    last_spike_step: Vec<Option<u64>>,
}

const RENORMALIZE_BELOW: f64 = 0.25;

impl SynapseMatrix {
    /// Matrix of `n` neurons where connections among the first `n_plastic`
    /// (excluding self-connections) are plastic.
    pub fn from_weights(n: usize, n_plastic: usize, w: Vec<f64>) -> Result<Self> {
        if w.len() != n * n || n_plastic > n {
            return Err(Error::Config(format!(
                "weight matrix of length {} does not match {n} neurons",
                w.len()
            )));
        }
        if (0..n).any(|i| w[i * n + i] != 0.0) {
            return Err(Error::Config("self-connections must be zero".into()));
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("weights must be finite".into()));
        }
        Ok(SynapseMatrix {
            n,
            n_plastic,
            w,
            scale: 1.0,
            last_spike_step: vec![None; n],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_plastic(&self) -> usize {
        self.n_plastic
    }

    #[inline]
    fn in_plastic_block(&self, pre: usize, post: usize) -> bool {
        pre < self.n_plastic && post < self.n_plastic
    }

    #[inline]
    pub fn weight(&self, pre: usize, post: usize) -> f64 {
        let w = self.w[pre * self.n + post];
        if self.in_plastic_block(pre, post) {
            w * self.scale
        } else {
            w
        }
    }

    /// Overwrites one effective weight.
    pub fn set_weight(&mut self, pre: usize, post: usize, value: f64) {
        let stored = if self.in_plastic_block(pre, post) {
            store_scaled(value, self.scale)
        } else {
            value
        };
        self.w[pre * self.n + post] = stored;
    }

    /// Effective weights, row-major by presynaptic neuron.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.n;
        (0..n * n).map(|k| self.weight(k / n, k % n)).collect()
    }

    /// Adds `input_scale * w[pre][i]` to `current[i]` for every `i`.
    #[inline]
    pub fn accumulate_row(&self, pre: usize, input_scale: f64, current: &mut [f64]) {
        let row = &self.w[pre * self.n..(pre + 1) * self.n];
        let split = if pre < self.n_plastic { self.n_plastic } else { 0 };
        let plastic_scale = input_scale * self.scale;
        let (head, tail) = current.split_at_mut(split);
        for (c, w) in head.iter_mut().zip(&row[..split]) {
            *c += w * plastic_scale;
        }
        for (c, w) in tail.iter_mut().zip(&row[split..]) {
            *c += w * input_scale;
        }
    }

    #[inline]
    pub fn is_plastic(&self, pre: usize, post: usize) -> bool {
        pre != post && self.in_plastic_block(pre, post)
    }

    pub fn last_spike_step(&self, neuron: usize) -> Option<u64> {
        self.last_spike_step[neuron]
    }

    #[inline]
    fn bump(&mut self, idx: usize, dw: f64, bounds: &WeightBounds) {
        let real = bounds.clamp(self.w[idx] * self.scale + dw);
        self.w[idx] = store_scaled(real, self.scale);
    }

    /// Nearest-neighbour pair-based STDP for the neurons spiking at step `now`.
    ///
    /// Every spiking plastic neuron is paired, as postsynaptic partner, with the
    /// most recent spike of each plastic presynaptic neuron and, as
    /// presynaptic partner, with the most recent spike of each plastic
    /// postsynaptic neuron. Spike times are recorded first, so neurons spiking
    /// in the same step pair at zero lag and contribute nothing.
    pub fn apply_stdp_on_spikes(
        &mut self,
        spiking: &[usize],
        now: u64,
        kernel: &StdpKernel,
        bounds: &WeightBounds,
    ) {
        for &k in spiking {
            self.last_spike_step[k] = Some(now);
        }
        let n = self.n;
        for &k in spiking {
            if k >= self.n_plastic {
                continue;
            }
            for j in 0..self.n_plastic {
                if j == k {
                    continue;
                }
                let Some(t_j) = self.last_spike_step[j] else {
                    continue;
                };
                let lag = now - t_j;
                if lag == 0 {
                    continue;
                }
                // k is post, j is pre: t_post - t_pre = lag > 0
                if let Some(dw) = kernel.potentiation(lag) {
                    self.bump(j * n + k, dw, bounds);
                }
                // k is pre, j is post: t_post - t_pre = -lag
                if let Some(dw) = kernel.depression(lag) {
                    self.bump(k * n + j, dw, bounds);
                }
            }
        }
    }

    /// Multiplies every plastic weight by `1 - mu`.
    pub fn apply_decay(&mut self, decay: &DecayParams, bounds: &WeightBounds) {
        if decay.mu == 0.0 {
            return;
        }
        self.scale *= decay.factor();
        if self.scale < RENORMALIZE_BELOW {
            let (n, m, g) = (self.n, self.n_plastic, self.scale);
            for j in 0..m {
                for w in &mut self.w[j * n..j * n + m] {
                    *w = bounds.clamp(*w * g);
                }
            }
            self.scale = 1.0;
        }
    }

    /// Mean of the plastic weights leaving `pre_group` towards `post_group`.
    pub fn mean_weight(&self, pre_group: Range<usize>, post_group: Range<usize>) -> Result<f64> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for j in pre_group {
            for i in post_group.clone() {
                if self.is_plastic(j, i) {
                    sum += self.weight(j, i);
                    count += 1;
                }
            }
        }
        if count == 0 {
            return Err(Error::Config("no plastic connections in group".into()));
        }
        Ok(sum / count as f64)
    }
}

/// Stored value whose product with `scale` does not exceed `real`.
#[inline]
fn store_scaled(real: f64, scale: f64) -> f64 {
    let mut stored = real / scale;
    if stored * scale > real {
        stored = stored.next_down();
    }
    stored
}

/// Per-neuron external input for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalDrive {
    /// Stimulation.
    pub e: Vec<f64>,
    /// Noise.
    pub m: Vec<f64>,
}

impl ExternalDrive {
    pub fn zeros(n: usize) -> Self {
        ExternalDrive {
            e: vec![0.0; n],
            m: vec![0.0; n],
        }
    }

    pub fn clear_stimulation(&mut self) {
        self.e.iter_mut().for_each(|x| *x = 0.0);
    }

    pub fn stimulate(&mut self, neurons: Range<usize>, amplitude: f64) {
        for i in neurons {
            self.e[i] += amplitude;
        }
    }
}

/// Zero-mean Gaussian noise drawn in ascending neuron order.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    rng: ChaCha8Rng,
    normal: Option<Normal<f64>>,
}

impl NoiseSource {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        let normal = if sigma > 0.0 {
            Some(Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?)
        } else {
            None
        };
        Ok(NoiseSource {
            rng: rng::seeded(seed),
            normal,
        })
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        match &self.normal {
            Some(normal) => out
                .iter_mut()
                .for_each(|m| *m = normal.sample(&mut self.rng)),
            None => out.iter_mut().for_each(|m| *m = 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub time_ms: f64,
    pub neuron: usize,
}

/// Spike events in non-decreasing time order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpikeRaster {
    events: Vec<SpikeEvent>,
}

impl SpikeRaster {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a raster from arbitrary events, sorting them by time then neuron.
    pub fn from_events(mut events: Vec<SpikeEvent>) -> Self {
        events.sort_by(|a, b| {
            a.time_ms
                .total_cmp(&b.time_ms)
                .then(a.neuron.cmp(&b.neuron))
        });
        SpikeRaster { events }
    }

    pub fn push(&mut self, time_ms: f64, neuron: usize) {
        debug_assert!(self.events.last().is_none_or(|e| e.time_ms <= time_ms));
        self.events.push(SpikeEvent { time_ms, neuron });
    }

    pub fn events(&self) -> &[SpikeEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Plasticity rule parameters shared by a network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlasticityConfig {
    pub stdp: StdpParams,
    pub stp: StpParams,
    pub decay: DecayParams,
    pub bounds: WeightBounds,
}

impl Default for PlasticityConfig {
    fn default() -> Self {
        PlasticityConfig {
            stdp: StdpParams::ASYMMETRIC,
            stp: StpParams::default(),
            decay: DecayParams::default(),
            bounds: WeightBounds::default(),
        }
    }
}

impl PlasticityConfig {
    pub fn validate(&self) -> Result<()> {
        self.stdp.validate()?;
        self.stp.validate()?;
        self.decay.validate()?;
        self.bounds.validate()
    }
}

/// A simulated network together with its plasticity state.
#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    plasticity: PlasticityConfig,
    kernel: StdpKernel,
    params: Vec<IzhikevichParams>,
    neurons: Vec<NeuronState>,
    stp: Vec<StpState>,
    synapses: SynapseMatrix,
    spiked: Vec<usize>,
    current: Vec<f64>,
    step: u64,
}

impl Network {
    /// Builds the fully connected network. Weights leaving excitatory neurons
    /// are uniform on `excitatory_weight_range`, those leaving inhibitory
    /// neurons uniform on `inhibitory_weight_range`; the diagonal is zero.
    pub fn build(config: &NetworkConfig, plasticity: &PlasticityConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        plasticity.validate()?;
        let n = config.n_neurons();
        let mut rng = rng::seeded(seed);
        let mut w = vec![0.0; n * n];
        for j in 0..n {
            let (lo, hi) = if j < config.n_excitatory {
                config.excitatory_weight_range
            } else {
                config.inhibitory_weight_range
            };
            for i in 0..n {
                if i != j {
                    w[j * n + i] = sample_open(&mut rng, lo, hi);
                }
            }
        }
        let synapses = SynapseMatrix::from_weights(n, config.n_excitatory, w)?;
        Self::from_parts(config, plasticity, synapses)
    }

    /// Wraps an explicit synapse matrix (e.g. a hand-built test network).
    pub fn from_parts(
        config: &NetworkConfig,
        plasticity: &PlasticityConfig,
        synapses: SynapseMatrix,
    ) -> Result<Self> {
        config.validate()?;
        plasticity.validate()?;
        let n = config.n_neurons();
        if synapses.n() != n || synapses.n_plastic != config.n_excitatory {
            return Err(Error::Config(
                "synapse matrix does not match network size".into(),
            ));
        }
        let params: Vec<_> = (0..n)
            .map(|i| {
                if i < config.n_excitatory {
                    IzhikevichParams::REGULAR_SPIKING
                } else {
                    IzhikevichParams::FAST_SPIKING
                }
            })
            .collect();
        let neurons = params.iter().map(|p| p.initial_state()).collect();
        Ok(Network {
            config: config.clone(),
            plasticity: *plasticity,
            kernel: StdpKernel::new(&plasticity.stdp, config.dt_ms),
            params,
            neurons,
            stp: vec![plasticity.stp.resting_state(); config.n_excitatory],
            synapses,
            spiked: Vec::new(),
            current: vec![0.0; n],
            step: 0,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn plasticity(&self) -> &PlasticityConfig {
        &self.plasticity
    }

    pub fn synapses(&self) -> &SynapseMatrix {
        &self.synapses
    }

    pub fn neurons(&self) -> &[NeuronState] {
        &self.neurons
    }

    pub fn stp_states(&self) -> &[StpState] {
        &self.stp
    }

    pub fn neuron_params(&self) -> &[IzhikevichParams] {
        &self.params
    }

    /// Number of steps taken so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Time of the next step (ms).
    pub fn now_ms(&self) -> f64 {
        self.step as f64 * self.config.dt_ms.ms()
    }

    /// Neurons that spiked in the most recent step.
    pub fn last_spikes(&self) -> &[usize] {
        &self.spiked
    }

    /// Input currents used in the most recent step.
    pub fn last_currents(&self) -> &[f64] {
        &self.current
    }

    /// Marks `neurons` as having fired in the previous step, so the next step
    /// propagates their output.
    pub fn force_spikes(&mut self, neurons: &[usize]) {
        for &i in neurons {
            self.neurons[i].fired = true;
        }
        self.spiked = neurons.to_vec();
    }

    /// Advances the whole network by one step and returns the neurons that
    /// spiked.
    ///
    /// Synaptic input is driven by the previous step's spikes, scaled by the
    /// presynaptic STP factor for excitatory neurons. After the neurons are
    /// updated, STP advances with the new spike flags, STDP pairs the new
    /// spikes, and decay shrinks all plastic weights.
    pub fn step(&mut self, drive: &ExternalDrive) -> Result<&[usize]> {
        let n = self.config.n_neurons();
        let n_exc = self.config.n_excitatory;
        let dt = self.config.dt_ms;

        for i in 0..n {
            self.current[i] = drive.e[i] + drive.m[i];
        }
        for &j in &self.spiked {
            let s = if j < n_exc { stp_scale(self.stp[j]) } else { 1.0 };
            self.synapses.accumulate_row(j, s, &mut self.current);
        }

        self.spiked.clear();
        for i in 0..n {
            let next = step_neuron_coupled(
                self.neurons[i],
                &self.params[i],
                self.current[i],
                dt,
                self.config.input_coupling,
            )?;
            if next.fired {
                self.spiked.push(i);
            }
            self.neurons[i] = next;
        }

        let stp_params = self.plasticity.stp;
        for (j, s) in self.stp.iter_mut().enumerate() {
            *s = stp_step(*s, self.neurons[j].fired, &stp_params, dt);
        }

        if !self.spiked.is_empty() {
            self.synapses.apply_stdp_on_spikes(
                &self.spiked,
                self.step,
                &self.kernel,
                &self.plasticity.bounds,
            );
        }
        self.synapses
            .apply_decay(&self.plasticity.decay, &self.plasticity.bounds);

        self.step += 1;
        Ok(&self.spiked)
    }

    /// Mean weight of plastic connections from the input group to every other
    /// excitatory neuron.
    pub fn mean_input_weight(&self) -> Result<f64> {
        snapshot_mean_input_weight(&self.synapses, self.config.input_group(), self.config.n_excitatory)
    }
}

/// Mean of plastic weights from `input_group` to all other excitatory neurons.
pub fn snapshot_mean_input_weight(
    matrix: &SynapseMatrix,
    input_group: Range<usize>,
    n_excitatory: usize,
) -> Result<f64> {
    if input_group.is_empty() {
        return Err(Error::Config("input group is empty".into()));
    }
    matrix.mean_weight(input_group, 0..n_excitatory)
}

fn sample_open<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    loop {
        let x = rng.random_range(lo..hi);
        if x > lo {
            return x;
        }
    }
}
