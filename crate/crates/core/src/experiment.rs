//! Complete runs: a network coupled to a task, with recording.

use serde::{Deserialize, Serialize};

use crate::embodiment::arena::PoseSample;
use crate::embodiment::{ArenaConfig, ArenaTask, LoopMode, LoopTask, LoopTaskConfig, StimEvent};
use crate::error::{Error, Result};
use crate::network::{ExternalDrive, Network, NetworkConfig, NoiseSource, PlasticityConfig, SpikeRaster};
use crate::rng::{stream_seed, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskConfig {
    Loop(LoopTaskConfig),
    Arena(ArenaConfig),
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig::Loop(LoopTaskConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Simulated duration (ms).
    pub duration_ms: f64,
    pub seed: u64,
    #[serde(default = "default_snapshot_interval")]
    pub snapshot_interval_ms: f64,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub plasticity: PlasticityConfig,
    #[serde(default)]
    pub task: TaskConfig,
}

fn default_snapshot_interval() -> f64 {
    1000.0
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            duration_ms: 200_000.0,
            seed: 0,
            snapshot_interval_ms: default_snapshot_interval(),
            network: NetworkConfig::default(),
            plasticity: PlasticityConfig::default(),
            task: TaskConfig::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_ms.is_finite() && self.duration_ms > 0.0) {
            return Err(Error::Config(format!(
                "duration_ms must be > 0, got {}",
                self.duration_ms
            )));
        }
        if !(self.snapshot_interval_ms.is_finite() && self.snapshot_interval_ms > 0.0) {
            return Err(Error::Config(format!(
                "snapshot_interval_ms must be > 0, got {}",
                self.snapshot_interval_ms
            )));
        }
        self.network.validate()?;
        self.plasticity.validate()?;
        match &self.task {
            TaskConfig::Loop(t) => t.validate(self.network.n_output),
            TaskConfig::Arena(a) => {
                a.validate(self.network.input_group(), self.network.output_group())
            }
        }
    }

    pub fn n_steps(&self) -> u64 {
        (self.duration_ms / self.network.dt_ms.ms()).round().max(1.0) as u64
    }

    pub fn with_mode(&self, mode: LoopMode) -> Self {
        let mut s = self.clone();
        if let TaskConfig::Loop(t) = &mut s.task {
            t.mode = mode;
        }
        s
    }

    /// Closed-loop default with the asymmetric kernel, for
    /// convenience in tests and examples.
    pub fn closed_loop(duration_ms: f64, seed: u64) -> Self {
        ExperimentSpec {
            duration_ms,
            seed,
            ..Default::default()
        }
    }

    /// Network layout used by the arena task: two input and twenty output
    /// neurons.
    pub fn arena(duration_ms: f64, seed: u64) -> Self {
        ExperimentSpec {
            duration_ms,
            seed,
            network: NetworkConfig {
                n_input: 2,
                n_output: 20,
                n_hidden: 58,
                ..Default::default()
            },
            task: TaskConfig::Arena(ArenaConfig::default()),
            ..Default::default()
        }
    }
}

/// Weight statistics at one point in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSnapshot {
    pub time_ms: f64,
    /// Input group to every other excitatory neuron.
    pub mean_input_weight: f64,
    pub input_to_output: f64,
    pub input_to_hidden: f64,
    /// All plastic connections.
    pub mean_plastic_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub spec: ExperimentSpec,
    pub raster: SpikeRaster,
    pub snapshots: Vec<WeightSnapshot>,
    pub events: Vec<StimEvent>,
    pub trajectory: Vec<PoseSample>,
    /// Simulated time actually covered (ms).
    pub completed_ms: f64,
    /// `Some` when the run aborted on a numeric fault; recordings stop there.
    pub fault: Option<String>,
}

impl RunResult {
    pub fn is_valid(&self) -> bool {
        self.fault.is_none()
    }

    pub fn initial_mean_input_weight(&self) -> Option<f64> {
        self.snapshots.first().map(|s| s.mean_input_weight)
    }

    pub fn final_mean_input_weight(&self) -> Option<f64> {
        self.snapshots.last().map(|s| s.mean_input_weight)
    }

    pub fn pulse_times(&self) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.kind == crate::embodiment::EventKind::Pulse)
            .map(|e| e.time_ms)
            .collect()
    }
}

fn snapshot(net: &Network, time_ms: f64) -> Result<WeightSnapshot> {
    let cfg = net.config();
    let m = net.synapses();
    let plastic_all = m.mean_weight(cfg.excitatory(), cfg.excitatory())?;
    let to_output = if cfg.n_output > 0 {
        m.mean_weight(cfg.input_group(), cfg.output_group())?
    } else {
        f64::NAN
    };
    let to_hidden = if cfg.n_hidden > 0 {
        m.mean_weight(cfg.input_group(), cfg.hidden_group())?
    } else {
        f64::NAN
    };
    Ok(WeightSnapshot {
        time_ms,
        mean_input_weight: net.mean_input_weight()?,
        input_to_output: to_output,
        input_to_hidden: to_hidden,
        mean_plastic_weight: plastic_all,
    })
}

enum Task {
    Loop(LoopTask),
    Arena(ArenaTask),
}

/// Runs one experiment to completion. A numeric fault stops the simulation;
/// the recordings up to that point are returned with `fault` set.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunResult> {
    spec.validate()?;
    let cfg = &spec.network;
    let dt = cfg.dt_ms.ms();
    let mut net = Network::build(cfg, &spec.plasticity, stream_seed(spec.seed, Stream::Construction))?;
    let mut noise = NoiseSource::new(cfg.noise_sigma, stream_seed(spec.seed, Stream::Noise))?;
    let task_seed = stream_seed(spec.seed, Stream::Task);
    let mut task = match &spec.task {
        TaskConfig::Loop(t) => Task::Loop(LoopTask::new(
            t.clone(),
            cfg.input_group(),
            cfg.output_group(),
            dt,
            task_seed,
        )?),
        TaskConfig::Arena(a) => Task::Arena(ArenaTask::new(a.clone(), dt, task_seed)),
    };

    let n_steps = spec.n_steps();
    let snapshot_every = ((spec.snapshot_interval_ms / dt).round() as u64).max(1);
    let mut drive = ExternalDrive::zeros(cfg.n_neurons());
    let mut raster = SpikeRaster::new();
    let mut snapshots = vec![snapshot(&net, 0.0)?];
    let mut fault = None;
    let mut completed = 0u64;

    for step in 0..n_steps {
        let now = step as f64 * dt;
        drive.clear_stimulation();
        match &mut task {
            Task::Loop(t) => {
                let amp = t.drive(now);
                if amp != 0.0 {
                    drive.stimulate(cfg.input_group(), amp);
                }
            }
            Task::Arena(a) => a.drive(now, dt, &mut drive.e)?,
        }
        noise.fill(&mut drive.m);
        let spikes = match net.step(&drive) {
            Ok(s) => s,
            Err(Error::NumericFault(msg)) => {
                fault = Some(format!("t={now} ms: {msg}"));
                break;
            }
            Err(e) => return Err(e),
        };
        for &i in spikes {
            raster.push(now, i);
        }
        match &mut task {
            Task::Loop(t) => t.observe(now, spikes),
            Task::Arena(a) => a.observe(spikes),
        }
        completed = step + 1;
        if completed.is_multiple_of(snapshot_every) {
            snapshots.push(snapshot(&net, completed as f64 * dt)?);
        }
    }
    let completed_ms = completed as f64 * dt;
    if snapshots.last().map(|s| s.time_ms) != Some(completed_ms) && completed > 0 {
        snapshots.push(snapshot(&net, completed_ms)?);
    }

    let (events, trajectory) = match task {
        Task::Loop(t) => (t.into_events(), Vec::new()),
        Task::Arena(a) => a.into_parts(),
    };
    Ok(RunResult {
        spec: spec.clone(),
        raster,
        snapshots,
        events,
        trajectory,
        completed_ms,
        fault,
    })
}
