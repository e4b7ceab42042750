//! Izhikevich point-neuron dynamics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Membrane potential (mV) at which a spike is registered.
pub const SPIKE_THRESHOLD_MV: f64 = 30.0;

/// Izhikevich model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IzhikevichParams {
    /// Time scale of the recovery variable.
    pub a: f64,
    /// Sensitivity of the recovery variable to sub-threshold `v`.
    pub b: f64,
    /// After-spike reset of `v` (mV).
    pub c: f64,
    /// After-spike increment of `u`.
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronKind {
    RegularSpiking,
    FastSpiking,
}

impl IzhikevichParams {
    pub const REGULAR_SPIKING: IzhikevichParams = IzhikevichParams {
        a: 0.02,
        b: 0.2,
        c: -65.0,
        d: 8.0,
    };

    pub const FAST_SPIKING: IzhikevichParams = IzhikevichParams {
        a: 0.1,
        b: 0.2,
        c: -65.0,
        d: 2.0,
    };

    pub fn preset(kind: NeuronKind) -> Self {
        match kind {
            NeuronKind::RegularSpiking => Self::REGULAR_SPIKING,
            NeuronKind::FastSpiking => Self::FAST_SPIKING,
        }
    }

    /// Resting initial state: `v = c`, `u = b * c`.
    pub fn initial_state(&self) -> NeuronState {
        NeuronState {
            v: self.c,
            u: self.b * self.c,
            fired: false,
        }
    }
}

/// Integration step in milliseconds. Always strictly positive and finite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TimeStep(f64);

impl TimeStep {
    pub const DEFAULT_MS: f64 = 0.5;

    pub fn new(ms: f64) -> Result<Self> {
        if ms.is_finite() && ms > 0.0 {
            Ok(TimeStep(ms))
        } else {
            Err(Error::Config(format!("time step must be > 0 ms, got {ms}")))
        }
    }

    #[inline]
    pub fn ms(self) -> f64 {
        self.0
    }
}

impl Default for TimeStep {
    fn default() -> Self {
        TimeStep(Self::DEFAULT_MS)
    }
}

impl TryFrom<f64> for TimeStep {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        TimeStep::new(value)
    }
}

impl From<TimeStep> for f64 {
    fn from(value: TimeStep) -> f64 {
        value.0
    }
}

/// How the summed input of a step enters the membrane equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputCoupling {
    /// The input is a current inside `dv/dt` and is scaled by the step.
    Current,
    /// The input is a membrane potential increment (mV) added once per step.
    #[default]
    Voltage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronState {
    /// Membrane potential (mV).
    pub v: f64,
    /// Recovery variable.
    pub u: f64,
    /// Whether the neuron spiked during the step that produced this state.
    pub fired: bool,
}

/// Advances one neuron by a single forward-Euler step, then applies the
/// threshold test and reset to the updated potential.
pub fn step_neuron(
    state: NeuronState,
    params: &IzhikevichParams,
    input_current: f64,
    dt: TimeStep,
) -> Result<NeuronState> {
    step_neuron_coupled(state, params, input_current, dt, InputCoupling::Current)
}

/// Same as [`step_neuron`] with an explicit input coupling.
pub fn step_neuron_coupled(
    state: NeuronState,
    params: &IzhikevichParams,
    input_current: f64,
    dt: TimeStep,
    coupling: InputCoupling,
) -> Result<NeuronState> {
    if !(state.v.is_finite() && state.u.is_finite() && input_current.is_finite()) {
        return Err(Error::NumericFault(format!(
            "non-finite neuron input (v={}, u={}, I={input_current})",
            state.v, state.u
        )));
    }
    let h = dt.ms();
    let NeuronState { v, u, .. } = state;
    let dv = 0.04 * v * v + 5.0 * v + 140.0 - u;
    let du = params.a * (params.b * v - u);
    let v_next = match coupling {
        InputCoupling::Current => v + h * (dv + input_current),
        InputCoupling::Voltage => v + h * dv + input_current,
    };
    let u_next = u + h * du;
    if !(v_next.is_finite() && u_next.is_finite()) {
        return Err(Error::NumericFault(format!(
            "neuron state diverged (v={v_next}, u={u_next})"
        )));
    }
    if v_next >= SPIKE_THRESHOLD_MV {
        Ok(NeuronState {
            v: params.c,
            u: u_next + params.d,
            fired: true,
        })
    } else {
        Ok(NeuronState {
            v: v_next,
            u: u_next,
            fired: false,
        })
    }
}
