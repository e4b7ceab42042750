//! Synaptic dynamics: the exponential STDP kernel, bounded additive weight
//! updates, multiplicative weight decay and Tsodyks-Markram style short-term
//! plasticity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuron::TimeStep;

/// Parameters of the pair-based STDP kernel.
///
/// For a spike-time difference `dt = t_post - t_pre` (ms) the weight change is
/// `a_ltp * (1 - 1/tau_ltp)^dt` when `dt > 0` and
/// `-a_ltd * (1 - 1/tau_ltd)^(-dt)` when `dt < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StdpParams {
    pub a_ltp: f64,
    pub a_ltd: f64,
    pub tau_ltp: f64,
    pub tau_ltd: f64,
}

impl StdpParams {
    pub const SYMMETRIC: StdpParams = StdpParams {
        a_ltp: 1.0,
        a_ltd: 1.0,
        tau_ltp: 20.0,
        tau_ltd: 20.0,
    };

    /// LTD slightly stronger and longer than LTP.
    pub const ASYMMETRIC: StdpParams = StdpParams {
        a_ltp: 1.0,
        a_ltd: 1.1,
        tau_ltp: 20.0,
        tau_ltd: 24.0,
    };

    pub fn new(a_ltp: f64, a_ltd: f64, tau_ltp: f64, tau_ltd: f64) -> Result<Self> {
        let p = StdpParams {
            a_ltp,
            a_ltd,
            tau_ltp,
            tau_ltd,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.a_ltp, self.a_ltd, self.tau_ltp, self.tau_ltd]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Config("STDP parameters must be finite".into()));
        }
        if self.tau_ltp <= 1.0 || self.tau_ltd <= 1.0 {
            return Err(Error::Config(format!(
                "STDP windows must exceed 1 ms (tau_ltp={}, tau_ltd={})",
                self.tau_ltp, self.tau_ltd
            )));
        }
        if self.a_ltp < 0.0 || self.a_ltd < 0.0 {
            return Err(Error::Config(format!(
                "STDP amplitudes must be >= 0 (a_ltp={}, a_ltd={})",
                self.a_ltp, self.a_ltd
            )));
        }
        Ok(())
    }

    /// Spike pairs further apart than this (ms) are ignored.
    pub fn pairing_cutoff(&self) -> f64 {
        5.0 * self.tau_ltp.max(self.tau_ltd)
    }
}

/// Weight change for a spike-time difference `delta_t = t_post - t_pre` (ms).
/// Exact coincidence yields no change.
#[inline]
pub fn stdp_delta_w(delta_t: f64, params: &StdpParams) -> f64 {
    if delta_t > 0.0 {
        params.a_ltp * (1.0 - 1.0 / params.tau_ltp).powf(delta_t)
    } else if delta_t < 0.0 {
        -params.a_ltd * (1.0 - 1.0 / params.tau_ltd).powf(-delta_t)
    } else {
        0.0
    }
}

/// Signed area under the STDP kernel over the whole real line.
pub fn stdp_integral(params: &StdpParams) -> f64 {
    let ltp = params.a_ltp / -(1.0 - 1.0 / params.tau_ltp).ln();
    let ltd = params.a_ltd / -(1.0 - 1.0 / params.tau_ltd).ln();
    ltp - ltd
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightBounds {
    pub w_min: f64,
    pub w_max: f64,
}

impl Default for WeightBounds {
    fn default() -> Self {
        WeightBounds {
            w_min: 0.0,
            w_max: 20.0,
        }
    }
}

impl WeightBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_min.is_finite() && self.w_max.is_finite() && self.w_min < self.w_max) {
            return Err(Error::Config(format!(
                "weight bounds need w_min < w_max (got {} and {})",
                self.w_min, self.w_max
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn clamp(&self, w: f64) -> f64 {
        w.clamp(self.w_min, self.w_max)
    }
}

#[inline]
pub fn apply_weight_update(w: f64, delta_w: f64, bounds: &WeightBounds) -> f64 {
    bounds.clamp(w + delta_w)
}

/// Per-step multiplicative weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayParams {
    pub mu: f64,
}

impl Default for DecayParams {
    fn default() -> Self {
        DecayParams { mu: 5e-7 }
    }
}

impl DecayParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.mu) {
            return Err(Error::Config(format!(
                "decay mu must lie in [0, 1), got {}",
                self.mu
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn factor(&self) -> f64 {
        1.0 - self.mu
    }
}

#[inline]
pub fn apply_decay(w: f64, params: &DecayParams) -> f64 {
    params.factor() * w
}

/// Short-term plasticity parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StpParams {
    /// Recovery time constant of the resource variable (ms).
    pub tau_d: f64,
    /// Decay time constant of the utilization variable (ms).
    pub tau_f: f64,
    /// Baseline utilization.
    pub u_rest: f64,
}

impl Default for StpParams {
    fn default() -> Self {
        StpParams {
            tau_d: 200.0,
            tau_f: 600.0,
            u_rest: 0.2,
        }
    }
}

impl StpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_d > 0.0 && self.tau_f > 0.0 && self.tau_d.is_finite() && self.tau_f.is_finite())
        {
            return Err(Error::Config(format!(
                "STP time constants must be > 0 (tau_d={}, tau_f={})",
                self.tau_d, self.tau_f
            )));
        }
        if !(self.u_rest > 0.0 && self.u_rest <= 1.0) {
            return Err(Error::Config(format!(
                "STP baseline utilization must lie in (0, 1], got {}",
                self.u_rest
            )));
        }
        Ok(())
    }

    /// The no-activity fixed point.
    pub fn resting_state(&self) -> StpState {
        StpState {
            x: 1.0,
            u: self.u_rest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StpState {
    /// Fraction of available resources.
    pub x: f64,
    /// Utilization.
    pub u: f64,
}

/// One forward-Euler step of the resource/utilization dynamics, with the
/// result clamped to `x in [0, 1]`, `u in [U, 1]`.
#[inline]
pub fn stp_step(state: StpState, fired: bool, params: &StpParams, dt: TimeStep) -> StpState {
    let h = dt.ms();
    let f = if fired { 1.0 } else { 0.0 };
    let StpState { x, u } = state;
    let dx = (1.0 - x) / params.tau_d - u * x * f;
    let du = (params.u_rest - u) / params.tau_f + params.u_rest * (1.0 - u) * f;
    StpState {
        x: (x + h * dx).clamp(0.0, 1.0),
        u: (u + h * du).clamp(params.u_rest, 1.0),
    }
}

/// Transmission factor `u * x`.
#[inline]
pub fn stp_scale(state: StpState) -> f64 {
    state.u * state.x
}
