//! Simulated two-wheeled robot in a square arena.
//!
//! Two front distance sensors drive the stimulation probability of a left and
//! a right input neuron; spike counts of a left and a right output group set
//! the wheel speeds. Sensors are modelled as rays cast at `+-sensor_angle`
//! from the heading with a linear distance-to-value ramp.

use std::f64::consts::PI;
use std::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EventKind, StimEvent};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArenaConfig {
    /// Side length of the square arena (cm).
    pub arena_side: f64,
    pub robot_radius: f64,
    /// Maximum raw sensor value.
    pub sensor_max: f64,
    /// Raw value below which no stimulation happens.
    pub sensor_threshold: f64,
    /// Distance from the robot's rim at which a sensor reads zero (cm).
    pub sensor_range: f64,
    /// Sensor direction offset from the heading (degrees).
    pub sensor_angle_deg: f64,
    pub control_interval_ms: f64,
    /// Spike-count to wheel-speed gain; negative.
    pub k: f64,
    /// Default wheel speed (cm/s).
    pub c_default: f64,
    pub stim_amplitude: f64,
    pub left_input: usize,
    pub right_input: usize,
    pub left_output: Range<usize>,
    pub right_output: Range<usize>,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        ArenaConfig {
            arena_side: 60.0,
            robot_radius: 2.5,
            sensor_max: 950.0,
            sensor_threshold: 100.0,
            sensor_range: 10.0,
            sensor_angle_deg: 30.0,
            control_interval_ms: 100.0,
            k: -0.3,
            c_default: 12.5,
            stim_amplitude: 10.0,
            left_input: 0,
            right_input: 1,
            left_output: 2..12,
            right_output: 12..22,
        }
    }
}

impl ArenaConfig {
    pub fn validate(&self, input_group: Range<usize>, output_group: Range<usize>) -> Result<()> {
        let positive = [
            ("arena_side", self.arena_side),
            ("robot_radius", self.robot_radius),
            ("sensor_max", self.sensor_max),
            ("sensor_range", self.sensor_range),
            ("control_interval_ms", self.control_interval_ms),
            ("c_default", self.c_default),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if 2.0 * self.robot_radius >= self.arena_side {
            return Err(Error::Config("robot does not fit in the arena".into()));
        }
        if !(self.k.is_finite() && self.k < 0.0) {
            return Err(Error::Config(format!("k must be < 0, got {}", self.k)));
        }
        if !(0.0..=self.sensor_max).contains(&self.sensor_threshold) {
            return Err(Error::Config(
                "sensor_threshold must lie in [0, sensor_max]".into(),
            ));
        }
        for (name, id) in [("left_input", self.left_input), ("right_input", self.right_input)] {
            if !input_group.contains(&id) {
                return Err(Error::Config(format!(
                    "{name} = {id} is not in the input group {input_group:?}"
                )));
            }
        }
        if self.left_input == self.right_input {
            return Err(Error::Config("left and right input must differ".into()));
        }
        for (name, g) in [
            ("left_output", &self.left_output),
            ("right_output", &self.right_output),
        ] {
            if g.is_empty() || g.start < output_group.start || g.end > output_group.end {
                return Err(Error::Config(format!(
                    "{name} {g:?} must be a non-empty part of the output group {output_group:?}"
                )));
            }
        }
        if self.left_output.start < self.right_output.end
            && self.right_output.start < self.left_output.end
        {
            return Err(Error::Config("left and right output groups overlap".into()));
        }
        Ok(())
    }
}

/// Stimulation probability for a raw sensor value.
pub fn sensor_to_probability(s: f64, config: &ArenaConfig) -> Result<f64> {
    if !(0.0..=config.sensor_max).contains(&s) {
        return Err(Error::Input(format!(
            "sensor value {s} outside [0, {}]",
            config.sensor_max
        )));
    }
    if s < config.sensor_threshold {
        Ok(0.0)
    } else {
        Ok(s / config.sensor_max)
    }
}

/// Wheel speed from the spike counts of one output group.
pub fn spikes_to_wheel_speed(spike_counts: &[u32], config: &ArenaConfig) -> f64 {
    let total: u64 = spike_counts.iter().map(|&c| c as u64).sum();
    config.k * total as f64 + config.c_default
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotPose {
    pub x: f64,
    pub y: f64,
    /// Radians, counter-clockwise from +x.
    pub heading: f64,
    pub v_left: f64,
    pub v_right: f64,
}

impl RobotPose {
    pub fn centered(config: &ArenaConfig) -> Self {
        RobotPose {
            x: config.arena_side / 2.0,
            y: config.arena_side / 2.0,
            heading: 0.0,
            v_left: config.c_default,
            v_right: config.c_default,
        }
    }

    pub fn inside(&self, config: &ArenaConfig) -> bool {
        let lo = config.robot_radius;
        let hi = config.arena_side - config.robot_radius;
        (lo..=hi).contains(&self.x) && (lo..=hi).contains(&self.y)
    }
}

/// Distance from `(x, y)` along `angle` to the first wall of the arena.
fn ray_to_wall(x: f64, y: f64, angle: f64, side: f64) -> f64 {
    let (dx, dy) = (angle.cos(), angle.sin());
    let mut best = f64::INFINITY;
    if dx > 1e-12 {
        best = best.min((side - x) / dx);
    } else if dx < -1e-12 {
        best = best.min(-x / dx);
    }
    if dy > 1e-12 {
        best = best.min((side - y) / dy);
    } else if dy < -1e-12 {
        best = best.min(-y / dy);
    }
    best.max(0.0)
}

/// Raw value for a given rim-to-wall distance under the linear sensor model.
pub fn sensor_value_at_distance(d: f64, config: &ArenaConfig) -> f64 {
    let raw = config.sensor_max * (1.0 - d / config.sensor_range).max(0.0);
    raw.round().clamp(0.0, config.sensor_max)
}

pub fn sensor_reading(pose: &RobotPose, side: Side, config: &ArenaConfig) -> f64 {
    let offset = config.sensor_angle_deg.to_radians();
    let angle = match side {
        Side::Left => pose.heading + offset,
        Side::Right => pose.heading - offset,
    };
    let d = ray_to_wall(pose.x, pose.y, angle, config.arena_side) - config.robot_radius;
    sensor_value_at_distance(d.max(0.0), config)
}

/// Differential-drive update over `dt_s` seconds with wheel base equal to the
/// robot diameter. Wall contact clamps the position, which removes the normal
/// velocity component.
pub fn robot_kinematics_step(pose: &RobotPose, dt_s: f64, config: &ArenaConfig) -> RobotPose {
    let v = 0.5 * (pose.v_left + pose.v_right);
    let omega = (pose.v_right - pose.v_left) / (2.0 * config.robot_radius);
    let lo = config.robot_radius;
    let hi = config.arena_side - config.robot_radius;
    let x = (pose.x + v * pose.heading.cos() * dt_s).clamp(lo, hi);
    let y = (pose.y + v * pose.heading.sin() * dt_s).clamp(lo, hi);
    let heading = (pose.heading + omega * dt_s).rem_euclid(2.0 * PI);
    RobotPose {
        x,
        y,
        heading,
        ..*pose
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub time_ms: f64,
    pub pose: RobotPose,
    pub sensor_left: f64,
    pub sensor_right: f64,
}

/// Closed sensorimotor loop between the network and the arena robot.
#[derive(Debug, Clone)]
pub struct ArenaTask {
    config: ArenaConfig,
    pose: RobotPose,
    rng: ChaCha8Rng,
    next_tick: f64,
    counts_left: Vec<u32>,
    counts_right: Vec<u32>,
    in_episode: bool,
    events: Vec<StimEvent>,
    trajectory: Vec<PoseSample>,
    half_step: f64,
}

impl ArenaTask {
    pub fn new(config: ArenaConfig, dt_ms: f64, seed: u64) -> Self {
        let pose = RobotPose::centered(&config);
        ArenaTask {
            counts_left: vec![0; config.left_output.len()],
            counts_right: vec![0; config.right_output.len()],
            config,
            pose,
            rng: rng::seeded(seed),
            next_tick: 0.0,
            in_episode: false,
            events: Vec::new(),
            trajectory: Vec::new(),
            half_step: 0.5 * dt_ms,
        }
    }

    pub fn with_pose(mut self, pose: RobotPose) -> Self {
        self.pose = pose;
        self
    }

    pub fn pose(&self) -> &RobotPose {
        &self.pose
    }

    pub fn config(&self) -> &ArenaConfig {
        &self.config
    }

    pub fn events(&self) -> &[StimEvent] {
        &self.events
    }

    pub fn trajectory(&self) -> &[PoseSample] {
        &self.trajectory
    }

    pub fn into_parts(self) -> (Vec<StimEvent>, Vec<PoseSample>) {
        (self.events, self.trajectory)
    }

    /// Accumulates output spikes of the step that just ran.
    pub fn observe(&mut self, spiking: &[usize]) {
        for &i in spiking {
            if self.config.left_output.contains(&i) {
                self.counts_left[i - self.config.left_output.start] += 1;
            } else if self.config.right_output.contains(&i) {
                self.counts_right[i - self.config.right_output.start] += 1;
            }
        }
    }

    /// Decides the stimulation for the step starting at `now`, writing pulse
    /// amplitudes into `e`, and advances the robot by `dt_ms`.
    ///
    /// On every control tick the wheel speeds are set from the spike counts
    /// of the elapsed interval, both sensors are read, and each input neuron
    /// is pulsed with the probability derived from its sensor.
    pub fn drive(&mut self, now: f64, dt_ms: f64, e: &mut [f64]) -> Result<()> {
        if now + self.half_step >= self.next_tick {
            self.next_tick += self.config.control_interval_ms;
            if now > 0.0 {
                self.pose.v_left = spikes_to_wheel_speed(&self.counts_left, &self.config);
                self.pose.v_right = spikes_to_wheel_speed(&self.counts_right, &self.config);
            }
            self.counts_left.iter_mut().for_each(|c| *c = 0);
            self.counts_right.iter_mut().for_each(|c| *c = 0);

            let s_left = sensor_reading(&self.pose, Side::Left, &self.config);
            let s_right = sensor_reading(&self.pose, Side::Right, &self.config);
            let p_left = sensor_to_probability(s_left, &self.config)?;
            let p_right = sensor_to_probability(s_right, &self.config)?;
            self.trajectory.push(PoseSample {
                time_ms: now,
                pose: self.pose,
                sensor_left: s_left,
                sensor_right: s_right,
            });

            let near = p_left > 0.0 || p_right > 0.0;
            if near && !self.in_episode {
                self.in_episode = true;
                self.events.push(StimEvent {
                    time_ms: now,
                    kind: EventKind::RemovalOff,
                });
            } else if !near && self.in_episode {
                self.in_episode = false;
                self.events.push(StimEvent {
                    time_ms: now,
                    kind: EventKind::RemovalOn,
                });
            }

            let fire_left = self.rng.random_bool(p_left);
            let fire_right = self.rng.random_bool(p_right);
            if fire_left {
                e[self.config.left_input] += self.config.stim_amplitude;
            }
            if fire_right {
                e[self.config.right_input] += self.config.stim_amplitude;
            }
            if fire_left || fire_right {
                self.events.push(StimEvent {
                    time_ms: now,
                    kind: EventKind::Pulse,
                });
            }
        }
        self.pose = robot_kinematics_step(&self.pose, dt_ms / 1000.0, &self.config);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ArenaConfig {
        ArenaConfig::default()
    }

    #[test]
    fn probability_mapping() {
        let c = cfg();
        assert_eq!(sensor_to_probability(50.0, &c).unwrap(), 0.0);
        assert_eq!(sensor_to_probability(99.0, &c).unwrap(), 0.0);
        assert_eq!(sensor_to_probability(100.0, &c).unwrap(), 100.0 / 950.0);
        assert_eq!(sensor_to_probability(950.0, &c).unwrap(), 1.0);
        assert_eq!(sensor_to_probability(475.0, &c).unwrap(), 0.5);
        assert!(sensor_to_probability(-1.0, &c).is_err());
        assert!(sensor_to_probability(951.0, &c).is_err());
    }

    #[test]
    fn wheel_speed_mapping() {
        let c = cfg();
        assert_eq!(spikes_to_wheel_speed(&[0; 10], &c), 12.5);
        let ten = [1u32; 10];
        assert!((spikes_to_wheel_speed(&ten, &c) - 9.5).abs() < 1e-12);
        let fifty = [5u32; 10];
        assert!((spikes_to_wheel_speed(&fifty, &c) - -2.5).abs() < 1e-12);
    }

    #[test]
    fn sensor_model_boundaries() {
        let c = cfg();
        assert_eq!(sensor_value_at_distance(10.0, &c), 0.0);
        assert_eq!(sensor_value_at_distance(25.0, &c), 0.0);
        assert_eq!(sensor_value_at_distance(0.0, &c), 950.0);
        assert_eq!(sensor_value_at_distance(5.0, &c), 475.0);
    }

    #[test]
    fn sensor_reads_wall_ahead() {
        let c = cfg();
        // Facing +x with the rim touching the wall: the +-30 degree rays hit
        // the wall at r/cos(30) - r from the rim.
        let pose = RobotPose {
            x: c.arena_side - c.robot_radius,
            y: 30.0,
            heading: 0.0,
            v_left: 0.0,
            v_right: 0.0,
        };
        let left = sensor_reading(&pose, Side::Left, &c);
        let right = sensor_reading(&pose, Side::Right, &c);
        assert_eq!(left, right);
        let d = c.robot_radius / (30f64.to_radians().cos()) - c.robot_radius;
        assert_eq!(left, sensor_value_at_distance(d, &c));
        assert!(left > 850.0);
        let center = RobotPose::centered(&c);
        assert_eq!(sensor_reading(&center, Side::Left, &c), 0.0);
    }

    #[test]
    fn kinematics_straight_and_spin() {
        let c = cfg();
        let mut p = RobotPose::centered(&c);
        p.heading = 0.5;
        let q = robot_kinematics_step(&p, 0.1, &c);
        assert!((q.x - (p.x + 12.5 * 0.1 * 0.5f64.cos())).abs() < 1e-12);
        assert!((q.y - (p.y + 12.5 * 0.1 * 0.5f64.sin())).abs() < 1e-12);
        assert!((q.heading - 0.5).abs() < 1e-12);

        p.v_left = -5.0;
        p.v_right = 5.0;
        let r = robot_kinematics_step(&p, 0.1, &c);
        assert_eq!((r.x, r.y), (p.x, p.y));
        assert!((r.heading - (0.5 + 10.0 / 5.0 * 0.1)).abs() < 1e-12);
    }

    #[test]
    fn kinematics_clamps_at_wall() {
        let c = cfg();
        let p = RobotPose {
            x: c.arena_side - c.robot_radius,
            y: 20.0,
            heading: 0.0,
            v_left: 10.0,
            v_right: 10.0,
        };
        let q = robot_kinematics_step(&p, 1.0, &c);
        assert_eq!(q.x, c.arena_side - c.robot_radius);
        assert_eq!(q.y, 20.0);
        assert!(q.inside(&c));
    }

    #[test]
    fn validation() {
        let c = cfg();
        assert!(c.validate(0..2, 2..22).is_ok());
        assert!(c.validate(0..1, 2..22).is_err());
        assert!(c.validate(0..2, 2..12).is_err());
        let bad = ArenaConfig { k: 0.3, ..cfg() };
        assert!(bad.validate(0..2, 2..22).is_err());
    }

    #[test]
    fn far_from_walls_no_stimulation() {
        let c = cfg();
        let mut task = ArenaTask::new(c.clone(), 0.5, 1);
        let mut e = vec![0.0; 100];
        for step in 0..2000 {
            e.iter_mut().for_each(|x| *x = 0.0);
            // pointing along +y from the centre: 30 cm - 2.5 cm to the wall
            // leaves the sensors silent for the first second
            if step == 0 {
                task.pose.heading = PI / 2.0;
            }
            task.drive(step as f64 * 0.5, 0.5, &mut e).unwrap();
            task.observe(&[]);
            assert!(e.iter().all(|&x| x == 0.0));
        }
        assert!(task.events().is_empty());
        assert_eq!(task.pose().v_left, 12.5);
        assert_eq!(task.pose().v_right, 12.5);
    }

    #[test]
    fn facing_wall_at_contact_always_stimulates() {
        // Sensor reading at contact is 950 only when the ray hits the wall
        // at the rim; use a zero sensor angle so both rays are normal.
        let c = ArenaConfig {
            sensor_angle_deg: 0.0,
            ..cfg()
        };
        let pose = RobotPose {
            x: c.arena_side - c.robot_radius,
            y: 30.0,
            heading: 0.0,
            v_left: 0.0,
            v_right: 0.0,
        };
        assert_eq!(sensor_reading(&pose, Side::Left, &c), 950.0);
        let mut task = ArenaTask::new(c.clone(), 0.5, 2).with_pose(pose);
        let mut pulses = 0;
        for tick in 0..20 {
            let mut e = vec![0.0; 100];
            // keep the robot pinned against the wall
            task.pose = pose;
            task.drive(tick as f64 * 100.0, 0.5, &mut e).unwrap();
            task.pose = pose;
            assert_eq!(e[c.left_input], 10.0);
            assert_eq!(e[c.right_input], 10.0);
            pulses += 1;
        }
        assert_eq!(pulses, 20);
    }
}
