//! Checks shared by the property suite and the acceptance suite. Each check
//! returns `Err` with a description of the first violation.

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use stimavoid_core::analysis::{compute_evoked_rates, run_minimal_pair, PairSchedule};
use stimavoid_core::embodiment::LoopMode;
use stimavoid_core::experiment::{run_experiment, ExperimentSpec};
use stimavoid_core::network::{
    ExternalDrive, Network, NetworkConfig, PlasticityConfig, SpikeEvent, SpikeRaster,
    SynapseMatrix,
};
use stimavoid_core::neuron::{InputCoupling, TimeStep};
use stimavoid_core::plasticity::{
    apply_weight_update, stdp_delta_w, stdp_integral, stp_step, DecayParams, StdpParams,
    StpParams, StpState, WeightBounds,
};

pub type Check = Result<(), String>;

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn fail(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Closed-form kernel values.
pub fn stdp_closed_form() -> Check {
    let sym = StdpParams::SYMMETRIC;
    let cases = [
        (stdp_delta_w(20.0, &sym), 0.358_485_922_4),
        (stdp_delta_w(-20.0, &sym), -0.358_485_922_4),
        (stdp_delta_w(10.0, &sym), 0.598_736_939_2),
        (stdp_delta_w(0.0, &sym), 0.0),
        (stdp_delta_w(1.0, &StdpParams::ASYMMETRIC), 0.95),
        (stdp_delta_w(-1.0, &StdpParams::ASYMMETRIC), -1.1 * 23.0 / 24.0),
    ];
    for (got, want) in cases {
        if (got - want).abs() > 1e-9 {
            return Err(format!("kernel value {got} differs from {want}"));
        }
    }
    Ok(())
}

fn arb_params() -> impl Strategy<Value = StdpParams> {
    (0.1f64..3.0, 0.1f64..3.0, 2.0f64..60.0, 2.0f64..60.0)
        .prop_map(|(a, b, c, d)| StdpParams::new(a, b, c, d).unwrap())
}

/// Symmetric antisymmetry, per-side monotonicity and the integral sign rule.
pub fn stdp_shape() -> Check {
    runner(500)
        .run(&(0.01f64..400.0, 2.0f64..60.0, 0.1f64..3.0), |(dt, tau, a)| {
            let p = StdpParams::new(a, a, tau, tau).unwrap();
            prop_assert_eq!(stdp_delta_w(dt, &p), -stdp_delta_w(-dt, &p));
            Ok(())
        })
        .map_err(fail)?;
    runner(500)
        .run(&(arb_params(), 0.01f64..200.0, 0.01f64..50.0), |(p, dt, gap)| {
            prop_assert!(stdp_delta_w(dt + gap, &p) < stdp_delta_w(dt, &p));
            prop_assert!(stdp_delta_w(-dt - gap, &p).abs() < stdp_delta_w(-dt, &p).abs());
            Ok(())
        })
        .map_err(fail)?;
    runner(500)
        .run(&arb_params(), |p| {
            let ltp = p.a_ltp / -(1.0 - 1.0 / p.tau_ltp).ln();
            let ltd = p.a_ltd / -(1.0 - 1.0 / p.tau_ltd).ln();
            prop_assert_eq!(stdp_integral(&p) < 0.0, ltd > ltp);
            Ok(())
        })
        .map_err(fail)
}

/// Trapezoidal integral of the kernel over `[lo, hi]` at step `h`.
pub fn trapezoid(p: &StdpParams, lo: f64, hi: f64, h: f64) -> f64 {
    let n = ((hi - lo) / h).round() as usize;
    let f = |k: usize| stdp_delta_w(lo + k as f64 * h, p);
    let inner: f64 = (1..n).map(f).sum();
    h * (inner + 0.5 * (f(0) + f(n)))
}

/// Closed-form integral against quadrature, lobe by lobe and in total.
pub fn stdp_integral_quadrature() -> Check {
    let params = [
        StdpParams::ASYMMETRIC,
        StdpParams::SYMMETRIC,
        StdpParams::new(1.0, 0.95, 20.0, 28.0).unwrap(),
        StdpParams::new(1.0, 1.4, 20.0, 30.0).unwrap(),
        StdpParams::new(1.0, 0.8, 20.0, 20.0).unwrap(),
    ];
    for p in params {
        let ltp_closed = p.a_ltp / -(1.0 - 1.0 / p.tau_ltp).ln();
        let ltd_closed = p.a_ltd / -(1.0 - 1.0 / p.tau_ltd).ln();
        let ltp_num = trapezoid(&p, 0.0, 500.0, 0.01);
        let ltd_num = -trapezoid(&p, -500.0, 0.0, 0.01);
        for (num, closed) in [(ltp_num, ltp_closed), (ltd_num, ltd_closed)] {
            if ((num - closed) / closed).abs() > 0.01 {
                return Err(format!("lobe {num} vs closed form {closed} for {p:?}"));
            }
        }
        let total = stdp_integral(&p);
        let num = trapezoid(&p, -500.0, 500.0, 0.01);
        let scale = ltp_closed.max(ltd_closed);
        if total != 0.0 && ((num - total) / total).abs() > 0.01 {
            return Err(format!("integral {num} vs closed form {total} for {p:?}"));
        }
        if total == 0.0 && (num / scale).abs() > 0.01 {
            return Err(format!("symmetric integral {num} is not ~0"));
        }
    }
    Ok(())
}

/// Weight updates stay within bounds.
pub fn clipping() -> Check {
    let b = WeightBounds::default();
    runner(2000)
        .run(&(-50.0f64..70.0, -100.0f64..100.0), |(w, dw)| {
            let out = apply_weight_update(w, dw, &b);
            prop_assert!((b.w_min..=b.w_max).contains(&out));
            Ok(())
        })
        .map_err(fail)
}

/// STP variables stay in their ranges under random firing.
pub fn stp_bounds() -> Check {
    let p = StpParams::default();
    let dt = TimeStep::default();
    runner(4)
        .run(&(any::<u64>(), 0.0f64..1.0), |(seed, rate)| {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut s: StpState = p.resting_state();
            for _ in 0..100_000 {
                s = stp_step(s, rng.random_bool(rate), &p, dt);
                prop_assert!((0.0..=1.0).contains(&s.x), "x={}", s.x);
                prop_assert!((p.u_rest..=1.0).contains(&s.u), "u={}", s.u);
            }
            Ok(())
        })
        .map_err(fail)
}

/// Non-plastic weights are untouched and plastic weights stay bounded over
/// a noisy, stimulated run.
pub fn network_conservation() -> Check {
    let cfg = NetworkConfig::default();
    let plasticity = PlasticityConfig::default();
    let mut net = Network::build(&cfg, &plasticity, 3).map_err(fail)?;
    let n = cfg.n_neurons();
    let before = net.synapses().weights();
    let mut drive = ExternalDrive::zeros(n);
    let mut noise =
        stimavoid_core::network::NoiseSource::new(cfg.noise_sigma, 17).map_err(fail)?;
    let bounds = plasticity.bounds;
    let mut spikes = 0;
    for step in 0..20_000 {
        drive.clear_stimulation();
        if step % 20 == 0 {
            drive.stimulate(cfg.input_group(), 10.0);
        }
        noise.fill(&mut drive.m);
        spikes += net.step(&drive).map_err(fail)?.len();
        if step % 1000 == 999 {
            let w = net.synapses().weights();
            for pre in 0..n {
                for post in 0..n {
                    let k = pre * n + post;
                    if net.synapses().is_plastic(pre, post) {
                        if !(bounds.w_min..=bounds.w_max).contains(&w[k]) {
                            return Err(format!("plastic weight {} out of bounds", w[k]));
                        }
                    } else if w[k].to_bits() != before[k].to_bits() {
                        return Err(format!("non-plastic weight {pre}->{post} changed"));
                    }
                }
            }
        }
    }
    if spikes == 0 {
        return Err("network never spiked".into());
    }
    Ok(())
}

/// Identical seeds give identical runs; different seeds differ.
pub fn determinism() -> Check {
    let spec = ExperimentSpec {
        snapshot_interval_ms: 100.0,
        ..ExperimentSpec::closed_loop(2000.0, 21)
    };
    for mode in [LoopMode::Closed, LoopMode::Open] {
        let s = spec.with_mode(mode);
        let a = run_experiment(&s).map_err(fail)?;
        let b = run_experiment(&s).map_err(fail)?;
        if a != b {
            return Err(format!("{mode:?} runs with one seed differ"));
        }
        let c = run_experiment(&ExperimentSpec { seed: 22, ..s }).map_err(fail)?;
        if c.raster == a.raster {
            return Err("different seeds gave the same raster".into());
        }
    }
    let arena = ExperimentSpec::arena(2000.0, 5);
    if run_experiment(&arena).map_err(fail)? != run_experiment(&arena).map_err(fail)? {
        return Err("arena runs with one seed differ".into());
    }
    Ok(())
}

/// Spikes forced by strong drive on these steps, per neuron.
const SCRIPT: [&[usize]; 3] = [
    &[10, 50, 90, 130, 150, 185],
    &[14, 44, 96, 131, 170, 186],
    &[20, 100, 160],
];

fn scripted_drive(step: usize) -> [f64; 3] {
    let mut e = [0.0; 3];
    for (i, steps) in SCRIPT.iter().enumerate() {
        if steps.contains(&step) {
            e[i] = 200.0;
        }
    }
    e
}

fn scripted_noise(step: usize) -> [f64; 3] {
    let mut m = [0.0; 3];
    for (i, x) in m.iter_mut().enumerate() {
        *x = 2.0 * (0.37 * step as f64 + i as f64).sin();
    }
    m
}

/// Final state of the straight-line reference for the scripted 3-neuron
/// network: weights, potentials, and the spike list.
struct OracleOut {
    w: [[f64; 3]; 3],
    v: [f64; 3],
    spikes: Vec<(usize, usize)>,
}

/// Two excitatory neurons (0, 1) and one inhibitory neuron (2), written
/// directly from the model equations without any engine code.
fn oracle(w0: [[f64; 3]; 3], stdp: StdpParams, mu: f64, coupling: InputCoupling) -> OracleOut {
    let dt = 0.5;
    let (tau_d, tau_f, big_u) = (200.0, 600.0, 0.2);
    let abcd = [
        (0.02, 0.2, -65.0, 8.0),
        (0.02, 0.2, -65.0, 8.0),
        (0.1, 0.2, -65.0, 2.0),
    ];
    let mut w = w0;
    let mut v = [-65.0; 3];
    let mut u = [0.2 * -65.0; 3];
    let mut x = [1.0; 2];
    let mut su = [big_u; 2];
    let mut fired = [false; 3];
    let mut last: [Option<f64>; 3] = [None; 3];
    let mut spikes = Vec::new();
    let cutoff = 5.0 * stdp.tau_ltp.max(stdp.tau_ltd);
    for step in 0..200 {
        let t = step as f64 * dt;
        let e = scripted_drive(step);
        let m = scripted_noise(step);
        let mut input = [0.0; 3];
        for i in 0..3 {
            input[i] = e[i] + m[i];
            for j in 0..3 {
                if fired[j] && j != i {
                    let s = if j < 2 { su[j] * x[j] } else { 1.0 };
                    input[i] += w[j][i] * s;
                }
            }
        }
        for i in 0..3 {
            let (a, b, c, d) = abcd[i];
            let dv = 0.04 * v[i] * v[i] + 5.0 * v[i] + 140.0 - u[i];
            let mut nv = match coupling {
                InputCoupling::Current => v[i] + dt * (dv + input[i]),
                InputCoupling::Voltage => v[i] + dt * dv + input[i],
            };
            let mut nu = u[i] + dt * a * (b * v[i] - u[i]);
            fired[i] = nv >= 30.0;
            if fired[i] {
                nv = c;
                nu += d;
                spikes.push((step, i));
            }
            v[i] = nv;
            u[i] = nu;
        }
        for j in 0..2 {
            let f = if fired[j] { 1.0 } else { 0.0 };
            let dx = (1.0 - x[j]) / tau_d - su[j] * x[j] * f;
            let du = (big_u - su[j]) / tau_f + big_u * (1.0 - su[j]) * f;
            x[j] = (x[j] + dt * dx).clamp(0.0, 1.0);
            su[j] = (su[j] + dt * du).clamp(big_u, 1.0);
        }
        for k in 0..3 {
            if fired[k] {
                last[k] = Some(t);
            }
        }
        for k in 0..2 {
            if !fired[k] {
                continue;
            }
            let j = 1 - k;
            if let Some(tj) = last[j] {
                let lag = t - tj;
                if lag > 0.0 && lag <= cutoff {
                    let ltp = stdp.a_ltp * (1.0 - 1.0 / stdp.tau_ltp).powf(lag);
                    let ltd = stdp.a_ltd * (1.0 - 1.0 / stdp.tau_ltd).powf(lag);
                    w[j][k] = (w[j][k] + ltp).clamp(0.0, 20.0);
                    w[k][j] = (w[k][j] - ltd).clamp(0.0, 20.0);
                }
            }
        }
        for (j, k) in [(0, 1), (1, 0)] {
            w[j][k] = (w[j][k] * (1.0 - mu)).clamp(0.0, 20.0);
        }
    }
    OracleOut { w, v, spikes }
}

/// The engine against the reference on the scripted 3-neuron network.
pub fn three_neuron_oracle() -> Check {
    let w0 = [[0.0, 3.0, 4.0], [1.5, 0.0, 2.0], [-2.0, -3.0, 0.0]];
    for coupling in [InputCoupling::Voltage, InputCoupling::Current] {
        for stdp in [StdpParams::ASYMMETRIC, StdpParams::SYMMETRIC] {
            let mu = 1e-3;
            let cfg = NetworkConfig {
                n_excitatory: 2,
                n_inhibitory: 1,
                n_input: 1,
                n_output: 1,
                n_hidden: 0,
                noise_sigma: 0.0,
                input_coupling: coupling,
                ..NetworkConfig::default()
            };
            let plasticity = PlasticityConfig {
                stdp,
                decay: DecayParams { mu },
                ..PlasticityConfig::default()
            };
            let flat: Vec<f64> = w0.iter().flatten().copied().collect();
            let syn = SynapseMatrix::from_weights(3, 2, flat).map_err(fail)?;
            let mut net = Network::from_parts(&cfg, &plasticity, syn).map_err(fail)?;
            let mut drive = ExternalDrive::zeros(3);
            let mut spikes = Vec::new();
            for step in 0..200 {
                drive.e.copy_from_slice(&scripted_drive(step));
                drive.m.copy_from_slice(&scripted_noise(step));
                for &i in net.step(&drive).map_err(fail)? {
                    spikes.push((step, i));
                }
            }
            let want = oracle(w0, stdp, mu, coupling);
            if spikes != want.spikes {
                return Err(format!(
                    "{coupling:?}: spikes {spikes:?} differ from reference {:?}",
                    want.spikes
                ));
            }
            if spikes.len() < 10 {
                return Err("scripted drive produced too few spikes".into());
            }
            for pre in 0..3 {
                for post in 0..3 {
                    let got = net.synapses().weight(pre, post);
                    if (got - want.w[pre][post]).abs() > 1e-9 {
                        return Err(format!(
                            "{coupling:?}: weight {pre}->{post} is {got}, reference {}",
                            want.w[pre][post]
                        ));
                    }
                }
                let v = net.neurons()[pre].v;
                if (v - want.v[pre]).abs() > 1e-9 {
                    return Err(format!("{coupling:?}: v[{pre}] is {v}, reference {}", want.v[pre]));
                }
            }
            if (net.synapses().weight(0, 1) - w0[0][1]).abs() < 1e-3 {
                return Err("plastic weight never moved".into());
            }
        }
    }
    Ok(())
}

/// Counts group spikes per pulse by scanning the whole raster for each pulse.
pub fn naive_evoked(
    spikes: &[(f64, usize)],
    pulses: &[f64],
    window: f64,
    group: std::ops::Range<usize>,
) -> Vec<usize> {
    let mut counts = Vec::new();
    for (k, &p) in pulses.iter().enumerate() {
        let mut end = p + window;
        if k + 1 < pulses.len() && pulses[k + 1] < end {
            end = pulses[k + 1];
        }
        let mut c = 0;
        for &(t, n) in spikes {
            if t > p && t <= end && group.contains(&n) {
                c += 1;
            }
        }
        counts.push(c);
    }
    counts
}

/// The evoked-rate routine against the naive counter on random rasters.
pub fn evoked_rate_oracle() -> Check {
    let strategy = (
        prop::collection::vec((0u32..4000, 0usize..20), 0..300),
        prop::collection::vec(0u32..4000, 1..40),
        1u32..400,
        0usize..20,
        0usize..20,
    );
    runner(1000)
        .run(&strategy, |(spikes, mut pulses, window, g0, g1)| {
            // half-millisecond grid, as recorded by the engine
            let spikes: Vec<(f64, usize)> =
                spikes.into_iter().map(|(t, n)| (t as f64 * 0.5, n)).collect();
            pulses.sort_unstable();
            let pulses: Vec<f64> = pulses.into_iter().map(|t| t as f64 * 0.5).collect();
            let window = window as f64 * 0.5;
            let group = g0.min(g1)..g0.max(g1) + 1;
            let raster = SpikeRaster::from_events(
                spikes
                    .iter()
                    .map(|&(time_ms, neuron)| SpikeEvent { time_ms, neuron })
                    .collect(),
            );
            let got = compute_evoked_rates(&raster, &pulses, window, group.clone()).unwrap();
            let counts = naive_evoked(&spikes, &pulses, window, group);
            let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
            prop_assert_eq!(got.n, counts.len());
            prop_assert!((got.mean - mean).abs() <= 1e-12 * mean.max(1.0));
            Ok(())
        })
        .map_err(fail)
}

/// Sign of the per-cycle change of the scripted pair equals the sign of the
/// summed kernel.
pub fn minimal_pair_direction() -> Check {
    runner(500)
        .run(&(arb_params(), 0.05f64..1.0), |(p, frac)| {
            let delta = frac * p.tau_ltp.min(p.tau_ltd);
            let sched = PairSchedule {
                dt_p_ms: delta,
                dt_d_ms: delta,
                cycles: 1,
            };
            let traj = run_minimal_pair(&p, &WeightBounds::default(), 10.0, &sched).unwrap();
            let change = traj[1].weight - traj[0].weight;
            let expect = stdp_delta_w(delta, &p) + stdp_delta_w(-delta, &p);
            if expect.abs() > 1e-12 {
                prop_assert_eq!(change.signum(), expect.signum());
            }
            Ok(())
        })
        .map_err(fail)
}
